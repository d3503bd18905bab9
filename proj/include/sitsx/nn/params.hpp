#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sitsx/errors.hpp"
#include "sitsx/rng.hpp"

namespace sitsx::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<Mat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const Mat<S>>;

// All learnable tensors live in one flat buffer so the optimizer, the
// checkpoint writer and the finite-difference checker can walk parameters
// uniformly. Layers keep entry indices, not pointers.
template <typename S>
class ParamStore {
  public:
    struct Entry {
        std::string name;
        std::size_t offset = 0;
        int rows = 0;
        int cols = 0;
        std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }
    };

    int add(const std::string& name, int rows, int cols) {
        if (by_name_.count(name)) throw ConfigError("duplicate parameter: " + name);
        Entry e;
        e.name = name;
        e.offset = data_.size();
        e.rows = rows;
        e.cols = cols;
        by_name_[name] = static_cast<int>(entries_.size());
        entries_.push_back(e);
        data_.resize(e.offset + e.count(), S(0));
        return static_cast<int>(entries_.size()) - 1;
    }

    MatMap<S> mat(int idx) {
        const Entry& e = entries_.at(static_cast<std::size_t>(idx));
        return MatMap<S>(data_.data() + e.offset, e.rows, e.cols);
    }
    ConstMatMap<S> mat(int idx) const {
        const Entry& e = entries_.at(static_cast<std::size_t>(idx));
        return ConstMatMap<S>(data_.data() + e.offset, e.rows, e.cols);
    }

    int index_of(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return data_.size(); }
    S* raw() { return data_.data(); }
    const S* raw() const { return data_.data(); }
    std::vector<S>& flat() { return data_; }
    const std::vector<S>& flat() const { return data_; }

    void zero() { std::fill(data_.begin(), data_.end(), S(0)); }

    // same entry layout, zero-filled; used for gradients and Adam state
    ParamStore<S> like() const {
        ParamStore<S> g;
        g.entries_ = entries_;
        g.by_name_ = by_name_;
        g.data_.assign(data_.size(), S(0));
        return g;
    }

    // transformer-family init: truncated normal for projections and embeddings,
    // zeros for biases, ones for layer-norm gains
    void init(std::uint64_t seed) {
        Rng rng = make_rng(seed);
        for (const Entry& e : entries_) {
            S* p = data_.data() + e.offset;
            bool gain = e.name.size() > 2 && e.name.substr(e.name.size() - 2) == ".g";
            bool bias = e.name.size() > 2 && e.name.substr(e.name.size() - 2) == ".b";
            for (std::size_t i = 0; i < e.count(); ++i)
                p[i] = gain ? S(1) : bias ? S(0) : trunc_normal<S>(rng, 0.02);
        }
    }

  private:
    std::vector<Entry> entries_;
    std::map<std::string, int> by_name_;
    std::vector<S> data_;
};

}  // namespace sitsx::nn
