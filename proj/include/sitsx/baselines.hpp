#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sitsx/errors.hpp"
#include "sitsx/image.hpp"
#include "sitsx/model.hpp"
#include "sitsx/nn/checkpoint.hpp"
#include "sitsx/nn/layers.hpp"
#include "sitsx/nn/params.hpp"
#include "sitsx/rng.hpp"

namespace sitsx::baselines {

enum class Strategy { kBi, kMulti };
enum class Interaction { kConcat, kDiff };
enum class Aggregate { kMeanLogit, kMaxLogit };
enum class DiffMode { kMean, kConcat };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& s);
const char* interaction_name(Interaction i);
Interaction interaction_from_name(const std::string& s);
const char* aggregate_name(Aggregate a);
Aggregate aggregate_from_name(const std::string& s);
const char* diff_mode_name(DiffMode m);
DiffMode diff_mode_from_name(const std::string& s);

// Siamese classifier family: a shared plain-AE transformer encoder produces
// one pooled feature per timestep; strategy and interaction decide how the
// features are combined before the logistic head.
struct BaselineConfig {
    Strategy strategy = Strategy::kMulti;
    Interaction interaction = Interaction::kConcat;
    int steps_used = 5;
    int head_hidden_dim = 256;
    Aggregate aggregate = Aggregate::kMeanLogit;
    DiffMode diff_mode = DiffMode::kMean;
    model::ModelConfig backbone;

    void validate() const;
    int feature_dim() const { return backbone.embed_dim; }
    int head_input_dim() const;

    nlohmann::ordered_json to_json() const;
    static BaselineConfig from_json(const nlohmann::ordered_json& j);
    std::uint64_t fingerprint() const;
};

struct ClassifierOutput {
    double logit = 0.0;
    double probability = 0.5;
};

inline double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline ClassifierOutput output_from_logit(double logit) {
    return ClassifierOutput{logit, logistic(logit)};
}

// numerically stable binary cross-entropy on a raw logit
inline double bce_loss(double logit, int label) {
    return std::max(logit, 0.0) - label * logit + std::log1p(std::exp(-std::abs(logit)));
}

// All T-1 pairs (x_i, x_T), i < T, order preserving.
std::vector<std::pair<Image, Image>> build_bitemporal_pairs(const PatchTimeSeries& series);

// Mean (or max) of per-pair logits; probability recomputed from the result.
ClassifierOutput bi_aggregate(const std::vector<ClassifierOutput>& outputs, Aggregate agg);

// Interaction layers on raw pooled features, testable without a backbone.
std::vector<double> interact_concat(const std::vector<std::vector<double>>& features);
std::vector<double> interact_diff(const std::vector<std::vector<double>>& features, DiffMode mode);

template <typename Scalar>
class SiamNet {
  public:
    explicit SiamNet(const BaselineConfig& cfg);

    const BaselineConfig& config() const { return cfg_; }
    nn::ParamStore<Scalar>& params() { return params_; }
    const nn::ParamStore<Scalar>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }
    void init_weights(std::uint64_t seed) { params_.init(seed); }

    // Consumes the last steps_used timesteps of the series.
    ClassifierOutput forward(const PatchTimeSeries& series) const;
    // Single bi-temporal pair; requires a head sized for one pair.
    ClassifierOutput forward_pair(const Image& xi, const Image& xT) const;
    std::vector<double> pooled_feature(const Image& img) const;

    // Accumulates coeff * d(BCE(logit, label)) into grads; returns the
    // unscaled loss.
    double bce_backward(const PatchTimeSeries& series, int label, double coeff,
                        nn::ParamStore<Scalar>& grads) const;

    void save(const std::filesystem::path& path, nlohmann::ordered_json meta = {}) const;
    static SiamNet load(const std::filesystem::path& path,
                        nlohmann::ordered_json* meta_out = nullptr);

  private:
    struct EncCache {
        nn::LinearCache<Scalar> tok;
        std::vector<nn::BlockCache<Scalar>> blocks;
        nn::LayerNormCache<Scalar> norm;
        nn::LinearCache<Scalar> pool;
    };
    struct HeadCache {
        nn::LinearCache<Scalar> fc1;
        nn::GeluCache<Scalar> act;
        nn::LinearCache<Scalar> fc2;
    };
    struct Caches {
        std::vector<EncCache> enc;
        std::vector<nn::Mat<Scalar>> f;  // 1 x E pooled features
        std::vector<HeadCache> heads;    // one per pair (bi) or one (multi)
        std::vector<Scalar> logits;      // per-pair logits for bi
        double logit = 0.0;
    };

    nn::Mat<Scalar> encode_frame(const Image& img, EncCache& c) const;
    void encode_backward(const EncCache& c, const nn::Mat<Scalar>& dh,
                         nn::ParamStore<Scalar>& grads) const;
    Scalar head_forward(const nn::Mat<Scalar>& u, HeadCache& c) const;
    nn::Mat<Scalar> head_backward(const HeadCache& c, Scalar dlogit,
                                  nn::ParamStore<Scalar>& grads) const;
    nn::Mat<Scalar> pair_input(const nn::Mat<Scalar>& fi, const nn::Mat<Scalar>& fT) const;
    void check_frame(const Image& img) const;
    double run_forward(const PatchTimeSeries& series, Caches& c) const;

    BaselineConfig cfg_;
    nn::ParamStore<Scalar> params_;
    nn::Linear<Scalar> tok_embed_;
    int pos_idx_ = -1;
    std::vector<nn::Block<Scalar>> blocks_;
    nn::LayerNorm<Scalar> norm_;
    nn::Linear<Scalar> pool_proj_;
    nn::Linear<Scalar> fc1_, fc2_;
};

using SiamNetF = SiamNet<float>;
using SiamNetD = SiamNet<double>;

// ---------------------------------------------------------------------------
// template implementation

template <typename S>
SiamNet<S>::SiamNet(const BaselineConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int E = cfg_.backbone.embed_dim;
    tok_embed_.init(params_, "tok_embed", cfg_.backbone.token_dim(), E);
    pos_idx_ = params_.add("pos_embed", cfg_.backbone.num_tokens(), E);
    blocks_.resize(static_cast<std::size_t>(cfg_.backbone.encoder_depth));
    for (int i = 0; i < cfg_.backbone.encoder_depth; ++i)
        blocks_[static_cast<std::size_t>(i)].init(params_, "enc" + std::to_string(i), E,
                                                  cfg_.backbone.num_heads);
    norm_.init(params_, "enc_norm", E);
    pool_proj_.init(params_, "pool_proj", E, E);
    fc1_.init(params_, "head.fc1", cfg_.head_input_dim(), cfg_.head_hidden_dim);
    fc2_.init(params_, "head.fc2", cfg_.head_hidden_dim, 1);
}

template <typename S>
void SiamNet<S>::check_frame(const Image& img) const {
    if (img.channels != cfg_.backbone.channels || img.height != cfg_.backbone.input_patch_size ||
        img.width != cfg_.backbone.input_patch_size)
        throw ShapeMismatch("frame does not match the backbone input shape");
}

template <typename S>
nn::Mat<S> SiamNet<S>::encode_frame(const Image& img, EncCache& c) const {
    nn::Mat<S> target = nn::patchify<S>(img, cfg_.backbone.token_patch_size);
    nn::Mat<S> x = tok_embed_.forward(params_, target, c.tok);
    x += params_.mat(pos_idx_);
    c.blocks.resize(blocks_.size());
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        x = blocks_[i].forward(params_, x, c.blocks[i]);
    x = norm_.forward(params_, x, c.norm);
    nn::Mat<S> prow = x.colwise().mean();
    nn::Mat<S> h = pool_proj_.forward(params_, prow, c.pool);
    if (!h.allFinite()) throw NonFiniteActivation("non-finite backbone feature");
    return h;
}

template <typename S>
void SiamNet<S>::encode_backward(const EncCache& c, const nn::Mat<S>& dh,
                                 nn::ParamStore<S>& grads) const {
    const int N = cfg_.backbone.num_tokens();
    nn::Mat<S> dprow = pool_proj_.backward(params_, c.pool, dh, grads);
    nn::Mat<S> dx = (dprow / static_cast<S>(N)).replicate(N, 1);
    dx = norm_.backward(params_, c.norm, dx, grads);
    for (std::size_t i = blocks_.size(); i-- > 0;)
        dx = blocks_[i].backward(params_, c.blocks[i], dx, grads);
    grads.mat(pos_idx_) += dx;
    tok_embed_.backward(params_, c.tok, dx, grads);
}

template <typename S>
S SiamNet<S>::head_forward(const nn::Mat<S>& u, HeadCache& c) const {
    nn::Mat<S> hmid = nn::gelu_forward(fc1_.forward(params_, u, c.fc1), c.act);
    nn::Mat<S> out = fc2_.forward(params_, hmid, c.fc2);
    if (!out.allFinite()) throw NonFiniteActivation("non-finite classifier logit");
    return out(0, 0);
}

template <typename S>
nn::Mat<S> SiamNet<S>::head_backward(const HeadCache& c, S dlogit,
                                     nn::ParamStore<S>& grads) const {
    nn::Mat<S> dout(1, 1);
    dout(0, 0) = dlogit;
    nn::Mat<S> dh = fc2_.backward(params_, c.fc2, dout, grads);
    dh = nn::gelu_backward(c.act, dh);
    return fc1_.backward(params_, c.fc1, dh, grads);
}

template <typename S>
nn::Mat<S> SiamNet<S>::pair_input(const nn::Mat<S>& fi, const nn::Mat<S>& fT) const {
    const int E = cfg_.feature_dim();
    if (cfg_.interaction == Interaction::kConcat) {
        nn::Mat<S> u(1, 2 * E);
        u.leftCols(E) = fi;
        u.rightCols(E) = fT;
        return u;
    }
    return fT - fi;
}

template <typename S>
double SiamNet<S>::run_forward(const PatchTimeSeries& series, Caches& c) const {
    series.validate();
    const int T = series.steps();
    const int K = cfg_.steps_used;
    if (T < K) throw SeriesTooShort("series shorter than steps_used");
    for (const Image& f : series.frames) check_frame(f);
    const int offset = T - K;
    const int E = cfg_.feature_dim();

    c.enc.resize(static_cast<std::size_t>(K));
    c.f.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
        c.f[static_cast<std::size_t>(k)] = encode_frame(
            series.frames[static_cast<std::size_t>(offset + k)], c.enc[static_cast<std::size_t>(k)]);

    const nn::Mat<S>& last = c.f[static_cast<std::size_t>(K - 1)];
    if (cfg_.strategy == Strategy::kBi) {
        c.heads.resize(static_cast<std::size_t>(K - 1));
        c.logits.resize(static_cast<std::size_t>(K - 1));
        for (int i = 0; i < K - 1; ++i) {
            nn::Mat<S> u = pair_input(c.f[static_cast<std::size_t>(i)], last);
            c.logits[static_cast<std::size_t>(i)] =
                head_forward(u, c.heads[static_cast<std::size_t>(i)]);
        }
        if (cfg_.aggregate == Aggregate::kMeanLogit) {
            double sum = 0.0;
            for (S v : c.logits) sum += static_cast<double>(v);
            c.logit = sum / static_cast<double>(K - 1);
        } else {
            double best = -std::numeric_limits<double>::infinity();
            for (S v : c.logits) best = std::max(best, static_cast<double>(v));
            c.logit = best;
        }
        return c.logit;
    }

    c.heads.resize(1);
    nn::Mat<S> u;
    if (cfg_.interaction == Interaction::kConcat) {
        u.resize(1, K * E);
        for (int k = 0; k < K; ++k) u.middleCols(k * E, E) = c.f[static_cast<std::size_t>(k)];
    } else if (cfg_.diff_mode == DiffMode::kMean) {
        u = nn::Mat<S>::Zero(1, E);
        for (int i = 0; i < K - 1; ++i) u += last - c.f[static_cast<std::size_t>(i)];
        u /= static_cast<S>(K - 1);
    } else {
        u.resize(1, (K - 1) * E);
        for (int i = 0; i < K - 1; ++i)
            u.middleCols(i * E, E) = last - c.f[static_cast<std::size_t>(i)];
    }
    c.logit = static_cast<double>(head_forward(u, c.heads[0]));
    return c.logit;
}

template <typename S>
ClassifierOutput SiamNet<S>::forward(const PatchTimeSeries& series) const {
    Caches c;
    return output_from_logit(run_forward(series, c));
}

template <typename S>
ClassifierOutput SiamNet<S>::forward_pair(const Image& xi, const Image& xT) const {
    if (cfg_.head_input_dim() !=
        (cfg_.interaction == Interaction::kConcat ? 2 * cfg_.feature_dim() : cfg_.feature_dim()))
        throw ShapeMismatch("head is not sized for a single pair");
    check_frame(xi);
    check_frame(xT);
    EncCache e1, e2;
    nn::Mat<S> fi = encode_frame(xi, e1);
    nn::Mat<S> fT = encode_frame(xT, e2);
    HeadCache hc;
    return output_from_logit(static_cast<double>(head_forward(pair_input(fi, fT), hc)));
}

template <typename S>
std::vector<double> SiamNet<S>::pooled_feature(const Image& img) const {
    check_frame(img);
    EncCache c;
    nn::Mat<S> h = encode_frame(img, c);
    std::vector<double> out(static_cast<std::size_t>(h.cols()));
    for (Eigen::Index k = 0; k < h.cols(); ++k)
        out[static_cast<std::size_t>(k)] = static_cast<double>(h(0, k));
    return out;
}

template <typename S>
double SiamNet<S>::bce_backward(const PatchTimeSeries& series, int label, double coeff,
                                nn::ParamStore<S>& grads) const {
    if (label != 0 && label != 1) throw ConfigError("label must be 0 or 1");
    if (grads.size() != params_.size())
        throw ShapeMismatch("gradient store does not match the parameter layout");
    Caches c;
    double logit = run_forward(series, c);
    double loss = bce_loss(logit, label);
    if (!std::isfinite(loss)) throw NonFiniteLoss("non-finite classifier loss");
    const S dl = static_cast<S>(coeff * (logistic(logit) - label));

    const int K = cfg_.steps_used;
    const int E = cfg_.feature_dim();
    std::vector<nn::Mat<S>> df(static_cast<std::size_t>(K), nn::Mat<S>::Zero(1, E));
    const std::size_t lastk = static_cast<std::size_t>(K - 1);

    if (cfg_.strategy == Strategy::kBi) {
        std::size_t argmax = 0;
        if (cfg_.aggregate == Aggregate::kMaxLogit)
            argmax = static_cast<std::size_t>(
                std::max_element(c.logits.begin(), c.logits.end()) - c.logits.begin());
        for (int i = 0; i < K - 1; ++i) {
            S dli;
            if (cfg_.aggregate == Aggregate::kMeanLogit)
                dli = dl / static_cast<S>(K - 1);
            else
                dli = (static_cast<std::size_t>(i) == argmax) ? dl : S(0);
            if (dli == S(0)) continue;
            nn::Mat<S> du = head_backward(c.heads[static_cast<std::size_t>(i)], dli, grads);
            if (cfg_.interaction == Interaction::kConcat) {
                df[static_cast<std::size_t>(i)] += du.leftCols(E);
                df[lastk] += du.rightCols(E);
            } else {
                df[lastk] += du;
                df[static_cast<std::size_t>(i)] -= du;
            }
        }
    } else {
        nn::Mat<S> du = head_backward(c.heads[0], dl, grads);
        if (cfg_.interaction == Interaction::kConcat) {
            for (int k = 0; k < K; ++k) df[static_cast<std::size_t>(k)] += du.middleCols(k * E, E);
        } else if (cfg_.diff_mode == DiffMode::kMean) {
            nn::Mat<S> ddi = du / static_cast<S>(K - 1);
            for (int i = 0; i < K - 1; ++i) {
                df[lastk] += ddi;
                df[static_cast<std::size_t>(i)] -= ddi;
            }
        } else {
            for (int i = 0; i < K - 1; ++i) {
                auto slice = du.middleCols(i * E, E);
                df[lastk] += slice;
                df[static_cast<std::size_t>(i)] -= slice;
            }
        }
    }

    for (int k = 0; k < K; ++k)
        encode_backward(c.enc[static_cast<std::size_t>(k)], df[static_cast<std::size_t>(k)], grads);
    return loss;
}

template <typename S>
void SiamNet<S>::save(const std::filesystem::path& path, nlohmann::ordered_json meta) const {
    nlohmann::ordered_json header;
    header["format"] = "sitsx.baseline";
    header["config"] = cfg_.to_json();
    header["fingerprint"] = model::fingerprint_hex(cfg_.fingerprint());
    header["meta"] = std::move(meta);
    nn::write_param_blob(path, std::move(header), params_);
}

template <typename S>
SiamNet<S> SiamNet<S>::load(const std::filesystem::path& path, nlohmann::ordered_json* meta_out) {
    nlohmann::ordered_json header;
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CheckpointError("cannot open " + path.string());
        header = nn::read_blob_header(in, path.string());
    }
    if (header.value("format", "") != "sitsx.baseline")
        throw CheckpointError("not a baseline checkpoint: " + path.string());
    BaselineConfig cfg = BaselineConfig::from_json(header.at("config"));
    if (header.value("fingerprint", "") != model::fingerprint_hex(cfg.fingerprint()))
        throw CheckpointError("config fingerprint mismatch in " + path.string());
    SiamNet<S> net(cfg);
    nn::read_param_blob(path, net.params_);
    if (meta_out) *meta_out = header.value("meta", nlohmann::ordered_json::object());
    return net;
}

}  // namespace sitsx::baselines
