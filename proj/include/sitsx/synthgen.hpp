#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sitsx/dataset.hpp"
#include "sitsx/image.hpp"
#include "sitsx/rng.hpp"

namespace sitsx::synthgen {

struct GenParams {
    double p1 = 0.5;
    double p2 = 0.3;
    bool is_disaster = false;
    std::uint64_t rng_seed = 0;
    double jitter_range = 0.2;
    std::pair<double, double> ellipse_axes_range{0.10, 0.30};
    std::pair<double, double> cloud_opacity_range{0.5, 1.0};
    std::pair<double, double> cut_area_range{0.2, 0.5};
    double blur_sigma = 2.0;

    void validate() const;
};

struct SoftMask {
    int size = 0;
    std::vector<float> values;

    static SoftMask zeros(int size);
    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * size + x]; }
    float max_value() const;
    double binarized_area() const;  // fraction of cells > 0.5
};

struct SeasonalParams {
    std::array<double, 3> factor{1.0, 1.0, 1.0};
    std::array<double, 3> offset{0.0, 0.0, 0.0};
};

struct CloudParams {
    double cx = 0, cy = 0;
    double ax = 0, ay = 0;
    double rotation = 0;
    double opacity = 0;
    std::array<float, 3> color{1.0f, 1.0f, 1.0f};
};

struct TransformStep {
    std::string op;  // "seasonal", "cloud", "cutmix"
    std::map<std::string, double> args;
};

struct SyntheticRecord {
    PatchTimeSeries series;
    SoftMask mask;
    int label = 0;
    std::string base_class;
    std::string cut_class;
    GenParams params;
    std::array<std::vector<TransformStep>, 5> transform_log;
};

SeasonalParams draw_seasonal(const GenParams& params, Rng& rng);
Image apply_seasonal_change(const Image& img, const SeasonalParams& sp);

CloudParams draw_cloud(const GenParams& params, int patch_size, Rng& rng);
Image apply_cloud_cover(const Image& img, const CloudParams& cp);

SoftMask generate_soft_mask(const GenParams& params, int patch_size, Rng& rng);
Image cutmix(const Image& base, const Image& cut, const SoftMask& mask);

SyntheticRecord generate_series(const Image& base, const Image& cut, const GenParams& params);

struct BaseCorpus {
    // class name -> image paths, both in sorted order
    std::map<std::string, std::vector<std::filesystem::path>> by_class;

    std::vector<std::string> class_names() const;
};

struct DatasetOptions {
    std::size_t count = 0;
    int patch_size = 64;
    double disaster_fraction = 0.5;
    std::array<double, 3> split_ratio{0.7, 0.1, 0.2};
    GenParams params;  // template; rng_seed / is_disaster set per record
    std::uint64_t master_seed = 42;
};

data::ManifestInfo generate_dataset(const BaseCorpus& corpus, const DatasetOptions& opts,
                                    const std::filesystem::path& out_dir);

// exact low-discrepancy quota split: floor quotas, remainder by largest fraction
std::array<std::size_t, 3> split_quotas(std::size_t n, const std::array<double, 3>& ratio);

// procedural stand-in for a land-cover base corpus: class-distinct textures
void make_texture_corpus(const std::filesystem::path& out_dir, int classes, int images_per_class,
                         int size, std::uint64_t seed);

}  // namespace sitsx::synthgen
