#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sitsx/dataset.hpp"
#include "sitsx/image.hpp"
#include "sitsx/synthgen.hpp"

namespace sitsx::ingest {

inline const std::array<const char*, 5> kDisasterTypes = {"fire", "flood", "hurricane",
                                                          "landslide", "none"};
bool is_disaster_type(const std::string& s);

struct AoiScene {
    std::string aoi_id;
    std::vector<Image> images;             // T co-registered rasters, C x H x W
    std::vector<std::uint8_t> change_mask;  // H x W, 0/1
    std::string disaster_type = "none";

    int height() const { return images.empty() ? 0 : images.front().height; }
    int width() const { return images.empty() ? 0 : images.front().width; }
    void validate() const;
};

struct LabeledPatch {
    PatchTimeSeries series;
    std::vector<std::uint8_t> mask_tile;  // P x P, 0/1
    int label = 0;
    double change_ratio = 0.0;
    data::Split split = data::Split::kTrain;
    std::string disaster_type = "none";
};

double change_ratio(const std::vector<std::uint8_t>& mask_tile);
int label_patch(double ratio, double threshold = 0.5);

std::vector<LabeledPatch> tile_aoi(const AoiScene& scene, int patch_size,
                                   double label_threshold = 0.5);

void split_dataset(std::vector<LabeledPatch>& patches,
                   const std::array<double, 3>& ratios = {0.7, 0.1, 0.2},
                   std::uint64_t seed = 42);

struct TypeStats {
    int aoi_count = 0;
    std::size_t patch_count = 0;
    std::size_t positive_count = 0;
    double positive_ratio = 0.0;  // in [0,1]
};

std::map<std::string, TypeStats> dataset_statistics(const std::vector<LabeledPatch>& patches);

std::vector<std::size_t> change_ratio_histogram(const std::vector<double>& ratios, int bins);

void write_stats_csv(const std::filesystem::path& path,
                     const std::map<std::string, TypeStats>& stats);
void write_histogram_csv(const std::filesystem::path& path,
                         const std::vector<std::size_t>& counts);

synthgen::BaseCorpus load_base_corpus(const std::filesystem::path& root);

// AOI layout: <root>/<disaster_type>/<aoi_name>/{t1.png..tT.png, mask.png}
AoiScene load_aoi_dir(const std::filesystem::path& dir, const std::string& disaster_type);
std::vector<AoiScene> load_aoi_root(const std::filesystem::path& root);

struct IngestOptions {
    int patch_size = 64;
    double label_threshold = 0.5;
    std::array<double, 3> split_ratio{0.7, 0.1, 0.2};
    std::uint64_t seed = 42;
    int histogram_bins = 10;
};

data::ManifestInfo ingest_dataset(const std::filesystem::path& aoi_root,
                                  const IngestOptions& opts,
                                  const std::filesystem::path& out_dir);

}  // namespace sitsx::ingest
