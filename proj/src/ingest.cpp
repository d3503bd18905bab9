#include "sitsx/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "sitsx/errors.hpp"
#include "sitsx/image_io.hpp"
#include "sitsx/rng.hpp"

namespace sitsx::ingest {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

bool is_disaster_type(const std::string& s) {
    return std::find(kDisasterTypes.begin(), kDisasterTypes.end(), s) != kDisasterTypes.end();
}

void AoiScene::validate() const {
    if (images.size() < 2) throw SeriesTooShort("AOI " + aoi_id + ": needs at least 2 timesteps");
    int c = images.front().channels, h = images.front().height, w = images.front().width;
    for (const auto& img : images)
        if (img.channels != c || img.height != h || img.width != w)
            throw ShapeMismatch("AOI " + aoi_id + ": timestep shape mismatch");
    if (change_mask.size() != static_cast<std::size_t>(h) * w)
        throw ShapeMismatch("AOI " + aoi_id + ": mask does not match raster dims");
    if (!is_disaster_type(disaster_type))
        throw ConfigError("AOI " + aoi_id + ": unknown disaster type " + disaster_type);
}

double change_ratio(const std::vector<std::uint8_t>& mask_tile) {
    if (mask_tile.empty()) return 0.0;
    std::size_t changed = 0;
    for (std::uint8_t v : mask_tile)
        if (v != 0) ++changed;
    return static_cast<double>(changed) / static_cast<double>(mask_tile.size());
}

int label_patch(double ratio, double threshold) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("change ratio outside [0,1]");
    return ratio >= threshold ? 1 : 0;
}

std::vector<LabeledPatch> tile_aoi(const AoiScene& scene, int patch_size,
                                   double label_threshold) {
    scene.validate();
    if (patch_size < 1) throw ConfigError("patch_size must be positive");
    int H = scene.height(), W = scene.width();
    if (H < patch_size || W < patch_size)
        throw SceneTooSmall("AOI " + scene.aoi_id + ": smaller than one patch");

    int rows = H / patch_size, cols = W / patch_size;
    std::vector<LabeledPatch> out;
    out.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            LabeledPatch p;
            p.series.aoi_id = scene.aoi_id;
            p.series.patch_row = r;
            p.series.patch_col = c;
            p.disaster_type = scene.disaster_type;
            int y0 = r * patch_size, x0 = c * patch_size;
            for (const auto& img : scene.images) {
                Image tile(img.channels, patch_size, patch_size);
                for (int ch = 0; ch < img.channels; ++ch)
                    for (int y = 0; y < patch_size; ++y)
                        for (int x = 0; x < patch_size; ++x)
                            tile.at(ch, y, x) = img.at(ch, y0 + y, x0 + x);
                p.series.frames.push_back(std::move(tile));
            }
            p.mask_tile.resize(static_cast<std::size_t>(patch_size) * patch_size);
            for (int y = 0; y < patch_size; ++y)
                for (int x = 0; x < patch_size; ++x)
                    p.mask_tile[static_cast<std::size_t>(y) * patch_size + x] =
                        scene.change_mask[static_cast<std::size_t>(y0 + y) * W + (x0 + x)];
            p.change_ratio = change_ratio(p.mask_tile);
            p.label = label_patch(p.change_ratio, label_threshold);
            out.push_back(std::move(p));
        }
    return out;
}

namespace {

std::uint64_t patch_key(const LabeledPatch& p) {
    std::string s = p.series.aoi_id + ":" + std::to_string(p.series.patch_row) + "," +
                    std::to_string(p.series.patch_col);
    return fnv1a64(s);
}

}  // namespace

void split_dataset(std::vector<LabeledPatch>& patches, const std::array<double, 3>& ratios,
                   std::uint64_t seed) {
    if (patches.size() < 10) throw TooFewPatches("need at least 10 patches to split");

    std::map<std::pair<int, std::string>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < patches.size(); ++i)
        strata[{patches[i].label, patches[i].disaster_type}].push_back(i);

    for (auto& [stratum, members] : strata) {
        std::uint64_t stratum_salt =
            hash_combine(seed, fnv1a64(stratum.second) ^ static_cast<std::uint64_t>(stratum.first));
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            std::uint64_t ha = hash_combine(stratum_salt, patch_key(patches[a]));
            std::uint64_t hb = hash_combine(stratum_salt, patch_key(patches[b]));
            return ha != hb ? ha < hb : a < b;
        });
        auto q = synthgen::split_quotas(members.size(), ratios);
        for (std::size_t k = 0; k < members.size(); ++k) {
            data::Split s = k < q[0]          ? data::Split::kTrain
                            : k < q[0] + q[1] ? data::Split::kVal
                                              : data::Split::kTest;
            patches[members[k]].split = s;
        }
    }
}

std::map<std::string, TypeStats> dataset_statistics(const std::vector<LabeledPatch>& patches) {
    std::map<std::string, std::set<std::string>> aois;
    std::map<std::string, TypeStats> stats;
    for (const auto& p : patches) {
        auto& s = stats[p.disaster_type];
        s.patch_count += 1;
        s.positive_count += static_cast<std::size_t>(p.label);
        aois[p.disaster_type].insert(p.series.aoi_id);
    }
    for (auto& [type, s] : stats) {
        s.aoi_count = static_cast<int>(aois[type].size());
        s.positive_ratio = s.patch_count == 0
                               ? 0.0
                               : static_cast<double>(s.positive_count) /
                                     static_cast<double>(s.patch_count);
    }
    return stats;
}

std::vector<std::size_t> change_ratio_histogram(const std::vector<double>& ratios, int bins) {
    if (bins < 1) throw ConfigError("histogram needs at least one bin");
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double r : ratios) {
        if (!(r >= 0.0 && r <= 1.0)) throw DataError("change ratio outside [0,1]");
        int b = std::min(static_cast<int>(r * bins), bins - 1);
        counts[static_cast<std::size_t>(b)]++;
    }
    return counts;
}

void write_stats_csv(const fs::path& path, const std::map<std::string, TypeStats>& stats) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "disaster_type,aois,patches,positive,positive_ratio_pct\n";
    char buf[64];
    for (const auto& [type, s] : stats) {
        std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * s.positive_ratio);
        out << type << "," << s.aoi_count << "," << s.patch_count << "," << s.positive_count
            << "," << buf << "\n";
    }
}

void write_histogram_csv(const fs::path& path, const std::vector<std::size_t>& counts) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "bin_lo,bin_hi,count\n";
    double w = 1.0 / static_cast<double>(counts.size());
    char buf[64];
    for (std::size_t i = 0; i < counts.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.4f,%.4f", i * w, (i + 1) * w);
        out << buf << "," << counts[i] << "\n";
    }
}

namespace {

bool has_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

synthgen::BaseCorpus load_base_corpus(const fs::path& root) {
    if (!fs::is_directory(root)) throw DataError("corpus root is not a directory: " + root.string());
    synthgen::BaseCorpus corpus;
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && e.path().filename().string().front() != '.')
            class_dirs.push_back(e.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw EmptyClass("no class directories under " + root.string());

    for (const auto& dir : class_dirs) {
        std::vector<fs::path> paths;
        for (const auto& f : fs::directory_iterator(dir)) {
            if (!f.is_regular_file()) continue;
            if (f.path().filename().string().front() == '.') continue;
            if (!has_image_extension(f.path()))
                throw UnreadableImage("not an image file: " + f.path().string());
            paths.push_back(f.path());
        }
        std::sort(paths.begin(), paths.end());
        if (paths.empty()) throw EmptyClass("class directory has no images: " + dir.string());
        corpus.by_class[dir.filename().string()] = std::move(paths);
    }
    return corpus;
}

AoiScene load_aoi_dir(const fs::path& dir, const std::string& disaster_type) {
    AoiScene scene;
    scene.aoi_id = dir.filename().string();
    scene.disaster_type = disaster_type;

    std::vector<fs::path> frames;
    for (int t = 1;; ++t) {
        fs::path p = dir / ("t" + std::to_string(t) + ".png");
        if (!fs::exists(p)) break;
        frames.push_back(p);
    }
    if (frames.size() < 2)
        throw DataError("AOI " + dir.string() + ": expected t1.png..tT.png with T >= 2");
    for (const auto& p : frames) scene.images.push_back(read_image(p));

    fs::path mask_path = dir / "mask.png";
    if (!fs::exists(mask_path)) throw DataError("AOI " + dir.string() + ": missing mask.png");
    Raster8 mask = read_png(mask_path);
    if (mask.channels != 1) {
        // accept RGB masks, binarize on the first channel
        Raster8 gray;
        gray.channels = 1;
        gray.height = mask.height;
        gray.width = mask.width;
        gray.data.resize(static_cast<std::size_t>(mask.height) * mask.width);
        for (int y = 0; y < mask.height; ++y)
            for (int x = 0; x < mask.width; ++x)
                gray.data[static_cast<std::size_t>(y) * mask.width + x] = mask.at(y, x, 0);
        mask = std::move(gray);
    }
    scene.change_mask.resize(mask.data.size());
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        scene.change_mask[i] = mask.data[i] > 127 ? 1 : 0;
    scene.validate();
    return scene;
}

std::vector<AoiScene> load_aoi_root(const fs::path& root) {
    if (!fs::is_directory(root)) throw DataError("AOI root is not a directory: " + root.string());
    std::vector<AoiScene> scenes;
    std::vector<fs::path> type_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) type_dirs.push_back(e.path());
    std::sort(type_dirs.begin(), type_dirs.end());
    for (const auto& type_dir : type_dirs) {
        std::string type = type_dir.filename().string();
        if (!is_disaster_type(type))
            throw DataError("unknown disaster type directory: " + type_dir.string());
        std::vector<fs::path> aoi_dirs;
        for (const auto& e : fs::directory_iterator(type_dir))
            if (e.is_directory()) aoi_dirs.push_back(e.path());
        std::sort(aoi_dirs.begin(), aoi_dirs.end());
        for (const auto& aoi : aoi_dirs) scenes.push_back(load_aoi_dir(aoi, type));
    }
    if (scenes.empty()) throw DataError("no AOIs under " + root.string());
    return scenes;
}

data::ManifestInfo ingest_dataset(const fs::path& aoi_root, const IngestOptions& opts,
                                  const fs::path& out_dir) {
    if (opts.patch_size < 8) throw ConfigError("patch_size must be at least 8");
    if (!(opts.label_threshold >= 0.0 && opts.label_threshold <= 1.0))
        throw ConfigError("label_threshold must be in [0,1]");

    auto scenes = load_aoi_root(aoi_root);
    std::size_t timesteps = scenes.front().images.size();
    for (const auto& s : scenes)
        if (s.images.size() != timesteps)
            throw DataError("AOI " + s.aoi_id + ": timestep count differs across AOIs");

    std::vector<LabeledPatch> patches;
    for (const auto& s : scenes) {
        auto tiles = tile_aoi(s, opts.patch_size, opts.label_threshold);
        std::move(tiles.begin(), tiles.end(), std::back_inserter(patches));
    }
    split_dataset(patches, opts.split_ratio, opts.seed);

    json params;
    params["patch_size"] = opts.patch_size;
    params["label_threshold"] = opts.label_threshold;
    params["split_ratio"] = {opts.split_ratio[0], opts.split_ratio[1], opts.split_ratio[2]};
    params["aoi_root"] = aoi_root.string();

    data::DatasetWriter writer(out_dir, "real", opts.patch_size, static_cast<int>(timesteps),
                               opts.seed, params);
    for (const auto& p : patches) {
        char coords[32];
        std::snprintf(coords, sizeof(coords), "_r%03d_c%03d", p.series.patch_row,
                      p.series.patch_col);
        data::RecordEntry entry;
        entry.id = p.series.aoi_id + coords;
        entry.split = p.split;
        entry.label = p.label;
        entry.disaster_type = p.disaster_type;
        entry.change_ratio = p.change_ratio;

        Image mask_img(1, opts.patch_size, opts.patch_size);
        for (std::size_t i = 0; i < p.mask_tile.size(); ++i)
            mask_img.data[i] = p.mask_tile[i] ? 1.0f : 0.0f;

        json meta;
        meta["aoi_id"] = p.series.aoi_id;
        meta["patch_row"] = p.series.patch_row;
        meta["patch_col"] = p.series.patch_col;
        writer.add_record(entry, p.series, &mask_img, std::move(meta));
    }
    writer.finalize();

    auto stats = dataset_statistics(patches);
    write_stats_csv(out_dir / "stats.csv", stats);
    std::vector<double> ratios;
    for (const auto& p : patches) ratios.push_back(p.change_ratio);
    write_histogram_csv(out_dir / "change_ratio_hist.csv",
                        change_ratio_histogram(ratios, opts.histogram_bins));
    return data::read_manifest(out_dir);
}

}  // namespace sitsx::ingest
