#include "sitsx/dataset.hpp"

#include <fstream>

#include "sitsx/errors.hpp"
#include "sitsx/image_io.hpp"

namespace sitsx::data {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const char* split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    throw ConfigError("unknown split");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "val") return Split::kVal;
    if (name == "test") return Split::kTest;
    throw ConfigError("unknown split name: " + name);
}

void write_manifest(const fs::path& root, const ManifestInfo& info) {
    json m;
    m["kind"] = info.kind;
    m["patch_size"] = info.patch_size;
    m["timesteps"] = info.timesteps;
    m["seed"] = info.seed;
    m["params"] = info.params;
    int n_train = 0, n_val = 0, n_test = 0, n_pos = 0;
    for (const auto& r : info.records) {
        n_pos += r.label;
        if (r.split == Split::kTrain)
            ++n_train;
        else if (r.split == Split::kVal)
            ++n_val;
        else
            ++n_test;
    }
    m["counts"] = {{"total", info.records.size()},
                   {"train", n_train},
                   {"val", n_val},
                   {"test", n_test},
                   {"positive", n_pos}};
    json recs = json::array();
    for (const auto& r : info.records) {
        recs.push_back({{"id", r.id},
                        {"split", split_name(r.split)},
                        {"label", r.label},
                        {"disaster_type", r.disaster_type},
                        {"change_ratio", r.change_ratio}});
    }
    m["records"] = std::move(recs);

    fs::path tmp = root / "manifest.json.tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << m.dump(2) << "\n";
    }
    fs::rename(tmp, root / "manifest.json");
}

ManifestInfo read_manifest(const fs::path& root) {
    std::ifstream in(root / "manifest.json", std::ios::binary);
    if (!in) throw DataError("missing manifest.json under " + root.string());
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw DataError("bad manifest.json: " + std::string(e.what()));
    }
    ManifestInfo info;
    try {
        info.kind = m.at("kind").get<std::string>();
        info.patch_size = m.at("patch_size").get<int>();
        info.timesteps = m.at("timesteps").get<int>();
        info.seed = m.at("seed").get<std::uint64_t>();
        info.params = m.value("params", json::object());
        for (const auto& r : m.at("records")) {
            RecordEntry e;
            e.id = r.at("id").get<std::string>();
            e.split = split_from_name(r.at("split").get<std::string>());
            e.label = r.at("label").get<int>();
            e.disaster_type = r.at("disaster_type").get<std::string>();
            e.change_ratio = r.at("change_ratio").get<double>();
            info.records.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw DataError("manifest.json missing field: " + std::string(e.what()));
    }
    return info;
}

DatasetWriter::DatasetWriter(fs::path root, std::string kind, int patch_size, int timesteps,
                             std::uint64_t seed, json params)
    : root_(std::move(root)) {
    if (fs::exists(root_ / "manifest.json"))
        throw DataError("output already contains a dataset: " + root_.string());
    fs::create_directories(root_);
    info_.kind = std::move(kind);
    info_.patch_size = patch_size;
    info_.timesteps = timesteps;
    info_.seed = seed;
    info_.params = std::move(params);
}

void DatasetWriter::add_record(const RecordEntry& entry, const PatchTimeSeries& series,
                               const Image* mask, json meta) {
    if (finalized_) throw DataError("writer already finalized");
    series.validate();
    if (static_cast<int>(series.frames.size()) != info_.timesteps)
        throw ShapeMismatch("record " + entry.id + ": wrong timestep count");
    for (const auto& f : series.frames)
        if (f.height != info_.patch_size || f.width != info_.patch_size)
            throw ShapeMismatch("record " + entry.id + ": wrong patch size");

    fs::path dir = root_ / entry.id;
    fs::create_directories(dir);
    for (std::size_t t = 0; t < series.frames.size(); ++t)
        write_image_png(dir / ("t" + std::to_string(t + 1) + ".png"), series.frames[t]);
    if (mask != nullptr) {
        if (mask->channels != 1 || mask->height != info_.patch_size ||
            mask->width != info_.patch_size)
            throw ShapeMismatch("record " + entry.id + ": bad mask shape");
        write_png(dir / "mask.png", mask_to_raster8(mask->data, info_.patch_size));
    }

    meta["id"] = entry.id;
    meta["split"] = split_name(entry.split);
    meta["label"] = entry.label;
    meta["disaster_type"] = entry.disaster_type;
    meta["change_ratio"] = entry.change_ratio;
    {
        fs::path tmp = dir / "meta.json.tmp";
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << meta.dump(2) << "\n";
        out.close();
        fs::rename(tmp, dir / "meta.json");
    }
    info_.records.push_back(entry);
}

void DatasetWriter::finalize() {
    if (finalized_) return;
    write_manifest(root_, info_);
    finalized_ = true;
}

Dataset Dataset::open(const fs::path& root) {
    Dataset d;
    d.root_ = root;
    d.info_ = read_manifest(root);
    return d;
}

std::vector<std::size_t> Dataset::split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < info_.records.size(); ++i)
        if (info_.records[i].split == s) out.push_back(i);
    return out;
}

LoadedRecord Dataset::load(std::size_t index) const {
    const RecordEntry& e = entry(index);
    (*reads_)[static_cast<int>(e.split)].fetch_add(1, std::memory_order_relaxed);

    LoadedRecord rec;
    rec.entry = e;
    fs::path dir = root_ / e.id;
    for (int t = 1; t <= info_.timesteps; ++t)
        rec.series.frames.push_back(read_image(dir / ("t" + std::to_string(t) + ".png")));
    rec.series.aoi_id = e.id;
    rec.series.validate();
    fs::path mask_path = dir / "mask.png";
    if (fs::exists(mask_path)) {
        Raster8 r = read_png(mask_path);
        rec.mask = to_image(r);
    }
    return rec;
}

void Dataset::reset_read_counts() {
    for (auto& c : *reads_) c.store(0);
}

}  // namespace sitsx::data
