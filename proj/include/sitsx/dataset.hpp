#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sitsx/image.hpp"

namespace sitsx::data {

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct RecordEntry {
    std::string id;
    Split split = Split::kTrain;
    int label = 0;
    std::string disaster_type = "none";
    double change_ratio = 0.0;
};

struct ManifestInfo {
    std::string kind;
    int patch_size = 0;
    int timesteps = 0;
    std::uint64_t seed = 0;
    nlohmann::ordered_json params;
    std::vector<RecordEntry> records;
};

// Writes the shared record layout: one directory per record with
// t1.png..tT.png, optional mask.png, meta.json, and a manifest.json at root.
class DatasetWriter {
  public:
    DatasetWriter(std::filesystem::path root, std::string kind, int patch_size, int timesteps,
                  std::uint64_t seed, nlohmann::ordered_json params);

    void add_record(const RecordEntry& entry, const PatchTimeSeries& series, const Image* mask,
                    nlohmann::ordered_json meta);
    void finalize();

    const std::filesystem::path& root() const { return root_; }

  private:
    std::filesystem::path root_;
    ManifestInfo info_;
    bool finalized_ = false;
};

struct LoadedRecord {
    RecordEntry entry;
    PatchTimeSeries series;
    Image mask;
};

class Dataset {
  public:
    static Dataset open(const std::filesystem::path& root);

    const ManifestInfo& info() const { return info_; }
    const std::filesystem::path& root() const { return root_; }

    std::vector<std::size_t> split_indices(Split s) const;
    const RecordEntry& entry(std::size_t index) const { return info_.records.at(index); }
    std::size_t size() const { return info_.records.size(); }

    LoadedRecord load(std::size_t index) const;

    // split access audit: counts every record read per split
    std::size_t reads(Split s) const { return (*reads_)[static_cast<int>(s)].load(); }
    void reset_read_counts();

  private:
    Dataset() : reads_(std::make_unique<std::array<std::atomic<std::size_t>, 3>>()) {}

    std::filesystem::path root_;
    ManifestInfo info_;
    std::unique_ptr<std::array<std::atomic<std::size_t>, 3>> reads_;
};

void write_manifest(const std::filesystem::path& root, const ManifestInfo& info);
ManifestInfo read_manifest(const std::filesystem::path& root);

}  // namespace sitsx::data
