#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sitsx/errors.hpp"
#include "sitsx/nn/params.hpp"

namespace sitsx::nn {

inline constexpr char kCheckpointMagic[8] = {'S', 'I', 'T', 'S', 'X', 'C', 'K', '1'};

// Layout: magic, u64 header length, header JSON, raw parameter blob. The
// parameter layout is fully determined by the config inside the header, so
// the blob is written in registration order without per-entry framing.
template <typename S>
void write_param_blob(const std::filesystem::path& path, nlohmann::ordered_json header,
                      const ParamStore<S>& ps) {
    header["dtype_bytes"] = sizeof(S);
    header["param_count"] = ps.size();
    std::string hj = header.dump();

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("cannot write " + tmp.string());
        out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
        std::uint64_t hlen = hj.size();
        out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
        out.write(hj.data(), static_cast<std::streamsize>(hj.size()));
        out.write(reinterpret_cast<const char*>(ps.raw()),
                  static_cast<std::streamsize>(ps.size() * sizeof(S)));
        if (!out) throw CheckpointError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline nlohmann::ordered_json read_blob_header(std::ifstream& in, const std::string& name) {
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw CheckpointError("not a checkpoint file: " + name);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || hlen > (1u << 20)) throw CheckpointError("corrupt header in " + name);
    std::string hj(hlen, '\0');
    in.read(hj.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw CheckpointError("truncated header in " + name);
    try {
        return nlohmann::ordered_json::parse(hj);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("bad header json in " + name + ": " + e.what());
    }
}

// ps must already have the layout implied by the header's config.
template <typename S>
nlohmann::ordered_json read_param_blob(const std::filesystem::path& path, ParamStore<S>& ps) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    nlohmann::ordered_json header = read_blob_header(in, path.string());
    if (header.value("dtype_bytes", std::size_t{0}) != sizeof(S))
        throw CheckpointError("checkpoint scalar width mismatch: " + path.string());
    if (header.value("param_count", std::size_t{0}) != ps.size())
        throw CheckpointError("checkpoint parameter count mismatch: " + path.string());
    in.read(reinterpret_cast<char*>(ps.raw()),
            static_cast<std::streamsize>(ps.size() * sizeof(S)));
    if (!in) throw CheckpointError("truncated parameter blob in " + path.string());
    return header;
}

}  // namespace sitsx::nn
