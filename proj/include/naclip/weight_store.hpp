#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "naclip/tensor.hpp"

namespace naclip {

// On-disk layout (all integers little-endian):
//
//   u64   header_size                 bytes of JSON that follow
//   u8[]  header                      UTF-8 JSON, space padded to a multiple of 8
//   u8[]  blob                        raw fp32 payloads
//
// Header:
//   {"format": "naclip-tensor-archive", "version": 1,
//    "metadata": {...},                            optional, free-form
//    "tensors": [{"name", "dtype": "f32", "shape": [..], "offset", "nbytes"}, ..],
//    "blob_fnv1a64": "0123456789abcdef"}           optional checksum of the blob
//
// Offsets are relative to the first blob byte. See docs/archive_format.md.
inline constexpr const char* kArchiveFormat = "naclip-tensor-archive";
inline constexpr int kArchiveVersion = 1;

struct ArchiveEntry {
    Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t nbytes = 0;
};

class TensorArchive {
public:
    TensorArchive() = default;
    TensorArchive(std::map<std::string, ArchiveEntry> entries, std::vector<std::byte> blob, nlohmann::json metadata);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const ArchiveEntry& entry(const std::string& name) const;
    const std::map<std::string, ArchiveEntry>& entries() const noexcept { return entries_; }
    const nlohmann::json& metadata() const noexcept { return metadata_; }

    // Copies the payload out; throws ValidationError if absent.
    Tensor tensor(const std::string& name) const;

private:
    std::map<std::string, ArchiveEntry> entries_;
    std::vector<std::byte> blob_;
    nlohmann::json metadata_;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

std::uint64_t fnv1a64(const std::byte* data, std::size_t n) noexcept;

std::vector<std::byte> encode_archive(const std::vector<NamedTensor>& tensors,
                                      const nlohmann::json& metadata = nlohmann::json::object(),
                                      bool with_checksum = true);
TensorArchive decode_archive(std::vector<std::byte> bytes);

void save_archive(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                  const nlohmann::json& metadata = nlohmann::json::object());
TensorArchive load_archive(const std::filesystem::path& path);

struct ManifestEntry {
    std::string name;
    Shape shape;
};

using WeightManifest = std::vector<ManifestEntry>;

struct ValidationReport {
    // Archive tensors the manifest does not mention.
    std::vector<std::string> extra;
};

// Every manifest entry must be present with the exact shape; otherwise a
// ValidationError lists every offending tensor.
ValidationReport validate(const TensorArchive& archive, const WeightManifest& manifest);

}  // namespace naclip
