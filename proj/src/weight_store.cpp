#include "naclip/weight_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "naclip/error.hpp"

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace naclip {

using nlohmann::json;

std::uint64_t fnv1a64(const std::byte* data, std::size_t n) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<std::uint64_t>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

}  // namespace

TensorArchive::TensorArchive(std::map<std::string, ArchiveEntry> entries, std::vector<std::byte> blob, json metadata)
    : entries_(std::move(entries)), blob_(std::move(blob)), metadata_(std::move(metadata)) {
    for (const auto& [name, e] : entries_) {
        if (e.nbytes != shape_numel(e.shape) * sizeof(float))
            throw FormatError("tensor '" + name + "' nbytes " + std::to_string(e.nbytes) + " disagrees with shape " +
                              shape_str(e.shape));
        if (e.offset > blob_.size() || e.nbytes > blob_.size() - e.offset)
            throw CorruptionError("tensor '" + name + "' spans past the end of the blob (offset " +
                                  std::to_string(e.offset) + ", " + std::to_string(e.nbytes) + " bytes, blob " +
                                  std::to_string(blob_.size()) + ")");
    }
}

const ArchiveEntry& TensorArchive::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ValidationError("archive has no tensor '" + name + "'");
    return it->second;
}

Tensor TensorArchive::tensor(const std::string& name) const {
    const ArchiveEntry& e = entry(name);
    std::vector<float> values(shape_numel(e.shape));
    if (e.nbytes) std::memcpy(values.data(), blob_.data() + e.offset, e.nbytes);
    return Tensor(e.shape, std::move(values));
}

std::vector<std::byte> encode_archive(const std::vector<NamedTensor>& tensors, const json& metadata,
                                      bool with_checksum) {
    json header;
    header["format"] = kArchiveFormat;
    header["version"] = kArchiveVersion;
    header["metadata"] = metadata;
    json list = json::array();
    std::uint64_t offset = 0;
    std::set<std::string> seen;
    for (const auto& t : tensors) {
        if (!seen.insert(t.name).second) throw FormatError("duplicate tensor name '" + t.name + "'");
        const std::uint64_t nbytes = t.value.size() * sizeof(float);
        list.push_back({{"name", t.name}, {"dtype", "f32"}, {"shape", t.value.shape()}, {"offset", offset},
                        {"nbytes", nbytes}});
        offset += nbytes;
    }
    header["tensors"] = std::move(list);

    std::vector<std::byte> blob(offset);
    offset = 0;
    for (const auto& t : tensors) {
        const std::size_t nbytes = t.value.size() * sizeof(float);
        if (nbytes) std::memcpy(blob.data() + offset, t.value.data(), nbytes);
        offset += nbytes;
    }
    if (with_checksum) header["blob_fnv1a64"] = hex64(fnv1a64(blob.data(), blob.size()));

    std::string text = header.dump();
    text.append((8 - text.size() % 8) % 8, ' ');
    std::vector<std::byte> out(8 + text.size() + blob.size());
    const std::uint64_t header_size = text.size();
    std::memcpy(out.data(), &header_size, 8);
    std::memcpy(out.data() + 8, text.data(), text.size());
    if (!blob.empty()) std::memcpy(out.data() + 8 + text.size(), blob.data(), blob.size());
    return out;
}

TensorArchive decode_archive(std::vector<std::byte> bytes) {
    if (bytes.size() < 8) throw FormatError("archive shorter than its 8-byte header size field");
    std::uint64_t header_size = 0;
    std::memcpy(&header_size, bytes.data(), 8);
    if (header_size > bytes.size() - 8)
        throw FormatError("archive header size " + std::to_string(header_size) + " exceeds file size");

    json header;
    try {
        header = json::parse(reinterpret_cast<const char*>(bytes.data() + 8),
                             reinterpret_cast<const char*>(bytes.data() + 8 + header_size));
    } catch (const json::exception& e) {
        throw FormatError(std::string("archive header is not valid JSON: ") + e.what());
    }
    if (!header.is_object() || header.value("format", "") != kArchiveFormat)
        throw FormatError("not a naclip tensor archive (bad \"format\")");
    if (header.value("version", 0) != kArchiveVersion)
        throw FormatError("unsupported archive version " + header.value("version", json()).dump());
    if (!header.contains("tensors") || !header["tensors"].is_array())
        throw FormatError("archive header lacks a \"tensors\" array");

    std::map<std::string, ArchiveEntry> entries;
    try {
        for (const auto& t : header["tensors"]) {
            const auto name = t.at("name").get<std::string>();
            if (t.at("dtype").get<std::string>() != "f32")
                throw FormatError("tensor '" + name + "' has dtype " + t.at("dtype").dump() + "; only f32 is accepted");
            ArchiveEntry e;
            e.shape = t.at("shape").get<Shape>();
            e.offset = t.at("offset").get<std::uint64_t>();
            e.nbytes = t.at("nbytes").get<std::uint64_t>();
            if (!entries.emplace(name, std::move(e)).second) throw FormatError("duplicate tensor name '" + name + "'");
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed tensor entry: ") + e.what());
    }

    std::vector<std::byte> blob(bytes.begin() + static_cast<std::ptrdiff_t>(8 + header_size), bytes.end());
    if (header.contains("blob_fnv1a64")) {
        const std::string expected = header["blob_fnv1a64"].get<std::string>();
        const std::string actual = hex64(fnv1a64(blob.data(), blob.size()));
        if (expected != actual)
            throw CorruptionError("blob checksum mismatch (header " + expected + ", computed " + actual + ")");
    }
    return TensorArchive(std::move(entries), std::move(blob), header.value("metadata", json::object()));
}

void save_archive(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors, const json& metadata) {
    const auto bytes = encode_archive(tensors, metadata);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

TensorArchive load_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open archive " + path.string());
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw IoError("failed reading " + path.string());
    return decode_archive(std::move(bytes));
}

ValidationReport validate(const TensorArchive& archive, const WeightManifest& manifest) {
    std::vector<std::string> problems;
    std::set<std::string> expected;
    for (const auto& m : manifest) {
        expected.insert(m.name);
        if (!archive.contains(m.name)) {
            problems.push_back("missing " + m.name + " " + shape_str(m.shape));
            continue;
        }
        const auto& shape = archive.entry(m.name).shape;
        if (shape != m.shape)
            problems.push_back("shape mismatch " + m.name + ": expected " + shape_str(m.shape) + ", got " +
                               shape_str(shape));
    }
    if (!problems.empty()) {
        std::string msg = "weight archive does not satisfy the manifest (" + std::to_string(problems.size()) +
                          " problem" + (problems.size() > 1 ? "s" : "") + "):";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
    ValidationReport report;
    for (const auto& [name, e] : archive.entries())
        if (!expected.count(name)) report.extra.push_back(name);
    return report;
}

}  // namespace naclip
