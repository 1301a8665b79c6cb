#include "fwmerge/checkpoint_io.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <vector>

namespace fwmerge {

namespace {

constexpr char kMagic[4] = {'F', 'W', 'C', 'K'};

struct HeaderEntry {
    std::string name;
    StorageType dtype = StorageType::f64;
    std::vector<std::int64_t> shape;
    std::uint64_t offset = 0;
    std::uint64_t nbytes = 0;
};

std::size_t dtype_size(StorageType t) { return t == StorageType::f32 ? 4 : 8; }

void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("truncated file: missing u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw FormatError("truncated file: missing u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

// Serialization below assumes a little-endian host with IEEE-754 doubles;
// every platform this ships on qualifies.
static_assert(sizeof(double) == 8 && sizeof(float) == 4);

std::vector<HeaderEntry> parse_header(const std::string& text, const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": header is not valid JSON: " + e.what());
    }
    if (!j.is_array()) throw FormatError(path.string() + ": header must be a JSON array");
    std::vector<HeaderEntry> entries;
    for (const auto& item : j) {
        HeaderEntry e;
        try {
            e.name = item.at("name").get<std::string>();
            const auto dtype = item.at("dtype").get<std::string>();
            if (dtype == "f32") {
                e.dtype = StorageType::f32;
            } else if (dtype == "f64") {
                e.dtype = StorageType::f64;
            } else {
                throw FormatError(path.string() + ": unknown dtype '" + dtype + "'");
            }
            e.shape = item.at("shape").get<std::vector<std::int64_t>>();
            e.offset = item.at("offset").get<std::uint64_t>();
            e.nbytes = item.at("nbytes").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(path.string() + ": malformed header entry: " + ex.what());
        }
        std::int64_t elems = 1;
        for (auto d : e.shape) {
            if (d <= 0) throw FormatError(path.string() + ": non-positive dim in '" + e.name + "'");
            elems *= d;
        }
        if (e.nbytes != static_cast<std::uint64_t>(elems) * dtype_size(e.dtype)) {
            throw FormatError(path.string() + ": header/data length disagreement for layer '" +
                              e.name + "'");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

struct FileHeader {
    std::vector<HeaderEntry> entries;
    std::uint64_t payload_start = 0;
};

FileHeader read_header(std::istream& is, const std::filesystem::path& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(path.string() + ": bad magic, not an FWCK file");
    }
    const std::uint32_t version = read_u32_le(is);
    if (version != kFwckVersion) {
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    }
    const std::uint64_t header_len = read_u64_le(is);
    std::string text(header_len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw FormatError(path.string() + ": truncated header");
    FileHeader h;
    h.entries = parse_header(text, path);
    h.payload_start = 16 + header_len;
    return h;
}

}  // namespace

void save_checkpoint(const ParamSet& p, const std::filesystem::path& path, StorageType dtype) {
    nlohmann::ordered_json header = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < p.layer_count(); ++i) {
        const auto& info = p.schema().layer(i);
        const std::uint64_t nbytes =
            static_cast<std::uint64_t>(info.elements()) * dtype_size(dtype);
        nlohmann::ordered_json entry;
        entry["name"] = info.name;
        entry["dtype"] = dtype == StorageType::f32 ? "f32" : "f64";
        entry["shape"] = info.shape;
        entry["offset"] = offset;
        entry["nbytes"] = nbytes;
        header.push_back(std::move(entry));
        offset += nbytes;
    }
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
    os.write(kMagic, 4);
    write_u32_le(os, kFwckVersion);
    write_u64_le(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));

    for (std::size_t i = 0; i < p.layer_count(); ++i) {
        const Vector& v = p.layer(i);
        if (dtype == StorageType::f64) {
            os.write(reinterpret_cast<const char*>(v.data()),
                     static_cast<std::streamsize>(v.size() * 8));
        } else {
            std::vector<float> buf(static_cast<std::size_t>(v.size()));
            for (Eigen::Index j = 0; j < v.size(); ++j) buf[static_cast<std::size_t>(j)] =
                static_cast<float>(v[j]);
            os.write(reinterpret_cast<const char*>(buf.data()),
                     static_cast<std::streamsize>(buf.size() * 4));
        }
    }
    os.flush();
    if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path.string() + "'");
    const FileHeader h = read_header(is, path);

    ParamSet p;
    for (const auto& e : h.entries) {
        is.seekg(static_cast<std::streamoff>(h.payload_start + e.offset));
        const std::int64_t elems = LayerInfo{e.name, e.shape}.elements();
        Vector v(elems);
        if (e.dtype == StorageType::f64) {
            is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(e.nbytes));
        } else {
            std::vector<float> buf(static_cast<std::size_t>(elems));
            is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(e.nbytes));
            for (std::int64_t j = 0; j < elems; ++j) v[j] = static_cast<double>(
                buf[static_cast<std::size_t>(j)]);
        }
        if (!is) {
            throw FormatError(path.string() + ": truncated payload for layer '" + e.name + "'");
        }
        p.add_layer(e.name, e.shape, std::move(v));
    }
    return p;
}

ParamSchema read_checkpoint_schema(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path.string() + "'");
    const FileHeader h = read_header(is, path);
    std::vector<LayerInfo> layers;
    layers.reserve(h.entries.size());
    for (const auto& e : h.entries) layers.push_back(LayerInfo{e.name, e.shape});
    return ParamSchema(std::move(layers));
}

}  // namespace fwmerge
