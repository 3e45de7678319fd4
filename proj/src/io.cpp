#include "dbdmp/io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace dbdmp::io {

using nlohmann::json;

static void write_bytes(const fs::path& p, const void* data, size_t n) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + p.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw std::runtime_error("write failed: " + p.string());
}

static std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot open: " + p.string());
    std::vector<char> buf(static_cast<size_t>(f.tellg()));
    f.seekg(0);
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("read failed: " + p.string());
    return buf;
}

static json geometry_json(const Shape3& shape, const Spacing3& spacing,
                          const std::array<double, 3>& origin, const std::string& dtype) {
    return json{{"shape", {shape[0], shape[1], shape[2]}},
                {"spacing", {spacing[0], spacing[1], spacing[2]}},
                {"origin", {origin[0], origin[1], origin[2]}},
                {"dtype", dtype},
                {"order", "z-slowest, x-fastest"}};
}

void write_raw_volume(const fs::path& dir, const std::string& stem, const Volume& v) {
    fs::create_directories(dir);
    write_bytes(dir / (stem + ".raw"), v.data.data(), v.data.size() * sizeof(float));
    json meta = geometry_json(v.shape, v.spacing, v.origin, "float32");
    std::ofstream m(dir / (stem + "_meta.json"));
    m << meta.dump(2) << "\n";
}

void write_raw_label(const fs::path& dir, const std::string& stem, const LabelVolume& v) {
    fs::create_directories(dir);
    write_bytes(dir / (stem + ".raw"), v.data.data(), v.data.size());
    json meta = geometry_json(v.shape, v.spacing, v.origin, "uint8");
    std::ofstream m(dir / (stem + "_meta.json"));
    m << meta.dump(2) << "\n";
}

static void parse_geometry(const json& meta, Shape3& shape, Spacing3& spacing,
                           std::array<double, 3>& origin) {
    for (int a = 0; a < 3; ++a) {
        shape[a] = meta.at("shape").at(a).get<int64_t>();
        spacing[a] = meta.at("spacing").at(a).get<double>();
        origin[a] = meta.contains("origin") ? meta["origin"].at(a).get<double>() : 0.0;
    }
}

Volume read_raw_volume(const fs::path& dir, const std::string& stem) {
    json meta = json::parse(std::ifstream(dir / (stem + "_meta.json")));
    Volume v;
    parse_geometry(meta, v.shape, v.spacing, v.origin);
    auto bytes = read_bytes(dir / (stem + ".raw"));
    if (bytes.size() != size_t(numel(v.shape)) * sizeof(float))
        throw std::runtime_error("raw size mismatch: " + (dir / (stem + ".raw")).string());
    v.data.resize(static_cast<size_t>(numel(v.shape)));
    std::memcpy(v.data.data(), bytes.data(), bytes.size());
    return v;
}

LabelVolume read_raw_label(const fs::path& dir, const std::string& stem) {
    json meta = json::parse(std::ifstream(dir / (stem + "_meta.json")));
    LabelVolume v;
    parse_geometry(meta, v.shape, v.spacing, v.origin);
    auto bytes = read_bytes(dir / (stem + ".raw"));
    if (bytes.size() != size_t(numel(v.shape)))
        throw std::runtime_error("raw size mismatch: " + (dir / (stem + ".raw")).string());
    v.data.resize(bytes.size());
    std::memcpy(v.data.data(), bytes.data(), bytes.size());
    return v;
}

void write_case(const fs::path& dir, const CaseData& c, const std::string& spec_json) {
    fs::create_directories(dir);
    write_bytes(dir / "image.raw", c.image.data.data(), c.image.data.size() * sizeof(float));
    json meta = geometry_json(c.image.shape, c.image.spacing, c.image.origin, "float32");
    meta["case_id"] = c.case_id;
    meta["labels"] = json::array();
    if (c.label_full) {
        write_bytes(dir / "label_full.raw", c.label_full->data.data(), c.label_full->data.size());
        meta["labels"].push_back("label_full");
    }
    if (c.label_partial) {
        write_bytes(dir / "label_partial.raw", c.label_partial->data.data(),
                    c.label_partial->data.size());
        meta["labels"].push_back("label_partial");
    }
    if (!spec_json.empty()) meta["generation_spec"] = json::parse(spec_json);
    std::ofstream m(dir / "meta.json");
    m << meta.dump(2) << "\n";
}

CaseData read_case(const fs::path& dir) {
    json meta = json::parse(std::ifstream(dir / "meta.json"));
    CaseData c;
    c.case_id = meta.value("case_id", dir.filename().string());
    parse_geometry(meta, c.image.shape, c.image.spacing, c.image.origin);
    auto bytes = read_bytes(dir / "image.raw");
    if (bytes.size() != size_t(numel(c.image.shape)) * sizeof(float))
        throw std::runtime_error("image.raw size mismatch in " + dir.string());
    c.image.data.resize(static_cast<size_t>(numel(c.image.shape)));
    std::memcpy(c.image.data.data(), bytes.data(), bytes.size());

    auto load_label = [&](const char* name) -> std::optional<LabelVolume> {
        if (!fs::exists(dir / (std::string(name) + ".raw"))) return std::nullopt;
        LabelVolume l;
        l.shape = c.image.shape;
        l.spacing = c.image.spacing;
        l.origin = c.image.origin;
        auto b = read_bytes(dir / (std::string(name) + ".raw"));
        if (b.size() != size_t(numel(l.shape)))
            throw std::runtime_error(std::string(name) + ".raw size mismatch in " + dir.string());
        l.data.resize(b.size());
        std::memcpy(l.data.data(), b.data(), b.size());
        return l;
    };
    c.label_full = load_label("label_full");
    c.label_partial = load_label("label_partial");
    return c;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
    json j{{"train", m.train}, {"val", m.val}, {"test", m.test}};
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write manifest: " + path.string());
    f << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read manifest: " + path.string());
    json j = json::parse(f);
    DatasetManifest m;
    m.train = j.value("train", std::vector<std::string>{});
    m.val = j.value("val", std::vector<std::string>{});
    m.test = j.value("test", std::vector<std::string>{});
    return m;
}

// --- NIfTI-1 ----------------------------------------------------------------

static std::vector<char> gz_read_all(const fs::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open: " + path.string());
    std::vector<char> out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
    gzclose(f);
    if (n < 0) throw std::runtime_error("gzip read error: " + path.string());
    return out;
}

Volume read_nifti(const fs::path& path) {
    std::vector<char> bytes =
        path.extension() == ".gz" ? gz_read_all(path) : read_bytes(path);
    if (bytes.size() < 352) throw std::runtime_error("truncated NIfTI: " + path.string());

    auto rd16 = [&](size_t off) { int16_t v; std::memcpy(&v, bytes.data() + off, 2); return v; };
    auto rd32f = [&](size_t off) { float v; std::memcpy(&v, bytes.data() + off, 4); return v; };
    int32_t sizeof_hdr;
    std::memcpy(&sizeof_hdr, bytes.data(), 4);
    if (sizeof_hdr != 348) throw std::runtime_error("not a little-endian NIfTI-1: " + path.string());
    if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0 &&
        std::memcmp(bytes.data() + 344, "ni1\0", 4) != 0)
        throw std::runtime_error("missing NIfTI magic: " + path.string());

    int16_t ndim = rd16(40);
    if (ndim < 3) throw std::runtime_error("NIfTI with fewer than 3 dims: " + path.string());
    int64_t nx = rd16(42), ny = rd16(44), nz = rd16(46);
    int16_t datatype = rd16(70);
    float sx = rd32f(80), sy = rd32f(84), sz = rd32f(88);
    float scl_slope = rd32f(112), scl_inter = rd32f(116);
    if (scl_slope == 0.f) scl_slope = 1.f;
    float vox_offset = rd32f(108);
    size_t off = static_cast<size_t>(vox_offset);
    // affine translation from srow entries when sform present
    float ox = rd32f(280 + 12), oy = rd32f(296 + 12), oz = rd32f(312 + 12);

    Volume v;
    v.shape = {nz, ny, nx};
    v.spacing = {sz > 0 ? sz : 1.0, sy > 0 ? sy : 1.0, sx > 0 ? sx : 1.0};
    v.origin = {oz, oy, ox};
    const size_t n = static_cast<size_t>(numel(v.shape));
    v.data.resize(n);

    auto convert = [&](auto tag, size_t bpv) {
        using S = decltype(tag);
        if (bytes.size() < off + n * bpv)
            throw std::runtime_error("NIfTI data truncated: " + path.string());
        // NIfTI stores x fastest, matching our layout
        for (size_t i = 0; i < n; ++i) {
            S s;
            std::memcpy(&s, bytes.data() + off + i * bpv, bpv);
            v.data[i] = static_cast<float>(s) * scl_slope + scl_inter;
        }
    };
    switch (datatype) {
        case 2: convert(uint8_t{}, 1); break;
        case 4: convert(int16_t{}, 2); break;
        case 8: convert(int32_t{}, 4); break;
        case 16: convert(float{}, 4); break;
        case 64: convert(double{}, 8); break;
        case 256: convert(int8_t{}, 1); break;
        case 512: convert(uint16_t{}, 2); break;
        default:
            throw std::runtime_error("unsupported NIfTI datatype " + std::to_string(datatype));
    }
    return v;
}

}  // namespace dbdmp::io
