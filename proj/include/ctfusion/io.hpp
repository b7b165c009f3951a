// Bit-exact binary containers for the five artifact types (image, sinogram,
// counts, kernel bank, fusion net) plus JSON sidecar helpers. All integers
// and IEEE doubles are packed explicitly little-endian, so files round-trip
// byte-identically regardless of host.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctfusion/afbp.hpp"
#include "ctfusion/core.hpp"
#include "ctfusion/nnfusion.hpp"

namespace ctfusion {

/// Parse/serialization failure; `offset` is the byte position the problem
/// was detected at (0 for framing problems such as a bad magic).
class io_error : public std::runtime_error {
  public:
    size_t offset;
    io_error(const std::string& msg, size_t at)
        : std::runtime_error(msg + " (byte offset " + std::to_string(at) + ")"), offset(at) {}
};

namespace detail {

constexpr uint8_t kFormatVersion = 1;

inline constexpr char kMagicImage[7] = "CTIMG1";
inline constexpr char kMagicSinogram[7] = "CTSIN1";
inline constexpr char kMagicCounts[7] = "CTCNT1";
inline constexpr char kMagicBank[7] = "AFBPK1";
inline constexpr char kMagicNet[7] = {'S', 'P', 'N', 'N', '1', '\0', '\0'};

struct ByteWriter {
    std::string bytes;

    void put_magic(const char* magic) { bytes.append(magic, 6); }
    void put_u8(uint8_t v) { bytes.push_back(char(v)); }
    void put_u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(char((v >> (8 * i)) & 0xFF));
    }
    void put_i32(int32_t v) { put_u32(std::bit_cast<uint32_t>(v)); }
    void put_u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(char((v >> (8 * i)) & 0xFF));
    }
    void put_f64(double v) { put_u64(std::bit_cast<uint64_t>(v)); }
    void put_string(const std::string& s) {
        put_u32(uint32_t(s.size()));
        bytes += s;
    }
};

struct ByteReader {
    const std::string& bytes;
    size_t at = 0;

    explicit ByteReader(const std::string& b) : bytes(b) {}

    void need(size_t n, const char* what) const {
        if (at + n > bytes.size())
            throw io_error(std::string("truncated container while reading ") + what, at);
    }
    void expect_magic(const char* magic, const char* what) {
        need(6, "magic");
        if (std::memcmp(bytes.data(), magic, 6) != 0)
            throw io_error(std::string("bad magic, not a ") + what + " container", 0);
        at += 6;
    }
    uint8_t get_u8(const char* what) {
        need(1, what);
        return uint8_t(bytes[at++]);
    }
    uint32_t get_u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(bytes[at + size_t(i)])) << (8 * i);
        at += 4;
        return v;
    }
    int32_t get_i32(const char* what) { return std::bit_cast<int32_t>(get_u32(what)); }
    uint64_t get_u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(bytes[at + size_t(i)])) << (8 * i);
        at += 8;
        return v;
    }
    double get_f64(const char* what) { return std::bit_cast<double>(get_u64(what)); }
    std::string get_string(const char* what, size_t max_len = 4096) {
        const size_t at_len = at;
        const uint32_t len = get_u32(what);
        if (len > max_len) throw io_error(std::string(what) + " length overflow", at_len);
        need(len, what);
        std::string s = bytes.substr(at, len);
        at += len;
        return s;
    }
    void expect_version(const char* what) {
        const size_t here = at;
        const uint8_t v = get_u8("version");
        if (v != kFormatVersion)
            throw io_error(std::string("unsupported ") + what + " container version " +
                               std::to_string(int(v)),
                           here);
    }
    void expect_end(const char* what) const {
        if (at != bytes.size())
            throw io_error(std::string("trailing bytes after ") + what + " container", at);
    }
    uint32_t get_dim(const char* what, uint32_t lo, uint32_t hi) {
        const size_t here = at;
        const uint32_t v = get_u32(what);
        if (v < lo || v > hi)
            throw io_error(std::string(what) + " out of range (" + std::to_string(v) + ")", here);
        return v;
    }
};

inline void put_geometry(ByteWriter& w, const ScanGeometry& g) {
    w.put_u32(uint32_t(g.n_angles));
    w.put_u32(uint32_t(g.n_bins));
    w.put_f64(g.support_radius);
    w.put_u32(uint32_t(g.image_size));
    w.put_f64(g.fbp_norm);
}

inline ScanGeometry get_geometry(ByteReader& r) {
    ScanGeometry g;
    g.n_angles = int(r.get_dim("n_angles", 1, 1u << 20));
    g.n_bins = int(r.get_dim("n_bins", 2, 1u << 20));
    g.support_radius = r.get_f64("support_radius");
    g.image_size = int(r.get_dim("image_size", 1, 1u << 14));
    g.fbp_norm = r.get_f64("fbp_norm");
    if (!(g.support_radius > 0.0)) throw io_error("nonpositive support radius", r.at - 20);
    return g;
}

inline void put_payload(ByteWriter& w, const std::vector<double>& v) {
    for (double x : v) w.put_f64(x);
}

inline void get_payload(ByteReader& r, std::vector<double>& v, size_t n, const char* what) {
    v.resize(n);
    for (size_t i = 0; i < n; ++i) v[i] = r.get_f64(what);
}

}  // namespace detail

// ---- Image ----------------------------------------------------------------

inline std::string encode_image(const Image& f) {
    detail::ByteWriter w;
    w.put_magic(detail::kMagicImage);
    w.put_u8(detail::kFormatVersion);
    w.put_u32(uint32_t(f.size));
    detail::put_payload(w, f.v);
    return std::move(w.bytes);
}

inline Image decode_image(const std::string& bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic(detail::kMagicImage, "image");
    r.expect_version("image");
    const int size = int(r.get_dim("image size", 1, 1u << 14));
    Image f(size);
    detail::get_payload(r, f.v, size_t(size) * size, "image payload");
    r.expect_end("image");
    return f;
}

// ---- Sinogram / counts ----------------------------------------------------

namespace detail {

inline std::string encode_sino_like(const Sinogram& g, const char* magic) {
    ByteWriter w;
    w.put_magic(magic);
    w.put_u8(kFormatVersion);
    put_geometry(w, g.geom);
    put_payload(w, g.v);
    return std::move(w.bytes);
}

inline Sinogram decode_sino_like(const std::string& bytes, const char* magic, const char* what) {
    ByteReader r(bytes);
    r.expect_magic(magic, what);
    r.expect_version(what);
    ScanGeometry geom = get_geometry(r);
    Sinogram g(geom);
    get_payload(r, g.v, size_t(geom.n_angles) * geom.n_bins, "sinogram payload");
    r.expect_end(what);
    return g;
}

}  // namespace detail

inline std::string encode_sinogram(const Sinogram& g) {
    return detail::encode_sino_like(g, detail::kMagicSinogram);
}
inline Sinogram decode_sinogram(const std::string& bytes) {
    return detail::decode_sino_like(bytes, detail::kMagicSinogram, "sinogram");
}

/// Count grids reuse the sinogram layout under their own magic so the two
/// artifact kinds cannot be interchanged silently.
inline std::string encode_counts(const Sinogram& y) {
    return detail::encode_sino_like(y, detail::kMagicCounts);
}
inline Sinogram decode_counts(const std::string& bytes) {
    return detail::decode_sino_like(bytes, detail::kMagicCounts, "counts");
}

// ---- Kernel bank ------------------------------------------------------------

inline std::string encode_kernel_bank(const KernelBank& bank) {
    detail::ByteWriter w;
    w.put_magic(detail::kMagicBank);
    w.put_u8(detail::kFormatVersion);
    detail::put_geometry(w, bank.geom);
    w.put_f64(bank.roi.roi_radius);
    w.put_f64(bank.roi.measurement_radius);
    w.put_f64(bank.coverage);
    w.put_u32(uint32_t(bank.d));
    w.put_u32(uint32_t(bank.angle_extent));
    w.put_u32(uint32_t(bank.bins_extent));
    w.put_u32(uint32_t(bank.image_kernel_size));
    w.put_u8(bank.completed_input ? 1 : 0);
    w.put_string(bank.tag);
    for (const auto& k : bank.sino_kernels) detail::put_payload(w, k);
    detail::put_payload(w, bank.image_kernel);
    return std::move(w.bytes);
}

inline KernelBank decode_kernel_bank(const std::string& bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic(detail::kMagicBank, "kernel bank");
    r.expect_version("kernel bank");
    KernelBank bank;
    bank.geom = detail::get_geometry(r);
    const size_t roi_at = r.at;
    const double roi_radius = r.get_f64("roi radius");
    const double measured = r.get_f64("measurement radius");
    try {
        bank.roi = RoiSpec(roi_radius, measured);
    } catch (const std::exception& e) {
        throw io_error(std::string("bad region spec: ") + e.what(), roi_at);
    }
    bank.coverage = r.get_f64("coverage");
    bank.d = int(r.get_dim("segment count", 1, 64));
    bank.angle_extent = int(r.get_dim("angle extent", 1, 1u << 16));
    bank.bins_extent = int(r.get_dim("bins extent", 1, 1u << 16));
    bank.image_kernel_size = int(r.get_dim("image kernel size", 1, 1u << 12));
    bank.completed_input = r.get_u8("completed flag") != 0;
    bank.tag = r.get_string("bank tag");
    bank.sino_kernels.resize(size_t(bank.d));
    const size_t per_kernel = size_t(bank.angle_extent) * bank.bins_extent;
    for (auto& k : bank.sino_kernels) detail::get_payload(r, k, per_kernel, "kernel payload");
    detail::get_payload(r, bank.image_kernel,
                        size_t(bank.image_kernel_size) * bank.image_kernel_size,
                        "image kernel payload");
    r.expect_end("kernel bank");
    try {
        bank.validate();
    } catch (const std::exception& e) {
        throw io_error(std::string("inconsistent kernel bank: ") + e.what(), bytes.size());
    }
    return bank;
}

// ---- Fusion net -------------------------------------------------------------

inline std::string encode_fusion_net(const FusionNet& net) {
    detail::ByteWriter w;
    w.put_magic(detail::kMagicNet);
    w.put_u8(detail::kFormatVersion);
    w.put_u32(uint32_t(net.K));
    w.put_u32(uint32_t(net.N));
    w.put_u32(uint32_t(net.layout.n_estimates));
    w.put_u32(uint32_t(net.layout.best_index));
    w.put_u32(uint32_t(net.layout.neighborhood.size()));
    for (const auto& off : net.layout.neighborhood) {
        w.put_i32(off[0]);
        w.put_i32(off[1]);
    }
    detail::put_payload(w, net.norm.feat_lo);
    detail::put_payload(w, net.norm.feat_scale);
    w.put_f64(net.norm.target_lo);
    w.put_f64(net.norm.target_scale);
    detail::put_payload(w, net.w);
    detail::put_payload(w, net.v);
    w.put_u32(uint32_t(net.bank_tags.size()));
    for (const auto& tag : net.bank_tags) w.put_string(tag);
    return std::move(w.bytes);
}

inline FusionNet decode_fusion_net(const std::string& bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic(detail::kMagicNet, "fusion net");
    r.expect_version("fusion net");
    FusionNet net;
    net.K = int(r.get_dim("feature count", 1, 1u << 16));
    net.N = int(r.get_dim("neuron count", 1, 1u << 16));
    net.layout.n_estimates = int(r.get_dim("estimate count", 1, 1u << 12));
    net.layout.best_index = int(r.get_dim("best index", 0, uint32_t(net.layout.n_estimates) - 1));
    const uint32_t n_off = r.get_dim("neighborhood size", 1, 1024);
    net.layout.neighborhood.resize(n_off);
    for (auto& off : net.layout.neighborhood) {
        off[0] = r.get_i32("neighborhood dy");
        off[1] = r.get_i32("neighborhood dx");
    }
    detail::get_payload(r, net.norm.feat_lo, size_t(net.K), "normalization lows");
    detail::get_payload(r, net.norm.feat_scale, size_t(net.K), "normalization scales");
    net.norm.target_lo = r.get_f64("target low");
    net.norm.target_scale = r.get_f64("target scale");
    detail::get_payload(r, net.w, size_t(net.K + 1) * net.N, "hidden weights");
    detail::get_payload(r, net.v, size_t(net.N), "output weights");
    const uint32_t n_tags = r.get_dim("tag count", 0, 1u << 12);
    net.bank_tags.resize(n_tags);
    for (auto& tag : net.bank_tags) tag = r.get_string("bank tag");
    r.expect_end("fusion net");
    try {
        net.validate();
    } catch (const std::exception& e) {
        throw io_error(std::string("inconsistent fusion net: ") + e.what(), bytes.size());
    }
    return net;
}

// ---- Files ------------------------------------------------------------------

inline std::string load_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for reading", 0);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw io_error("read failure on '" + path + "'", bytes.size());
    return bytes;
}

inline void save_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path + "' for writing", 0);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw io_error("write failure on '" + path + "'", bytes.size());
}

inline void save_image(const std::string& path, const Image& f) {
    save_bytes(path, encode_image(f));
}
inline Image load_image(const std::string& path) { return decode_image(load_bytes(path)); }

inline void save_sinogram(const std::string& path, const Sinogram& g) {
    save_bytes(path, encode_sinogram(g));
}
inline Sinogram load_sinogram(const std::string& path) {
    return decode_sinogram(load_bytes(path));
}

inline void save_counts(const std::string& path, const Sinogram& y) {
    save_bytes(path, encode_counts(y));
}
inline Sinogram load_counts(const std::string& path) { return decode_counts(load_bytes(path)); }

/// JSON sidecar describing a bank's hyperparameters; written next to the
/// binary container for human inspection (the binary stays authoritative).
inline nlohmann::json kernel_bank_sidecar(const KernelBank& bank) {
    return nlohmann::json{
        {"angle_extent", bank.angle_extent},
        {"bins_extent", bank.bins_extent},
        {"completed_input", bank.completed_input},
        {"coverage", bank.coverage},
        {"geometry",
         {{"fbp_norm", bank.geom.fbp_norm},
          {"image_size", bank.geom.image_size},
          {"n_angles", bank.geom.n_angles},
          {"n_bins", bank.geom.n_bins},
          {"support_radius", bank.geom.support_radius}}},
        {"image_kernel_size", bank.image_kernel_size},
        {"roi", {{"measurement_radius", bank.roi.measurement_radius},
                 {"radius", bank.roi.roi_radius}}},
        {"segments", bank.d},
        {"tag", bank.tag}};
}

inline nlohmann::json fusion_net_sidecar(const FusionNet& net) {
    nlohmann::json offsets = nlohmann::json::array();
    for (const auto& off : net.layout.neighborhood) offsets.push_back({off[0], off[1]});
    return nlohmann::json{{"K", net.K},
                          {"N", net.N},
                          {"bank_tags", net.bank_tags},
                          {"layout",
                           {{"best_index", net.layout.best_index},
                            {"n_estimates", net.layout.n_estimates},
                            {"neighborhood", offsets}}}};
}

inline void write_json_sidecar(const std::string& artifact_path, const nlohmann::json& j) {
    save_bytes(artifact_path + ".json", j.dump(2) + "\n");
}

inline void save_kernel_bank(const std::string& path, const KernelBank& bank) {
    save_bytes(path, encode_kernel_bank(bank));
    write_json_sidecar(path, kernel_bank_sidecar(bank));
}
inline KernelBank load_kernel_bank(const std::string& path) {
    return decode_kernel_bank(load_bytes(path));
}

inline void save_fusion_net(const std::string& path, const FusionNet& net) {
    save_bytes(path, encode_fusion_net(net));
    write_json_sidecar(path, fusion_net_sidecar(net));
}
inline FusionNet load_fusion_net(const std::string& path) {
    return decode_fusion_net(load_bytes(path));
}

}  // namespace ctfusion
