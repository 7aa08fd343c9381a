#pragma once

// Binary checkpoints, little-endian:
//
//   "LRF1" | u32 version | u8 stage | u64 seed | str config
//   field: i32 degree, i32 res[3], f64 bounds[6], f64 v[3], f64 density[V], f64 sh[V*3l]
//   u8 has_net, then per net: u8 activation, f64 b, u32 layers, and per layer
//     u32 out, u32 in, f64 W[out*in] (column-major), f64 K, f64 u[out], f64 v[in],
//     u8 has_bias, f64 bias[out]
//
// `str` is a u64 byte count followed by the bytes.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "liprf/common.hpp"
#include "liprf/field.hpp"
#include "liprf/lipnet.hpp"

namespace liprf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class Stage : std::uint8_t { Recon = 0, Liprf = 1 };

inline std::string to_string(Stage s) { return s == Stage::Recon ? "recon" : "liprf"; }

struct Checkpoint {
    Stage stage = Stage::Recon;
    std::uint64_t seed = 0;
    std::string config;  // JSON snapshot: training config, scene manifest and scene directory
    VoxelField field;
    std::optional<LipschitzNet> net;

    bool operator==(const Checkpoint&) const = default;
};

namespace detail {

class Writer {
public:
    template <class T>
    void put(const T& v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void put_doubles(const double* p, std::size_t n) {
        const auto* c = reinterpret_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n * sizeof(double));
    }
    void put_string(const std::string& s) {
        put<std::uint64_t>(s.size());
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    [[nodiscard]] const std::vector<char>& bytes() const { return buf_; }

private:
    std::vector<char> buf_;
};

class Reader {
public:
    explicit Reader(std::vector<char> data) : buf_(std::move(data)) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void get_doubles(double* p, std::size_t n) {
        if (n > (buf_.size() - pos_) / sizeof(double)) throw Error("checkpoint: truncated file");
        std::memcpy(p, buf_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
    }
    std::string get_string() {
        const auto n = get<std::uint64_t>();
        need(n);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    [[nodiscard]] bool done() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) const {
        if (n > buf_.size() - pos_) throw Error("checkpoint: truncated file");
    }
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

inline void put_field(Writer& w, const VoxelField& f) {
    w.put<std::int32_t>(f.degree());
    for (int r : f.resolution()) w.put<std::int32_t>(r);
    w.put_doubles(f.bounds().min.data(), 3);
    w.put_doubles(f.bounds().max.data(), 3);
    w.put_doubles(f.v_offset().data(), 3);
    w.put_doubles(f.density().data(), f.density().size());
    w.put_doubles(f.sh().data(), f.sh().size());
}

inline VoxelField get_field(Reader& r) {
    const int degree = r.get<std::int32_t>();
    std::array<int, 3> res{};
    for (int& n : res) {
        n = r.get<std::int32_t>();
        if (n < 2 || n > 4096) throw Error("checkpoint: corrupt field resolution");
    }
    Bounds b;
    Vec3 v;
    r.get_doubles(b.min.data(), 3);
    r.get_doubles(b.max.data(), 3);
    r.get_doubles(v.data(), 3);
    VoxelField f(res, b, degree, v);
    r.get_doubles(f.density().data(), f.density().size());
    r.get_doubles(f.sh().data(), f.sh().size());
    return f;
}

inline void put_net(Writer& w, const LipschitzNet& net) {
    w.put<std::uint8_t>(net.activation() == Activation::Sine ? 0 : 1);
    w.put<double>(net.b_sq());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(net.layer_count()));
    for (const auto& l : net.layers()) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.out_dim()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.in_dim()));
        w.put_doubles(l.W.data(), static_cast<std::size_t>(l.W.size()));
        w.put<double>(l.K);
        w.put_doubles(l.u.data(), static_cast<std::size_t>(l.u.size()));
        w.put_doubles(l.v.data(), static_cast<std::size_t>(l.v.size()));
        w.put<std::uint8_t>(l.has_bias ? 1 : 0);
        if (l.has_bias) w.put_doubles(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
}

inline LipschitzNet get_net(Reader& r) {
    const auto act = r.get<std::uint8_t>();
    if (act > 1) throw Error("checkpoint: unknown activation tag");
    const double b = r.get<double>();
    const auto n = r.get<std::uint32_t>();
    if (n == 0 || n > 1024) throw Error("checkpoint: corrupt layer count");
    std::vector<LipLayer> layers;
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto out = r.get<std::uint32_t>();
        const auto in = r.get<std::uint32_t>();
        if (out == 0 || in == 0 || out > 65536 || in > 65536) throw Error("checkpoint: corrupt layer shape");
        LipLayer l;
        l.W.resize(out, in);
        r.get_doubles(l.W.data(), static_cast<std::size_t>(l.W.size()));
        l.K = r.get<double>();
        l.u.resize(out);
        l.v.resize(in);
        r.get_doubles(l.u.data(), out);
        r.get_doubles(l.v.data(), in);
        l.has_bias = r.get<std::uint8_t>() != 0;
        if (l.has_bias) {
            l.bias.resize(out);
            r.get_doubles(l.bias.data(), out);
        }
        layers.push_back(std::move(l));
    }
    return {std::move(layers), act == 0 ? Activation::Sine : Activation::Relu, b};
}

}  // namespace detail

inline std::vector<char> serialize_checkpoint(const Checkpoint& c) {
    detail::Writer w;
    for (char ch : std::string("LRF1")) w.put(ch);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(c.stage));
    w.put<std::uint64_t>(c.seed);
    w.put_string(c.config);
    detail::put_field(w, c.field);
    w.put<std::uint8_t>(c.net ? 1 : 0);
    if (c.net) detail::put_net(w, *c.net);
    return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::vector<char> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "LRF1", 4) != 0) throw Error("not a checkpoint");
    detail::Reader r(std::move(bytes));
    for (int i = 0; i < 4; ++i) (void)r.get<char>();
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw Error("checkpoint: version mismatch (file " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    const auto stage = r.get<std::uint8_t>();
    if (stage > 1) throw Error("checkpoint: unknown stage tag");
    c.stage = static_cast<Stage>(stage);
    c.seed = r.get<std::uint64_t>();
    c.config = r.get_string();
    c.field = detail::get_field(r);
    if (r.get<std::uint8_t>() != 0) c.net = detail::get_net(r);
    if (!r.done()) throw Error("checkpoint: trailing bytes");
    if (c.stage == Stage::Liprf && !c.net) throw Error("checkpoint: stage-2 checkpoint without a network");
    return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(std::move(bytes));
}

}  // namespace liprf
