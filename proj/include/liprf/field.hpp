#pragma once

// Dense voxel radiance field: per-vertex density and 3 x l spherical-harmonic
// coefficients, trilinearly interpolated; color = F_sh(x) * basis(d) + v.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "liprf/common.hpp"

namespace liprf {

inline constexpr int kMaxShDegree = 2;
inline constexpr int kMaxShCoeffs = 9;

/// Real SH constants, Condon-Shortley convention.
namespace sh_const {
inline constexpr double c0 = 0.28209479177387814;  // 1 / (2 sqrt(pi))
inline constexpr double c1 = 0.4886025119029199;
inline constexpr double c2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                 -1.0925484305920792, 0.5462742152960396};
}  // namespace sh_const

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

using ShBasis = std::array<double, kMaxShCoeffs>;

/// Real spherical-harmonic basis values up to `degree` for a unit direction.
/// Only the first sh_coeff_count(degree) entries are meaningful.
inline ShBasis eval_sh_basis(const Vec3& d, int degree) {
    if (degree < 0 || degree > kMaxShDegree) throw Error("unsupported SH degree " + std::to_string(degree));
    if (std::abs(d.norm() - 1.0) > 1e-6) throw Error("eval_sh_basis: direction is not unit length");
    ShBasis b{};
    b[0] = sh_const::c0;
    if (degree >= 1) {
        const double x = d.x(), y = d.y(), z = d.z();
        b[1] = -sh_const::c1 * y;
        b[2] = sh_const::c1 * z;
        b[3] = -sh_const::c1 * x;
        if (degree >= 2) {
            b[4] = sh_const::c2[0] * x * y;
            b[5] = sh_const::c2[1] * y * z;
            b[6] = sh_const::c2[2] * (2.0 * z * z - x * x - y * y);
            b[7] = sh_const::c2[3] * x * z;
            b[8] = sh_const::c2[4] * (x * x - y * y);
        }
    }
    return b;
}

/// 3 x l coefficient matrix, row-major so it maps the per-vertex storage directly.
using ShMat = Eigen::Matrix<double, 3, Eigen::Dynamic, Eigen::RowMajor>;

struct FieldSample {
    double density = 0.0;
    ShMat sh;
    bool inside = false;
};

/// Trilinear cell lookup: base vertex index and fractional offsets within the cell.
struct CellLocation {
    std::int64_t base = 0;
    double fx = 0.0, fy = 0.0, fz = 0.0;
    bool inside = false;
};

class VoxelField {
public:
    VoxelField() = default;

    VoxelField(std::array<int, 3> resolution, Bounds bounds, int degree = 2,
               Vec3 v_offset = Vec3::Constant(0.5))
        : res_(resolution), bounds_(bounds), degree_(degree), v_(v_offset) {
        if (degree < 0 || degree > kMaxShDegree) throw Error("unsupported SH degree " + std::to_string(degree));
        for (int n : res_)
            if (n < 2) throw Error("voxel field needs at least 2 vertices per axis");
        if ((bounds.max.array() <= bounds.min.array()).any()) throw Error("voxel field bounds are empty");
        density_.assign(static_cast<std::size_t>(vertex_count()), 0.0);
        sh_.assign(static_cast<std::size_t>(vertex_count() * coeffs_per_vertex()), 0.0);
    }

    [[nodiscard]] const std::array<int, 3>& resolution() const { return res_; }
    [[nodiscard]] const Bounds& bounds() const { return bounds_; }
    [[nodiscard]] int degree() const { return degree_; }
    [[nodiscard]] int sh_count() const { return sh_coeff_count(degree_); }
    [[nodiscard]] int coeffs_per_vertex() const { return 3 * sh_count(); }
    [[nodiscard]] std::int64_t vertex_count() const {
        return static_cast<std::int64_t>(res_[0]) * res_[1] * res_[2];
    }
    [[nodiscard]] const Vec3& v_offset() const { return v_; }
    void set_v_offset(const Vec3& v) { v_ = v; }

    [[nodiscard]] std::int64_t index(int i, int j, int k) const {
        return (static_cast<std::int64_t>(k) * res_[1] + j) * res_[0] + i;
    }
    [[nodiscard]] std::array<int, 3> coords(std::int64_t idx) const {
        const int i = static_cast<int>(idx % res_[0]);
        const int j = static_cast<int>((idx / res_[0]) % res_[1]);
        const int k = static_cast<int>(idx / (static_cast<std::int64_t>(res_[0]) * res_[1]));
        return {i, j, k};
    }
    [[nodiscard]] Vec3 vertex_position(std::int64_t idx) const {
        const auto c = coords(idx);
        Vec3 p;
        for (int a = 0; a < 3; ++a)
            p[a] = bounds_.min[a] + (bounds_.max[a] - bounds_.min[a]) * c[a] / (res_[a] - 1);
        return p;
    }
    /// Vertex position normalized to [0,1]^3 by the grid bounds.
    [[nodiscard]] Vec3 normalized_position(std::int64_t idx) const {
        const auto c = coords(idx);
        return {static_cast<double>(c[0]) / (res_[0] - 1), static_cast<double>(c[1]) / (res_[1] - 1),
                static_cast<double>(c[2]) / (res_[2] - 1)};
    }

    std::vector<double>& density() { return density_; }
    [[nodiscard]] const std::vector<double>& density() const { return density_; }
    std::vector<double>& sh() { return sh_; }
    [[nodiscard]] const std::vector<double>& sh() const { return sh_; }

    double* sh_at(std::int64_t v) { return sh_.data() + v * coeffs_per_vertex(); }
    [[nodiscard]] const double* sh_at(std::int64_t v) const { return sh_.data() + v * coeffs_per_vertex(); }

    /// Corner offsets of a cell relative to its base vertex, in (dx,dy,dz) bit order.
    [[nodiscard]] std::array<std::int64_t, 8> corner_offsets() const {
        const std::int64_t sx = 1, sy = res_[0], sz = static_cast<std::int64_t>(res_[0]) * res_[1];
        return {0, sx, sy, sx + sy, sz, sz + sx, sz + sy, sz + sx + sy};
    }

    /// Locates the cell containing `x`. Points within 1e-9 (grid units) of the
    /// boundary are snapped inside.
    [[nodiscard]] CellLocation locate(const Vec3& x) const {
        CellLocation loc;
        std::array<int, 3> base{};
        std::array<double, 3> frac{};
        for (int a = 0; a < 3; ++a) {
            double g = (x[a] - bounds_.min[a]) / (bounds_.max[a] - bounds_.min[a]) * (res_[a] - 1);
            if (!(g >= -1e-9 && g <= res_[a] - 1 + 1e-9)) return loc;
            g = std::clamp(g, 0.0, static_cast<double>(res_[a] - 1));
            int b = static_cast<int>(std::floor(g));
            if (b > res_[a] - 2) b = res_[a] - 2;
            base[a] = b;
            frac[a] = g - b;
        }
        loc.base = index(base[0], base[1], base[2]);
        loc.fx = frac[0];
        loc.fy = frac[1];
        loc.fz = frac[2];
        loc.inside = true;
        return loc;
    }

    bool operator==(const VoxelField&) const = default;

private:
    std::array<int, 3> res_{2, 2, 2};
    Bounds bounds_;
    int degree_ = 2;
    Vec3 v_ = Vec3::Constant(0.5);
    std::vector<double> density_;
    std::vector<double> sh_;
};

/// Trilinear weights of the 8 cell corners in corner_offsets() order.
inline std::array<double, 8> trilinear_weights(double fx, double fy, double fz) {
    const double gx = 1.0 - fx, gy = 1.0 - fy, gz = 1.0 - fz;
    return {gx * gy * gz, fx * gy * gz, gx * fy * gz, fx * fy * gz,
            gx * gy * fz, fx * gy * fz, gx * fy * fz, fx * fy * fz};
}

/// Trilinear interpolation of density and SH coefficients at a world point.
inline FieldSample sample_field(const VoxelField& field, const Vec3& x) {
    FieldSample s;
    s.sh = ShMat::Zero(3, field.sh_count());
    const CellLocation loc = field.locate(x);
    if (!loc.inside) return s;
    s.inside = true;
    const auto off = field.corner_offsets();
    const auto w = trilinear_weights(loc.fx, loc.fy, loc.fz);
    const int n = field.coeffs_per_vertex();
    for (int c = 0; c < 8; ++c) {
        const std::int64_t v = loc.base + off[c];
        s.density += w[c] * field.density()[static_cast<std::size_t>(v)];
        const double* src = field.sh_at(v);
        for (int q = 0; q < n; ++q) s.sh.data()[q] += w[c] * src[q];
    }
    return s;
}

/// Contracts a flat 3*l coefficient block with a basis: returns F_sh * basis (no offset).
inline Vec3 contract_sh(const double* coeffs, const ShBasis& basis, int l) {
    Vec3 c = Vec3::Zero();
    for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int k = 0; k < l; ++k) acc += coeffs[ch * l + k] * basis[static_cast<std::size_t>(k)];
        c[ch] = acc;
    }
    return c;
}

/// c = F_sh(x) * basis(d) + v, unclamped.
inline Vec3 eval_color(const VoxelField& field, const Vec3& x, const Vec3& d) {
    const ShBasis basis = eval_sh_basis(d, field.degree());
    const FieldSample s = sample_field(field, x);
    return contract_sh(s.sh.data(), basis, field.sh_count()) + field.v_offset();
}

/// Per-vertex SH transform g(sh, world position) -> sh. Density, bounds and
/// resolution are copied; the source field is not modified.
inline VoxelField map_sh(const VoxelField& field, const std::function<ShMat(const ShMat&, const Vec3&)>& g) {
    VoxelField out = field;
    const int l = field.sh_count();
    for (std::int64_t v = 0; v < field.vertex_count(); ++v) {
        const ShMat in = Eigen::Map<const ShMat>(field.sh_at(v), 3, l);
        const ShMat res = g(in, field.vertex_position(v));
        if (res.rows() != 3 || res.cols() != l) throw Error("map_sh: transform changed the coefficient shape");
        if (!res.allFinite()) throw Error("map_sh: transform produced non-finite coefficients");
        Eigen::Map<ShMat>(out.sh_at(v), 3, l) = res;
    }
    return out;
}

/// Projects densities onto [0, inf).
inline void clamp_density(VoxelField& field) {
    for (double& s : field.density())
        if (s < 0.0) s = 0.0;
}

}  // namespace liprf
