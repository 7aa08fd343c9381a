#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "liprf/common.hpp"

namespace liprf {

/// lr_end + ½(lr_start - lr_end)(1 + cos(pi * step / total)).
inline double cosine_lr(std::int64_t step, std::int64_t total, double lr_start, double lr_end) {
    if (step < 0 || step > total) throw Error("cosine_lr: step outside [0, total]");
    if (total == 0) return lr_start;
    const double frac = static_cast<double>(step) / static_cast<double>(total);
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(std::numbers::pi * frac));
}

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moments persist across calls to step().
class Adam {
public:
    Adam() = default;
    Adam(std::size_t n, AdamParams p = {}) : p_(p), m_(n, 0.0), v_(n, 0.0) {}

    [[nodiscard]] std::size_t size() const { return m_.size(); }
    [[nodiscard]] std::int64_t steps() const { return t_; }

    void step(std::span<double> params, std::span<const double> grads, double lr) {
        if (params.size() != m_.size() || grads.size() != m_.size()) throw Error("Adam: size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(p_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(p_.beta2, static_cast<double>(t_));
        const double step_size = lr / bc1;
        const double inv_sqrt_bc2 = 1.0 / std::sqrt(bc2);
        const auto n = static_cast<std::int64_t>(m_.size());
        const double b1 = p_.beta1, b2 = p_.beta2, eps = p_.eps;
        double* m = m_.data();
        double* v = v_.data();
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            const double g = grads[static_cast<std::size_t>(i)];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            params[static_cast<std::size_t>(i)] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
        }
    }

private:
    AdamParams p_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::int64_t t_ = 0;
};

}  // namespace liprf
