#pragma once

// Lipschitz-constrained MLP.
//
// Each linear layer is reparameterized as A = squareplus(K, b) * W / sigma(W),
// where sigma(W) = uᵀ W v is the power-iteration estimate of ‖W‖₂ with the
// persistent vectors (u, v) held fixed during differentiation. Hidden layers
// apply a 1-Lipschitz activation and carry no bias; only the output layer has
// a bias. Lip(f) <= prod_i ‖A_i‖₂ = prod_i squareplus(K_i, b) once (u, v) have
// converged.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#if defined(LIPRF_HAVE_LIBMVEC) && defined(__AVX2__)
#include <immintrin.h>
extern "C" __m256d _ZGVdN4v_sin(__m256d);
extern "C" __m256d _ZGVdN4v_cos(__m256d);
#define LIPRF_VECTOR_TRIG 1
#endif

#include "liprf/common.hpp"

namespace liprf {

namespace detail {

// Elementwise sin or cos over n doubles, through glibc's vector math when available.
template <bool Cos>
inline void trig(const double* in, double* out, std::size_t n) {
    std::size_t i = 0;
#ifdef LIPRF_VECTOR_TRIG
    for (; i + 4 <= n; i += 4) {
        const __m256d x = _mm256_loadu_pd(in + i);
        _mm256_storeu_pd(out + i, Cos ? _ZGVdN4v_cos(x) : _ZGVdN4v_sin(x));
    }
#endif
    for (; i < n; ++i) out[i] = Cos ? std::cos(in[i]) : std::sin(in[i]);
}

}  // namespace detail

enum class Activation { Sine, Relu };

inline std::string to_string(Activation a) { return a == Activation::Sine ? "sine" : "relu"; }
inline Activation parse_activation(const std::string& s) {
    if (s == "sine" || s == "sin") return Activation::Sine;
    if (s == "relu") return Activation::Relu;
    throw Error("unknown activation '" + s + "'");
}

/// ½(x + sqrt(x² + b)); strictly positive for b > 0.
inline double squareplus(double x, double b) { return 0.5 * (x + std::sqrt(x * x + b)); }
inline double squareplus_grad(double x, double b) {
    const double r = std::sqrt(x * x + b);
    return r == 0.0 ? (x >= 0.0 ? 1.0 : 0.0) : 0.5 * (1.0 + x / r);
}

struct PowerIteration {
    double sigma = 0.0;
    Eigen::VectorXd u;
    Eigen::VectorXd v;
};

/// `steps` rounds of v = Wᵀu/‖Wᵀu‖, u = Wv/‖Wv‖; sigma = uᵀWv.
/// A zero matrix yields sigma = 0 with u unchanged.
inline PowerIteration power_iter_norm(const Eigen::MatrixXd& W, const Eigen::VectorXd& u, int steps) {
    PowerIteration r;
    r.u = u;
    r.v = Eigen::VectorXd::Zero(W.cols());
    if (W.cwiseAbs().maxCoeff() == 0.0) return r;
    for (int s = 0; s < steps; ++s) {
        Eigen::VectorXd v = W.transpose() * r.u;
        const double nv = v.norm();
        if (nv == 0.0) break;
        v /= nv;
        Eigen::VectorXd un = W * v;
        const double nu = un.norm();
        if (nu == 0.0) break;
        r.v = v;
        r.u = un / nu;
    }
    r.sigma = r.u.dot(W * r.v);
    return r;
}

struct LipLayer {
    Eigen::MatrixXd W;  // out x in
    double K = 1.0;
    Eigen::VectorXd u;  // out
    Eigen::VectorXd v;  // in
    bool has_bias = false;
    Eigen::VectorXd bias;  // out (empty when has_bias is false)

    [[nodiscard]] int in_dim() const { return static_cast<int>(W.cols()); }
    [[nodiscard]] int out_dim() const { return static_cast<int>(W.rows()); }
    [[nodiscard]] double sigma() const { return u.dot(W * v); }

    bool operator==(const LipLayer& o) const {
        return W == o.W && K == o.K && u == o.u && v == o.v && has_bias == o.has_bias && bias == o.bias;
    }
};

struct NetConfig {
    int in_dim = 30;
    int out_dim = 27;
    int layers = 6;
    int width = 64;
    Activation activation = Activation::Sine;
    double b_sq = 1e-12;
    bool hidden_bias = false;
};

/// Per-layer inputs (post-activations) and pre-activations of one forward pass.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;  // inputs[i] feeds layer i
    std::vector<Eigen::MatrixXd> pre;     // pre[i] = A_i inputs[i] (+ bias)
    std::uint64_t revision = 0;
    [[nodiscard]] Eigen::Index batch() const { return inputs.empty() ? 0 : inputs.front().cols(); }
};

struct NetGradients {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<double> dK;
    std::vector<Eigen::VectorXd> dbias;

    NetGradients& operator+=(const NetGradients& o) {
        for (std::size_t i = 0; i < dW.size(); ++i) {
            dW[i] += o.dW[i];
            dK[i] += o.dK[i];
            if (dbias[i].size() > 0) dbias[i] += o.dbias[i];
        }
        return *this;
    }
    /// Flattened in parameter order (per layer: W column-major, K, bias).
    [[nodiscard]] std::vector<double> flatten() const {
        std::vector<double> out;
        for (std::size_t i = 0; i < dW.size(); ++i) {
            out.insert(out.end(), dW[i].data(), dW[i].data() + dW[i].size());
            out.push_back(dK[i]);
            out.insert(out.end(), dbias[i].data(), dbias[i].data() + dbias[i].size());
        }
        return out;
    }
};

class LipschitzNet {
public:
    LipschitzNet() = default;
    LipschitzNet(std::vector<LipLayer> layers, Activation act, double b_sq)
        : layers_(std::move(layers)), act_(act), b_sq_(b_sq) {
        validate();
    }

    /// Random initialization: W uniform in ±sqrt(6/in), K = k_init, zero bias,
    /// power-iteration vectors converged with 50 steps.
    static LipschitzNet create(const NetConfig& cfg, double k_init, std::uint64_t seed) {
        if (cfg.layers < 1) throw Error("network needs at least one layer");
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<LipLayer> layers;
        for (int i = 0; i < cfg.layers; ++i) {
            const int in = i == 0 ? cfg.in_dim : cfg.width;
            const int out = i + 1 == cfg.layers ? cfg.out_dim : cfg.width;
            const double lim = std::sqrt(6.0 / in);
            std::uniform_real_distribution<double> uni(-lim, lim);
            LipLayer l;
            l.W.resize(out, in);
            for (Eigen::Index c = 0; c < l.W.cols(); ++c)
                for (Eigen::Index r = 0; r < l.W.rows(); ++r) l.W(r, c) = uni(rng);
            l.K = k_init;
            l.u.resize(out);
            for (Eigen::Index r = 0; r < out; ++r) l.u[r] = normal(rng);
            l.u.normalize();
            l.v = Eigen::VectorXd::Zero(in);
            l.has_bias = (i + 1 == cfg.layers) || cfg.hidden_bias;
            if (l.has_bias) l.bias = Eigen::VectorXd::Zero(out);
            layers.push_back(std::move(l));
        }
        LipschitzNet net(std::move(layers), cfg.activation, cfg.b_sq);
        net.refresh_spectral(50);
        return net;
    }

    [[nodiscard]] const std::vector<LipLayer>& layers() const { return layers_; }
    [[nodiscard]] std::size_t layer_count() const { return layers_.size(); }
    [[nodiscard]] Activation activation() const { return act_; }
    [[nodiscard]] double b_sq() const { return b_sq_; }
    [[nodiscard]] int in_dim() const { return layers_.front().in_dim(); }
    [[nodiscard]] int out_dim() const { return layers_.back().out_dim(); }
    [[nodiscard]] std::uint64_t revision() const { return revision_; }

    /// Mutable access for tests and checkpoint loading; bumps the revision.
    LipLayer& layer(std::size_t i) {
        ++revision_;
        return layers_.at(i);
    }

    /// Advances every layer's persistent power-iteration vectors by `steps`.
    void refresh_spectral(int steps) {
        for (auto& l : layers_) {
            const PowerIteration p = power_iter_norm(l.W, l.u, steps);
            l.u = p.u;
            l.v = p.v;
        }
        ++revision_;
    }

    /// squareplus(K, b) * W / sigma(W).
    [[nodiscard]] Eigen::MatrixXd effective_weight(std::size_t i) const {
        const LipLayer& l = layers_.at(i);
        const double s = l.sigma();
        if (!(s > 0.0)) throw Error("effective_weight: spectral estimate is zero");
        return (squareplus(l.K, b_sq_) / s) * l.W;
    }

    /// Applies the network to a batch (one column per sample).
    [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& x, ForwardCache* cache = nullptr) const {
        if (x.rows() != in_dim()) throw Error("forward: input dimension mismatch");
        if (cache != nullptr) {
            cache->inputs.clear();
            cache->pre.clear();
            cache->revision = revision_;
        }
        Eigen::MatrixXd a = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const LipLayer& l = layers_[i];
            Eigen::MatrixXd z = effective_weight(i) * a;
            if (l.has_bias) z.colwise() += l.bias;
            if (cache != nullptr) cache->inputs.push_back(std::move(a));
            if (i + 1 == layers_.size()) {
                if (cache != nullptr) cache->pre.push_back(z);
                return z;
            }
            a = activate(z);
            if (cache != nullptr) cache->pre.push_back(std::move(z));
        }
        return a;
    }

    /// Reverse-mode gradients of sum(grad_out ⊙ f(x)) with respect to W_i, K_i and the biases.
    [[nodiscard]] NetGradients backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_out) const {
        if (cache.revision != revision_ || cache.inputs.size() != layers_.size()) {
            throw Error("backward: stale forward cache");
        }
        if (grad_out.rows() != out_dim() || grad_out.cols() != cache.batch()) {
            throw Error("backward: gradient shape mismatch");
        }
        NetGradients g = zero_gradients();
        Eigen::MatrixXd delta = grad_out;  // dL/d(pre) of the current layer
        for (std::size_t i = layers_.size(); i-- > 0;) {
            const LipLayer& l = layers_[i];
            const double sig = l.sigma();
            const double s = squareplus(l.K, b_sq_);
            const Eigen::MatrixXd gA = delta * cache.inputs[i].transpose();
            const double gw = (gA.array() * l.W.array()).sum();  // <G_A, W>
            g.dW[i] = (s / sig) * gA - (s * gw / (sig * sig)) * (l.u * l.v.transpose());
            g.dK[i] = squareplus_grad(l.K, b_sq_) * gw / sig;
            if (l.has_bias) g.dbias[i] = delta.rowwise().sum();
            if (i == 0) break;
            Eigen::MatrixXd back = effective_weight(i).transpose() * delta;
            delta = back.cwiseProduct(activate_grad(cache.pre[i - 1]));
        }
        return g;
    }

    [[nodiscard]] NetGradients zero_gradients() const {
        NetGradients g;
        for (const auto& l : layers_) {
            g.dW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
            g.dK.push_back(0.0);
            g.dbias.push_back(l.has_bias ? Eigen::VectorXd::Zero(l.out_dim()) : Eigen::VectorXd());
        }
        return g;
    }

    /// prod_i squareplus(K_i, b).
    [[nodiscard]] double lipschitz_constant() const {
        double k = 1.0;
        for (const auto& l : layers_) k *= squareplus(l.K, b_sq_);
        return k;
    }

    /// prod_i ‖A_i‖₂ with each norm re-estimated by `steps` power iterations.
    [[nodiscard]] double measured_lipschitz(int steps = 50) const {
        double k = 1.0;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const Eigen::MatrixXd a = effective_weight(i);
            k *= power_iter_norm(a, layers_[i].u, steps).sigma;
        }
        return k;
    }

    /// sum_i squareplus(K_i - K_est^(1/l), b).
    [[nodiscard]] double lip_reg_loss(double k_est) const {
        const double target = lip_target(k_est);
        double loss = 0.0;
        for (const auto& l : layers_) loss += squareplus(l.K - target, b_sq_);
        return loss;
    }

    /// Adds scale * d(lip_reg_loss)/dK_i into `g`.
    void add_lip_reg_grad(double k_est, double scale, NetGradients& g) const {
        const double target = lip_target(k_est);
        for (std::size_t i = 0; i < layers_.size(); ++i)
            g.dK[i] += scale * squareplus_grad(layers_[i].K - target, b_sq_);
    }

    [[nodiscard]] double lip_target(double k_est) const {
        if (k_est < 0.0) throw Error("K_est must be non-negative");
        return std::pow(k_est, 1.0 / static_cast<double>(layers_.size()));
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.W.size()) + 1 + static_cast<std::size_t>(l.bias.size());
        return n;
    }

    [[nodiscard]] std::vector<double> parameters() const {
        std::vector<double> out;
        out.reserve(parameter_count());
        for (const auto& l : layers_) {
            out.insert(out.end(), l.W.data(), l.W.data() + l.W.size());
            out.push_back(l.K);
            out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
        }
        return out;
    }

    void set_parameters(std::span<const double> p) {
        if (p.size() != parameter_count()) throw Error("set_parameters: size mismatch");
        std::size_t o = 0;
        for (auto& l : layers_) {
            std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(o), l.W.size(), l.W.data());
            o += static_cast<std::size_t>(l.W.size());
            l.K = p[o++];
            std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(o), l.bias.size(), l.bias.data());
            o += static_cast<std::size_t>(l.bias.size());
        }
        ++revision_;
    }

    bool operator==(const LipschitzNet& o) const {
        return layers_ == o.layers_ && act_ == o.act_ && b_sq_ == o.b_sq_;
    }

private:
    void validate() const {
        if (layers_.empty()) throw Error("network needs at least one layer");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const LipLayer& l = layers_[i];
            if (l.u.size() != l.W.rows() || l.v.size() != l.W.cols()) throw Error("layer power-iteration vector size");
            if (l.has_bias != (l.bias.size() > 0) || (l.has_bias && l.bias.size() != l.W.rows())) {
                throw Error("layer bias size");
            }
            if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) throw Error("layer dimensions do not chain");
        }
    }

    [[nodiscard]] Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
        if (act_ == Activation::Relu) return z.cwiseMax(0.0);
        Eigen::MatrixXd a(z.rows(), z.cols());
        detail::trig<false>(z.data(), a.data(), static_cast<std::size_t>(z.size()));
        return a;
    }
    [[nodiscard]] Eigen::MatrixXd activate_grad(const Eigen::MatrixXd& z) const {
        if (act_ == Activation::Relu) return (z.array() > 0.0).cast<double>();
        Eigen::MatrixXd a(z.rows(), z.cols());
        detail::trig<true>(z.data(), a.data(), static_cast<std::size_t>(z.size()));
        return a;
    }

    std::vector<LipLayer> layers_;
    Activation act_ = Activation::Sine;
    double b_sq_ = 1e-12;
    std::uint64_t revision_ = 0;
};

}  // namespace liprf
