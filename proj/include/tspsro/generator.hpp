#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tspsro/errors.hpp"
#include "tspsro/mixed_strategy.hpp"
#include "tspsro/nn.hpp"
#include "tspsro/rng.hpp"
#include "tspsro/tsp.hpp"

namespace tspsro {

constexpr int kAttackHiddenDim = 128;
constexpr double kDefaultLambda = 1.0 / 3.0;
constexpr double kLogDensityFloor = -690.77552789821368;  // log(1e-300)

// Adversarial instance distribution: a categorical over problem scales
// (logits gamma_N over `support`) plus a pointwise attack net gamma_C
// (2 -> 128 relu -> 2 sigmoid) whose output, scaled by lambda, is the
// per-coordinate Gaussian noise VARIANCE.
struct GeneratorPolicy {
    std::vector<double> gamma_N;
    std::vector<int> support;
    DenseNet gamma_C;
    double lambda = kDefaultLambda;
    int id = -1;
};

inline void validate_generator(const GeneratorPolicy& g) {
    if (g.support.empty() || g.gamma_N.size() != g.support.size()) {
        throw InvalidParameter("validate_generator: scale support and gamma_N must align and be non-empty");
    }
    for (int n : g.support) check_instance_size(n);
    if (!(g.lambda > 0.0) || g.lambda > 1.0) {
        throw InvalidParameter("validate_generator: lambda must be in (0, 1]");
    }
    validate_net(g.gamma_C);
    if (g.gamma_C.input_dim() != 2 || g.gamma_C.output_dim() != 2) {
        throw ShapeError("validate_generator: attack net must map 2 -> 2");
    }
}

// Identity attack: zero weights with a large negative output bias, so the
// sigmoid saturates near 0 and the noise variance is ~4e-18 * lambda.
// Scale logits start at zero (uniform over the support).
inline GeneratorPolicy make_generator_identity(const std::vector<int>& support,
                                               double lambda = kDefaultLambda, int id = -1) {
    GeneratorPolicy g;
    g.support = support;
    g.gamma_N.assign(support.size(), 0.0);
    g.lambda = lambda;
    g.id = id;
    DenseLayer hidden;
    hidden.in_dim = 2;
    hidden.out_dim = kAttackHiddenDim;
    hidden.act = Activation::relu;
    hidden.W.assign(2 * kAttackHiddenDim, 0.0);
    hidden.b.assign(kAttackHiddenDim, 0.0);
    DenseLayer out;
    out.in_dim = kAttackHiddenDim;
    out.out_dim = 2;
    out.act = Activation::sigmoid;
    out.W.assign(kAttackHiddenDim * 2, 0.0);
    out.b.assign(2, -40.0);
    g.gamma_C.layers = {std::move(hidden), std::move(out)};
    validate_generator(g);
    return g;
}

inline GeneratorPolicy make_generator_random(const std::vector<int>& support, Rng& rng,
                                             double lambda = kDefaultLambda, int id = -1) {
    GeneratorPolicy g;
    g.support = support;
    g.gamma_N.assign(support.size(), 0.0);
    g.lambda = lambda;
    g.id = id;
    g.gamma_C = make_net({2, kAttackHiddenDim, 2}, {Activation::relu, Activation::sigmoid}, rng);
    validate_generator(g);
    return g;
}

struct ScaleSample {
    int n = 0;
    int index = 0;
    double log_prob = 0.0;
};

inline ScaleSample sample_scale(const GeneratorPolicy& g, Rng& rng) {
    const std::vector<double> p = softmax(g.gamma_N);
    const std::size_t idx = rng.categorical(p);
    return {g.support[idx], static_cast<int>(idx), std::log(p[idx])};
}

// d log softmax(gamma_N)[index] / d gamma_N = e_index - softmax(gamma_N).
inline std::vector<double> grad_log_scale_prob(const GeneratorPolicy& g, int index) {
    if (index < 0 || index >= static_cast<int>(g.gamma_N.size())) {
        throw InvalidParameter("grad_log_scale_prob: index out of range");
    }
    std::vector<double> grad = softmax(g.gamma_N);
    for (double& v : grad) v = -v;
    grad[static_cast<std::size_t>(index)] += 1.0;
    return grad;
}

using VarianceMatrix = std::vector<std::array<double, 2>>;

// Sigma = lambda * f_gammaC(point), applied pointwise; entries in (0, lambda).
inline VarianceMatrix attack_variance(const GeneratorPolicy& g, const Instance& inst) {
    if (g.gamma_C.input_dim() != 2 || g.gamma_C.output_dim() != 2) {
        throw ShapeError("attack_variance: attack net must map 2 -> 2");
    }
    VarianceMatrix sigma2(inst.points.size());
    for (std::size_t i = 0; i < inst.points.size(); ++i) {
        const std::vector<double> out = forward(g.gamma_C, {inst.points[i].x, inst.points[i].y});
        sigma2[i] = {g.lambda * out[0], g.lambda * out[1]};
    }
    return sigma2;
}

// One attacked instance: base -> Gaussian noise per Sigma -> renormalize.
// Raw (pre-normalization) values are kept for density computation.
struct AttackSample {
    Instance base;      // normalized pre-perturbation instance
    VarianceMatrix sigma2;
    VarianceMatrix raw;  // base + noise, before renormalization
    Instance attacked;   // normalized perturbed instance
};

// Noise draw order is pinned: for each point, the x coordinate's noise is
// drawn before the y coordinate's.
inline AttackSample perturb(const Instance& base, const VarianceMatrix& sigma2, Rng& rng) {
    if (sigma2.size() != base.points.size()) throw ShapeError("perturb: variance shape mismatch");
    AttackSample s;
    s.base = base;
    s.sigma2 = sigma2;
    s.raw.resize(base.points.size());
    Instance raw_inst;
    raw_inst.points.resize(base.points.size());
    for (std::size_t i = 0; i < base.points.size(); ++i) {
        const double ex = rng.normal(0.0, std::sqrt(sigma2[i][0]));
        const double ey = rng.normal(0.0, std::sqrt(sigma2[i][1]));
        s.raw[i] = {base.points[i].x + ex, base.points[i].y + ey};
        raw_inst.points[i] = {s.raw[i][0], s.raw[i][1]};
    }
    s.attacked = normalize(raw_inst);
    return s;
}

inline AttackSample sample_attacked(const GeneratorPolicy& g, int n, Rng& rng) {
    const Instance base = normalize(generate_uniform(n, rng));
    return perturb(base, attack_variance(g, base), rng);
}

// Bounded resampling around the (vanishingly rare) degenerate-normalization
// failure; gives evaluation loops a total-function contract.
inline AttackSample sample_attacked_with_retry(const GeneratorPolicy& g, int n, Rng& rng,
                                               int max_retries = 16) {
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        try {
            return sample_attacked(g, n, rng);
        } catch (const DegenerateInstance&) {
            continue;
        }
    }
    throw DegenerateInstance("sample_attacked_with_retry: exhausted " +
                             std::to_string(max_retries) + " retries");
}

enum class DensityMode { closed_form, monte_carlo };

namespace detail {

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double std_normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

}  // namespace detail

// Density of Z = X + Y with X ~ U(0,1), Y ~ N(0, sigma2):
//   closed form  p(z) = Phi(z/sigma) - Phi((z-1)/sigma)
//   monte_carlo  (1/K) sum_k N(z; x_k, sigma2), x_k uniform in [0,1]
//                (stratified: x_k = (k + u_k)/K, still uniform marginally,
//                 tightens the estimate enough for small sigma).
inline double convolution_density(double z, double sigma2, DensityMode mode = DensityMode::closed_form,
                                  Rng* rng = nullptr, int K = 10000) {
    if (!(sigma2 > 0.0)) throw InvalidParameter("convolution_density: sigma2 must be positive");
    if (mode == DensityMode::closed_form) {
        const double sigma = std::sqrt(sigma2);
        return detail::std_normal_cdf(z / sigma) - detail::std_normal_cdf((z - 1.0) / sigma);
    }
    if (!rng) throw InvalidParameter("convolution_density: monte_carlo mode needs an rng");
    if (K < 1) throw InvalidParameter("convolution_density: K must be positive");
    const double sigma = std::sqrt(sigma2);
    double acc = 0.0;
    for (int k = 0; k < K; ++k) {
        const double x = (static_cast<double>(k) + rng->uniform01()) / static_cast<double>(K);
        acc += detail::std_normal_pdf((z - x) / sigma) / sigma;
    }
    return acc / static_cast<double>(K);
}

// d p / d sigma, for the closed form above.
inline double convolution_density_dsigma(double z, double sigma) {
    return -(z / (sigma * sigma)) * detail::std_normal_pdf(z / sigma) +
           ((z - 1.0) / (sigma * sigma)) * detail::std_normal_pdf((z - 1.0) / sigma);
}

struct LogProbResult {
    double total = 0.0;                 // sum over points and axes of log p
    VarianceMatrix sigma2;              // recomputed from gamma_C and the base
    VarianceMatrix log_density;         // per-coordinate log p
    VarianceMatrix dlogp_dsigma2;       // per-coordinate d log p / d sigma2
    long clamped = 0;                   // coordinates hit by the underflow floor
};

// Sum of per-coordinate log-densities of the raw perturbed values under the
// independence assumption, with the density's sigma2 recomputed from the
// BASE instance. Underflowed densities are clamped at log(1e-300) with the
// derivative zeroed, and counted.
inline LogProbResult log_prob_attacked(const GeneratorPolicy& g, const Instance& base,
                                       const VarianceMatrix& raw) {
    if (raw.size() != base.points.size()) throw ShapeError("log_prob_attacked: raw shape mismatch");
    LogProbResult r;
    r.sigma2 = attack_variance(g, base);
    r.log_density.resize(raw.size());
    r.dlogp_dsigma2.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        for (int d = 0; d < 2; ++d) {
            const double z = raw[i][static_cast<std::size_t>(d)];
            const double s2 = r.sigma2[i][static_cast<std::size_t>(d)];
            const double sigma = std::sqrt(s2);
            const double p = convolution_density(z, s2);
            double logp;
            double dlogp;
            if (p < 1e-300) {
                logp = kLogDensityFloor;
                dlogp = 0.0;
                r.clamped += 1;
            } else {
                logp = std::log(p);
                // chain rule through sigma: d/d sigma2 = (d/d sigma) / (2 sigma)
                dlogp = convolution_density_dsigma(z, sigma) / (2.0 * sigma * p);
            }
            r.log_density[i][static_cast<std::size_t>(d)] = logp;
            r.dlogp_dsigma2[i][static_cast<std::size_t>(d)] = dlogp;
            r.total += logp;
        }
    }
    return r;
}

// Gradient of sum_i log P_C(raw_i) w.r.t. the attack-net parameters,
// accumulated into `grads` with weight `scale`. The chain runs
// log p -> sigma2 -> sigma2 = lambda * net output.
inline LogProbResult attack_logprob_gradient(const GeneratorPolicy& g, const Instance& base,
                                             const VarianceMatrix& raw, NetGrads& grads,
                                             double scale = 1.0) {
    LogProbResult r = log_prob_attacked(g, base, raw);
    for (std::size_t i = 0; i < base.points.size(); ++i) {
        ForwardCache cache;
        forward(g.gamma_C, {base.points[i].x, base.points[i].y}, &cache);
        const std::vector<double> out_grad = {
            scale * r.dlogp_dsigma2[i][0] * g.lambda,
            scale * r.dlogp_dsigma2[i][1] * g.lambda,
        };
        backward(g.gamma_C, cache, out_grad, grads);
    }
    return r;
}

}  // namespace tspsro
