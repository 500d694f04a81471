#include "groupreg/gumbel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace groupreg {

namespace {

void check_finite(const std::vector<double>& logits) {
    if (logits.empty()) throw std::invalid_argument("gumbel: empty logits");
    for (double l : logits)
        if (!std::isfinite(l)) throw std::invalid_argument("gumbel: non-finite logit");
}

double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

int argmax_index(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

int one_hot_index(const std::vector<double>& z) {
    int idx = -1;
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (z[k] == 1.0) {
            if (idx >= 0) throw std::invalid_argument("gumbel: not a one-hot vector");
            idx = static_cast<int>(k);
        } else if (z[k] != 0.0) {
            throw std::invalid_argument("gumbel: not a one-hot vector");
        }
    }
    if (idx < 0) throw std::invalid_argument("gumbel: not a one-hot vector");
    return idx;
}

}  // namespace

double gumbel_draw(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
    return -std::log(-std::log(u(rng)));
}

std::vector<double> softmax(const std::vector<double>& logits, double tau) {
    std::vector<double> y(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) y[k] = logits[k] / tau;
    const double lse = log_sum_exp(y);
    for (double& v : y) v = std::exp(v - lse);
    return y;
}

std::vector<double> gumbel_max_sample(const std::vector<double>& logits,
                                      std::mt19937_64& rng) {
    check_finite(logits);
    std::vector<double> shifted(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k)
        shifted[k] = logits[k] + gumbel_draw(rng);
    std::vector<double> z(logits.size(), 0.0);
    z[argmax_index(shifted)] = 1.0;
    return z;
}

std::vector<double> gumbel_max_sample(const std::vector<double>& logits, uint64_t seed) {
    std::mt19937_64 rng(seed);
    return gumbel_max_sample(logits, rng);
}

std::vector<double> conditional_gumbel_draw(const std::vector<double>& logits,
                                            const std::vector<double>& realized_one_hot,
                                            std::mt19937_64& rng) {
    check_finite(logits);
    if (realized_one_hot.size() != logits.size())
        throw std::invalid_argument("conditional_gumbel_draw: size mismatch");
    const int k_star = one_hot_index(realized_one_hot);
    const double logz = log_sum_exp(logits);
    std::exponential_distribution<double> expo(1.0);
    const double top = -std::log(expo(rng)) + logz;
    std::vector<double> g(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (static_cast<int>(k) == k_star) {
            g[k] = top;
        } else {
            g[k] = -std::log(expo(rng) * std::exp(-logits[k]) + std::exp(-top));
        }
    }
    return g;
}

std::vector<double> conditional_gumbel_draw(const std::vector<double>& logits,
                                            const std::vector<double>& realized_one_hot,
                                            uint64_t seed) {
    std::mt19937_64 rng(seed);
    return conditional_gumbel_draw(logits, realized_one_hot, rng);
}

std::vector<double> softmax_jacobian_vec(const std::vector<double>& shifted,
                                         double tau, const std::vector<double>& f_grad) {
    const std::vector<double> y = softmax(shifted, tau);
    double dot = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) dot += y[k] * f_grad[k];
    std::vector<double> out(y.size());
    for (std::size_t k = 0; k < y.size(); ++k)
        out[k] = y[k] * (f_grad[k] - dot) / tau;
    return out;
}

StGsResult st_gs_gradient(const std::vector<double>& f_grad,
                          const std::vector<double>& logits, double tau,
                          std::mt19937_64& rng) {
    check_finite(logits);
    if (!(tau > 0.0)) throw std::invalid_argument("st_gs_gradient: tau must be > 0");
    std::vector<double> shifted(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k)
        shifted[k] = logits[k] + gumbel_draw(rng);
    StGsResult res;
    res.sample.assign(logits.size(), 0.0);
    res.sample[argmax_index(shifted)] = 1.0;
    res.gradient = softmax_jacobian_vec(shifted, tau, f_grad);
    return res;
}

StGsResult st_gs_gradient(const std::vector<double>& f_grad,
                          const std::vector<double>& logits, double tau, uint64_t seed) {
    std::mt19937_64 rng(seed);
    return st_gs_gradient(f_grad, logits, tau, rng);
}

StGsResult gumbel_rao_gradient(const std::vector<double>& f_grad,
                               const std::vector<double>& logits,
                               const GumbelRaoConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    check_finite(logits);
    StGsResult res;
    res.sample = gumbel_max_sample(logits, rng);
    res.gradient.assign(logits.size(), 0.0);
    for (int s = 0; s < cfg.S; ++s) {
        const std::vector<double> g = conditional_gumbel_draw(logits, res.sample, rng);
        const std::vector<double> jv = softmax_jacobian_vec(g, cfg.tau, f_grad);
        for (std::size_t k = 0; k < jv.size(); ++k) res.gradient[k] += jv[k];
    }
    const double inv = 1.0 / cfg.S;
    for (double& v : res.gradient) v *= inv;
    return res;
}

StGsResult gumbel_rao_gradient(const std::vector<double>& f_grad,
                               const std::vector<double>& logits,
                               const GumbelRaoConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    return gumbel_rao_gradient(f_grad, logits, cfg, rng);
}

}  // namespace groupreg
