#ifndef GROUPREG_GUMBEL_HPP
#define GROUPREG_GUMBEL_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace groupreg {

struct GumbelRaoConfig {
    double tau = 1.0;  // softmax temperature
    int S = 3;         // inner Rao-Blackwellization sample count
    uint64_t seed = 0;

    void validate() const {
        if (!(tau > 0.0)) throw std::invalid_argument("GumbelRaoConfig: tau must be > 0");
        if (S < 1) throw std::invalid_argument("GumbelRaoConfig: S must be >= 1");
    }
};

// Standard Gumbel(0,1) draw: -log(-log(U)).
double gumbel_draw(std::mt19937_64& rng);

std::vector<double> softmax(const std::vector<double>& logits, double tau = 1.0);

// One-hot of argmax_k(g_k + logit_k).
std::vector<double> gumbel_max_sample(const std::vector<double>& logits,
                                      std::mt19937_64& rng);
std::vector<double> gumbel_max_sample(const std::vector<double>& logits, uint64_t seed);

// Gumbel posterior draw given the realized argmax class, via the
// truncated-Gumbel construction. Returns the shifted values G = g + logits.
//
// With Z = logsumexp(logits): the top value is T = -log(E_0) + Z with
// E_0 ~ Exp(1); every other class i gets
//   G_i = -log(E_i * exp(-logit_i) + exp(-T)),
// which is Gumbel(logit_i) truncated below T. The argmax of the output
// always equals the realized class.
std::vector<double> conditional_gumbel_draw(const std::vector<double>& logits,
                                            const std::vector<double>& realized_one_hot,
                                            std::mt19937_64& rng);
std::vector<double> conditional_gumbel_draw(const std::vector<double>& logits,
                                            const std::vector<double>& realized_one_hot,
                                            uint64_t seed);

// Gradient of f(softmax_tau(G)) w.r.t. the logits for a fixed shifted-Gumbel
// vector G: (1/tau) * (diag(y) - y y^T) f_grad with y = softmax_tau(G).
std::vector<double> softmax_jacobian_vec(const std::vector<double>& shifted,
                                         double tau, const std::vector<double>& f_grad);

struct StGsResult {
    std::vector<double> sample;    // one-hot forward sample
    std::vector<double> gradient;  // w.r.t. logits
};

// Straight-Through Gumbel-Softmax: forward one-hot sample, backward softmax
// relaxation of the same Gumbel draw.
StGsResult st_gs_gradient(const std::vector<double>& f_grad,
                          const std::vector<double>& logits, double tau,
                          std::mt19937_64& rng);
StGsResult st_gs_gradient(const std::vector<double>& f_grad,
                          const std::vector<double>& logits, double tau, uint64_t seed);

// Gumbel-Rao: averages S softmax Jacobian-vector products over Gumbel draws
// conditioned on the realized one-hot sample.
StGsResult gumbel_rao_gradient(const std::vector<double>& f_grad,
                               const std::vector<double>& logits,
                               const GumbelRaoConfig& cfg, std::mt19937_64& rng);
StGsResult gumbel_rao_gradient(const std::vector<double>& f_grad,
                               const std::vector<double>& logits,
                               const GumbelRaoConfig& cfg);

}  // namespace groupreg

#endif
