#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "groupreg/gumbel.hpp"

using namespace groupreg;

namespace {

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_CASE("softmax lies on the simplex and preserves the argmax") {
    std::vector<double> logits = {0.3, -1.2, 2.0, 0.0};
    for (double tau : {0.25, 1.0, 4.0}) {
        std::vector<double> y = softmax(logits, tau);
        double s = std::accumulate(y.begin(), y.end(), 0.0);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        for (double p : y) CHECK(p > 0.0);
        CHECK(argmax(y) == 2);
    }
    // low temperature sharpens towards one-hot
    std::vector<double> sharp = softmax(logits, 0.05);
    CHECK(sharp[2] > 0.999);
    // shift invariance
    std::vector<double> shifted = logits;
    for (double& v : shifted) v += 7.5;
    std::vector<double> a = softmax(logits, 1.0), b = softmax(shifted, 1.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("hard sampling returns one-hot draws with softmax frequencies") {
    std::vector<double> logits = {0.0, 1.0, -0.5};
    std::vector<double> expect = softmax(logits, 1.0);
    std::vector<int> counts(3, 0);
    std::mt19937_64 rng(11);
    const int n = 40000;
    for (int t = 0; t < n; ++t) {
        std::vector<double> s = gumbel_max_sample(logits, rng);
        double total = std::accumulate(s.begin(), s.end(), 0.0);
        CHECK(total == 1.0);
        ++counts[argmax(s)];
    }
    for (int k = 0; k < 3; ++k)
        CHECK(static_cast<double>(counts[k]) / n ==
              doctest::Approx(expect[k]).epsilon(0.05));
}

TEST_CASE("seeded sampling is deterministic") {
    std::vector<double> logits = {0.2, -0.7, 1.1, 0.0};
    std::vector<double> a = gumbel_max_sample(logits, uint64_t(99));
    std::vector<double> b = gumbel_max_sample(logits, uint64_t(99));
    CHECK(a == b);
}

TEST_CASE("conditional draws always keep the realized class on top") {
    std::vector<double> logits = {0.4, -0.3, 0.9, -1.5};
    std::mt19937_64 rng(17);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> sample = gumbel_max_sample(logits, rng);
        int realized = argmax(sample);
        std::vector<double> g = conditional_gumbel_draw(logits, sample, rng);
        CHECK(argmax(g) == realized);
        for (double v : g) CHECK(std::isfinite(v));
    }
}

TEST_CASE("conditional draws marginally match unconditional shifted gumbels") {
    // E[max_k (g_k + logit_k)] should agree between the two constructions.
    std::vector<double> logits = {0.5, -0.5, 1.0};
    std::mt19937_64 rng(23);
    const int n = 30000;
    double mean_uncond = 0.0, mean_cond = 0.0;
    for (int t = 0; t < n; ++t) {
        double top = -1e300;
        for (std::size_t k = 0; k < logits.size(); ++k)
            top = std::max(top, gumbel_draw(rng) + logits[k]);
        mean_uncond += top;
        std::vector<double> sample = gumbel_max_sample(logits, rng);
        std::vector<double> g = conditional_gumbel_draw(logits, sample, rng);
        mean_cond += *std::max_element(g.begin(), g.end());
    }
    CHECK(mean_cond / n == doctest::Approx(mean_uncond / n).epsilon(0.02));
}

TEST_CASE("the softmax jacobian product matches finite differences") {
    std::vector<double> shifted = {0.8, -0.2, 1.3, 0.1};
    std::vector<double> f_grad = {1.0, -2.0, 0.5, 3.0};
    double tau = 0.7;
    std::vector<double> grad = softmax_jacobian_vec(shifted, tau, f_grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < shifted.size(); ++i) {
        std::vector<double> plus = shifted, minus = shifted;
        plus[i] += h;
        minus[i] -= h;
        std::vector<double> yp = softmax(plus, tau), ym = softmax(minus, tau);
        double fd = 0.0;
        for (std::size_t k = 0; k < shifted.size(); ++k)
            fd += f_grad[k] * (yp[k] - ym[k]) / (2.0 * h);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("straight-through estimates are one-hot forward, relaxed backward") {
    std::vector<double> logits = {0.1, 0.6, -0.4};
    std::vector<double> f_grad = {2.0, -1.0, 0.5};
    StGsResult r = st_gs_gradient(f_grad, logits, 1.0, uint64_t(7));
    CHECK(r.sample.size() == 3);
    CHECK(r.gradient.size() == 3);
    double s = std::accumulate(r.sample.begin(), r.sample.end(), 0.0);
    CHECK(s == 1.0);
    for (double v : r.sample) CHECK((v == 0.0 || v == 1.0));
    // the relaxed gradient sums to zero: softmax is shift invariant
    double gs = std::accumulate(r.gradient.begin(), r.gradient.end(), 0.0);
    CHECK(std::abs(gs) < 1e-10);
}

TEST_CASE("averaging conditional draws keeps the mean gradient") {
    // Both estimators target E[grad f(softmax(G))]; with many outer samples
    // their means must agree, while the averaged version fluctuates less.
    std::vector<double> logits = {0.3, -0.8, 0.5};
    std::vector<double> f_grad = {1.5, -0.5, 1.0};
    GumbelRaoConfig cfg;
    cfg.tau = 0.5;
    cfg.S = 8;
    std::mt19937_64 rng_a(31), rng_b(31);
    const int n = 20000;
    std::vector<double> mean_st(3, 0.0), mean_gr(3, 0.0);
    std::vector<double> m2_st(3, 0.0), m2_gr(3, 0.0);
    for (int t = 0; t < n; ++t) {
        StGsResult st = st_gs_gradient(f_grad, logits, cfg.tau, rng_a);
        StGsResult gr = gumbel_rao_gradient(f_grad, logits, cfg, rng_b);
        for (int k = 0; k < 3; ++k) {
            mean_st[k] += st.gradient[k];
            mean_gr[k] += gr.gradient[k];
            m2_st[k] += st.gradient[k] * st.gradient[k];
            m2_gr[k] += gr.gradient[k] * gr.gradient[k];
        }
    }
    double scale = 0.0;
    for (int k = 0; k < 3; ++k) scale = std::max(scale, std::abs(mean_st[k] / n));
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(mean_gr[k] / n - mean_st[k] / n) < 0.05 * std::max(scale, 0.1));
        double var_st = m2_st[k] / n - (mean_st[k] / n) * (mean_st[k] / n);
        double var_gr = m2_gr[k] / n - (mean_gr[k] / n) * (mean_gr[k] / n);
        CHECK(var_gr <= var_st * 1.05);
    }
}

TEST_CASE("configuration validation") {
    GumbelRaoConfig cfg;
    cfg.tau = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg.tau = 1.0;
    cfg.S = 0;
    CHECK_THROWS(cfg.validate());
}
