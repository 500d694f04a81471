#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "groupreg/demons.hpp"
#include "groupreg/diffeo.hpp"
#include "groupreg/grid_ops.hpp"

using namespace groupreg;

namespace {

// Two-class field whose class-1 probability is a Gaussian blob at (cx, cy).
CategoricalField blob_field(const GridSpec& g, double cx, double cy, double width) {
    CategoricalField f(g, 2);
    int c[2];
    for (c[1] = 0; c[1] < g.dims[1]; ++c[1])
        for (c[0] = 0; c[0] < g.dims[0]; ++c[0]) {
            double dx = c[0] - cx, dy = c[1] - cy;
            double p = 0.02 + 0.96 * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
            double* q = f.at(g.index(c));
            q[0] = 1.0 - p;
            q[1] = p;
        }
    return f;
}

double prob_ssd(const CategoricalField& a, const CategoricalField& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.probs.size(); ++i) {
        double d = a.probs[i] - b.probs[i];
        s += d * d;
    }
    return s;
}

}  // namespace

TEST_CASE("force on identical inputs is zero") {
    GridSpec g({24, 24});
    CategoricalField f = blob_field(g, 12.0, 12.0, 4.0);
    DemonsConfig cfg;
    cfg.alpha = 2.0;
    DemonsForceOutput out = demons_force(f, f, cfg);
    for (double v : out.mu.vectors) CHECK(v == 0.0);
    CHECK(out.max_norm == 0.0);
}

TEST_CASE("one step on a shifted blob strictly decreases the mismatch") {
    GridSpec g({32, 32});
    CategoricalField fixed = blob_field(g, 16.0, 16.0, 4.0);
    CategoricalField moving = blob_field(g, 17.0, 16.0, 4.0);  // 1 voxel off
    DemonsConfig cfg;
    cfg.alpha = 1.0;
    cfg.fluid_sigma = 1.0;
    DemonsForceOutput out = demons_force(fixed, moving, cfg);
    CHECK(out.max_norm > 0.0);
    VectorField step = exponentiate(out.mu);
    CategoricalField moved = warp(moving, step);
    CHECK(prob_ssd(fixed, moved) < prob_ssd(fixed, moving));
}

TEST_CASE("the normalized force respects the magnitude bound") {
    GridSpec g({32, 32});
    CategoricalField fixed = blob_field(g, 14.0, 18.0, 3.0);
    CategoricalField moving = blob_field(g, 18.0, 14.0, 5.0);
    for (double alpha : {0.5, 1.0, 3.0}) {
        DemonsConfig cfg;
        cfg.alpha = alpha;
        DemonsForceOutput out = demons_force(fixed, moving, cfg);
        for (std::size_t i = 0; i < g.voxels(); ++i) {
            const double* v = out.mu.at(i);
            CHECK(std::hypot(v[0], v[1]) <= alpha * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("invalid demons configuration is rejected") {
    DemonsConfig cfg;
    cfg.alpha = 12.0;  // must stay below alpha0
    CHECK_THROWS(cfg.validate());
    cfg.alpha = 1.0;
    cfg.ridge = 0.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("fluid smoothing with sigma zero is the identity") {
    GridSpec g({12, 12});
    VectorField v(g);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (double& x : v.vectors) x = uni(rng);
    VectorField s = fluid_smooth(v, 0.0);
    CHECK(s.vectors == v.vectors);
}

TEST_CASE("fluid smoothing preserves constant fields and damps spikes") {
    GridSpec g({16, 16});
    VectorField c(g);
    for (std::size_t i = 0; i < g.voxels(); ++i) {
        c.at(i)[0] = 0.7;
        c.at(i)[1] = -0.3;
    }
    VectorField sc = fluid_smooth(c, 2.0);
    for (std::size_t i = 0; i < g.voxels(); ++i) {
        CHECK(sc.at(i)[0] == doctest::Approx(0.7).epsilon(1e-10));
        CHECK(sc.at(i)[1] == doctest::Approx(-0.3).epsilon(1e-10));
    }

    VectorField spike(g);
    int mid[2] = {8, 8};
    spike.at(g.index(mid))[0] = 1.0;
    VectorField ss = fluid_smooth(spike, 1.5);
    CHECK(max_vector_norm(ss) < 1.0);
    CHECK(max_vector_norm(ss) > 0.0);
    // mass spreads symmetrically around the spike
    int l[2] = {7, 8}, r[2] = {9, 8};
    CHECK(ss.at(g.index(l))[0] == doctest::Approx(ss.at(g.index(r))[0]));
}

TEST_CASE("probability smoothing keeps the field on the simplex") {
    GridSpec g({14, 10});
    CategoricalField f = blob_field(g, 7.0, 5.0, 2.0);
    CategoricalField s = smooth_probs(f, 1.2);
    s.validate(1e-9);
}

TEST_CASE("uniform confidence reduces normalized convolution to plain smoothing") {
    GridSpec g({16, 16});
    VectorField v(g);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (double& x : v.vectors) x = uni(rng);
    ImageField w(g, 0.37);
    VectorField a = confidence_smooth(v, w, 1.5);
    VectorField b = fluid_smooth(v, 1.5);
    for (std::size_t i = 0; i < v.vectors.size(); ++i)
        CHECK(a.vectors[i] == doctest::Approx(b.vectors[i]).epsilon(1e-10));
}

TEST_CASE("normalized convolution propagates confident values without attenuation") {
    GridSpec g({15, 15});
    VectorField v(g);
    ImageField w(g, 0.0);
    int mid[2] = {7, 7};
    v.at(g.index(mid))[0] = 2.0;
    w.values[g.index(mid)] = 1.0;
    VectorField s = confidence_smooth(v, w, 2.0);
    // plain smoothing would scale the lone value down by the kernel weight;
    // normalized convolution keeps it at full strength and extends it
    CHECK(s.at(g.index(mid))[0] == doctest::Approx(2.0).epsilon(1e-9));
    int near[2] = {8, 7};
    CHECK(s.at(g.index(near))[0] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("velocity variance heuristic is bounded by the base scale") {
    GridSpec g({20, 20});
    CategoricalField fixed = blob_field(g, 10.0, 10.0, 3.0);
    CategoricalField moving = blob_field(g, 12.0, 10.0, 3.0);
    ImageField var = estimate_velocity_variance(fixed, moving, 1.5);
    for (double v : var.values) {
        CHECK(v > 0.0);
        CHECK(v <= 1.5 * 1.5 + 1e-12);
    }
    // flat fields carry no gradient information: variance hits the ceiling
    CategoricalField flat(g, 2);
    for (std::size_t i = 0; i < g.voxels(); ++i) {
        flat.at(i)[0] = 0.5;
        flat.at(i)[1] = 0.5;
    }
    ImageField vf = estimate_velocity_variance(flat, flat, 1.5);
    for (double v : vf.values) CHECK(v == doctest::Approx(1.5 * 1.5));
}

TEST_CASE("small symmetric solves match a direct inverse") {
    {
        double A[9] = {4.0, 1.0, 1.0, 3.0};  // row-major 2x2
        double b[3] = {1.0, 2.0};
        double x[3];
        solve_spd(2, A, b, 0.0, x);
        CHECK(4.0 * x[0] + 1.0 * x[1] == doctest::Approx(1.0));
        CHECK(1.0 * x[0] + 3.0 * x[1] == doctest::Approx(2.0));
    }
    {
        double A[9] = {5.0, 1.0, 0.5, 1.0, 4.0, 0.25, 0.5, 0.25, 3.0};
        double b[3] = {1.0, -2.0, 0.5};
        double x[3];
        solve_spd(3, A, b, 0.0, x);
        for (int r = 0; r < 3; ++r) {
            double s = 0.0;
            for (int c = 0; c < 3; ++c) s += A[r * 3 + c] * x[c];
            CHECK(s == doctest::Approx(b[r]));
        }
    }
    {
        // the ridge regularizes a singular system
        double A[9] = {1.0, 1.0, 1.0, 1.0};
        double b[3] = {2.0, 2.0};
        double x[3];
        solve_spd(2, A, b, 1e-6, x);
        CHECK(std::isfinite(x[0]));
        CHECK(std::isfinite(x[1]));
        CHECK(x[0] == doctest::Approx(x[1]));
    }
}
