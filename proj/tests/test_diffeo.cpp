#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "groupreg/diffeo.hpp"
#include "groupreg/eval.hpp"
#include "groupreg/grid_ops.hpp"

using namespace groupreg;

namespace {

// Smooth field that vanishes near the boundary so exp(v) stays in-domain.
VectorField bump_field(const GridSpec& g, double ax, double ay) {
    VectorField v(g);
    int c[2];
    for (c[1] = 0; c[1] < g.dims[1]; ++c[1])
        for (c[0] = 0; c[0] < g.dims[0]; ++c[0]) {
            double sx = std::sin(M_PI * c[0] / (g.dims[0] - 1.0));
            double sy = std::sin(M_PI * c[1] / (g.dims[1] - 1.0));
            double w = sx * sx * sy * sy;
            double* p = v.at(g.index(c));
            p[0] = ax * w;
            p[1] = ay * w;
        }
    return v;
}

double interior_max_norm(const VectorField& v, int margin) {
    double m = 0.0;
    const GridSpec& g = v.grid;
    int c[2];
    for (c[1] = margin; c[1] < g.dims[1] - margin; ++c[1])
        for (c[0] = margin; c[0] < g.dims[0] - margin; ++c[0]) {
            const double* p = v.at(g.index(c));
            m = std::max(m, std::hypot(p[0], p[1]));
        }
    return m;
}

}  // namespace

TEST_CASE("exponential of the zero field is the identity, exactly") {
    VectorField phi = exponentiate(VectorField(GridSpec({16, 16})));
    for (double v : phi.vectors) CHECK(v == 0.0);
}

TEST_CASE("exponential of a uniform translation is that translation") {
    GridSpec g({24, 24});
    VectorField v(g);
    for (std::size_t i = 0; i < g.voxels(); ++i) {
        v.at(i)[0] = 1.5;
        v.at(i)[1] = -0.75;
    }
    VectorField phi = exponentiate(v);
    // interior voxels see the exact translation; near the boundary clamping
    // distorts the flow
    int c[2];
    for (c[1] = 6; c[1] < 18; ++c[1])
        for (c[0] = 6; c[0] < 18; ++c[0]) {
            const double* p = phi.at(g.index(c));
            CHECK(p[0] == doctest::Approx(1.5).epsilon(1e-9));
            CHECK(p[1] == doctest::Approx(-0.75).epsilon(1e-9));
        }
}

TEST_CASE("composition with the zero field is the identity on either side") {
    GridSpec g({12, 10});
    VectorField a = bump_field(g, 1.2, -0.8);
    VectorField z(g);
    VectorField l = compose(a, z);
    VectorField r = compose(z, a);
    for (std::size_t i = 0; i < a.vectors.size(); ++i) {
        CHECK(l.vectors[i] == doctest::Approx(a.vectors[i]).epsilon(1e-12));
        CHECK(r.vectors[i] == doctest::Approx(a.vectors[i]).epsilon(1e-12));
    }
}

TEST_CASE("composition of uniform translations adds them exactly") {
    GridSpec g({16, 16});
    VectorField a(g), b(g);
    for (std::size_t i = 0; i < g.voxels(); ++i) {
        a.at(i)[0] = 0.5;
        a.at(i)[1] = 1.0;
        b.at(i)[0] = -0.25;
        b.at(i)[1] = 0.5;
    }
    VectorField c = compose(a, b);
    for (std::size_t i = 0; i < g.voxels(); ++i) {
        CHECK(c.at(i)[0] == doctest::Approx(0.25));
        CHECK(c.at(i)[1] == doctest::Approx(1.5));
    }
}

TEST_CASE("exp(v) composed with exp(-v) is close to the identity") {
    GridSpec g({48, 48});
    VectorField v = bump_field(g, 2.0, -1.5);
    VectorField fwd = exponentiate(v);
    VectorField neg = v;
    for (double& x : neg.vectors) x = -x;
    VectorField bwd = exponentiate(neg);
    VectorField round = compose(fwd, bwd);
    CHECK(interior_max_norm(round, 4) < 0.1);
}

TEST_CASE("scaling-and-squaring converges as steps increase") {
    GridSpec g({32, 32});
    VectorField v = bump_field(g, 1.5, 1.0);
    VectorField coarse = exponentiate(v, 6);
    VectorField fine = exponentiate(v, 10);
    double diff = 0.0;
    for (std::size_t i = 0; i < coarse.vectors.size(); ++i)
        diff = std::max(diff, std::abs(coarse.vectors[i] - fine.vectors[i]));
    CHECK(diff < 5e-3);
    VectorField finer = exponentiate(v, 12);
    double diff2 = 0.0;
    for (std::size_t i = 0; i < fine.vectors.size(); ++i)
        diff2 = std::max(diff2, std::abs(fine.vectors[i] - finer.vectors[i]));
    CHECK(diff2 < diff);  // refinement shrinks the discrepancy
}

TEST_CASE("exponential maps preserve orientation") {
    GridSpec g({40, 40});
    std::mt19937_64 rng(2);
    for (int t = 0; t < 5; ++t) {
        FfdSpec spec;
        spec.spacing = 8.0;
        spec.max_displacement = 3.0;
        spec.seed = rng();
        VectorField v = random_ffd(spec, g);
        ImageField det = jacobian_determinant(exponentiate(v));
        int c[2];
        for (c[1] = 1; c[1] < 39; ++c[1])
            for (c[0] = 1; c[0] < 39; ++c[0])
                CHECK(det.values[g.index(c)] > 0.0);
    }
}

TEST_CASE("centering makes velocities sum to zero and preserves differences") {
    GridSpec g({10, 8});
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    std::vector<VectorField> totals;
    for (int j = 0; j < 4; ++j) {
        VectorField v(g);
        for (double& x : v.vectors) x = uni(rng);
        totals.push_back(std::move(v));
    }
    std::vector<VectorField> centered = center_velocities(totals);
    for (std::size_t i = 0; i < g.voxels() * 2; ++i) {
        double s = 0.0;
        for (int j = 0; j < 4; ++j) s += centered[j].vectors[i];
        CHECK(std::abs(s) < 1e-12);
        // pairwise differences are untouched
        CHECK(centered[1].vectors[i] - centered[0].vectors[i] ==
              doctest::Approx(totals[1].vectors[i] - totals[0].vectors[i]));
    }

    // centering twice changes nothing
    std::vector<VectorField> twice = center_velocities(centered);
    for (int j = 0; j < 4; ++j)
        for (std::size_t i = 0; i < g.voxels() * 2; ++i)
            CHECK(twice[j].vectors[i] == doctest::Approx(centered[j].vectors[i]));
}

TEST_CASE("level aggregation resamples and sums onto the finest grid") {
    GridSpec coarse({8, 8}), fine({16, 16});
    VelocitySet vs;
    vs.levels.resize(2);
    VectorField vc(coarse), vf(fine);
    for (std::size_t i = 0; i < coarse.voxels(); ++i) vc.at(i)[0] = 1.0;
    for (std::size_t i = 0; i < fine.voxels(); ++i) vf.at(i)[1] = 0.5;
    vs.levels[0].push_back(vc);
    vs.levels[1].push_back(vf);
    std::vector<VectorField> agg = aggregate_levels(vs);
    REQUIRE(agg.size() == 1);
    CHECK(agg[0].grid == fine);
    for (std::size_t i = 0; i < fine.voxels(); ++i) {
        CHECK(agg[0].at(i)[0] == doctest::Approx(2.0));  // rescaled by 16/8
        CHECK(agg[0].at(i)[1] == doctest::Approx(0.5));
    }
}

TEST_CASE("max vector norm") {
    GridSpec g({4, 4});
    VectorField v(g);
    v.at(5)[0] = 3.0;
    v.at(5)[1] = 4.0;
    CHECK(max_vector_norm(v) == doctest::Approx(5.0));
}
