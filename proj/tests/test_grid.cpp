#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "groupreg/grid_ops.hpp"

using namespace groupreg;

namespace {

VectorField zero_transform(const GridSpec& g) { return VectorField(g); }

CategoricalField random_simplex_field(const GridSpec& g, int K, uint64_t seed) {
    CategoricalField f(g, K);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.01, 1.0);
    for (std::size_t i = 0; i < g.voxels(); ++i) {
        double s = 0.0;
        for (int k = 0; k < K; ++k) {
            f.at(i)[k] = uni(rng);
            s += f.at(i)[k];
        }
        for (int k = 0; k < K; ++k) f.at(i)[k] /= s;
    }
    return f;
}

}  // namespace

TEST_CASE("grid spec validation") {
    CHECK_THROWS(GridSpec({8}));
    CHECK_THROWS(GridSpec({8, 1}));
    CHECK_THROWS(GridSpec({8, 8}, {1.0, -1.0}));
    GridSpec g({4, 3});
    CHECK(g.voxels() == 12);
    int c[2] = {1, 2};
    CHECK(g.index(c) == 2 * 4 + 1);  // axis 0 fastest
}

TEST_CASE("warp by zero transform is the identity, bit-exactly") {
    GridSpec g({9, 7});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);

    ImageField img(g);
    for (double& v : img.values) v = uni(rng);
    ImageField wi = warp(img, zero_transform(g));
    CHECK(wi.values == img.values);

    VectorField vf(g);
    for (double& v : vf.vectors) v = uni(rng);
    VectorField wv = warp(vf, zero_transform(g));
    CHECK(wv.vectors == vf.vectors);

    // renormalization may touch the last bit of inexactly-summing inputs
    CategoricalField cf = random_simplex_field(g, 3, 5);
    CategoricalField wc = warp(cf, zero_transform(g));
    for (std::size_t i = 0; i < cf.probs.size(); ++i)
        CHECK(wc.probs[i] == doctest::Approx(cf.probs[i]).epsilon(1e-14));

    LabelField lf(g, 4);
    for (std::size_t i = 0; i < g.voxels(); ++i) lf.labels[i] = static_cast<int>(i % 4);
    LabelField wl = warp(lf, zero_transform(g));
    CHECK(wl.labels == lf.labels);
}

TEST_CASE("interpolation is exact on nodes and linear between them") {
    GridSpec g({5, 4});
    ImageField img(g);
    for (std::size_t i = 0; i < g.voxels(); ++i) img.values[i] = static_cast<double>(i * i % 13);

    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) {
            int c[2] = {x, y};
            double p[2] = {static_cast<double>(x), static_cast<double>(y)};
            CHECK(interpolate(img, p) == img.values[g.index(c)]);
        }

    // midpoint along x equals the average of the two nodes
    int a[2] = {1, 2}, b[2] = {2, 2};
    double mid[2] = {1.5, 2.0};
    CHECK(interpolate(img, mid) ==
          doctest::Approx(0.5 * (img.values[g.index(a)] + img.values[g.index(b)])));

    // quarter point
    double q[2] = {1.25, 2.0};
    CHECK(interpolate(img, q) ==
          doctest::Approx(0.75 * img.values[g.index(a)] + 0.25 * img.values[g.index(b)]));
}

TEST_CASE("out-of-domain samples clamp to the boundary") {
    GridSpec g({4, 4});
    ImageField img(g);
    for (std::size_t i = 0; i < g.voxels(); ++i) img.values[i] = static_cast<double>(i);
    double p[2] = {-3.0, 1.0};
    int c[2] = {0, 1};
    CHECK(interpolate(img, p) == doctest::Approx(img.values[g.index(c)]));
    double q[2] = {10.0, 10.0};
    int d[2] = {3, 3};
    CHECK(interpolate(img, q) == doctest::Approx(img.values[g.index(d)]));
}

TEST_CASE("jacobian determinant of the zero field is one everywhere") {
    ImageField det = jacobian_determinant(VectorField(GridSpec({6, 5})));
    for (double v : det.values) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("gradient of a constant image is zero everywhere") {
    ImageField img(GridSpec({6, 6}), 4.2);
    VectorField gr = gradient(img);
    for (double v : gr.vectors) CHECK(v == 0.0);
}

TEST_CASE("gradient of a linear ramp equals its slope") {
    GridSpec g({8, 8});
    ImageField img(g);
    int coord[2];
    for (coord[1] = 0; coord[1] < 8; ++coord[1])
        for (coord[0] = 0; coord[0] < 8; ++coord[0])
            img.values[g.index(coord)] = 3.0 * coord[0] - 2.0 * coord[1];
    VectorField gr = gradient(img);
    // interior central differences reproduce the slope exactly
    for (coord[1] = 1; coord[1] < 7; ++coord[1])
        for (coord[0] = 1; coord[0] < 7; ++coord[0]) {
            const double* v = gr.at(g.index(coord));
            CHECK(v[0] == doctest::Approx(3.0));
            CHECK(v[1] == doctest::Approx(-2.0));
        }
}

TEST_CASE("warp and resample preserve the categorical simplex") {
    GridSpec g({8, 6});
    CategoricalField cf = random_simplex_field(g, 4, 11);
    VectorField t(g);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(-1.5, 1.5);
    for (double& v : t.vectors) v = uni(rng);

    CategoricalField w = warp(cf, t);
    w.validate(1e-9);

    CategoricalField r = resample(cf, GridSpec({12, 9}));
    r.validate(1e-9);
}

TEST_CASE("resample to the same grid returns an identical field") {
    GridSpec g({6, 6});
    ImageField img(g);
    for (std::size_t i = 0; i < g.voxels(); ++i) img.values[i] = std::sin(0.3 * i);
    ImageField r = resample(img, g);
    for (std::size_t i = 0; i < g.voxels(); ++i)
        CHECK(r.values[i] == doctest::Approx(img.values[i]));
}

TEST_CASE("constant image upsamples to the same constant") {
    ImageField img(GridSpec({4, 4}), 2.5);
    ImageField r = resample(img, GridSpec({8, 8}));
    for (double v : r.values) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("displacement resampling rescales vectors by the grid ratio") {
    GridSpec coarse({4, 4});
    VectorField v(coarse);
    for (std::size_t i = 0; i < coarse.voxels(); ++i) {
        v.at(i)[0] = 1.0;
        v.at(i)[1] = 0.0;
    }
    VectorField fine = resample_displacement(v, GridSpec({8, 8}));
    for (std::size_t i = 0; i < fine.grid.voxels(); ++i) {
        CHECK(fine.at(i)[0] == doctest::Approx(2.0));
        CHECK(fine.at(i)[1] == doctest::Approx(0.0));
    }
}

TEST_CASE("average pooling halves the grid and renormalizes") {
    GridSpec g({8, 8});
    CategoricalField cf = random_simplex_field(g, 3, 19);
    CategoricalField down = downsample_average(cf, GridSpec({4, 4}));
    CHECK(down.grid.dims[0] == 4);
    down.validate(1e-9);
}

TEST_CASE("nearest-neighbor label warp matches nearest image warp") {
    GridSpec g({10, 10});
    LabelField lf(g, 3);
    ImageField img(g);
    for (std::size_t i = 0; i < g.voxels(); ++i) {
        lf.labels[i] = static_cast<int>(i % 3);
        img.values[i] = static_cast<double>(lf.labels[i]);
    }
    VectorField t(g);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    for (double& v : t.vectors) v = uni(rng);

    LabelField wl = warp(lf, t);
    ImageField wi = warp(img, t, Interp::Nearest);
    for (std::size_t i = 0; i < g.voxels(); ++i)
        CHECK(static_cast<double>(wl.labels[i]) == doctest::Approx(wi.values[i]));
}
