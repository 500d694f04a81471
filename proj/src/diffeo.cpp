#include "groupreg/diffeo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "groupreg/grid_ops.hpp"

namespace groupreg {

double max_vector_norm(const VectorField& v) {
    const int d = v.grid.ndim();
    const std::size_t n = v.grid.voxels();
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = v.at(i);
        double s = 0.0;
        for (int a = 0; a < d; ++a) s += p[a] * p[a];
        best = std::max(best, s);
    }
    return std::sqrt(best);
}

VectorField compose(const VectorField& a, const VectorField& b) {
    if (a.grid != b.grid) throw std::invalid_argument("compose: grid mismatch");
    const int d = a.grid.ndim();
    VectorField out(a.grid);
    const std::size_t n = a.grid.voxels();
    int coord[3] = {0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        const double* db = b.at(i);
        double p[3], sampled[3];
        for (int x = 0; x < d; ++x) p[x] = static_cast<double>(coord[x]) + db[x];
        interpolate(a, p, sampled);
        double* o = out.at(i);
        for (int x = 0; x < d; ++x) o[x] = sampled[x] + db[x];
        for (int x = 0; x < d; ++x) {
            if (++coord[x] < a.grid.dims[x]) break;
            coord[x] = 0;
        }
    }
    return out;
}

VectorField exponentiate(const VectorField& v, int steps) {
    int T = steps;
    if (T <= 0) {
        const double m = max_vector_norm(v);
        T = 2;
        if (m > 0.5) T = std::max(2, static_cast<int>(std::ceil(std::log2(m / 0.5))));
    }
    VectorField u = v;
    const double scale = std::ldexp(1.0, -T);  // 2^-T
    for (double& c : u.vectors) c *= scale;
    for (int t = 0; t < T; ++t) u = compose(u, u);
    return u;
}

void center_velocities_inplace(std::vector<VectorField>& totals) {
    if (totals.empty()) throw std::invalid_argument("center_velocities: empty list");
    const std::size_t m = totals[0].vectors.size();
    for (const auto& f : totals)
        if (f.grid != totals[0].grid)
            throw std::invalid_argument("center_velocities: grid mismatch");
    std::vector<double> mean(m, 0.0);
    for (const auto& f : totals)
        for (std::size_t i = 0; i < m; ++i) mean[i] += f.vectors[i];
    const double inv = 1.0 / static_cast<double>(totals.size());
    for (std::size_t i = 0; i < m; ++i) mean[i] *= inv;
    for (auto& f : totals)
        for (std::size_t i = 0; i < m; ++i) f.vectors[i] -= mean[i];
}

std::vector<VectorField> center_velocities(const std::vector<VectorField>& totals) {
    std::vector<VectorField> out = totals;
    center_velocities_inplace(out);
    return out;
}

std::vector<VectorField> aggregate_levels(const VelocitySet& vset) {
    if (vset.levels.empty()) throw std::invalid_argument("aggregate_levels: no levels");
    const int L = vset.num_levels();
    const int N = vset.num_images();
    for (const auto& lvl : vset.levels)
        if (static_cast<int>(lvl.size()) != N)
            throw std::invalid_argument("aggregate_levels: ragged level set");
    const GridSpec& fine = vset.levels[L - 1][0].grid;
    for (int l = 0; l + 1 < L; ++l)
        for (int a = 0; a < fine.ndim(); ++a)
            if (vset.levels[l][0].grid.dims[a] > vset.levels[l + 1][0].grid.dims[a])
                throw std::invalid_argument("aggregate_levels: levels are not coarse-to-fine");
    std::vector<VectorField> totals;
    totals.reserve(N);
    for (int j = 0; j < N; ++j) {
        VectorField acc(fine);
        for (int l = 0; l < L; ++l) {
            VectorField up = resample_displacement(vset.levels[l][j], fine);
            for (std::size_t i = 0; i < acc.vectors.size(); ++i)
                acc.vectors[i] += up.vectors[i];
        }
        totals.push_back(std::move(acc));
    }
    return totals;
}

}  // namespace groupreg
