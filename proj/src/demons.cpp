#include "groupreg/demons.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "groupreg/grid_ops.hpp"

namespace groupreg {

void solve_spd(int d, const double A[9], const double b[3], double reg, double x[3]) {
    if (d == 2) {
        const double a00 = A[0] + reg, a01 = A[1], a11 = A[3] + reg;
        const double det = a00 * a11 - a01 * a01;
        x[0] = (a11 * b[0] - a01 * b[1]) / det;
        x[1] = (a00 * b[1] - a01 * b[0]) / det;
    } else {
        double m[3][3] = {{A[0] + reg, A[1], A[2]},
                          {A[3], A[4] + reg, A[5]},
                          {A[6], A[7], A[8] + reg}};
        const double c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
        const double c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
        const double c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
        const double det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
        const double c10 = m[0][2] * m[2][1] - m[0][1] * m[2][2];
        const double c11 = m[0][0] * m[2][2] - m[0][2] * m[2][0];
        const double c12 = m[0][1] * m[2][0] - m[0][0] * m[2][1];
        const double c20 = m[0][1] * m[1][2] - m[0][2] * m[1][1];
        const double c21 = m[0][2] * m[1][0] - m[0][0] * m[1][2];
        const double c22 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        x[0] = (c00 * b[0] + c10 * b[1] + c20 * b[2]) / det;
        x[1] = (c01 * b[0] + c11 * b[1] + c21 * b[2]) / det;
        x[2] = (c02 * b[0] + c12 * b[1] + c22 * b[2]) / det;
    }
}

DemonsForceOutput demons_force(const CategoricalField& fixed,
                               const CategoricalField& moving_warped,
                               const DemonsConfig& cfg) {
    cfg.validate();
    if (fixed.grid != moving_warped.grid || fixed.K != moving_warped.K)
        throw std::invalid_argument("demons_force: fixed/moving shape mismatch");
    const int K = fixed.K;
    const int d = fixed.grid.ndim();
    const std::size_t n = fixed.grid.voxels();

    // feature differences phi(0) = fixed - moving, K per voxel
    std::vector<double> diff(n * static_cast<std::size_t>(K));
    std::vector<double> mean_diff(K, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* f = fixed.at(i);
        const double* m = moving_warped.at(i);
        double* o = diff.data() + i * static_cast<std::size_t>(K);
        for (int k = 0; k < K; ++k) {
            o[k] = f[k] - m[k];
            mean_diff[k] += o[k];
        }
    }
    for (int k = 0; k < K; ++k) mean_diff[k] /= static_cast<double>(n);

    // unbiased sample variance of |phi(0) - mean|_2 over the grid
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* o = diff.data() + i * static_cast<std::size_t>(K);
        for (int k = 0; k < K; ++k) {
            const double r = o[k] - mean_diff[k];
            ss += r * r;
        }
    }
    const double sigma_sq = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;

    const std::vector<double> gf = gradient(fixed);          // K*d per voxel
    const std::vector<double> gm = gradient(moving_warped);  // K*d per voxel

    DemonsForceOutput out;
    out.sigma_phi_sq = sigma_sq;
    out.mu = VectorField(fixed.grid);
    double max_norm_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* pf = gf.data() + i * static_cast<std::size_t>(K * d);
        const double* pm = gm.data() + i * static_cast<std::size_t>(K * d);
        const double* phi0 = diff.data() + i * static_cast<std::size_t>(K);
        // J = -1/2 (grad fixed + grad moving), K x d
        // accumulate A = J^T J and b = J^T phi0 directly
        double A[9] = {0}, b[3] = {0};
        for (int k = 0; k < K; ++k) {
            double row[3];
            for (int a = 0; a < d; ++a) row[a] = -0.5 * (pf[k * d + a] + pm[k * d + a]);
            for (int a = 0; a < d; ++a) {
                for (int c = 0; c < d; ++c) A[a * d + c] += row[a] * row[c];
                b[a] += row[a] * phi0[k];
            }
        }
        double x[3];
        solve_spd(d, A, b, sigma_sq + cfg.ridge, x);
        double* mu = out.mu.at(i);
        double nrm = 0.0;
        for (int a = 0; a < d; ++a) {
            mu[a] = -x[a];
            nrm += mu[a] * mu[a];
        }
        max_norm_sq = std::max(max_norm_sq, nrm);
    }
    out.max_norm = std::sqrt(max_norm_sq);
    if (out.max_norm > 0.0) {
        const double s = cfg.alpha / out.max_norm;
        for (double& c : out.mu.vectors) c *= s;
    }
    return out;
}

namespace {

void smooth_channels(const GridSpec& grid, std::vector<double>& data, int channels,
                     double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("smoothing sigma must be >= 0");
    if (sigma == 0.0) return;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        ksum += kernel[i + radius];
    }
    for (double& k : kernel) k /= ksum;

    const int d = grid.ndim();
    std::vector<double> tmp(data.size());
    for (int axis = 0; axis < d; ++axis) {
        const std::size_t n = grid.voxels();
        int coord[3] = {0, 0, 0};
        for (std::size_t i = 0; i < n; ++i) {
            double* dst = tmp.data() + i * static_cast<std::size_t>(channels);
            for (int a = 0; a < channels; ++a) dst[a] = 0.0;
            int c[3] = {coord[0], coord[1], coord[2]};
            for (int t = -radius; t <= radius; ++t) {
                c[axis] = std::clamp(coord[axis] + t, 0, grid.dims[axis] - 1);
                const double* src =
                    data.data() + grid.index(c) * static_cast<std::size_t>(channels);
                const double w = kernel[t + radius];
                for (int a = 0; a < channels; ++a) dst[a] += w * src[a];
            }
            for (int a = 0; a < d; ++a) {
                if (++coord[a] < grid.dims[a]) break;
                coord[a] = 0;
            }
        }
        std::swap(data, tmp);
    }
}

}  // namespace

VectorField fluid_smooth(const VectorField& v, double sigma) {
    VectorField out = v;
    smooth_channels(out.grid, out.vectors, out.grid.ndim(), sigma);
    return out;
}

CategoricalField smooth_probs(const CategoricalField& f, double sigma) {
    CategoricalField out = f;
    smooth_channels(out.grid, out.probs, out.K, sigma);
    return out;
}

VectorField confidence_smooth(const VectorField& u, const ImageField& weights,
                              double sigma) {
    if (u.grid != weights.grid)
        throw std::invalid_argument("confidence_smooth: grid mismatch");
    const int d = u.grid.ndim();
    const std::size_t n = u.grid.voxels();
    // weighted components plus the weight itself share one smoothing pass
    std::vector<double> packed(n * static_cast<std::size_t>(d + 1));
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights.values[i];
        double* p = packed.data() + i * static_cast<std::size_t>(d + 1);
        for (int a = 0; a < d; ++a) p[a] = w * u.at(i)[a];
        p[d] = w;
    }
    smooth_channels(u.grid, packed, d + 1, sigma);
    VectorField out(u.grid);
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = packed.data() + i * static_cast<std::size_t>(d + 1);
        for (int a = 0; a < d; ++a) out.at(i)[a] = p[a] / (p[d] + 1e-12);
    }
    return out;
}

ImageField estimate_velocity_variance(const CategoricalField& fixed,
                                      const CategoricalField& moving_warped,
                                      double sigma_base) {
    if (fixed.grid != moving_warped.grid || fixed.K != moving_warped.K)
        throw std::invalid_argument("estimate_velocity_variance: shape mismatch");
    const int K = fixed.K;
    const int d = fixed.grid.ndim();
    const std::vector<double> gf = gradient(fixed);
    const std::vector<double> gm = gradient(moving_warped);
    ImageField out(fixed.grid);
    const std::size_t n = fixed.grid.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        const double* pf = gf.data() + i * static_cast<std::size_t>(K * d);
        const double* pm = gm.data() + i * static_cast<std::size_t>(K * d);
        double fro = 0.0;
        for (int k = 0; k < K * d; ++k) {
            const double j = -0.5 * (pf[k] + pm[k]);
            fro += j * j;
        }
        out.values[i] = sigma_base * sigma_base / (1.0 + fro);
    }
    return out;
}

}  // namespace groupreg
