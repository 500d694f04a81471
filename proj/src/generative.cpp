#include "groupreg/generative.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "groupreg/grid_ops.hpp"

namespace groupreg {

ImageField decode(const CategoricalField& z, const IntensityCodebook& codebook) {
    if (codebook.K() != z.K)
        throw std::invalid_argument("decode: codebook K does not match field K");
    ImageField out(z.grid);
    const std::size_t n = z.grid.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = z.at(i);
        double v = 0.0;
        for (int k = 0; k < z.K; ++k) v += p[k] * codebook.levels[k];
        out.values[i] = v;
    }
    return out;
}

CodebookFitResult fit_codebook(const CategoricalField& z, const ImageField& warped_image,
                               CodebookFit mode, const IntensityCodebook* previous) {
    if (z.grid != warped_image.grid)
        throw std::invalid_argument("fit_codebook: grid mismatch");
    const int K = z.K;
    const std::size_t n = z.grid.voxels();
    CodebookFitResult res;
    res.codebook.levels.assign(K, 0.0);
    res.empty_class.assign(K, false);

    for (int k = 0; k < K; ++k) {
        double wsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) wsum += z.at(i)[k];
        if (wsum <= 0.0) {
            res.empty_class[k] = true;
            res.codebook.levels[k] = previous ? previous->levels[k] : 0.0;
            continue;
        }
        if (mode == CodebookFit::L2) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                acc += z.at(i)[k] * warped_image.values[i];
            res.codebook.levels[k] = acc / wsum;
        } else {
            // weighted median, lower-intensity tie-break
            std::vector<std::pair<double, double>> vw(n);
            for (std::size_t i = 0; i < n; ++i)
                vw[i] = {warped_image.values[i], z.at(i)[k]};
            std::sort(vw.begin(), vw.end());
            const double half = 0.5 * wsum;
            double acc = 0.0;
            for (const auto& [v, w] : vw) {
                acc += w;
                if (acc >= half) {
                    res.codebook.levels[k] = v;
                    break;
                }
            }
        }
    }
    return res;
}

double laplace_loglik(const ImageField& u, const ImageField& reconstruction,
                      const LikelihoodConfig& cfg) {
    cfg.validate();
    if (u.grid != reconstruction.grid)
        throw std::invalid_argument("laplace_loglik: grid mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.values.size(); ++i)
        acc += std::abs(u.values[i] - reconstruction.values[i]);
    return -acc / cfg.b;
}

namespace {

// Visits every directed grid edge (r -> q) of the 2d-connected neighborhood.
template <typename Fn>
void for_each_directed_edge(const GridSpec& grid, Fn&& fn) {
    const int d = grid.ndim();
    int coord[3] = {0, 0, 0};
    const std::size_t n = grid.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < d; ++a) {
            for (int dir = -1; dir <= 1; dir += 2) {
                const int q = coord[a] + dir;
                if (q < 0 || q >= grid.dims[a]) continue;
                int nb[3] = {coord[0], coord[1], coord[2]};
                nb[a] = q;
                fn(i, grid.index(nb));
            }
        }
        for (int a = 0; a < d; ++a) {
            if (++coord[a] < grid.dims[a]) break;
            coord[a] = 0;
        }
    }
}

int node_degree(const GridSpec& grid, const int* coord) {
    int deg = 0;
    for (int a = 0; a < grid.ndim(); ++a) {
        if (coord[a] > 0) ++deg;
        if (coord[a] < grid.dims[a] - 1) ++deg;
    }
    return deg;
}

}  // namespace

double velocity_prior_quadratic(const VectorField& mu, const VelocityPriorConfig& cfg) {
    cfg.validate();
    const int d = mu.grid.ndim();
    double acc = 0.0;
    for_each_directed_edge(mu.grid, [&](std::size_t r, std::size_t q) {
        const double* a = mu.at(r);
        const double* b = mu.at(q);
        for (int c = 0; c < d; ++c) {
            const double diff = a[c] - b[c];
            acc += diff * diff;
        }
    });
    // each undirected edge counted twice, as written: (lambda/2) * sum = lambda mu^T L mu
    return 0.5 * cfg.lambda * acc;
}

double velocity_prior_kl(const VectorField& mu, const ImageField& sigma_diag,
                         const VelocityPriorConfig& cfg) {
    cfg.validate();
    if (mu.grid != sigma_diag.grid)
        throw std::invalid_argument("velocity_prior_kl: grid mismatch");
    const int d = mu.grid.ndim();
    double trace = 0.0;
    int coord[3] = {0, 0, 0};
    const std::size_t n = mu.grid.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        const double s = sigma_diag.values[i];
        if (!(s > 0.0))
            throw std::invalid_argument("velocity_prior_kl: non-positive variance");
        const int deg = node_degree(mu.grid, coord);
        trace += d * (cfg.lambda * deg * s - std::log(s));
        for (int a = 0; a < mu.grid.ndim(); ++a) {
            if (++coord[a] < mu.grid.dims[a]) break;
            coord[a] = 0;
        }
    }
    return 0.5 * (trace + velocity_prior_quadratic(mu, cfg));
}

ElboBreakdown assemble_elbo(const std::vector<double>& recon_logliks,
                            const std::vector<double>& structural_per_level,
                            const std::vector<double>& velocity_kls,
                            const ElboWeights& weights) {
    ElboBreakdown b;
    b.recon_per_image = recon_logliks;
    b.structural_per_level = structural_per_level;
    b.kl_per_term = velocity_kls;
    b.reconstruction = std::accumulate(recon_logliks.begin(), recon_logliks.end(), 0.0);
    b.structural =
        std::accumulate(structural_per_level.begin(), structural_per_level.end(), 0.0);
    b.regularization = std::accumulate(velocity_kls.begin(), velocity_kls.end(), 0.0);
    b.total = weights.reconstruction * b.reconstruction -
              weights.structural * b.structural -
              weights.regularization * b.regularization;
    return b;
}

Counterfactual counterfactual_zero_class(const CategoricalField& z,
                                         const IntensityCodebook& codebook, int k) {
    if (k < 0 || k >= z.K)
        throw std::invalid_argument("counterfactual_zero_class: class index out of range");
    Counterfactual out;
    out.factual = decode(z, codebook);
    CategoricalField zc = z;
    const std::size_t n = z.grid.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        double* p = zc.at(i);
        p[k] = 0.0;
        double s = 0.0;
        for (int c = 0; c < z.K; ++c) s += p[c];
        if (s > 0.0) {
            for (int c = 0; c < z.K; ++c) p[c] /= s;
        } else {
            for (int c = 0; c < z.K; ++c) p[c] = 1.0 / z.K;  // voxel was pure class k
        }
    }
    out.counterfactual = decode(zc, codebook);
    out.difference = ImageField(z.grid);
    for (std::size_t i = 0; i < n; ++i)
        out.difference.values[i] = out.counterfactual.values[i] - out.factual.values[i];
    return out;
}

Counterfactual counterfactual_transform(const CategoricalField& z,
                                        const IntensityCodebook& codebook,
                                        const VectorField& phi) {
    Counterfactual out;
    out.factual = decode(warp(z, phi, Interp::Nearest), codebook);
    out.counterfactual = warp(decode(z, codebook), phi, Interp::Nearest);
    out.difference = ImageField(z.grid);
    for (std::size_t i = 0; i < z.grid.voxels(); ++i)
        out.difference.values[i] = out.counterfactual.values[i] - out.factual.values[i];
    return out;
}

}  // namespace groupreg
