#ifndef GROUPREG_GENERATIVE_HPP
#define GROUPREG_GENERATIVE_HPP

#include <string>
#include <vector>

#include "groupreg/field.hpp"

namespace groupreg {

// Per-modality intensity levels: the decoder is the voxel-local lookup
// f_j(z)(w) = sum_k z_{w,k} c_{j,k}, which commutes with spatial warps.
struct IntensityCodebook {
    std::vector<double> levels;  // K entries

    int K() const { return static_cast<int>(levels.size()); }
};

struct VelocityPriorConfig {
    double lambda = 10.0;  // Laplacian scale

    void validate() const {
        if (!(lambda > 0.0))
            throw std::invalid_argument("VelocityPriorConfig: lambda must be > 0");
    }
};

struct LikelihoodConfig {
    double b = 1.0;  // Laplace scale

    void validate() const {
        if (!(b > 0.0)) throw std::invalid_argument("LikelihoodConfig: b must be > 0");
    }
};

enum class CodebookFit { L1, L2 };

struct CodebookFitResult {
    IntensityCodebook codebook;
    std::vector<bool> empty_class;  // classes with zero total weight keep their prior value
};

ImageField decode(const CategoricalField& z, const IntensityCodebook& codebook);

// Closed-form codebook refit from soft assignments and images warped into the
// common space. L1 uses the weighted median (lower-intensity tie-break), L2
// the weighted mean.
CodebookFitResult fit_codebook(const CategoricalField& z, const ImageField& warped_image,
                               CodebookFit mode,
                               const IntensityCodebook* previous = nullptr);

// -sum_w |u(w) - rec(w)| / b, additive constant dropped.
double laplace_loglik(const ImageField& u, const ImageField& reconstruction,
                      const LikelihoodConfig& cfg);

// KL of a mean-field Gaussian velocity posterior against the Laplacian-graph
// prior, constants dropped:
//   1/2 [ tr(lambda D Sigma - log Sigma) + lambda/2 sum_r sum_{q in N(r)}
//         |mu[r] - mu[q]|^2 ]
// with a per-voxel isotropic variance applied to each of the d components.
double velocity_prior_kl(const VectorField& mu, const ImageField& sigma_diag,
                         const VelocityPriorConfig& cfg);

// Quadratic term alone: lambda * sum_c mu_c^T L mu_c.
double velocity_prior_quadratic(const VectorField& mu, const VelocityPriorConfig& cfg);

struct ElboWeights {
    double reconstruction = 120.0;
    double structural = 160.0;
    double regularization = 10.0;
};

struct ElboBreakdown {
    double total = 0.0;
    double reconstruction = 0.0;          // sum_j loglik, unweighted
    double structural = 0.0;              // sum_l intrinsic distance, unweighted
    double regularization = 0.0;          // sum_{j,l} velocity KL, unweighted
    std::vector<double> recon_per_image;
    std::vector<double> structural_per_level;
    std::vector<double> kl_per_term;
};

// total = w_rec * sum_j loglik - w_str * sum_l D_l - w_reg * sum KL.
ElboBreakdown assemble_elbo(const std::vector<double>& recon_logliks,
                            const std::vector<double>& structural_per_level,
                            const std::vector<double>& velocity_kls,
                            const ElboWeights& weights);

struct Counterfactual {
    ImageField factual;
    ImageField counterfactual;
    ImageField difference;
};

// do(z_k = 0): zero out class k, renormalize the remaining mass, decode.
Counterfactual counterfactual_zero_class(const CategoricalField& z,
                                         const IntensityCodebook& codebook, int k);

// Transform intervention: factual = f(z o phi), counterfactual = f(z) o phi,
// nearest-neighbor warps. Equivariance makes the difference exactly zero.
Counterfactual counterfactual_transform(const CategoricalField& z,
                                        const IntensityCodebook& codebook,
                                        const VectorField& phi);

}  // namespace groupreg

#endif
