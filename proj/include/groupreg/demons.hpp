#ifndef GROUPREG_DEMONS_HPP
#define GROUPREG_DEMONS_HPP

#include "groupreg/field.hpp"

namespace groupreg {

struct DemonsConfig {
    double alpha = 1.0;        // velocity magnitude bound, in (0, alpha0)
    double alpha0 = 10.0;      // level-dependent upper bound
    double fluid_sigma = 1.0;  // Gaussian fluid-smoothing width, voxels
    double ridge = 1e-8;       // keeps the d x d solve well-posed
    double sigma_base = 1.0;   // base scale of the variance heuristic

    void validate() const {
        if (!(alpha > 0.0 && alpha < alpha0))
            throw std::invalid_argument("DemonsConfig: need 0 < alpha < alpha0");
        if (fluid_sigma < 0.0)
            throw std::invalid_argument("DemonsConfig: fluid_sigma must be >= 0");
        if (!(ridge > 0.0)) throw std::invalid_argument("DemonsConfig: ridge must be > 0");
    }
};

struct DemonsForceOutput {
    VectorField mu;           // normalized velocity mean, |mu|_2 <= alpha
    double sigma_phi_sq = 0;  // sample variance of the feature difference norm
    double max_norm = 0;      // max |raw force|_2 before normalization
};

// Symmetric Demons force between the fused probability map (fixed) and a
// warped single-view map (moving): per voxel
//   mu~ = -[J^T J + (sigma^2 + ridge) I]^-1 J^T (fixed - moving)
// with J = -1/2 (grad fixed + grad moving), then mu = alpha * mu~ / max|mu~|.
DemonsForceOutput demons_force(const CategoricalField& fixed,
                               const CategoricalField& moving_warped,
                               const DemonsConfig& cfg);

// Separable Gaussian smoothing per component, kernel truncated at 3 sigma,
// edge-clamped. sigma = 0 returns the input unchanged.
VectorField fluid_smooth(const VectorField& v, double sigma);

// Same smoothing applied to probability channels; channel sums are preserved,
// so the result is still a valid categorical field.
CategoricalField smooth_probs(const CategoricalField& f, double sigma);

// Normalized convolution: G*(w u) / G*(w), elementwise per component.
// Interpolates sparse confident values into low-confidence regions instead of
// attenuating them the way plain smoothing does.
VectorField confidence_smooth(const VectorField& u, const ImageField& weights,
                              double sigma);

// Gradient-confidence variance heuristic: sigma_base^2 / (1 + |J|_F^2).
ImageField estimate_velocity_variance(const CategoricalField& fixed,
                                      const CategoricalField& moving_warped,
                                      double sigma_base = 1.0);

// Solves (A + reg I) x = b for a symmetric d x d system (d = 2 or 3).
void solve_spd(int d, const double A[9], const double b[3], double reg, double x[3]);

}  // namespace groupreg

#endif
