#ifndef GROUPREG_ENGINE_HPP
#define GROUPREG_ENGINE_HPP

#include <string>
#include <vector>

#include "groupreg/demons.hpp"
#include "groupreg/diffeo.hpp"
#include "groupreg/generative.hpp"
#include "groupreg/structrep.hpp"

namespace groupreg {

struct EngineConfig {
    int levels = 3;
    int K = 8;
    int iters_per_level = 30;
    double convergence_tol = 1e-4;
    int em_iters = 50;

    double alpha0_finest = 10.0;  // alpha0 at level l is alpha0_finest * 2^(l-L)
    double alpha_fraction = 0.4;  // alpha = alpha_fraction * alpha0^l
    double fluid_sigma = 1.0;
    double diffusion_sigma = 1.0;  // proximal smoothing of the accumulated
                                   // level velocity, applied once per iteration
    double diffusion_sigma_final = -1.0;  // > 0 anneals the proximal smoothing
                                          // geometrically towards this value over
                                          // the level iterations (continuation)
    double feature_sigma = 0.0;    // probability-map smoothing before the force
    double nc_sigma = 0.0;         // confidence-weighted update smoothing, 0 = off
    double nc_sigma_final = -1.0;  // > 0 anneals nc_sigma geometrically towards
                                   // this value over the level iterations
    double ridge = 1e-8;
    double sigma_base = 1.0;
    bool line_search = true;  // bounded scalar line search on the update step
    int stall_patience = 1;   // rejected-step iterations tolerated before a
                              // level is declared converged

    VelocityPriorConfig prior;
    LikelihoodConfig likelihood;
    ElboWeights weights;
    uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (levels < 1) throw std::invalid_argument("EngineConfig: levels must be >= 1");
        if (K < 2) throw std::invalid_argument("EngineConfig: K must be >= 2");
        if (iters_per_level < 1)
            throw std::invalid_argument("EngineConfig: iters_per_level must be >= 1");
        if (!(convergence_tol > 0.0))
            throw std::invalid_argument("EngineConfig: convergence_tol must be > 0");
        if (!(alpha_fraction > 0.0 && alpha_fraction < 1.0))
            throw std::invalid_argument("EngineConfig: alpha_fraction must be in (0,1)");
        prior.validate();
        likelihood.validate();
    }

    double alpha0_at(int level) const {  // level in [0, levels)
        return alpha0_finest * std::pow(2.0, static_cast<double>(level + 1 - levels));
    }
};

struct TraceEntry {
    int level = 0;
    int iteration = 0;
    double objective = 0.0;  // level intrinsic distance driving convergence
    double elbo = 0.0;
    double recon = 0.0;
    double structural = 0.0;
    double regularization = 0.0;
    double step_scale = 1.0;
};

struct GroupState {
    std::vector<ImageField> images;
    std::vector<std::string> modalities;
    ViewExtractorParams extractor;
    std::vector<CategoricalField> posteriors;  // finest-grid per image
    VelocitySet velocities;
    std::vector<VectorField> totals;           // centered v_j^+ on the finest grid
    std::vector<VectorField> forward;          // exp(v_j^+)
    std::vector<VectorField> inverse;          // exp(-v_j^+)
    CategoricalField fused;                    // final geometric mean in common space
    std::vector<IntensityCodebook> codebooks;  // per image
    std::vector<TraceEntry> trace;

    int num_images() const { return static_cast<int>(images.size()); }
};

// Full pipeline: fits the per-modality view extractors, then runs the
// coarse-to-fine groupwise Demons loop.
GroupState register_group(const std::vector<ImageField>& images,
                          const std::vector<std::string>& modalities,
                          const EngineConfig& cfg);

// Same loop with pre-fitted extractors; accepts any group size N' >= 2 and
// any subset of the trained modalities.
GroupState register_group_scaled(const std::vector<ImageField>& images,
                                 const std::vector<std::string>& modalities,
                                 const ViewExtractorParams& extractor,
                                 const EngineConfig& cfg);

void export_state(const GroupState& state, const std::string& path);
GroupState import_state(const std::string& path);

}  // namespace groupreg

#endif
