#ifndef GROUPREG_STRUCTREP_HPP
#define GROUPREG_STRUCTREP_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "groupreg/field.hpp"

namespace groupreg {

// Probability floor applied before any log-space fusion, keeping every KL
// term finite.
inline constexpr double kProbFloor = 1e-6;

// Per-modality 1-D intensity mixture standing in for a learned encoder.
struct ModalityMixture {
    std::string modality;
    std::vector<double> means;
    std::vector<double> variances;
    std::vector<double> weights;
    double final_log_likelihood = 0.0;

    int num_classes() const { return static_cast<int>(means.size()); }
};

struct ViewExtractorParams {
    int K = 0;
    double prob_floor = kProbFloor;
    std::map<std::string, ModalityMixture> mixtures;

    bool has_modality(const std::string& m) const { return mixtures.count(m) != 0; }

    // Plain-text key-value serialization for reproducibility.
    std::string to_text() const;
    static ViewExtractorParams from_text(const std::string& text);
};

// Fits a K-component Gaussian mixture per modality by EM on voxel
// intensities. Deterministic given the seed; the log-likelihood is
// non-decreasing over iterations.
ViewExtractorParams fit_view_extractor(
    const std::vector<const ImageField*>& images,
    const std::vector<std::string>& modalities, int K, int iters, uint64_t seed);

// Per-voxel mixture responsibilities, floored and renormalized.
CategoricalField extract_posterior(const ImageField& image,
                                   const ViewExtractorParams& params,
                                   const std::string& modality);

// Voxelwise normalized N-th-root product, computed in log space.
CategoricalField geometric_mean(const std::vector<const CategoricalField*>& views);

// Voxelwise average of the view probabilities.
CategoricalField arithmetic_mean(const std::vector<const CategoricalField*>& views);

// Precision-weighted fusion of diagonal Gaussians:
// fused precision = mean of view precisions, fused mean precision-weighted.
void geometric_mean_gaussian(const std::vector<const std::vector<double>*>& means,
                             const std::vector<const std::vector<double>*>& variances,
                             std::vector<double>& fused_mean,
                             std::vector<double>& fused_variance);

struct IntrinsicDistance {
    double total = 0.0;                  // (1/N) sum_j KL(fused || view_j)
    std::vector<double> per_view;        // KL(fused || view_j), summed over voxels
};

IntrinsicDistance intrinsic_distance(const CategoricalField& fused,
                                     const std::vector<const CategoricalField*>& views);

// Exact KL(geometric mean || arithmetic mean), both categorical.
double exact_mixture_kl(const CategoricalField& fused,
                        const std::vector<const CategoricalField*>& views);

struct ArgminCheckReport {
    int trials = 0;
    int violations = 0;
    double reference = 0.0;   // intrinsic distance at the geometric mean
    double worst_margin = 0.0;  // min over trials of D[q'] - D[q*]
};

// Samples random perturbations q' of the geometric mean and verifies
// D[q'] >= D[q*] - 1e-10 for each.
ArgminCheckReport variational_argmin_check(
    const std::vector<const CategoricalField*>& views, int trials,
    double magnitude, uint64_t seed);

}  // namespace groupreg

#endif
