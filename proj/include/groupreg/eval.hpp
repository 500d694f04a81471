#ifndef GROUPREG_EVAL_HPP
#define GROUPREG_EVAL_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "groupreg/field.hpp"

namespace groupreg {

// ---- groupwise metrics ----

// Mean over all unordered pairs of 2|A^B|/(|A|+|B|) for class c.
// Empty-vs-empty pairs contribute 1.0, empty-vs-nonempty 0.0.
double groupwise_dice(const std::vector<const LabelField*>& labels, int c);
// Average of groupwise_dice over classes 1..C-1 (background excluded).
double groupwise_dice_mean(const std::vector<const LabelField*>& labels);

struct AssdResult {
    double value = 0.0;
    int pairs_used = 0;
    int pairs_excluded = 0;  // pairs with an empty mask
};

// Pairwise-averaged symmetric mean surface distance for class c, using
// face-connectivity boundaries and an exact Euclidean distance transform.
AssdResult groupwise_assd(const std::vector<const LabelField*>& labels, int c);

// Groupwise warping index: RMS of group-mean-centered residuals of
// gt o predicted - id, restricted to voxels whose composed position lands in
// the foreground mask, averaged over images.
double groupwise_warping_index(const std::vector<const VectorField*>& ground_truth,
                               const std::vector<const VectorField*>& predicted,
                               const LabelField& foreground);

// Percentage of foreground voxels with non-positive Jacobian determinant,
// averaged over images. Pass nullptr for whole-grid evaluation.
double negative_jacobian_fraction(const std::vector<const VectorField*>& transforms,
                                  const LabelField* foreground);

// Squared Euclidean distance to the nearest set voxel (exact, separable).
std::vector<double> squared_distance_transform(const GridSpec& grid,
                                               const std::vector<char>& is_set);

// Face-connectivity boundary of {label == c}; out-of-grid counts as background.
std::vector<char> boundary_mask(const LabelField& labels, int c);

// ---- synthetic data ----

struct FfdSpec {
    double spacing = 10.0;       // control-point spacing, voxels
    double max_displacement = 3.0;
    uint64_t seed = 0;

    void validate() const {
        if (spacing < 2.0) throw std::invalid_argument("FfdSpec: spacing must be >= 2");
        if (max_displacement < 0.0)
            throw std::invalid_argument("FfdSpec: negative displacement bound");
        if (max_displacement >= spacing / 2.0)
            throw std::invalid_argument("FfdSpec: displacement bound must be < spacing/2");
    }
};

// Dense displacement field from uniform-random control displacements,
// cubic B-spline interpolated. Deterministic per seed.
VectorField random_ffd(const FfdSpec& spec, const GridSpec& grid);

struct PhantomShapeSpec {
    int num_classes = 4;            // background + 3 nested structures
    double outer_radius_frac = 0.34;  // relative to the smaller half-extent
    double aspect = 0.8;              // ellipse minor/major ratio
    double wobble = 0.15;             // angular radius modulation amplitude
    int speckles = 30;                // small contrasting spots inside the object
    double speckle_radius = 0.11;     // spot radius relative to the outer radius
};

struct PhantomGroup {
    std::vector<ImageField> images;          // one per group member, misaligned
    std::vector<LabelField> labels;          // warped with the same transforms
    std::vector<VectorField> ground_truth;   // the applied FFD displacements
    std::vector<ImageField> clean;           // undistorted renderings per member
    LabelField anatomy;                      // common undistorted label map
};

// Renders a nested-shape anatomy through per-member codebooks (one intensity
// per class), adds Gaussian noise, and misaligns each member by an
// independent random FFD. codebooks[j] has num_classes entries.
PhantomGroup make_phantom_group(const PhantomShapeSpec& shape, const GridSpec& grid,
                                const std::vector<std::vector<double>>& codebooks,
                                double noise_sigma,
                                const std::vector<FfdSpec>& ffds, uint64_t seed);

}  // namespace groupreg

#endif
