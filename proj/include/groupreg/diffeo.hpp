#ifndef GROUPREG_DIFFEO_HPP
#define GROUPREG_DIFFEO_HPP

#include <vector>

#include "groupreg/field.hpp"

namespace groupreg {

// Per-image, per-level stationary velocity fields. levels[l][j] is the field
// of image j at level l (0 = coarsest).
struct VelocitySet {
    std::vector<std::vector<VectorField>> levels;

    int num_levels() const { return static_cast<int>(levels.size()); }
    int num_images() const { return levels.empty() ? 0 : static_cast<int>(levels[0].size()); }
};

// Displacement of exp(v) by scaling and squaring. steps <= 0 selects the
// step count automatically so the scaled field is at most half a voxel.
VectorField exponentiate(const VectorField& v, int steps = -1);

// (a o b)(w) = a(w + b(w)) + b(w), both displacement fields on one grid.
VectorField compose(const VectorField& a, const VectorField& b);

// Subtracts the group average so the velocities sum to the zero field.
std::vector<VectorField> center_velocities(const std::vector<VectorField>& totals);
void center_velocities_inplace(std::vector<VectorField>& totals);

// Resamples every level to the finest grid (with vector rescaling) and sums.
std::vector<VectorField> aggregate_levels(const VelocitySet& vset);

double max_vector_norm(const VectorField& v);

}  // namespace groupreg

#endif
