#ifndef GROUPREG_GRID_OPS_HPP
#define GROUPREG_GRID_OPS_HPP

#include "groupreg/field.hpp"

namespace groupreg {

enum class Interp { Linear, Nearest };

// Multilinear sample of a C-channel field at a fractional voxel coordinate.
// Out-of-domain coordinates are clamped to the boundary.
void interpolate_channels(const GridSpec& grid, const double* data, int channels,
                          const double* point, double* out);

double interpolate(const ImageField& f, const double* point);
void interpolate(const VectorField& f, const double* point, double* out);
// Categorical samples are renormalized back onto the simplex.
void interpolate(const CategoricalField& f, const double* point, double* out);

// out(w) = field(w + transform(w)). Warping by the all-zero transform is the
// identity, bit-exactly.
ImageField warp(const ImageField& f, const VectorField& t, Interp mode = Interp::Linear);
VectorField warp(const VectorField& f, const VectorField& t, Interp mode = Interp::Linear);
CategoricalField warp(const CategoricalField& f, const VectorField& t,
                      Interp mode = Interp::Linear);
LabelField warp(const LabelField& f, const VectorField& t);  // always nearest

// Central differences in the interior, one-sided at the boundary, voxel units.
VectorField gradient(const ImageField& f);
// Per-class gradients, K*d values per voxel (class-major).
std::vector<double> gradient(const CategoricalField& f);

// det(I + grad u) per voxel for a displacement field u.
ImageField jacobian_determinant(const VectorField& u);

ImageField resample(const ImageField& f, const GridSpec& target);
CategoricalField resample(const CategoricalField& f, const GridSpec& target);
// Displacement resampling rescales vector components by the per-axis
// grid-size ratio.
VectorField resample_displacement(const VectorField& f, const GridSpec& target);

// Factor-2 average pooling used to build posterior pyramids.
CategoricalField downsample_average(const CategoricalField& f, const GridSpec& target);

}  // namespace groupreg

#endif
