#include "groupreg/grid_ops.hpp"

#include <algorithm>
#include <cmath>

namespace groupreg {

void ImageField::validate() const {
    grid.validate();
    if (values.size() != grid.voxels())
        throw std::invalid_argument("ImageField: value count mismatch");
    for (double v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("ImageField: non-finite value");
}

void VectorField::validate() const {
    grid.validate();
    if (vectors.size() != grid.voxels() * static_cast<std::size_t>(grid.ndim()))
        throw std::invalid_argument("VectorField: component count mismatch");
    for (double v : vectors)
        if (!std::isfinite(v)) throw std::invalid_argument("VectorField: non-finite value");
}

void CategoricalField::validate(double tol) const {
    grid.validate();
    if (K < 2) throw std::invalid_argument("CategoricalField: K must be >= 2");
    if (probs.size() != grid.voxels() * static_cast<std::size_t>(K))
        throw std::invalid_argument("CategoricalField: prob count mismatch");
    const std::size_t n = grid.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = at(i);
        double s = 0.0;
        for (int k = 0; k < K; ++k) {
            if (!(p[k] >= 0.0 && p[k] <= 1.0))
                throw std::invalid_argument("CategoricalField: prob outside [0,1]");
            s += p[k];
        }
        if (std::abs(s - 1.0) > tol)
            throw std::invalid_argument("CategoricalField: voxel probs do not sum to 1");
    }
}

void LabelField::validate() const {
    grid.validate();
    if (labels.size() != grid.voxels())
        throw std::invalid_argument("LabelField: label count mismatch");
    for (int32_t l : labels)
        if (l < 0 || l >= num_classes)
            throw std::invalid_argument("LabelField: label out of range");
}

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

void interpolate_channels(const GridSpec& grid, const double* data, int channels,
                          const double* point, double* out) {
    const int d = grid.ndim();
    int base[3];
    double frac[3];
    for (int a = 0; a < d; ++a) {
        if (!std::isfinite(point[a]))
            throw std::invalid_argument("interpolate: non-finite point");
        double p = point[a];
        // clamp-to-edge
        if (p < 0.0) p = 0.0;
        const double pmax = static_cast<double>(grid.dims[a] - 1);
        if (p > pmax) p = pmax;
        double fl = std::floor(p);
        base[a] = static_cast<int>(fl);
        frac[a] = p - fl;
        if (base[a] >= grid.dims[a] - 1) {
            base[a] = grid.dims[a] - 2;
            frac[a] = p - static_cast<double>(base[a]);
        }
    }
    for (int c = 0; c < channels; ++c) out[c] = 0.0;
    const int corners = 1 << d;
    int coord[3];
    for (int m = 0; m < corners; ++m) {
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            const int off = (m >> a) & 1;
            w *= off ? frac[a] : 1.0 - frac[a];
            coord[a] = base[a] + off;
        }
        if (w == 0.0) continue;
        const double* src = data + grid.index(coord) * static_cast<std::size_t>(channels);
        for (int c = 0; c < channels; ++c) out[c] += w * src[c];
    }
}

double interpolate(const ImageField& f, const double* point) {
    double v;
    interpolate_channels(f.grid, f.values.data(), 1, point, &v);
    return v;
}

void interpolate(const VectorField& f, const double* point, double* out) {
    interpolate_channels(f.grid, f.vectors.data(), f.grid.ndim(), point, out);
}

void interpolate(const CategoricalField& f, const double* point, double* out) {
    interpolate_channels(f.grid, f.probs.data(), f.K, point, out);
    double s = 0.0;
    for (int k = 0; k < f.K; ++k) {
        if (out[k] < 0.0) out[k] = 0.0;
        s += out[k];
    }
    if (s > 0.0)
        for (int k = 0; k < f.K; ++k) out[k] /= s;
    else
        for (int k = 0; k < f.K; ++k) out[k] = 1.0 / f.K;
}

namespace {

// Iterates voxels of `grid` and calls fn(linear_index, coord).
template <typename Fn>
void for_each_voxel(const GridSpec& grid, Fn&& fn) {
    const int d = grid.ndim();
    int coord[3] = {0, 0, 0};
    const std::size_t n = grid.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        fn(i, coord);
        for (int a = 0; a < d; ++a) {
            if (++coord[a] < grid.dims[a]) break;
            coord[a] = 0;
        }
    }
}

template <typename Field>
void check_same_grid(const Field& f, const VectorField& t) {
    if (f.grid != t.grid) throw std::invalid_argument("warp: field/transform grid mismatch");
}

// Shared warp loop over a C-channel buffer.
void warp_channels(const GridSpec& grid, const double* src, int channels,
                   const VectorField& t, Interp mode, double* dst) {
    const int d = grid.ndim();
    for_each_voxel(grid, [&](std::size_t i, const int* coord) {
        const double* disp = t.at(i);
        bool zero = true;
        for (int a = 0; a < d; ++a)
            if (disp[a] != 0.0) { zero = false; break; }
        double* out = dst + i * static_cast<std::size_t>(channels);
        if (zero) {  // bit-exact identity
            const double* in = src + i * static_cast<std::size_t>(channels);
            std::copy(in, in + channels, out);
            return;
        }
        double p[3];
        for (int a = 0; a < d; ++a) p[a] = static_cast<double>(coord[a]) + disp[a];
        if (mode == Interp::Nearest) {
            int c[3];
            for (int a = 0; a < d; ++a)
                c[a] = clampi(static_cast<int>(std::lround(p[a])), 0, grid.dims[a] - 1);
            const double* in = src + grid.index(c) * static_cast<std::size_t>(channels);
            std::copy(in, in + channels, out);
        } else {
            interpolate_channels(grid, src, channels, p, out);
        }
    });
}

}  // namespace

ImageField warp(const ImageField& f, const VectorField& t, Interp mode) {
    check_same_grid(f, t);
    ImageField out(f.grid);
    warp_channels(f.grid, f.values.data(), 1, t, mode, out.values.data());
    return out;
}

VectorField warp(const VectorField& f, const VectorField& t, Interp mode) {
    check_same_grid(f, t);
    VectorField out(f.grid);
    warp_channels(f.grid, f.vectors.data(), f.grid.ndim(), t, mode, out.vectors.data());
    return out;
}

CategoricalField warp(const CategoricalField& f, const VectorField& t, Interp mode) {
    check_same_grid(f, t);
    CategoricalField out(f.grid, f.K);
    warp_channels(f.grid, f.probs.data(), f.K, t, mode, out.probs.data());
    if (mode == Interp::Linear) {
        // clamp-edge mixing can leave tiny renormalization residue
        const std::size_t n = f.grid.voxels();
        for (std::size_t i = 0; i < n; ++i) {
            double* p = out.at(i);
            double s = 0.0;
            for (int k = 0; k < f.K; ++k) {
                if (p[k] < 0.0) p[k] = 0.0;
                s += p[k];
            }
            if (s > 0.0 && s != 1.0)
                for (int k = 0; k < f.K; ++k) p[k] /= s;
        }
    }
    return out;
}

LabelField warp(const LabelField& f, const VectorField& t) {
    if (f.grid != t.grid) throw std::invalid_argument("warp: field/transform grid mismatch");
    LabelField out(f.grid, f.num_classes);
    const int d = f.grid.ndim();
    for_each_voxel(f.grid, [&](std::size_t i, const int* coord) {
        const double* disp = t.at(i);
        int c[3];
        for (int a = 0; a < d; ++a) {
            const double p = static_cast<double>(coord[a]) + disp[a];
            c[a] = clampi(static_cast<int>(std::lround(p)), 0, f.grid.dims[a] - 1);
        }
        out.labels[i] = f.labels[f.grid.index(c)];
    });
    return out;
}

namespace {

// d/dx_axis of a C-channel buffer at one voxel: central in the interior,
// one-sided at the boundary.
inline void axis_derivative(const GridSpec& grid, const double* data, int channels,
                            const int* coord, int axis, double* out) {
    int lo[3], hi[3];
    for (int a = 0; a < grid.ndim(); ++a) lo[a] = hi[a] = coord[a];
    double scale;
    if (coord[axis] == 0) {
        hi[axis] = 1;
        scale = 1.0;
    } else if (coord[axis] == grid.dims[axis] - 1) {
        lo[axis] = coord[axis] - 1;
        scale = 1.0;
    } else {
        lo[axis] = coord[axis] - 1;
        hi[axis] = coord[axis] + 1;
        scale = 0.5;
    }
    const double* a = data + grid.index(hi) * static_cast<std::size_t>(channels);
    const double* b = data + grid.index(lo) * static_cast<std::size_t>(channels);
    for (int c = 0; c < channels; ++c) out[c] = scale * (a[c] - b[c]);
}

}  // namespace

VectorField gradient(const ImageField& f) {
    VectorField g(f.grid);
    const int d = f.grid.ndim();
    for_each_voxel(f.grid, [&](std::size_t i, const int* coord) {
        for (int a = 0; a < d; ++a)
            axis_derivative(f.grid, f.values.data(), 1, coord, a, g.at(i) + a);
    });
    return g;
}

std::vector<double> gradient(const CategoricalField& f) {
    const int d = f.grid.ndim();
    const int K = f.K;
    std::vector<double> g(f.grid.voxels() * static_cast<std::size_t>(K * d));
    std::vector<double> tmp(K);
    for_each_voxel(f.grid, [&](std::size_t i, const int* coord) {
        double* out = g.data() + i * static_cast<std::size_t>(K * d);
        for (int a = 0; a < d; ++a) {
            axis_derivative(f.grid, f.probs.data(), K, coord, a, tmp.data());
            for (int k = 0; k < K; ++k) out[k * d + a] = tmp[k];
        }
    });
    return g;
}

ImageField jacobian_determinant(const VectorField& u) {
    const int d = u.grid.ndim();
    ImageField det(u.grid);
    std::vector<double> row(d);
    for_each_voxel(u.grid, [&](std::size_t i, const int* coord) {
        double J[3][3] = {{0}};
        for (int a = 0; a < d; ++a) {
            axis_derivative(u.grid, u.vectors.data(), d, coord, a, row.data());
            for (int c = 0; c < d; ++c) J[c][a] = row[c];
        }
        for (int a = 0; a < d; ++a) J[a][a] += 1.0;
        if (d == 2) {
            det.values[i] = J[0][0] * J[1][1] - J[0][1] * J[1][0];
        } else {
            det.values[i] = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                            J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                            J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
        }
    });
    return det;
}

namespace {

void check_resample_dims(const GridSpec& src, const GridSpec& target) {
    if (src.ndim() != target.ndim())
        throw std::invalid_argument("resample: dimensionality mismatch");
}

// align-corners mapping from target voxel coordinates to source coordinates
void resample_channels(const GridSpec& src, const double* data, int channels,
                       const GridSpec& target, double* dst) {
    const int d = src.ndim();
    double scale[3];
    for (int a = 0; a < d; ++a)
        scale[a] = target.dims[a] > 1
                       ? static_cast<double>(src.dims[a] - 1) / (target.dims[a] - 1)
                       : 0.0;
    for_each_voxel(target, [&](std::size_t i, const int* coord) {
        double p[3];
        for (int a = 0; a < d; ++a) p[a] = coord[a] * scale[a];
        interpolate_channels(src, data, channels, p,
                             dst + i * static_cast<std::size_t>(channels));
    });
}

}  // namespace

ImageField resample(const ImageField& f, const GridSpec& target) {
    check_resample_dims(f.grid, target);
    if (f.grid == target) return f;
    ImageField out(target);
    resample_channels(f.grid, f.values.data(), 1, target, out.values.data());
    return out;
}

CategoricalField resample(const CategoricalField& f, const GridSpec& target) {
    check_resample_dims(f.grid, target);
    if (f.grid == target) return f;
    CategoricalField out(target, f.K);
    resample_channels(f.grid, f.probs.data(), f.K, target, out.probs.data());
    const std::size_t n = target.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        double* p = out.at(i);
        double s = 0.0;
        for (int k = 0; k < f.K; ++k) s += p[k];
        if (s > 0.0)
            for (int k = 0; k < f.K; ++k) p[k] /= s;
    }
    return out;
}

VectorField resample_displacement(const VectorField& f, const GridSpec& target) {
    check_resample_dims(f.grid, target);
    if (f.grid == target) return f;
    VectorField out(target);
    const int d = f.grid.ndim();
    resample_channels(f.grid, f.vectors.data(), d, target, out.vectors.data());
    const std::size_t n = target.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        double* v = out.at(i);
        for (int a = 0; a < d; ++a)
            v[a] *= static_cast<double>(target.dims[a]) / f.grid.dims[a];
    }
    return out;
}

CategoricalField downsample_average(const CategoricalField& f, const GridSpec& target) {
    check_resample_dims(f.grid, target);
    if (f.grid == target) return f;
    CategoricalField out(target, f.K);
    const int d = f.grid.ndim();
    const int K = f.K;
    for_each_voxel(target, [&](std::size_t i, const int* coord) {
        int lo[3] = {0, 0, 0};
        int hi[3] = {1, 1, 1};
        for (int a = 0; a < d; ++a) {
            lo[a] = static_cast<int>(static_cast<long>(coord[a]) * f.grid.dims[a] /
                                     target.dims[a]);
            hi[a] = static_cast<int>(static_cast<long>(coord[a] + 1) * f.grid.dims[a] /
                                     target.dims[a]);
            if (hi[a] <= lo[a]) hi[a] = lo[a] + 1;
        }
        double* p = out.at(i);
        std::fill(p, p + K, 0.0);
        int count = 0;
        int c[3] = {lo[0], d > 1 ? lo[1] : 0, d > 2 ? lo[2] : 0};
        bool done = false;
        while (!done) {
            const double* src = f.at(f.grid.index(c));
            for (int k = 0; k < K; ++k) p[k] += src[k];
            ++count;
            done = true;
            for (int a = 0; a < d; ++a) {
                if (++c[a] < hi[a]) { done = false; break; }
                c[a] = lo[a];
            }
        }
        double s = 0.0;
        for (int k = 0; k < K; ++k) {
            p[k] /= count;
            s += p[k];
        }
        for (int k = 0; k < K; ++k) p[k] /= s;
    });
    return out;
}

}  // namespace groupreg
