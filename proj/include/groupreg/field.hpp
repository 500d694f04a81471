#ifndef GROUPREG_FIELD_HPP
#define GROUPREG_FIELD_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace groupreg {

// Regular grid on which all fields live. dims are per-axis voxel counts,
// spacing is the physical size of a voxel along each axis. Axis 0 is the
// fastest-varying index in memory.
struct GridSpec {
    std::vector<int> dims;
    std::vector<double> spacing;

    GridSpec() = default;
    GridSpec(std::vector<int> d, std::vector<double> s = {})
        : dims(std::move(d)), spacing(std::move(s)) {
        if (spacing.empty()) spacing.assign(dims.size(), 1.0);
        validate();
    }

    int ndim() const { return static_cast<int>(dims.size()); }

    std::size_t voxels() const {
        std::size_t n = 1;
        for (int d : dims) n *= static_cast<std::size_t>(d);
        return n;
    }

    void validate() const {
        if (dims.size() != 2 && dims.size() != 3)
            throw std::invalid_argument("GridSpec: dimensionality must be 2 or 3");
        if (spacing.size() != dims.size())
            throw std::invalid_argument("GridSpec: spacing/dims length mismatch");
        for (int d : dims)
            if (d < 2) throw std::invalid_argument("GridSpec: every dim must be >= 2");
        for (double s : spacing)
            if (!(s > 0.0)) throw std::invalid_argument("GridSpec: spacing must be > 0");
    }

    bool operator==(const GridSpec& o) const {
        return dims == o.dims && spacing == o.spacing;
    }
    bool operator!=(const GridSpec& o) const { return !(*this == o); }

    // Linear index of an integer voxel coordinate (axis 0 fastest).
    std::size_t index(const int* coord) const {
        std::size_t idx = 0;
        for (int a = ndim() - 1; a >= 0; --a)
            idx = idx * static_cast<std::size_t>(dims[a]) + static_cast<std::size_t>(coord[a]);
        return idx;
    }
};

// Scalar intensity volume.
struct ImageField {
    GridSpec grid;
    std::vector<double> values;

    ImageField() = default;
    explicit ImageField(GridSpec g, double fill = 0.0)
        : grid(std::move(g)), values(grid.voxels(), fill) {}

    void validate() const;
};

// One d-vector per voxel, components interleaved, in voxel units.
struct VectorField {
    GridSpec grid;
    std::vector<double> vectors;

    VectorField() = default;
    explicit VectorField(GridSpec g)
        : grid(std::move(g)), vectors(grid.voxels() * grid.ndim(), 0.0) {}

    double* at(std::size_t voxel) { return vectors.data() + voxel * grid.ndim(); }
    const double* at(std::size_t voxel) const { return vectors.data() + voxel * grid.ndim(); }

    void validate() const;
};

// Per-voxel K-class probability simplex, classes interleaved.
struct CategoricalField {
    GridSpec grid;
    int K = 0;
    std::vector<double> probs;

    CategoricalField() = default;
    CategoricalField(GridSpec g, int k)
        : grid(std::move(g)), K(k), probs(grid.voxels() * static_cast<std::size_t>(k), 0.0) {
        if (k < 2) throw std::invalid_argument("CategoricalField: K must be >= 2");
    }

    double* at(std::size_t voxel) { return probs.data() + voxel * static_cast<std::size_t>(K); }
    const double* at(std::size_t voxel) const {
        return probs.data() + voxel * static_cast<std::size_t>(K);
    }

    void validate(double tol = 1e-9) const;
};

// Per-voxel integer labels in [0, C).
struct LabelField {
    GridSpec grid;
    int num_classes = 0;
    std::vector<int32_t> labels;

    LabelField() = default;
    LabelField(GridSpec g, int c)
        : grid(std::move(g)), num_classes(c), labels(grid.voxels(), 0) {}

    void validate() const;
};

}  // namespace groupreg

#endif
