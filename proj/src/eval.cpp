#include "groupreg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "groupreg/grid_ops.hpp"

namespace groupreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_group(const std::vector<const LabelField*>& labels) {
    if (labels.size() < 2)
        throw std::invalid_argument("groupwise metric: at least 2 label fields required");
    for (const auto* l : labels)
        if (l->grid != labels[0]->grid)
            throw std::invalid_argument("groupwise metric: grid mismatch");
}

double pairwise_dice(const LabelField& a, const LabelField& b, int c) {
    std::size_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        const bool ia = a.labels[i] == c, ib = b.labels[i] == c;
        na += ia;
        nb += ib;
        inter += ia && ib;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

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

}  // namespace

double groupwise_dice(const std::vector<const LabelField*>& labels, int c) {
    check_group(labels);
    double acc = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t j = i + 1; j < labels.size(); ++j) {
            acc += pairwise_dice(*labels[i], *labels[j], c);
            ++pairs;
        }
    return acc / pairs;
}

double groupwise_dice_mean(const std::vector<const LabelField*>& labels) {
    check_group(labels);
    const int C = labels[0]->num_classes;
    if (C < 2) throw std::invalid_argument("groupwise_dice_mean: need foreground classes");
    double acc = 0.0;
    for (int c = 1; c < C; ++c) acc += groupwise_dice(labels, c);
    return acc / (C - 1);
}

std::vector<char> boundary_mask(const LabelField& labels, int c) {
    const GridSpec& grid = labels.grid;
    const int d = grid.ndim();
    std::vector<char> out(grid.voxels(), 0);
    for_each_voxel(grid, [&](std::size_t i, const int* coord) {
        if (labels.labels[i] != c) return;
        for (int a = 0; a < d; ++a) {
            for (int dir = -1; dir <= 1; dir += 2) {
                const int q = coord[a] + dir;
                if (q < 0 || q >= grid.dims[a]) {
                    out[i] = 1;  // grid border counts as background
                    return;
                }
                int nb[3] = {coord[0], coord[1], coord[2]};
                nb[a] = q;
                if (labels.labels[grid.index(nb)] != c) {
                    out[i] = 1;
                    return;
                }
            }
        }
    });
    return out;
}

namespace {

// 1-D lower envelope of parabolas (squared-distance transform pass).
void edt_1d(const std::vector<double>& f, std::vector<double>& out) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s;
        while (true) {
            if (f[v[k]] == kInf) {
                // previous site inactive; replace it
                if (k == 0) {
                    v[0] = q;
                    z[0] = -kInf;
                    z[1] = kInf;
                    s = kInf;
                    break;
                }
                --k;
                continue;
            }
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s <= z[k]) {
                --k;
                continue;
            }
            break;
        }
        if (s == kInf) continue;
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (f[v[0]] == kInf) {  // no sites at all
        std::fill(out.begin(), out.end(), kInf);
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        out[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(const GridSpec& grid,
                                               const std::vector<char>& is_set) {
    const int d = grid.ndim();
    std::vector<double> dist(grid.voxels());
    for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = is_set[i] ? 0.0 : kInf;

    // process each axis: run 1-D transforms along all lines
    for (int axis = 0; axis < d; ++axis) {
        const int len = grid.dims[axis];
        std::vector<double> line(len), outline(len);
        // iterate over all lines along `axis`
        GridSpec rest = grid;
        int coord[3] = {0, 0, 0};
        std::size_t nlines = grid.voxels() / static_cast<std::size_t>(len);
        // enumerate coordinates with coord[axis] == 0
        std::size_t done = 0;
        while (done < nlines) {
            int c[3] = {coord[0], coord[1], coord[2]};
            for (int t = 0; t < len; ++t) {
                c[axis] = t;
                line[t] = dist[grid.index(c)];
            }
            edt_1d(line, outline);
            for (int t = 0; t < len; ++t) {
                c[axis] = t;
                dist[grid.index(c)] = outline[t];
            }
            ++done;
            // advance to the next line start
            for (int a = 0; a < d; ++a) {
                if (a == axis) continue;
                if (++coord[a] < grid.dims[a]) break;
                coord[a] = 0;
            }
        }
        (void)rest;
    }
    return dist;
}

namespace {

struct Surface {
    std::vector<std::size_t> voxels;  // linear indices of boundary voxels
    std::vector<double> sq_dist;      // squared EDT seeded on this boundary
};

Surface make_surface(const LabelField& labels, int c) {
    Surface s;
    const std::vector<char> mask = boundary_mask(labels, c);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) s.voxels.push_back(i);
    if (!s.voxels.empty()) s.sq_dist = squared_distance_transform(labels.grid, mask);
    return s;
}

}  // namespace

AssdResult groupwise_assd(const std::vector<const LabelField*>& labels, int c) {
    check_group(labels);
    std::vector<Surface> surfaces;
    surfaces.reserve(labels.size());
    for (const auto* l : labels) surfaces.push_back(make_surface(*l, c));

    AssdResult res;
    double acc = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t j = i + 1; j < labels.size(); ++j) {
            const Surface& A = surfaces[i];
            const Surface& B = surfaces[j];
            if (A.voxels.empty() || B.voxels.empty()) {
                ++res.pairs_excluded;
                continue;
            }
            double sum = 0.0;
            for (std::size_t v : A.voxels) sum += std::sqrt(B.sq_dist[v]);
            for (std::size_t v : B.voxels) sum += std::sqrt(A.sq_dist[v]);
            acc += sum / static_cast<double>(A.voxels.size() + B.voxels.size());
            ++res.pairs_used;
        }
    }
    if (res.pairs_used == 0)
        throw std::invalid_argument("groupwise_assd: every pair has an empty mask");
    res.value = acc / res.pairs_used;
    return res;
}

double groupwise_warping_index(const std::vector<const VectorField*>& ground_truth,
                               const std::vector<const VectorField*>& predicted,
                               const LabelField& foreground) {
    if (ground_truth.size() != predicted.size() || ground_truth.size() < 2)
        throw std::invalid_argument("groupwise_warping_index: need >= 2 matched transforms");
    const GridSpec& grid = foreground.grid;
    const int d = grid.ndim();
    const std::size_t N = ground_truth.size();
    for (std::size_t j = 0; j < N; ++j)
        if (ground_truth[j]->grid != grid || predicted[j]->grid != grid)
            throw std::invalid_argument("groupwise_warping_index: grid mismatch");

    // r_j(w) = (gt_j o pred_j)(w) - w, as a displacement field
    std::vector<VectorField> residuals;
    residuals.reserve(N);
    for (std::size_t j = 0; j < N; ++j) {
        VectorField comp(grid);
        for_each_voxel(grid, [&](std::size_t i, const int* coord) {
            const double* dp = predicted[j]->at(i);
            double p[3], g[3];
            for (int a = 0; a < d; ++a) p[a] = coord[a] + dp[a];
            interpolate(*ground_truth[j], p, g);
            double* o = comp.at(i);
            for (int a = 0; a < d; ++a) o[a] = dp[a] + g[a];
        });
        residuals.push_back(std::move(comp));
    }

    // group-mean residual per voxel
    VectorField mean(grid);
    for (const auto& r : residuals)
        for (std::size_t i = 0; i < mean.vectors.size(); ++i)
            mean.vectors[i] += r.vectors[i];
    for (double& v : mean.vectors) v /= static_cast<double>(N);

    double total = 0.0;
    int contributing = 0;
    for (std::size_t j = 0; j < N; ++j) {
        double ss = 0.0;
        std::size_t cnt = 0;
        for_each_voxel(grid, [&](std::size_t i, const int* coord) {
            // effective foreground: composed position lands in the mask
            const double* r = residuals[j].at(i);
            int c[3];
            for (int a = 0; a < d; ++a) {
                const double p = coord[a] + r[a];
                c[a] = std::clamp(static_cast<int>(std::lround(p)), 0, grid.dims[a] - 1);
            }
            if (foreground.labels[grid.index(c)] == 0) return;
            const double* m = mean.at(i);
            for (int a = 0; a < d; ++a) {
                const double cb = r[a] - m[a];
                ss += cb * cb;
            }
            ++cnt;
        });
        if (cnt == 0) continue;
        total += std::sqrt(ss / static_cast<double>(cnt));
        ++contributing;
    }
    if (contributing == 0)
        throw std::invalid_argument("groupwise_warping_index: empty effective foreground");
    return total / contributing;
}

double negative_jacobian_fraction(const std::vector<const VectorField*>& transforms,
                                  const LabelField* foreground) {
    if (transforms.empty())
        throw std::invalid_argument("negative_jacobian_fraction: no transforms");
    double acc = 0.0;
    for (const auto* t : transforms) {
        const ImageField det = jacobian_determinant(*t);
        std::size_t neg = 0, total = 0;
        for (std::size_t i = 0; i < det.values.size(); ++i) {
            if (foreground && foreground->labels[i] == 0) continue;
            ++total;
            if (det.values[i] <= 0.0) ++neg;
        }
        if (total > 0) acc += 100.0 * static_cast<double>(neg) / static_cast<double>(total);
    }
    return acc / static_cast<double>(transforms.size());
}

namespace {

// cubic B-spline basis on [0,1)
inline void bspline_weights(double u, double w[4]) {
    const double u2 = u * u, u3 = u2 * u;
    w[0] = (1.0 - 3.0 * u + 3.0 * u2 - u3) / 6.0;
    w[1] = (4.0 - 6.0 * u2 + 3.0 * u3) / 6.0;
    w[2] = (1.0 + 3.0 * u + 3.0 * u2 - 3.0 * u3) / 6.0;
    w[3] = u3 / 6.0;
}

}  // namespace

VectorField random_ffd(const FfdSpec& spec, const GridSpec& grid) {
    spec.validate();
    const int d = grid.ndim();
    // control lattice with one-knot margin on each side
    int ncp[3] = {1, 1, 1};
    for (int a = 0; a < d; ++a)
        ncp[a] = static_cast<int>(std::floor((grid.dims[a] - 1) / spec.spacing)) + 4;

    std::size_t total = 1;
    for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(ncp[a]);
    std::vector<double> ctrl(total * static_cast<std::size_t>(d));
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uni(-spec.max_displacement,
                                               spec.max_displacement);
    for (double& c : ctrl) c = spec.max_displacement > 0.0 ? uni(rng) : 0.0;

    auto ctrl_index = [&](const int* c) {
        std::size_t idx = 0;
        for (int a = d - 1; a >= 0; --a)
            idx = idx * static_cast<std::size_t>(ncp[a]) + static_cast<std::size_t>(c[a]);
        return idx * static_cast<std::size_t>(d);
    };

    VectorField out(grid);
    for_each_voxel(grid, [&](std::size_t i, const int* coord) {
        double w[3][4];
        int base[3];
        for (int a = 0; a < d; ++a) {
            const double t = coord[a] / spec.spacing;
            const int cell = static_cast<int>(std::floor(t));
            bspline_weights(t - cell, w[a]);
            base[a] = cell;  // control index cell-1 .. cell+2, +1 margin offset
        }
        double* o = out.at(i);
        const int spans = d == 2 ? 16 : 64;
        for (int m = 0; m < spans; ++m) {
            int c[3] = {0, 0, 0};
            double weight = 1.0;
            int mm = m;
            for (int a = 0; a < d; ++a) {
                const int off = mm & 3;
                mm >>= 2;
                weight *= w[a][off];
                c[a] = std::clamp(base[a] + off, 0, ncp[a] - 1);  // margin keeps this in range
            }
            const double* cp = ctrl.data() + ctrl_index(c);
            for (int a = 0; a < d; ++a) o[a] += weight * cp[a];
        }
    });
    return out;
}

PhantomGroup make_phantom_group(const PhantomShapeSpec& shape, const GridSpec& grid,
                                const std::vector<std::vector<double>>& codebooks,
                                double noise_sigma,
                                const std::vector<FfdSpec>& ffds, uint64_t seed) {
    if (codebooks.size() < 2)
        throw std::invalid_argument("make_phantom_group: at least 2 members required");
    if (ffds.size() != codebooks.size())
        throw std::invalid_argument("make_phantom_group: one FFD spec per member required");
    for (const auto& cb : codebooks)
        if (static_cast<int>(cb.size()) != shape.num_classes)
            throw std::invalid_argument("make_phantom_group: codebook size != num_classes");
    const int d = grid.ndim();
    const int C = shape.num_classes;

    PhantomGroup out;
    out.anatomy = LabelField(grid, C);

    // nested wobbly ellipses: class c occupies radius fraction <= (C-c)/(C-1).
    // Each ring gets its own wobble phases, so adjacent boundaries are not
    // parallel, and a crescent attached to the outer ring (right-ventricle
    // style) breaks rotational symmetry.
    double half[3];
    for (int a = 0; a < d; ++a) half[a] = 0.5 * (grid.dims[a] - 1);
    const double rmax = shape.outer_radius_frac * (*std::min_element(half, half + d) * 2.0);

    // small contrasting spots scattered over the object; they anchor the
    // tangential motion component that smooth nested boundaries leave free.
    // Fixed internal seed: the anatomy is a function of the shape spec only.
    struct Spot {
        double pos[3];
        int cls;
    };
    std::vector<Spot> spots;
    {
        // rejection sampling keeps spots well separated, so nearby same-class
        // spots cannot trade places under the misalignment range
        std::mt19937_64 srng(0x5eedULL);
        std::uniform_real_distribution<double> uni(-1.1, 1.1);
        const double min_sep = 3.2 * shape.speckle_radius;
        int attempts = 0;
        while (static_cast<int>(spots.size()) < shape.speckles && attempts < 4000) {
            ++attempts;
            Spot sp{};
            for (int a = 0; a < d; ++a) sp.pos[a] = uni(srng);
            bool ok = true;
            for (const Spot& q : spots) {
                double dist_sq = 0.0;
                for (int a = 0; a < d; ++a) {
                    const double dp = sp.pos[a] - q.pos[a];
                    dist_sq += dp * dp;
                }
                if (dist_sq < min_sep * min_sep) ok = false;
            }
            if (!ok) continue;
            sp.cls = 1 + static_cast<int>(spots.size()) % (C - 1);
            spots.push_back(sp);
        }
    }

    for_each_voxel(grid, [&](std::size_t i, const int* coord) {
        double x = (coord[0] - half[0]);
        double y = (coord[1] - half[1]) / shape.aspect;
        double z = d == 3 ? (coord[2] - half[2]) : 0.0;
        const double theta = std::atan2(y, x);
        const double r = std::sqrt(x * x + y * y + z * z) / rmax;
        int label = 0;
        for (int c = 1; c < C; ++c) {
            const double mod = 1.0 +
                               shape.wobble * std::cos(3.0 * theta + 1.7 * c) +
                               0.4 * shape.wobble * std::cos(5.0 * theta - 1.1 * c);
            const double rc = static_cast<double>(C - c) / (C - 1);
            if (r / mod <= rc) label = c;
        }
        if (C > 2 && label == 0) {
            const double cx = x + 0.95 * rmax;
            if (std::sqrt(cx * cx + y * y + z * z) / rmax <= 0.55) label = 2;
        }
        const double p[3] = {x / rmax, y / rmax, z / rmax};
        for (const Spot& sp : spots) {
            double dist_sq = 0.0;
            for (int a = 0; a < d; ++a) {
                const double dp = p[a] - sp.pos[a];
                dist_sq += dp * dp;
            }
            if (dist_sq <= shape.speckle_radius * shape.speckle_radius)
                label = label == sp.cls ? 0 : sp.cls;  // flip on same-class overlap
        }
        out.anatomy.labels[i] = label;
    });

    std::mt19937_64 rng(seed);
    for (std::size_t j = 0; j < codebooks.size(); ++j) {
        // clean rendering through this member's codebook
        ImageField clean(grid);
        for (std::size_t i = 0; i < clean.values.size(); ++i)
            clean.values[i] = codebooks[j][out.anatomy.labels[i]];
        out.clean.push_back(clean);

        FfdSpec spec = ffds[j];
        spec.seed = spec.seed ^ (seed + 0x9e3779b97f4a7c15ULL * (j + 1));
        VectorField psi = random_ffd(spec, grid);
        ImageField img = warp(clean, psi, Interp::Linear);
        if (noise_sigma > 0.0) {
            std::normal_distribution<double> noise(0.0, noise_sigma);
            for (double& v : img.values) v += noise(rng);
        }
        out.images.push_back(std::move(img));
        out.labels.push_back(warp(out.anatomy, psi));
        out.ground_truth.push_back(std::move(psi));
    }
    return out;
}

}  // namespace groupreg
