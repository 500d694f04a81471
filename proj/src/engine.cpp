#include "groupreg/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "groupreg/generative.hpp"
#include "groupreg/grid_ops.hpp"

namespace groupreg {

namespace {

void parallel_for_images(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int j = 0; j < n; ++j) fn(j);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int workers = std::min(threads, n);
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            int j;
            while ((j = next.fetch_add(1)) < n) fn(j);
        });
    for (auto& th : pool) th.join();
}

std::vector<GridSpec> build_pyramid(const GridSpec& fine, int levels) {
    std::vector<GridSpec> grids(levels);
    for (int l = 0; l < levels; ++l) {
        const int shift = levels - 1 - l;
        std::vector<int> dims(fine.dims.size());
        std::vector<double> spacing(fine.dims.size());
        for (std::size_t a = 0; a < fine.dims.size(); ++a) {
            dims[a] = std::max(2, fine.dims[a] >> shift);
            spacing[a] = fine.spacing[a] * fine.dims[a] / dims[a];
        }
        grids[l] = GridSpec(dims, spacing);
    }
    return grids;
}

struct LevelSnapshot {
    std::vector<CategoricalField> movings;
    CategoricalField fused;
    double objective = 0.0;
};

// Warps the finest posteriors by the current transforms, pools them down to
// the level grid and fuses.
LevelSnapshot level_snapshot(const GroupState& state, const GridSpec& level_grid,
                             int threads) {
    const int n = state.num_images();
    LevelSnapshot snap;
    snap.movings.resize(n);
    parallel_for_images(n, threads, [&](int j) {
        CategoricalField warped = warp(state.posteriors[j], state.forward[j]);
        snap.movings[j] = downsample_average(warped, level_grid);
    });
    std::vector<const CategoricalField*> views;
    views.reserve(n);
    for (const auto& m : snap.movings) views.push_back(&m);
    snap.fused = geometric_mean(views);
    snap.objective = intrinsic_distance(snap.fused, views).total;
    return snap;
}

void refresh_transforms(GroupState& state, int threads) {
    state.totals = aggregate_levels(state.velocities);
    center_velocities_inplace(state.totals);
    const int n = state.num_images();
    state.forward.resize(n);
    state.inverse.resize(n);
    parallel_for_images(n, threads, [&](int j) {
        state.forward[j] = exponentiate(state.totals[j]);
        VectorField neg = state.totals[j];
        for (double& v : neg.vectors) v = -v;
        state.inverse[j] = exponentiate(neg);
    });
}

void refit_codebooks(GroupState& state, const EngineConfig& cfg,
                     const CategoricalField& fused_fine) {
    const int n = state.num_images();
    if (static_cast<int>(state.codebooks.size()) != n)
        state.codebooks.assign(n, IntensityCodebook{std::vector<double>(cfg.K, 0.0)});
    parallel_for_images(n, cfg.threads, [&](int j) {
        const ImageField warped = warp(state.images[j], state.forward[j]);
        state.codebooks[j] =
            fit_codebook(fused_fine, warped, CodebookFit::L1, &state.codebooks[j])
                .codebook;
    });
}

// Full variational objective breakdown at the current state.
void record_trace(GroupState& state, const EngineConfig& cfg,
                  const std::vector<GridSpec>& grids,
                  std::vector<ImageField>& level_sigmas, int level, int iteration,
                  double level_objective, double step_scale) {
    const int n = state.num_images();
    std::vector<double> recon(n);
    std::vector<double> structural(cfg.levels, 0.0);
    std::vector<double> kls;

    CategoricalField fused_fine;
    for (int l = 0; l < cfg.levels; ++l) {
        LevelSnapshot snap = level_snapshot(state, grids[l], cfg.threads);
        std::vector<const CategoricalField*> views;
        for (const auto& m : snap.movings) views.push_back(&m);
        structural[l] = intrinsic_distance(snap.fused, views).total;
        if (l == cfg.levels - 1) fused_fine = snap.fused;
    }
    state.fused = fused_fine;

    parallel_for_images(n, cfg.threads, [&](int j) {
        const ImageField rec =
            warp(decode(fused_fine, state.codebooks[j]), state.inverse[j]);
        recon[j] = laplace_loglik(state.images[j], rec, cfg.likelihood);
    });
    for (int l = 0; l < cfg.levels; ++l)
        for (int j = 0; j < n; ++j)
            kls.push_back(
                velocity_prior_kl(state.velocities.levels[l][j], level_sigmas[l], cfg.prior));

    const ElboBreakdown b =
        assemble_elbo(recon, structural, kls, cfg.weights);
    TraceEntry e;
    e.level = level;
    e.iteration = iteration;
    e.objective = level_objective;
    e.elbo = b.total;
    e.recon = b.reconstruction;
    e.structural = b.structural;
    e.regularization = b.regularization;
    e.step_scale = step_scale;
    state.trace.push_back(e);
}

GroupState run_engine(const std::vector<ImageField>& images,
                      const std::vector<std::string>& modalities,
                      const ViewExtractorParams& extractor, const EngineConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(images.size());
    if (n < 2) throw std::invalid_argument("register_group: at least 2 images required");
    if (modalities.size() != images.size())
        throw std::invalid_argument("register_group: one modality tag per image required");
    for (const auto& img : images) {
        img.validate();
        if (img.grid != images[0].grid)
            throw std::invalid_argument("register_group: all images must share one grid");
    }
    for (const auto& m : modalities)
        if (!extractor.has_modality(m))
            throw std::invalid_argument("register_group: unknown modality tag '" + m + "'");

    GroupState state;
    state.images = images;
    state.modalities = modalities;
    state.extractor = extractor;

    state.posteriors.resize(n);
    parallel_for_images(n, cfg.threads, [&](int j) {
        state.posteriors[j] = extract_posterior(images[j], extractor, modalities[j]);
    });

    const std::vector<GridSpec> grids = build_pyramid(images[0].grid, cfg.levels);
    state.velocities.levels.resize(cfg.levels);
    for (int l = 0; l < cfg.levels; ++l)
        state.velocities.levels[l].assign(n, VectorField(grids[l]));

    std::vector<ImageField> level_sigmas;
    for (int l = 0; l < cfg.levels; ++l)
        level_sigmas.emplace_back(grids[l], cfg.sigma_base * cfg.sigma_base);

    refresh_transforms(state, cfg.threads);

    {
        // codebooks must exist before the first objective evaluation
        const LevelSnapshot init = level_snapshot(state, grids.back(), cfg.threads);
        refit_codebooks(state, cfg, init.fused);
        state.fused = init.fused;
    }

    // full weighted objective at one level: structural distance plus the
    // image-space reconstruction error and the velocity smoothness penalty.
    // The reconstruction term compares against the raw images, which is what
    // keeps edge-blurring deformations from being rewarded.
    const auto search_objective = [&](const LevelSnapshot& snap, int level) {
        std::vector<double> recs(n, 0.0);
        parallel_for_images(n, cfg.threads, [&](int j) {
            const ImageField dec = decode(snap.fused, state.codebooks[j]);
            const ImageField rec =
                warp(resample(dec, images[0].grid), state.inverse[j]);
            double acc = 0.0;
            for (std::size_t i = 0; i < rec.values.size(); ++i)
                acc += std::abs(state.images[j].values[i] - rec.values[i]);
            recs[j] = acc / cfg.likelihood.b;
        });
        double rec_total = 0.0;
        for (double r : recs) rec_total += r;
        double quad = 0.0;
        for (int j = 0; j < n; ++j)
            quad += velocity_prior_quadratic(state.velocities.levels[level][j], cfg.prior);
        return cfg.weights.structural * snap.objective +
               cfg.weights.reconstruction * rec_total +
               cfg.weights.regularization * 0.5 * quad;
    };

    const double step_candidates[] = {1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125};
    for (int level = 0; level < cfg.levels; ++level) {
        {
            // codebooks stay fixed within a level so the search objective is
            // stationary and descent is monotone
            const LevelSnapshot fine = level_snapshot(state, grids.back(), cfg.threads);
            refit_codebooks(state, cfg, fine.fused);
        }
        DemonsConfig dcfg;
        dcfg.alpha0 = cfg.alpha0_at(level);
        dcfg.alpha = cfg.alpha_fraction * dcfg.alpha0;
        dcfg.fluid_sigma = cfg.fluid_sigma;
        dcfg.ridge = cfg.ridge;
        dcfg.sigma_base = cfg.sigma_base;

        double prev_obj = std::numeric_limits<double>::infinity();
        int stalled = 0;  // consecutive iterations with no accepted step
        for (int it = 0; it < cfg.iters_per_level; ++it) {
            // proximal smoothing of the accumulated level velocity, applied
            // before the descent step so the line search below compares
            // candidates against a baseline in the same smoothness class
            // continuation: smoothing scales shrink geometrically across the
            // level iterations when a final value is configured
            const double frac = cfg.iters_per_level > 1
                                    ? it / static_cast<double>(cfg.iters_per_level - 1)
                                    : 0.0;
            const auto annealed = [&](double s0, double s1) {
                return s1 > 0.0 && s0 > 0.0 ? s0 * std::pow(s1 / s0, frac) : s0;
            };
            const double dsig = annealed(cfg.diffusion_sigma, cfg.diffusion_sigma_final);
            const double ncsig = annealed(cfg.nc_sigma, cfg.nc_sigma_final);
            if (dsig > 0.0) {
                parallel_for_images(n, cfg.threads, [&](int j) {
                    state.velocities.levels[level][j] =
                        fluid_smooth(state.velocities.levels[level][j], dsig);
                });
                center_velocities_inplace(state.velocities.levels[level]);
                refresh_transforms(state, cfg.threads);
            }
            const LevelSnapshot snap = level_snapshot(state, grids[level], cfg.threads);

            // per-image Demons force, fluid-smoothed; smoothing the probability
            // maps first widens the capture range of the gradients
            const CategoricalField fixed_s =
                cfg.feature_sigma > 0.0 ? smooth_probs(snap.fused, cfg.feature_sigma)
                                        : snap.fused;
            std::vector<VectorField> updates(n);
            parallel_for_images(n, cfg.threads, [&](int j) {
                const CategoricalField moving_s =
                    cfg.feature_sigma > 0.0
                        ? smooth_probs(snap.movings[j], cfg.feature_sigma)
                        : snap.movings[j];
                DemonsForceOutput f = demons_force(fixed_s, moving_s, dcfg);
                if (ncsig > 0.0) {
                    // gradient confidence from the variance heuristic; boundary
                    // forces get interpolated into flat regions
                    const ImageField svar =
                        estimate_velocity_variance(fixed_s, moving_s, 1.0);
                    ImageField w(svar.grid);
                    for (std::size_t i = 0; i < w.values.size(); ++i)
                        w.values[i] = 1.0 / svar.values[i] - 1.0;
                    updates[j] = confidence_smooth(f.mu, w, ncsig);
                } else {
                    updates[j] = fluid_smooth(f.mu, dcfg.fluid_sigma);
                }
            });
            // group-average confidence heuristic feeding the reported KL
            {
                ImageField acc(grids[level]);
                for (int j = 0; j < n; ++j) {
                    const ImageField s =
                        estimate_velocity_variance(snap.fused, snap.movings[j],
                                                   cfg.sigma_base);
                    for (std::size_t i = 0; i < acc.values.size(); ++i)
                        acc.values[i] += s.values[i] / n;
                }
                level_sigmas[level] = std::move(acc);
            }

            // bounded scalar line search on the shared step scale
            const std::vector<VectorField> saved = state.velocities.levels[level];
            const auto apply_step = [&](double s) {
                parallel_for_images(n, cfg.threads, [&](int j) {
                    VectorField v = saved[j];
                    double* dst = v.vectors.data();
                    const double* upd = updates[j].vectors.data();
                    for (std::size_t i = 0; i < v.vectors.size(); ++i)
                        dst[i] += s * upd[i];
                    state.velocities.levels[level][j] = std::move(v);
                });
                center_velocities_inplace(state.velocities.levels[level]);
            };
            double best_obj = search_objective(snap, level);
            double best_scale = 0.0;
            for (double s : step_candidates) {
                apply_step(s);
                refresh_transforms(state, cfg.threads);
                const LevelSnapshot cand = level_snapshot(state, grids[level], cfg.threads);
                const double cand_obj = search_objective(cand, level);
                if (cand_obj < best_obj) {
                    best_obj = cand_obj;
                    best_scale = s;
                }
                if (!cfg.line_search) {  // take the full step unconditionally
                    best_obj = cand_obj;
                    best_scale = s;
                    break;
                }
            }
            // apply the chosen scale
            if (best_scale > 0.0) {
                apply_step(best_scale);
            } else {
                state.velocities.levels[level] = saved;
            }
            refresh_transforms(state, cfg.threads);

            record_trace(state, cfg, grids, level_sigmas, level, it, best_obj, best_scale);

            const double rel =
                std::abs(prev_obj - best_obj) / std::max(std::abs(prev_obj), 1e-12);
            prev_obj = best_obj;
            // a rejected step is not yet convergence: the proximal smoothing
            // keeps perturbing the state, which can free a blocked direction a
            // few iterations later
            stalled = best_scale == 0.0 ? stalled + 1 : 0;
            if (stalled >= cfg.stall_patience || (best_scale > 0.0 && rel < cfg.convergence_tol))
                break;
        }
    }
    return state;
}

}  // namespace

GroupState register_group(const std::vector<ImageField>& images,
                          const std::vector<std::string>& modalities,
                          const EngineConfig& cfg) {
    cfg.validate();
    if (images.size() < 2)
        throw std::invalid_argument("register_group: at least 2 images required");
    std::vector<const ImageField*> ptrs;
    ptrs.reserve(images.size());
    for (const auto& img : images) ptrs.push_back(&img);
    const ViewExtractorParams extractor =
        fit_view_extractor(ptrs, modalities, cfg.K, cfg.em_iters, cfg.seed);
    return run_engine(images, modalities, extractor, cfg);
}

GroupState register_group_scaled(const std::vector<ImageField>& images,
                                 const std::vector<std::string>& modalities,
                                 const ViewExtractorParams& extractor,
                                 const EngineConfig& cfg) {
    if (extractor.K != cfg.K)
        throw std::invalid_argument("register_group_scaled: extractor K != config K");
    return run_engine(images, modalities, extractor, cfg);
}

// ---- state serialization ----

namespace {

constexpr const char* kStateMagic = "GRSTATE";
constexpr int kStateVersion = 1;

void put_doubles(std::ostream& os, const std::string& name,
                 const std::vector<double>& v) {
    os << "array " << name << " " << v.size() << "\n";
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& is, const std::string& expected) {
    std::string key, name;
    std::size_t count;
    if (!(is >> key >> name >> count) || key != "array" || name != expected)
        throw std::runtime_error("state file: malformed section '" + expected + "'");
    is.get();  // newline
    std::vector<double> v(count);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(is.gcount()) != count * sizeof(double))
        throw std::runtime_error("state file: truncated section '" + expected + "'");
    return v;
}

void put_grid(std::ostream& os, const GridSpec& g) {
    os << "grid " << g.ndim();
    for (int d : g.dims) os << " " << d;
    os.precision(17);
    for (double s : g.spacing) os << " " << s;
    os << "\n";
}

GridSpec get_grid(std::istream& is) {
    std::string key;
    int nd;
    if (!(is >> key >> nd) || key != "grid")
        throw std::runtime_error("state file: malformed grid record");
    std::vector<int> dims(nd);
    std::vector<double> spacing(nd);
    for (int a = 0; a < nd; ++a)
        if (!(is >> dims[a])) throw std::runtime_error("state file: truncated grid dims");
    for (int a = 0; a < nd; ++a)
        if (!(is >> spacing[a]))
            throw std::runtime_error("state file: truncated grid spacing");
    return GridSpec(dims, spacing);
}

}  // namespace

void export_state(const GroupState& state, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    const int n = state.num_images();
    const int L = state.velocities.num_levels();
    os << kStateMagic << " " << kStateVersion << "\n";
    os << "images " << n << "\n";
    os << "levels " << L << "\n";
    os << "K " << (state.posteriors.empty() ? 0 : state.posteriors[0].K) << "\n";
    os << "modalities";
    for (const auto& m : state.modalities) os << " " << m;
    os << "\n";
    const std::string extractor_text = state.extractor.to_text();
    os << "extractor " << extractor_text.size() << "\n" << extractor_text;
    for (int j = 0; j < n; ++j) {
        put_grid(os, state.images[j].grid);
        put_doubles(os, "image", state.images[j].values);
        put_doubles(os, "posterior", state.posteriors[j].probs);
        put_doubles(os, "total", state.totals[j].vectors);
        put_doubles(os, "forward", state.forward[j].vectors);
        put_doubles(os, "inverse", state.inverse[j].vectors);
        put_doubles(os, "codebook", state.codebooks[j].levels);
    }
    for (int l = 0; l < L; ++l) {
        put_grid(os, state.velocities.levels[l][0].grid);
        for (int j = 0; j < n; ++j)
            put_doubles(os, "velocity", state.velocities.levels[l][j].vectors);
    }
    put_doubles(os, "fused", state.fused.probs);
    std::vector<double> trace_flat;
    for (const auto& t : state.trace) {
        trace_flat.push_back(t.level);
        trace_flat.push_back(t.iteration);
        trace_flat.push_back(t.objective);
        trace_flat.push_back(t.elbo);
        trace_flat.push_back(t.recon);
        trace_flat.push_back(t.structural);
        trace_flat.push_back(t.regularization);
        trace_flat.push_back(t.step_scale);
    }
    put_doubles(os, "trace", trace_flat);
    if (!os) throw std::runtime_error("state export failed: " + path);
}

GroupState import_state(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::string magic;
    int version;
    if (!(is >> magic >> version) || magic != kStateMagic)
        throw std::runtime_error("state file: bad magic");
    if (version != kStateVersion)
        throw std::runtime_error("state file: incompatible version " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kStateVersion));
    std::string key;
    int n, L, K;
    if (!(is >> key >> n) || key != "images")
        throw std::runtime_error("state file: malformed section 'images'");
    if (!(is >> key >> L) || key != "levels")
        throw std::runtime_error("state file: malformed section 'levels'");
    if (!(is >> key >> K) || key != "K")
        throw std::runtime_error("state file: malformed section 'K'");
    GroupState state;
    if (!(is >> key) || key != "modalities")
        throw std::runtime_error("state file: malformed section 'modalities'");
    for (int j = 0; j < n; ++j) {
        std::string m;
        if (!(is >> m)) throw std::runtime_error("state file: truncated modalities");
        state.modalities.push_back(m);
    }
    std::size_t ext_len;
    if (!(is >> key >> ext_len) || key != "extractor")
        throw std::runtime_error("state file: malformed section 'extractor'");
    is.get();
    std::string ext_text(ext_len, '\0');
    is.read(ext_text.data(), static_cast<std::streamsize>(ext_len));
    if (static_cast<std::size_t>(is.gcount()) != ext_len)
        throw std::runtime_error("state file: truncated section 'extractor'");
    state.extractor = ViewExtractorParams::from_text(ext_text);

    for (int j = 0; j < n; ++j) {
        const GridSpec g = get_grid(is);
        ImageField img;
        img.grid = g;
        img.values = get_doubles(is, "image");
        state.images.push_back(std::move(img));
        CategoricalField post(g, K);
        post.probs = get_doubles(is, "posterior");
        state.posteriors.push_back(std::move(post));
        VectorField total, fwd, inv;
        total.grid = fwd.grid = inv.grid = g;
        total.vectors = get_doubles(is, "total");
        fwd.vectors = get_doubles(is, "forward");
        inv.vectors = get_doubles(is, "inverse");
        state.totals.push_back(std::move(total));
        state.forward.push_back(std::move(fwd));
        state.inverse.push_back(std::move(inv));
        IntensityCodebook cb;
        cb.levels = get_doubles(is, "codebook");
        state.codebooks.push_back(std::move(cb));
    }
    state.velocities.levels.resize(L);
    for (int l = 0; l < L; ++l) {
        const GridSpec g = get_grid(is);
        for (int j = 0; j < n; ++j) {
            VectorField v;
            v.grid = g;
            v.vectors = get_doubles(is, "velocity");
            state.velocities.levels[l].push_back(std::move(v));
        }
    }
    state.fused = CategoricalField(state.images[0].grid, K);
    state.fused.probs = get_doubles(is, "fused");
    const std::vector<double> trace_flat = get_doubles(is, "trace");
    if (trace_flat.size() % 8 != 0)
        throw std::runtime_error("state file: malformed section 'trace'");
    for (std::size_t i = 0; i < trace_flat.size(); i += 8) {
        TraceEntry t;
        t.level = static_cast<int>(trace_flat[i]);
        t.iteration = static_cast<int>(trace_flat[i + 1]);
        t.objective = trace_flat[i + 2];
        t.elbo = trace_flat[i + 3];
        t.recon = trace_flat[i + 4];
        t.structural = trace_flat[i + 5];
        t.regularization = trace_flat[i + 6];
        t.step_scale = trace_flat[i + 7];
        state.trace.push_back(t);
    }
    return state;
}

}  // namespace groupreg
