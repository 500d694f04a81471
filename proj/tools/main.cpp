#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "groupreg/engine.hpp"
#include "groupreg/eval.hpp"
#include "groupreg/grid_ops.hpp"
#include "groupreg/io.hpp"

namespace fs = std::filesystem;
using namespace groupreg;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("input file not found: " + path);
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

int thread_count(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("GROUPREG_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

std::string config_text(const std::string& path) {
    if (path.empty()) return "";
    require_file(path);
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::string& cfg_text, uint64_t seed) {
    std::ofstream os(out_dir / "manifest.txt");
    os << "tool groupreg 1.0\n";
    os << "command " << command << "\n";
    os << "seed " << seed << "\n";
    os << "config_hash " << fnv1a(cfg_text) << "\n";
    os << "config_begin\n" << cfg_text << "config_end\n";
}

EngineConfig engine_config(const RunConfig& cfg, uint64_t seed, int threads) {
    EngineConfig e;
    e.levels = cfg.get_int("engine.levels", 3);
    e.K = cfg.get_int("engine.classes", 8);
    e.iters_per_level = cfg.get_int("engine.iters_per_level", 30);
    e.convergence_tol = cfg.get_double("engine.convergence_tol", 1e-4);
    e.em_iters = cfg.get_int("engine.em_iters", 50);
    e.alpha0_finest = cfg.get_double("engine.alpha0", 10.0);
    e.alpha_fraction = cfg.get_double("engine.alpha_fraction", 0.4);
    e.fluid_sigma = cfg.get_double("engine.fluid_sigma", 1.0);
    e.diffusion_sigma = cfg.get_double("engine.diffusion_sigma", 1.0);
    e.diffusion_sigma_final = cfg.get_double("engine.diffusion_sigma_final", -1.0);
    e.feature_sigma = cfg.get_double("engine.feature_sigma", 0.0);
    e.nc_sigma = cfg.get_double("engine.nc_sigma", 0.0);
    e.nc_sigma_final = cfg.get_double("engine.nc_sigma_final", -1.0);
    e.stall_patience = cfg.get_int("engine.stall_patience", 1);
    e.ridge = cfg.get_double("engine.ridge", 1e-8);
    e.sigma_base = cfg.get_double("engine.sigma_base", 1.0);
    e.line_search = cfg.get_int("engine.line_search", 1) != 0;
    e.prior.lambda = cfg.get_double("prior.lambda", 10.0);
    e.likelihood.b = cfg.get_double("likelihood.b", 1.0);
    e.weights.reconstruction = cfg.get_double("weights.reconstruction", 120.0);
    e.weights.structural = cfg.get_double("weights.structural", 160.0);
    e.weights.regularization = cfg.get_double("weights.regularization", 10.0);
    e.seed = seed;
    e.threads = threads;
    e.validate();
    return e;
}

ImageField load_image_any(const std::string& path) {
    require_file(path);
    if (path.size() > 4 && path.substr(path.size() - 4) == ".nii") return read_nifti(path);
    return read_image(path);
}

int cmd_synth(const std::string& config_path, uint64_t seed, const std::string& out) {
    const std::string text = config_text(config_path);
    const RunConfig cfg = RunConfig::from_text(text);
    const int M = cfg.get_int("synth.members", 3);
    if (M < 2) throw UsageError("synth.members must be >= 2 (multi-modal contract)");
    const int C = cfg.get_int("synth.classes", 4);
    const int nx = cfg.get_int("synth.dim_x", 96);
    const int ny = cfg.get_int("synth.dim_y", 96);
    const double noise = cfg.get_double("synth.noise_sigma", 0.02);
    const double spacing = cfg.get_double("synth.ffd_spacing", 10.0);
    const double bound = cfg.get_double("synth.ffd_bound", 3.0);

    GridSpec grid({nx, ny});
    PhantomShapeSpec shape;
    shape.num_classes = C;
    shape.outer_radius_frac = cfg.get_double("synth.outer_radius_frac", shape.outer_radius_frac);
    shape.aspect = cfg.get_double("synth.aspect", shape.aspect);
    shape.wobble = cfg.get_double("synth.wobble", shape.wobble);
    shape.speckles = cfg.get_int("synth.speckles", shape.speckles);
    shape.speckle_radius = cfg.get_double("synth.speckle_radius", shape.speckle_radius);

    // per-member codebooks: evenly spread levels, permuted per member to
    // mimic modality-specific contrast
    std::vector<std::vector<double>> codebooks(M);
    std::mt19937_64 rng(seed);
    for (int j = 0; j < M; ++j) {
        std::vector<double> levels(C);
        for (int c = 0; c < C; ++c) levels[c] = static_cast<double>(c) / (C - 1);
        if (j > 0) std::shuffle(levels.begin() + 1, levels.end(), rng);
        codebooks[j] = levels;
    }
    std::vector<FfdSpec> ffds(M);
    for (int j = 0; j < M; ++j) ffds[j] = FfdSpec{spacing, bound, seed + 17u * j};

    const PhantomGroup group = make_phantom_group(shape, grid, codebooks, noise, ffds, seed);

    fs::create_directories(out);
    const fs::path dir(out);
    for (int j = 0; j < M; ++j) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "image_%03d.grf", j);
        write_image(group.images[j], (dir / buf).string());
        std::snprintf(buf, sizeof(buf), "labels_%03d.grf", j);
        write_labels(group.labels[j], (dir / buf).string());
        std::snprintf(buf, sizeof(buf), "gt_transform_%03d.grf", j);
        write_vector_field(group.ground_truth[j], (dir / buf).string(), true);
    }
    write_labels(group.anatomy, (dir / "anatomy.grf").string());
    std::ofstream members(dir / "members.txt");
    for (int j = 0; j < M; ++j) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "image_%03d.grf mod%d\n", j, j % M);
        members << buf;
    }
    write_manifest(dir, "synth", text, seed);
    return 0;
}

int cmd_register(const std::vector<std::string>& inputs,
                 const std::vector<std::string>& modalities,
                 const std::string& config_path, uint64_t seed, const std::string& out,
                 int threads) {
    if (inputs.size() < 2) throw UsageError("register: at least 2 --input files required");
    if (modalities.size() != inputs.size())
        throw UsageError("register: one --modality per --input required");
    const std::string text = config_text(config_path);
    const RunConfig cfg = RunConfig::from_text(text);
    const EngineConfig ecfg = engine_config(cfg, seed, thread_count(threads));

    std::vector<ImageField> images;
    for (const auto& p : inputs) images.push_back(load_image_any(p));

    GroupState state;
    const std::string extractor_path = cfg.get_string("engine.extractor", "");
    if (!extractor_path.empty()) {
        require_file(extractor_path);
        std::ifstream is(extractor_path);
        std::stringstream ss;
        ss << is.rdbuf();
        state = register_group_scaled(images, modalities,
                                      ViewExtractorParams::from_text(ss.str()), ecfg);
    } else {
        state = register_group(images, modalities, ecfg);
    }

    fs::create_directories(out);
    const fs::path dir(out);
    for (int j = 0; j < state.num_images(); ++j) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "forward_%03d.grf", j);
        write_vector_field(state.forward[j], (dir / buf).string(), true);
        std::snprintf(buf, sizeof(buf), "inverse_%03d.grf", j);
        write_vector_field(state.inverse[j], (dir / buf).string(), true);
    }
    write_categorical(state.fused, (dir / "fused.grf").string(), true);
    {
        std::ofstream os(dir / "codebooks.txt");
        os.precision(17);
        for (int j = 0; j < state.num_images(); ++j) {
            os << "image " << j << " modality " << state.modalities[j] << "\n";
            for (double v : state.codebooks[j].levels) os << v << " ";
            os << "\n";
        }
    }
    {
        std::ofstream os(dir / "extractor.txt");
        os << state.extractor.to_text();
    }
    std::vector<std::vector<double>> rows;
    for (const auto& t : state.trace)
        rows.push_back({static_cast<double>(t.level), static_cast<double>(t.iteration),
                        t.objective, t.elbo, t.recon, t.structural, t.regularization,
                        t.step_scale});
    write_csv((dir / "trace.csv").string(),
              {"level", "iteration", "objective", "elbo", "reconstruction",
               "structural", "regularization", "step_scale"},
              rows);
    export_state(state, (dir / "state.grs").string());
    write_manifest(dir, "register", text, seed);
    return 0;
}

int cmd_evaluate(const std::vector<std::string>& transform_paths,
                 const std::vector<std::string>& label_paths,
                 const std::vector<std::string>& gt_paths,
                 const std::string& foreground_path, const std::string& out_csv) {
    if (transform_paths.size() < 2)
        throw UsageError("evaluate: at least 2 --transform files required");
    std::vector<VectorField> transforms;
    for (const auto& p : transform_paths) {
        require_file(p);
        transforms.push_back(read_vector_field(p));
    }
    std::vector<const VectorField*> tptrs;
    for (const auto& t : transforms) tptrs.push_back(&t);

    std::vector<std::string> header{"metric", "value"};
    std::vector<std::vector<double>> rows;
    std::vector<std::string> names;

    LabelField foreground;
    bool have_fg = false;
    if (!foreground_path.empty()) {
        require_file(foreground_path);
        foreground = read_labels(foreground_path);
        have_fg = true;
    }

    if (!label_paths.empty()) {
        if (label_paths.size() != transform_paths.size())
            throw UsageError("evaluate: one --labels per --transform required");
        std::vector<LabelField> warped;
        for (std::size_t j = 0; j < label_paths.size(); ++j) {
            require_file(label_paths[j]);
            warped.push_back(warp(read_labels(label_paths[j]), transforms[j]));
        }
        std::vector<const LabelField*> lptrs;
        for (const auto& l : warped) lptrs.push_back(&l);
        names.push_back("dice");
        rows.push_back({groupwise_dice_mean(lptrs)});
        const int C = warped[0].num_classes;
        double assd_acc = 0.0;
        int assd_n = 0;
        for (int c = 1; c < C; ++c) {
            try {
                assd_acc += groupwise_assd(lptrs, c).value;
                ++assd_n;
            } catch (const std::invalid_argument&) {
                // class empty in every member; skip
            }
        }
        if (assd_n > 0) {
            names.push_back("assd");
            rows.push_back({assd_acc / assd_n});
        }
        if (!have_fg) {
            // union of warped foreground labels
            foreground = warped[0];
            for (std::size_t i = 0; i < foreground.labels.size(); ++i) {
                int any = 0;
                for (const auto& l : warped)
                    if (l.labels[i] != 0) any = 1;
                foreground.labels[i] = any;
            }
            foreground.num_classes = 2;
            have_fg = true;
        }
    }

    if (!gt_paths.empty()) {
        if (gt_paths.size() != transform_paths.size())
            throw UsageError("evaluate: one --ground-truth per --transform required");
        std::vector<VectorField> gts;
        for (const auto& p : gt_paths) {
            require_file(p);
            gts.push_back(read_vector_field(p));
        }
        std::vector<const VectorField*> gptrs;
        for (const auto& g : gts) gptrs.push_back(&g);
        LabelField fg = foreground;
        if (!have_fg) {
            fg = LabelField(transforms[0].grid, 2);
            std::fill(fg.labels.begin(), fg.labels.end(), 1);
        }
        names.push_back("gwi");
        rows.push_back({groupwise_warping_index(gptrs, tptrs, fg)});
    }

    names.push_back("neg_jacobian_pct");
    rows.push_back({negative_jacobian_fraction(tptrs, have_fg ? &foreground : nullptr)});

    std::ofstream os(out_csv);
    if (!os) throw UsageError("cannot open output CSV: " + out_csv);
    os.precision(12);
    os << "metric,value\n";
    for (std::size_t i = 0; i < names.size(); ++i)
        os << names[i] << "," << rows[i][0] << "\n";
    return 0;
}

int cmd_plotdata(const std::string& state_path, const std::string& trace_path,
                 const std::vector<std::string>& sweep_paths, const std::string& out) {
    fs::create_directories(out);
    const fs::path dir(out);
    if (!state_path.empty()) {
        require_file(state_path);
        const GroupState state = import_state(state_path);
        std::vector<std::vector<double>> rows;
        for (const auto& t : state.trace)
            rows.push_back({static_cast<double>(t.level),
                            static_cast<double>(t.iteration), t.objective, t.elbo});
        write_csv((dir / "objective_trace.csv").string(),
                  {"level", "iteration", "objective", "elbo"}, rows);
        std::vector<std::vector<double>> norms;
        for (int l = 0; l < state.velocities.num_levels(); ++l)
            for (int j = 0; j < state.velocities.num_images(); ++j)
                norms.push_back({static_cast<double>(l), static_cast<double>(j),
                                 max_vector_norm(state.velocities.levels[l][j])});
        write_csv((dir / "velocity_norms.csv").string(), {"level", "image", "max_norm"},
                  norms);
    } else if (!trace_path.empty()) {
        require_file(trace_path);
        fs::copy_file(trace_path, dir / "objective_trace.csv",
                      fs::copy_options::overwrite_existing);
    }
    if (!sweep_paths.empty()) {
        // concatenate per-run metric CSVs into one group-size curve
        std::ofstream os(dir / "group_size_sweep.csv");
        os << "run,metric,value\n";
        int run = 0;
        for (const auto& p : sweep_paths) {
            require_file(p);
            std::ifstream is(p);
            std::string line;
            std::getline(is, line);  // header
            while (std::getline(is, line))
                if (!line.empty()) os << run << "," << line << "\n";
            ++run;
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Groupwise multi-modal diffeomorphic registration"};
    app.require_subcommand(1);

    std::string config_path, out, foreground, state_path, trace_path;
    uint64_t seed = 0;
    int threads = 0;
    std::vector<std::string> inputs, modalities, transforms, labels, gts, sweeps;

    auto* reg = app.add_subcommand("register", "Register an image group");
    reg->add_option("--input", inputs, "input image files (repeatable)");
    reg->add_option("--modality", modalities, "modality tag per input (repeatable)");
    reg->add_option("--config", config_path, "configuration file");
    reg->add_option("--seed", seed, "random seed");
    reg->add_option("--out", out, "output directory")->required();
    reg->add_option("--threads", threads, "worker thread count");

    auto* ev = app.add_subcommand("evaluate", "Evaluate transforms");
    ev->add_option("--transform", transforms, "predicted forward transforms");
    ev->add_option("--labels", labels, "distorted label files, one per transform");
    ev->add_option("--ground-truth", gts, "ground-truth transforms, one per transform");
    ev->add_option("--foreground", foreground, "foreground label mask");
    ev->add_option("--out", out, "output CSV path")->required();

    auto* sy = app.add_subcommand("synth", "Synthesize a phantom group");
    sy->add_option("--config", config_path, "configuration file");
    sy->add_option("--seed", seed, "random seed");
    sy->add_option("--out", out, "output directory")->required();

    auto* pl = app.add_subcommand("plotdata", "Emit plot-ready CSV series");
    pl->add_option("--state", state_path, "state file from register");
    pl->add_option("--trace", trace_path, "trace CSV from register");
    pl->add_option("--sweep", sweeps, "metric CSVs to merge into a group-size curve");
    pl->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (reg->parsed())
            return cmd_register(inputs, modalities, config_path, seed, out, threads);
        if (ev->parsed()) return cmd_evaluate(transforms, labels, gts, foreground, out);
        if (sy->parsed()) return cmd_synth(config_path, seed, out);
        if (pl->parsed()) return cmd_plotdata(state_path, trace_path, sweeps, out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
