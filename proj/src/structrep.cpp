#include "groupreg/structrep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace groupreg {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kVarFloor = 1e-8;

double log_normal_pdf(double x, double mean, double var) {
    const double r = x - mean;
    return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

// The group shares one latent class field; each modality has its own Gaussian
// emission per class. Fitting them jointly ties class identities together
// across modalities, which independent per-modality fits cannot do.
ViewExtractorParams fit_view_extractor(
    const std::vector<const ImageField*>& images,
    const std::vector<std::string>& modalities, int K, int iters, uint64_t seed) {
    if (K < 2) throw std::invalid_argument("fit_view_extractor: K must be >= 2");
    if (images.size() != modalities.size() || images.empty())
        throw std::invalid_argument("fit_view_extractor: images/modalities mismatch");
    const GridSpec grid = images[0]->grid;
    for (const auto* img : images)
        if (img->grid != grid)
            throw std::invalid_argument("fit_view_extractor: images must share one grid");

    const std::size_t n = grid.voxels();
    const int N = static_cast<int>(images.size());

    std::vector<std::string> mods;
    std::vector<int> mod_of(N);
    for (int j = 0; j < N; ++j) {
        auto it = std::find(mods.begin(), mods.end(), modalities[j]);
        if (it == mods.end()) {
            mod_of[j] = static_cast<int>(mods.size());
            mods.push_back(modalities[j]);
        } else {
            mod_of[j] = static_cast<int>(it - mods.begin());
        }
    }
    const int M = static_cast<int>(mods.size());

    // per-modality global variance, also catches constant modalities
    std::vector<double> gvar(M, 0.0), gcount(M, 0.0), gmean(M, 0.0);
    for (int j = 0; j < N; ++j) {
        const int m = mod_of[j];
        for (double v : images[j]->values) gmean[m] += v;
        gcount[m] += static_cast<double>(n);
    }
    for (int m = 0; m < M; ++m) gmean[m] /= gcount[m];
    for (int j = 0; j < N; ++j) {
        const int m = mod_of[j];
        for (double v : images[j]->values)
            gvar[m] += (v - gmean[m]) * (v - gmean[m]);
    }
    for (int m = 0; m < M; ++m) {
        gvar[m] /= gcount[m];
        if (gvar[m] <= 0.0)
            throw std::invalid_argument("fit_view_extractor: modality '" + mods[m] +
                                        "' is constant");
        gvar[m] = std::max(gvar[m], kVarFloor);
    }

    std::mt19937_64 rng(seed);

    // responsibilities start as a 1-d k-means partition of the first image, so
    // every modality inherits one shared anatomy hypothesis; k-means++ seeding
    // keeps strongly unbalanced classes from being merged at initialization
    std::vector<double> gamma(n * static_cast<std::size_t>(K), 0.0);
    {
        const auto& x = images[0]->values;
        std::vector<double> centers(K);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        centers[0] = x[pick(rng)];
        std::vector<double> d2(n);
        for (int k = 1; k < K; ++k) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (int c = 0; c < k; ++c)
                    best = std::min(best, (x[i] - centers[c]) * (x[i] - centers[c]));
                d2[i] = best;
                total += best;
            }
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), acc = 0.0;
            std::size_t chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    chosen = i;
                    break;
                }
            }
            centers[k] = x[chosen];
        }
        std::vector<int> assign(n, 0);
        for (int round = 0; round < 20; ++round) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                int best = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (int k = 0; k < K; ++k) {
                    const double d = (x[i] - centers[k]) * (x[i] - centers[k]);
                    if (d < bd) {
                        bd = d;
                        best = k;
                    }
                }
                if (assign[i] != best) {
                    assign[i] = best;
                    changed = true;
                }
            }
            std::vector<double> sum(K, 0.0), cnt_k(K, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                sum[assign[i]] += x[i];
                cnt_k[assign[i]] += 1.0;
            }
            for (int k = 0; k < K; ++k)
                if (cnt_k[k] > 0.0) centers[k] = sum[k] / cnt_k[k];
            if (!changed) break;
        }
        for (std::size_t i = 0; i < n; ++i) gamma[i * K + assign[i]] = 1.0;
    }
    std::vector<double> means(static_cast<std::size_t>(M) * K);
    std::vector<double> vars(static_cast<std::size_t>(M) * K);
    std::vector<double> pi(K, 1.0 / K);
    double joint_ll = 0.0;
    std::vector<double> logp(K);
    for (int it = 0; it < iters; ++it) {
        // M-step
        std::vector<double> Nk(K, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < K; ++k) Nk[k] += gamma[i * K + k];
        std::vector<double> sx(static_cast<std::size_t>(M) * K, 0.0);
        std::vector<double> cnt(static_cast<std::size_t>(M) * K, 0.0);
        for (int j = 0; j < N; ++j) {
            const int m = mod_of[j];
            const auto& x = images[j]->values;
            for (std::size_t i = 0; i < n; ++i)
                for (int k = 0; k < K; ++k) {
                    sx[m * K + k] += gamma[i * K + k] * x[i];
                    cnt[m * K + k] += gamma[i * K + k];
                }
        }
        std::vector<bool> dead(K, false);
        for (int k = 0; k < K; ++k) {
            if (Nk[k] < 1e-8 * static_cast<double>(n)) {
                dead[k] = true;
                continue;
            }
            for (int m = 0; m < M; ++m) means[m * K + k] = sx[m * K + k] / cnt[m * K + k];
            pi[k] = Nk[k] / static_cast<double>(n);
        }
        std::fill(vars.begin(), vars.end(), 0.0);
        for (int j = 0; j < N; ++j) {
            const int m = mod_of[j];
            const auto& x = images[j]->values;
            for (std::size_t i = 0; i < n; ++i)
                for (int k = 0; k < K; ++k) {
                    const double r = x[i] - means[m * K + k];
                    vars[m * K + k] += gamma[i * K + k] * r * r;
                }
        }
        for (int k = 0; k < K; ++k) {
            if (dead[k]) {  // re-seed at a random voxel
                std::uniform_int_distribution<std::size_t> pick(0, n - 1);
                const std::size_t i = pick(rng);
                for (int j = 0; j < N; ++j)
                    means[mod_of[j] * K + k] = images[j]->values[i];
                for (int m = 0; m < M; ++m) vars[m * K + k] = gvar[m];
                pi[k] = 1.0 / static_cast<double>(n);
                continue;
            }
            for (int m = 0; m < M; ++m)
                vars[m * K + k] = std::max(vars[m * K + k] / cnt[m * K + k], kVarFloor);
        }
        double psum = std::accumulate(pi.begin(), pi.end(), 0.0);
        for (double& p : pi) p /= psum;

        // E-step
        joint_ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < K; ++k) {
                double lp = std::log(std::max(pi[k], 1e-300));
                for (int j = 0; j < N; ++j) {
                    const int m = mod_of[j];
                    lp += log_normal_pdf(images[j]->values[i], means[m * K + k],
                                         vars[m * K + k]);
                }
                logp[k] = lp;
            }
            const double lse = log_sum_exp(logp);
            joint_ll += lse;
            for (int k = 0; k < K; ++k) gamma[i * K + k] = std::exp(logp[k] - lse);
        }
    }

    ViewExtractorParams params;
    params.K = K;
    for (int m = 0; m < M; ++m) {
        ModalityMixture mix;
        mix.modality = mods[m];
        mix.final_log_likelihood = joint_ll;
        mix.means.assign(means.begin() + m * K, means.begin() + (m + 1) * K);
        mix.variances.assign(vars.begin() + m * K, vars.begin() + (m + 1) * K);
        mix.weights = pi;
        params.mixtures[mods[m]] = std::move(mix);
    }
    return params;
}

CategoricalField extract_posterior(const ImageField& image,
                                   const ViewExtractorParams& params,
                                   const std::string& modality) {
    auto it = params.mixtures.find(modality);
    if (it == params.mixtures.end())
        throw std::invalid_argument("extract_posterior: unknown modality '" + modality + "'");
    const ModalityMixture& mix = it->second;
    const int K = params.K;
    CategoricalField out(image.grid, K);
    std::vector<double> logp(K);
    const std::size_t n = image.grid.voxels();
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < K; ++k)
            logp[k] = std::log(std::max(mix.weights[k], 1e-300)) +
                      log_normal_pdf(image.values[i], mix.means[k], mix.variances[k]);
        const double lse = log_sum_exp(logp);
        double* p = out.at(i);
        double s = 0.0;
        for (int k = 0; k < K; ++k) {
            p[k] = std::max(std::exp(logp[k] - lse), params.prob_floor);
            s += p[k];
        }
        for (int k = 0; k < K; ++k) p[k] /= s;
    }
    return out;
}

namespace {

void check_views(const std::vector<const CategoricalField*>& views) {
    if (views.size() < 2)
        throw std::invalid_argument("fusion: at least 2 views required");
    for (const auto* v : views) {
        if (v->grid != views[0]->grid)
            throw std::invalid_argument("fusion: grid mismatch across views");
        if (v->K != views[0]->K)
            throw std::invalid_argument("fusion: K mismatch across views");
    }
}

}  // namespace

CategoricalField geometric_mean(const std::vector<const CategoricalField*>& views) {
    check_views(views);
    const int K = views[0]->K;
    const std::size_t n = views[0]->grid.voxels();
    const double invN = 1.0 / static_cast<double>(views.size());
    CategoricalField out(views[0]->grid, K);
    std::vector<double> lg(K);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < K; ++k) lg[k] = 0.0;
        for (const auto* v : views) {
            const double* p = v->at(i);
            for (int k = 0; k < K; ++k) lg[k] += std::log(std::max(p[k], kProbFloor));
        }
        for (int k = 0; k < K; ++k) lg[k] *= invN;
        const double lse = log_sum_exp(lg);
        double* o = out.at(i);
        for (int k = 0; k < K; ++k) o[k] = std::exp(lg[k] - lse);
    }
    return out;
}

CategoricalField arithmetic_mean(const std::vector<const CategoricalField*>& views) {
    check_views(views);
    const int K = views[0]->K;
    const std::size_t n = views[0]->grid.voxels();
    const double invN = 1.0 / static_cast<double>(views.size());
    CategoricalField out(views[0]->grid, K);
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.at(i);
        for (const auto* v : views) {
            const double* p = v->at(i);
            for (int k = 0; k < K; ++k) o[k] += p[k];
        }
        for (int k = 0; k < K; ++k) o[k] *= invN;
    }
    return out;
}

void geometric_mean_gaussian(const std::vector<const std::vector<double>*>& means,
                             const std::vector<const std::vector<double>*>& variances,
                             std::vector<double>& fused_mean,
                             std::vector<double>& fused_variance) {
    if (means.size() < 2 || means.size() != variances.size())
        throw std::invalid_argument("geometric_mean_gaussian: need >= 2 matched views");
    const std::size_t dim = means[0]->size();
    for (std::size_t j = 0; j < means.size(); ++j) {
        if (means[j]->size() != dim || variances[j]->size() != dim)
            throw std::invalid_argument("geometric_mean_gaussian: dimension mismatch");
        for (double v : *variances[j])
            if (!(v > 0.0))
                throw std::invalid_argument("geometric_mean_gaussian: non-positive variance");
    }
    const double N = static_cast<double>(means.size());
    fused_mean.assign(dim, 0.0);
    fused_variance.assign(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        double prec_sum = 0.0, weighted = 0.0;
        for (std::size_t j = 0; j < means.size(); ++j) {
            const double prec = 1.0 / (*variances[j])[i];
            prec_sum += prec;
            weighted += prec * (*means[j])[i];
        }
        fused_variance[i] = N / prec_sum;
        fused_mean[i] = weighted / prec_sum;
    }
}

IntrinsicDistance intrinsic_distance(const CategoricalField& fused,
                                     const std::vector<const CategoricalField*>& views) {
    check_views(views);
    if (fused.grid != views[0]->grid || fused.K != views[0]->K)
        throw std::invalid_argument("intrinsic_distance: fused/view shape mismatch");
    const int K = fused.K;
    const std::size_t n = fused.grid.voxels();
    IntrinsicDistance out;
    out.per_view.assign(views.size(), 0.0);
    for (std::size_t j = 0; j < views.size(); ++j) {
        double kl = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* q = fused.at(i);
            const double* p = views[j]->at(i);
            for (int k = 0; k < K; ++k) {
                const double qk = std::max(q[k], kProbFloor);
                kl += qk * (std::log(qk) - std::log(std::max(p[k], kProbFloor)));
            }
        }
        out.per_view[j] = kl;
        out.total += kl;
    }
    out.total /= static_cast<double>(views.size());
    return out;
}

double exact_mixture_kl(const CategoricalField& fused,
                        const std::vector<const CategoricalField*>& views) {
    check_views(views);
    const int K = fused.K;
    const std::size_t n = fused.grid.voxels();
    const double invN = 1.0 / static_cast<double>(views.size());
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* q = fused.at(i);
        for (int k = 0; k < K; ++k) {
            double mix = 0.0;
            for (const auto* v : views) mix += std::max(v->at(i)[k], kProbFloor);
            mix *= invN;
            const double qk = std::max(q[k], kProbFloor);
            kl += qk * (std::log(qk) - std::log(mix));
        }
    }
    return kl;
}

ArgminCheckReport variational_argmin_check(
    const std::vector<const CategoricalField*>& views, int trials,
    double magnitude, uint64_t seed) {
    const CategoricalField star = geometric_mean(views);
    ArgminCheckReport report;
    report.trials = trials;
    report.reference = intrinsic_distance(star, views).total;
    report.worst_margin = std::numeric_limits<double>::infinity();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, magnitude);
    const int K = star.K;
    const std::size_t n = star.grid.voxels();
    for (int t = 0; t < trials; ++t) {
        CategoricalField q = star;
        for (std::size_t i = 0; i < n; ++i) {
            double* p = q.at(i);
            double s = 0.0;
            for (int k = 0; k < K; ++k) {
                p[k] = std::max(p[k] + noise(rng), kProbFloor);
                s += p[k];
            }
            for (int k = 0; k < K; ++k) p[k] /= s;
        }
        const double d = intrinsic_distance(q, views).total;
        report.worst_margin = std::min(report.worst_margin, d - report.reference);
        if (d < report.reference - 1e-10) ++report.violations;
    }
    return report;
}

std::string ViewExtractorParams::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "view_extractor_version 1\n";
    os << "K " << K << "\n";
    os << "prob_floor " << prob_floor << "\n";
    os << "modalities " << mixtures.size() << "\n";
    for (const auto& [mod, mix] : mixtures) {
        os << "modality " << mod << "\n";
        os << "log_likelihood " << mix.final_log_likelihood << "\n";
        for (int k = 0; k < K; ++k)
            os << "component " << k << " " << mix.means[k] << " " << mix.variances[k]
               << " " << mix.weights[k] << "\n";
    }
    return os.str();
}

ViewExtractorParams ViewExtractorParams::from_text(const std::string& text) {
    std::istringstream is(text);
    std::string key;
    ViewExtractorParams p;
    int version = 0, nmod = 0;
    if (!(is >> key >> version) || key != "view_extractor_version" || version != 1)
        throw std::runtime_error("ViewExtractorParams: bad header");
    if (!(is >> key >> p.K) || key != "K")
        throw std::runtime_error("ViewExtractorParams: missing K");
    if (!(is >> key >> p.prob_floor) || key != "prob_floor")
        throw std::runtime_error("ViewExtractorParams: missing prob_floor");
    if (!(is >> key >> nmod) || key != "modalities")
        throw std::runtime_error("ViewExtractorParams: missing modality count");
    for (int m = 0; m < nmod; ++m) {
        ModalityMixture mix;
        if (!(is >> key >> mix.modality) || key != "modality")
            throw std::runtime_error("ViewExtractorParams: missing modality name");
        if (!(is >> key >> mix.final_log_likelihood) || key != "log_likelihood")
            throw std::runtime_error("ViewExtractorParams: missing log_likelihood");
        mix.means.resize(p.K);
        mix.variances.resize(p.K);
        mix.weights.resize(p.K);
        for (int k = 0; k < p.K; ++k) {
            int idx;
            if (!(is >> key >> idx >> mix.means[k] >> mix.variances[k] >> mix.weights[k]) ||
                key != "component" || idx != k)
                throw std::runtime_error("ViewExtractorParams: malformed component row");
        }
        p.mixtures[mix.modality] = std::move(mix);
    }
    return p;
}

}  // namespace groupreg
