#include "rlrds/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "rlrds/errors.hpp"
#include "rlrds/policy.hpp"

namespace rlrds {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

FitOptions covariate_options(const SimulationDesign& d) {
    FitOptions o;
    o.blocks = kCovariate;
    o.diagonal = d.diagonal;
    o.ridge = d.ridge;
    return o;
}

double stat_for_study(const NetworkParams& theta, const BranchingParams& beta_bar, const SimulationDesign& d,
                      std::uint64_t seed) {
    const Trajectory t = simulate_design_study(theta, d, seed);
    const WeightedSample s = design_sample(t, theta);
    if (s.data.empty()) return kInf;
    try {
        return llr_stat(s, beta_bar, fit_covariates(s, d, theta));
    } catch (const NumericalError&) {
        return kInf;
    }
}

ConfidenceRegion empty_region(Method m, double alpha, int n) {
    ConfidenceRegion r;
    r.method = m;
    r.alpha = alpha;
    r.observed.assign(n, kNaN);
    r.threshold.assign(n, kNaN);
    r.excluded.assign(n, false);
    return r;
}

}  // namespace

ThetaGrid make_coverage_grid(const NetworkParams& truth, const std::vector<double>& rho1_factors,
                             const std::vector<double>& mu_shifts) {
    if (rho1_factors.empty() || mu_shifts.empty()) throw InvalidArgument("make_coverage_grid: empty axis");
    truth.validate();
    const int p = truth.dim();
    const int k = static_cast<int>(mu_shifts.size());
    int combos = 1;
    for (int i = 0; i < p; ++i) combos *= k;
    ThetaGrid g;
    for (double f : rho1_factors) {
        for (int c = 0; c < combos; ++c) {
            NetworkParams th = truth;
            th.rho1 = truth.rho1 * f;
            bool at_truth = f == 1.0;
            int rest = c;
            for (int i = p - 1; i >= 0; --i) {
                const double s = mu_shifts[rest % k];
                rest /= k;
                th.mu(i) += s;
                at_truth = at_truth && s == 0.0;
            }
            if (at_truth) g.truth = g.size();
            g.thetas.push_back(th);
        }
    }
    g.beta_bar.resize(g.thetas.size());
    return g;
}

Trajectory simulate_design_study(const NetworkParams& theta, const SimulationDesign& d, double budget,
                                 int population, std::uint64_t seed) {
    const Population pop = sample_population(theta, population, derive_seed(seed, 0), Adjacency::lazy);
    StudyConfig cfg;
    cfg.theta = theta;
    cfg.spec = d.spec;
    cfg.budget = budget;
    cfg.cost = d.cost;
    RandomPolicy policy(false);
    return run_study(pop, cfg, policy, derive_seed(seed, 1));
}

WeightedSample design_sample(const Trajectory& traj, const NetworkParams& theta) {
    return build_sample(traj, theta.t_min, theta.t_max, SampleView::online);
}

BranchingParams fit_covariates(const WeightedSample& s, const SimulationDesign& d, const NetworkParams& theta) {
    return fit_wmle(s, d.spec, theta.dim(), theta.t_min, theta.t_max, covariate_options(d)).params;
}

BranchingParams approx_beta_bar(const NetworkParams& theta, const SimulationDesign& d, std::uint64_t seed) {
    const double K = d.k_factor * d.budget;
    int n = std::max(d.population, static_cast<int>(4 * K));
    for (int attempt = 0; attempt <= d.max_retries; ++attempt, n *= 2) {
        const Trajectory t = simulate_design_study(theta, d, K, n, derive_seed(seed, static_cast<std::uint64_t>(attempt)));
        if (!t.budget_exhausted) continue;
        return fit_covariates(design_sample(t, theta), d, theta);
    }
    throw NumericalError("approx_beta_bar: study died out before K participants");
}

void fill_beta_bar(ThetaGrid& grid, const SimulationDesign& d, std::uint64_t seed) {
    const int n = grid.size();
    grid.beta_bar.assign(n, std::nullopt);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        try {
            grid.beta_bar[i] = approx_beta_bar(grid.thetas[i], d, derive_seed(seed, static_cast<std::uint64_t>(i)));
        } catch (const NumericalError&) {
        }
    }
}

void fill_beta_bar_serial(ThetaGrid& grid, const SimulationDesign& d, std::uint64_t seed) {
    const int n = grid.size();
    grid.beta_bar.assign(n, std::nullopt);
    for (int i = 0; i < n; ++i) {
        try {
            grid.beta_bar[i] = approx_beta_bar(grid.thetas[i], d, derive_seed(seed, static_cast<std::uint64_t>(i)));
        } catch (const NumericalError&) {
        }
    }
}

double llr_stat(const WeightedSample& s, const BranchingParams& target, const BranchingParams& hat) {
    const double lt = loglik(target, s, kCovariate);
    const double lh = loglik(hat, s, kCovariate);
    if (!std::isfinite(lh)) throw NumericalError("llr_stat: fitted parameters out of domain");
    if (!std::isfinite(lt)) return kInf;
    return -2.0 * (lt - lh);
}

double finite_quantile(std::vector<double> stats, double alpha) {
    if (!(alpha >= 0 && alpha < 1)) throw InvalidArgument("finite_quantile: alpha must be in [0,1)");
    const auto B = static_cast<long>(stats.size());
    const long k = static_cast<long>(std::ceil((1.0 - alpha) * (B + 1) - 1e-9));
    if (B == 0 || k > B) return kInf;
    std::nth_element(stats.begin(), stats.begin() + (k - 1), stats.end());
    return stats[k - 1];
}

std::vector<double> reference_stats(const NetworkParams& theta, const BranchingParams& beta_bar,
                                    const SimulationDesign& d, int B, std::uint64_t seed) {
    if (B < 1) throw InvalidArgument("reference_stats: B must be >= 1");
    std::vector<double> out(B);
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < B; ++b) out[b] = stat_for_study(theta, beta_bar, d, derive_seed(seed, static_cast<std::uint64_t>(b)));
    return out;
}

std::vector<std::vector<double>> sbi_references(const ThetaGrid& grid, const SimulationDesign& d, int B,
                                                std::uint64_t seed) {
    if (B < 1) throw InvalidArgument("sbi_references: B must be >= 1");
    const int n = grid.size();
    std::vector<std::vector<double>> refs(n);
    for (int i = 0; i < n; ++i)
        if (grid.beta_bar[i]) refs[i].assign(B, kNaN);
#pragma omp parallel for schedule(dynamic)
    for (long k = 0; k < static_cast<long>(n) * B; ++k) {
        const int i = static_cast<int>(k / B), b = static_cast<int>(k % B);
        if (!grid.beta_bar[i]) continue;
        refs[i][b] = stat_for_study(grid.thetas[i], *grid.beta_bar[i], d,
                                    derive_seed(derive_seed(seed, static_cast<std::uint64_t>(i)), static_cast<std::uint64_t>(b)));
    }
    return refs;
}

std::vector<std::vector<double>> sbi_references_serial(const ThetaGrid& grid, const SimulationDesign& d, int B,
                                                       std::uint64_t seed) {
    if (B < 1) throw InvalidArgument("sbi_references: B must be >= 1");
    std::vector<std::vector<double>> refs(grid.size());
    for (int i = 0; i < grid.size(); ++i) {
        if (!grid.beta_bar[i]) continue;
        for (int b = 0; b < B; ++b)
            refs[i].push_back(stat_for_study(grid.thetas[i], *grid.beta_bar[i], d,
                                             derive_seed(derive_seed(seed, static_cast<std::uint64_t>(i)), static_cast<std::uint64_t>(b))));
    }
    return refs;
}

std::string to_string(Method m) {
    switch (m) {
        case Method::sbi: return "SBI";
        case Method::abc: return "ABC";
        case Method::bs_llr: return "BS_LLR";
        case Method::bs_wald: return "BS_WI";
    }
    return "?";
}

bool ConfidenceRegion::contains(int index) const {
    return std::find(accepted.begin(), accepted.end(), index) != accepted.end();
}

ConfidenceRegion sbi_region(const WeightedSample& obs, const BranchingParams& beta_hat, const ThetaGrid& grid,
                            const std::vector<std::vector<double>>& refs, double alpha) {
    if (static_cast<int>(refs.size()) != grid.size()) throw InvalidArgument("sbi_region: references do not match grid");
    ConfidenceRegion r = empty_region(Method::sbi, alpha, grid.size());
    for (int i = 0; i < grid.size(); ++i) {
        if (!grid.beta_bar[i] || refs[i].empty()) {
            r.excluded[i] = true;
            continue;
        }
        r.observed[i] = llr_stat(obs, *grid.beta_bar[i], beta_hat);
        r.threshold[i] = finite_quantile(refs[i], alpha);
        if (r.observed[i] <= r.threshold[i]) r.accepted.push_back(i);
    }
    const long n_excl = std::count(r.excluded.begin(), r.excluded.end(), true);
    if (n_excl > 0) r.warnings.push_back(std::to_string(n_excl) + " theta excluded (study died out)");
    return r;
}

ConfidenceRegion sbi_region(const WeightedSample& obs, ThetaGrid& grid, double alpha, int B, const SimulationDesign& d,
                            std::uint64_t seed) {
    if (B < 1) throw InvalidArgument("sbi_region: B must be >= 1");
    if (std::all_of(grid.beta_bar.begin(), grid.beta_bar.end(), [](const auto& b) { return !b.has_value(); }) ||
        static_cast<int>(grid.beta_bar.size()) != grid.size())
        fill_beta_bar(grid, d, derive_seed(seed, 0));
    if (grid.thetas.empty()) throw InvalidArgument("sbi_region: empty grid");
    const BranchingParams hat = fit_covariates(obs, d, grid.thetas.front());
    return sbi_region(obs, hat, grid, sbi_references(grid, d, B, derive_seed(seed, 1)), alpha);
}

VectorXd covariate_features(const BranchingParams& b) {
    std::vector<double> v;
    if (b.family == ModelFamily::type_model) {
        for (const auto& g : b.groups) {
            for (int i = 0; i < g.phi.size(); ++i) v.push_back(g.phi(i));
            for (int j = 0; j < g.G.cols(); ++j)
                for (int i = 0; i < g.G.rows(); ++i) v.push_back(g.G(i, j));
            const VectorXd dg = g.sigma().diagonal();
            for (int i = 0; i < dg.size(); ++i) v.push_back(dg(i));
        }
    } else {
        for (int i = 0; i < b.phi0.size(); ++i) v.push_back(b.phi0(i));
        v.push_back(b.phi1);
        for (int i = 0; i < b.omega0.size(); ++i) v.push_back(b.omega0(i));
        for (int i = 0; i < b.omega1.size(); ++i) v.push_back(b.omega1(i));
    }
    return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ConfidenceRegion abc_region(const WeightedSample& obs, const ThetaGrid& grid, int B, const SimulationDesign& d,
                            std::uint64_t seed) {
    if (grid.thetas.empty()) throw InvalidArgument("abc_region: empty grid");
    ConfidenceRegion r = empty_region(Method::abc, kNaN, grid.size());
    std::vector<VectorXd> feats(grid.size());
    for (int i = 0; i < grid.size(); ++i) {
        if (grid.beta_bar[i]) feats[i] = covariate_features(*grid.beta_bar[i]);
        else r.excluded[i] = true;
    }
    const NetworkParams& th = grid.thetas.front();
    const auto draws = generalized_bootstrap(obs, d.spec, th.dim(), th.t_min, th.t_max, B, seed, covariate_options(d));
    std::vector<int> hits(grid.size(), 0);
    for (const auto& dr : draws) {
        const VectorXd f = covariate_features(dr);
        int best = -1;
        double bd = kInf;
        for (int i = 0; i < grid.size(); ++i) {
            if (r.excluded[i]) continue;
            const double dist = (f - feats[i]).squaredNorm();
            if (dist < bd) {
                bd = dist;
                best = i;
            }
        }
        if (best >= 0) hits[best] += 1;
    }
    for (int i = 0; i < grid.size(); ++i) {
        r.observed[i] = hits[i];
        if (hits[i] > 0) r.accepted.push_back(i);
    }
    return r;
}

std::vector<double> wald_stats(const std::vector<VectorXd>& draws, const VectorXd& center,
                               const std::vector<VectorXd>& points, bool* regularized) {
    if (draws.size() < 2) throw InvalidArgument("wald_stats: need at least two draws");
    const int dim = static_cast<int>(center.size());
    VectorXd mean = VectorXd::Zero(dim);
    for (const auto& v : draws) mean += v;
    mean /= static_cast<double>(draws.size());
    MatrixXd cov = MatrixXd::Zero(dim, dim);
    for (const auto& v : draws) cov.noalias() += (v - mean) * (v - mean).transpose();
    cov /= static_cast<double>(draws.size() - 1);
    Eigen::LDLT<MatrixXd> ldlt(cov);
    bool reg = ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-12;
    if (reg) {
        const double scale = std::max(cov.diagonal().mean(), 1e-12);
        cov.diagonal().array() += 1e-8 * scale;
        ldlt.compute(cov);
    }
    if (regularized) *regularized = reg;
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& x : points) {
        const VectorXd dlt = x - center;
        out.push_back(dlt.dot(ldlt.solve(dlt)));
    }
    return out;
}

ConfidenceRegion bootstrap_region(const WeightedSample& obs, const BranchingParams& beta_hat, const ThetaGrid& grid,
                                  double alpha, int B, BootstrapVariant variant, const SimulationDesign& d,
                                  std::uint64_t seed) {
    if (B < 2) throw InvalidArgument("bootstrap_region: B must be >= 2");
    if (grid.thetas.empty()) throw InvalidArgument("bootstrap_region: empty grid");
    ConfidenceRegion r = empty_region(variant == BootstrapVariant::llr ? Method::bs_llr : Method::bs_wald, alpha,
                                      grid.size());
    for (int i = 0; i < grid.size(); ++i) r.excluded[i] = !grid.beta_bar[i];

    const NetworkParams& th = grid.thetas.front();
    // Same multipliers as generalized_bootstrap; the weighted samples are needed for the LLR.
    std::vector<double> boot(B);
    std::vector<VectorXd> feats(B);
    std::vector<std::exception_ptr> err(B);
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < B; ++b) {
        try {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
            WeightedSample sb = obs;
            for (auto& w : sb.weights) w *= rng.exponential();
            BranchingParams fb;
            try {
                fb = fit_covariates(sb, d, th);
            } catch (const NumericalError&) {
                SimulationDesign dr = d;
                dr.ridge = std::max(d.ridge, 1e-3);
                fb = fit_covariates(sb, dr, th);
            }
            if (variant == BootstrapVariant::llr) boot[b] = llr_stat(sb, beta_hat, fb);
            else feats[b] = covariate_features(fb);
        } catch (...) {
            err[b] = std::current_exception();
        }
    }
    for (auto& e : err)
        if (e) std::rethrow_exception(e);

    if (variant == BootstrapVariant::llr) {
        const double gamma = finite_quantile(boot, alpha);
        for (int i = 0; i < grid.size(); ++i) {
            if (r.excluded[i]) continue;
            r.observed[i] = llr_stat(obs, *grid.beta_bar[i], beta_hat);
            r.threshold[i] = gamma;
            if (r.observed[i] <= gamma) r.accepted.push_back(i);
        }
        return r;
    }

    const VectorXd center = covariate_features(beta_hat);
    std::vector<int> idx;
    std::vector<VectorXd> pts;
    for (int i = 0; i < grid.size(); ++i)
        if (!r.excluded[i]) {
            idx.push_back(i);
            pts.push_back(covariate_features(*grid.beta_bar[i]));
        }
    bool reg = false;
    const std::vector<double> bstats = wald_stats(feats, center, feats, &reg);
    const std::vector<double> ostats = wald_stats(feats, center, pts);
    if (reg) r.warnings.push_back("singular bootstrap covariance; ridge-regularized inverse");
    const double gamma = finite_quantile(bstats, alpha);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        r.observed[idx[k]] = ostats[k];
        r.threshold[idx[k]] = gamma;
        if (ostats[k] <= gamma) r.accepted.push_back(idx[k]);
    }
    return r;
}

Interval project(const ConfidenceRegion& region, const ThetaGrid& grid,
                 const std::function<double(const NetworkParams&)>& f) {
    Interval iv;
    for (int i : region.accepted) {
        const double v = f(grid.thetas.at(i));
        if (iv.empty) {
            iv.lo = iv.hi = v;
            iv.empty = false;
        } else {
            iv.lo = std::min(iv.lo, v);
            iv.hi = std::max(iv.hi, v);
        }
    }
    return iv;
}

void write_region_csv(const std::string& path, const ConfidenceRegion& r, const ThetaGrid& grid) {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot write " + path);
    os.precision(17);
    os << "theta,method,rho0,rho1";
    const int p = grid.thetas.empty() ? 0 : grid.thetas.front().dim();
    for (int k = 0; k < p; ++k) os << ",mu" << k + 1;
    os << ",observed,threshold,accepted,excluded\n";
    for (int i = 0; i < grid.size(); ++i) {
        const auto& th = grid.thetas[i];
        os << i << ',' << to_string(r.method) << ',' << th.rho0 << ',' << th.rho1;
        for (int k = 0; k < p; ++k) os << ',' << th.mu(k);
        os << ',' << r.observed[i] << ',' << r.threshold[i] << ',' << (r.contains(i) ? 1 : 0) << ','
           << (r.excluded[i] ? 1 : 0) << '\n';
    }
}

}  // namespace rlrds
