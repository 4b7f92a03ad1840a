#include <cmath>
#include <exception>
#include <limits>

#include "rlrds/branching.hpp"
#include "rlrds/errors.hpp"
#include "rlrds/optimize.hpp"

namespace rlrds {

namespace {

/// Newton on flat[offset, offset+len) with the remaining coordinates held fixed.
/// map(y) gives the flat sub-vector and its first/second derivatives per coordinate
/// (a diagonal reparameterization, e.g. zeta = exp(y)).
struct CoordMap {
    std::function<double(double)> f, d1, d2;
};

NewtonResult newton_block(const BranchingParams& shape, VectorXd& flat, const WeightedSample& s, unsigned block,
                          int offset, int len, const VectorXd& y0, const CoordMap* map, double ridge,
                          const NewtonOptions& nopt) {
    auto obj = [&](const VectorXd& y, VectorXd* g, MatrixXd* h) -> double {
        VectorXd f = flat;
        for (int k = 0; k < len; ++k) f(offset + k) = map ? map->f(y(k)) : y(k);
        VectorXd gf;
        MatrixXd hf;
        double v = evaluate_flat(shape, f, s, g ? &gf : nullptr, h ? &hf : nullptr, block);
        if (!std::isfinite(v)) return -std::numeric_limits<double>::infinity();
        v -= 0.5 * ridge * y.squaredNorm();
        if (g) {
            VectorXd gb = gf.segment(offset, len);
            if (h) {
                MatrixXd hb = hf.block(offset, offset, len, len);
                if (map) {
                    for (int a = 0; a < len; ++a)
                        for (int b = 0; b < len; ++b) hb(a, b) *= map->d1(y(a)) * map->d1(y(b));
                    for (int a = 0; a < len; ++a) hb(a, a) += gb(a) * map->d2(y(a));
                }
                hb.diagonal().array() -= ridge;
                *h = hb;
            }
            if (map)
                for (int a = 0; a < len; ++a) gb(a) *= map->d1(y(a));
            *g = gb - ridge * y;
        }
        return v;
    };
    NewtonResult r = maximize_newton(obj, y0, nopt);
    for (int k = 0; k < len; ++k) flat(offset + k) = map ? map->f(r.x(k)) : r.x(k);
    return r;
}

bool has_family_data(const WeightedSample& s) {
    for (std::size_t i = 0; i < s.data.size(); ++i)
        if (s.data[i].family_observed && s.weights[i] > 0) return true;
    return false;
}

bool has_timed_children(const WeightedSample& s) {
    for (std::size_t i = 0; i < s.data.size(); ++i)
        if (s.data[i].family_observed && !s.data[i].recruits.empty() && s.weights[i] > 0) return true;
    return false;
}

bool has_children(const WeightedSample& s) {
    for (std::size_t i = 0; i < s.data.size(); ++i)
        if (!s.data[i].recruits.empty() && s.weights[i] > 0) return true;
    return false;
}

void note(FitReport& rep, const NewtonResult& r, const char* block) {
    rep.iterations += r.iterations;
    rep.grad_norm = std::max(rep.grad_norm, r.grad_norm);
    if (!r.converged) {
        rep.converged = false;
        rep.flags.push_back(std::string(block) + "_not_converged");
    }
}

/// Closed-form ridge regression of child on (1, parent) per group.
void fit_type_covariates(BranchingParams& b, const WeightedSample& s, double ridge, FitReport& rep) {
    const int p = b.p;
    std::vector<double> n(b.groups.size(), 0.0);
    std::vector<int> count(b.groups.size(), 0);
    std::vector<MatrixXd> sxx(b.groups.size(), MatrixXd::Zero(p, p));
    std::vector<MatrixXd> sxz(b.groups.size(), MatrixXd::Zero(p, p + 1));
    std::vector<MatrixXd> v(b.groups.size(), MatrixXd::Zero(p + 1, p + 1));
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        const auto& d = s.data[i];
        if (d.recruits.empty()) continue;
        const int g = b.spec.covariate_group(d.action);
        const double w = s.weights[i];
        VectorXd xs(p + 1);
        xs(0) = 1.0;
        xs.tail(p) = d.x;
        for (const auto& r : d.recruits) {
            n[g] += w;
            count[g] += 1;
            sxx[g].noalias() += w * r.x * r.x.transpose();
            sxz[g].noalias() += w * r.x * xs.transpose();
        }
        v[g].noalias() += (w * d.m()) * xs * xs.transpose();
    }
    for (std::size_t g = 0; g < b.groups.size(); ++g) {
        const int gi = static_cast<int>(g);
        if (count[g] == 0 || !(n[g] > 0)) {
            rep.flags.push_back("group_" + std::to_string(gi) + "_unobserved");
            continue;
        }
        if (ridge == 0.0 && count[g] < p + 2)
            throw SingularFitError("too few recruits for covariate group " + std::to_string(gi), gi);
        MatrixXd a = v[g];
        a.diagonal().array() += ridge;
        Eigen::LDLT<MatrixXd> ldlt(a);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-12)
            throw SingularFitError("singular design for covariate group " + std::to_string(gi), gi);
        const MatrixXd gd = ldlt.solve(sxz[g].transpose()).transpose();
        MatrixXd resid = sxx[g] - gd * sxz[g].transpose() - sxz[g] * gd.transpose() + gd * v[g] * gd.transpose();
        MatrixXd sigma = (resid + ridge * gd * gd.transpose()) / n[g];
        sigma = 0.5 * (sigma + sigma.transpose());
        auto& grp = b.groups[g];
        grp.phi = gd.col(0);
        grp.G = gd.rightCols(p);
        if (b.diagonal) {
            const VectorXd dg = sigma.diagonal();
            if ((dg.array() <= 1e-300).any())
                throw SingularFitError("degenerate covariance for covariate group " + std::to_string(gi), gi);
            grp.sigma_chol = dg.cwiseSqrt().asDiagonal();
        } else {
            Eigen::LLT<MatrixXd> llt(sigma);
            if (llt.info() != Eigen::Success)
                throw SingularFitError("degenerate covariance for covariate group " + std::to_string(gi), gi);
            grp.sigma_chol = llt.matrixL();
        }
    }
}

}  // namespace

FitResult fit_wmle(const WeightedSample& s, const ActionSpaceSpec& spec, int p, double t_min, double t_max,
                   const FitOptions& opt) {
    if (s.data.empty()) throw InvalidArgument("fit_wmle: empty sample");
    if (opt.ridge < 0 || opt.reward_ridge < 0) throw InvalidArgument("fit_wmle: ridge must be >= 0");
    FitResult res;
    res.params = BranchingParams::initial(spec, p, t_min, t_max, opt.diagonal);
    auto& b = res.params;
    auto& rep = res.report;
    rep.ridge = opt.ridge;
    rep.reward_ridge = opt.reward_ridge;
    const FlatLayout l = flat_layout(b);
    NewtonOptions nopt{opt.tol, opt.max_iter};

    if (opt.blocks & kCovariate) {
        if (!has_children(s)) {
            rep.flags.push_back("covariate_unobserved");
        } else if (b.family == ModelFamily::type_model) {
            fit_type_covariates(b, s, opt.ridge, rep);
        } else {
            // Start from per-coordinate moments of the recruits.
            VectorXd mean = VectorXd::Zero(p), sq = VectorXd::Zero(p);
            double n = 0;
            for (std::size_t i = 0; i < s.data.size(); ++i)
                for (const auto& r : s.data[i].recruits) {
                    n += s.weights[i];
                    mean += s.weights[i] * r.x;
                    sq += s.weights[i] * r.x.cwiseProduct(r.x);
                }
            mean /= n;
            const VectorXd var = (sq / n - mean.cwiseProduct(mean)).cwiseMax(1e-8);
            b.phi0 = mean;
            b.phi1 = 0.0;
            b.omega0 = var.cwiseInverse();
            b.omega1 = VectorXd::Zero(p);
            VectorXd flat = to_flat(b);
            const int len = l.covariate_len();
            // Ridge only on the mean coefficients (phi0, phi1).
            auto obj = [&](const VectorXd& y, VectorXd* g, MatrixXd* h) -> double {
                VectorXd f = flat;
                f.segment(l.covariate, len) = y;
                VectorXd gf;
                MatrixXd hf;
                double val = evaluate_flat(b, f, s, g ? &gf : nullptr, h ? &hf : nullptr, kCovariate);
                if (!std::isfinite(val)) return val;
                val -= 0.5 * opt.ridge * y.head(p + 1).squaredNorm();
                if (g) {
                    *g = gf.segment(l.covariate, len);
                    g->head(p + 1) -= opt.ridge * y.head(p + 1);
                }
                if (h) {
                    *h = hf.block(l.covariate, l.covariate, len, len);
                    h->diagonal().head(p + 1).array() -= opt.ridge;
                }
                return val;
            };
            const NewtonResult r = maximize_newton(obj, flat.segment(l.covariate, len), nopt);
            note(rep, r, "covariate");
            flat.segment(l.covariate, len) = r.x;
            b = from_flat(b, flat);
        }
    }

    VectorXd flat = to_flat(b);

    if (opt.blocks & kReward) {
        if (!has_children(s)) {
            rep.flags.push_back("reward_unobserved");
        } else {
            const NewtonResult r = newton_block(b, flat, s, kReward, l.reward, l.reward_len(),
                                                VectorXd::Zero(l.reward_len()), nullptr, opt.reward_ridge, nopt);
            note(rep, r, "reward");
        }
    }

    if (opt.blocks & kArrival) {
        if (!has_timed_children(s)) {
            rep.flags.push_back("arrival_unobserved");
        } else if (b.family == ModelFamily::type_model) {
            double su = 0, sw = 0;
            for (std::size_t i = 0; i < s.data.size(); ++i)
                if (s.data[i].family_observed)
                    for (const auto& rc : s.data[i].recruits) {
                        su += s.weights[i] * (rc.u - t_min);
                        sw += s.weights[i];
                    }
            const double start = std::log(sw / std::max(su, 1e-12));
            const CoordMap m{[](double y) { return std::exp(y); }, [](double y) { return std::exp(y); },
                             [](double y) { return std::exp(y); }};
            const NewtonResult r = newton_block(b, flat, s, kArrival, l.arrival, 1, VectorXd::Constant(1, start), &m,
                                                0.0, nopt);
            note(rep, r, "arrival");
        } else {
            double su = 0, sw = 0;
            for (std::size_t i = 0; i < s.data.size(); ++i)
                if (s.data[i].family_observed)
                    for (const auto& rc : s.data[i].recruits) {
                        su += s.weights[i] * (rc.u - t_min);
                        sw += s.weights[i];
                    }
            const VectorXd y0 = (VectorXd(2) << sw / std::max(su, 1e-12), 0.0).finished();
            const NewtonResult r = newton_block(b, flat, s, kArrival, l.arrival, 2, y0, nullptr, 0.0, nopt);
            note(rep, r, "arrival");
        }
    }

    if (opt.blocks & kFamily) {
        if (!has_family_data(s)) {
            rep.flags.push_back("family_unobserved");
        } else {
            const NewtonResult r =
                newton_block(b, flat, s, kFamily, l.family, 1, VectorXd::Zero(1), nullptr, 0.0, nopt);
            note(rep, r, "family");
        }
    }

    b = from_flat(b, flat);
    const double sup = b.family == ModelFamily::type_model ? mean_family_size(b.lambda, spec.main_coupons)
                                                           : mean_family_size(b.lambda, spec.max_coupons());
    if (!(sup > 1.0)) rep.flags.push_back("not_supercritical");
    return res;
}

namespace {

BranchingParams bootstrap_one(const WeightedSample& s, const ActionSpaceSpec& spec, int p, double t_min, double t_max,
                              std::uint64_t seed, int b, const FitOptions& opt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    WeightedSample sb = s;
    for (auto& w : sb.weights) w *= rng.exponential();
    try {
        return fit_wmle(sb, spec, p, t_min, t_max, opt).params;
    } catch (const std::exception&) {
        FitOptions retry = opt;
        retry.ridge = std::max(opt.ridge, 1e-3);
        retry.reward_ridge = std::max(opt.reward_ridge, 1e-3);
        return fit_wmle(sb, spec, p, t_min, t_max, retry).params;
    }
}

}  // namespace

std::vector<BranchingParams> generalized_bootstrap(const WeightedSample& s, const ActionSpaceSpec& spec, int p,
                                                   double t_min, double t_max, int B, std::uint64_t seed,
                                                   const FitOptions& opt) {
    if (B < 1) throw InvalidArgument("bootstrap: B must be >= 1");
    std::vector<BranchingParams> out(B);
    std::vector<std::exception_ptr> err(B);
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < B; ++b) {
        try {
            out[b] = bootstrap_one(s, spec, p, t_min, t_max, seed, b, opt);
        } catch (...) {
            err[b] = std::current_exception();
        }
    }
    for (auto& e : err)
        if (e) std::rethrow_exception(e);
    return out;
}

std::vector<BranchingParams> generalized_bootstrap_serial(const WeightedSample& s, const ActionSpaceSpec& spec, int p,
                                                          double t_min, double t_max, int B, std::uint64_t seed,
                                                          const FitOptions& opt) {
    if (B < 1) throw InvalidArgument("bootstrap: B must be >= 1");
    std::vector<BranchingParams> out;
    out.reserve(B);
    for (int b = 0; b < B; ++b) out.push_back(bootstrap_one(s, spec, p, t_min, t_max, seed, b, opt));
    return out;
}

}  // namespace rlrds
