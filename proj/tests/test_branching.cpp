#include <doctest.h>

#include <cmath>

#include "rlrds/branching.hpp"
#include "rlrds/errors.hpp"
#include "rlrds/policy.hpp"

using namespace rlrds;

namespace {

BranchingParams type_truth(int p) {
    ActionSpaceSpec spec;
    BranchingParams b = BranchingParams::initial(spec, p, 0.0, 3.0, false);
    for (int g = 0; g < 3; ++g) {
        b.groups[g].phi = VectorXd::Constant(p, 0.5 * (g - 1));
        b.groups[g].G = 0.3 * MatrixXd::Identity(p, p);
        b.groups[g].sigma_chol = MatrixXd::Identity(p, p) * (1.0 + 0.2 * g);
        if (p > 1) b.groups[g].sigma_chol(1, 0) = 0.3;
    }
    b.lambda = 1.2;
    b.zeta = 1.2;
    b.beta_y = VectorXd::Zero(reward_dim(spec.reward_design(), p));
    b.beta_y(0) = -0.5;
    b.beta_y(1) = 0.8;
    return b;
}

BranchingParams value_truth(int p) {
    ActionSpaceSpec spec;
    spec.variant = ActionVariant::value_grid;
    BranchingParams b = BranchingParams::initial(spec, p, 0.0, 3.0, true);
    b.phi0 = VectorXd::Constant(p, 0.2);
    b.phi1 = 0.4;
    b.omega0 = VectorXd::Constant(p, 1.0);
    b.omega1 = VectorXd::Constant(p, 0.5);
    b.zeta0 = 0.5;
    b.zeta1 = 2.0;
    b.lambda = 1.2;
    b.beta_y = VectorXd::Zero(reward_dim(spec.reward_design(), p));
    b.beta_y(0) = -1.0;
    b.beta_y(1) = 1.5;
    return b;
}

Trajectory simulate(const BranchingParams& b, double budget, std::uint64_t seed) {
    RandomPolicy pol;
    return simulate_branching_study(b, VectorXd::Zero(b.p), MatrixXd::Identity(b.p, b.p), 20, pol, budget, seed);
}

// Central differences of loglik for the gradient, of the analytic gradient for the Hessian.
double max_rel_err(const BranchingParams& b, const WeightedSample& s) {
    const VectorXd x = to_flat(b);
    VectorXd g;
    MatrixXd h;
    evaluate_flat(b, x, s, &g, &h);
    double worst = 0.0;
    for (int k = 0; k < x.size(); ++k) {
        const double step = 1e-5 * std::max(1.0, std::abs(x(k)));
        VectorXd up = x, dn = x;
        up(k) += step;
        dn(k) -= step;
        VectorXd gu, gd;
        const double fd = (evaluate_flat(b, up, s, &gu, nullptr) - evaluate_flat(b, dn, s, &gd, nullptr)) / (2 * step);
        worst = std::max(worst, std::abs(fd - g(k)) / std::max(1.0, std::abs(g(k))));
        const VectorXd col = (gu - gd) / (2 * step);
        for (int r = 0; r < x.size(); ++r)
            worst = std::max(worst, std::abs(col(r) - h(r, k)) / std::max(1.0, std::abs(h(r, k))));
    }
    return worst;
}

}  // namespace

TEST_SUITE("branching") {

TEST_CASE("family pmf sums to one and matches its mean") {
    for (int L : {1, 2, 5, 7})
        for (double lam : {0.1, 1.0, 3.5, 20.0}) {
            double total = 0, mean = 0;
            for (int m = 0; m <= L; ++m) {
                const double pm = std::exp(family_logpmf(m, lam, L));
                total += pm;
                mean += m * pm;
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(mean_family_size(lam, L) == doctest::Approx(mean).epsilon(1e-12));
        }
    // L = 1: Bernoulli with odds lambda
    CHECK(std::exp(family_logpmf(1, 3.0, 1)) == doctest::Approx(0.75));
    CHECK(family_logpmf(0, 0.0, 3) == 0.0);
    CHECK_THROWS_AS(family_logpmf(4, 1.0, 3), InvalidArgument);
}

TEST_CASE("covariate density against a long double formula") {
    BranchingParams b = type_truth(2);
    const VectorXd xp = (VectorXd(2) << 0.7, -1.2).finished();
    const VectorXd xc = (VectorXd(2) << 1.1, 0.4).finished();
    for (int a = 0; a < 3; ++a) {
        const auto& g = b.groups[a];
        const MatrixXd S = g.sigma();
        long double r0 = xc(0) - g.phi(0) - (g.G(0, 0) * xp(0) + g.G(0, 1) * xp(1));
        long double r1 = xc(1) - g.phi(1) - (g.G(1, 0) * xp(0) + g.G(1, 1) * xp(1));
        long double det = (long double)S(0, 0) * S(1, 1) - (long double)S(0, 1) * S(1, 0);
        long double q = (S(1, 1) * r0 * r0 - 2 * S(0, 1) * r0 * r1 + S(0, 0) * r1 * r1) / det;
        long double want = -0.5L * q - 0.5L * std::log(det) - std::log(2 * 3.14159265358979323846L);
        CHECK(covariate_logpdf(xc, xp, a, b) == doctest::Approx((double)want).epsilon(1e-12));
    }
    BranchingParams v = value_truth(2);
    const int a = 4;  // value 0.5
    long double want = 0;
    for (int k = 0; k < 2; ++k) {
        const long double w = v.omega0(k) + 0.5L * v.omega1(k);
        const long double r = xc(k) - v.phi0(k) - v.phi1 * xp(k);
        want += 0.5L * std::log(w / (2 * 3.14159265358979323846L)) - 0.5L * w * r * r;
    }
    CHECK(covariate_logpdf(xc, xp, a, v) == doctest::Approx((double)want).epsilon(1e-12));
}

TEST_CASE("stabilizing weights") {
    const auto w = stabilizing_weights({0.5, 0.25, 1.0 / 3}, {3, 3, 3});
    CHECK(w[0] == doctest::Approx(std::sqrt(2.0 / 3)));
    CHECK(w[1] == doctest::Approx(std::sqrt(4.0 / 3)));
    CHECK(w[2] == doctest::Approx(1.0));
    CHECK_THROWS_AS(stabilizing_weights({0.0}, {3}), ContractViolation);
}

TEST_CASE("flat round trip") {
    for (const BranchingParams& b : {type_truth(2), value_truth(3)}) {
        const VectorXd f = to_flat(b);
        CHECK(f.size() == flat_layout(b).size);
        const BranchingParams back = from_flat(b, f);
        CHECK((to_flat(back) - f).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(back.lambda == doctest::Approx(b.lambda));
    }
    BranchingParams d = type_truth(2);
    d.diagonal = true;
    d.groups[0].sigma_chol(1, 0) = 0;
    d.groups[1].sigma_chol(1, 0) = 0;
    d.groups[2].sigma_chol(1, 0) = 0;
    CHECK(flat_layout(d).covariate_len() == 3 * (2 * 3 + 2));
    CHECK(flat_layout(type_truth(2)).covariate_len() == 3 * (2 * 3 + 4));
}

TEST_CASE("score and Hessian match finite differences") {
    const BranchingParams t = type_truth(2), v = value_truth(2);
    for (const auto* b : {&t, &v}) {
        const Trajectory tr = simulate(*b, 150, 3);
        const WeightedSample s = build_sample(tr, b->t_min, b->t_max, SampleView::online);
        // evaluate away from the truth so the score is not near zero
        VectorXd f = to_flat(*b);
        Rng rng(5);
        for (int k = 0; k < f.size(); ++k) f(k) += 0.05 * rng.normal();
        f = to_flat(from_flat(*b, f));  // symmetrize the Omega block
        const BranchingParams at = from_flat(*b, f);
        CHECK(max_rel_err(at, s) < 1e-5);
        CHECK((score(at, s) - [&] { VectorXd g; evaluate_flat(at, f, s, &g, nullptr); return g; }()).norm() < 1e-10);
    }
}

TEST_CASE("fit recovers the generating parameters") {
    const BranchingParams b = type_truth(1);
    const Trajectory tr = simulate(b, 20000, 21);
    const WeightedSample s = build_sample(tr, b.t_min, b.t_max, SampleView::complete_epochs);
    const FitResult r = fit_wmle(s, b.spec, 1, b.t_min, b.t_max);
    CHECK(r.report.converged);
    for (int g = 0; g < 3; ++g) {
        CHECK(std::abs(r.params.groups[g].phi(0) - b.groups[g].phi(0)) < 0.15);
        CHECK(std::abs(r.params.groups[g].G(0, 0) - b.groups[g].G(0, 0)) < 0.1);
        CHECK(std::abs(r.params.groups[g].sigma()(0, 0) / b.groups[g].sigma()(0, 0) - 1) < 0.2);
    }
    CHECK(std::abs(r.params.lambda - b.lambda) < 0.3);
    CHECK(std::abs(r.params.zeta - b.zeta) < 0.15);
    CHECK(std::abs(r.params.beta_y(0) - b.beta_y(0)) < 0.3);
    CHECK(std::abs(r.params.beta_y(1) - b.beta_y(1)) < 0.3);
    // the MLE is a stationary point
    CHECK(score(r.params, s).norm() < 1e-4 * s.data.size());
}

TEST_CASE("value model fit recovers the generating parameters") {
    const BranchingParams b = value_truth(1);
    const Trajectory tr = simulate(b, 20000, 22);
    const WeightedSample s = build_sample(tr, b.t_min, b.t_max, SampleView::complete_epochs);
    FitOptions o;
    o.diagonal = true;
    const FitResult r = fit_wmle(s, b.spec, 1, b.t_min, b.t_max, o);
    CHECK(std::abs(r.params.phi0(0) - b.phi0(0)) < 0.15);
    CHECK(std::abs(r.params.phi1 - b.phi1) < 0.1);
    CHECK(std::abs(r.params.omega0(0) - b.omega0(0)) < 0.3);
    CHECK(std::abs(r.params.zeta0 - b.zeta0) < 0.3);
    CHECK(std::abs(r.params.zeta1 - b.zeta1) < 0.6);
}

TEST_CASE("too few recruits per group is reported") {
    const BranchingParams b = type_truth(2);
    const Trajectory tr = simulate(b, 24, 3);
    const WeightedSample s = build_sample(tr, b.t_min, b.t_max, SampleView::online);
    CHECK_THROWS_AS(fit_wmle(s, b.spec, 2, b.t_min, b.t_max), SingularFitError);
}

TEST_CASE("bootstrap is thread-count independent and centred on the fit") {
    const BranchingParams b = type_truth(1);
    const Trajectory tr = simulate(b, 400, 8);
    const WeightedSample s = build_sample(tr, b.t_min, b.t_max, SampleView::online);
    FitOptions o;
    o.reward_ridge = 1.0;
    const auto par = generalized_bootstrap(s, b.spec, 1, b.t_min, b.t_max, 12, 4, o);
    const auto ser = generalized_bootstrap_serial(s, b.spec, 1, b.t_min, b.t_max, 12, 4, o);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) CHECK(to_flat(par[i]) == to_flat(ser[i]));
    CHECK(to_flat(par[0]) != to_flat(par[1]));
}

TEST_CASE("online view withholds unexpired families") {
    const BranchingParams b = type_truth(1);
    const Trajectory tr = simulate(b, 200, 9);
    const WeightedSample on = build_sample(tr, b.t_min, b.t_max, SampleView::online);
    const WeightedSample ce = build_sample(tr, b.t_min, b.t_max, SampleView::complete_epochs);
    CHECK(on.data.size() >= ce.data.size());
    const double end = tr.end_time();
    for (const auto& d : on.data) {
        const auto& r = tr.records[d.record];
        CHECK(d.family_observed == (r.arrival_time + b.t_max < end));
    }
    for (const auto& d : ce.data) CHECK(d.family_observed);
}

TEST_CASE("derivatives with an empty allocation group") {
    // a fixed policy leaves two of the three covariate groups without data
    const BranchingParams b = type_truth(2);
    FixedPolicy pol(0);
    const Trajectory tr = simulate_branching_study(b, VectorXd::Zero(2), MatrixXd::Identity(2, 2), 5, pol, 40, 2);
    const WeightedSample s = build_sample(tr, b.t_min, b.t_max, SampleView::online);
    const VectorXd g = score(b, s);
    CHECK(g.size() == flat_layout(b).size);
    CHECK(hessian(b, s).rows() == g.size());
    CHECK(max_rel_err(b, s) < 1e-5);
}

}
