#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rlrds/errors.hpp"
#include "rlrds/inference.hpp"

using namespace rlrds;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

SimulationDesign small_design() {
    SimulationDesign d;
    d.population = 800;
    d.budget = 120;
    d.k_factor = 5;
    return d;
}

struct Observed {
    NetworkParams truth = NetworkParams::type_setting(1.0);
    SimulationDesign d = small_design();
    WeightedSample s;
    BranchingParams hat;
    Observed() {
        s = design_sample(simulate_design_study(truth, d, 31), truth);
        hat = fit_covariates(s, d, truth);
    }
};

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("finite-sample quantile") {
    std::vector<double> v{5, 3, 9, 1, 7, 2, 8, 4, 6};
    CHECK(finite_quantile(v, 0.1) == 9.0);   // ceil(0.9 * 10) = 9
    CHECK(finite_quantile(v, 0.3) == 7.0);   // ceil(0.7 * 10) = 7
    CHECK(finite_quantile(v, 0.05) == kInf); // ceil(9.5) = 10 > 9
    CHECK(finite_quantile(v, 0.0) == kInf);
    CHECK(finite_quantile({}, 0.5) == kInf);
    CHECK(finite_quantile(std::vector<double>(19, 1.0), 0.05) == 1.0);  // ceil(19) = 19
    CHECK_THROWS_AS(finite_quantile(v, 1.0), InvalidArgument);
}

TEST_CASE("covariate grid") {
    const NetworkParams t = NetworkParams::type_setting(2.0);
    const ThetaGrid g = make_coverage_grid(t, {0.5, 1.0, 2.0, 4.0}, {-1.5, 0.0, 1.5});
    CHECK(g.size() == 108);
    REQUIRE(g.truth >= 0);
    CHECK(g.thetas[g.truth].rho1 == 2.0);
    CHECK(g.thetas[g.truth].mu == t.mu);
    CHECK(g.thetas[1].mu(2) == 1.0);  // last component fastest
    CHECK(g.thetas[1].mu(0) == -0.5);
    for (const auto& th : g.thetas) {
        CHECK(th.rho0 == t.rho0);
        CHECK(th.sigma == t.sigma);
    }
}

TEST_CASE("llr statistic") {
    const Observed o;
    CHECK(std::abs(llr_stat(o.s, o.hat, o.hat)) < 1e-9);
    BranchingParams other = o.hat;
    other.groups[0].phi(0) += 0.5;
    other.groups[1].G(1, 1) -= 0.1;
    const double stat = llr_stat(o.s, other, o.hat);
    CHECK(stat > 0);
    long double direct = 0;
    for (const auto& d : o.s.data)
        for (const auto& r : d.recruits)
            direct += (long double)covariate_logpdf(r.x, d.x, d.action, other) -
                      (long double)covariate_logpdf(r.x, d.x, d.action, o.hat);
    CHECK(stat == doctest::Approx(double(-2 * direct)).epsilon(1e-9));
}

TEST_CASE("beta-bar is deterministic and thread independent") {
    SimulationDesign d = small_design();
    d.k_factor = 3;
    const NetworkParams t = NetworkParams::type_setting(1.0);
    const BranchingParams a = approx_beta_bar(t, d, 12), b = approx_beta_bar(t, d, 12);
    CHECK(to_flat(a) == to_flat(b));
    ThetaGrid g1 = make_coverage_grid(t, {1.0, 2.0}, {0.0}), g2 = g1;
    fill_beta_bar(g1, d, 5);
    fill_beta_bar_serial(g2, d, 5);
    for (int i = 0; i < g1.size(); ++i) {
        REQUIRE(g1.beta_bar[i].has_value());
        CHECK(to_flat(*g1.beta_bar[i]) == to_flat(*g2.beta_bar[i]));
    }
    const auto r1 = sbi_references(g1, d, 4, 6), r2 = sbi_references_serial(g1, d, 4, 6);
    CHECK(r1 == r2);
}

TEST_CASE("without homophily recruits are independent of recruiters") {
    // rho1 = 0 and uniform neighbour choice: x_child ~ N(mu, Sigma) regardless of x_parent
    NetworkParams t = NetworkParams::count_setting(0.0);
    SimulationDesign d;
    d.spec.variant = ActionVariant::count_grid;
    d.population = 1000;
    d.budget = 300;
    d.k_factor = 10;
    const BranchingParams b = approx_beta_bar(t, d, 3);
    REQUIRE(b.groups.size() == 1);
    const auto& g = b.groups[0];
    const double se_mean = std::sqrt(10.0 / 3000);
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(g.phi(k) - t.mu(k)) < 6 * se_mean + 0.1);
        CHECK(std::abs(g.sigma()(k, k) - 10.0) < 1.5);
        for (int j = 0; j < 3; ++j) CHECK(std::abs(g.G(k, j)) < 0.08);
    }
}

TEST_CASE("SBI region") {
    Observed o;
    // shifts on the first mu component only: rows 4, 13, 22 and 31, 40, 49 of the full lattice
    const ThetaGrid full = make_coverage_grid(o.truth, {1.0, 2.0}, {-1.5, 0.0, 1.5});
    ThetaGrid small;
    for (int i = 4; i < full.size(); i += 9) small.thetas.push_back(full.thetas[i]);
    small.beta_bar.resize(small.thetas.size());
    small.truth = 1;
    REQUIRE(small.thetas[1].mu == o.truth.mu);
    fill_beta_bar(small, o.d, 8);
    const auto refs = sbi_references(small, o.d, 19, 9);
    const ConfidenceRegion all = sbi_region(o.s, o.hat, small, refs, 0.0);
    CHECK(all.accepted.size() == small.thetas.size());
    const ConfidenceRegion r05 = sbi_region(o.s, o.hat, small, refs, 0.05);
    const ConfidenceRegion r30 = sbi_region(o.s, o.hat, small, refs, 0.3);
    for (int i : r30.accepted) CHECK(r05.contains(i));
    for (int i = 0; i < small.size(); ++i) CHECK(r05.observed[i] >= 0);
    // missing beta-bar excludes the point
    ThetaGrid holed = small;
    holed.beta_bar[0].reset();
    const ConfidenceRegion h = sbi_region(o.s, o.hat, holed, sbi_references(holed, o.d, 19, 9), 0.0);
    CHECK(h.excluded[0]);
    CHECK_FALSE(h.contains(0));
}

TEST_CASE("ABC with a single candidate accepts it") {
    Observed o;
    ThetaGrid g = make_coverage_grid(o.truth, {1.0}, {0.0});
    fill_beta_bar(g, o.d, 2);
    const ConfidenceRegion r = abc_region(o.s, g, 10, o.d, 3);
    CHECK(r.accepted == std::vector<int>{0});
    CHECK(r.observed[0] == 10.0);
}

TEST_CASE("bootstrap regions") {
    Observed o;
    ThetaGrid g = make_coverage_grid(o.truth, {1.0}, {-1.5, 0.0, 1.5});
    fill_beta_bar(g, o.d, 2);
    for (auto v : {BootstrapVariant::llr, BootstrapVariant::wald}) {
        const ConfidenceRegion a = bootstrap_region(o.s, o.hat, g, 0.0, 20, v, o.d, 4);
        CHECK(a.accepted.size() == 27u);
        const ConfidenceRegion b = bootstrap_region(o.s, o.hat, g, 0.05, 20, v, o.d, 4);
        CHECK(b.accepted.size() <= a.accepted.size());
    }
}

TEST_CASE("Wald statistic is invariant under affine reparameterization") {
    Rng rng(2);
    std::vector<VectorXd> draws, pts;
    for (int i = 0; i < 40; ++i) draws.push_back((VectorXd(3) << rng.normal(), 2 * rng.normal(), rng.normal() + 1).finished());
    for (int i = 0; i < 5; ++i) pts.push_back((VectorXd(3) << rng.normal(), rng.normal(), rng.normal()).finished());
    const VectorXd c = VectorXd::Zero(3);
    MatrixXd A(3, 3);
    A << 2, 1, 0, 0, 1, -1, 3, 0, 1;
    const VectorXd shift = (VectorXd(3) << 1, -2, 0.5).finished();
    auto map = [&](std::vector<VectorXd> v) {
        for (auto& x : v) x = A * x + shift;
        return v;
    };
    const auto s1 = wald_stats(draws, c, pts);
    const auto s2 = wald_stats(map(draws), A * c + shift, map(pts));
    for (int i = 0; i < 5; ++i) CHECK(s1[i] == doctest::Approx(s2[i]).epsilon(1e-8));
    // degenerate draws are regularized
    std::vector<VectorXd> flat(10, VectorXd::Ones(3));
    bool reg = false;
    wald_stats(flat, c, pts, &reg);
    CHECK(reg);
    CHECK_THROWS_AS(wald_stats({VectorXd::Ones(3)}, c, pts), InvalidArgument);
}

TEST_CASE("projection intervals") {
    const ThetaGrid g = make_coverage_grid(NetworkParams::type_setting(1.0), {1.0}, {-1.0, 0.0, 1.0});
    ConfidenceRegion r;
    for (int i = 0; i < g.size(); ++i) r.accepted.push_back(i);
    const Interval all = project(r, g, [](const NetworkParams& p) { return p.mu(0); });
    CHECK(!all.empty);
    CHECK(all.lo == 0.0);
    CHECK(all.hi == 2.0);
    CHECK(all.length() == 2.0);
    r.accepted = {g.truth};
    const Interval one = project(r, g, [](const NetworkParams& p) { return p.mu(0); });
    CHECK(one.length() == 0.0);
    CHECK(one.contains(1.0));
    r.accepted.clear();
    const Interval none = project(r, g, [](const NetworkParams& p) { return p.mu(0); });
    CHECK(none.empty);
    CHECK_FALSE(none.contains(1.0));
    CHECK(none.length() == 0.0);
}

TEST_CASE("covariate features") {
    const Observed o;
    const VectorXd f = covariate_features(o.hat);
    CHECK(f.size() == 3 * (3 + 9 + 3));
    CHECK(f(0) == o.hat.groups[0].phi(0));
    CHECK(f(3) == o.hat.groups[0].G(0, 0));
    CHECK(f(4) == o.hat.groups[0].G(1, 0));
    CHECK(f(12) == doctest::Approx(o.hat.groups[0].sigma()(0, 0)));
}

}
