#include <doctest.h>

#include <cmath>

#include "rlrds/errors.hpp"
#include "rlrds/model.hpp"
#include "rlrds/rng.hpp"

using namespace rlrds;

namespace {

// composite Simpson on [a,b]
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("seed derivation is deterministic and stream-separated") {
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    Rng a(5), b(5);
    for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
    const double u = hash_uniform(9, 1, 2);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == hash_uniform(9, 1, 2));
}

TEST_CASE("rng moments") {
    Rng r(11);
    double s = 0, s2 = 0, e = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
        e += r.exponential();
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
    CHECK(std::abs(e / n - 1.0) < 0.01);
}

TEST_CASE("truncated exponential density integrates to one") {
    for (double zeta : {0.5, 1.0, 6.5}) {
        const double total = simpson([&](double u) { return std::exp(truncexp_logpdf(u, zeta, 0.0, 3.0)); }, 0.0, 3.0);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(std::isinf(truncexp_logpdf(3.5, 1.0, 0.0, 3.0)));
    CHECK_THROWS_AS(truncexp_logpdf(1.0, 0.0, 0.0, 3.0), InvalidArgument);
}

TEST_CASE("truncated exponential mean matches quadrature") {
    for (double zeta : {0.3, 1.0, 4.0}) {
        for (double a : {0.0, 0.5}) {
            const double q = simpson([&](double u) { return u * std::exp(truncexp_logpdf(u, zeta, a, 3.0)); }, a, 3.0);
            CHECK(truncexp_mean(zeta, a, 3.0) == doctest::Approx(q).epsilon(1e-10));
        }
    }
    // zeta = 1 on [0, 3]
    CHECK(truncexp_mean(1.0, 0.0, 3.0) == doctest::Approx(0.84281).epsilon(1e-5));
}

TEST_CASE("truncated exponential quantile inverts the cdf") {
    const double zeta = 1.3;
    for (double p : {0.0, 0.1, 0.5, 0.9, 0.999}) {
        const double t = truncexp_quantile(p, zeta, 0.0, 3.0);
        const double cdf = simpson([&](double u) { return std::exp(truncexp_logpdf(u, zeta, 0.0, 3.0)); }, 0.0, t, 2000);
        CHECK(cdf == doctest::Approx(p).epsilon(1e-9));
    }
}

TEST_CASE("score_to_action examples") {
    ActionSpaceSpec s;
    PolicyParams a;
    a.alpha1 = VectorXd::Zero(3);
    CHECK(score_to_action(s, VectorXd::Zero(3), a) == 1);  // midpoint -> a2
    a.alpha0 = 10;
    CHECK(score_to_action(s, VectorXd::Zero(3), a) == 0);
    a.alpha0 = 0;
    a.alpha1 = (VectorXd(3) << 1, -1, -1).finished();
    const VectorXd x = (VectorXd(3) << -2, 2, 2).finished();
    CHECK(a.score(x) == doctest::Approx(1.0 / (1.0 + std::exp(6.0))));
    CHECK(score_to_action(s, x, a) == 2);

    ActionSpaceSpec v;
    v.variant = ActionVariant::value_grid;
    CHECK(score_to_action(v, 0.0) == 0);
    CHECK(score_to_action(v, 0.5) == 4);  // floor(5.5) = 5 -> value 0.5
    CHECK(score_to_action(v, 1.0) == 9);
    CHECK(v.value(4) == doctest::Approx(0.5));

    ActionSpaceSpec c;
    c.variant = ActionVariant::count_grid;
    CHECK(score_to_action(c, 0.0) == 0);
    CHECK(score_to_action(c, 0.5) == 3);  // floor(4.0) = 4 coupons
    CHECK(c.coupons(3, false) == 4);
    CHECK(score_to_action(c, 1.0) == 6);
}

TEST_CASE("action space bookkeeping") {
    ActionSpaceSpec s;
    CHECK(s.num_actions() == 3);
    CHECK(s.coupons(0, true) == 2);
    CHECK(s.coupons(0, false) == 5);
    CHECK(s.num_groups() == 3);
    CHECK(s.family() == ModelFamily::type_model);
    ActionSpaceSpec v;
    v.variant = ActionVariant::value_grid;
    CHECK(v.family() == ModelFamily::value_model);
    CHECK(v.num_actions() == 10);
    ActionSpaceSpec bad;
    bad.t_lo = 0.7;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK_THROWS_AS(parse_action_variant("nope"), InvalidArgument);
}

TEST_CASE("reward features follow the recruiter's allocation") {
    ActionSpaceSpec s;
    const VectorXd x = (VectorXd(2) << 0.5, -1.0).finished();
    const VectorXd z1 = reward_features(s, x, 2);
    CHECK(z1.size() == 7);
    CHECK(z1(0) == 1.0);
    CHECK(z1(1) == 0.5);
    CHECK(z1(3) == 0.0);
    CHECK(z1(5) == 0.5);
    CHECK(z1(6) == -1.0);
    const VectorXd zs = reward_features(s, x, kNoAction);
    CHECK(zs.tail(4).isZero());

    ActionSpaceSpec v;
    v.variant = ActionVariant::value_grid;
    const VectorXd zv = reward_features(v, x, 4);  // value 0.5
    CHECK(zv.size() == 2 * 2 + 2);
    CHECK(zv(0) == 1.0);
    CHECK(zv(1) == doctest::Approx(0.5));
}

TEST_CASE("logistic helpers are stable") {
    CHECK(logistic(0.0) == 0.5);
    CHECK(log1pexp(800.0) == doctest::Approx(800.0));
    CHECK(log1pexp(-800.0) >= 0.0);
    CHECK(std::isfinite(log1pexp(-800.0)));
}

}
