#include <doctest.h>

#include <set>
#include <sstream>

#include "rlrds/errors.hpp"
#include "rlrds/policy.hpp"
#include "rlrds/rds_sim.hpp"

using namespace rlrds;

namespace {

struct ConstPolicy : AllocationPolicy {
    int action;
    int coupons;
    ConstPolicy(int a, int c) : action(a), coupons(c) {}
    Decision decide(const DecisionContext&, Rng&) override { return {action, 1.0, coupons}; }
    std::string name() const override { return "const"; }
};

StudyConfig type_config(double budget, double rho1 = 1.0) {
    StudyConfig c;
    c.theta = NetworkParams::type_setting(rho1);
    c.budget = budget;
    return c;
}

}  // namespace

TEST_SUITE("rds_sim") {

TEST_CASE("study respects recruitment invariants") {
    const StudyConfig cfg = type_config(300);
    const Population pop = sample_population(cfg.theta, 2000, 1, Adjacency::lazy);
    RandomPolicy pol;
    const Trajectory t = run_study(pop, cfg, pol, 2);
    std::set<int> seen;
    int seeds = 0;
    for (int i = 0; i < t.size(); ++i) {
        const auto& r = t.records[i];
        CHECK(seen.insert(r.id).second);
        if (r.recruiter == kSeed) {
            ++seeds;
            CHECK(r.arrival_time == 0.0);
            CHECK(r.generation == 0);
            continue;
        }
        REQUIRE(r.parent >= 0);
        REQUIRE(r.parent < i);
        const auto& par = t.records[r.parent];
        CHECK(par.id == r.recruiter);
        CHECK(pop.has_edge(par.id, r.id));
        const double gap = r.arrival_time - par.arrival_time;
        CHECK(gap >= cfg.theta.t_min);
        CHECK(gap <= cfg.theta.t_max);
        CHECK(r.generation == par.generation + 1);
        if (i > 0) CHECK(r.arrival_time >= t.records[i - 1].arrival_time);
    }
    CHECK(seeds == cfg.theta.seed_count);
    // children never exceed coupons
    std::vector<int> kids(t.size(), 0);
    for (const auto& r : t.records)
        if (r.parent >= 0) ++kids[r.parent];
    for (int i = 0; i < t.size(); ++i) CHECK(kids[i] <= t.records[i].coupons);
}

TEST_CASE("budget stop rule") {
    StudyConfig cfg = type_config(40);
    cfg.cost.base = 1.5;
    const Population pop = sample_population(cfg.theta, 2000, 5, Adjacency::lazy);
    ConstPolicy pol(0, 5);
    const Trajectory t = run_study(pop, cfg, pol, 6);
    REQUIRE(t.budget_exhausted);
    // 27 participants cost 40.5 > 40; 26 cost 39.
    CHECK(t.size() == 27);
    CHECK(t.spent == doctest::Approx(40.5));
    CHECK(t.records.back().coupons == 5);
    CHECK(t.log.size() == t.records.size());
    CHECK_THROWS_AS(run_study(pop, type_config(0), pol, 1), InvalidArgument);
}

TEST_CASE("study without coupons ends with the seeds") {
    const StudyConfig cfg = type_config(1000);
    const Population pop = sample_population(cfg.theta, 500, 5, Adjacency::lazy);
    ConstPolicy pol(1, 0);
    const Trajectory t = run_study(pop, cfg, pol, 6);
    CHECK(t.size() == cfg.theta.seed_count);
    CHECK_FALSE(t.budget_exhausted);
}

TEST_CASE("rewards follow the logistic model") {
    // pooled Bernoulli mean vs the sum of model probabilities
    StudyConfig cfg = type_config(4000, 2.0);
    const Population pop = sample_population(cfg.theta, 20000, 8, Adjacency::lazy);
    RandomPolicy pol;
    const Trajectory t = run_study(pop, cfg, pol, 9);
    double expect = 0, var = 0, got = 0;
    for (const auto& r : t.records) {
        const int pa = r.parent >= 0 ? t.records[r.parent].action : kNoAction;
        const double p = logistic(reward_features(cfg.spec, r.x, pa).dot(cfg.theta.beta_y));
        expect += p;
        var += p * (1 - p);
        got += r.reward;
    }
    CHECK(std::abs(got - expect) < 4 * std::sqrt(var));
}

TEST_CASE("common random numbers across policies") {
    const StudyConfig cfg = type_config(200);
    const Population pop = sample_population(cfg.theta, 2000, 11, Adjacency::lazy);
    ConstPolicy a(0, 5), b(2, 5);
    const Trajectory ta = run_study(pop, cfg, a, 12), tb = run_study(pop, cfg, b, 12);
    for (int i = 0; i < cfg.theta.seed_count; ++i) CHECK(ta.records[i].id == tb.records[i].id);
    // rewards depend on (node, parent action); seeds have no parent action
    for (int i = 0; i < cfg.theta.seed_count; ++i) CHECK(ta.records[i].reward == tb.records[i].reward);
    const Trajectory again = run_study(pop, cfg, a, 12);
    REQUIRE(again.size() == ta.size());
    for (int i = 0; i < ta.size(); ++i) CHECK(again.records[i].id == ta.records[i].id);
}

TEST_CASE("trajectory csv round trip") {
    const StudyConfig cfg = type_config(120);
    const Population pop = sample_population(cfg.theta, 1000, 3, Adjacency::lazy);
    RandomPolicy pol;
    const Trajectory t = run_study(pop, cfg, pol, 4);
    std::stringstream ss;
    write_trajectory_csv(ss, t);
    const Trajectory back = read_trajectory_csv(ss);
    REQUIRE(back.size() == t.size());
    for (int i = 0; i < t.size(); ++i) {
        const auto &a = t.records[i], &b = back.records[i];
        CHECK(a.id == b.id);
        CHECK(a.parent == b.parent);
        CHECK(a.arrival_time == b.arrival_time);
        CHECK(a.x == b.x);
        CHECK(a.reward == b.reward);
        CHECK(a.action == b.action);
        CHECK(a.coupons == b.coupons);
        CHECK(a.selection_prob == b.selection_prob);
    }
    CHECK(back.cumulative_reward() == t.cumulative_reward());
    std::stringstream bad("id,recruiter\n1,2\n");
    CHECK_THROWS(read_trajectory_csv(bad));
}

TEST_CASE("epoch partition on a hand-built trajectory") {
    Trajectory t;
    auto rec = [&](double time, int gen, int parent) {
        ParticipantRecord r;
        r.id = t.size();
        r.arrival_time = time;
        r.generation = gen;
        r.parent = parent;
        r.recruiter = parent >= 0 ? parent : kSeed;
        r.x = VectorXd::Zero(1);
        t.records.push_back(r);
    };
    rec(0, 0, -1);
    rec(0, 0, -1);
    rec(1, 1, 0);
    rec(2.5, 1, 1);
    rec(3.5, 2, 2);
    rec(4.0, 2, 3);
    rec(6.0, 3, 4);
    // t_max = 3: epoch 0 expires at 3 < 6, epoch 1 at 5.5 < 6, epoch 2 at 7 >= 6.
    const EpochPartition ep = epoch_partition(t, 3.0);
    REQUIRE(ep.epochs.size() == 4);
    CHECK(ep.epochs[1] == std::vector<int>{2, 3});
    CHECK(ep.last_complete == 1);
    // first arrival after 5.5 is record 6
    CHECK(ep.n_J == 7);
    const EpochPartition none = epoch_partition(t, 10.0);
    CHECK(none.last_complete == -1);
}

}
