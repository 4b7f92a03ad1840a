#pragma once

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <queue>
#include <string>
#include <vector>

#include "rlrds/model.hpp"
#include "rlrds/network.hpp"
#include "rlrds/rng.hpp"

namespace rlrds {

constexpr int kSeed = -1;

struct ParticipantRecord {
    int id = 0;
    int recruiter = kSeed;  // node id of the recruiter
    int parent = -1;        // record index of the recruiter
    double arrival_time = 0.0;
    VectorXd x;
    int reward = 0;
    int action = kNoAction;
    int coupons = 0;
    double cost = 1.0;
    int generation = 0;
    double selection_prob = 1.0;
    int feasible_count = 1;
};

struct Event {
    double time;
    int recruiter;
    int candidate;
    int parent;
};

/// Min-heap order on (time, recruiter, candidate).
struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) return a.time > b.time;
        if (a.recruiter != b.recruiter) return a.recruiter > b.recruiter;
        return a.candidate > b.candidate;
    }
};

struct CostModel {
    double base = 1.0;
    double per_value = 0.0;
    double operator()(const ActionSpaceSpec& spec, int action) const { return base + per_value * spec.value(action); }
    double min_cost() const { return base + std::min(0.0, per_value); }
};

struct StudyConfig {
    NetworkParams theta;
    ActionSpaceSpec spec;
    double budget = 300.0;
    CostModel cost;
};

struct DecisionLogEntry {
    int record = 0;
    int node = 0;
    std::vector<int> feasible;
    int action = kNoAction;
    double prob = 1.0;
};

struct Decision {
    int action = kNoAction;
    double prob = 1.0;
    int coupons = 0;
};

/// What a policy may look at when a participant arrives.
struct DecisionContext {
    const StudyConfig& config;
    const std::vector<ParticipantRecord>& records;
    int current;  // index of the arriving participant in records
    double spent;
    std::vector<int> feasible;
};

class AllocationPolicy {
public:
    virtual ~AllocationPolicy() = default;
    virtual Decision decide(const DecisionContext& ctx, Rng& rng) = 0;
    virtual std::string name() const = 0;
};

struct StudyState {
    std::vector<ParticipantRecord> records;
    std::priority_queue<Event, std::vector<Event>, EventLater> pending;
    std::vector<char> recruited;
    std::vector<DecisionLogEntry> log;
    double spent = 0.0;
    double budget = 0.0;
    bool budget_exhausted = false;
    std::uint64_t reward_seed = 0;
    std::uint64_t time_seed = 0;
};

struct Trajectory {
    std::vector<ParticipantRecord> records;
    std::vector<DecisionLogEntry> log;
    double budget = 0.0;
    double spent = 0.0;
    bool budget_exhausted = false;
    double end_time() const { return records.empty() ? 0.0 : records.back().arrival_time; }
    int size() const { return static_cast<int>(records.size()); }
    /// Sum of rewards of non-seed participants.
    double cumulative_reward() const;
};

struct EpochPartition {
    std::vector<std::vector<int>> epochs;
    int last_complete = -1;  // J_kappa, -1 when no epoch is complete
    int n_J = 0;             // prefix length after which epoch J's coupons have all expired
};

/// n0 distinct seeds drawn uniformly; each gets a pending arrival at time 0.
/// Rewards and arrival offsets are keyed by outcome_seed so studies sharing it
/// see the same per-node outcomes (common random numbers across policies).
StudyState seed_sample(const Population& pop, int n0, Rng& rng, std::uint64_t outcome_seed = 0);

/// Handle the earliest pending event. Returns false when nothing was pending.
bool process_arrival(StudyState& state, const Population& pop, const StudyConfig& cfg, AllocationPolicy& policy,
                     Rng& rng, Rng& policy_rng);

/// Run to termination: first time spent exceeds the budget, or no events remain.
Trajectory run_study(const Population& pop, const StudyConfig& cfg, AllocationPolicy& policy, std::uint64_t seed);

EpochPartition epoch_partition(const Trajectory& traj, double t_max);

std::vector<int> all_actions(const ActionSpaceSpec& spec);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& is);

}  // namespace rlrds
