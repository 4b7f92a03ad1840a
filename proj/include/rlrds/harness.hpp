#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rlrds/inference.hpp"
#include "rlrds/policy.hpp"
#include "rlrds/serialize.hpp"

namespace rlrds {

/// Everything needed to rerun an experiment; see README for the JSON schema.
struct ExperimentConfig {
    std::string id = "experiment";
    ActionSpaceSpec spec;
    NetworkParams network = NetworkParams::type_setting(1.0);  // rho1 replaced per density
    std::vector<double> densities{1.0, 2.0};  // rho1 values
    int population = 5000;
    std::vector<double> budgets{300.0};
    int replicates = 50;
    std::vector<std::string> policies{"fixed:0", "fixed:1", "fixed:2", "random", "train_and_implement", "rl_rds"};
    int warmup_n = 50;
    double pilot_fraction = 0.5;
    LearnerSettings learner;
    CostModel cost;
    // coverage studies
    double alpha = 0.05;
    int B = 100;
    int bootstrap_B = 100;
    int k_factor = 10;
    bool diagonal = true;
    std::vector<double> rho1_factors{0.5, 1.0, 2.0, 4.0};
    std::vector<double> mu_shifts{-1.5, 0.0, 1.5};
    std::vector<std::string> methods{"SBI", "ABC", "BS_LLR", "BS_WI"};
    std::uint64_t seed = 1;

    void validate() const;
};

ExperimentConfig config_from_json(const Json& j);
Json to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

struct ResultRow {
    std::string experiment;
    int replicate = -1;  // -1 for summary rows
    std::string method;
    std::string setting;
    std::string metric;
    double value = 0.0;
};

/// Long-format, append-only result table.
class ResultTable {
public:
    static constexpr int kSchemaVersion = 1;
    void add(ResultRow row) { rows_.push_back(std::move(row)); }
    void append(const ResultTable& other);
    const std::vector<ResultRow>& rows() const { return rows_; }
    /// First summary/replicate row matching every given field; NaN if absent.
    double find(const std::string& method, const std::string& setting, const std::string& metric,
                int replicate = -1) const;
    std::vector<double> values(const std::string& method, const std::string& setting, const std::string& metric) const;
    void write_csv(std::ostream& os) const;
    void write_json(std::ostream& os) const;
    static ResultTable read_csv(std::istream& is);

private:
    std::vector<ResultRow> rows_;
};

struct Summary {
    int n = 0;
    double mean = 0.0;
    double se = 0.0;
    double lo90 = 0.0;
    double hi90 = 0.0;
};

/// Mean, standard error and mean +- 1.645 se.
Summary summarize(const std::vector<double>& v);

std::string density_label(double rho1, double budget);
std::string density_label(double rho1);

/// For each (density, budget, policy): M studies on a shared population and seed per replicate.
ResultTable run_policy_comparison(const ExperimentConfig& c);

/// For each density: simulate studies under the truth and record coverage per method.
ResultTable run_coverage_study(const ExperimentConfig& c);

}  // namespace rlrds
