#include "rlrds/harness.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "rlrds/errors.hpp"

namespace rlrds {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::uint64_t cell_seed(std::uint64_t master, std::size_t density, std::size_t budget, int replicate) {
    return derive_seed(derive_seed(master, density, budget), static_cast<std::uint64_t>(replicate));
}

}  // namespace

void ExperimentConfig::validate() const {
    spec.validate();
    network.validate_for(spec);
    if (densities.empty()) throw InvalidArgument("config: densities must be nonempty");
    for (double r : densities)
        if (!(r >= 0) || !std::isfinite(r)) throw InvalidArgument("config: density rho1 must be >= 0");
    if (budgets.empty()) throw InvalidArgument("config: budgets must be nonempty");
    for (double b : budgets)
        if (!(b > 0)) throw InvalidArgument("config: budgets must be positive");
    if (population < network.seed_count) throw InvalidArgument("config: population smaller than seed count");
    if (replicates < 1) throw InvalidArgument("config: replicates must be >= 1");
    if (warmup_n < 1) throw InvalidArgument("config: warmup_n must be >= 1");
    if (!(pilot_fraction > 0 && pilot_fraction < 1)) throw InvalidArgument("config: pilot_fraction must be in (0,1)");
    if (!(learner.epsilon > 0 && learner.epsilon < 0.5)) throw InvalidArgument("config: epsilon must be in (0, 0.5)");
    if (learner.rollouts < 1 || learner.bootstrap_draws < 1 || learner.refit_every < 1)
        throw InvalidArgument("config: learner counts must be >= 1");
    if (!(alpha >= 0 && alpha < 1)) throw InvalidArgument("config: alpha must be in [0,1)");
    if (B < 1 || bootstrap_B < 2 || k_factor < 1) throw InvalidArgument("config: B >= 1, bootstrap_B >= 2, k_factor >= 1");
    for (const auto& m : methods)
        if (m != "SBI" && m != "ABC" && m != "BS_LLR" && m != "BS_WI") throw InvalidArgument("config: unknown method " + m);
    for (const auto& p : policies) make_policy(p, spec, warmup_n, learner);
}

ExperimentConfig config_from_json(const Json& j) {
    if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
    ExperimentConfig c;
    c.id = get_or<std::string>(j, "id", c.id);
    if (j.contains("action_space")) c.spec = spec_from_json(j.at("action_space"));
    Json net = j.contains("network") ? j.at("network") : Json::object();
    if (!net.contains("setting")) {
        switch (c.spec.variant) {
            case ActionVariant::type_choice: net["setting"] = "type"; break;
            case ActionVariant::value_grid: net["setting"] = "value"; break;
            case ActionVariant::count_grid: net["setting"] = "count"; break;
        }
    }
    c.network = network_params_from_json(net);
    c.densities = get_or(j, "densities", c.densities);
    c.population = get_or(j, "population", c.population);
    c.budgets = get_or(j, "budgets", c.budgets);
    c.replicates = get_or(j, "replicates", c.replicates);
    c.policies = get_or(j, "policies", c.policies);
    c.warmup_n = get_or(j, "warmup_n", c.warmup_n);
    c.pilot_fraction = get_or(j, "pilot_fraction", c.pilot_fraction);
    if (j.contains("learner")) {
        const Json& l = j.at("learner");
        c.learner.rollouts = get_or(l, "rollouts", c.learner.rollouts);
        c.learner.bootstrap_draws = get_or(l, "bootstrap_draws", c.learner.bootstrap_draws);
        c.learner.refit_every = get_or(l, "refit_every", c.learner.refit_every);
        c.learner.horizon = get_or(l, "horizon", c.learner.horizon);
        c.learner.epsilon = get_or(l, "epsilon", c.learner.epsilon);
        c.learner.reward_ridge = get_or(l, "reward_ridge", c.learner.reward_ridge);
        c.learner.ridge = get_or(l, "ridge", c.learner.ridge);
        c.learner.alpha_levels = get_or(l, "alpha_levels", c.learner.alpha_levels);
    }
    if (j.contains("cost")) {
        c.cost.base = get_or(j.at("cost"), "base", c.cost.base);
        c.cost.per_value = get_or(j.at("cost"), "per_value", c.cost.per_value);
    }
    c.alpha = get_or(j, "alpha", c.alpha);
    c.B = get_or(j, "B", c.B);
    c.bootstrap_B = get_or(j, "bootstrap_B", c.bootstrap_B);
    c.k_factor = get_or(j, "k_factor", c.k_factor);
    c.diagonal = get_or(j, "diagonal", c.diagonal);
    if (j.contains("grid")) {
        c.rho1_factors = get_or(j.at("grid"), "rho1_factors", c.rho1_factors);
        c.mu_shifts = get_or(j.at("grid"), "mu_shifts", c.mu_shifts);
    }
    c.methods = get_or(j, "methods", c.methods);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.validate();
    return c;
}

Json to_json(const ExperimentConfig& c) {
    return Json{{"id", c.id},
                {"action_space", to_json(c.spec)},
                {"network", to_json(c.network)},
                {"densities", c.densities},
                {"population", c.population},
                {"budgets", c.budgets},
                {"replicates", c.replicates},
                {"policies", c.policies},
                {"warmup_n", c.warmup_n},
                {"pilot_fraction", c.pilot_fraction},
                {"learner",
                 {{"rollouts", c.learner.rollouts},
                  {"bootstrap_draws", c.learner.bootstrap_draws},
                  {"refit_every", c.learner.refit_every},
                  {"horizon", c.learner.horizon},
                  {"epsilon", c.learner.epsilon},
                  {"reward_ridge", c.learner.reward_ridge},
                  {"ridge", c.learner.ridge},
                  {"alpha_levels", c.learner.alpha_levels}}},
                {"cost", {{"base", c.cost.base}, {"per_value", c.cost.per_value}}},
                {"alpha", c.alpha},
                {"B", c.B},
                {"bootstrap_B", c.bootstrap_B},
                {"k_factor", c.k_factor},
                {"diagonal", c.diagonal},
                {"grid", {{"rho1_factors", c.rho1_factors}, {"mu_shifts", c.mu_shifts}}},
                {"methods", c.methods},
                {"seed", c.seed}};
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open config " + path);
    Json j;
    try {
        is >> j;
    } catch (const Json::parse_error& e) {
        throw InvalidArgument(std::string("config parse error: ") + e.what());
    } catch (const Json::type_error& e) {
        throw InvalidArgument(std::string("config type error: ") + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const Json::exception& e) {
        throw InvalidArgument(std::string("config error: ") + e.what());
    }
}

void ResultTable::append(const ResultTable& other) {
    rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
}

double ResultTable::find(const std::string& method, const std::string& setting, const std::string& metric,
                         int replicate) const {
    for (const auto& r : rows_)
        if (r.method == method && r.setting == setting && r.metric == metric && r.replicate == replicate) return r.value;
    return kNaN;
}

std::vector<double> ResultTable::values(const std::string& method, const std::string& setting,
                                        const std::string& metric) const {
    std::vector<double> out;
    for (const auto& r : rows_)
        if (r.replicate >= 0 && r.method == method && r.setting == setting && r.metric == metric) out.push_back(r.value);
    return out;
}

void ResultTable::write_csv(std::ostream& os) const {
    os << "# schema_version=" << kSchemaVersion << '\n';
    os << "experiment,replicate,method,setting,metric,value\n";
    for (const auto& r : rows_)
        os << r.experiment << ',' << r.replicate << ',' << r.method << ',' << r.setting << ',' << r.metric << ','
           << fmt(r.value) << '\n';
}

void ResultTable::write_json(std::ostream& os) const {
    Json rows = Json::array();
    for (const auto& r : rows_) {
        Json v = std::isfinite(r.value) ? Json(r.value) : Json(fmt(r.value));
        rows.push_back(Json{{"experiment", r.experiment}, {"replicate", r.replicate}, {"method", r.method},
                            {"setting", r.setting}, {"metric", r.metric}, {"value", v}});
    }
    os << Json{{"schema_version", kSchemaVersion}, {"rows", rows}}.dump(1) << '\n';
}

ResultTable ResultTable::read_csv(std::istream& is) {
    ResultTable t;
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        std::vector<std::string> c;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) c.push_back(cell);
        if (c.size() != 6) throw InvalidArgument("result csv: wrong column count");
        t.add(ResultRow{c[0], std::stoi(c[1]), c[2], c[3], c[4], std::stod(c[5])});
    }
    return t;
}

Summary summarize(const std::vector<double>& v) {
    Summary s;
    s.n = static_cast<int>(v.size());
    if (s.n == 0) {
        s.mean = s.se = s.lo90 = s.hi90 = kNaN;
        return s;
    }
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / s.n;
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = s.n > 1 ? std::sqrt(ss / (s.n - 1) / s.n) : 0.0;
    s.lo90 = s.mean - 1.645 * s.se;
    s.hi90 = s.mean + 1.645 * s.se;
    return s;
}

std::string density_label(double rho1, double budget) { return "rho1=" + fmt(rho1) + ";budget=" + fmt(budget); }
std::string density_label(double rho1) { return "rho1=" + fmt(rho1); }

ResultTable run_policy_comparison(const ExperimentConfig& c) {
    c.validate();
    const int nd = static_cast<int>(c.densities.size());
    const int nb = static_cast<int>(c.budgets.size());
    const int np = static_cast<int>(c.policies.size());
    const int M = c.replicates;
    const long cells = static_cast<long>(nd) * nb * np * M;

    struct Out {
        double reward = kNaN;
        int participants = 0;
        int fallbacks = 0;
        bool failed = false;
    };
    std::vector<Out> out(cells);

#pragma omp parallel for schedule(dynamic)
    for (long k = 0; k < cells; ++k) {
        const int r = static_cast<int>(k % M);
        const int pi = static_cast<int>((k / M) % np);
        const int bi = static_cast<int>((k / M / np) % nb);
        const int di = static_cast<int>(k / M / np / nb);
        try {
            NetworkParams theta = c.network;
            theta.rho1 = c.densities[di];
            // population and study streams depend on (density, budget, replicate) only,
            // so every policy faces the same population, seeds and outcome draws
            const std::uint64_t s = cell_seed(c.seed, di, bi, r);
            const Population pop = sample_population(theta, c.population, derive_seed(s, 0), Adjacency::lazy);
            StudyConfig cfg;
            cfg.theta = theta;
            cfg.spec = c.spec;
            cfg.budget = c.budgets[bi];
            cfg.cost = c.cost;
            std::unique_ptr<AllocationPolicy> policy;
            if (c.policies[pi] == "train_and_implement")
                policy = std::make_unique<TrainAndImplementPolicy>(c.pilot_fraction, c.learner);
            else
                policy = make_policy(c.policies[pi], c.spec, c.warmup_n, c.learner);
            const Trajectory t = run_study(pop, cfg, *policy, derive_seed(s, 1));
            out[k].reward = t.cumulative_reward();
            out[k].participants = t.size();
            if (auto* rl = dynamic_cast<RlRdsPolicy*>(policy.get())) out[k].fallbacks = rl->fallbacks();
        } catch (const std::exception&) {
            out[k].failed = true;
        }
    }

    ResultTable table;
    for (int di = 0; di < nd; ++di)
        for (int bi = 0; bi < nb; ++bi)
            for (int pi = 0; pi < np; ++pi) {
                const std::string setting = density_label(c.densities[di], c.budgets[bi]);
                const std::string& pol = c.policies[pi];
                std::vector<double> rewards;
                int failed = 0;
                for (int r = 0; r < M; ++r) {
                    const Out& o = out[((static_cast<long>(di) * nb + bi) * np + pi) * M + r];
                    if (o.failed) {
                        ++failed;
                        table.add({c.id, r, pol, setting, "failed", 1.0});
                        continue;
                    }
                    rewards.push_back(o.reward);
                    table.add({c.id, r, pol, setting, "cumulative_reward", o.reward});
                    table.add({c.id, r, pol, setting, "participants", static_cast<double>(o.participants)});
                    if (pol == "rl_rds") table.add({c.id, r, pol, setting, "fallbacks", static_cast<double>(o.fallbacks)});
                }
                const Summary s = summarize(rewards);
                table.add({c.id, -1, pol, setting, "mean_reward", s.mean});
                table.add({c.id, -1, pol, setting, "se_reward", s.se});
                table.add({c.id, -1, pol, setting, "lo90_reward", s.lo90});
                table.add({c.id, -1, pol, setting, "hi90_reward", s.hi90});
                table.add({c.id, -1, pol, setting, "n_ok", static_cast<double>(s.n)});
                table.add({c.id, -1, pol, setting, "n_failed", static_cast<double>(failed)});
            }
    return table;
}

namespace {

struct MethodOutcome {
    bool covered = false;
    int size = 0;
    std::vector<Interval> mu;
};

MethodOutcome assess(const ConfidenceRegion& r, const ThetaGrid& g) {
    MethodOutcome o;
    o.covered = r.contains(g.truth);
    o.size = static_cast<int>(r.accepted.size());
    const int p = g.thetas[g.truth].dim();
    for (int k = 0; k < p; ++k) o.mu.push_back(project(r, g, [k](const NetworkParams& t) { return t.mu(k); }));
    return o;
}

}  // namespace

ResultTable run_coverage_study(const ExperimentConfig& c) {
    c.validate();
    SimulationDesign d;
    d.spec = c.spec;
    d.population = c.population;
    d.budget = c.budgets.front();
    d.cost = c.cost;
    d.diagonal = c.diagonal;
    d.k_factor = c.k_factor;

    const int M = c.replicates;
    const int nm = static_cast<int>(c.methods.size());
    ResultTable table;

    for (std::size_t di = 0; di < c.densities.size(); ++di) {
        NetworkParams truth = c.network;
        truth.rho1 = c.densities[di];
        const std::string setting = density_label(truth.rho1);
        const std::uint64_t dseed = derive_seed(c.seed, di);

        ThetaGrid grid = make_coverage_grid(truth, c.rho1_factors, c.mu_shifts);
        if (grid.truth < 0) throw InvalidArgument("coverage grid does not contain the truth");
        fill_beta_bar(grid, d, derive_seed(dseed, 0));
        if (!grid.beta_bar[grid.truth]) throw NumericalError("beta-bar of the truth could not be approximated");
        const int excluded = static_cast<int>(
            std::count_if(grid.beta_bar.begin(), grid.beta_bar.end(), [](const auto& b) { return !b.has_value(); }));
        const bool need_sbi = std::find(c.methods.begin(), c.methods.end(), "SBI") != c.methods.end();
        // references of every other theta are shared across replicates; the truth's are redrawn per replicate
        ThetaGrid others = grid;
        others.beta_bar[grid.truth].reset();
        const auto shared = need_sbi ? sbi_references(others, d, c.B, derive_seed(dseed, 1))
                                     : std::vector<std::vector<double>>(grid.size());

        std::vector<std::vector<MethodOutcome>> res(M, std::vector<MethodOutcome>(nm));
        std::vector<char> failed(M, 0);
#pragma omp parallel for schedule(dynamic)
        for (int r = 0; r < M; ++r) {
            try {
                const std::uint64_t rs = derive_seed(derive_seed(dseed, 2), static_cast<std::uint64_t>(r));
                const Trajectory t = simulate_design_study(truth, d, derive_seed(rs, 0));
                const WeightedSample obs = design_sample(t, truth);
                const BranchingParams hat = fit_covariates(obs, d, truth);
                for (int m = 0; m < nm; ++m) {
                    const std::string& name = c.methods[m];
                    ConfidenceRegion reg;
                    if (name == "SBI") {
                        auto refs = shared;
                        refs[grid.truth] = reference_stats(truth, *grid.beta_bar[grid.truth], d, c.B, derive_seed(rs, 1));
                        reg = sbi_region(obs, hat, grid, refs, c.alpha);
                    } else if (name == "ABC") {
                        reg = abc_region(obs, grid, c.bootstrap_B, d, derive_seed(rs, 2));
                    } else if (name == "BS_LLR") {
                        reg = bootstrap_region(obs, hat, grid, c.alpha, c.bootstrap_B, BootstrapVariant::llr, d,
                                               derive_seed(rs, 3));
                    } else {
                        reg = bootstrap_region(obs, hat, grid, c.alpha, c.bootstrap_B, BootstrapVariant::wald, d,
                                               derive_seed(rs, 3));
                    }
                    res[r][m] = assess(reg, grid);
                }
            } catch (const NumericalError&) {
                failed[r] = 1;
            }
        }

        const int p = truth.dim();
        for (int m = 0; m < nm; ++m) {
            const std::string& name = c.methods[m];
            std::vector<double> cov, size;
            std::vector<std::vector<double>> mu_cov(p), mu_len(p);
            for (int r = 0; r < M; ++r) {
                if (failed[r]) {
                    table.add({c.id, r, name, setting, "failed", 1.0});
                    continue;
                }
                const auto& o = res[r][m];
                cov.push_back(o.covered);
                size.push_back(o.size);
                table.add({c.id, r, name, setting, "covered", o.covered ? 1.0 : 0.0});
                table.add({c.id, r, name, setting, "region_size", static_cast<double>(o.size)});
                for (int k = 0; k < p; ++k) {
                    const std::string mk = "mu" + std::to_string(k + 1);
                    const bool hit = o.mu[k].contains(truth.mu(k));
                    mu_cov[k].push_back(hit);
                    mu_len[k].push_back(o.mu[k].length());
                    table.add({c.id, r, name, setting, mk + "_covered", hit ? 1.0 : 0.0});
                    table.add({c.id, r, name, setting, mk + "_length", o.mu[k].length()});
                    table.add({c.id, r, name, setting, mk + "_empty", o.mu[k].empty ? 1.0 : 0.0});
                }
            }
            table.add({c.id, -1, name, setting, "coverage", summarize(cov).mean});
            table.add({c.id, -1, name, setting, "mean_region_size", summarize(size).mean});
            for (int k = 0; k < p; ++k) {
                const std::string mk = "mu" + std::to_string(k + 1);
                table.add({c.id, -1, name, setting, mk + "_coverage", summarize(mu_cov[k]).mean});
                table.add({c.id, -1, name, setting, mk + "_mean_length", summarize(mu_len[k]).mean});
            }
            table.add({c.id, -1, name, setting, "n_ok", static_cast<double>(cov.size())});
            table.add({c.id, -1, name, setting, "n_failed", static_cast<double>(M - static_cast<int>(cov.size()))});
            table.add({c.id, -1, name, setting, "theta_excluded", static_cast<double>(excluded)});
        }
    }
    return table;
}

}  // namespace rlrds
