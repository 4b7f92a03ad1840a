// rlrds: command-line front end. Exit codes: 0 ok, 2 usage/config error, 3 numerical failure.
#include <omp.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "rlrds/errors.hpp"
#include "rlrds/harness.hpp"

using namespace rlrds;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::string out = ".";
    int threads = 0;
    std::string format = "csv";
};

Json read_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open " + path);
    try {
        return Json::parse(is);
    } catch (const Json::exception& e) {
        throw InvalidArgument(path + ": " + e.what());
    }
}

ExperimentConfig experiment(const Common& c, const Json& j) {
    ExperimentConfig cfg;
    try {
        cfg = config_from_json(j);
    } catch (const Json::exception& e) {
        throw InvalidArgument(std::string("config error: ") + e.what());
    }
    if (c.has_seed) cfg.seed = c.seed;
    return cfg;
}

std::ofstream open_out(const Common& c, const std::string& name) {
    fs::create_directories(c.out);
    const fs::path p = fs::path(c.out) / name;
    std::ofstream os(p);
    if (!os) throw InvalidArgument("cannot write " + p.string());
    return os;
}

void write_table(const Common& c, const ResultTable& t) {
    if (c.format == "json") {
        auto os = open_out(c, "results.json");
        t.write_json(os);
    } else {
        auto os = open_out(c, "results.csv");
        t.write_csv(os);
    }
}

NetworkParams density_network(const ExperimentConfig& cfg) {
    NetworkParams th = cfg.network;
    th.rho1 = cfg.densities.front();
    return th;
}

void cmd_gen_network(const Common& c) {
    const Json j = read_json(c.config);
    const ExperimentConfig cfg = experiment(c, j);
    const Population pop = sample_population(density_network(cfg), cfg.population, cfg.seed);
    if (c.format == "json") {
        Json nodes = Json::array(), edges = Json::array();
        for (int i = 0; i < pop.size(); ++i) nodes.push_back(vector_to_json(pop.x(i)));
        for (int i = 0; i < pop.size(); ++i)
            for (int k : pop.neighbors(i))
                if (i < k) edges.push_back(Json::array({i, k}));
        auto os = open_out(c, "network.json");
        os << Json{{"covariates", nodes}, {"edges", edges}}.dump(1) << '\n';
    } else {
        auto n = open_out(c, "nodes.csv");
        write_nodes_csv(n, pop);
        auto e = open_out(c, "edges.csv");
        write_edges_csv(e, pop);
    }
}

void cmd_run_study(const Common& c) {
    const Json j = read_json(c.config);
    const ExperimentConfig cfg = experiment(c, j);
    const std::string name = j.value("policy", cfg.policies.front());
    const NetworkParams th = density_network(cfg);
    const Population pop = sample_population(th, cfg.population, derive_seed(cfg.seed, 0), Adjacency::lazy);
    StudyConfig sc;
    sc.theta = th;
    sc.spec = cfg.spec;
    sc.budget = cfg.budgets.front();
    sc.cost = cfg.cost;
    std::unique_ptr<AllocationPolicy> policy =
        name == "train_and_implement" ? std::make_unique<TrainAndImplementPolicy>(cfg.pilot_fraction, cfg.learner)
                                      : make_policy(name, cfg.spec, cfg.warmup_n, cfg.learner);
    const Trajectory t = run_study(pop, sc, *policy, derive_seed(cfg.seed, 1));
    if (c.format == "json") {
        std::ostringstream csv;
        write_trajectory_csv(csv, t);
        auto os = open_out(c, "trajectory.json");
        os << Json{{"policy", name},
                   {"budget", t.budget},
                   {"spent", t.spent},
                   {"cumulative_reward", t.cumulative_reward()},
                   {"trajectory_csv", csv.str()}}
                  .dump(1)
           << '\n';
    } else {
        auto os = open_out(c, "trajectory.csv");
        write_trajectory_csv(os, t);
    }
}

void cmd_fit(const Common& c, const std::string& trajectory_path) {
    const Json j = read_json(c.config);
    const ExperimentConfig cfg = experiment(c, j);
    std::ifstream is(trajectory_path);
    if (!is) throw InvalidArgument("cannot open trajectory " + trajectory_path);
    const Trajectory t = read_trajectory_csv(is);
    const std::string view = j.value("view", std::string("online"));
    if (view != "online" && view != "complete_epochs") throw InvalidArgument("view must be online or complete_epochs");
    const NetworkParams& th = cfg.network;
    const WeightedSample s = build_sample(t, th.t_min, th.t_max,
                                          view == "online" ? SampleView::online : SampleView::complete_epochs,
                                          j.value("stabilizing", false));
    FitOptions fo;
    fo.ridge = j.value("ridge", 0.0);
    fo.reward_ridge = j.value("reward_ridge", 0.0);
    fo.diagonal = j.value("diagonal", false);
    const FitResult r = fit_wmle(s, cfg.spec, th.dim(), th.t_min, th.t_max, fo);
    Json out = to_json(r.params);
    out["flags"] = r.report.flags;
    out["converged"] = r.report.converged;
    if (c.format == "json") {
        auto os = open_out(c, "beta_hat.json");
        os << std::setprecision(17) << out.dump(1) << '\n';
    } else {
        auto os = open_out(c, "beta_hat.csv");
        os << std::setprecision(17) << "index,value\n";
        const VectorXd f = to_flat(r.params);
        for (int i = 0; i < f.size(); ++i) os << i << ',' << f(i) << '\n';
    }
}

void cmd_infer(const Common& c) {
    const Json j = read_json(c.config);
    const ExperimentConfig cfg = experiment(c, j);
    const NetworkParams truth = density_network(cfg);
    SimulationDesign d;
    d.spec = cfg.spec;
    d.population = cfg.population;
    d.budget = cfg.budgets.front();
    d.cost = cfg.cost;
    d.diagonal = cfg.diagonal;
    d.k_factor = cfg.k_factor;
    ThetaGrid grid = make_coverage_grid(truth, cfg.rho1_factors, cfg.mu_shifts);
    fill_beta_bar(grid, d, derive_seed(cfg.seed, 0));
    const Trajectory t = simulate_design_study(truth, d, derive_seed(cfg.seed, 1));
    const WeightedSample obs = design_sample(t, truth);
    const BranchingParams hat = fit_covariates(obs, d, truth);

    fs::create_directories(c.out);
    Json report = Json::object();
    std::ostringstream proj;
    proj << std::setprecision(17) << "method,functional,lo,hi,empty\n";
    for (const auto& m : cfg.methods) {
        ConfidenceRegion reg;
        if (m == "SBI") reg = sbi_region(obs, hat, grid, sbi_references(grid, d, cfg.B, derive_seed(cfg.seed, 2)), cfg.alpha);
        else if (m == "ABC") reg = abc_region(obs, grid, cfg.bootstrap_B, d, derive_seed(cfg.seed, 3));
        else if (m == "BS_LLR")
            reg = bootstrap_region(obs, hat, grid, cfg.alpha, cfg.bootstrap_B, BootstrapVariant::llr, d, derive_seed(cfg.seed, 4));
        else
            reg = bootstrap_region(obs, hat, grid, cfg.alpha, cfg.bootstrap_B, BootstrapVariant::wald, d, derive_seed(cfg.seed, 4));
        if (c.format == "csv") write_region_csv((fs::path(c.out) / ("region_" + m + ".csv")).string(), reg, grid);
        Json jm{{"accepted", reg.accepted}, {"warnings", reg.warnings}, {"contains_truth", reg.contains(grid.truth)}};
        for (int k = 0; k < truth.dim(); ++k) {
            const Interval iv = project(reg, grid, [k](const NetworkParams& p) { return p.mu(k); });
            proj << m << ",mu" << k + 1 << ',' << iv.lo << ',' << iv.hi << ',' << (iv.empty ? 1 : 0) << '\n';
            jm["mu" + std::to_string(k + 1)] = iv.empty ? Json() : Json::array({iv.lo, iv.hi});
        }
        report[m] = jm;
    }
    if (c.format == "json") {
        auto os = open_out(c, "inference.json");
        os << report.dump(1) << '\n';
    } else {
        auto os = open_out(c, "projections.csv");
        os << proj.str();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RL-driven respondent-driven sampling: simulation, estimation, inference"};
    app.require_subcommand(1);
    Common common;
    std::string trajectory;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* o = sub->add_option("--config", common.config, "experiment config (JSON)")->check(CLI::ExistingFile);
        if (need_config) o->required();
        sub->add_option("--seed", common.seed, "master seed (overrides config)");
        sub->add_option("--out", common.out, "output directory");
        sub->add_option("--threads", common.threads, "OpenMP threads (0 = default)")->check(CLI::NonNegativeNumber);
        sub->add_option("--format", common.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    };
    auto* gen = app.add_subcommand("gen-network", "sample a latent-distance population");
    auto* run = app.add_subcommand("run-study", "simulate one study under a policy");
    auto* fit = app.add_subcommand("fit", "fit the working model to a trajectory");
    auto* inf = app.add_subcommand("infer", "confidence regions for the network parameters");
    auto* cmp = app.add_subcommand("compare-policies", "Monte-Carlo policy comparison");
    auto* cov = app.add_subcommand("coverage", "coverage study of the inference methods");
    for (auto* s : {gen, run, fit, inf, cmp, cov}) add_common(s, true);
    fit->add_option("--trajectory", trajectory, "trajectory CSV")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    for (auto* s : {gen, run, fit, inf, cmp, cov})
        if (s->parsed() && s->count("--seed")) common.has_seed = true;
    if (common.threads > 0) omp_set_num_threads(common.threads);

    try {
        if (gen->parsed()) cmd_gen_network(common);
        else if (run->parsed()) cmd_run_study(common);
        else if (fit->parsed()) cmd_fit(common, trajectory);
        else if (inf->parsed()) cmd_infer(common);
        else if (cmp->parsed()) write_table(common, run_policy_comparison(experiment(common, read_json(common.config))));
        else if (cov->parsed()) write_table(common, run_coverage_study(experiment(common, read_json(common.config))));
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n' << app.help();
        return 2;
    } catch (const Json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
