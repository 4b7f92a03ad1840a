#include "rlrds/serialize.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "rlrds/errors.hpp"

namespace rlrds {

namespace {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

}  // namespace

Json vector_to_json(const VectorXd& v) {
    Json j = Json::array();
    for (int i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

VectorXd vector_from_json(const Json& j) {
    if (!j.is_array()) throw InvalidArgument("expected a numeric array");
    VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

Json matrix_to_json(const MatrixXd& m) {
    Json j = Json::array();
    for (int r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(row);
    }
    return j;
}

MatrixXd matrix_from_json(const Json& j) {
    if (!j.is_array()) throw InvalidArgument("expected a matrix (array of rows)");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[r].size()) != cols) throw InvalidArgument("ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

Json to_json(const ActionSpaceSpec& s) {
    return Json{{"variant", to_string(s.variant)},   {"t_lo", s.t_lo},
                {"t_hi", s.t_hi},                    {"value_levels", s.value_levels},
                {"max_count", s.max_count},          {"warmup_coupons", s.warmup_coupons},
                {"main_coupons", s.main_coupons}};
}

ActionSpaceSpec spec_from_json(const Json& j) {
    ActionSpaceSpec s;
    if (j.is_string()) {
        s.variant = parse_action_variant(j.get<std::string>());
    } else {
        s.variant = parse_action_variant(get_or<std::string>(j, "variant", "type_choice"));
        s.t_lo = get_or(j, "t_lo", s.t_lo);
        s.t_hi = get_or(j, "t_hi", s.t_hi);
        s.value_levels = get_or(j, "value_levels", s.value_levels);
        s.max_count = get_or(j, "max_count", s.max_count);
        s.warmup_coupons = get_or(j, "warmup_coupons", s.warmup_coupons);
        s.main_coupons = get_or(j, "main_coupons", s.main_coupons);
    }
    s.validate();
    return s;
}

Json to_json(const NetworkParams& p) {
    return Json{{"rho0", p.rho0},
                {"rho1", p.rho1},
                {"mu", vector_to_json(p.mu)},
                {"sigma", matrix_to_json(p.sigma)},
                {"beta_y", vector_to_json(p.beta_y)},
                {"zeta", p.zeta},
                {"zeta_value_slope", p.zeta_value_slope},
                {"t_min", p.t_min},
                {"t_max", p.t_max},
                {"neighbor_rule", to_string(p.neighbor_rule)},
                {"seed_count", p.seed_count}};
}

NetworkParams network_params_from_json(const Json& j) {
    const std::string setting = get_or<std::string>(j, "setting", "type");
    const double rho1 = get_or(j, "rho1", 1.0);
    NetworkParams p;
    if (setting == "type") p = NetworkParams::type_setting(rho1);
    else if (setting == "value") p = NetworkParams::value_setting(rho1);
    else if (setting == "count") p = NetworkParams::count_setting(rho1);
    else throw InvalidArgument("unknown setting: " + setting);
    p.rho0 = get_or(j, "rho0", p.rho0);
    if (j.contains("mu")) p.mu = vector_from_json(j.at("mu"));
    if (j.contains("sigma")) p.sigma = matrix_from_json(j.at("sigma"));
    if (j.contains("beta_y")) p.beta_y = vector_from_json(j.at("beta_y"));
    p.zeta = get_or(j, "zeta", p.zeta);
    p.zeta_value_slope = get_or(j, "zeta_value_slope", p.zeta_value_slope);
    p.t_min = get_or(j, "t_min", p.t_min);
    p.t_max = get_or(j, "t_max", p.t_max);
    if (j.contains("neighbor_rule")) p.neighbor_rule = parse_neighbor_rule(j.at("neighbor_rule").get<std::string>());
    p.seed_count = get_or(j, "seed_count", p.seed_count);
    p.validate();
    return p;
}

Json to_json(const BranchingParams& b) {
    Json j{{"model_family", to_string(b.family)},
           {"action_space", to_json(b.spec)},
           {"p", b.p},
           {"t_min", b.t_min},
           {"t_max", b.t_max},
           {"diagonal", b.diagonal},
           {"lambda", b.lambda},
           {"beta_y", vector_to_json(b.beta_y)}};
    if (b.family == ModelFamily::type_model) {
        j["zeta"] = b.zeta;
        Json groups = Json::array();
        for (const auto& g : b.groups)
            groups.push_back(Json{{"phi", vector_to_json(g.phi)}, {"G", matrix_to_json(g.G)},
                                  {"sigma", matrix_to_json(g.sigma())}});
        j["groups"] = groups;
    } else {
        j["zeta0"] = b.zeta0;
        j["zeta1"] = b.zeta1;
        j["phi0"] = vector_to_json(b.phi0);
        j["phi1"] = b.phi1;
        j["omega0"] = vector_to_json(b.omega0);
        j["omega1"] = vector_to_json(b.omega1);
    }
    return j;
}

BranchingParams branching_from_json(const Json& j) {
    const ModelFamily fam = parse_model_family(j.at("model_family").get<std::string>());
    const ActionSpaceSpec spec = spec_from_json(j.at("action_space"));
    if (spec.family() != fam) throw InvalidArgument("model_family does not match the action space");
    BranchingParams b = BranchingParams::initial(spec, j.at("p").get<int>(), j.at("t_min").get<double>(),
                                                 j.at("t_max").get<double>(), get_or(j, "diagonal", false));
    b.lambda = j.at("lambda").get<double>();
    b.beta_y = vector_from_json(j.at("beta_y"));
    if (fam == ModelFamily::type_model) {
        b.zeta = j.at("zeta").get<double>();
        const Json& gs = j.at("groups");
        if (gs.size() != b.groups.size()) throw InvalidArgument("wrong number of covariate groups");
        for (std::size_t g = 0; g < gs.size(); ++g) {
            b.groups[g].phi = vector_from_json(gs[g].at("phi"));
            b.groups[g].G = matrix_from_json(gs[g].at("G"));
            const MatrixXd sigma = matrix_from_json(gs[g].at("sigma"));
            Eigen::LLT<MatrixXd> llt(sigma);
            if (llt.info() != Eigen::Success) throw InvalidArgument("covariance is not positive definite");
            b.groups[g].sigma_chol = llt.matrixL();
        }
    } else {
        b.zeta0 = j.at("zeta0").get<double>();
        b.zeta1 = j.at("zeta1").get<double>();
        b.phi0 = vector_from_json(j.at("phi0"));
        b.phi1 = j.at("phi1").get<double>();
        b.omega0 = vector_from_json(j.at("omega0"));
        b.omega1 = vector_from_json(j.at("omega1"));
    }
    b.validate();
    return b;
}

void write_nodes_csv(std::ostream& os, const Population& pop) {
    os.precision(17);
    os << "node";
    for (int k = 0; k < pop.dim(); ++k) os << ",x" << k + 1;
    os << '\n';
    for (int i = 0; i < pop.size(); ++i) {
        os << i;
        for (int k = 0; k < pop.dim(); ++k) os << ',' << pop.covariates()(i, k);
        os << '\n';
    }
}

void write_edges_csv(std::ostream& os, const Population& pop) {
    os << "i,j\n";
    for (int i = 0; i < pop.size(); ++i)
        for (int j : pop.neighbors(i))
            if (i < j) os << i << ',' << j << '\n';
}

Population read_population_csv(std::istream& nodes, std::istream& edges) {
    std::string line;
    if (!std::getline(nodes, line)) throw InvalidArgument("nodes csv: missing header");
    const int p = static_cast<int>(split_csv(line).size()) - 1;
    std::vector<std::vector<double>> rows;
    while (std::getline(nodes, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (static_cast<int>(cells.size()) != p + 1) throw InvalidArgument("nodes csv: wrong column count");
        std::vector<double> r;
        for (int k = 1; k <= p; ++k) r.push_back(std::stod(cells[k]));
        rows.push_back(r);
    }
    RowMatrixXd x(rows.size(), p);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int k = 0; k < p; ++k) x(static_cast<Eigen::Index>(i), k) = rows[i][k];
    std::vector<std::vector<int>> adj(rows.size());
    if (!std::getline(edges, line)) throw InvalidArgument("edges csv: missing header");
    while (std::getline(edges, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 2) throw InvalidArgument("edges csv: wrong column count");
        const int i = std::stoi(cells[0]), j = std::stoi(cells[1]);
        if (i < 0 || j < 0 || i >= static_cast<int>(adj.size()) || j >= static_cast<int>(adj.size()))
            throw InvalidArgument("edges csv: node out of range");
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return Population(std::move(x), std::move(adj));
}

}  // namespace rlrds
