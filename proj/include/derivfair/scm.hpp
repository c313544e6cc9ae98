#pragma once

// Causal diagrams with allowed / not-allowed path labels, the path-gradient
// index selector, and simulators for the synthetic data-generating processes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "derivfair/dataset.hpp"
#include "derivfair/errors.hpp"
#include "derivfair/rng.hpp"

namespace derivfair {

enum class PathLabel { Allowed, NotAllowed };

struct Path {
    std::vector<std::string> nodes;
    PathLabel label = PathLabel::Allowed;

    bool operator==(const Path&) const = default;
};

struct PathSets {
    std::vector<Path> not_allowed;
    std::vector<Path> allowed;
};

/// Indices into the outcome-parent feature list (see CausalDiagram::outcome_parents).
struct FeatureIndexSets {
    std::vector<int> not_allowed;
    std::vector<int> allowed;
};

class CausalDiagram {
public:
    struct Edge {
        std::string from;
        std::string to;
        bool operator==(const Edge&) const = default;
    };

    CausalDiagram() = default;
    CausalDiagram(std::vector<std::string> nodes, std::vector<Edge> edges,
                  std::vector<std::pair<std::string, std::string>> bidirected, std::string outcome,
                  std::vector<Path> paths = {})
        : nodes_(std::move(nodes)),
          edges_(std::move(edges)),
          bidirected_(std::move(bidirected)),
          outcome_(std::move(outcome)),
          paths_(std::move(paths)) {
        validate();
    }

    const std::vector<std::string>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    // Stored for documentation only; nothing downstream reads them.
    const std::vector<std::pair<std::string, std::string>>& bidirected() const { return bidirected_; }
    const std::string& outcome() const { return outcome_; }
    const std::vector<Path>& paths() const { return paths_; }

    bool has_node(const std::string& n) const { return std::find(nodes_.begin(), nodes_.end(), n) != nodes_.end(); }

    bool has_edge(const std::string& from, const std::string& to) const {
        return std::find(edges_.begin(), edges_.end(), Edge{from, to}) != edges_.end();
    }

    /// Parents of `node` in node-declaration order.
    std::vector<std::string> parents(const std::string& node) const {
        std::vector<std::string> out;
        for (const auto& n : nodes_)
            if (has_edge(n, node)) out.push_back(n);
        return out;
    }

    /// The predictor's input columns: the outcome's parents, in node order.
    std::vector<std::string> outcome_parents() const { return parents(outcome_); }

    /// Consecutive nodes must be joined by directed edges and the path must end
    /// at the outcome.
    void validate_path(const Path& p) const {
        if (p.nodes.size() < 2) throw ContractError("path needs at least two nodes");
        for (const auto& n : p.nodes)
            if (!has_node(n)) throw ContractError("path uses unknown node '" + n + "'");
        for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i)
            if (!has_edge(p.nodes[i], p.nodes[i + 1]))
                throw ContractError("path step " + p.nodes[i] + " -> " + p.nodes[i + 1] + " is not an edge");
        if (p.nodes.back() != outcome_) throw ContractError("path does not end at the outcome '" + outcome_ + "'");
    }

    PathSets path_sets() const {
        PathSets s;
        for (const auto& p : paths_) (p.label == PathLabel::NotAllowed ? s.not_allowed : s.allowed).push_back(p);
        return s;
    }

    /// Same nodes with a different outcome and paths; edges leaving the new
    /// outcome are dropped. Used to pose a sub-problem for a mediator.
    CausalDiagram with_outcome(std::string outcome, std::vector<Path> paths) const {
        std::vector<Edge> kept;
        for (const auto& e : edges_)
            if (e.from != outcome) kept.push_back(e);
        return CausalDiagram(nodes_, std::move(kept), bidirected_, std::move(outcome), std::move(paths));
    }

    void validate() const {
        std::set<std::string> seen;
        for (const auto& n : nodes_)
            if (!seen.insert(n).second) throw ContractError("duplicate node '" + n + "'");
        if (!has_node(outcome_)) throw ContractError("outcome '" + outcome_ + "' is not a node");
        for (const auto& e : edges_) {
            if (!has_node(e.from) || !has_node(e.to)) throw ContractError("edge refers to an unknown node");
            if (e.from == e.to) throw ContractError("self-loop on '" + e.from + "'");
            if (e.from == outcome_) throw ContractError("outcome '" + outcome_ + "' has an outgoing edge");
        }
        for (const auto& [a, b] : bidirected_)
            if (!has_node(a) || !has_node(b)) throw ContractError("bidirected edge refers to an unknown node");
        topological_order();
        for (const auto& p : paths_) validate_path(p);
    }

    /// Kahn's algorithm; throws on a directed cycle.
    std::vector<std::string> topological_order() const {
        std::map<std::string, int> indegree;
        for (const auto& n : nodes_) indegree[n] = 0;
        for (const auto& e : edges_) ++indegree[e.to];
        std::vector<std::string> order, ready;
        for (const auto& n : nodes_)
            if (indegree[n] == 0) ready.push_back(n);
        while (!ready.empty()) {
            const std::string n = ready.front();
            ready.erase(ready.begin());
            order.push_back(n);
            for (const auto& m : nodes_)
                if (has_edge(n, m) && --indegree[m] == 0) ready.push_back(m);
        }
        if (order.size() != nodes_.size()) throw ContractError("directed part of the diagram has a cycle");
        return order;
    }

private:
    std::vector<std::string> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::pair<std::string, std::string>> bidirected_;
    std::string outcome_;
    std::vector<Path> paths_;
};

/// For every path, the outcome's parent on it (second-to-last node), mapped to
/// its position among the outcome parents. Sorted, duplicates collapsed.
inline FeatureIndexSets parents_along(const CausalDiagram& diagram, const PathSets& paths) {
    const auto parents = diagram.outcome_parents();
    auto index_of = [&](const Path& p) {
        diagram.validate_path(p);
        const std::string& parent = p.nodes[p.nodes.size() - 2];
        return static_cast<int>(std::find(parents.begin(), parents.end(), parent) - parents.begin());
    };
    std::set<int> na, al;
    for (const auto& p : paths.not_allowed) na.insert(index_of(p));
    for (const auto& p : paths.allowed) al.insert(index_of(p));
    for (int i : na)
        if (al.count(i))
            throw PathConflictError("outcome parent '" + parents[static_cast<std::size_t>(i)] +
                                    "' lies on both an allowed and a not-allowed path");
    return {{na.begin(), na.end()}, {al.begin(), al.end()}};
}

inline FeatureIndexSets parents_along(const CausalDiagram& diagram) { return parents_along(diagram, diagram.path_sets()); }

// ---------------------------------------------------------------------------
// JSON: {nodes, edges:[{from,to}], bidirected:[[a,b]], outcome,
//        paths:[{nodes:[...], label:"allowed"|"not-allowed"}]}

inline nlohmann::json to_json(const CausalDiagram& d) {
    nlohmann::json j;
    j["nodes"] = d.nodes();
    j["edges"] = nlohmann::json::array();
    for (const auto& e : d.edges()) j["edges"].push_back({{"from", e.from}, {"to", e.to}});
    j["bidirected"] = nlohmann::json::array();
    for (const auto& [a, b] : d.bidirected()) j["bidirected"].push_back({a, b});
    j["outcome"] = d.outcome();
    j["paths"] = nlohmann::json::array();
    for (const auto& p : d.paths())
        j["paths"].push_back({{"nodes", p.nodes}, {"label", p.label == PathLabel::Allowed ? "allowed" : "not-allowed"}});
    return j;
}

inline CausalDiagram diagram_from_json(const nlohmann::json& j) {
    try {
        std::vector<CausalDiagram::Edge> edges;
        for (const auto& e : j.at("edges")) edges.push_back({e.at("from").get<std::string>(), e.at("to").get<std::string>()});
        std::vector<std::pair<std::string, std::string>> bi;
        if (j.contains("bidirected"))
            for (const auto& b : j.at("bidirected")) bi.emplace_back(b.at(0).get<std::string>(), b.at(1).get<std::string>());
        std::vector<Path> paths;
        if (j.contains("paths"))
            for (const auto& p : j.at("paths")) {
                const auto label = p.at("label").get<std::string>();
                if (label != "allowed" && label != "not-allowed") throw SchemaError("path label must be 'allowed' or 'not-allowed'");
                paths.push_back({p.at("nodes").get<std::vector<std::string>>(),
                                 label == "allowed" ? PathLabel::Allowed : PathLabel::NotAllowed});
            }
        return CausalDiagram(j.at("nodes").get<std::vector<std::string>>(), std::move(edges), std::move(bi),
                             j.at("outcome").get<std::string>(), std::move(paths));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("diagram JSON: ") + e.what());
    }
}

inline void save_diagram(const CausalDiagram& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << to_json(d).dump(2) << '\n';
}

inline CausalDiagram load_diagram(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("'" + path + "': " + e.what());
    }
    return diagram_from_json(j);
}

// ---------------------------------------------------------------------------
// Reference diagrams

/// X <-> Z, X -> W, X -> Y, Z -> Y, W -> Y with only X -> Y not allowed.
inline CausalDiagram simulation_diagram() {
    return CausalDiagram({"X", "Z", "W", "Y"}, {{"X", "W"}, {"X", "Y"}, {"Z", "Y"}, {"W", "Y"}}, {{"X", "Z"}}, "Y",
                         {{{"X", "Y"}, PathLabel::NotAllowed},
                          {{"X", "W", "Y"}, PathLabel::Allowed},
                          {{"Z", "Y"}, PathLabel::Allowed},
                          {{"W", "Y"}, PathLabel::Allowed}});
}

/// Indirect-path setting: X -> W -> Y and X -> Y are not allowed, every path
/// from Z is allowed.
inline CausalDiagram indirect_diagram() {
    return CausalDiagram({"X", "Z", "W", "Y"}, {{"X", "W"}, {"Z", "W"}, {"X", "Y"}, {"Z", "Y"}, {"W", "Y"}},
                         {{"X", "Z"}}, "Y",
                         {{{"X", "Y"}, PathLabel::NotAllowed},
                          {{"X", "W", "Y"}, PathLabel::NotAllowed},
                          {{"Z", "Y"}, PathLabel::Allowed},
                          {{"Z", "W", "Y"}, PathLabel::Allowed}});
}

/// Recidivism diagram: direct paths from race, sex and age are not allowed;
/// paths through priors and charge degree are.
inline CausalDiagram compas_diagram(const std::string& race = "Race", const std::string& sex = "Sex",
                                    const std::string& age = "Age", const std::string& priors = "Priors",
                                    const std::string& degree = "Degree", const std::string& outcome = "Recidivism") {
    std::vector<CausalDiagram::Edge> edges;
    for (const auto& p : {race, sex, age}) {
        edges.push_back({p, priors});
        edges.push_back({p, degree});
        edges.push_back({p, outcome});
    }
    edges.push_back({priors, degree});
    edges.push_back({priors, outcome});
    edges.push_back({degree, outcome});
    std::vector<Path> paths;
    for (const auto& p : {race, sex, age}) {
        paths.push_back({{p, outcome}, PathLabel::NotAllowed});
        paths.push_back({{p, priors, outcome}, PathLabel::Allowed});
        paths.push_back({{p, degree, outcome}, PathLabel::Allowed});
    }
    paths.push_back({{priors, outcome}, PathLabel::Allowed});
    paths.push_back({{degree, outcome}, PathLabel::Allowed});
    return CausalDiagram({race, sex, age, priors, degree, outcome}, std::move(edges),
                         {{race, sex}, {race, age}, {sex, age}}, outcome, std::move(paths));
}

// ---------------------------------------------------------------------------
// Simulators. Background noise is drawn row by row in the order
// U_XZ, U_X, U_Z, U_W, U_Y.

enum class Setting { Linear, Multiplicative };

inline Setting parse_setting(const std::string& s) {
    if (s == "linear") return Setting::Linear;
    if (s == "multiplicative") return Setting::Multiplicative;
    throw DomainError("unknown setting '" + s + "'");
}

inline const char* setting_name(Setting s) { return s == Setting::Linear ? "linear" : "multiplicative"; }

inline Dataset simulate(Setting setting, Eigen::Index n, double sigma2, std::uint64_t seed) {
    if (n < 1) throw DomainError("simulate: n must be >= 1");
    if (!(sigma2 >= 0.0)) throw DomainError("simulate: sigma2 must be >= 0");
    const double sd_y = std::sqrt(sigma2);
    Rng rng(seed);
    Dataset d{{"X", "Z", "W", "Y"}, Matrix(n, 4), "Y", false};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u_xz = rng.normal(), u_x = rng.normal(), u_z = rng.normal(), u_w = rng.normal();
        const double u_y = sd_y * rng.normal();
        const double x = u_xz + u_x, z = u_xz + u_z, w = x + u_w;
        const double y = setting == Setting::Linear ? -x + z + w + u_y : x * z * w + u_y;
        d.values.row(i) << x, z, w, y;
    }
    return d;
}

inline Dataset simulate_linear(Eigen::Index n, double sigma2, std::uint64_t seed) {
    return simulate(Setting::Linear, n, sigma2, seed);
}

inline Dataset simulate_multiplicative(Eigen::Index n, double sigma2, std::uint64_t seed) {
    return simulate(Setting::Multiplicative, n, sigma2, seed);
}

struct IndirectBetas {
    double x_w = 1.0;   // X -> W
    double z_w = 1.0;   // Z -> W
    double x_y = 1.0;   // X -> Y
    double wz_y = 1.0;  // W*Z -> Y
};

/// W = b_xw X + b_zw Z + U_W, Y = b_xy X + b_wzy W Z + noise_sd_y U_Y.
inline Dataset simulate_indirect(Eigen::Index n, const IndirectBetas& b, std::uint64_t seed, double noise_sd_y = 1.0) {
    if (n < 1) throw DomainError("simulate_indirect: n must be >= 1");
    if (!(noise_sd_y >= 0.0)) throw DomainError("simulate_indirect: noise sd must be >= 0");
    Rng rng(seed);
    Dataset d{{"X", "Z", "W", "Y"}, Matrix(n, 4), "Y", false};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u_xz = rng.normal(), u_x = rng.normal(), u_z = rng.normal(), u_w = rng.normal();
        const double u_y = noise_sd_y * rng.normal();
        const double x = u_xz + u_x, z = u_xz + u_z;
        const double w = b.x_w * x + b.z_w * z + u_w;
        const double y = b.x_y * x + b.wz_y * w * z + u_y;
        d.values.row(i) << x, z, w, y;
    }
    return d;
}

/// Gradient of E[Y | X, Z, W] in feature order (X, Z, W) at one row.
inline Eigen::RowVector3d true_gradient(Setting setting, double x, double z, double w) {
    if (setting == Setting::Linear) return {-1.0, 1.0, 1.0};
    return {z * w, x * w, x * z};
}

inline Eigen::RowVector3d true_gradient(const std::string& setting, double x, double z, double w) {
    return true_gradient(parse_setting(setting), x, z, w);
}

/// Row-wise true gradients for a (X, Z, W) feature matrix.
inline Matrix true_gradients(Setting setting, const Matrix& features) {
    if (features.cols() != 3) throw DimensionError("true_gradients: expected features (X, Z, W)");
    Matrix g(features.rows(), 3);
    for (Eigen::Index i = 0; i < features.rows(); ++i)
        g.row(i) = true_gradient(setting, features(i, 0), features(i, 1), features(i, 2));
    return g;
}

/// Gradient of E[Y | X, Z, W] for the indirect process, order (X, Z, W).
inline Matrix indirect_true_gradients(const IndirectBetas& b, const Matrix& features) {
    if (features.cols() != 3) throw DimensionError("indirect_true_gradients: expected features (X, Z, W)");
    Matrix g(features.rows(), 3);
    for (Eigen::Index i = 0; i < features.rows(); ++i)
        g.row(i) << b.x_y, b.wz_y * features(i, 2), b.wz_y * features(i, 1);
    return g;
}

}  // namespace derivfair
