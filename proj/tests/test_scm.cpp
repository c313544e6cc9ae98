#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "helpers.hpp"

using namespace derivfair;

TEST(Diagram, SimulationParentSets) {
    const CausalDiagram d = simulation_diagram();
    EXPECT_EQ(d.outcome_parents(), (std::vector<std::string>{"X", "Z", "W"}));
    const auto sets = parents_along(d);
    EXPECT_EQ(sets.not_allowed, std::vector<int>{0});
    EXPECT_EQ(sets.allowed, (std::vector<int>{1, 2}));
}

TEST(Diagram, IndirectParentsConflict) {
    // W is the last step of both X -> W -> Y (not allowed) and Z -> W -> Y (allowed).
    EXPECT_THROW(parents_along(indirect_diagram()), PathConflictError);
}

TEST(Diagram, RecidivismParentSets) {
    const CausalDiagram d = compas_diagram();
    const auto sets = parents_along(d);
    EXPECT_EQ(sets.not_allowed, (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(sets.allowed, (std::vector<int>{3, 4}));
}

TEST(Diagram, RejectsCyclesAndBadPaths) {
    EXPECT_THROW(CausalDiagram({"A", "B", "Y"}, {{"A", "B"}, {"B", "A"}, {"B", "Y"}}, {}, "Y", {}), ContractError);
    EXPECT_THROW(CausalDiagram({"A", "Y"}, {{"A", "Y"}, {"Y", "A"}}, {}, "Y", {}), ContractError);
    EXPECT_THROW(CausalDiagram({"A", "Y"}, {{"A", "Y"}}, {}, "Y", {{{"Y", "A"}, PathLabel::Allowed}}), ContractError);
    EXPECT_THROW(CausalDiagram({"A", "B", "Y"}, {{"A", "Y"}}, {}, "Y", {{{"A", "B", "Y"}, PathLabel::Allowed}}),
                 ContractError);
    EXPECT_THROW(CausalDiagram({"A", "A", "Y"}, {}, {}, "Y", {}), ContractError);
    EXPECT_THROW(CausalDiagram({"A"}, {}, {}, "Y", {}), ContractError);
}

TEST(Diagram, TopologicalOrder) {
    const auto order = indirect_diagram().topological_order();
    auto pos = [&](const std::string& n) { return std::find(order.begin(), order.end(), n) - order.begin(); };
    EXPECT_LT(pos("X"), pos("W"));
    EXPECT_LT(pos("Z"), pos("W"));
    EXPECT_LT(pos("W"), pos("Y"));
}

TEST(Diagram, JsonRoundTrip) {
    const CausalDiagram d = compas_diagram();
    const auto j = to_json(d);
    const CausalDiagram back = diagram_from_json(j);
    EXPECT_EQ(to_json(back), j);
    const auto path = (std::filesystem::temp_directory_path() / "derivfair_diagram_test.json").string();
    save_diagram(d, path);
    EXPECT_EQ(to_json(load_diagram(path)), j);
    std::remove(path.c_str());
}

TEST(Diagram, JsonSchemaErrors) {
    EXPECT_THROW(diagram_from_json(nlohmann::json::parse(R"({"nodes": ["A"]})")), SchemaError);
    auto j = to_json(simulation_diagram());
    j["paths"][0]["label"] = "maybe";
    EXPECT_THROW(diagram_from_json(j), SchemaError);
}

TEST(Simulate, NoiselessLinearIdentity) {
    const Dataset d = simulate_linear(10, 0.0, 3);
    ASSERT_EQ(d.rows(), 10);
    for (Eigen::Index i = 0; i < 10; ++i)
        EXPECT_NEAR(d.values(i, 3), -d.values(i, 0) + d.values(i, 1) + d.values(i, 2), 1e-12);
}

TEST(Simulate, SeededAndStructured) {
    const Dataset a = simulate_multiplicative(50, 1.0, 8), b = simulate_multiplicative(50, 1.0, 8);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(a.values, simulate_multiplicative(50, 1.0, 9).values);
    // W - X is the independent noise U_W, so large-sample moments follow the DGP
    const Dataset big = simulate_linear(200000, 1.0, 1);
    const Vector x = big.column("X"), z = big.column("Z"), w = big.column("W");
    const double n = static_cast<double>(x.size());
    EXPECT_NEAR(x.dot(z) / n, 1.0, 0.02);
    EXPECT_NEAR(x.squaredNorm() / n, 2.0, 0.03);
    EXPECT_NEAR((w - x).dot(z) / n, 0.0, 0.02);
    const Vector resid = big.outcome_values() - (-x + z + w);
    EXPECT_NEAR(resid.squaredNorm() / n, 1.0, 0.02);
}

TEST(Simulate, IndirectColumns) {
    const Dataset d = simulate_indirect(20, IndirectBetas{}, 4, 0.0);
    EXPECT_EQ(d.columns, (std::vector<std::string>{"X", "Z", "W", "Y"}));
    for (Eigen::Index i = 0; i < 20; ++i) {
        const double x = d.values(i, 0), z = d.values(i, 1), w = d.values(i, 2);
        EXPECT_NEAR(d.values(i, 3), x + w * z, 1e-12);
    }
}

TEST(Simulate, Errors) {
    EXPECT_THROW(simulate_linear(0, 1.0, 0), DomainError);
    EXPECT_THROW(simulate_linear(5, -1.0, 0), DomainError);
    EXPECT_THROW(parse_setting("cubic"), DomainError);
}

TEST(TrueGradient, ClosedForms) {
    EXPECT_EQ(true_gradient(Setting::Linear, 3, 4, 5), Eigen::RowVector3d(-1, 1, 1));
    EXPECT_EQ(true_gradient("multiplicative", 2, 3, 5), Eigen::RowVector3d(15, 10, 6));
    Matrix f(2, 3);
    f << 1, 2, 3, -1, 0.5, 2;
    const Matrix g = true_gradients(Setting::Multiplicative, f);
    EXPECT_DOUBLE_EQ(g(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(g(1, 1), -2.0);
    EXPECT_DOUBLE_EQ(g(1, 2), -0.5);
    IndirectBetas b{1, 1, 2, 3};
    const Matrix gi = indirect_true_gradients(b, f);
    EXPECT_DOUBLE_EQ(gi(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(gi(0, 1), 9.0);  // 3 w
    EXPECT_DOUBLE_EQ(gi(0, 2), 6.0);  // 3 z
}

TEST(Dataset, SelectSubsetAndErrors) {
    const Dataset d = simulate_linear(5, 0.0, 0);
    const Matrix s = d.select({"W", "X"});
    EXPECT_EQ(s.col(0), d.values.col(2));
    EXPECT_EQ(s.col(1), d.values.col(0));
    EXPECT_THROW(d.select({"Q"}), SchemaError);
    const Dataset sub = d.subset({4, 0});
    EXPECT_EQ(sub.values.row(0), d.values.row(4));
    Dataset bad = d;
    bad.values(0, 1) = std::nan("");
    EXPECT_THROW(bad.validate(), SchemaError);
    Dataset bin = d;
    bin.binary_outcome = true;
    EXPECT_THROW(bin.validate(), SchemaError);
}
