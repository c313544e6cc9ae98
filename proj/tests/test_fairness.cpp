#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace derivfair;

namespace {

MLPModel random_model(int in, std::uint64_t seed, std::vector<int> hidden = {8, 8}) {
    MLPConfig cfg;
    cfg.input_width = in;
    cfg.hidden_widths = std::move(hidden);
    cfg.init_seed = seed;
    MLPModel m = init_model(cfg);
    Rng rng(seed + 500);
    Vector p = m.parameters();
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.2 * rng.normal();
    m.set_parameters(p);
    return m;
}

MLPModel linear(std::initializer_list<double> w, double b = 0.0) {
    RowVector r(static_cast<Eigen::Index>(w.size()));
    Eigen::Index k = 0;
    for (double v : w) r[k++] = v;
    return linear_model(r, b);
}

// f(x, z, w) = x * z * w, the multiplicative process's regression function.
FunctionPredictor product_xzw() {
    return {[](const Matrix& b) { return Vector(b.col(0).cwiseProduct(b.col(1)).cwiseProduct(b.col(2))); },
            [](const Matrix& b) { return true_gradients(Setting::Multiplicative, b); }};
}

struct SilenceWarnings {
    std::vector<std::string> seen;
    std::function<void(const std::string&)> saved = warning_sink();
    SilenceWarnings() {
        warning_sink() = [this](const std::string& m) { seen.push_back(m); };
    }
    ~SilenceWarnings() { warning_sink() = saved; }
};

}  // namespace

TEST(Losses, SpdOnLinearModel) {
    Matrix x(2, 3);
    x << 1, 2, 3, 4, 5, 6;
    const MLPModel m = linear({-2.0, 0.5, 3.0});
    EXPECT_DOUBLE_EQ(spd_loss(m, x, {0}), 2.0);
    EXPECT_DOUBLE_EQ(spd_loss(m, x, {0, 1}), 2.5);
    EXPECT_EQ(spd_per_feature(m, x, {2, 0}), (std::vector<double>{3.0, 2.0}));
    EXPECT_THROW(spd_loss(m, x, {3}), DimensionError);
}

TEST(Losses, SpdEmptySetWarnsAndIsZero) {
    SilenceWarnings w;
    EXPECT_EQ(spd_loss(linear({1.0}), Matrix::Ones(2, 1), {}), 0.0);
    EXPECT_EQ(w.seen.size(), 1u);
}

TEST(Losses, PpdAgainstTrueGradient) {
    Matrix x(2, 3);
    x << 1, 2, 3, -1, 1, 2;
    const MLPModel m = linear({0.0, 1.0, 1.0});
    const auto target = PPDTarget::true_gradient([](const Matrix& b) { return true_gradients(Setting::Multiplicative, b); });
    // rows: grad (6,3,2) and (2,-2,-1); column 1: |1-3| + |1+2| = 5, column 2: |1-2| + |1+1| = 3
    EXPECT_DOUBLE_EQ(ppd_loss(m, target, x, {1}), 2.5);
    EXPECT_DOUBLE_EQ(ppd_loss(m, target, x, {1, 2}), 4.0);
    EXPECT_EQ(ppd_per_feature(m, target, x, {1, 2}), (std::vector<double>{2.5, 1.5}));
    EXPECT_EQ(ppd_loss(m, target, x, {}), 0.0);
    EXPECT_FALSE(target.is_reference());
}

TEST(Losses, PpdAgainstReferenceIsZeroForItself) {
    const MLPModel m = random_model(3, 1);
    Rng rng(3);
    const Matrix x = testutil::random_matrix(rng, 30, 3);
    EXPECT_EQ(ppd_loss(m, PPDTarget::reference(m), x, {0, 1, 2}), 0.0);
    EXPECT_TRUE(PPDTarget::reference(m).is_reference());
}

TEST(TuningLoss, DecomposesIntoItsTerms) {
    const MLPModel ref = random_model(3, 2), model = random_model(3, 3);
    Rng rng(4);
    const Matrix x = testutil::random_matrix(rng, 40, 3);
    TuningConfig cfg{0.7, 1.3, {0}, {1, 2}};
    const double mse = (model.predict(x) - ref.predict(x)).squaredNorm() / 40.0;
    const double expected = mse + 0.7 * spd_loss(model, x, {0}) + 1.3 * ppd_loss(model, PPDTarget::reference(ref), x, {1, 2});
    EXPECT_NEAR(fair_tuning_loss(model, ref, x, cfg), expected, 1e-12);
    // at the starting point only the SPD term is live
    EXPECT_NEAR(fair_tuning_loss(ref, ref, x, cfg), 0.7 * spd_loss(ref, x, {0}), 1e-12);
}

TEST(TuningLoss, ParameterGradientMatchesFiniteDifferences) {
    const MLPModel ref = random_model(3, 5), model = random_model(3, 6);
    Rng rng(7);
    const Matrix x = testutil::random_matrix(rng, 12, 3);
    // keep every unit away from the ELU kink so second-order terms are smooth
    ASSERT_GT(model.min_abs_preactivation(x).minCoeff(), 1e-4);
    const TuningConfig cfg{0.5, 2.0, {0}, {1, 2}};
    Tape tape;
    const Var root = record_fair_tuning_loss(tape, model, ref, x, cfg);
    const Vector analytic = tape.param_gradient(root, model.parameter_count());
    auto f = [&](const Vector& p) {
        MLPModel m = model;
        m.set_parameters(p);
        return fair_tuning_loss(m, ref, x, cfg);
    };
    EXPECT_LT(testutil::rel_err(analytic, testutil::central_diff(f, model.parameters(), 1e-6)), 1e-5);
}

TEST(TuningConfig, Validation) {
    TuningConfig c;
    c.lambda_spd = -1.0;
    EXPECT_THROW(c.validate(), ContractError);
    c.lambda_spd = std::nan("");
    EXPECT_THROW(c.validate(), ContractError);
    c.lambda_spd = 1.0;
    c.lambda_ppd = std::numeric_limits<double>::infinity();
    EXPECT_THROW(c.validate(), ContractError);
    c.lambda_ppd = 0.0;
    c.not_allowed = {0, 1};
    c.allowed = {1};
    EXPECT_THROW(c.validate(), PathConflictError);
    c.allowed = {2};
    EXPECT_NO_THROW(c.validate());
    c.train.epochs = 0;
    EXPECT_THROW(c.validate(), ContractError);
}

TEST(FairTune, ZeroLambdaStaysAtReference) {
    const Dataset d = simulate_linear(500, 1.0, 11);
    const Matrix x = d.select({"X", "Z", "W"});
    MLPConfig mc;
    mc.input_width = 3;
    const MLPModel ref = fit_unconstrained(x, d.outcome_values(), mc, TrainConfig{10, 64}).model;
    const auto r = fair_tune(ref, x, TuningConfig{0.0, 0.0, {0}, {1, 2}});
    EXPECT_EQ(r.initial_loss, 0.0);
    const double drift = (r.model.predict(x) - ref.predict(x)).squaredNorm() / 500.0;
    EXPECT_LT(drift, 1e-3);
}

TEST(FairTune, StatisticalParityTuningShrinksProtectedGradient) {
    const Dataset d = simulate_linear(1000, 1.0, 12);
    const Matrix x = d.select({"X", "Z", "W"});
    MLPConfig mc;
    mc.input_width = 3;
    const MLPModel ref = fit_unconstrained(x, d.outcome_values(), mc, TrainConfig{30, 64}).model;
    TuningConfig cfg{10.0, 5.0, {0}, {1, 2}, TrainConfig{20, 64}};
    const auto r = spt_tune(ref, x, cfg);
    EXPECT_LT(spd_loss(r.model, x, {0}), 0.2 * spd_loss(ref, x, {0}));
    EXPECT_LT(r.epoch_losses.back(), r.initial_loss);
}

TEST(FairTune, SpdNonIncreasingInLambda) {
    // SPD after tuning should be non-increasing in lambda_spd, up to optimizer noise.
    const Dataset d = simulate_linear(800, 1.0, 13);
    const Matrix x = d.select({"X", "Z", "W"});
    MLPConfig mc;
    mc.input_width = 3;
    const MLPModel ref = fit_unconstrained(x, d.outcome_values(), mc, TrainConfig{20, 64}).model;
    double prev = spd_loss(ref, x, {0});
    for (double lam : {0.1, 1.0, 10.0}) {
        const auto r = fair_tune(ref, x, TuningConfig{lam, 0.0, {0}, {1, 2}, TrainConfig{10, 64}});
        const double s = spd_loss(r.model, x, {0});
        EXPECT_LE(s, prev + 0.05) << "lambda " << lam;
        prev = s;
    }
}

TEST(FairTune, DivergenceGuardFires) {
    const Dataset d = simulate_linear(256, 1.0, 14);
    const Matrix x = d.select({"X", "Z", "W"});
    MLPConfig mc;
    mc.input_width = 3;
    const MLPModel ref = fit_unconstrained(x, d.outcome_values(), mc, TrainConfig{5, 64}).model;
    TuningConfig cfg{1.0, 1.0, {0}, {1, 2}, TrainConfig{30, 64}};
    cfg.train.learning_rate = 50.0;
    EXPECT_THROW(fair_tune(ref, x, cfg), DivergenceError);
}

TEST(FairTune, IndexErrors) {
    const MLPModel ref = random_model(2, 1);
    EXPECT_THROW(fair_tune(ref, Matrix::Ones(4, 2), TuningConfig{1.0, 0.0, {2}, {}}), DimensionError);
}

TEST(Marginalize, ProtectedGradientIsExactlyZero) {
    const MLPModel ref = random_model(3, 21);
    Rng rng(22);
    const Matrix train = testutil::random_matrix(rng, 50, 3), x = testutil::random_matrix(rng, 20, 3);
    const auto mp = marginalize_predict(ref, train, {0}, {FillKind::Mean});
    EXPECT_EQ(spd_loss(mp, x, {0}), 0.0);
    EXPECT_DOUBLE_EQ(mp.fills()[0], train.col(0).mean());
    // prediction equals the reference at the filled point and ignores the protected column
    Matrix shifted = x;
    shifted.col(0).array() += 3.0;
    EXPECT_EQ(mp.predict(x), mp.predict(shifted));
    EXPECT_EQ(mp.predict(x), ref.predict(mp.overwrite(x)));
    const Matrix g = mp.input_gradient(x), gr = ref.input_gradient(mp.overwrite(x));
    EXPECT_EQ(g.col(1), gr.col(1));
}

TEST(Marginalize, ModeFillBreaksTiesLow) {
    Matrix t(6, 2);
    t << 1, 5, 1, 5, 0, 7, 0, 7, 3, 5, 2, 9;
    const auto fills = marginal_fills(t, {0, 1}, {FillKind::Mode, FillKind::Mode});
    EXPECT_EQ(fills[0], 0.0);  // 0 and 1 both appear twice
    EXPECT_EQ(fills[1], 5.0);
    EXPECT_THROW(marginal_fills(t, {0}, {}), DimensionError);
}

TEST(Contrast, LogitLinearOracles) {
    // f = 2 a - 0.5 b + c: CSP on a is |2|; contrast of the reference with a = 3 differs by 1.
    const MLPModel m = linear({2.0, -0.5, 1.0}), r = linear({3.0, -0.5, 1.0});
    Matrix x(4, 3);
    x << 0, 1, 2, 1, 0, 3, 1, 1, -1, 0, 0, 0;
    EXPECT_DOUBLE_EQ(csp_loss(m, x, 0), 2.0);
    EXPECT_DOUBLE_EQ(csp_loss(m, x, 1), 0.5);
    EXPECT_DOUBLE_EQ(cpp_loss(m, r, x, 0), 1.0);
    EXPECT_DOUBLE_EQ(cpp_loss(m, m, x, 1), 0.0);
    EXPECT_THROW(csp_loss(m, x, 2), DomainError);
    EXPECT_THROW(cpp_loss(m, r, x, 2), DomainError);
    EXPECT_THROW(csp_loss(m, x, 5), DimensionError);
}

TEST(Sequential, ChainRuleOracle) {
    // mediator W^ = z, outcome f(x, z, w) = w z, so f(x, z, W^) = z^2.
    const FunctionPredictor med{[](const Matrix& b) { return Vector(b.col(0)); },
                                [](const Matrix& b) { return Matrix(Matrix::Ones(b.rows(), 1)); }};
    const FunctionPredictor out{[](const Matrix& b) { return Vector(b.col(2).cwiseProduct(b.col(1))); },
                                [](const Matrix& b) {
                                    Matrix g = Matrix::Zero(b.rows(), 3);
                                    g.col(1) = b.col(2);
                                    g.col(2) = b.col(1);
                                    return g;
                                }};
    const SequentialPredictor sp(med, {1}, out, {0, 1, 2}, 2);
    Rng rng(31);
    const Matrix x = testutil::random_matrix(rng, 10, 3);
    const Matrix g = sp.input_gradient(x), stage = sp.outcome_stage_gradient(x);
    for (Eigen::Index i = 0; i < 10; ++i) {
        const double z = x(i, 1);
        EXPECT_DOUBLE_EQ(sp.predict(x)[i], z * z);
        EXPECT_EQ(g(i, 0), 0.0);
        EXPECT_DOUBLE_EQ(g(i, 1), 2.0 * z);
        EXPECT_EQ(g(i, 2), 0.0);
        EXPECT_EQ(stage(i, 0), 0.0);
        EXPECT_DOUBLE_EQ(stage(i, 1), z);
        EXPECT_DOUBLE_EQ(stage(i, 2), z);
    }
}

TEST(Sequential, ChainRuleMatchesFiniteDifferences) {
    const MLPModel med = random_model(2, 41), out = random_model(3, 42);
    const SequentialPredictor sp(med, {0, 1}, out, {0, 1, 2}, 2);
    Rng rng(43);
    const Matrix x = testutil::random_matrix(rng, 8, 3);
    const Matrix g = sp.input_gradient(x);
    for (Eigen::Index i = 0; i < 8; ++i) {
        auto f = [&](const Vector& v) { return sp.predict(v.transpose())[0]; };
        EXPECT_LT(testutil::rel_err(g.row(i).transpose(), testutil::central_diff(f, x.row(i).transpose(), 1e-6)), 1e-6);
    }
}

TEST(Sequential, RejectsCyclesAndMissingMediator) {
    const MLPModel m2 = random_model(2, 1), m3 = random_model(3, 2);
    EXPECT_THROW(SequentialPredictor(m2, {0, 2}, m3, {0, 1, 2}, 2), ContractError);
    EXPECT_THROW(SequentialPredictor(m2, {0, 1}, m2, {0, 1}, 2), ContractError);
}

TEST(Sequential, PlanForIndirectDiagram) {
    const SequentialPlan p = plan_sequential(indirect_diagram());
    EXPECT_EQ(p.mediator, "W");
    EXPECT_EQ(p.features, (std::vector<std::string>{"X", "Z", "W"}));
    EXPECT_EQ(p.mediator_parents, (std::vector<std::string>{"X", "Z"}));
    EXPECT_EQ(p.mediator_paths.not_allowed, std::vector<int>{0});
    EXPECT_EQ(p.mediator_paths.allowed, std::vector<int>{1});
    EXPECT_EQ(p.outcome_paths.not_allowed, std::vector<int>{0});
    EXPECT_EQ(p.outcome_paths.allowed, (std::vector<int>{1, 2}));
    EXPECT_THROW(plan_sequential(simulation_diagram()), ContractError);
}

TEST(Sequential, TrainedModelRemovesDirectAndIndirectDependence) {
    const Dataset d = simulate_indirect(1000, IndirectBetas{}, 51);
    MLPConfig mc;
    mc.hidden_widths = {32, 32};
    mc.input_width = 2;
    StageConfig ms{mc, TrainConfig{30, 64}, 10.0, 1.0, TrainConfig{20, 64}};
    mc.input_width = 3;
    StageConfig ys{mc, TrainConfig{30, 64}, 10.0, 1.0, TrainConfig{20, 64}};
    const SequentialModel sm = sequential_fair_predict(d, indirect_diagram(), ms, ys);
    const Matrix x = d.select({"X", "Z", "W"});
    const double before = spd_loss(sm.outcome_reference, x, {0});
    EXPECT_LT(spd_loss(sm.predictor, x, {0}), 0.25 * before);
    EXPECT_EQ(sm.predictor.input_gradient(x).col(2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Compatibility, LinearIsCompatible) {
    Rng rng(61);
    const Matrix x = testutil::random_matrix(rng, 30, 3);
    const auto rep = compatibility_check(linear({-1.0, 1.0, 1.0}), x, {{0, 1}, {0, 2}}, 1e-6);
    EXPECT_TRUE(rep.compatible);
    EXPECT_LT(rep.max_abs_mixed, 1e-9);
    EXPECT_EQ(rep.pairs.size(), 2u);
}

TEST(Compatibility, ProductMixedPartialIsAbsZ) {
    Rng rng(62);
    const Matrix x = testutil::random_matrix(rng, 30, 3);
    const auto rep = compatibility_check(product_xzw(), x, {{0, 2}}, 0.2);
    EXPECT_NEAR(rep.pairs[0].max_abs_mixed, x.col(1).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_FALSE(rep.compatible);
}

TEST(Compatibility, PairsFromSets) {
    const auto p = compatibility_pairs(FeatureIndexSets{{0}, {1, 2}});
    EXPECT_EQ(p, (std::vector<std::pair<int, int>>{{0, 1}, {0, 2}}));
}

TEST(Compatibility, ZeroMixedPartialMeansBothLossesCanVanish) {
    // For an additive f = g(x) + h(z, w), dropping g gives SPD 0 and PPD 0 at
    // once; for x z w no candidate on a grid of additive fits gets both low.
    Rng rng(63);
    const Matrix x = testutil::random_matrix(rng, 200, 3);
    const FunctionPredictor additive{
        [](const Matrix& b) { return Vector(b.col(1) + b.col(2).array().sin().matrix()); },
        [](const Matrix& b) {
            Matrix g = Matrix::Zero(b.rows(), 3);
            g.col(1).setOnes();
            g.col(2) = b.col(2).array().cos().matrix();
            return g;
        }};
    const auto truth = PPDTarget::true_gradient([](const Matrix& b) {
        Matrix g = Matrix::Zero(b.rows(), 3);
        g.col(0).setConstant(2.0);
        g.col(1).setOnes();
        g.col(2) = b.col(2).array().cos().matrix();
        return g;
    });
    EXPECT_EQ(spd_loss(additive, x, {0}), 0.0);
    EXPECT_EQ(ppd_loss(additive, truth, x, {1, 2}), 0.0);

    const auto prod_truth = PPDTarget::true_gradient([](const Matrix& b) { return true_gradients(Setting::Multiplicative, b); });
    double best = std::numeric_limits<double>::infinity();
    for (double a : {-1.0, -0.5, 0.0, 0.5, 1.0})
        for (double c : {-1.0, 0.0, 1.0}) {
            const FunctionPredictor cand{
                [a, c](const Matrix& b) { return Vector(a * b.col(1).cwiseProduct(b.col(2)) + c * b.col(2)); },
                [a, c](const Matrix& b) {
                    Matrix g = Matrix::Zero(b.rows(), 3);
                    g.col(1) = a * b.col(2);
                    g.col(2) = a * b.col(1) + Vector::Constant(b.rows(), c);
                    return g;
                }};
            best = std::min(best, spd_loss(cand, x, {0}) + ppd_loss(cand, prod_truth, x, {1, 2}));
        }
    EXPECT_GT(best, 0.5);
}
