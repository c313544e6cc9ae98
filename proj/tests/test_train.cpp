#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"

using namespace derivfair;

namespace {

MLPConfig small_net(int in, std::uint64_t seed = 0) {
    MLPConfig c;
    c.input_width = in;
    c.hidden_widths = {32, 32};
    c.init_seed = seed;
    return c;
}

TrainConfig epochs(int e, std::uint64_t seed = 0) {
    TrainConfig t;
    t.epochs = e;
    t.shuffle_seed = seed;
    return t;
}

double mse(const Vector& a, const Vector& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

}  // namespace

TEST(Train, NoiselessLinearFitsWell) {
    const Dataset train = simulate_linear(1000, 0.0, 1), test = simulate_linear(1000, 0.0, 2);
    const std::vector<std::string> f{"X", "Z", "W"};
    const FitResult r = fit_unconstrained(train.select(f), train.outcome_values(), small_net(3), epochs(50));
    EXPECT_LT(mse(r.model.predict(test.select(f)), test.outcome_values()), 0.01);
    EXPECT_EQ(r.epoch_losses.size(), 50u);
    EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
}

TEST(Train, NoisyLinearReachesOracleLoss) {
    // large test draw so the oracle level sigma^2 = 1 is sharp
    const Dataset train = simulate_linear(1000, 1.0, 3), test = simulate_linear(20000, 1.0, 4);
    const std::vector<std::string> f{"X", "Z", "W"};
    const FitResult r = fit_unconstrained(train.select(f), train.outcome_values(), small_net(3), epochs(50));
    const double m = mse(r.model.predict(test.select(f)), test.outcome_values());
    EXPECT_GE(m, 1.0);
    EXPECT_LT(m, 1.15);
}

TEST(Train, ConstantOutcome) {
    Rng rng(4);
    const Matrix x = testutil::random_matrix(rng, 500, 2);
    const FitResult r = fit_unconstrained(x, Vector::Constant(500, 0.7), small_net(2), epochs(50));
    EXPECT_LT(mse(r.model.predict(x), Vector::Constant(500, 0.7)), 1e-3);
}

TEST(Train, BitReproducible) {
    const Dataset d = simulate_linear(300, 1.0, 5);
    const Matrix x = d.select({"X", "Z", "W"});
    const auto a = fit_unconstrained(x, d.outcome_values(), small_net(3, 9), epochs(3, 4));
    const auto b = fit_unconstrained(x, d.outcome_values(), small_net(3, 9), epochs(3, 4));
    EXPECT_EQ(a.model.parameters(), b.model.parameters());
    const auto c = fit_unconstrained(x, d.outcome_values(), small_net(3, 9), epochs(3, 5));
    EXPECT_NE(a.model.parameters(), c.model.parameters());
}

TEST(Train, StandardizeIsFoldedIntoFirstLayer) {
    Rng rng(6);
    Matrix x = testutil::random_matrix(rng, 50, 3);
    x.col(0) = x.col(0) * 10.0 + Vector::Constant(50, 40.0);
    const auto s = detail::Standardizer::fit(x);
    const MLPModel m = init_model(small_net(3, 2));
    const MLPModel folded = s.fold_into(m);
    EXPECT_LT((folded.predict(x) - m.predict(s.apply(x))).cwiseAbs().maxCoeff(), 1e-12);

    TrainConfig t = epochs(2);
    t.standardize = true;
    const auto r = fit_unconstrained(x, x.col(0), small_net(3), t);
    EXPECT_TRUE(r.model.predict(x).allFinite());
}

TEST(Train, BceMatchesDirectFormula) {
    Tape tape;
    Vector z(4), y(4);
    z << -50.0, -0.3, 0.0, 40.0;
    y << 0.0, 1.0, 1.0, 1.0;
    const double value = prediction_loss(tape, tape.constant(z), y, PredictionLoss::Bce).scalar();
    double expected = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double p = sigmoid(z[i]);
        expected += y[i] == 1.0 ? -std::log(p) : -std::log1p(-p);
    }
    EXPECT_NEAR(value, expected / 4.0, 1e-12);
}

TEST(Train, RejectsBadTargets) {
    Matrix x = Matrix::Ones(3, 1);
    Vector y(3);
    y << 1.0, std::nan(""), 0.0;
    EXPECT_THROW(fit_unconstrained(x, y, small_net(1), epochs(1)), DomainError);
    EXPECT_THROW(fit_unconstrained(x, Vector::Zero(2), small_net(1), epochs(1)), DimensionError);
    EXPECT_THROW(fit_distilled(x, y, small_net(1), epochs(1)), DomainError);
}

TEST(Train, DivergenceOnNonFiniteLoss) {
    Matrix x = Matrix::Ones(4, 1);
    MLPModel m = init_model(small_net(1));
    auto build = [](Tape& t, const MLPModel& model, const std::vector<std::size_t>&) {
        auto rec = model.record(t, Matrix::Ones(1, 1), false);
        return t.sum(t.scale(rec.output, std::numeric_limits<double>::infinity()));
    };
    EXPECT_THROW(run_minibatch_adam(m, 4, epochs(1), build), DivergenceError);
}

TEST(Train, DistilledModelMatchesConstantTarget) {
    Rng rng(8);
    const Matrix x = testutil::random_matrix(rng, 400, 2);
    const auto r = fit_distilled(x, Vector::Constant(400, -0.4), small_net(2), epochs(50));
    EXPECT_LT(mse(r.model.predict(x), Vector::Constant(400, -0.4)), 1e-3);
}

TEST(Train, DistilledModelBeatsTheMean) {
    Rng rng(9);
    const Matrix x = testutil::random_matrix(rng, 500, 2);
    const Vector target = (x.col(0) - 0.5 * x.col(1)).array().tanh().matrix();
    const auto r = fit_distilled(x, target, small_net(2), epochs(30));
    const double var = (target.array() - target.mean()).square().mean();
    EXPECT_LT(mse(r.model.predict(x), target), var);
}

TEST(CrossFit, LeaveOneOutNeverSeesItsRow) {
    Rng rng(10);
    const Matrix x = testutil::random_matrix(rng, 10, 2);
    Vector y(10);
    for (int i = 0; i < 10; ++i) y[i] = i % 2;
    MLPConfig mc = small_net(2, 3);
    mc.hidden_widths = {4};
    const TrainConfig tc = epochs(2, 5);
    const CrossFitResult r = cross_fit_logits(x, y, 10, mc, tc, 77);

    std::set<int> folds(r.fold_of_row.begin(), r.fold_of_row.end());
    EXPECT_EQ(folds.size(), 10u);
    // Rebuild one held-out logit from a model trained on the other nine rows.
    for (int row : {0, 6}) {
        const int fold = r.fold_of_row[static_cast<std::size_t>(row)];
        std::vector<std::size_t> others;
        for (std::size_t i = 0; i < 10; ++i)
            if (static_cast<int>(i) != row) others.push_back(i);
        MLPConfig m2 = mc;
        m2.init_seed = derive_seed(mc.init_seed, static_cast<std::uint64_t>(fold));
        TrainConfig t2 = tc;
        t2.shuffle_seed = derive_seed(tc.shuffle_seed, static_cast<std::uint64_t>(fold));
        const auto fit = fit_unconstrained(detail::gather_rows(x, others), detail::gather(y, others), m2, t2,
                                           PredictionLoss::Bce);
        EXPECT_EQ(fit.model.predict(x.row(row))[0], r.logits[row]);
    }
}

TEST(CrossFit, DeterministicOutcomeSignsAgree) {
    Rng rng(11);
    const Matrix x = testutil::random_matrix(rng, 2000, 1);
    Vector y(2000);
    for (int i = 0; i < 2000; ++i) y[i] = x(i, 0) > 0.0 ? 1.0 : 0.0;
    MLPConfig mc = small_net(1);
    mc.hidden_widths = {16};
    const CrossFitResult r = cross_fit_logits(x, y, 5, mc, epochs(20), 1);
    int agree = 0;
    for (int i = 0; i < 2000; ++i) agree += (r.logits[i] > 0.0) == (y[i] == 1.0);
    EXPECT_GT(agree, 1900);
    EXPECT_TRUE(r.warnings.empty());
}

TEST(CrossFit, FoldsAreBalancedAndSeeded) {
    Rng rng(12);
    const Matrix x = testutil::random_matrix(rng, 23, 1);
    Vector y = Vector::Zero(23);
    y.head(11).setOnes();
    MLPConfig mc = small_net(1);
    mc.hidden_widths = {2};
    const auto a = cross_fit_logits(x, y, 5, mc, epochs(1), 3);
    const auto b = cross_fit_logits(x, y, 5, mc, epochs(1), 3);
    EXPECT_EQ(a.fold_of_row, b.fold_of_row);
    EXPECT_EQ(a.logits, b.logits);
    std::vector<int> counts(5, 0);
    for (int f : a.fold_of_row) ++counts[static_cast<std::size_t>(f)];
    for (int c : counts) EXPECT_TRUE(c == 4 || c == 5);
}

TEST(CrossFit, SingleClassFoldWarnsAndProceeds) {
    Matrix x(4, 1);
    x << 0, 1, 2, 3;
    Vector y(4);
    y << 1, 0, 0, 0;
    MLPConfig mc = small_net(1);
    mc.hidden_widths = {2};
    const auto r = cross_fit_logits(x, y, 4, mc, epochs(1), 0);
    EXPECT_FALSE(r.warnings.empty());
    EXPECT_TRUE(r.logits.allFinite());
}

TEST(CrossFit, Errors) {
    Matrix x = Matrix::Ones(4, 1);
    Vector y(4);
    y << 0, 1, 2, 0;
    EXPECT_THROW(cross_fit_logits(x, y, 2, small_net(1), epochs(1), 0), DomainError);
    y << 0, 1, 1, 0;
    EXPECT_THROW(cross_fit_logits(x, y, 1, small_net(1), epochs(1), 0), ContractError);
    EXPECT_THROW(cross_fit_logits(x, y, 5, small_net(1), epochs(1), 0), ContractError);
}
