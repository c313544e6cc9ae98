// derivfair: simulate, run, compas, pareto, bench.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "derivfair/derivfair.hpp"

namespace fs = std::filesystem;
using namespace derivfair;

namespace {

struct Global {
    std::uint64_t seed = 0;
    std::string out = "derivfair_out";
    unsigned threads = 1;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw std::runtime_error("write to '" + path.string() + "' failed");
}

fs::path prepare_out(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
    return p;
}

std::string sigma_tag(double s) {
    std::string t = format_label(s);
    for (auto& c : t)
        if (c == '.') c = 'p';
    return t;
}

struct SimulateOpts {
    std::string preset = "linear";
    double sigma2 = 1.0;
    long n = 1000;
    long n_test = 1000;
    int replicates = 1;
};

int cmd_simulate(const Global& g, const SimulateOpts& o) {
    const Preset preset = parse_preset(o.preset);
    if (o.replicates < 1 || o.n < 1 || o.n_test < 1 || !(o.sigma2 >= 0.0))
        throw ContractError("simulate: need n, n-test, replicates >= 1 and sigma2 >= 0");
    const fs::path out = prepare_out(g.out);
    const CausalDiagram diagram = preset == Preset::Indirect ? indirect_diagram() : simulation_diagram();
    for (int r = 0; r < o.replicates; ++r) {
        const fs::path dir = out / ("replicate_" + std::to_string(r));
        fs::create_directories(dir);
        const std::uint64_t base = g.seed + static_cast<std::uint64_t>(r);
        auto draw = [&](long n, std::uint64_t seed) {
            if (preset == Preset::Indirect) return simulate_indirect(n, IndirectBetas{}, seed, std::sqrt(o.sigma2));
            return simulate(preset == Preset::Linear ? Setting::Linear : Setting::Multiplicative, n, o.sigma2, seed);
        };
        write_csv(draw(o.n, base), (dir / "train.csv").string());
        write_csv(draw(o.n_test, derive_seed(base, 1)), (dir / "test.csv").string());
        save_diagram(diagram, (dir / "diagram.json").string());
    }
    std::cout << "wrote " << o.replicates << " replicate(s) to " << out.string() << '\n';
    return 0;
}

struct RunOpts {
    std::string preset = "linear";
    std::vector<double> sigma2{1.0};
    std::vector<double> lambdas{0.5, 1.0, 10.0, 100.0};
    int replicates = 20;
    long n_train = 1000;
    long n_test = 1000;
    int fit_epochs = 0;  // 0: preset default
    int tune_epochs = 0;
    double lr = 1e-3;
};

ExperimentConfig experiment_config(const Global& g, const std::string& preset, int replicates, long n_train,
                                   long n_test, int fit_epochs, int tune_epochs, double lr) {
    ExperimentConfig cfg;
    cfg.preset = parse_preset(preset);
    cfg.replicates = replicates;
    cfg.n_train = n_train;
    cfg.n_test = n_test;
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    if (fit_epochs > 0) cfg.fit_epochs = fit_epochs;
    if (tune_epochs > 0) cfg.tune_epochs = tune_epochs;
    cfg.learning_rate = lr;
    return cfg;
}

int cmd_run(const Global& g, const RunOpts& o) {
    ExperimentConfig cfg = experiment_config(g, o.preset, o.replicates, o.n_train, o.n_test, o.fit_epochs,
                                             o.tune_epochs, o.lr);
    cfg.sigma2 = o.sigma2;
    cfg.lambda_grid = o.lambdas;
    cfg.validate();
    const fs::path out = prepare_out(g.out);
    std::size_t failed = 0;
    for (double s2 : cfg.sigma2) {
        const SimulationRun run = run_simulation(cfg, s2);
        const std::string stem = std::string("report_") + preset_name(cfg.preset) + "_sigma2_" + sigma_tag(s2);
        write_report(run.report, (out / (stem + ".json")).string(), (out / (stem + ".csv")).string());
        for (const auto& f : run.failures) std::cerr << "failed " << f << '\n';
        failed += run.failures.size();
        std::printf("%s sigma2=%s\n", preset_name(cfg.preset), format_label(s2).c_str());
        std::printf("  %-20s %10s %10s %10s\n", "predictor", "pred_loss", "spd_loss", "ppd_loss");
        for (const auto& [name, metrics] : run.report.predictors)
            std::printf("  %-20s %10.4f %10.4f %10.4f\n", name.c_str(), metrics.at("pred_loss").mean,
                        metrics.at("spd_loss").mean, metrics.at("ppd_loss").mean);
    }
    if (failed) {
        std::cerr << failed << " replicate(s) failed\n";
        return 3;
    }
    return 0;
}

struct CompasOpts {
    std::string csv;
    CompasColumns columns;
    int bootstraps = 200;
    int fit_epochs = 100;
    int distill_epochs = 100;
    int tune_epochs = 50;
    int folds = 5;
    double lr = 1e-3;
};

int cmd_compas(const Global& g, const CompasOpts& o) {
    CompasConfig cfg;
    cfg.columns = o.columns;
    cfg.n_boot = static_cast<std::size_t>(o.bootstraps);
    cfg.fit_epochs = o.fit_epochs;
    cfg.distill_epochs = o.distill_epochs;
    cfg.tune_epochs = o.tune_epochs;
    cfg.folds = o.folds;
    cfg.learning_rate = o.lr;
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    if (o.bootstraps < 1) throw ContractError("compas: bootstraps must be >= 1");
    const Dataset data = load_compas(o.csv, cfg.columns);
    const fs::path out = prepare_out(g.out);
    const CompasRun run = run_compas(data, cfg);
    write_report(run.report, (out / "report_compas.json").string(), (out / "report_compas.csv").string());
    const std::string t1 = compas_table_performance(run.report), t2 = compas_table_contrast(run.report);
    write_text(out / "table_performance.txt", t1);
    write_text(out / "table_contrast.txt", t2);
    std::cout << t1 << '\n' << t2;
    return 0;
}

struct ParetoOpts {
    std::string preset = "linear";
    double sigma2 = 0.0;
    std::vector<double> spd_grid = default_pareto_grid();
    std::vector<double> ppd_grid = default_pareto_grid();
    long n_train = 1000;
    long n_test = 1000;
    int fit_epochs = 0;
    int tune_epochs = 0;
    double lr = 1e-3;
};

int cmd_pareto(const Global& g, const ParetoOpts& o) {
    ExperimentConfig cfg =
        experiment_config(g, o.preset, 1, o.n_train, o.n_test, o.fit_epochs, o.tune_epochs, o.lr);
    cfg.sigma2 = {o.sigma2};
    const ParetoSweep sweep = run_pareto(cfg, o.sigma2, o.spd_grid, o.ppd_grid);
    const fs::path out = prepare_out(g.out);
    write_text(out / "pareto.csv", pareto_csv(sweep));
    std::size_t on = 0;
    for (bool b : sweep.on_front) on += b;
    std::cout << sweep.points.size() << " points, " << on << " on the front; wrote " << (out / "pareto.csv").string()
              << '\n';
    return 0;
}

struct BenchOpts {
    std::vector<int> n{100, 300, 500};
    std::vector<int> m{100, 300, 500};
    std::vector<int> h{100, 300, 500};
    int reps = 10;
};

int cmd_bench(const Global& g, const BenchOpts& o) {
    if (o.n.empty() || o.m.empty() || o.h.empty()) throw ContractError("bench: size lists must be non-empty");
    for (const auto* list : {&o.n, &o.m, &o.h})
        for (int v : *list)
            if (v < 1) throw ContractError("bench: sizes must be positive");
    const auto rows = run_bench(o.n, o.m, o.h, o.reps, g.seed);
    const fs::path out = prepare_out(g.out);
    write_text(out / "bench.csv", bench_csv(rows));
    std::cout << bench_csv(rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Derivative-based causal fairness: simulation, fair tuning and evaluation"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML configuration file; command-line flags take precedence");

    Global g;
    app.add_option("--seed", g.seed, "Base random seed")->capture_default_str();
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->capture_default_str();

    SimulateOpts so;
    auto* sim = app.add_subcommand("simulate", "Write simulated train/test CSVs and the diagram JSON");
    sim->add_option("--preset", so.preset, "linear | multiplicative | indirect")->capture_default_str();
    sim->add_option("--sigma2", so.sigma2, "Outcome noise variance")->capture_default_str();
    sim->add_option("--n", so.n, "Training rows")->capture_default_str();
    sim->add_option("--n-test", so.n_test, "Test rows")->capture_default_str();
    sim->add_option("--replicates", so.replicates, "Number of replicates")->capture_default_str();

    RunOpts ro;
    auto* run = app.add_subcommand("run", "Fit, tune and evaluate over replicates");
    run->add_option("--preset", ro.preset, "linear | multiplicative | indirect")->capture_default_str();
    run->add_option("--sigma2", ro.sigma2, "Noise variances")->capture_default_str();
    run->add_option("--lambdas", ro.lambdas, "Tuning weights as multiples of sigma2")->capture_default_str();
    run->add_option("--replicates", ro.replicates, "Replicates per noise level")->capture_default_str();
    run->add_option("--n-train", ro.n_train, "Training rows")->capture_default_str();
    run->add_option("--n-test", ro.n_test, "Test rows")->capture_default_str();
    run->add_option("--fit-epochs", ro.fit_epochs, "Override the preset's fit epochs");
    run->add_option("--tune-epochs", ro.tune_epochs, "Override the preset's tuning epochs");
    run->add_option("--lr", ro.lr, "ADAM learning rate")->capture_default_str();

    CompasOpts co;
    auto* compas = app.add_subcommand("compas", "Recidivism pipeline with bootstrap intervals");
    compas->add_option("--csv", co.csv, "Curated CSV")->required();
    compas->add_option("--col-race", co.columns.race, "Race column (0/1)")->capture_default_str();
    compas->add_option("--col-sex", co.columns.sex, "Sex column (0/1)")->capture_default_str();
    compas->add_option("--col-age", co.columns.age, "Age column")->capture_default_str();
    compas->add_option("--col-priors", co.columns.priors, "Prior offences column")->capture_default_str();
    compas->add_option("--col-degree", co.columns.degree, "Charge degree column (0/1)")->capture_default_str();
    compas->add_option("--col-outcome", co.columns.outcome, "Outcome column (0/1)")->capture_default_str();
    compas->add_option("--bootstraps", co.bootstraps, "Bootstrap resamples")->capture_default_str();
    compas->add_option("--folds", co.folds, "Cross-fitting folds")->capture_default_str();
    compas->add_option("--fit-epochs", co.fit_epochs, "Epochs per cross-fitting fold")->capture_default_str();
    compas->add_option("--distill-epochs", co.distill_epochs, "Distillation epochs")->capture_default_str();
    compas->add_option("--tune-epochs", co.tune_epochs, "Tuning epochs")->capture_default_str();
    compas->add_option("--lr", co.lr, "ADAM learning rate")->capture_default_str();

    ParetoOpts po;
    auto* pareto = app.add_subcommand("pareto", "Sweep a lambda grid and flag the Pareto front");
    pareto->add_option("--preset", po.preset, "linear | multiplicative")->capture_default_str();
    pareto->add_option("--sigma2", po.sigma2, "Noise variance")->capture_default_str();
    pareto->add_option("--spd-grid", po.spd_grid, "lambda_spd values")->capture_default_str();
    pareto->add_option("--ppd-grid", po.ppd_grid, "lambda_ppd values")->capture_default_str();
    pareto->add_option("--n-train", po.n_train, "Training rows")->capture_default_str();
    pareto->add_option("--n-test", po.n_test, "Test rows")->capture_default_str();
    pareto->add_option("--fit-epochs", po.fit_epochs, "Override the preset's fit epochs");
    pareto->add_option("--tune-epochs", po.tune_epochs, "Override the preset's tuning epochs");
    pareto->add_option("--lr", po.lr, "ADAM learning rate")->capture_default_str();

    BenchOpts bo;
    auto* bench = app.add_subcommand("bench", "Time backpropagation with and without the gradient loss");
    bench->set_help_flag("--help", "Print this help message and exit");  // frees --h for hidden widths
    bench->add_option("--n", bo.n, "Sample sizes")->capture_default_str();
    bench->add_option("--m", bo.m, "Feature counts")->capture_default_str();
    bench->add_option("--h", bo.h, "Hidden widths")->capture_default_str();
    bench->add_option("--reps", bo.reps, "Timed repetitions per cell")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) return cmd_simulate(g, so);
        if (*run) return cmd_run(g, ro);
        if (*compas) return cmd_compas(g, co);
        if (*pareto) return cmd_pareto(g, po);
        if (*bench) return cmd_bench(g, bo);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
