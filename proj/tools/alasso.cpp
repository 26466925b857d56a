#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "alasso/alasso.hpp"

namespace fs = std::filesystem;
using namespace alasso;

namespace {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kIo = 3,
    kRank = 4,
    kConvergence = 5,
    kMcAbort = 6,
};

class UsageError : public Error {
public:
    using Error::Error;
};

// Write, read back, compare.
void write_validated(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
    }
    {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write '" + path.string() + "'");
        f << text;
        if (!f) throw IoError("failed writing '" + path.string() + "'");
    }
    std::ifstream back(path, std::ios::binary);
    std::stringstream buf;
    buf << back.rdbuf();
    if (buf.str() != text) throw IoError("read-back mismatch for '" + path.string() + "'");
}

std::size_t default_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Parsed flags of one subcommand; values apply only when passed explicitly.
struct Flags {
    std::string config;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::size_t grid_size = 100;
    std::size_t workers = 1;
    bool no_bias = false;
    double lambda = 0.0;
    bool robust = false;
    bool classical = false;
    bool intercept = false;
    bool standardize = false;
    std::string out;

    std::string data, response, date_column;
    std::vector<std::string> w, x;
    std::size_t ar_lags = 0;
    double theta0 = 0.0;
    std::vector<std::string> coefs;

    std::string preset;
    std::size_t n = 800;
    std::size_t replications = 5000;
    std::uint64_t replication = 0;

    double l0_start = 0.0, l0_stop = 4.0, l0_step = 0.05, c = 1.0, omega = 1.0;
    std::size_t draws = 100000;

    std::map<std::string, CLI::Option*> opts;

    bool given(const std::string& name) const {
        const auto it = opts.find(name);
        return it != opts.end() && it->second->count() > 0;
    }
};

void add_common(CLI::App* app, Flags& f) {
    f.opts["config"] = app->add_option("--config", f.config, "Resolved-config snapshot to start from");
    f.opts["seed"] = app->add_option("--seed", f.seed, "Master seed (fallback: ALASSO_SEED)");
    f.opts["alpha"] = app->add_option("--alpha", f.alpha, "Significance level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
    f.opts["workers"] = app->add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
    f.opts["out"] = app->add_option("--out", f.out, "Output directory");
}

void add_estimation(CLI::App* app, Flags& f) {
    f.opts["grid-size"] = app->add_option("--grid-size", f.grid_size, "Points on the lambda grid")->check(CLI::Range(2, 1000000));
    f.opts["no-bias-correction"] = app->add_flag("--no-bias-correction", f.no_bias, "Skip the bias-corrected intervals");
    f.opts["lambda"] = app->add_option("--lambda", f.lambda, "Fixed lambda_n instead of BIC")->check(CLI::NonNegativeNumber);
    auto* r = app->add_flag("--robust", f.robust, "Sandwich covariance (default)");
    auto* c = app->add_flag("--classical", f.classical, "Homoskedastic covariance");
    r->excludes(c);
    f.opts["robust"] = r;
    f.opts["classical"] = c;
}

void add_data(CLI::App* app, Flags& f) {
    f.opts["data"] = app->add_option("--data", f.data, "CSV file with a header row");
    f.opts["response"] = app->add_option("--response", f.response, "Response column (default: first data column)");
    f.opts["date-column"] = app->add_option("--date-column", f.date_column, "Column holding date labels");
    f.opts["w"] = app->add_option("--w", f.w, "Contemporaneous regressors")->delimiter(',');
    f.opts["x"] = app->add_option("--x", f.x, "Regressors entered at lag one")->delimiter(',');
    f.opts["ar-lags"] = app->add_option("--ar-lags", f.ar_lags, "Autoregressive lags of the response");
    f.opts["intercept"] = app->add_flag("--intercept", f.intercept, "Demean response and regressors");
    f.opts["standardize"] = app->add_flag("--standardize", f.standardize, "Scale regressors to unit RMS before fitting");
}

void add_dgp(CLI::App* app, Flags& f) {
    f.opts["preset"] = app->add_option("--preset", f.preset, "setting1 ... setting5");
    f.opts["n"] = app->add_option("--n", f.n, "Effective sample size")->check(CLI::PositiveNumber);
}

RunConfig base_config(const Flags& f, const std::string& command) {
    RunConfig c;
    if (f.given("config")) {
        c = from_document(ConfigDocument::load(f.config));
        if (!c.command.empty() && c.command != command)
            throw UsageError("config '" + f.config + "' was written by '" + c.command + "', not '" + command + "'");
    } else if (const char* env = std::getenv("ALASSO_SEED")) {
        std::uint64_t s = 0;
        const std::string_view sv = detail::trim(env);
        const auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), s);
        if (sv.empty() || ec != std::errc{} || ptr != sv.data() + sv.size())
            throw UsageError("ALASSO_SEED must be a nonnegative integer");
        c.seed = s;
    }
    c.command = command;
    if (f.given("seed")) c.seed = f.seed;
    if (f.given("alpha")) c.alpha = f.alpha;
    if (f.given("workers")) c.workers = f.workers;
    else if (!f.given("config")) c.workers = default_workers();
    if (f.given("out")) c.out = f.out;
    if (f.given("grid-size")) c.grid_size = f.grid_size;
    if (f.given("no-bias-correction")) c.bias = BiasMode::Off;
    if (f.given("lambda")) c.lambda = f.lambda;
    if (f.given("robust")) c.covariance = CovarianceKind::Robust;
    if (f.given("classical")) c.covariance = CovarianceKind::Classical;
    if (f.given("intercept")) c.model.include_intercept = true;
    if (f.given("standardize")) c.standardize = true;
    return c;
}

void apply_data_flags(const Flags& f, RunConfig& c) {
    if (f.given("data")) c.data.path = f.data;
    if (f.given("response")) c.data.response = f.response;
    if (f.given("date-column")) c.data.date_column = f.date_column;
    if (f.given("w")) c.data.contemporaneous = f.w;
    if (f.given("x")) c.data.lagged = f.x;
    if (f.given("ar-lags")) c.model.ar_lags = f.ar_lags;
    if (c.data.path.empty()) throw UsageError("--data is required");
}

// Reads the CSV and, when no regressors were named, treats every remaining
// column as a lagged regressor.
TimeSeriesDataset load_dataset(RunConfig& c) {
    ColumnMapping probe;
    probe.date_column = c.data.date_column;
    const RawSeriesTable all = read_csv(c.data.path, probe);
    if (all.cols() == 0) throw DataError(c.data.path + ": no data columns");
    if (c.data.response.empty()) c.data.response = all.names.front();
    if (c.data.contemporaneous.empty() && c.data.lagged.empty()) {
        for (const auto& name : all.names)
            if (name != c.data.response) c.data.lagged.push_back(name);
    }
    ColumnMapping mapping;
    mapping.date_column = c.data.date_column;
    mapping.columns.push_back(c.data.response);
    for (const auto& s : c.data.contemporaneous) mapping.columns.push_back(s);
    for (const auto& s : c.data.lagged) mapping.columns.push_back(s);
    const RawSeriesTable raw = read_csv(c.data.path, mapping);
    ModelSpec spec = c.model;
    spec.contemporaneous = c.data.contemporaneous.size();
    spec.lagged = c.data.lagged.size();
    spec.variable_names.clear();
    c.model.contemporaneous = spec.contemporaneous;
    c.model.lagged = spec.lagged;
    return build_design(raw, spec, c.data.path);
}

FitOptions fit_options(const RunConfig& c) {
    FitOptions o;
    o.alpha = c.alpha;
    o.grid_size = c.grid_size;
    o.lambda = c.lambda;
    o.bias_correction = c.bias != BiasMode::Off;
    o.covariance = c.covariance;
    o.standardize = c.standardize;
    o.solver = c.solver;
    o.theta0 = c.theta0;
    return o;
}

int cmd_fit(const Flags& f) {
    RunConfig c = base_config(f, "fit");
    apply_data_flags(f, c);
    const TimeSeriesDataset data = load_dataset(c);
    const FitReport rep = run_fit(data, fit_options(c));
    const std::string text = render_fit_report(rep);
    std::cout << text;
    if (!c.out.empty()) {
        const fs::path dir(c.out);
        write_validated(dir / "report.txt", text);
        write_validated(dir / "estimates.csv", render_estimates_csv(rep));
        write_validated(dir / "config.snapshot", snapshot(c));
    }
    return kOk;
}

int cmd_test(const Flags& f) {
    RunConfig c = base_config(f, "test");
    apply_data_flags(f, c);
    if (f.given("theta0")) c.theta0 = f.theta0;
    if (f.given("coef")) c.test_columns = f.coefs;
    const TimeSeriesDataset data = load_dataset(c);
    const FitReport rep = run_fit(data, fit_options(c));
    std::vector<std::size_t> cols;
    if (c.test_columns.empty()) {
        for (std::size_t i = 0; i < rep.rows.size(); ++i) cols.push_back(i);
    } else {
        for (const auto& name : c.test_columns) {
            std::size_t k = 0;
            while (k < rep.rows.size() && rep.rows[k].name != name) ++k;
            if (k == rep.rows.size()) throw UsageError("unknown coefficient '" + name + "'");
            cols.push_back(k);
        }
    }
    const std::string text = render_tests_text(rep, cols);
    std::cout << text;
    if (!c.out.empty()) {
        const fs::path dir(c.out);
        write_validated(dir / "tests.txt", text);
        write_validated(dir / "tests.csv", render_tests_csv(rep, cols));
        write_validated(dir / "config.snapshot", snapshot(c));
    }
    return kOk;
}

void apply_dgp_flags(const Flags& f, RunConfig& c) {
    if (f.given("preset")) {
        c.dgp = preset(f.preset, f.given("n") ? f.n : c.dgp.n, c.seed);
    } else if (c.dgp.theta_true.size() == 0) {
        throw UsageError("--preset (or --config with a [dgp] section) is required");
    } else if (f.given("n")) {
        c.dgp.n = f.n;
    }
    c.dgp.seed = c.seed;
}

int cmd_mc(const Flags& f) {
    RunConfig c = base_config(f, "mc");
    apply_dgp_flags(f, c);
    if (f.given("N")) c.replications = f.replications;
    if (c.out.empty())
        c.out = "run-" + c.dgp.name + "-n" + std::to_string(c.dgp.n) + "-N" + std::to_string(c.replications) +
                "-seed" + std::to_string(c.seed);

    McExperiment exp;
    exp.dgp = c.dgp;
    exp.replications = c.replications;
    exp.alpha = c.alpha;
    exp.grid_size = c.grid_size;
    exp.bias = c.bias;
    exp.covariance = c.covariance;
    exp.solver = c.solver;
    exp.max_failure_fraction = c.max_failure_fraction;
    exp.lambda = c.lambda;
    const McSummary s = run_experiment(exp, c.workers);
    write_run(c.out, s, snapshot(c));
    std::cout << render_table(s, TableFormat::PanelA) << '\n' << render_table(s, TableFormat::PanelB);
    std::cout << "\nwrote " << (fs::path(c.out) / "summary.csv").string() << '\n';
    return kOk;
}

int cmd_quantile_curve(const Flags& f) {
    RunConfig c = base_config(f, "quantile-curve");
    if (f.given("lambda0-start")) c.quantile.start = f.l0_start;
    if (f.given("lambda0-stop")) c.quantile.stop = f.l0_stop;
    if (f.given("lambda0-step")) c.quantile.step = f.l0_step;
    if (f.given("c")) c.quantile.c = f.c;
    if (f.given("omega")) c.quantile.omega = f.omega;
    if (f.given("draws")) c.quantile.draws = f.draws;
    const std::vector<double> grid = c.quantile.points();

    std::ostringstream csv;
    csv << "lambda0,coordinate,quantile\n";
    for (double l0 : grid) {
        LimitDistSpec spec;
        spec.c = Eigen::MatrixXd::Constant(1, 1, c.quantile.c);
        spec.omega = Eigen::MatrixXd::Constant(1, 1, c.quantile.omega);
        spec.lambda0 = Eigen::VectorXd::Constant(1, l0);
        spec.draws = c.quantile.draws;
        spec.seed = c.seed;
        const Eigen::VectorXd q = limit_quantiles(spec, c.alpha, c.workers);
        csv << detail::format_double(l0) << ",1," << detail::format_double(q(0)) << '\n';
    }
    if (c.out.empty()) {
        std::cout << csv.str();
    } else {
        const fs::path dir(c.out);
        write_validated(dir / "quantile_curve.csv", csv.str());
        write_validated(dir / "config.snapshot", snapshot(c));
        std::cout << "wrote " << (dir / "quantile_curve.csv").string() << '\n';
    }
    return kOk;
}

int cmd_simulate(const Flags& f) {
    RunConfig c = base_config(f, "simulate");
    apply_dgp_flags(f, c);
    if (f.given("replication")) c.dgp.replication = f.replication;
    if (c.out.empty()) throw UsageError("--out FILE is required");
    std::ostringstream csv;
    write_csv(csv, simulate_raw(c.dgp));
    write_validated(c.out, csv.str());
    write_validated(c.out + ".snapshot", snapshot(c));
    std::cout << "wrote " << c.out << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive lasso estimation and inference for time-series regressions"};
    app.require_subcommand(1);

    Flags ffit;
    auto* fit = app.add_subcommand("fit", "Fit a model to a CSV file and report estimates");
    add_common(fit, ffit);
    add_estimation(fit, ffit);
    add_data(fit, ffit);

    Flags ftest;
    auto* test = app.add_subcommand("test", "Test H0: theta_i = theta0 for each coefficient");
    add_common(test, ftest);
    add_estimation(test, ftest);
    add_data(test, ftest);
    ftest.opts["theta0"] = test->add_option("--theta0", ftest.theta0, "Hypothesized value");
    ftest.opts["coef"] = test->add_option("--coef", ftest.coefs, "Coefficient(s) to test (default: all)")->delimiter(',');

    Flags fmc;
    auto* mc = app.add_subcommand("mc", "Monte Carlo coverage and rejection frequencies");
    add_common(mc, fmc);
    add_estimation(mc, fmc);
    add_dgp(mc, fmc);
    fmc.opts["N"] = mc->add_option("--N", fmc.replications, "Replications")->check(CLI::PositiveNumber);
    mc->get_option("--lambda")->description("Fixed lambda_n in every replication instead of BIC");

    Flags fqc;
    auto* qc = app.add_subcommand("quantile-curve", "Quantiles of the scalar limit law over a lambda0 grid");
    add_common(qc, fqc);
    fqc.opts["lambda0-start"] = qc->add_option("--lambda0-start", fqc.l0_start, "First lambda0");
    fqc.opts["lambda0-stop"] = qc->add_option("--lambda0-stop", fqc.l0_stop, "Last lambda0");
    fqc.opts["lambda0-step"] = qc->add_option("--lambda0-step", fqc.l0_step, "Grid step");
    fqc.opts["c"] = qc->add_option("--c", fqc.c, "C (scalar)")->check(CLI::PositiveNumber);
    fqc.opts["omega"] = qc->add_option("--omega", fqc.omega, "Omega (scalar)")->check(CLI::NonNegativeNumber);
    fqc.opts["draws"] = qc->add_option("--draws", fqc.draws, "Monte Carlo draws")->check(CLI::Range(1000, 100000000));

    Flags fsim;
    auto* sim = app.add_subcommand("simulate", "Write one simulated dataset as CSV");
    add_common(sim, fsim);
    add_dgp(sim, fsim);
    fsim.opts["replication"] = sim->add_option("--replication", fsim.replication, "Replication index (RNG substream)");
    sim->get_option("--out")->description("Output CSV file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*fit) return cmd_fit(ffit);
        if (*test) return cmd_test(ftest);
        if (*mc) return cmd_mc(fmc);
        if (*qc) return cmd_quantile_curve(fqc);
        if (*sim) return cmd_simulate(fsim);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const ContractError& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kUsage;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kIo;
    } catch (const SingularDesignError& e) {
        std::cerr << "rank error: " << e.what() << '\n';
        return kRank;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence error: " << e.what() << '\n';
        return kConvergence;
    } catch (const McAbortError& e) {
        std::cerr << "Monte Carlo aborted: " << e.what() << '\n';
        return kMcAbort;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}
