#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "alasso/dataset.hpp"
#include "alasso/dgp.hpp"
#include "alasso/error.hpp"
#include "alasso/estimators.hpp"
#include "alasso/inference.hpp"
#include "alasso/parallel.hpp"

namespace alasso {

enum class BiasMode { Both, On, Off };

inline const char* to_string(BiasMode m) noexcept {
    switch (m) {
        case BiasMode::On: return "on";
        case BiasMode::Off: return "off";
        default: return "both";
    }
}

struct McExperiment {
    DgpConfig dgp;
    std::size_t replications = 5000;
    double alpha = 0.05;
    std::size_t grid_size = 100;
    BiasMode bias = BiasMode::Both;
    CovarianceKind covariance = CovarianceKind::Robust;
    SolverOptions solver;
    double max_failure_fraction = 0.01;
    std::optional<double> lambda;  // fixed lambda_n instead of the BIC path

    void validate() const {
        dgp.validate();
        if (lambda && !(*lambda >= 0.0 && std::isfinite(*lambda)))
            throw ContractError("fixed lambda must be finite and nonnegative");
        if (replications < 1) throw ContractError("replications must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("alpha must lie in (0, 1)");
        if (grid_size < 2) throw ContractError("grid_size must be >= 2");
    }

    bool wants_uncorrected() const noexcept { return bias != BiasMode::On; }
    bool wants_corrected() const noexcept { return bias != BiasMode::Off; }
};

/// Raised when more than the tolerated share of replications fail.
class McAbortError : public Error {
public:
    using Error::Error;
};

/// Exact counts per design column; frequencies are formed once, at read time.
struct CoefficientSummary {
    std::size_t index = 0;
    std::string label;
    double true_value = 0.0;
    bool active = false;
    std::size_t covered_without_bias = 0;
    std::size_t covered_with_bias = 0;
    std::size_t rejections = 0;
};

struct McSummary {
    std::string experiment;
    std::size_t n = 0;
    double alpha = 0.05;
    BiasMode bias = BiasMode::Both;
    std::size_t replications = 0;  // requested N
    std::size_t failures = 0;
    std::size_t exact_selections = 0;
    std::size_t active_size_total = 0;
    double lambda_total = 0.0;
    std::vector<CoefficientSummary> cells;
    std::vector<std::string> failure_messages;  // first few, for diagnostics
    std::string corr_fixture;                   // covariate correlation fixture, if any

    std::size_t successes() const noexcept { return replications - failures; }

    double frequency(std::size_t count) const noexcept {
        return successes() == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(successes());
    }
    double mc_standard_error(double f) const noexcept {
        return successes() == 0 ? 0.0 : std::sqrt(f * (1.0 - f) / static_cast<double>(successes()));
    }
    double coverage_without_bias(const CoefficientSummary& c) const { return frequency(c.covered_without_bias); }
    double coverage_with_bias(const CoefficientSummary& c) const { return frequency(c.covered_with_bias); }
    double rejection_frequency(const CoefficientSummary& c) const { return frequency(c.rejections); }
    double selection_accuracy() const { return frequency(exact_selections); }
    double mean_active_size() const { return successes() == 0 ? 0.0 : static_cast<double>(active_size_total) / static_cast<double>(successes()); }
    double mean_lambda() const { return successes() == 0 ? 0.0 : lambda_total / static_cast<double>(successes()); }

    const CoefficientSummary& cell(const std::string& label) const {
        for (const auto& c : cells)
            if (c.label == label) return c;
        throw ContractError("no coefficient labelled '" + label + "'");
    }

    /// Invariants: frequencies in [0, 1], counts bounded by successful replications.
    void check() const {
        if (failures > replications) throw ContractError("McSummary: failures exceed replications");
        if (exact_selections > successes()) throw ContractError("McSummary: selection count exceeds N");
        for (const auto& c : cells) {
            if (c.covered_with_bias > successes() || c.covered_without_bias > successes() ||
                c.rejections > successes())
                throw ContractError("McSummary: count exceeds successful replications for " + c.label);
        }
    }
};

/// Outcome of one replication, merged by index after all replications finish.
struct ReplicationOutcome {
    bool failed = false;
    std::string error;
    std::vector<unsigned char> covered_without_bias;
    std::vector<unsigned char> covered_with_bias;
    std::vector<unsigned char> rejected;
    std::size_t active_size = 0;
    bool exact_selection = false;
    double lambda = 0.0;
};

struct Selection {
    FitResult ols;
    FitResult fit;
    PenaltySpec penalty;
};

inline Selection select_fit(const TimeSeriesDataset& data, const McExperiment& exp) {
    Selection sel;
    if (exp.lambda) {
        const GramSystem gs = GramSystem::of(data);
        sel.ols = ols_fit(data, gs);
        sel.penalty = PenaltySpec::from_pilot(sel.ols.theta, *exp.lambda);
        sel.fit = adaptive_lasso_fit(data, gs, sel.penalty, sel.ols.theta, exp.solver);
        return sel;
    }
    PathOptions popts;
    popts.grid_size = exp.grid_size;
    popts.solver = exp.solver;
    BicPath path = fit_path(data, popts);
    sel.fit = path.selected();
    sel.ols = std::move(path.ols);
    sel.penalty = path.penalty;
    return sel;
}

/// simulate -> BIC path -> intervals for the true-active coefficients and the
/// zero test for every coefficient. A true-active coefficient dropped by the
/// selected fit counts as not covered.
inline ReplicationOutcome run_replication(const McExperiment& exp, std::uint64_t replication) {
    ReplicationOutcome out;
    const auto p = static_cast<std::size_t>(exp.dgp.theta_true.size());
    out.covered_without_bias.assign(p, 0);
    out.covered_with_bias.assign(p, 0);
    out.rejected.assign(p, 0);
    try {
        DgpConfig cfg = exp.dgp;
        cfg.replication = replication;
        const TimeSeriesDataset data = simulate(cfg);
        const Selection sel = select_fit(data, exp);
        const FitResult& fit = sel.fit;
        if (!fit.converged) throw ConvergenceError("selected fit did not converge");

        const MomentEstimates full = estimate_moments(data, sel.ols.residuals, {}, exp.covariance);
        for (std::size_t i = 0; i < p; ++i)
            out.rejected[i] = test_zero(fit, full, 0.0, i, exp.alpha).reject ? 1 : 0;

        out.active_size = fit.active_set.size();
        out.lambda = sel.penalty.lambda;
        std::vector<std::size_t> truth;
        for (std::size_t i = 0; i < p; ++i)
            if (exp.dgp.theta_true(static_cast<Eigen::Index>(i)) != 0.0) truth.push_back(i);
        out.exact_selection = fit.active_set == truth;

        if (!fit.active_set.empty()) {
            const MomentEstimates act = estimate_moments(data, fit.residuals, fit.active_set, exp.covariance);
            std::optional<BiasCorrection> bias;
            if (exp.wants_corrected()) bias = bias_correction(fit, data, sel.penalty);
            for (auto i : truth) {
                if (!act.position(i)) continue;
                const double target = exp.dgp.theta_true(static_cast<Eigen::Index>(i));
                if (exp.wants_uncorrected())
                    out.covered_without_bias[i] = confidence_interval(fit, act, nullptr, exp.alpha, i).covers(target);
                if (bias)
                    out.covered_with_bias[i] = confidence_interval(fit, act, &*bias, exp.alpha, i).covers(target);
            }
        }
    } catch (const Error& e) {
        out = ReplicationOutcome{};
        out.failed = true;
        out.error = e.what();
    }
    return out;
}

/// Run all replications; the summary depends only on (experiment, seed), not on `workers`.
inline McSummary run_experiment(const McExperiment& exp, std::size_t workers = 1) {
    exp.validate();
    std::vector<ReplicationOutcome> outcomes(exp.replications);
    parallel_for(exp.replications, workers,
                 [&](std::size_t r) { outcomes[r] = run_replication(exp, r); });

    McSummary s;
    s.experiment = exp.dgp.name;
    s.n = exp.dgp.n;
    s.corr_fixture = exp.dgp.corr_fixture;
    s.alpha = exp.alpha;
    s.bias = exp.bias;
    s.replications = exp.replications;
    const auto labels = coefficient_labels(exp.dgp.model);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        CoefficientSummary c;
        c.index = i;
        c.label = labels[i];
        c.true_value = exp.dgp.theta_true(static_cast<Eigen::Index>(i));
        c.active = c.true_value != 0.0;
        s.cells.push_back(std::move(c));
    }
    for (const auto& o : outcomes) {
        if (o.failed) {
            ++s.failures;
            if (s.failure_messages.size() < 5) s.failure_messages.push_back(o.error);
            continue;
        }
        for (std::size_t i = 0; i < s.cells.size(); ++i) {
            s.cells[i].covered_without_bias += o.covered_without_bias[i];
            s.cells[i].covered_with_bias += o.covered_with_bias[i];
            s.cells[i].rejections += o.rejected[i];
        }
        s.exact_selections += o.exact_selection ? 1 : 0;
        s.active_size_total += o.active_size;
        s.lambda_total += o.lambda;
    }
    s.check();
    if (static_cast<double>(s.failures) > exp.max_failure_fraction * static_cast<double>(exp.replications)) {
        std::string msg = "Monte Carlo run aborted: " + std::to_string(s.failures) + " of " +
                          std::to_string(exp.replications) + " replications failed";
        if (!s.failure_messages.empty()) msg += " (first: " + s.failure_messages.front() + ")";
        throw McAbortError(msg);
    }
    return s;
}

enum class TableFormat { Csv, PanelA, PanelB };

namespace detail {

inline std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

inline std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

inline std::string cell_text(const McSummary& s, std::size_t count) {
    const double f = s.frequency(count);
    return fixed4(f) + " (" + fixed4(s.mc_standard_error(f)) + ")";
}

inline std::string header_text(const CoefficientSummary& c) {
    return c.label + "=" + short_number(c.true_value);
}

inline std::string diagnostics_text(const McSummary& s) {
    std::ostringstream o;
    o << "replications " << s.replications << ", failures " << s.failures
      << ", P(selected = true set) " << fixed4(s.selection_accuracy())
      << ", mean |active set| " << fixed4(s.mean_active_size())
      << ", mean selected lambda " << fixed4(s.mean_lambda()) << '\n';
    if (!s.corr_fixture.empty())
        o << "covariate correlation: fixture " << s.corr_fixture
          << " (one admissible block design over {-0.5, 0, 0.5, 0.9})\n";
    return o.str();
}

inline std::string rstrip_lines(const std::string& text) {
    std::string out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::size_t last = end;
        while (last > start && text[last - 1] == ' ') --last;
        out.append(text, start, last - start);
        if (end < text.size()) out += '\n';
        start = end + 1;
    }
    return out;
}

/// Panel B column groups: by coefficient block when every block fits in seven
/// columns, otherwise sequential chunks of seven.
inline std::vector<std::vector<std::size_t>> panel_b_groups(const McSummary& s) {
    std::vector<std::vector<std::size_t>> blocks;
    std::string prev;
    for (std::size_t i = 0; i < s.cells.size(); ++i) {
        std::string prefix = s.cells[i].label;
        while (!prefix.empty() && std::isdigit(static_cast<unsigned char>(prefix.back()))) prefix.pop_back();
        if (blocks.empty() || prefix != prev) blocks.emplace_back();
        blocks.back().push_back(i);
        prev = prefix;
    }
    bool fits = true;
    for (const auto& b : blocks) fits = fits && b.size() <= 7;
    if (fits) return blocks;
    std::vector<std::vector<std::size_t>> chunks;
    for (std::size_t i = 0; i < s.cells.size(); ++i) {
        if (i % 7 == 0) chunks.emplace_back();
        chunks.back().push_back(i);
    }
    return chunks;
}

}  // namespace detail

inline constexpr const char* kSummaryCsvHeader =
    "label,index,true_value,active,successes,coverage_without_bias,coverage_without_bias_se,"
    "coverage_with_bias,coverage_with_bias_se,rejection_frequency,rejection_frequency_se";

inline std::string render_table(const McSummary& s, TableFormat format) {
    std::ostringstream o;
    const std::size_t w = 18;
    switch (format) {
        case TableFormat::Csv: {
            o << kSummaryCsvHeader << '\n';
            auto num = [](double v) { return detail::format_double(v); };
            for (const auto& c : s.cells) {
                o << c.label << ',' << c.index << ',' << num(c.true_value) << ',' << (c.active ? 1 : 0) << ','
                  << s.successes() << ',';
                if (c.active && s.bias != BiasMode::On) {
                    const double f = s.coverage_without_bias(c);
                    o << num(f) << ',' << num(s.mc_standard_error(f)) << ',';
                } else {
                    o << ",,";
                }
                if (c.active && s.bias != BiasMode::Off) {
                    const double f = s.coverage_with_bias(c);
                    o << num(f) << ',' << num(s.mc_standard_error(f)) << ',';
                } else {
                    o << ",,";
                }
                const double r = s.rejection_frequency(c);
                o << num(r) << ',' << num(s.mc_standard_error(r)) << '\n';
            }
            break;
        }
        case TableFormat::PanelA: {
            o << "Monte Carlo: " << s.experiment << ", n = " << s.n << ", N = " << s.replications << '\n';
            o << "Panel A: empirical coverages of " << detail::fixed4(1.0 - s.alpha)
              << "-confidence intervals for the active variables (MC standard errors in parentheses)\n\n";
            o << detail::pad("", 16);
            for (const auto& c : s.cells)
                if (c.active) o << detail::pad(detail::header_text(c), w);
            o << '\n';
            if (s.bias != BiasMode::On) {
                o << detail::pad("uncorrected", 16);
                for (const auto& c : s.cells)
                    if (c.active) o << detail::pad(detail::cell_text(s, c.covered_without_bias), w);
                o << '\n';
            }
            if (s.bias != BiasMode::Off) {
                o << detail::pad("bias-corrected", 16);
                for (const auto& c : s.cells)
                    if (c.active) o << detail::pad(detail::cell_text(s, c.covered_with_bias), w);
                o << '\n';
            }
            o << '\n' << detail::diagnostics_text(s);
            break;
        }
        case TableFormat::PanelB: {
            o << "Monte Carlo: " << s.experiment << ", n = " << s.n << ", N = " << s.replications << '\n';
            o << "Panel B: empirical rejection frequencies of H0: theta_i = 0 at level "
              << detail::short_number(s.alpha) << " (MC standard errors in parentheses)\n";
            for (const auto& group : detail::panel_b_groups(s)) {
                o << '\n' << detail::pad("", 16);
                for (auto i : group) o << detail::pad(detail::header_text(s.cells[i]), w);
                o << '\n' << detail::pad("rejection", 16);
                for (auto i : group) o << detail::pad(detail::cell_text(s, s.cells[i].rejections), w);
                o << '\n';
            }
            o << '\n' << detail::diagnostics_text(s);
            break;
        }
    }
    return format == TableFormat::Csv ? o.str() : detail::rstrip_lines(o.str());
}

/// One parsed row of summary.csv; absent cells are std::nullopt.
struct SummaryCsvRow {
    std::string label;
    std::vector<std::optional<double>> values;  // every column after the label
};

inline std::vector<SummaryCsvRow> parse_summary_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kSummaryCsvHeader) throw DataError("summary.csv: unexpected header");
    std::vector<SummaryCsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 11) throw DataError("summary.csv: expected 11 fields");
        SummaryCsvRow row;
        row.label = fields[0];
        for (std::size_t k = 1; k < fields.size(); ++k) {
            if (fields[k].empty()) {
                row.values.emplace_back(std::nullopt);
            } else {
                auto v = detail::parse_double(fields[k]);
                if (!v) throw DataError("summary.csv: unparsable value '" + fields[k] + "'");
                row.values.emplace_back(*v);
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Writes summary.csv, panelA.txt, panelB.txt and config.snapshot under `dir`,
/// then re-reads summary.csv and checks it against the in-memory table.
inline void write_run(const std::filesystem::path& dir, const McSummary& s, const std::string& snapshot) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create run directory '" + dir.string() + "': " + ec.message());
    auto put = [&](const char* name, const std::string& text) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw IoError("cannot write '" + (dir / name).string() + "'");
        f << text;
        if (!f) throw IoError("failed writing '" + (dir / name).string() + "'");
    };
    const std::string csv = render_table(s, TableFormat::Csv);
    put("summary.csv", csv);
    put("panelA.txt", render_table(s, TableFormat::PanelA));
    put("panelB.txt", render_table(s, TableFormat::PanelB));
    put("config.snapshot", snapshot);

    std::ifstream back(dir / "summary.csv", std::ios::binary);
    std::stringstream buf;
    buf << back.rdbuf();
    if (buf.str() != csv) throw IoError("summary.csv read-back mismatch");
    if (parse_summary_csv(buf).size() != s.cells.size()) throw IoError("summary.csv read-back row count mismatch");
}

}  // namespace alasso
