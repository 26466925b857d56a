#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "alasso/dataset.hpp"
#include "alasso/dgp.hpp"
#include "alasso/error.hpp"
#include "alasso/estimators.hpp"
#include "alasso/inference.hpp"
#include "alasso/mc.hpp"
#include "alasso/rng.hpp"

namespace alasso {

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Flat `[section]` / `key = value` text. Sections and keys keep insertion order.
class ConfigDocument {
public:
    struct Section {
        std::string name;
        std::vector<std::pair<std::string, std::string>> entries;
    };

    void set(const std::string& section, const std::string& key, std::string value) {
        Section& s = section_ref(section);
        for (auto& [k, v] : s.entries) {
            if (k == key) {
                v = std::move(value);
                return;
            }
        }
        s.entries.emplace_back(key, std::move(value));
    }

    std::optional<std::string> get(const std::string& section, const std::string& key) const {
        for (const auto& s : sections_) {
            if (s.name != section) continue;
            for (const auto& [k, v] : s.entries)
                if (k == key) return v;
        }
        return std::nullopt;
    }

    bool has_section(const std::string& section) const {
        for (const auto& s : sections_)
            if (s.name == section) return true;
        return false;
    }

    const std::vector<Section>& sections() const noexcept { return sections_; }

    std::string render() const {
        std::ostringstream o;
        bool first = true;
        for (const auto& s : sections_) {
            if (!first) o << '\n';
            first = false;
            o << '[' << s.name << "]\n";
            for (const auto& [k, v] : s.entries) o << k << " = " << v << '\n';
        }
        return o.str();
    }

    static ConfigDocument parse(std::istream& in, const std::string& source = "<config>") {
        ConfigDocument doc;
        std::string line;
        std::string current;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string_view t = detail::trim(line);
            if (t.empty() || t.front() == '#' || t.front() == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']' || t.size() < 3)
                    throw ConfigError(source + ":" + std::to_string(lineno) + ": malformed section header");
                current = std::string(detail::trim(t.substr(1, t.size() - 2)));
                doc.section_ref(current);
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
            if (current.empty())
                throw ConfigError(source + ":" + std::to_string(lineno) + ": entry outside a section");
            const std::string key(detail::trim(t.substr(0, eq)));
            if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
            if (doc.get(current, key))
                throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            doc.set(current, key, std::string(detail::trim(t.substr(eq + 1))));
        }
        return doc;
    }

    static ConfigDocument load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config '" + path + "'");
        return parse(in, path);
    }

private:
    Section& section_ref(const std::string& name) {
        for (auto& s : sections_)
            if (s.name == name) return s;
        sections_.push_back(Section{name, {}});
        return sections_.back();
    }

    std::vector<Section> sections_;
};

namespace detail {

inline std::string format_bool(bool b) { return b ? "true" : "false"; }

inline std::string join_doubles(const Eigen::VectorXd& v, char sep = ',') {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) s += sep;
        s += format_double(v(i));
    }
    return s;
}

inline std::string join_strings(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += v[i];
    }
    return s;
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace detail

/// Typed access to a ConfigDocument; every failure names section and key.
class ConfigReader {
public:
    explicit ConfigReader(const ConfigDocument& doc) : doc_(doc) {}
    explicit ConfigReader(ConfigDocument&&) = delete;

    std::optional<std::string> text(const std::string& section, const std::string& key) const {
        return doc_.get(section, key);
    }

    std::optional<double> number(const std::string& section, const std::string& key) const {
        const auto v = doc_.get(section, key);
        if (!v) return std::nullopt;
        const auto d = detail::parse_double(*v);
        if (!d) throw bad(section, key, *v, "a number");
        return d;
    }

    std::optional<std::uint64_t> integer(const std::string& section, const std::string& key) const {
        const auto v = doc_.get(section, key);
        if (!v) return std::nullopt;
        const std::string_view s = detail::trim(*v);
        std::uint64_t out = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
            throw bad(section, key, *v, "a nonnegative integer");
        return out;
    }

    std::optional<bool> boolean(const std::string& section, const std::string& key) const {
        const auto v = doc_.get(section, key);
        if (!v) return std::nullopt;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw bad(section, key, *v, "true or false");
    }

    std::optional<Eigen::VectorXd> vector(const std::string& section, const std::string& key,
                                          char sep = ',') const {
        const auto v = doc_.get(section, key);
        if (!v) return std::nullopt;
        const auto parts = detail::split_list(*v, sep);
        Eigen::VectorXd out(static_cast<Eigen::Index>(parts.size()));
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const auto d = detail::parse_double(parts[i]);
            if (!d) throw bad(section, key, *v, "a comma-separated list of numbers");
            out(static_cast<Eigen::Index>(i)) = *d;
        }
        return out;
    }

private:
    static ConfigError bad(const std::string& section, const std::string& key, const std::string& value,
                           const char* expected) {
        return ConfigError("[" + section + "] " + key + " = '" + value + "': expected " + expected);
    }

    const ConfigDocument& doc_;
};

/// Where the fit/test commands read their data.
struct DataSource {
    std::string path;
    std::optional<std::string> date_column;
    std::string response;
    std::vector<std::string> contemporaneous;  // W columns
    std::vector<std::string> lagged;           // X columns, entered at lag one
};

struct QuantileGrid {
    double start = 0.0;
    double stop = 4.0;
    double step = 0.05;
    double c = 1.0;
    double omega = 1.0;
    std::size_t draws = 100000;

    std::vector<double> points() const {
        if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step) || !(step > 0.0) ||
            stop < start || start < 0.0)
            throw ConfigError("invalid lambda0 grid: need 0 <= start <= stop and step > 0");
        const double span = (stop - start) / step;
        const auto count = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
        if (count > 1000000) throw ConfigError("lambda0 grid has too many points");
        std::vector<double> g(count);
        for (std::size_t k = 0; k < count; ++k) g[k] = start + static_cast<double>(k) * step;
        if (std::abs(g.back() - stop) < 1e-9 * std::max(1.0, std::abs(stop))) g.back() = stop;
        return g;
    }
};

/// Fully resolved settings of one CLI invocation.
struct RunConfig {
    std::string command;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::size_t grid_size = 100;
    std::size_t workers = 1;
    BiasMode bias = BiasMode::Both;
    CovarianceKind covariance = CovarianceKind::Robust;
    std::optional<double> lambda;
    bool standardize = false;
    std::string out;
    SolverOptions solver;

    DataSource data;
    ModelSpec model;
    double theta0 = 0.0;
    std::vector<std::string> test_columns;  // empty: every coefficient

    DgpConfig dgp;
    std::size_t replications = 5000;
    double max_failure_fraction = 0.01;

    QuantileGrid quantile;
};

inline const char* bias_key(BiasMode m) { return to_string(m); }

inline BiasMode parse_bias_mode(const std::string& s) {
    if (s == "both") return BiasMode::Both;
    if (s == "on") return BiasMode::On;
    if (s == "off") return BiasMode::Off;
    throw ConfigError("bias must be one of both, on, off (got '" + s + "')");
}

inline CovarianceKind parse_covariance(const std::string& s) {
    if (s == "robust") return CovarianceKind::Robust;
    if (s == "classical") return CovarianceKind::Classical;
    throw ConfigError("covariance must be robust or classical (got '" + s + "')");
}

namespace detail {

inline void write_dgp(ConfigDocument& doc, const DgpConfig& d) {
    const std::string s = "dgp";
    doc.set(s, "name", d.name);
    doc.set(s, "n", std::to_string(d.n));
    doc.set(s, "burn_in", std::to_string(d.burn_in));
    doc.set(s, "ar_lags", std::to_string(d.model.ar_lags));
    doc.set(s, "contemporaneous", std::to_string(d.model.contemporaneous));
    doc.set(s, "lagged", std::to_string(d.model.lagged));
    doc.set(s, "theta", join_doubles(d.theta_true));
    if (std::holds_alternative<GaussianErrors>(d.errors)) {
        doc.set(s, "errors", "gaussian");
    } else if (const auto* t = std::get_if<StudentTErrors>(&d.errors)) {
        doc.set(s, "errors", "student_t");
        doc.set(s, "nu", format_double(t->nu));
    } else if (const auto* g = std::get_if<GarchErrors>(&d.errors)) {
        doc.set(s, "errors", "garch");
        doc.set(s, "garch_omega", format_double(g->omega));
        doc.set(s, "garch_beta", format_double(g->beta));
        doc.set(s, "garch_alpha", format_double(g->alpha));
        doc.set(s, "innovation", g->innovation_nu ? "student_t" : "gaussian");
        if (g->innovation_nu) doc.set(s, "innovation_nu", format_double(*g->innovation_nu));
    }
    if (d.covariate_corr) {
        if (!d.corr_fixture.empty()) {
            doc.set(s, "corr_fixture", d.corr_fixture);
        } else {
            std::string rows;
            for (Eigen::Index r = 0; r < d.covariate_corr->rows(); ++r) {
                if (r) rows += ';';
                rows += join_doubles(d.covariate_corr->row(r).transpose());
            }
            doc.set(s, "corr", rows);
        }
    }
}

inline DgpConfig read_dgp(const ConfigReader& r) {
    const std::string s = "dgp";
    DgpConfig d;
    d.name = r.text(s, "name").value_or("custom");
    if (!r.text(s, "theta")) {
        // A bare preset reference.
        const auto n = r.integer(s, "n").value_or(800);
        d = preset(d.name, static_cast<std::size_t>(n), 0);
        if (auto b = r.integer(s, "burn_in")) d.burn_in = static_cast<std::size_t>(*b);
        return d;
    }
    d.n = static_cast<std::size_t>(r.integer(s, "n").value_or(800));
    d.burn_in = static_cast<std::size_t>(r.integer(s, "burn_in").value_or(500));
    d.model.ar_lags = static_cast<std::size_t>(r.integer(s, "ar_lags").value_or(0));
    d.model.contemporaneous = static_cast<std::size_t>(r.integer(s, "contemporaneous").value_or(0));
    d.model.lagged = static_cast<std::size_t>(r.integer(s, "lagged").value_or(0));
    d.theta_true = *r.vector(s, "theta");
    const std::string errors = r.text(s, "errors").value_or("gaussian");
    if (errors == "gaussian") {
        d.errors = GaussianErrors{};
    } else if (errors == "student_t") {
        d.errors = StudentTErrors{r.number(s, "nu").value_or(5.0)};
    } else if (errors == "garch") {
        GarchErrors g;
        g.omega = r.number(s, "garch_omega").value_or(g.omega);
        g.beta = r.number(s, "garch_beta").value_or(g.beta);
        g.alpha = r.number(s, "garch_alpha").value_or(g.alpha);
        const std::string inn = r.text(s, "innovation").value_or("gaussian");
        if (inn == "student_t") {
            g.innovation_nu = r.number(s, "innovation_nu").value_or(5.0);
        } else if (inn != "gaussian") {
            throw ConfigError("[dgp] innovation must be gaussian or student_t");
        }
        d.errors = g;
    } else {
        throw ConfigError("[dgp] errors must be gaussian, student_t or garch (got '" + errors + "')");
    }
    if (auto fx = r.text(s, "corr_fixture")) {
        if (*fx != kBlockCorrelationVersion)
            throw ConfigError("[dgp] unknown correlation fixture '" + *fx + "'");
        d.covariate_corr = block_correlation_v1();
        d.corr_fixture = *fx;
    } else if (auto rows = r.text(s, "corr")) {
        const auto parts = split_list(*rows, ';');
        const auto k = static_cast<Eigen::Index>(parts.size());
        Eigen::MatrixXd m(k, k);
        for (Eigen::Index i = 0; i < k; ++i) {
            const auto cells = split_list(parts[static_cast<std::size_t>(i)]);
            if (static_cast<Eigen::Index>(cells.size()) != k)
                throw ConfigError("[dgp] corr must be a square matrix with rows separated by ';'");
            for (Eigen::Index j = 0; j < k; ++j) {
                const auto v = parse_double(cells[static_cast<std::size_t>(j)]);
                if (!v) throw ConfigError("[dgp] corr has a non-numeric entry");
                m(i, j) = *v;
            }
        }
        d.covariate_corr = m;
    }
    try {
        d.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("[dgp] ") + e.what());
    }
    return d;
}

}  // namespace detail

/// Serialize everything needed to reproduce a run, plus generator identity.
inline ConfigDocument to_document(const RunConfig& c) {
    ConfigDocument doc;
    doc.set("run", "command", c.command);
    doc.set("run", "seed", std::to_string(c.seed));
    doc.set("run", "alpha", detail::format_double(c.alpha));
    doc.set("run", "workers", std::to_string(c.workers));
    if (!c.out.empty()) doc.set("run", "out", c.out);

    doc.set("rng", "identity", std::string(Rng::kIdentity));
    doc.set("rng", "version", std::to_string(Rng::kVersion));

    doc.set("estimation", "grid_size", std::to_string(c.grid_size));
    doc.set("estimation", "lambda", c.lambda ? detail::format_double(*c.lambda) : "bic");
    doc.set("estimation", "bias", bias_key(c.bias));
    doc.set("estimation", "covariance", to_string(c.covariance));
    doc.set("estimation", "standardize", detail::format_bool(c.standardize));
    doc.set("estimation", "solver_tol", detail::format_double(c.solver.tol));
    doc.set("estimation", "solver_max_iter", std::to_string(c.solver.max_iter));
    doc.set("estimation", "solver_polish", detail::format_bool(c.solver.polish));

    if (c.command == "fit" || c.command == "test") {
        doc.set("data", "path", c.data.path);
        if (c.data.date_column) doc.set("data", "date_column", *c.data.date_column);
        doc.set("data", "response", c.data.response);
        doc.set("data", "contemporaneous", detail::join_strings(c.data.contemporaneous));
        doc.set("data", "lagged", detail::join_strings(c.data.lagged));
        doc.set("model", "ar_lags", std::to_string(c.model.ar_lags));
        doc.set("model", "intercept", detail::format_bool(c.model.include_intercept));
        if (c.command == "test") {
            doc.set("test", "theta0", detail::format_double(c.theta0));
            doc.set("test", "columns", detail::join_strings(c.test_columns));
        }
    }
    if (c.command == "mc" || c.command == "simulate") {
        detail::write_dgp(doc, c.dgp);
        if (!c.dgp.corr_fixture.empty()) doc.set("fixtures", "correlation", c.dgp.corr_fixture);
        if (c.command == "simulate") doc.set("simulate", "replication", std::to_string(c.dgp.replication));
    }
    if (c.command == "mc") {
        doc.set("mc", "replications", std::to_string(c.replications));
        doc.set("mc", "max_failure_fraction", detail::format_double(c.max_failure_fraction));
    }
    if (c.command == "quantile-curve") {
        doc.set("quantile", "lambda0_start", detail::format_double(c.quantile.start));
        doc.set("quantile", "lambda0_stop", detail::format_double(c.quantile.stop));
        doc.set("quantile", "lambda0_step", detail::format_double(c.quantile.step));
        doc.set("quantile", "c", detail::format_double(c.quantile.c));
        doc.set("quantile", "omega", detail::format_double(c.quantile.omega));
        doc.set("quantile", "draws", std::to_string(c.quantile.draws));
    }
    return doc;
}

/// Inverse of to_document; absent keys keep RunConfig defaults.
inline RunConfig from_document(const ConfigDocument& doc) {
    const ConfigReader r(doc);
    RunConfig c;
    c.command = r.text("run", "command").value_or("");
    if (auto v = r.integer("run", "seed")) c.seed = *v;
    if (auto v = r.number("run", "alpha")) c.alpha = *v;
    if (auto v = r.integer("run", "workers")) c.workers = static_cast<std::size_t>(*v);
    if (auto v = r.text("run", "out")) c.out = *v;

    if (auto id = r.text("rng", "identity"); id && *id != Rng::kIdentity)
        throw ConfigError("config was produced with generator '" + *id + "', this build uses '" +
                          std::string(Rng::kIdentity) + "'");
    if (auto v = r.integer("rng", "version"); v && *v != static_cast<std::uint64_t>(Rng::kVersion))
        throw ConfigError("config was produced with generator version " + std::to_string(*v));

    if (auto v = r.integer("estimation", "grid_size")) c.grid_size = static_cast<std::size_t>(*v);
    if (auto v = r.text("estimation", "lambda"); v && *v != "bic") c.lambda = r.number("estimation", "lambda");
    if (auto v = r.text("estimation", "bias")) c.bias = parse_bias_mode(*v);
    if (auto v = r.text("estimation", "covariance")) c.covariance = parse_covariance(*v);
    if (auto v = r.boolean("estimation", "standardize")) c.standardize = *v;
    if (auto v = r.number("estimation", "solver_tol")) c.solver.tol = *v;
    if (auto v = r.integer("estimation", "solver_max_iter")) c.solver.max_iter = static_cast<int>(*v);
    if (auto v = r.boolean("estimation", "solver_polish")) c.solver.polish = *v;

    if (auto v = r.text("data", "path")) c.data.path = *v;
    if (auto v = r.text("data", "date_column")) c.data.date_column = *v;
    if (auto v = r.text("data", "response")) c.data.response = *v;
    if (auto v = r.text("data", "contemporaneous")) c.data.contemporaneous = detail::split_list(*v);
    if (auto v = r.text("data", "lagged")) c.data.lagged = detail::split_list(*v);
    if (auto v = r.integer("model", "ar_lags")) c.model.ar_lags = static_cast<std::size_t>(*v);
    if (auto v = r.boolean("model", "intercept")) c.model.include_intercept = *v;
    if (auto v = r.number("test", "theta0")) c.theta0 = *v;
    if (auto v = r.text("test", "columns")) c.test_columns = detail::split_list(*v);

    if (doc.has_section("dgp")) {
        c.dgp = detail::read_dgp(r);
        if (auto v = r.text("fixtures", "correlation"); v && *v != c.dgp.corr_fixture)
            throw ConfigError("[fixtures] correlation '" + *v + "' does not match the [dgp] section");
    }
    c.dgp.seed = c.seed;
    if (auto v = r.integer("simulate", "replication")) c.dgp.replication = *v;
    if (auto v = r.integer("mc", "replications")) c.replications = static_cast<std::size_t>(*v);
    if (auto v = r.number("mc", "max_failure_fraction")) c.max_failure_fraction = *v;

    if (auto v = r.number("quantile", "lambda0_start")) c.quantile.start = *v;
    if (auto v = r.number("quantile", "lambda0_stop")) c.quantile.stop = *v;
    if (auto v = r.number("quantile", "lambda0_step")) c.quantile.step = *v;
    if (auto v = r.number("quantile", "c")) c.quantile.c = *v;
    if (auto v = r.number("quantile", "omega")) c.quantile.omega = *v;
    if (auto v = r.integer("quantile", "draws")) c.quantile.draws = static_cast<std::size_t>(*v);
    return c;
}

inline std::string snapshot(const RunConfig& c) {
    return "# alasso resolved run configuration\n" + to_document(c).render();
}

}  // namespace alasso
