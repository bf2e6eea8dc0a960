#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "exomix/bootstrap.hpp"
#include "exomix/error.hpp"
#include "exomix/experiments.hpp"
#include "exomix/kde.hpp"
#include "exomix/labeling.hpp"
#include "exomix/npem.hpp"
#include "exomix/pipeline.hpp"
#include "exomix/regress.hpp"

namespace exomix {

using json = nlohmann::ordered_json;

// NaN and infinities become null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json numbers(const std::vector<double>& v)
{
    json out = json::array();
    for (double x : v)
        out.push_back(number(x));
    return out;
}

inline json matrix_json(const Matrix& m)
{
    json out = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        out.push_back(numbers({row.begin(), row.end()}));
    }
    return out;
}

inline Matrix matrix_from_json(const json& j, std::size_t cols, const char* what)
{
    if (!j.is_array())
        throw ParseError(std::string(what) + " must be an array of rows");
    Matrix m(j.size(), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw ParseError(std::string(what) + " row " + std::to_string(i) + " must have " + std::to_string(cols) +
                             " entries");
        for (std::size_t k = 0; k < cols; ++k)
            m(i, k) = j[i][k].get<double>();
    }
    return m;
}

inline json to_json(const RegressionResult& r, bool with_residuals = false)
{
    json out;
    json coefs = json::object();
    for (std::size_t t = 0; t < r.names.size(); ++t)
        coefs[r.names[t]] = {{"estimate", number(r.coefficients[t])},
                             {"std_error", number(r.standard_errors[t])},
                             {"stars", stars(r.coefficients[t], r.standard_errors[t])}};
    out["coefficients"] = coefs;
    out["se_kind"] = to_string(r.se_kind);
    if (!r.se_detail.empty())
        out["se_detail"] = r.se_detail;
    out["r_squared"] = number(r.r_squared);
    out["n_used"] = r.n_used;
    if (with_residuals)
        out["residuals"] = numbers(r.residuals);
    return out;
}

inline json to_json(const BootstrapResult& b)
{
    json out;
    out["B"] = b.B;
    out["successes"] = b.successes();
    json coefs = json::object();
    for (std::size_t t = 0; t < b.names.size(); ++t)
        coefs[b.names[t]] = {{"mean", number(b.mean[t])},
                             {"std_error", number(b.se[t])},
                             {"ci95", {number(b.ci_low[t]), number(b.ci_high[t])}}};
    out["coefficients"] = coefs;
    json failures = json::array();
    for (const auto& f : b.failures)
        failures.push_back({{"replicate", f.replicate}, {"reason", f.reason}});
    out["failures"] = failures;
    json reps = json::array();
    for (const auto& r : b.replicates)
        reps.push_back(r ? numbers(*r) : json(nullptr));
    out["replicates"] = reps;
    return out;
}

/// Fit layout (format "exomix-fit/1"):
///   coordinates        column names, length r
///   data               n x r matrix the fit was estimated on
///   weights            m component weights
///   bandwidths         r kernel bandwidths
///   kde_grid_size      0 for exact densities, else binned grid nodes
///   density_weights    n x m; column j weights the KDE of every coordinate in component j
///   posteriors         n x m
///   plus iteration diagnostics and warnings.
/// Density f_jk is the KDE of data column k with weights density_weights[:, j].
inline json to_json(const MixtureFit& fit)
{
    json out;
    out["format"] = "exomix-fit/1";
    out["m"] = fit.m();
    out["r"] = fit.r();
    out["n"] = fit.n();
    out["coordinates"] = fit.data.names();
    out["weights"] = numbers(fit.weights);
    out["bandwidths"] = numbers(fit.bandwidths);
    out["kde_grid_size"] = fit.densities.empty() ? 0 : fit.densities[0][0].grid_size();
    out["iterations_run"] = fit.iterations_run;
    out["converged"] = fit.converged;
    out["log_likelihood"] = number(fit.log_likelihood);
    out["log_likelihood_trace"] = numbers(fit.log_likelihood_trace);
    out["restart_index"] = fit.restart_index;
    out["warnings"] = fit.warnings;
    out["data"] = matrix_json(fit.data.values());
    Matrix dw(fit.n(), fit.m());
    for (std::size_t j = 0; j < fit.m(); ++j) {
        const auto& w = fit.densities[j][0].sample().weights();
        for (std::size_t i = 0; i < fit.n(); ++i)
            dw(i, j) = w[i];
    }
    out["density_weights"] = matrix_json(dw);
    out["posteriors"] = matrix_json(fit.posteriors);
    return out;
}

/// Rebuilds a fit written by to_json; densities evaluate exactly as before.
inline MixtureFit fit_from_json(const json& j)
{
    try {
        if (j.value("format", "") != "exomix-fit/1")
            throw ParseError("not an exomix fit document");
        const auto m = j.at("m").get<std::size_t>();
        const auto r = j.at("r").get<std::size_t>();
        MixtureFit fit;
        fit.data = DataMatrix(matrix_from_json(j.at("data"), r, "data"),
                              j.at("coordinates").get<std::vector<std::string>>());
        fit.weights = j.at("weights").get<std::vector<double>>();
        fit.bandwidths = j.at("bandwidths").get<std::vector<double>>();
        if (fit.weights.size() != m || fit.bandwidths.size() != r)
            throw ParseError("fit document has inconsistent sizes");
        fit.posteriors = matrix_from_json(j.at("posteriors"), m, "posteriors");
        const Matrix dw = matrix_from_json(j.at("density_weights"), m, "density_weights");
        if (fit.posteriors.rows() != fit.n() || dw.rows() != fit.n())
            throw ParseError("fit document has inconsistent row counts");
        const auto grid_size = j.at("kde_grid_size").get<std::size_t>();
        std::vector<std::shared_ptr<const BinnedGrid>> grids(r);
        std::vector<std::vector<double>> columns(r);
        for (std::size_t k = 0; k < r; ++k) {
            columns[k] = fit.data.column(k);
            if (grid_size > 0)
                grids[k] = std::make_shared<BinnedGrid>(columns[k], fit.bandwidths[k], grid_size);
        }
        fit.densities.resize(m);
        for (std::size_t c = 0; c < m; ++c) {
            const auto w = dw.column(c);
            for (std::size_t k = 0; k < r; ++k)
                fit.densities[c].emplace_back(WeightedSample(columns[k], w), fit.bandwidths[k], grids[k]);
        }
        fit.iterations_run = j.value("iterations_run", 0);
        fit.converged = j.value("converged", false);
        fit.log_likelihood = j.value("log_likelihood", 0.0);
        fit.restart_index = j.value("restart_index", std::size_t{0});
        fit.warnings = j.value("warnings", std::vector<std::string>{});
        if (j.contains("log_likelihood_trace"))
            for (const auto& v : j["log_likelihood_trace"])
                fit.log_likelihood_trace.push_back(v.is_null() ? std::nan("") : v.get<double>());
        return fit;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed fit document: ") + e.what());
    }
}

inline json to_json(const ComponentLabels& labels) { return labels.names; }

inline json to_json(const SelectionResult& s)
{
    return {{"threshold", s.threshold}, {"count", s.indices.size()}, {"indices", s.indices}};
}

inline json to_json(const AccuracyReport& a)
{
    auto row = [](const AccuracyCounts& c) {
        return json{{"group", c.group}, {"n_rows", c.n_rows}, {"n_correct", c.n_correct}, {"accuracy", c.accuracy()}};
    };
    json groups = json::array();
    for (const auto& g : a.groups)
        groups.push_back(row(g));
    return {{"overall", row(a.overall)}, {"groups", groups}};
}

inline json to_json(const PanelPipelineResult& r)
{
    json out;
    json groups = json::array();
    for (const auto& g : r.groups) {
        json weights = json::object();
        for (std::size_t j = 0; j < g.weights.size(); ++j)
            weights[g.labels.names[j]] = g.weights[j];
        groups.push_back({{"category", g.category},
                          {"zone", g.zone},
                          {"coordinates", g.coordinates},
                          {"qualifying_products", g.qualifying_products},
                          {"excluded_stores", g.excluded_stores},
                          {"dropped_products", g.dropped_products},
                          {"dropped_units", g.dropped_units},
                          {"n_units", g.n_units},
                          {"weights", weights},
                          {"iterations", g.iterations},
                          {"converged", g.converged},
                          {"notices", g.notices}});
    }
    out["groups"] = groups;
    out["accuracy"] = r.accuracy ? to_json(*r.accuracy) : json(nullptr);
    json pc = json::array();
    for (const auto& c : r.price_changes)
        pc.push_back({{"category", c.category},
                      {"regime", c.regime},
                      {"percent", c.percent ? number(*c.percent) : json(nullptr)},
                      {"runs", c.runs}});
    out["price_changes"] = pc;
    json el = json::array();
    for (const auto& e : r.elasticities)
        el.push_back({{"category", e.category},
                      {"estimate", e.estimate ? to_json(*e.estimate) : json(nullptr)},
                      {"pairs", e.pairs},
                      {"unmatched", e.unmatched},
                      {"note", e.note}});
    out["elasticities"] = el;
    return out;
}

// --------------------------------------------------------------------------
// Plain-text tables

inline std::string fixed3(double v)
{
    if (!std::isfinite(v))
        return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

/// "1.968 (0.056)" with stars appended to the estimate.
inline std::string coefficient_cell(double coef, double se)
{
    return fixed3(coef) + stars(coef, se) + " (" + fixed3(se) + ")";
}

namespace detail {

inline std::string pad(const std::string& s, std::size_t width, bool right = true)
{
    if (s.size() >= width)
        return s;
    return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

inline std::string render(const std::vector<std::vector<std::string>>& rows)
{
    std::vector<std::size_t> width;
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (width.size() <= c)
                width.push_back(0);
            width[c] = std::max(width[c], r[c].size());
        }
    std::ostringstream out;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c)
            line += (c ? "   " : "") + pad(r[c], width[c], c != 0);
        while (!line.empty() && line.back() == ' ')
            line.pop_back();
        out << line << '\n';
    }
    return out.str();
}

} // namespace detail

struct TableColumn {
    std::string title;
    RegressionResult result;
};

/// Regression table: one column per model, estimates with stars and
/// standard errors in parentheses beneath, then observations and R^2.
inline std::string regression_table(const std::vector<TableColumn>& columns)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{""}, index{""};
    std::vector<std::string> names;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        index.push_back("(" + std::to_string(c + 1) + ")");
        head.push_back(columns[c].title);
        for (const auto& n : columns[c].result.names)
            if (std::find(names.begin(), names.end(), n) == names.end())
                names.push_back(n);
    }
    rows.push_back(index);
    rows.push_back(head);
    // slope first, as in the usual layout
    std::stable_partition(names.begin(), names.end(), [](const std::string& n) { return n != "alpha"; });
    for (const auto& n : names) {
        std::vector<std::string> est{n == "alpha" ? "Constant" : n}, se{""};
        for (const auto& col : columns) {
            const auto& r = col.result;
            auto it = std::find(r.names.begin(), r.names.end(), n);
            if (it == r.names.end()) {
                est.push_back("");
                se.push_back("");
                continue;
            }
            const auto t = static_cast<std::size_t>(it - r.names.begin());
            est.push_back(fixed3(r.coefficients[t]) + stars(r.coefficients[t], r.standard_errors[t]));
            se.push_back("(" + fixed3(r.standard_errors[t]) + ")");
        }
        rows.push_back(est);
        rows.push_back(se);
    }
    std::vector<std::string> obs{"Observations"}, r2{"R2"}, kind{"Std. errors"};
    for (const auto& col : columns) {
        obs.push_back(std::to_string(col.result.n_used));
        r2.push_back(fixed3(col.result.r_squared));
        kind.push_back(to_string(col.result.se_kind) +
                       (col.result.se_detail.empty() ? "" : " " + col.result.se_detail));
    }
    rows.push_back(obs);
    rows.push_back(r2);
    rows.push_back(kind);
    return detail::render(rows) + "Note: *p<0.1; **p<0.05; ***p<0.01\n";
}

inline std::string accuracy_table(const AccuracyReport& a)
{
    std::vector<std::vector<std::string>> rows{{"Category", "# Store-Weeks", "# Correct", "Accuracy"}};
    for (const auto& g : a.groups)
        rows.push_back({g.group, std::to_string(g.n_rows), std::to_string(g.n_correct), fixed3(g.accuracy())});
    rows.push_back({"All", std::to_string(a.overall.n_rows), std::to_string(a.overall.n_correct),
                    fixed3(a.overall.accuracy())});
    return detail::render(rows);
}

inline std::string price_change_table(const std::vector<PriceChangeCell>& cells)
{
    std::vector<std::string> regimes;
    std::vector<std::string> categories;
    for (const auto& c : cells) {
        if (std::find(regimes.begin(), regimes.end(), c.regime) == regimes.end())
            regimes.push_back(c.regime);
        if (std::find(categories.begin(), categories.end(), c.category) == categories.end())
            categories.push_back(c.category);
    }
    std::vector<std::string> head{"Category"};
    for (const auto& r : regimes)
        head.push_back(r + " % change");
    std::vector<std::vector<std::string>> rows{head};
    for (const auto& cat : categories) {
        std::vector<std::string> row{cat};
        for (const auto& reg : regimes) {
            std::string cell = "NA";
            for (const auto& c : cells)
                if (c.category == cat && c.regime == reg && c.percent) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.2f", *c.percent);
                    cell = buf;
                }
            row.push_back(cell);
        }
        rows.push_back(row);
    }
    return detail::render(rows);
}

inline std::string elasticity_table(const std::vector<ElasticityCell>& cells)
{
    std::vector<std::vector<std::string>> rows{{"Category", "Elasticity", "Pairs", "Unmatched"}};
    for (const auto& e : cells)
        rows.push_back({e.category,
                        e.estimate ? coefficient_cell(e.estimate->coefficients[0], e.estimate->standard_errors[0])
                                   : "NA",
                        std::to_string(e.pairs), std::to_string(e.unmatched)});
    return detail::render(rows) + "Standard errors clustered by store.\n";
}

} // namespace exomix
