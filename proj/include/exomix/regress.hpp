#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "exomix/error.hpp"
#include "exomix/labeling.hpp"
#include "exomix/panel.hpp"

namespace exomix {

enum class SeKind { classical, cluster, bootstrap };

inline std::string to_string(SeKind k)
{
    switch (k) {
    case SeKind::classical:
        return "classical";
    case SeKind::cluster:
        return "cluster";
    case SeKind::bootstrap:
        return "bootstrap";
    }
    return "?";
}

struct RegressionResult {
    std::vector<std::string> names;
    std::vector<double> coefficients;
    std::vector<double> standard_errors; // NaN when there are no residual degrees of freedom
    SeKind se_kind = SeKind::classical;
    std::string se_detail; // cluster key, or replicate count for bootstrap
    double r_squared = 0.0;
    std::size_t n_used = 0;
    std::vector<double> residuals;

    std::size_t position(const std::string& name) const
    {
        for (std::size_t t = 0; t < names.size(); ++t)
            if (names[t] == name)
                return t;
        throw InvalidOptions("no coefficient named '" + name + "'");
    }
    double coefficient(const std::string& name) const { return coefficients[position(name)]; }
    double standard_error(const std::string& name) const { return standard_errors[position(name)]; }
};

/// Two-sided p-value of coef / se under the standard normal.
inline double normal_p_value(double coef, double se)
{
    if (!(se > 0.0) || !std::isfinite(se))
        return std::numeric_limits<double>::quiet_NaN();
    return std::erfc(std::abs(coef / se) / std::numbers::sqrt2);
}

/// "***" p < 0.01, "**" p < 0.05, "*" p < 0.1.
inline std::string stars(double coef, double se)
{
    const double p = normal_p_value(coef, se);
    if (!(p == p))
        return "";
    return p < 0.01 ? "***" : p < 0.05 ? "**" : p < 0.1 ? "*" : "";
}

/// Least squares of y on x with classical standard errors. Names are
/// "alpha" and "beta". With exactly as many rows as parameters the fit is
/// exact and the standard errors are NaN.
inline RegressionResult ols(std::span<const double> y, std::span<const double> x, bool intercept = true)
{
    if (y.size() != x.size())
        throw LengthMismatch("y and x differ in length (" + std::to_string(y.size()) + " vs " +
                             std::to_string(x.size()) + ")");
    const std::size_t k = intercept ? 2 : 1;
    const std::size_t n = y.size();
    if (n < k)
        throw InsufficientData("ols needs at least " + std::to_string(k) + " rows, got " + std::to_string(n));
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(y[i]) || !std::isfinite(x[i]))
            throw InvalidData("ols input contains a non-finite value");

    const double nn = static_cast<double>(n);
    double xbar = 0.0, ybar = 0.0;
    if (intercept) {
        for (std::size_t i = 0; i < n; ++i) {
            xbar += x[i];
            ybar += y[i];
        }
        xbar /= nn;
        ybar /= nn;
    }
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - xbar, dy = y[i] - ybar;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0))
        throw DegenerateRegressor("regressor has zero variance");

    RegressionResult out;
    const double beta = sxy / sxx;
    const double alpha = ybar - beta * xbar;
    out.n_used = n;
    out.residuals.resize(n);
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.residuals[i] = y[i] - alpha - beta * x[i];
        ssr += out.residuals[i] * out.residuals[i];
    }
    // uncentered without an intercept
    out.r_squared = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;

    const double sigma2 = n > k ? ssr / static_cast<double>(n - k) : std::numeric_limits<double>::quiet_NaN();
    const double se_beta = std::sqrt(sigma2 / sxx);
    if (intercept) {
        out.names = {"alpha", "beta"};
        out.coefficients = {alpha, beta};
        out.standard_errors = {std::sqrt(sigma2 * (1.0 / nn + xbar * xbar / sxx)), se_beta};
    } else {
        out.names = {"beta"};
        out.coefficients = {beta};
        out.standard_errors = {se_beta};
    }
    return out;
}

/// ols on the selected rows only.
inline RegressionResult ols_on_subset(std::span<const double> y, std::span<const double> x,
                                      const SelectionResult& selection, bool intercept = true)
{
    if (y.size() != x.size())
        throw LengthMismatch("y and x differ in length");
    if (selection.indices.empty())
        throw EmptySelection("selection is empty");
    std::vector<double> ys, xs;
    ys.reserve(selection.indices.size());
    xs.reserve(selection.indices.size());
    for (std::size_t i : selection.indices) {
        if (i >= y.size())
            throw LengthMismatch("selected row " + std::to_string(i) + " is out of range");
        ys.push_back(y[i]);
        xs.push_back(x[i]);
    }
    return ols(ys, xs, intercept);
}

// --------------------------------------------------------------------------

/// Column store for regressions: numeric columns and string-valued factors.
struct Frame {
    std::map<std::string, std::vector<double>> numeric;
    std::map<std::string, std::vector<std::string>> factors;

    std::size_t rows() const
    {
        if (!numeric.empty())
            return numeric.begin()->second.size();
        return factors.empty() ? 0 : factors.begin()->second.size();
    }

    const std::vector<double>& num(const std::string& name) const
    {
        auto it = numeric.find(name);
        if (it == numeric.end())
            throw SchemaMismatch("missing numeric column '" + name + "'");
        return it->second;
    }

    const std::vector<std::string>& factor(const std::string& name) const
    {
        auto it = factors.find(name);
        if (it == factors.end())
            throw SchemaMismatch("missing factor column '" + name + "'");
        return it->second;
    }

    void validate() const
    {
        const std::size_t n = rows();
        for (const auto& [name, col] : numeric)
            if (col.size() != n)
                throw LengthMismatch("column '" + name + "' has " + std::to_string(col.size()) + " rows, expected " +
                                     std::to_string(n));
        for (const auto& [name, col] : factors)
            if (col.size() != n)
                throw LengthMismatch("column '" + name + "' has " + std::to_string(col.size()) + " rows, expected " +
                                     std::to_string(n));
    }
};

/// Panel rows as a frame: factors category, zone, store, week, product;
/// numeric price, log_price and, where quantities exist, quantity and log_quantity.
inline Frame to_frame(const PanelTable& panel)
{
    Frame f;
    auto& category = f.factors["category"];
    auto& zone = f.factors["zone"];
    auto& store = f.factors["store"];
    auto& week = f.factors["week"];
    auto& product = f.factors["product"];
    auto& price = f.numeric["price"];
    auto& log_price = f.numeric["log_price"];
    bool quantities = !panel.rows.empty();
    for (const auto& r : panel.rows)
        quantities = quantities && std::isfinite(r.quantity) && r.quantity > 0.0;
    for (const auto& r : panel.rows) {
        category.push_back(r.category);
        zone.push_back(r.zone);
        store.push_back(r.store);
        week.push_back(std::to_string(r.week));
        product.push_back(r.product);
        price.push_back(r.price);
        log_price.push_back(std::log(r.price));
        if (quantities) {
            f.numeric["quantity"].push_back(r.quantity);
            f.numeric["log_quantity"].push_back(std::log(r.quantity));
        }
    }
    return f;
}

struct FESpec {
    std::string outcome;
    std::string regressor;
    std::vector<std::string> fixed_effects;
    std::string cluster_key;

    void validate(const Frame& frame) const
    {
        // the cluster key may repeat a fixed effect (store FE, store clusters)
        std::vector<std::string> names{outcome, regressor};
        names.insert(names.end(), fixed_effects.begin(), fixed_effects.end());
        std::set<std::string> seen;
        for (const auto& name : names)
            if (!seen.insert(name).second)
                throw InvalidOptions("column '" + name + "' appears twice in the FE model");
        for (const auto& name : all_names())
            if (name.empty())
                throw InvalidOptions("FE model has an empty column name");
        if (cluster_key == outcome || cluster_key == regressor)
            throw InvalidOptions("cluster key '" + cluster_key + "' is also the outcome or regressor");
        frame.num(outcome);
        frame.num(regressor);
        for (const auto& fe : fixed_effects)
            frame.factor(fe);
        frame.factor(cluster_key);
    }

    std::vector<std::string> all_names() const
    {
        std::vector<std::string> out{outcome, regressor};
        out.insert(out.end(), fixed_effects.begin(), fixed_effects.end());
        out.push_back(cluster_key);
        return out;
    }
};

namespace detail {

inline std::vector<std::size_t> encode_levels(const std::vector<std::string>& values, std::size_t& levels)
{
    std::unordered_map<std::string, std::size_t> ids;
    std::vector<std::size_t> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = ids.try_emplace(values[i], ids.size()).first->second;
    levels = ids.size();
    return out;
}

// Subtracts group means of v for one factor; returns the largest mean removed.
inline double sweep(std::vector<double>& v, const std::vector<std::size_t>& code, std::size_t levels,
                    const std::vector<double>& counts)
{
    std::vector<double> sums(levels, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i)
        sums[code[i]] += v[i];
    double largest = 0.0;
    for (std::size_t g = 0; g < levels; ++g) {
        sums[g] /= counts[g];
        largest = std::max(largest, std::abs(sums[g]));
    }
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] -= sums[code[i]];
    return largest;
}

} // namespace detail

/// y = FE_1 + ... + FE_F + beta x + e, estimated by alternating within-group
/// demeaning of y and x until a full sweep moves them by less than 1e-10,
/// then least squares without intercept on the demeaned columns. Standard
/// errors are clustered on spec.cluster_key with the G/(G-1) (n-1)/(n-k)
/// correction, where k = 1 + sum_f (levels_f - 1) + 1 counts the parameters
/// of the equivalent dummy-variable regression.
inline RegressionResult fe_regression(const Frame& frame, const FESpec& spec)
{
    frame.validate();
    spec.validate(frame);
    const std::size_t n = frame.rows();
    std::vector<double> y = frame.num(spec.outcome);
    std::vector<double> x = frame.num(spec.regressor);
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(y[i]) || !std::isfinite(x[i]))
            throw InvalidData("FE regression input contains a non-finite value");

    std::vector<std::vector<std::size_t>> codes;
    std::vector<std::size_t> levels;
    std::vector<std::vector<double>> counts;
    std::size_t k = 2;
    for (const auto& fe : spec.fixed_effects) {
        std::size_t L = 0;
        codes.push_back(detail::encode_levels(frame.factor(fe), L));
        if (L < 2)
            throw InvalidData("fixed effect '" + fe + "' needs at least two levels");
        levels.push_back(L);
        counts.emplace_back(L, 0.0);
        for (std::size_t c : codes.back())
            counts.back()[c] += 1.0;
        k += L - 1;
    }
    if (n <= k)
        throw InsufficientData("FE regression has " + std::to_string(n) + " rows for " + std::to_string(k) +
                               " parameters");

    double x_scale = 0.0;
    {
        double mean = 0.0;
        for (double v : x)
            mean += v;
        mean /= static_cast<double>(n);
        for (double v : x)
            x_scale += (v - mean) * (v - mean);
    }

    if (spec.fixed_effects.empty()) {
        // intercept only
        std::vector<std::size_t> one(n, 0);
        const std::vector<double> c{static_cast<double>(n)};
        detail::sweep(y, one, 1, c);
        detail::sweep(x, one, 1, c);
        k = 2;
    }
    bool converged = spec.fixed_effects.empty();
    for (int pass = 0; pass < 100000 && !converged; ++pass) {
        double moved = 0.0;
        for (std::size_t f = 0; f < codes.size(); ++f) {
            moved = std::max(moved, detail::sweep(y, codes[f], levels[f], counts[f]));
            moved = std::max(moved, detail::sweep(x, codes[f], levels[f], counts[f]));
        }
        converged = moved < 1e-10;
    }
    if (!converged)
        throw EstimationFailure("fixed-effect demeaning did not converge");

    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    if (!(sxx > 1e-12 * x_scale) || !(sxx > 0.0))
        throw CollinearFixedEffects("'" + spec.regressor + "' has no variation left after removing the fixed effects");

    RegressionResult out;
    const double beta = sxy / sxx;
    out.names = {spec.regressor};
    out.coefficients = {beta};
    out.n_used = n;
    out.residuals.resize(n);
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.residuals[i] = y[i] - beta * x[i];
        ssr += out.residuals[i] * out.residuals[i];
    }
    out.r_squared = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;

    std::size_t G = 0;
    const auto cluster = detail::encode_levels(frame.factor(spec.cluster_key), G);
    if (G < 2)
        throw InsufficientData("cluster-robust errors need at least two clusters");
    std::vector<double> score(G, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        score[cluster[i]] += x[i] * out.residuals[i];
    double meat = 0.0;
    for (double s : score)
        meat += s * s;
    const double g = static_cast<double>(G), nn = static_cast<double>(n), kk = static_cast<double>(k);
    const double correction = g / (g - 1.0) * (nn - 1.0) / (nn - kk);
    out.standard_errors = {std::sqrt(correction * meat) / sxx};
    out.se_kind = SeKind::cluster;
    out.se_detail = spec.cluster_key;
    return out;
}

} // namespace exomix
