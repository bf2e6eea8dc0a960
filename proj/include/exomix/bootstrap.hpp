#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exomix/error.hpp"
#include "exomix/kde.hpp"
#include "exomix/labeling.hpp"
#include "exomix/npem.hpp"
#include "exomix/parallel.hpp"
#include "exomix/random.hpp"
#include "exomix/regress.hpp"

namespace exomix {

/// fit -> label -> select -> OLS of y on one data column over the selection.
struct SubsetPipelineConfig {
    std::size_t m = 2;
    FitOptions fit;
    LabelRule rule = LabelRule::moment_order({0}, {label_exogenous, label_endogenous});
    std::string target = label_exogenous;
    double p = 0.9;
    std::size_t regressor = 0; // data column used as X
    bool intercept = true;

    void validate(const DataMatrix& data) const
    {
        fit.validate();
        rule.validate();
        if (rule.arity() != m)
            throw InvalidOptions("label rule arity does not match m");
        if (!(p >= 0.0 && p <= 1.0))
            throw InvalidOptions("threshold p must lie in [0, 1]");
        if (regressor >= data.r())
            throw InvalidOptions("regressor column " + std::to_string(regressor) + " out of range");
        const auto labels = rule.labels();
        if (std::find(labels.begin(), labels.end(), target) == labels.end())
            throw InvalidOptions("target label '" + target + "' is not produced by the label rule");
    }
};

struct SubsetEstimate {
    MixtureFit fit;
    ComponentLabels labels;
    SelectionResult selection;
    RegressionResult full;   // every row
    RegressionResult subset; // selected rows
};

inline SubsetEstimate run_subset_pipeline(const DataMatrix& data, std::span<const double> y,
                                          const SubsetPipelineConfig& config)
{
    config.validate(data);
    if (y.size() != data.n())
        throw LengthMismatch("outcome has " + std::to_string(y.size()) + " rows, data has " +
                             std::to_string(data.n()));
    const auto x = data.column(config.regressor);
    SubsetEstimate out;
    out.full = ols(y, x, config.intercept);
    out.fit = npem_fit(data, config.m, config.fit);
    out.labels = label_components(out.fit, config.rule);
    out.selection = select_subset(out.fit, out.labels, config.target, config.p);
    out.subset = ols_on_subset(y, x, out.selection, config.intercept);
    return out;
}

struct BootstrapOptions {
    std::size_t B = 200;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    // npEM restarts inside each replicate; 0 keeps the pipeline's setting.
    int replicate_restarts = 0;

    void validate() const
    {
        if (B < 50)
            throw InvalidOptions("bootstrap needs B >= 50 replicates");
        if (replicate_restarts < 0)
            throw InvalidOptions("replicate_restarts must be >= 0");
    }
};

struct ReplicateFailure {
    std::size_t replicate = 0;
    std::string reason;
};

struct BootstrapResult {
    std::size_t B = 0;
    std::vector<std::string> names; // coefficient names, as in the pipeline's regression
    std::vector<std::optional<std::vector<double>>> replicates; // indexed by replicate
    std::vector<ReplicateFailure> failures;
    std::vector<double> mean;
    std::vector<double> se;      // sd over successful replicates
    std::vector<double> ci_low;  // 2.5% percentile
    std::vector<double> ci_high; // 97.5% percentile

    std::size_t successes() const { return B - failures.size(); }

    std::size_t position(const std::string& name) const
    {
        for (std::size_t t = 0; t < names.size(); ++t)
            if (names[t] == name)
                return t;
        throw InvalidOptions("no bootstrapped coefficient named '" + name + "'");
    }
};

/// Replicate b resamples n rows with stream (seed, b) and refits with
/// npEM seed derive_seed(seed, b), so its result does not depend on B or
/// on scheduling. Replicates whose labeling, selection or regression fails
/// are dropped and counted.
inline BootstrapResult bootstrap_pipeline(const DataMatrix& data, std::span<const double> y,
                                          const SubsetPipelineConfig& config, const BootstrapOptions& options)
{
    options.validate();
    config.validate(data);
    if (y.size() != data.n())
        throw LengthMismatch("outcome length differs from the data");
    const std::size_t n = data.n();

    BootstrapResult out;
    out.B = options.B;
    out.names = config.intercept ? std::vector<std::string>{"alpha", "beta"} : std::vector<std::string>{"beta"};
    out.replicates.resize(options.B);
    std::vector<std::string> reasons(options.B);
    parallel_for(options.B, options.threads, [&](std::size_t b) {
        KeyedStream rng(options.seed, b);
        std::vector<std::size_t> rows(n);
        for (auto& i : rows)
            i = static_cast<std::size_t>(rng.below(n));
        std::vector<double> yb(n);
        for (std::size_t t = 0; t < n; ++t)
            yb[t] = y[rows[t]];
        SubsetPipelineConfig c = config;
        c.fit.seed = derive_seed(options.seed, b);
        c.fit.threads = 1;
        if (options.replicate_restarts > 0)
            c.fit.restarts = options.replicate_restarts;
        try {
            out.replicates[b] = run_subset_pipeline(data.select_rows(rows), yb, c).subset.coefficients;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::estimation && e.kind() != ErrorKind::data)
                throw;
            reasons[b] = e.what();
        }
    });

    std::vector<std::vector<double>> ok(out.names.size());
    for (std::size_t b = 0; b < options.B; ++b) {
        if (!out.replicates[b]) {
            out.failures.push_back({b, reasons[b]});
            continue;
        }
        for (std::size_t t = 0; t < ok.size(); ++t)
            ok[t].push_back((*out.replicates[b])[t]);
    }
    if (static_cast<double>(out.failures.size()) > 0.2 * static_cast<double>(options.B))
        throw TooManyFailedReplicates(std::to_string(out.failures.size()) + " of " + std::to_string(options.B) +
                                      " bootstrap replicates failed (first: " + out.failures.front().reason + ")");

    for (auto& v : ok) {
        double mean = 0.0;
        for (double x : v)
            mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v)
            ss += (x - mean) * (x - mean);
        out.mean.push_back(mean);
        out.se.push_back(std::sqrt(ss / static_cast<double>(v.size() - 1)));
        std::sort(v.begin(), v.end());
        out.ci_low.push_back(detail::quantile_sorted(v, 0.025));
        out.ci_high.push_back(detail::quantile_sorted(v, 0.975));
    }
    return out;
}

/// The regression with its standard errors replaced by bootstrap ones.
inline RegressionResult with_bootstrap_se(RegressionResult r, const BootstrapResult& boot)
{
    for (std::size_t t = 0; t < r.names.size(); ++t)
        r.standard_errors[t] = boot.se[boot.position(r.names[t])];
    r.se_kind = SeKind::bootstrap;
    r.se_detail = "B=" + std::to_string(boot.B);
    return r;
}

} // namespace exomix
