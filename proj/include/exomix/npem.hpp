#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exomix/error.hpp"
#include "exomix/kde.hpp"
#include "exomix/matrix.hpp"
#include "exomix/parallel.hpp"
#include "exomix/random.hpp"

namespace exomix {

enum class InitMethod { kmeans, random_posterior };

struct FitOptions {
    int max_iterations = 500;
    // Stop when max |weight change| + mean |posterior change| falls below this.
    double tolerance = 1e-6;
    int restarts = 5;
    InitMethod init = InitMethod::kmeans;
    std::uint64_t seed = 1;
    BandwidthRule bandwidth_rule = BandwidthRule::silverman();
    // 0 evaluates every density exactly. A positive value (>= 64) switches the
    // density updates to a binned grid with that many nodes per coordinate,
    // which is far faster at n in the thousands.
    std::size_t kde_grid_size = 0;
    std::size_t threads = 1;

    void validate() const
    {
        if (max_iterations < 1)
            throw InvalidOptions("max_iterations must be >= 1");
        if (restarts < 1)
            throw InvalidOptions("restarts must be >= 1");
        if (!(tolerance > 0.0) || !std::isfinite(tolerance))
            throw InvalidOptions("tolerance must be positive");
        if (kde_grid_size != 0 && kde_grid_size < 64)
            throw InvalidOptions("kde_grid_size must be 0 (exact) or >= 64");
        if (bandwidth_rule.kind == BandwidthRule::Kind::fixed && !(bandwidth_rule.value > 0.0))
            throw InvalidBandwidth("fixed bandwidth must be positive");
    }
};

enum class Identifiability { satisfied, violated };

/// Necessary condition 2^r - 1 >= m r + 1 for nonparametric identification of
/// an m-component mixture with r conditionally independent coordinates.
inline Identifiability check_identifiability(std::size_t m, std::size_t r)
{
    if (m < 1 || r < 1)
        throw InvalidOptions("identifiability check needs m >= 1 and r >= 1");
    if (r >= 63)
        return Identifiability::satisfied;
    const unsigned __int128 lhs = (static_cast<unsigned __int128>(1) << r) - 1;
    const unsigned __int128 rhs = static_cast<unsigned __int128>(m) * r + 1;
    return lhs >= rhs ? Identifiability::satisfied : Identifiability::violated;
}

struct MixtureFit {
    DataMatrix data;
    std::vector<double> weights;                       // m, on the simplex
    Matrix posteriors;                                 // n x m, rows on the simplex
    std::vector<std::vector<KernelDensity>> densities; // [component][coordinate]
    std::vector<double> bandwidths;                    // per coordinate
    int iterations_run = 0;
    bool converged = false;
    double log_likelihood = 0.0; // smoothed proxy of the returned fit
    std::vector<double> log_likelihood_trace;
    std::size_t restart_index = 0;
    std::vector<std::string> warnings;

    std::size_t m() const noexcept { return weights.size(); }
    std::size_t r() const noexcept { return data.r(); }
    std::size_t n() const noexcept { return data.n(); }
};

namespace detail {

inline double log_or_minus_inf(double v)
{
    return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
}

// Writes the posterior of one row into `out` and returns log sum_j lambda_j prod_k f_jk.
// `density(j, k)` supplies f_jk(row[k]). Products are formed directly; the log
// domain is used only when they underflow or overflow.
template <class Density>
double e_step_row(const std::vector<std::vector<KernelDensity>>& densities, std::span<const double> weights,
                  std::span<const double> row, std::span<double> out, Density&& density)
{
    const std::size_t m = weights.size();
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        double v = weights[j];
        for (std::size_t k = 0; k < row.size() && v > 0.0; ++k)
            v *= density(j, k);
        out[j] = v;
        total += v;
    }
    if (total > 1e-280 && total < std::numeric_limits<double>::max()) {
        for (std::size_t j = 0; j < m; ++j)
            out[j] /= total;
        return std::log(total);
    }

    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
        double l = log_or_minus_inf(weights[j]);
        if (l != -std::numeric_limits<double>::infinity())
            for (std::size_t k = 0; k < row.size(); ++k)
                l += densities[j][k].log_density(row[k]);
        out[j] = l;
        top = std::max(top, l);
    }
    if (!(top > -std::numeric_limits<double>::infinity()))
        throw EstimationFailure("observation has zero density under every component");
    total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        out[j] = std::exp(out[j] - top);
        total += out[j];
    }
    for (std::size_t j = 0; j < m; ++j)
        out[j] /= total;
    return top + std::log(total);
}

// Training rows read their densities from the grid positions cached at build
// time, which reproduces what posterior_of computes for the same row.
inline double e_step(const DataMatrix& data, const std::vector<std::vector<KernelDensity>>& densities,
                     std::span<const double> weights, Matrix& posteriors)
{
    double loglik = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i)
        loglik += e_step_row(densities, weights, data.row(i), posteriors.row(i),
                             [&](std::size_t j, std::size_t k) { return densities[j][k].at_sample_point(i); });
    return loglik;
}

inline std::vector<double> column_means(const Matrix& p)
{
    std::vector<double> out(p.cols(), 0.0);
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = 0; j < p.cols(); ++j)
            out[j] += p(i, j);
    for (double& v : out)
        v /= static_cast<double>(p.rows());
    return out;
}

struct CoordinateModel {
    std::vector<double> points;
    double bandwidth;
    std::shared_ptr<const BinnedGrid> grid;
};

inline std::vector<std::vector<KernelDensity>> update_densities(const std::vector<CoordinateModel>& coords,
                                                                const Matrix& posteriors)
{
    std::vector<std::vector<KernelDensity>> out(posteriors.cols());
    for (std::size_t j = 0; j < posteriors.cols(); ++j) {
        auto w = posteriors.column(j);
        for (const auto& c : coords)
            out[j].emplace_back(WeightedSample(c.points, w), c.bandwidth, c.grid);
    }
    return out;
}

// Columns scaled to unit standard deviation for clustering.
inline Matrix standardized(const DataMatrix& data)
{
    Matrix z(data.n(), data.r());
    for (std::size_t k = 0; k < data.r(); ++k) {
        double mean = 0.0;
        for (std::size_t i = 0; i < data.n(); ++i)
            mean += data(i, k);
        mean /= static_cast<double>(data.n());
        double ss = 0.0;
        for (std::size_t i = 0; i < data.n(); ++i)
            ss += (data(i, k) - mean) * (data(i, k) - mean);
        double sd = std::sqrt(ss / static_cast<double>(data.n()));
        if (!(sd > 0.0))
            sd = 1.0;
        for (std::size_t i = 0; i < data.n(); ++i)
            z(i, k) = (data(i, k) - mean) / sd;
    }
    return z;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b)
{
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        d += (a[k] - b[k]) * (a[k] - b[k]);
    return d;
}

// Lloyd's algorithm from the given centers; returns hard assignments.
inline std::vector<std::size_t> lloyd(const Matrix& z, Matrix centers)
{
    const std::size_t n = z.rows(), m = centers.rows(), r = z.cols();
    std::vector<std::size_t> assign(n, m);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = squared_distance(z.row(i), centers.row(0));
            for (std::size_t j = 1; j < m; ++j) {
                const double d = squared_distance(z.row(i), centers.row(j));
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            changed = changed || assign[i] != best;
            assign[i] = best;
        }
        if (!changed)
            break;

        Matrix sums(m, r);
        std::vector<std::size_t> counts(m, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (std::size_t k = 0; k < r; ++k)
                sums(assign[i], k) += z(i, k);
        }
        for (std::size_t j = 0; j < m; ++j) {
            if (counts[j] == 0) {
                // re-seed an empty cluster at the point farthest from its center
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = squared_distance(z.row(i), centers.row(assign[i]));
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                for (std::size_t k = 0; k < r; ++k)
                    centers(j, k) = z(far, k);
                assign[far] = j;
                changed = true;
                continue;
            }
            for (std::size_t k = 0; k < r; ++k)
                centers(j, k) = sums(j, k) / static_cast<double>(counts[j]);
        }
    }
    return assign;
}

// Centers at the means of m equal-size groups of rows ordered by coordinate sum.
inline Matrix quantile_centers(const Matrix& z, std::size_t m)
{
    const std::size_t n = z.rows(), r = z.cols();
    std::vector<double> score(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < r; ++k)
            score[i] += z(i, k);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    Matrix centers(m, r);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t begin = j * n / m, end = (j + 1) * n / m;
        for (std::size_t t = begin; t < end; ++t)
            for (std::size_t k = 0; k < r; ++k)
                centers(j, k) += z(order[t], k);
        for (std::size_t k = 0; k < r; ++k)
            centers(j, k) /= static_cast<double>(std::max<std::size_t>(1, end - begin));
    }
    return centers;
}

inline Matrix kmeanspp_centers(const Matrix& z, std::size_t m, KeyedStream& rng)
{
    const std::size_t n = z.rows(), r = z.cols();
    Matrix centers(m, r);
    std::size_t first = rng.below(n);
    for (std::size_t k = 0; k < r; ++k)
        centers(0, k) = z(first, k);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    for (std::size_t j = 1; j < m; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(z.row(i), centers.row(j - 1)));
            total += d2[i];
        }
        std::size_t pick = rng.below(n);
        if (total > 0.0) {
            double target = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                target -= d2[i];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        for (std::size_t k = 0; k < r; ++k)
            centers(j, k) = z(pick, k);
    }
    return centers;
}

inline Matrix initial_posteriors(const DataMatrix& data, const Matrix& z, std::size_t m, const FitOptions& opt,
                                 std::size_t restart)
{
    const std::size_t n = data.n();
    Matrix p(n, m);
    KeyedStream rng(opt.seed, restart);
    if (opt.init == InitMethod::random_posterior) {
        for (std::size_t i = 0; i < n; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                p(i, j) = rng.exponential() + 1e-12;
                total += p(i, j);
            }
            for (std::size_t j = 0; j < m; ++j)
                p(i, j) /= total;
        }
        return p;
    }
    const Matrix centers = restart == 0 ? quantile_centers(z, m) : kmeanspp_centers(z, m, rng);
    const auto assign = lloyd(z, centers);
    const double floor = 0.05 / static_cast<double>(m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            p(i, j) = (assign[i] == j ? 0.95 : 0.0) + floor;
    return p;
}

struct RunResult {
    std::vector<double> weights;
    Matrix posteriors;
    std::vector<std::vector<KernelDensity>> densities;
    int iterations = 0;
    bool converged = false;
    double loglik = -std::numeric_limits<double>::infinity();
    std::vector<double> trace;
};

inline RunResult run_npem(const DataMatrix& data, const std::vector<CoordinateModel>& coords, Matrix posteriors,
                          const FitOptions& opt)
{
    RunResult out;
    const std::size_t n = data.n(), m = posteriors.cols();
    std::vector<double> previous = column_means(posteriors);
    Matrix next(n, m);
    for (int it = 1; it <= opt.max_iterations; ++it) {
        auto weights = column_means(posteriors);
        auto densities = update_densities(coords, posteriors);
        const double loglik = e_step(data, densities, weights, next);

        double weight_change = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            weight_change = std::max(weight_change, std::abs(weights[j] - previous[j]));
        double post_change = 0.0;
        for (std::size_t t = 0; t < next.values().size(); ++t)
            post_change += std::abs(next.values()[t] - posteriors.values()[t]);
        post_change /= static_cast<double>(n);

        std::swap(posteriors, next);
        previous = weights;
        out.weights = std::move(weights);
        out.densities = std::move(densities);
        out.iterations = it;
        out.loglik = loglik;
        out.trace.push_back(loglik);
        if (weight_change + post_change < opt.tolerance) {
            out.converged = true;
            break;
        }
    }
    out.posteriors = std::move(posteriors);
    return out;
}

} // namespace detail

/// Nonparametric EM for an m-component mixture whose r coordinates are
/// independent within each component. Each iteration computes posteriors
/// p_ij proportional to lambda_j prod_k f_jk(x_ik), sets lambda_j to the mean
/// posterior, and re-estimates every f_jk as a posterior-weighted KDE of
/// coordinate k. Bandwidths are fixed per coordinate from the pooled sample.
/// The best of `restarts` runs by smoothed log-likelihood is returned with
/// components ordered by ascending weight.
inline MixtureFit npem_fit(const DataMatrix& data, std::size_t m, const FitOptions& options)
{
    options.validate();
    if (m < 1)
        throw InvalidOptions("component count must be >= 1");
    if (data.r() < 1)
        throw InvalidData("data needs at least one coordinate");
    if (data.n() < m * data.r())
        throw InsufficientData("need n >= m * r observations (n=" + std::to_string(data.n()) +
                               ", m=" + std::to_string(m) + ", r=" + std::to_string(data.r()) + ")");

    MixtureFit fit;
    fit.data = data;
    if (check_identifiability(m, data.r()) == Identifiability::violated)
        fit.warnings.push_back("identifiability condition 2^r - 1 >= m*r + 1 is violated (m=" + std::to_string(m) +
                               ", r=" + std::to_string(data.r()) + "); proceeding anyway");

    std::vector<detail::CoordinateModel> coords(data.r());
    for (std::size_t k = 0; k < data.r(); ++k) {
        coords[k].points = data.column(k);
        coords[k].bandwidth = resolve_bandwidth(options.bandwidth_rule, coords[k].points);
        if (options.kde_grid_size > 0)
            coords[k].grid = std::make_shared<BinnedGrid>(coords[k].points, coords[k].bandwidth, options.kde_grid_size);
        fit.bandwidths.push_back(coords[k].bandwidth);
    }

    const Matrix z = detail::standardized(data);
    const auto restarts = static_cast<std::size_t>(options.restarts);
    std::vector<std::optional<detail::RunResult>> runs(restarts);
    std::vector<std::string> failures(restarts);
    parallel_for(restarts, options.threads, [&](std::size_t s) {
        try {
            runs[s] = detail::run_npem(data, coords, detail::initial_posteriors(data, z, m, options, s), options);
        } catch (const DegenerateWeights& e) {
            failures[s] = e.what();
        }
    });

    std::optional<std::size_t> best;
    for (std::size_t s = 0; s < restarts; ++s) {
        if (!runs[s]) {
            fit.warnings.push_back("restart " + std::to_string(s) + " failed: a component lost all weight (" +
                                   failures[s] + ")");
            continue;
        }
        if (!best || runs[s]->loglik > runs[*best]->loglik)
            best = s;
    }
    if (!best)
        throw EstimationFailure("every restart collapsed a component");

    auto& run = *runs[*best];
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return run.weights[a] < run.weights[b]; });

    for (std::size_t j : order) {
        fit.weights.push_back(run.weights[j]);
        fit.densities.push_back(std::move(run.densities[j]));
    }
    fit.posteriors = Matrix(data.n(), m);
    fit.log_likelihood = detail::e_step(data, fit.densities, fit.weights, fit.posteriors);
    fit.iterations_run = run.iterations;
    fit.converged = run.converged;
    fit.log_likelihood_trace = std::move(run.trace);
    fit.restart_index = *best;
    if (!fit.converged)
        fit.warnings.push_back("no convergence within " + std::to_string(options.max_iterations) + " iterations");
    return fit;
}

/// One E-step at a new point under the frozen fit.
inline std::vector<double> posterior_of(const MixtureFit& fit, std::span<const double> row)
{
    if (row.size() != fit.r())
        throw LengthMismatch("row has " + std::to_string(row.size()) + " coordinates, fit has " +
                             std::to_string(fit.r()));
    for (double v : row)
        if (!std::isfinite(v))
            throw InvalidData("row contains a non-finite value");
    std::vector<double> out(fit.m());
    detail::e_step_row(fit.densities, fit.weights, row, out,
                       [&](std::size_t j, std::size_t k) { return fit.densities[j][k](row[k]); });
    return out;
}

/// density(component, coordinate, value)
using DensityFunction = std::function<double(std::size_t, std::size_t, double)>;

/// Posteriors under externally supplied coordinate densities, e.g. the true
/// densities of a simulation. Computed in the linear domain so that rows
/// where only one component has positive density get posterior exactly 1.
inline Matrix posteriors_from_densities(const DataMatrix& data, std::span<const double> weights,
                                        const DensityFunction& density)
{
    const std::size_t m = weights.size();
    Matrix p(data.n(), m);
    for (std::size_t i = 0; i < data.n(); ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double v = weights[j];
            for (std::size_t k = 0; k < data.r(); ++k)
                v *= density(j, k, data(i, k));
            p(i, j) = v;
            total += v;
        }
        if (!(total > 0.0))
            throw EstimationFailure("row " + std::to_string(i) + " has zero density under every component");
        for (std::size_t j = 0; j < m; ++j)
            p(i, j) /= total;
    }
    return p;
}

} // namespace exomix
