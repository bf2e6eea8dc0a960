#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "exomix/error.hpp"

namespace exomix {

namespace detail {

inline constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343818684758586311649;

// Kernel support is truncated at this many bandwidths on binned grids;
// the neglected Gaussian tail mass is below 1.3e-15.
inline constexpr double binned_cutoff = 8.0;

// R type-7 sample quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double prob)
{
    const double pos = prob * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline void check_bandwidth(double h)
{
    if (!(h > 0.0) || !std::isfinite(h))
        throw InvalidBandwidth("bandwidth must be positive and finite, got " + std::to_string(h));
}

} // namespace detail

/// How a kernel bandwidth is chosen for a coordinate.
struct BandwidthRule {
    enum class Kind { silverman, fixed };

    Kind kind = Kind::silverman;
    double value = 0.0;

    static BandwidthRule silverman() { return {}; }

    static BandwidthRule fixed(double h)
    {
        detail::check_bandwidth(h);
        return {Kind::fixed, h};
    }

    bool operator==(const BandwidthRule&) const = default;
};

/// Points with non-negative weights; weights need not be normalized.
class WeightedSample {
public:
    WeightedSample() = default;

    WeightedSample(std::vector<double> points, std::vector<double> weights)
        : points_(std::move(points)), weights_(std::move(weights))
    {
        if (points_.size() != weights_.size())
            throw LengthMismatch("weighted sample: points and weights differ in length");
        if (points_.empty())
            throw DegenerateWeights("weighted sample is empty");
        uniform_ = true;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            const double w = weights_[i];
            if (!std::isfinite(w) || w < 0.0)
                throw InvalidData("weights must be finite and non-negative");
            if (!std::isfinite(points_[i]))
                throw InvalidData("sample points must be finite");
            total_ += w;
            uniform_ = uniform_ && w == weights_[0];
        }
        if (!(total_ > 0.0))
            throw DegenerateWeights("all weights are zero");
    }

    static WeightedSample unweighted(std::vector<double> points)
    {
        std::vector<double> w(points.size(), 1.0);
        return {std::move(points), std::move(w)};
    }

    const std::vector<double>& points() const noexcept { return points_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    double total_weight() const noexcept { return total_; }
    bool uniform_weights() const noexcept { return uniform_; }
    std::size_t size() const noexcept { return points_.size(); }

private:
    std::vector<double> points_;
    std::vector<double> weights_;
    double total_ = 0.0;
    bool uniform_ = true;
};

/// Rule-of-thumb bandwidth 0.9 * min(sd, IQR / 1.34) * n^(-1/5).
inline double silverman_bandwidth(std::span<const double> sample)
{
    if (sample.size() < 2)
        throw DegenerateSample("bandwidth rule needs at least two observations");
    const double n = static_cast<double>(sample.size());
    double mean = 0.0;
    for (double v : sample)
        mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : sample)
        ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 0.0))
        throw DegenerateSample("sample has zero spread");

    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const double iqr = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);
    const double scale = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    return 0.9 * scale * std::pow(n, -0.2);
}

inline double resolve_bandwidth(const BandwidthRule& rule, std::span<const double> sample)
{
    if (rule.kind == BandwidthRule::Kind::fixed) {
        detail::check_bandwidth(rule.value);
        return rule.value;
    }
    return silverman_bandwidth(sample);
}

/// Unweighted Gaussian KDE, (1 / nh) sum_i phi((u - x_i) / h).
inline std::vector<double> kde_eval(std::span<const double> points, double h, std::span<const double> query)
{
    detail::check_bandwidth(h);
    if (points.empty())
        throw DegenerateWeights("kde over an empty sample");
    const double norm = detail::inv_sqrt_2pi / (h * static_cast<double>(points.size()));
    std::vector<double> out(query.size());
    for (std::size_t q = 0; q < query.size(); ++q) {
        double acc = 0.0;
        for (double x : points) {
            const double z = (query[q] - x) / h;
            acc += std::exp(-0.5 * z * z);
        }
        out[q] = acc * norm;
    }
    return out;
}

/// Weighted Gaussian KDE, sum_i w_i K_h(u - x_i) / sum_i w_i.
/// Equal weights take the unweighted path so the two agree exactly.
inline std::vector<double> kde_eval(const WeightedSample& sample, double h, std::span<const double> query)
{
    detail::check_bandwidth(h);
    if (sample.uniform_weights())
        return kde_eval(std::span<const double>(sample.points()), h, query);
    const auto& xs = sample.points();
    const auto& ws = sample.weights();
    const double norm = detail::inv_sqrt_2pi / (h * sample.total_weight());
    std::vector<double> out(query.size());
    for (std::size_t q = 0; q < query.size(); ++q) {
        double acc = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (ws[i] == 0.0)
                continue;
            const double z = (query[q] - xs[i]) / h;
            acc += ws[i] * std::exp(-0.5 * z * z);
        }
        out[q] = acc * norm;
    }
    return out;
}

/// log of the weighted KDE at u, finite even where exp underflows.
inline double kde_log_density(const WeightedSample& sample, double h, double u)
{
    const double direct = kde_eval(sample, h, std::span<const double>(&u, 1))[0];
    if (direct > 1e-280)
        return std::log(direct);

    const auto& xs = sample.points();
    const auto& ws = sample.weights();
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (ws[i] == 0.0)
            continue;
        const double z = (u - xs[i]) / h;
        top = std::max(top, std::log(ws[i]) - 0.5 * z * z);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (ws[i] == 0.0)
            continue;
        const double z = (u - xs[i]) / h;
        acc += std::exp(std::log(ws[i]) - 0.5 * z * z - top);
    }
    return top + std::log(acc) + std::log(detail::inv_sqrt_2pi / (h * sample.total_weight()));
}

/// Evaluation grid shared by every binned density over the same points and
/// bandwidth. Nodes span [min - 8h, max + 8h]; the linear-binning position of
/// each point and the truncated kernel weights are computed once.
class BinnedGrid {
public:
    BinnedGrid(std::span<const double> points, double h, std::size_t grid_size)
        : bandwidth_(h), size_(grid_size)
    {
        detail::check_bandwidth(h);
        if (grid_size < 64)
            throw InvalidOptions("binned kde needs grid_size >= 64");
        if (points.empty())
            throw DegenerateWeights("kde over an empty sample");
        const auto [lo_it, hi_it] = std::minmax_element(points.begin(), points.end());
        lower_ = *lo_it - detail::binned_cutoff * h;
        upper_ = *hi_it + detail::binned_cutoff * h;
        spacing_ = (upper_ - lower_) / static_cast<double>(grid_size - 1);

        const auto reach = static_cast<std::size_t>(std::ceil(detail::binned_cutoff * h / spacing_));
        kernel_.resize(reach + 1);
        for (std::size_t d = 0; d <= reach; ++d) {
            const double z = static_cast<double>(d) * spacing_ / h;
            kernel_[d] = detail::inv_sqrt_2pi / h * std::exp(-0.5 * z * z);
        }

        cell_.resize(points.size());
        frac_.resize(points.size());
        for (std::size_t i = 0; i < points.size(); ++i)
            locate(points[i], cell_[i], frac_[i]);
    }

    double lower() const noexcept { return lower_; }
    double upper() const noexcept { return upper_; }
    double spacing() const noexcept { return spacing_; }
    double bandwidth() const noexcept { return bandwidth_; }
    std::size_t size() const noexcept { return size_; }
    bool covers(double u) const noexcept { return u >= lower_ && u <= upper_; }

    /// Worst-case |binned - exact| from linear binning plus linear
    /// interpolation: spacing^2 / 4 * sup|K_h''| = spacing^2 / (4 sqrt(2 pi) h^3).
    static double error_bound(double spacing, double h)
    {
        return spacing * spacing * detail::inv_sqrt_2pi / (4.0 * h * h * h);
    }
    double error_bound() const { return error_bound(spacing_, bandwidth_); }

    /// Density values at the nodes for the given point weights.
    std::vector<double> node_values(std::span<const double> weights, double total_weight) const
    {
        std::vector<double> bins(size_, 0.0);
        for (std::size_t i = 0; i < cell_.size(); ++i) {
            const double w = weights[i] / total_weight;
            bins[cell_[i]] += w * (1.0 - frac_[i]);
            bins[cell_[i] + 1] += w * frac_[i];
        }
        std::vector<double> values(size_, 0.0);
        const std::size_t reach = kernel_.size() - 1;
        const double* kernel = kernel_.data();
        for (std::size_t b = 0; b < size_; ++b) {
            const double mass = bins[b];
            if (mass == 0.0)
                continue;
            const std::size_t first = b >= reach ? b - reach : 0;
            const std::size_t last = std::min(size_ - 1, b + reach);
            double* out = values.data();
            for (std::size_t c = first; c < b; ++c)
                out[c] += mass * kernel[b - c];
            for (std::size_t c = b; c <= last; ++c)
                out[c] += mass * kernel[c - b];
        }
        return values;
    }

    /// Linear interpolation of node values at u (u must be covered).
    double interpolate(std::span<const double> values, double u) const noexcept
    {
        std::size_t cell;
        double frac;
        locate(u, cell, frac);
        return values[cell] * (1.0 - frac) + values[cell + 1] * frac;
    }

    /// Same as interpolate(values, points[i]) for the i-th point the grid was built over.
    double interpolate_point(std::span<const double> values, std::size_t i) const noexcept
    {
        return values[cell_[i]] * (1.0 - frac_[i]) + values[cell_[i] + 1] * frac_[i];
    }

    std::size_t point_count() const noexcept { return cell_.size(); }

private:
    void locate(double u, std::size_t& cell, double& frac) const noexcept
    {
        const double pos = (u - lower_) / spacing_;
        auto c = static_cast<std::size_t>(std::max(0.0, std::floor(pos)));
        if (c > size_ - 2)
            c = size_ - 2;
        cell = c;
        frac = std::clamp(pos - static_cast<double>(c), 0.0, 1.0);
    }

    double bandwidth_;
    std::size_t size_;
    double lower_ = 0.0;
    double upper_ = 0.0;
    double spacing_ = 0.0;
    std::vector<double> kernel_;
    std::vector<std::size_t> cell_;
    std::vector<double> frac_;
};

/// Linear-binned approximation to kde_eval. Inside the grid the absolute
/// deviation from kde_eval is bounded by BinnedGrid::error_bound(); queries
/// beyond the padded grid are evaluated exactly.
inline std::vector<double> kde_eval_binned(const WeightedSample& sample, double h, std::size_t grid_size,
                                           std::span<const double> query)
{
    const BinnedGrid grid(sample.points(), h, grid_size);
    const auto values = grid.node_values(sample.weights(), sample.total_weight());
    std::vector<double> out(query.size());
    for (std::size_t q = 0; q < query.size(); ++q) {
        if (grid.covers(query[q]))
            out[q] = std::max(0.0, grid.interpolate(values, query[q]));
        else
            out[q] = kde_eval(sample, h, query.subspan(q, 1))[0];
    }
    return out;
}

/// A weighted Gaussian KDE with a fixed bandwidth, optionally backed by a
/// binned grid. Immutable once built.
class KernelDensity {
public:
    KernelDensity() = default;

    KernelDensity(WeightedSample sample, double h, std::shared_ptr<const BinnedGrid> grid = nullptr)
        : sample_(std::move(sample)), bandwidth_(h), grid_(std::move(grid))
    {
        detail::check_bandwidth(h);
        if (grid_) {
            if (grid_->point_count() != sample_.size())
                throw LengthMismatch("binned grid was built over a different sample");
            nodes_ = grid_->node_values(sample_.weights(), sample_.total_weight());
        }
    }

    double operator()(double u) const
    {
        if (grid_ && grid_->covers(u))
            return std::max(0.0, grid_->interpolate(nodes_, u));
        return kde_eval(sample_, bandwidth_, std::span<const double>(&u, 1))[0];
    }

    double log_density(double u) const
    {
        if (grid_ && grid_->covers(u)) {
            const double v = grid_->interpolate(nodes_, u);
            if (v > 1e-280)
                return std::log(v);
        }
        return kde_log_density(sample_, bandwidth_, u);
    }

    /// Density at the i-th sample point; identical to (*this)(sample().points()[i]).
    double at_sample_point(std::size_t i) const
    {
        if (grid_)
            return std::max(0.0, grid_->interpolate_point(nodes_, i));
        return (*this)(sample_.points()[i]);
    }

    std::vector<double> evaluate(std::span<const double> query) const
    {
        std::vector<double> out(query.size());
        for (std::size_t q = 0; q < query.size(); ++q)
            out[q] = (*this)(query[q]);
        return out;
    }

    const WeightedSample& sample() const noexcept { return sample_; }
    double bandwidth() const noexcept { return bandwidth_; }
    /// 0 when evaluated exactly.
    std::size_t grid_size() const noexcept { return grid_ ? grid_->size() : 0; }

private:
    WeightedSample sample_;
    double bandwidth_ = 1.0;
    std::shared_ptr<const BinnedGrid> grid_;
    std::vector<double> nodes_;
};

} // namespace exomix
