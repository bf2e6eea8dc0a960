#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "exomix/error.hpp"
#include "exomix/labels.hpp"
#include "exomix/matrix.hpp"
#include "exomix/npem.hpp"

namespace exomix {

/// How mixture components are mapped to meaningful labels.
///
/// weight_order: two components; the heavier one gets `majority`.
/// moment_order: components are ranked by the posterior-weighted mean of the
/// row sum over `coordinates`; `ordering` lists labels from highest to lowest.
struct LabelRule {
    enum class Kind { weight_order, moment_order };

    Kind kind = Kind::moment_order;
    std::string majority;
    std::string minority;
    std::vector<std::size_t> coordinates;
    std::vector<std::string> ordering;

    static LabelRule weight_order(std::string majority_label, std::string minority_label)
    {
        LabelRule rule;
        rule.kind = Kind::weight_order;
        rule.majority = std::move(majority_label);
        rule.minority = std::move(minority_label);
        rule.validate();
        return rule;
    }

    static LabelRule moment_order(std::vector<std::size_t> coordinate_set, std::vector<std::string> highest_first)
    {
        LabelRule rule;
        rule.kind = Kind::moment_order;
        rule.coordinates = std::move(coordinate_set);
        rule.ordering = std::move(highest_first);
        rule.validate();
        return rule;
    }

    std::size_t arity() const { return kind == Kind::weight_order ? 2 : ordering.size(); }

    std::vector<std::string> labels() const
    {
        return kind == Kind::weight_order ? std::vector<std::string>{majority, minority} : ordering;
    }

    void validate() const
    {
        const auto all = labels();
        if (all.empty())
            throw InvalidOptions("label rule needs at least one label");
        if (std::set<std::string>(all.begin(), all.end()).size() != all.size())
            throw InvalidOptions("label rule labels must be distinct");
        for (const auto& l : all)
            if (l.empty())
                throw InvalidOptions("labels must be non-empty");
        if (kind == Kind::moment_order && coordinates.empty())
            throw InvalidOptions("moment rule needs at least one coordinate");
    }
};

/// component index -> label
struct ComponentLabels {
    std::vector<std::string> names;

    std::size_t index_of(const std::string& label) const
    {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == label)
                return j;
        throw InvalidOptions("label '" + label + "' is not assigned to any component");
    }

    bool operator==(const ComponentLabels&) const = default;
};

struct SelectionResult {
    std::vector<std::size_t> indices; // sorted
    double threshold = 0.0;
    std::vector<double> target_posteriors; // every row, not only the selected ones
};

namespace detail {

inline void check_posteriors(const Matrix& posteriors, std::size_t n, std::size_t m)
{
    if (posteriors.rows() != n || posteriors.cols() != m)
        throw LengthMismatch("posterior matrix is " + std::to_string(posteriors.rows()) + "x" +
                             std::to_string(posteriors.cols()) + ", expected " + std::to_string(n) + "x" +
                             std::to_string(m));
}

// Labels components by descending score, refusing near ties.
inline ComponentLabels rank_labels(const std::vector<double>& score, const std::vector<std::string>& highest_first,
                                   const char* what)
{
    std::vector<std::size_t> order(score.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    for (std::size_t t = 1; t < order.size(); ++t)
        if (!(std::abs(score[order[t - 1]] - score[order[t]]) > 1e-9))
            throw AmbiguousLabeling(std::string("components ") + std::to_string(order[t - 1]) + " and " +
                                    std::to_string(order[t]) + " tie on " + what);
    ComponentLabels out;
    out.names.resize(score.size());
    for (std::size_t t = 0; t < order.size(); ++t)
        out.names[order[t]] = highest_first[t];
    return out;
}

} // namespace detail

/// Labels from data, posteriors and weights directly; lets oracle posteriors
/// go through the same rule as fitted ones.
inline ComponentLabels label_components(const DataMatrix& data, const Matrix& posteriors,
                                        std::span<const double> weights, const LabelRule& rule)
{
    rule.validate();
    const std::size_t m = weights.size();
    if (rule.arity() != m)
        throw InvalidOptions("label rule has " + std::to_string(rule.arity()) + " labels but the fit has " +
                             std::to_string(m) + " components");
    detail::check_posteriors(posteriors, data.n(), m);

    if (rule.kind == LabelRule::Kind::weight_order)
        return detail::rank_labels(std::vector<double>(weights.begin(), weights.end()), rule.labels(), "weight");

    for (std::size_t k : rule.coordinates)
        if (k >= data.r())
            throw InvalidOptions("moment rule coordinate " + std::to_string(k) + " out of range (r=" +
                                 std::to_string(data.r()) + ")");
    std::vector<double> num(m, 0.0), den(m, 0.0);
    for (std::size_t i = 0; i < data.n(); ++i) {
        double s = 0.0;
        for (std::size_t k : rule.coordinates)
            s += data(i, k);
        for (std::size_t j = 0; j < m; ++j) {
            num[j] += posteriors(i, j) * s;
            den[j] += posteriors(i, j);
        }
    }
    std::vector<double> mean(m);
    for (std::size_t j = 0; j < m; ++j) {
        if (!(den[j] > 0.0))
            throw AmbiguousLabeling("component " + std::to_string(j) + " has no posterior mass");
        mean[j] = num[j] / den[j];
    }
    return detail::rank_labels(mean, rule.ordering, "the posterior-weighted mean");
}

inline ComponentLabels label_components(const MixtureFit& fit, const LabelRule& rule)
{
    return label_components(fit.data, fit.posteriors, fit.weights, rule);
}

/// Rows whose posterior for `target` is at least p.
inline SelectionResult select_subset(const Matrix& posteriors, const ComponentLabels& labels,
                                     const std::string& target, double p)
{
    if (!(p >= 0.0 && p <= 1.0))
        throw InvalidOptions("threshold p must lie in [0, 1]");
    if (labels.names.size() != posteriors.cols())
        throw LengthMismatch("labels do not match the posterior matrix");
    const std::size_t j = labels.index_of(target);
    SelectionResult out;
    out.threshold = p;
    out.target_posteriors.resize(posteriors.rows());
    for (std::size_t i = 0; i < posteriors.rows(); ++i) {
        out.target_posteriors[i] = posteriors(i, j);
        if (posteriors(i, j) >= p)
            out.indices.push_back(i);
    }
    if (out.indices.empty())
        throw EmptySelection("no row has posterior >= " + std::to_string(p) + " for '" + target + "'");
    return out;
}

inline SelectionResult select_subset(const MixtureFit& fit, const ComponentLabels& labels, const std::string& target,
                                     double p)
{
    return select_subset(fit.posteriors, labels, target, p);
}

/// Label of the largest posterior per row. Exact ties go to `tie_label` when
/// it is among the tied components, otherwise to the lowest index.
inline std::vector<std::string> assign_argmax_labels(const Matrix& posteriors, const ComponentLabels& labels,
                                                     const std::string& tie_label = label_control)
{
    if (labels.names.size() != posteriors.cols())
        throw LengthMismatch("labels do not match the posterior matrix");
    std::vector<std::string> out(posteriors.rows());
    for (std::size_t i = 0; i < posteriors.rows(); ++i) {
        const auto row = posteriors.row(i);
        const double top = *std::max_element(row.begin(), row.end());
        std::optional<std::size_t> pick;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] != top)
                continue;
            if (!pick || labels.names[j] == tie_label)
                pick = j;
            if (labels.names[j] == tie_label)
                break;
        }
        out[i] = labels.names[*pick];
    }
    return out;
}

inline std::vector<std::string> assign_argmax_labels(const MixtureFit& fit, const ComponentLabels& labels,
                                                     const std::string& tie_label = label_control)
{
    return assign_argmax_labels(fit.posteriors, labels, tie_label);
}

struct AccuracyCounts {
    std::string group;
    std::size_t n_rows = 0;
    std::size_t n_correct = 0;

    double accuracy() const { return n_rows ? static_cast<double>(n_correct) / static_cast<double>(n_rows) : 0.0; }
};

struct AccuracyReport {
    AccuracyCounts overall;
    std::vector<AccuracyCounts> groups; // sorted by group name; empty when ungrouped
};

/// Exact-match counts, optionally split by a per-row group key.
inline AccuracyReport accuracy_report(const std::vector<std::string>& predicted, const std::vector<std::string>& truth,
                                      const std::vector<std::string>* groups = nullptr)
{
    if (predicted.size() != truth.size())
        throw LengthMismatch("predicted and true labels differ in length (" + std::to_string(predicted.size()) +
                             " vs " + std::to_string(truth.size()) + ")");
    if (groups && groups->size() != predicted.size())
        throw LengthMismatch("group keys differ in length from the labels");
    AccuracyReport out;
    out.overall.group = "all";
    std::map<std::string, AccuracyCounts> by_group;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool hit = predicted[i] == truth[i];
        ++out.overall.n_rows;
        out.overall.n_correct += hit;
        if (groups) {
            auto& g = by_group[(*groups)[i]];
            g.group = (*groups)[i];
            ++g.n_rows;
            g.n_correct += hit;
        }
    }
    for (auto& [name, counts] : by_group)
        out.groups.push_back(counts);
    return out;
}

} // namespace exomix
