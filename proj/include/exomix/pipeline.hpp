#pragma once

#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "exomix/bootstrap.hpp"
#include "exomix/error.hpp"
#include "exomix/experiments.hpp"
#include "exomix/labeling.hpp"
#include "exomix/labels.hpp"
#include "exomix/npem.hpp"
#include "exomix/panel.hpp"
#include "exomix/regress.hpp"

namespace exomix {

/// Settings for labeling every store-week of a scanner panel with one of
/// three pricing regimes and evaluating the result.
struct PanelPipelineConfig {
    std::vector<PanelKey> demean_group{PanelKey::zone, PanelKey::week, PanelKey::product};
    double product_threshold = 0.03;
    std::optional<std::pair<int, int>> filter_window;
    std::size_t coordinate_cap = 12; // 0 keeps every qualifying product
    MissingPolicy missing = MissingPolicy::drop_unit;
    double max_missing_week_share = 0.15;
    std::size_t m = 3;
    FitOptions fit;
    std::vector<std::string> ordering{label_hilo, label_control, label_edlp}; // highest mean first
    int window = 6;

    void validate() const
    {
        fit.validate();
        if (!(product_threshold > 0.0 && product_threshold < 1.0))
            throw InvalidOptions("product threshold must lie in (0, 1)");
        if (!(max_missing_week_share >= 0.0 && max_missing_week_share < 1.0))
            throw InvalidOptions("max_missing_week_share must lie in [0, 1)");
        if (ordering.size() != m)
            throw InvalidOptions("label ordering must list exactly m labels");
        if (window < 1)
            throw InvalidOptions("window must be >= 1");
        if (filter_window && filter_window->first > filter_window->second)
            throw InvalidOptions("filter window is reversed");
    }
};

struct GroupFit {
    std::string category;
    std::string zone;
    std::vector<std::string> coordinates;
    std::size_t qualifying_products = 0; // before the cap
    std::vector<std::string> excluded_stores;
    std::vector<std::string> dropped_products;
    std::size_t dropped_units = 0;
    std::size_t n_units = 0;
    std::vector<double> weights; // in the order of `labels`
    ComponentLabels labels;
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> notices;
};

struct ElasticityCell {
    std::string category;
    std::optional<RegressionResult> estimate;
    std::size_t pairs = 0;
    std::size_t unmatched = 0;
    std::string note; // why the estimate is missing
};

struct PanelPipelineResult {
    std::vector<GroupFit> groups;
    std::vector<StoreWeekLabel> labels;
    std::optional<AccuracyReport> accuracy;
    std::vector<PriceChangeCell> price_changes;
    std::vector<ElasticityCell> elasticities;
};

/// Matches predicted store-week labels to the truth by (category, zone,
/// store, week); predictions without a true label are ignored.
inline AccuracyReport label_accuracy(const std::vector<StoreWeekLabel>& predicted,
                                     const std::vector<StoreWeekLabel>& truth)
{
    std::map<std::tuple<std::string, std::string, std::string, int>, const std::string*> known;
    for (const auto& t : truth)
        known[{t.category, t.zone, t.store, t.week}] = &t.label;
    std::vector<std::string> pred, real, group;
    for (const auto& p : predicted) {
        auto it = known.find({p.category, p.zone, p.store, p.week});
        if (it == known.end())
            continue;
        pred.push_back(p.label);
        real.push_back(*it->second);
        group.push_back(p.category);
    }
    return accuracy_report(pred, real, &group);
}

/// Per elasticity cell: the matched-pair FE regression, or the reason it is missing.
inline std::vector<ElasticityCell> elasticity_report(const PanelTable& panel, const std::vector<StoreWeekLabel>& labels,
                                                     int window)
{
    std::vector<ElasticityCell> out;
    for (const auto& category : panel.categories()) {
        ElasticityCell cell;
        cell.category = category;
        try {
            const auto design = did_design(panel, labels, category, window);
            cell.pairs = design.pairs.size();
            cell.unmatched = design.unmatched.size();
            cell.estimate = did_elasticity(design);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::estimation && e.kind() != ErrorKind::data)
                throw;
            cell.note = e.what();
        }
        out.push_back(std::move(cell));
    }
    return out;
}

/// Per (category, zone): demeaned log prices of the varying products become
/// the coordinates of an m-component npEM fit; components are labeled by the
/// posterior-weighted mean of the summed coordinates and each store-week
/// takes its argmax label. Price changes and matched-pair elasticities are
/// then computed from the predicted labels, and accuracy when `truth` is given.
inline PanelPipelineResult run_panel_pipeline(const PanelTable& raw, const PanelPipelineConfig& config,
                                              const std::vector<StoreWeekLabel>* truth = nullptr)
{
    config.validate();
    raw.rebuild_index();
    const PanelTable panel = log_demean(raw, config.demean_group);

    PanelPipelineResult out;
    for (const auto& category : panel.categories())
        for (const auto& zone : panel.zones(category)) {
            const std::string where = "category " + category + ", zone " + zone + ": ";
            try {
                const PanelTable group = panel.subset(category, zone);
                const auto varying = filter_products(group, config.product_threshold, config.filter_window);
                WideMatrixSpec spec;
                spec.zone = zone;
                spec.category = category;
                spec.coordinates = choose_coordinates(varying, config.coordinate_cap);
                spec.max_missing_week_share = config.max_missing_week_share;
                const auto wide = to_matrix(group, spec, config.missing);

                const auto fit = npem_fit(wide.data, config.m, config.fit);
                std::vector<std::size_t> all(wide.data.r());
                std::iota(all.begin(), all.end(), 0);
                const auto labels = label_components(fit, LabelRule::moment_order(all, config.ordering));
                const auto argmax = assign_argmax_labels(fit, labels);

                GroupFit g;
                g.category = category;
                g.zone = zone;
                g.coordinates = wide.coordinates;
                g.qualifying_products = varying.size();
                g.excluded_stores = wide.excluded_stores;
                g.dropped_products = wide.dropped_products;
                g.dropped_units = wide.dropped_units;
                g.n_units = wide.units.size();
                g.weights = fit.weights;
                g.labels = labels;
                g.iterations = fit.iterations_run;
                g.converged = fit.converged;
                g.notices = wide.notices;
                g.notices.insert(g.notices.end(), fit.warnings.begin(), fit.warnings.end());
                if (config.coordinate_cap != 0 && varying.size() > config.coordinate_cap)
                    g.notices.push_back("coordinate cap: using " + std::to_string(config.coordinate_cap) + " of " +
                                        std::to_string(varying.size()) + " qualifying products");
                out.groups.push_back(std::move(g));
                for (std::size_t i = 0; i < wide.units.size(); ++i)
                    out.labels.push_back({category, zone, wide.units[i].store, wide.units[i].week, argmax[i]});
            } catch (const Error& e) {
                throw Error(e.kind(), where + e.what());
            }
        }

    if (truth)
        out.accuracy = label_accuracy(out.labels, *truth);
    out.price_changes = price_change_report(raw, out.labels, config.window);
    out.elasticities = elasticity_report(raw, out.labels, config.window);
    return out;
}

} // namespace exomix
