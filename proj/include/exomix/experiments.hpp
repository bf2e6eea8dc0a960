#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "exomix/error.hpp"
#include "exomix/labels.hpp"
#include "exomix/panel.hpp"
#include "exomix/regress.hpp"

namespace exomix {

/// A store that priced `window` weeks as Control and then `window` weeks
/// under one treatment regime, starting at start_week.
struct ExperimentRun {
    std::string store;
    std::string zone;
    int start_week = 0;
    std::string regime;
};

namespace detail {

using WeekLabels = std::map<std::string, std::map<int, std::string>>; // store -> week -> label

inline WeekLabels labels_for(const std::vector<StoreWeekLabel>& labels, const std::string& category)
{
    WeekLabels out;
    for (const auto& l : labels)
        if (l.category == category)
            out[l.store][l.week] = l.label;
    return out;
}

// Whether `store` carries `label` in every week of [from, from + count).
inline bool holds(const WeekLabels& labels, const std::string& store, int from, int count, const std::string& label)
{
    auto s = labels.find(store);
    if (s == labels.end())
        return false;
    for (int w = from; w < from + count; ++w) {
        auto it = s->second.find(w);
        if (it == s->second.end() || it->second != label)
            return false;
    }
    return true;
}

inline void check_window(int window)
{
    if (window < 1)
        throw InvalidOptions("window must be >= 1 week");
}

} // namespace detail

/// Every run of `window` Control weeks followed directly by `window` weeks
/// of one of `regimes`, within one category.
inline std::vector<ExperimentRun> find_experiment_runs(const PanelTable& panel, const std::vector<StoreWeekLabel>& labels,
                                                       const std::string& category, int window,
                                                       const std::vector<std::string>& regimes = {label_hilo,
                                                                                                 label_edlp})
{
    detail::check_window(window);
    const auto by_store = detail::labels_for(labels, category);
    std::map<std::string, std::string> zone_of;
    for (const auto& r : panel.rows)
        if (r.category == category)
            zone_of.emplace(r.store, r.zone);
    std::vector<ExperimentRun> out;
    for (const auto& [store, weeks] : by_store) {
        if (!zone_of.count(store))
            continue;
        for (const auto& [week, label] : weeks) {
            if (label != label_control || !detail::holds(by_store, store, week, window, label_control))
                continue;
            for (const auto& regime : regimes)
                if (detail::holds(by_store, store, week + window, window, regime))
                    out.push_back({store, zone_of.at(store), week, regime});
        }
    }
    return out;
}

struct PriceChangeCell {
    std::string category;
    std::string regime;
    std::optional<double> percent; // missing when no window qualifies
    std::size_t runs = 0;
};

/// Mean log-price difference (treatment window minus the Control window
/// before it) over all qualifying runs, in percent. Each store-week price is
/// the mean log price over the category's products.
inline PriceChangeCell price_change(const PanelTable& panel, const std::vector<StoreWeekLabel>& labels,
                                    const std::string& category, const std::string& regime, int window = 6)
{
    const auto runs = find_experiment_runs(panel, labels, category, window, {regime});
    if (runs.empty())
        throw NoQualifyingWindow("category " + category + ": no " + std::to_string(window) + "+" +
                                 std::to_string(window) + " week Control -> " + regime + " window");
    std::map<std::pair<std::string, int>, std::pair<double, std::size_t>> cell;
    for (const auto& r : panel.rows)
        if (r.category == category) {
            auto& c = cell[{r.store, r.week}];
            c.first += std::log(r.price);
            ++c.second;
        }
    auto mean_over = [&](const std::string& store, int from) {
        double total = 0.0;
        std::size_t weeks = 0;
        for (int w = from; w < from + window; ++w) {
            auto it = cell.find({store, w});
            if (it == cell.end())
                continue;
            total += it->second.first / static_cast<double>(it->second.second);
            ++weeks;
        }
        return weeks ? total / static_cast<double>(weeks) : std::numeric_limits<double>::quiet_NaN();
    };

    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& run : runs) {
        const double d = mean_over(run.store, run.start_week + window) - mean_over(run.store, run.start_week);
        if (std::isfinite(d)) {
            sum += d;
            ++used;
        }
    }
    if (used == 0)
        throw NoQualifyingWindow("category " + category + ": qualifying " + regime + " windows have no prices");
    return {category, regime, 100.0 * sum / static_cast<double>(used), used};
}

/// price_change for every category and regime; categories without a
/// qualifying window are reported as missing rather than failing.
inline std::vector<PriceChangeCell> price_change_report(const PanelTable& panel,
                                                        const std::vector<StoreWeekLabel>& labels, int window = 6,
                                                        const std::vector<std::string>& regimes = {label_hilo,
                                                                                                  label_edlp})
{
    detail::check_window(window);
    std::vector<PriceChangeCell> out;
    for (const auto& category : panel.categories())
        for (const auto& regime : regimes) {
            try {
                out.push_back(price_change(panel, labels, category, regime, window));
            } catch (const NoQualifyingWindow&) {
                out.push_back({category, regime, std::nullopt, 0});
            }
        }
    return out;
}

struct MatchedPair {
    ExperimentRun run;
    std::string control_store;
};

struct DidDesign {
    std::string category;
    Frame frame; // log_quantity, log_price; factors product, store, period, pair
    std::vector<MatchedPair> pairs;
    std::vector<ExperimentRun> unmatched;
};

/// Pairs every experiment run with a store labeled Control for the same
/// 2 * window weeks (exact-window matching: the first such store by name
/// not already used for that start week), then averages each product over
/// the Control and treatment halves: one row per product, store and period
/// holding log mean quantity and log mean price.
inline DidDesign did_design(const PanelTable& panel, const std::vector<StoreWeekLabel>& labels,
                            const std::string& category, int window = 6)
{
    const auto runs = find_experiment_runs(panel, labels, category, window);
    const auto by_store = detail::labels_for(labels, category);

    std::map<std::tuple<std::string, int, std::string>, const PanelRow*> rows; // (store, week, product)
    std::set<std::string> products;
    for (const auto& r : panel.rows)
        if (r.category == category) {
            rows[{r.store, r.week, r.product}] = &r;
            products.insert(r.product);
        }

    DidDesign out;
    out.category = category;
    std::map<int, std::set<std::string>> used; // start week -> control stores taken
    for (const auto& run : runs) {
        std::optional<std::string> match;
        for (const auto& [store, weeks] : by_store) {
            if (store == run.store || used[run.start_week].count(store))
                continue;
            if (detail::holds(by_store, store, run.start_week, 2 * window, label_control)) {
                match = store;
                break;
            }
        }
        if (!match) {
            out.unmatched.push_back(run);
            continue;
        }
        used[run.start_week].insert(*match);
        out.pairs.push_back({run, *match});
    }

    auto& lq = out.frame.numeric["log_quantity"];
    auto& lp = out.frame.numeric["log_price"];
    auto& f_product = out.frame.factors["product"];
    auto& f_store = out.frame.factors["store"];
    auto& f_period = out.frame.factors["period"];
    auto& f_pair = out.frame.factors["pair"];
    for (std::size_t p = 0; p < out.pairs.size(); ++p) {
        const auto& pair = out.pairs[p];
        for (const auto* store : {&pair.run.store, &pair.control_store})
            for (int half = 0; half < 2; ++half)
                for (const auto& product : products) {
                    double price = 0.0, quantity = 0.0;
                    std::size_t count = 0;
                    const int from = pair.run.start_week + half * window;
                    for (int w = from; w < from + window; ++w) {
                        auto it = rows.find({*store, w, product});
                        if (it == rows.end() || !(it->second->quantity > 0.0))
                            continue;
                        price += it->second->price;
                        quantity += it->second->quantity;
                        ++count;
                    }
                    if (count == 0)
                        continue;
                    lq.push_back(std::log(quantity / static_cast<double>(count)));
                    lp.push_back(std::log(price / static_cast<double>(count)));
                    f_product.push_back(product);
                    f_store.push_back(*store);
                    f_period.push_back(half == 0 ? "control" : "treatment");
                    f_pair.push_back(std::to_string(p));
                }
    }
    return out;
}

/// Elasticity from the matched-pair design: log quantity on log price with
/// product, store and period fixed effects, clustered by store.
inline RegressionResult did_elasticity(const DidDesign& design)
{
    if (design.pairs.empty())
        throw NoQualifyingWindow("category " + design.category + ": no matched experiment/control pairs");
    return fe_regression(design.frame, {"log_quantity", "log_price", {"product", "store", "period"}, "store"});
}

} // namespace exomix
