#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "exomix/csv.hpp"
#include "exomix/error.hpp"
#include "exomix/matrix.hpp"

namespace exomix {

/// One scanner observation. `quantity` is NaN when not recorded;
/// `demeaned` is NaN until log_demean fills it.
struct PanelRow {
    std::string category;
    std::string zone;
    std::string store;
    int week = 0;
    std::string product;
    double price = 0.0;
    double quantity = std::numeric_limits<double>::quiet_NaN();
    double demeaned = std::numeric_limits<double>::quiet_NaN();
};

/// Long-format panel keyed by (category, zone, store, week, product).
struct PanelTable {
    std::vector<PanelRow> rows;

    /// Enforces key uniqueness and the positive-price invariant.
    void rebuild_index() const
    {
        std::set<std::tuple<std::string, std::string, std::string, int, std::string>> seen;
        for (const auto& r : rows) {
            if (!(r.price > 0.0) || !std::isfinite(r.price))
                throw InvalidData("price must be positive for " + r.store + "/" + std::to_string(r.week) + "/" +
                                  r.product);
            if (!seen.emplace(r.category, r.zone, r.store, r.week, r.product).second)
                throw DuplicateKey("duplicate key (category=" + r.category + ", zone=" + r.zone +
                                   ", store=" + r.store + ", week=" + std::to_string(r.week) +
                                   ", product=" + r.product + ")");
        }
    }

    bool has_demeaned() const
    {
        return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const PanelRow& r) {
                   return std::isfinite(r.demeaned);
               });
    }

    std::vector<std::string> categories() const
    {
        std::set<std::string> s;
        for (const auto& r : rows)
            s.insert(r.category);
        return {s.begin(), s.end()};
    }

    std::vector<std::string> zones(const std::string& category) const
    {
        std::set<std::string> s;
        for (const auto& r : rows)
            if (r.category == category)
                s.insert(r.zone);
        return {s.begin(), s.end()};
    }

    PanelTable subset(const std::string& category, const std::optional<std::string>& zone = std::nullopt) const
    {
        PanelTable out;
        for (const auto& r : rows)
            if (r.category == category && (!zone || r.zone == *zone))
                out.rows.push_back(r);
        return out;
    }
};

/// Regime label of one store-week in one category.
struct StoreWeekLabel {
    std::string category;
    std::string zone;
    std::string store;
    int week = 0;
    std::string label;
};

/// Maps logical panel fields to CSV header names. An empty quantity name
/// means the file has no quantity column.
struct SchemaMap {
    std::string category = "category";
    std::string zone = "zone";
    std::string store = "store";
    std::string week = "week";
    std::string product = "product";
    std::string price = "price";
    std::string quantity = "quantity";
};

inline PanelTable load_panel(std::istream& in, const SchemaMap& schema = {})
{
    const auto table = csv::read(in);
    const std::size_t c_cat = table.column(schema.category);
    const std::size_t c_zone = table.column(schema.zone);
    const std::size_t c_store = table.column(schema.store);
    const std::size_t c_week = table.column(schema.week);
    const std::size_t c_prod = table.column(schema.product);
    const std::size_t c_price = table.column(schema.price);
    std::optional<std::size_t> c_qty;
    if (!schema.quantity.empty())
        c_qty = table.column(schema.quantity);

    PanelTable panel;
    panel.rows.reserve(table.rows.size());
    for (std::size_t t = 0; t < table.rows.size(); ++t) {
        const auto& f = table.rows[t];
        const std::size_t line = table.line_numbers[t];
        PanelRow row;
        row.category = f[c_cat];
        row.zone = f[c_zone];
        row.store = f[c_store];
        row.product = f[c_prod];
        const auto week = csv::parse_integer(f[c_week], line, schema.week);
        if (week < std::numeric_limits<int>::min() || week > std::numeric_limits<int>::max())
            throw ParseError("line " + std::to_string(line) + ": week out of range");
        row.week = static_cast<int>(week);
        row.price = csv::parse_double(f[c_price], line, schema.price);
        if (!(row.price > 0.0) || !std::isfinite(row.price))
            throw InvalidData("line " + std::to_string(line) + ": price must be positive (log undefined), got '" +
                              f[c_price] + "'");
        if (c_qty && !f[*c_qty].empty()) {
            row.quantity = csv::parse_double(f[*c_qty], line, schema.quantity);
            if (!(row.quantity >= 0.0) || !std::isfinite(row.quantity))
                throw InvalidData("line " + std::to_string(line) + ": quantity must be non-negative");
        }
        panel.rows.push_back(std::move(row));
    }
    panel.rebuild_index();
    return panel;
}

inline void write_panel(std::ostream& out, const PanelTable& panel, bool with_demeaned)
{
    std::vector<std::string> header{"category", "zone", "store", "week", "product", "price", "quantity"};
    if (with_demeaned)
        header.push_back("log_price_demeaned");
    csv::write_row(out, header);
    for (const auto& r : panel.rows) {
        std::vector<std::string> f{r.category, r.zone, r.store, std::to_string(r.week), r.product, csv::format(r.price),
                                   std::isnan(r.quantity) ? std::string() : csv::format(r.quantity)};
        if (with_demeaned)
            f.push_back(csv::format(r.demeaned));
        csv::write_row(out, f);
    }
}

/// category,zone,store,week,label
inline void write_labels(std::ostream& out, const std::vector<StoreWeekLabel>& labels)
{
    csv::write_row(out, {"category", "zone", "store", "week", "label"});
    for (const auto& l : labels)
        csv::write_row(out, {l.category, l.zone, l.store, std::to_string(l.week), l.label});
}

inline std::vector<StoreWeekLabel> read_labels(std::istream& in)
{
    const auto table = csv::read(in);
    const std::size_t c_cat = table.column("category"), c_zone = table.column("zone"),
                      c_store = table.column("store"), c_week = table.column("week"),
                      c_label = table.column("label");
    std::vector<StoreWeekLabel> out;
    std::set<std::tuple<std::string, std::string, std::string, int>> seen;
    for (std::size_t t = 0; t < table.rows.size(); ++t) {
        const auto& f = table.rows[t];
        StoreWeekLabel l{f[c_cat], f[c_zone], f[c_store],
                         static_cast<int>(csv::parse_integer(f[c_week], table.line_numbers[t], "week")), f[c_label]};
        if (!seen.emplace(l.category, l.zone, l.store, l.week).second)
            throw DuplicateKey("duplicate label for (category=" + l.category + ", zone=" + l.zone +
                               ", store=" + l.store + ", week=" + std::to_string(l.week) + ")");
        out.push_back(std::move(l));
    }
    return out;
}

enum class PanelKey { category, zone, store, week, product };

namespace detail {

inline std::string group_key(const PanelRow& r, const std::vector<PanelKey>& keys)
{
    std::string out;
    for (auto k : keys) {
        switch (k) {
        case PanelKey::category: out += r.category; break;
        case PanelKey::zone: out += r.zone; break;
        case PanelKey::store: out += r.store; break;
        case PanelKey::week: out += std::to_string(r.week); break;
        case PanelKey::product: out += r.product; break;
        }
        out += '\x1f';
    }
    return out;
}

} // namespace detail

/// demeaned = log(price) - mean of log(price) within the group.
inline PanelTable log_demean(PanelTable panel,
                             const std::vector<PanelKey>& group = {PanelKey::zone, PanelKey::week, PanelKey::product})
{
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& r : panel.rows) {
        auto& s = sums[detail::group_key(r, group)];
        s.first += std::log(r.price);
        ++s.second;
    }
    for (auto& r : panel.rows) {
        const auto& s = sums.at(detail::group_key(r, group));
        r.demeaned = std::log(r.price) - s.first / static_cast<double>(s.second);
    }
    return panel;
}

struct ProductVariation {
    std::string product;
    double max_relative_spread = 0.0; // max over (zone, week) of (max - min) / min price across stores
};

/// Products whose largest cross-store relative price spread within a zone in
/// any week exceeds `threshold`, ordered by descending spread.
inline std::vector<ProductVariation> filter_products(const PanelTable& panel, double threshold,
                                                     std::optional<std::pair<int, int>> window = std::nullopt)
{
    if (!(threshold > 0.0 && threshold < 1.0))
        throw InvalidOptions("product filter threshold must lie in (0, 1)");
    std::map<std::tuple<std::string, std::string, int, std::string>, std::pair<double, double>> cells;
    std::set<std::string> products;
    for (const auto& r : panel.rows) {
        if (window && (r.week < window->first || r.week > window->second))
            continue;
        products.insert(r.product);
        auto [it, fresh] = cells.try_emplace({r.product, r.zone, r.week, r.category}, r.price, r.price);
        if (!fresh) {
            it->second.first = std::min(it->second.first, r.price);
            it->second.second = std::max(it->second.second, r.price);
        }
    }
    std::map<std::string, double> spread;
    for (const auto& p : products)
        spread[p] = 0.0;
    for (const auto& [key, mm] : cells)
        spread[std::get<0>(key)] = std::max(spread[std::get<0>(key)], (mm.second - mm.first) / mm.first);

    std::vector<ProductVariation> out;
    for (const auto& [p, s] : spread)
        if (s > threshold)
            out.push_back({p, s});
    if (out.empty())
        throw EmptyResult("no product has cross-store price spread above " + std::to_string(threshold));
    std::stable_sort(out.begin(), out.end(), [](const ProductVariation& a, const ProductVariation& b) {
        return a.max_relative_spread > b.max_relative_spread;
    });
    return out;
}

/// The first `cap` filtered products (largest spread first); cap 0 keeps all.
inline std::vector<std::string> choose_coordinates(const std::vector<ProductVariation>& filtered, std::size_t cap = 12)
{
    std::vector<std::string> out;
    for (const auto& v : filtered) {
        if (cap != 0 && out.size() >= cap)
            break;
        out.push_back(v.product);
    }
    return out;
}

struct WideMatrixSpec {
    std::string zone;
    std::string category;
    std::vector<std::string> coordinates; // product columns, in order
    bool use_demeaned = true;             // otherwise raw log price
    double max_missing_week_share = 0.15;
};

enum class MissingPolicy { drop_unit, drop_product };

struct MatrixUnit {
    std::string store;
    int week = 0;
};

struct WideMatrix {
    DataMatrix data;
    std::vector<MatrixUnit> units; // row i of data belongs to units[i]
    std::vector<std::string> coordinates;
    std::vector<std::string> excluded_stores;
    std::vector<std::string> dropped_products;
    std::size_t dropped_units = 0;
    std::vector<std::string> notices;
};

/// One row per retained (store, week), one column per product.
inline WideMatrix to_matrix(const PanelTable& panel, const WideMatrixSpec& spec,
                            MissingPolicy policy = MissingPolicy::drop_unit)
{
    if (spec.coordinates.empty())
        throw InvalidOptions("matrix spec needs at least one coordinate");
    std::map<std::string, std::size_t> coord_index;
    for (std::size_t k = 0; k < spec.coordinates.size(); ++k)
        if (!coord_index.emplace(spec.coordinates[k], k).second)
            throw InvalidOptions("duplicate coordinate '" + spec.coordinates[k] + "'");

    std::map<std::pair<std::string, int>, std::vector<double>> cells;
    std::map<std::string, std::set<int>> weeks_with_data;
    std::set<int> all_weeks;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : panel.rows) {
        if (r.zone != spec.zone || r.category != spec.category)
            continue;
        all_weeks.insert(r.week);
        auto it = coord_index.find(r.product);
        if (it == coord_index.end())
            continue;
        double value;
        if (spec.use_demeaned) {
            if (!std::isfinite(r.demeaned))
                throw InvalidData("to_matrix needs demeaned prices; run log_demean first");
            value = r.demeaned;
        } else {
            value = std::log(r.price);
        }
        auto& row = cells.try_emplace({r.store, r.week}, spec.coordinates.size(), nan).first->second;
        row[it->second] = value;
        if (std::isnan(r.quantity) || r.quantity > 0.0)
            weeks_with_data[r.store].insert(r.week);
    }
    if (all_weeks.empty())
        throw EmptyResult("no rows for zone '" + spec.zone + "', category '" + spec.category + "'");

    WideMatrix out;
    std::set<std::string> stores;
    for (const auto& [unit, _] : cells)
        stores.insert(unit.first);
    std::set<std::string> excluded;
    for (const auto& s : stores) {
        const double missing = 1.0 - static_cast<double>(weeks_with_data[s].size()) / static_cast<double>(all_weeks.size());
        if (missing > spec.max_missing_week_share) {
            excluded.insert(s);
            out.excluded_stores.push_back(s);
            out.notices.push_back("excessive missingness: store " + s + " lacks data in " +
                                  std::to_string(static_cast<int>(std::round(100.0 * missing))) + "% of weeks");
        }
    }

    std::vector<std::pair<std::pair<std::string, int>, std::vector<double>>> kept;
    for (auto& [unit, row] : cells)
        if (!excluded.count(unit.first))
            kept.emplace_back(unit, row);
    if (kept.empty())
        throw ExcessiveMissingness("every store in zone '" + spec.zone + "', category '" + spec.category +
                                   "' exceeds the missing-week limit");

    std::vector<bool> keep_coord(spec.coordinates.size(), true);
    if (policy == MissingPolicy::drop_product) {
        for (const auto& [unit, row] : kept)
            for (std::size_t k = 0; k < row.size(); ++k)
                if (std::isnan(row[k]))
                    keep_coord[k] = false;
    }
    for (std::size_t k = 0; k < keep_coord.size(); ++k) {
        if (keep_coord[k])
            out.coordinates.push_back(spec.coordinates[k]);
        else
            out.dropped_products.push_back(spec.coordinates[k]);
    }
    if (out.coordinates.empty())
        throw EmptyResult("every product column has missing cells");

    std::vector<std::vector<double>> columns(out.coordinates.size());
    for (const auto& [unit, row] : kept) {
        bool complete = true;
        for (std::size_t k = 0; k < row.size(); ++k)
            if (keep_coord[k] && std::isnan(row[k]))
                complete = false;
        if (!complete) {
            ++out.dropped_units;
            continue;
        }
        out.units.push_back({unit.first, unit.second});
        std::size_t c = 0;
        for (std::size_t k = 0; k < row.size(); ++k)
            if (keep_coord[k])
                columns[c++].push_back(row[k]);
    }
    if (out.units.empty())
        throw EmptyResult("no complete (store, week) rows remain");
    out.data = DataMatrix::from_columns(columns, out.coordinates);
    return out;
}

} // namespace exomix
