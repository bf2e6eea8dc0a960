#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>
#include <string>

#include "exomix/panel.hpp"
#include "exomix/simgen.hpp"

using namespace exomix;

namespace {

PanelTable parse(const std::string& text, const SchemaMap& schema = {})
{
    std::istringstream in(text);
    return load_panel(in, schema);
}

PanelRow row(std::string zone, std::string store, int week, std::string product, double price)
{
    PanelRow r;
    r.category = "C";
    r.zone = std::move(zone);
    r.store = std::move(store);
    r.week = week;
    r.product = std::move(product);
    r.price = price;
    r.quantity = 1.0;
    return r;
}

// stores x weeks x products, all in zone Z, price 1 + small store/product offsets
PanelTable complete_panel(int stores, int weeks, int products)
{
    PanelTable p;
    for (int s = 0; s < stores; ++s)
        for (int w = 1; w <= weeks; ++w)
            for (int j = 0; j < products; ++j)
                p.rows.push_back(row("Z", "S" + std::to_string(s), w, "P" + std::to_string(j),
                                     1.0 + 0.1 * s + 0.01 * j + 0.001 * w));
    return p;
}

} // namespace

TEST(LoadPanel, WellFormedFile)
{
    const auto p = parse("category,zone,store,week,product,price,quantity\n"
                         "C,Z1,S1,1,P1,2.5,10\n"
                         "C,Z1,S1,2,P1,2.4,11\n"
                         "C,Z1,S2,1,P1,2.6,\n");
    ASSERT_EQ(p.rows.size(), 3u);
    EXPECT_EQ(p.rows[1].week, 2);
    EXPECT_DOUBLE_EQ(p.rows[0].price, 2.5);
    EXPECT_TRUE(std::isnan(p.rows[2].quantity));
}

TEST(LoadPanel, SchemaMapping)
{
    SchemaMap m;
    m.category = "cat";
    m.price = "PRICE";
    m.quantity = "";
    const auto p = parse("cat,zone,store,week,product,PRICE\nC,Z1,S1,1,P1,2.5\n", m);
    ASSERT_EQ(p.rows.size(), 1u);
    try {
        parse("category,zone,store,week,product,quantity\nC,Z1,S1,1,P1,1\n");
        FAIL() << "expected a schema error";
    } catch (const SchemaMismatch& e) {
        EXPECT_NE(std::string(e.what()).find("price"), std::string::npos);
    }
}

TEST(LoadPanel, DuplicateKeyNamed)
{
    try {
        parse("category,zone,store,week,product,price,quantity\n"
              "C,Z1,S1,1,P1,2.5,10\n"
              "C,Z1,S1,1,P1,2.6,10\n");
        FAIL() << "expected a duplicate-key error";
    } catch (const DuplicateKey& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("store=S1"), std::string::npos);
        EXPECT_NE(what.find("week=1"), std::string::npos);
        EXPECT_NE(what.find("product=P1"), std::string::npos);
    }
}

TEST(LoadPanel, BadValuesRejectedWithLineNumbers)
{
    EXPECT_THROW(parse("category,zone,store,week,product,price,quantity\nC,Z1,S1,1,P1,0,10\n"), InvalidData);
    EXPECT_THROW(parse("category,zone,store,week,product,price,quantity\nC,Z1,S1,1,P1,-2,10\n"), InvalidData);
    try {
        parse("category,zone,store,week,product,price,quantity\nC,Z1,S1,1,P1,2,1\nC,Z1,S1,x,P1,2,1\n");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    EXPECT_THROW(parse("category,zone,store,week,product,price,quantity\nC,Z1,S1,1,P1,abc,1\n"), ParseError);
}

TEST(WritePanel, RoundTripsExactly)
{
    PricingSimConfig c;
    c.n_stores = 4;
    c.n_weeks = 10;
    const auto d = simulate_pricing(c);
    std::ostringstream out;
    write_panel(out, d.panel, false);
    const auto back = parse(out.str());
    ASSERT_EQ(back.rows.size(), d.panel.rows.size());
    for (std::size_t i = 0; i < back.rows.size(); ++i) {
        ASSERT_EQ(back.rows[i].price, d.panel.rows[i].price);
        ASSERT_EQ(back.rows[i].quantity, d.panel.rows[i].quantity);
    }
    std::ostringstream labels;
    write_labels(labels, d.truth);
    std::istringstream lin(labels.str());
    const auto truth = read_labels(lin);
    ASSERT_EQ(truth.size(), d.truth.size());
    EXPECT_EQ(truth.back().label, d.truth.back().label);
}

TEST(LogDemean, Examples)
{
    PanelTable p;
    p.rows = {row("Z", "S1", 1, "P", std::exp(1.0)), row("Z", "S2", 1, "P", std::exp(3.0)),
              row("Z", "S1", 2, "P", 2.0), row("Z", "S2", 2, "P", 2.0)};
    const auto d = log_demean(p);
    EXPECT_NEAR(d.rows[0].demeaned, -1.0, 1e-15);
    EXPECT_NEAR(d.rows[1].demeaned, 1.0, 1e-15);
    EXPECT_EQ(d.rows[2].demeaned, 0.0);
    EXPECT_EQ(d.rows[3].demeaned, 0.0);
}

TEST(LogDemean, GroupMeansZeroAndIdempotent)
{
    PricingSimConfig c;
    const auto d = log_demean(simulate_pricing(c).panel);
    std::map<std::string, std::pair<double, int>> means;
    for (const auto& r : d.rows) {
        auto& m = means[r.zone + "|" + std::to_string(r.week) + "|" + r.product];
        m.first += r.demeaned;
        ++m.second;
    }
    for (const auto& [k, m] : means)
        ASSERT_NEAR(m.first / m.second, 0.0, 1e-12) << k;

    // demeaning the demeaned values again changes nothing
    PanelTable again = d;
    for (auto& r : again.rows)
        r.price = std::exp(r.demeaned);
    again = log_demean(again);
    for (std::size_t i = 0; i < d.rows.size(); ++i)
        ASSERT_NEAR(again.rows[i].demeaned, d.rows[i].demeaned, 1e-12);
}

TEST(FilterProducts, Examples)
{
    PanelTable p;
    p.rows = {row("Z", "S1", 1, "flat", 2.0), row("Z", "S2", 1, "flat", 2.0), row("Z", "S1", 1, "moves", 2.0),
              row("Z", "S2", 1, "moves", 2.1), row("Z", "S1", 2, "moves", 2.0), row("Z", "S2", 2, "moves", 2.0)};
    const auto kept = filter_products(p, 0.03);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].product, "moves");
    EXPECT_NEAR(kept[0].max_relative_spread, 0.05, 1e-12);
    EXPECT_THROW(filter_products(p, 0.0), InvalidOptions);
    EXPECT_THROW(filter_products(p, 0.06), EmptyResult);
    // the window excludes week 1
    EXPECT_THROW(filter_products(p, 0.03, std::make_pair(2, 2)), EmptyResult);
}

TEST(FilterProducts, MonotoneInThreshold)
{
    PricingSimConfig c;
    const auto p = simulate_pricing(c).panel;
    std::size_t previous = 1000;
    for (double t : {0.01, 0.03, 0.05, 0.08, 0.1}) {
        std::size_t count = 0;
        try {
            count = filter_products(p, t).size();
        } catch (const EmptyResult&) {
        }
        EXPECT_LE(count, previous);
        previous = count;
    }
}

TEST(ChooseCoordinates, CapKeepsLargestSpread)
{
    const std::vector<ProductVariation> v{{"a", 0.3}, {"b", 0.2}, {"c", 0.1}};
    EXPECT_EQ(choose_coordinates(v, 2), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(choose_coordinates(v, 0).size(), 3u);
}

TEST(ToMatrix, CompletePanel)
{
    const auto p = log_demean(complete_panel(2, 2, 3));
    WideMatrixSpec spec{"Z", "C", {"P0", "P1", "P2"}};
    const auto m = to_matrix(p, spec);
    EXPECT_EQ(m.data.n(), 4u);
    EXPECT_EQ(m.data.r(), 3u);
    ASSERT_EQ(m.units.size(), 4u);
    // the unit index maps rows back to distinct store-weeks
    std::set<std::pair<std::string, int>> units;
    for (const auto& u : m.units)
        units.insert({u.store, u.week});
    EXPECT_EQ(units.size(), 4u);
    for (std::size_t i = 0; i < m.units.size(); ++i)
        for (const auto& r : p.rows) {
            if (r.store == m.units[i].store && r.week == m.units[i].week && r.product == "P1") {
                EXPECT_EQ(m.data(i, 1), r.demeaned);
            }
        }
}

TEST(ToMatrix, ExcessiveMissingnessExcludesStore)
{
    auto p = complete_panel(3, 10, 2);
    // S2 loses 2 of 10 weeks (20%)
    std::erase_if(p.rows, [](const PanelRow& r) { return r.store == "S2" && r.week >= 9; });
    p = log_demean(p);
    WideMatrixSpec spec{"Z", "C", {"P0", "P1"}};
    const auto m = to_matrix(p, spec);
    EXPECT_EQ(m.excluded_stores, std::vector<std::string>{"S2"});
    ASSERT_FALSE(m.notices.empty());
    EXPECT_NE(m.notices[0].find("excessive missingness"), std::string::npos);
    EXPECT_EQ(m.data.n(), 20u);
    for (const auto& u : m.units)
        EXPECT_NE(u.store, "S2");
}

TEST(ToMatrix, MissingPolicies)
{
    auto p = complete_panel(3, 10, 3);
    // P2 is missing in one store-week
    std::erase_if(p.rows, [](const PanelRow& r) { return r.store == "S1" && r.week == 4 && r.product == "P2"; });
    p = log_demean(p);
    WideMatrixSpec spec{"Z", "C", {"P0", "P1", "P2"}};
    const auto by_unit = to_matrix(p, spec, MissingPolicy::drop_unit);
    EXPECT_EQ(by_unit.data.n(), 29u);
    EXPECT_EQ(by_unit.data.r(), 3u);
    EXPECT_EQ(by_unit.dropped_units, 1u);
    const auto by_product = to_matrix(p, spec, MissingPolicy::drop_product);
    EXPECT_EQ(by_product.data.n(), 30u);
    EXPECT_EQ(by_product.coordinates, (std::vector<std::string>{"P0", "P1"}));
    EXPECT_EQ(by_product.dropped_products, std::vector<std::string>{"P2"});
}

TEST(ToMatrix, Validation)
{
    const auto p = log_demean(complete_panel(2, 2, 2));
    EXPECT_THROW(to_matrix(p, WideMatrixSpec{"Z", "C", {}}), InvalidOptions);
    EXPECT_THROW(to_matrix(p, WideMatrixSpec{"Z", "C", {"P0", "P0"}}), InvalidOptions);
    EXPECT_THROW(to_matrix(p, WideMatrixSpec{"nowhere", "C", {"P0"}}), EmptyResult);
    EXPECT_THROW(to_matrix(complete_panel(2, 2, 2), WideMatrixSpec{"Z", "C", {"P0"}}), InvalidData);
}
