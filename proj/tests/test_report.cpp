#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "exomix/report.hpp"
#include "exomix/simgen.hpp"

using namespace exomix;

namespace {

MixtureFit small_fit(std::size_t grid)
{
    Section3Config c;
    c.T = 300;
    FitOptions o;
    o.kde_grid_size = grid;
    o.restarts = 2;
    return npem_fit(simulate_section3(c).data, 2, o);
}

RegressionResult fake(double beta, double se, std::size_t n)
{
    RegressionResult r;
    r.names = {"alpha", "beta"};
    r.coefficients = {0.5, beta};
    r.standard_errors = {0.1, se};
    r.r_squared = 0.749;
    r.n_used = n;
    return r;
}

bool contains(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

} // namespace

TEST(FitJson, RoundTripIsExact)
{
    for (std::size_t grid : {std::size_t{0}, std::size_t{256}}) {
        const auto fit = small_fit(grid);
        const auto text = to_json(fit).dump();
        const auto back = fit_from_json(json::parse(text));
        EXPECT_EQ(back.weights, fit.weights);
        EXPECT_EQ(back.posteriors, fit.posteriors);
        EXPECT_EQ(back.bandwidths, fit.bandwidths);
        EXPECT_EQ(back.data.names(), fit.data.names());
        for (double u : {0.05, 0.7, 1.9, 3.0})
            for (std::size_t j = 0; j < 2; ++j)
                for (std::size_t k = 0; k < 3; ++k)
                    ASSERT_EQ(back.densities[j][k](u), fit.densities[j][k](u));
        const std::vector<double> row{0.4, 1.2, 0.3};
        EXPECT_EQ(posterior_of(back, row), posterior_of(fit, row));
        // serializing the rebuilt fit gives the same document
        EXPECT_EQ(to_json(back).dump(), text);
    }
}

TEST(FitJson, MalformedDocumentsRejected)
{
    EXPECT_THROW(fit_from_json(json::parse("{}")), ParseError);
    auto j = to_json(small_fit(0));
    j["weights"] = json::array({1.0});
    EXPECT_THROW(fit_from_json(j), ParseError);
    j = to_json(small_fit(0));
    j.erase("posteriors");
    EXPECT_THROW(fit_from_json(j), ParseError);
}

TEST(RegressionJson, NonFiniteBecomesNull)
{
    const std::vector<double> x{0, 1}, y{1, 3};
    const auto j = to_json(ols(y, x));
    EXPECT_TRUE(j["coefficients"]["beta"]["std_error"].is_null());
    EXPECT_DOUBLE_EQ(j["coefficients"]["beta"]["estimate"].get<double>(), 2.0);
    EXPECT_EQ(j["se_kind"], "classical");
}

TEST(RegressionTable, Layout)
{
    auto boot = fake(1.968, 0.056, 524);
    boot.se_kind = SeKind::bootstrap;
    boot.se_detail = "B=200";
    const auto t = regression_table({{"Full sample", fake(2.117, 0.024, 2000)}, {"chi(p)", boot}});
    EXPECT_TRUE(contains(t, "1.968***"));
    EXPECT_TRUE(contains(t, "(0.056)"));
    EXPECT_TRUE(contains(t, "2.117***"));
    EXPECT_TRUE(contains(t, "(1)"));
    EXPECT_TRUE(contains(t, "(2)"));
    EXPECT_TRUE(contains(t, "Observations"));
    EXPECT_TRUE(contains(t, "524"));
    EXPECT_TRUE(contains(t, "bootstrap B=200"));
    EXPECT_TRUE(contains(t, "*p<0.1; **p<0.05; ***p<0.01"));
    // slope row comes before the constant
    EXPECT_LT(t.find("beta"), t.find("Constant"));
}

TEST(Tables, AccuracyAndMissingPriceChanges)
{
    AccuracyReport a;
    a.overall = {"All", 10, 9};
    a.groups = {{"C1", 4, 4}, {"C2", 6, 5}};
    const auto at = accuracy_table(a);
    EXPECT_TRUE(contains(at, "0.900"));
    EXPECT_TRUE(contains(at, "0.833"));
    EXPECT_TRUE(contains(at, "# Correct"));

    const std::vector<PriceChangeCell> cells{{"C1", label_hilo, 4.04, 12}, {"C1", label_edlp, std::nullopt, 0}};
    const auto pt = price_change_table(cells);
    EXPECT_TRUE(contains(pt, "4.04"));
    EXPECT_TRUE(contains(pt, "NA"));
}
