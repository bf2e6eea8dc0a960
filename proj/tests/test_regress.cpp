#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "exomix/random.hpp"
#include "exomix/regress.hpp"
#include "exomix/simgen.hpp"

using namespace exomix;

TEST(Ols, TwoPointInterpolation)
{
    const std::vector<double> x{0, 1}, y{1, 3};
    const auto r = ols(y, x);
    EXPECT_DOUBLE_EQ(r.coefficient("alpha"), 1.0);
    EXPECT_DOUBLE_EQ(r.coefficient("beta"), 2.0);
    EXPECT_DOUBLE_EQ(r.r_squared, 1.0);
    EXPECT_EQ(r.n_used, 2u);
    // no residual degrees of freedom
    EXPECT_TRUE(std::isnan(r.standard_error("beta")));
}

TEST(Ols, Errors)
{
    const std::vector<double> one{1.0};
    EXPECT_THROW(ols(one, one), InsufficientData);
    const std::vector<double> x{2, 2, 2}, y{1, 2, 3};
    EXPECT_THROW(ols(y, x), DegenerateRegressor);
    EXPECT_THROW(ols(y, std::vector<double>{1, 2}), LengthMismatch);
    EXPECT_THROW(ols(std::vector<double>{1, NAN, 3}, std::vector<double>{1, 2, 3}), InvalidData);
}

TEST(Ols, ZeroNoiseRecovery)
{
    KeyedStream rng(3, 0);
    std::vector<double> x(500), y(500), y0(500);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = 10.0 * rng.uniform() - 3.0;
        y[i] = -1.25 + 0.75 * x[i];
        y0[i] = 0.75 * x[i];
    }
    const auto r = ols(y, x);
    EXPECT_NEAR(r.coefficient("alpha"), -1.25, 1e-10);
    EXPECT_NEAR(r.coefficient("beta"), 0.75, 1e-10);
    EXPECT_NEAR(r.r_squared, 1.0, 1e-12);
    const auto r0 = ols(y0, x, false);
    ASSERT_EQ(r0.names, std::vector<std::string>{"beta"});
    EXPECT_NEAR(r0.coefficient("beta"), 0.75, 1e-12);
}

TEST(Ols, ClassicalStandardErrorsMatchMatrixFormula)
{
    KeyedStream rng(5, 0);
    const std::size_t n = 60;
    std::vector<double> x(n), y(n);
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd Y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.normal();
        y[i] = 0.5 + 2.0 * x[i] + rng.normal();
        X(i, 0) = 1.0;
        X(i, 1) = x[i];
        Y(i) = y[i];
    }
    const Eigen::VectorXd b = X.colPivHouseholderQr().solve(Y);
    const Eigen::VectorXd e = Y - X * b;
    const Eigen::MatrixXd V = e.squaredNorm() / (n - 2) * (X.transpose() * X).inverse();
    const auto r = ols(y, x);
    EXPECT_NEAR(r.coefficient("alpha"), b(0), 1e-12);
    EXPECT_NEAR(r.coefficient("beta"), b(1), 1e-12);
    EXPECT_NEAR(r.standard_error("alpha"), std::sqrt(V(0, 0)), 1e-12);
    EXPECT_NEAR(r.standard_error("beta"), std::sqrt(V(1, 1)), 1e-12);
}

TEST(OlsOnSubset, AllRowsEqualsOls)
{
    Section3Config c;
    const auto d = simulate_section3(c);
    const auto x = d.data.column(0);
    SelectionResult all;
    all.indices.resize(x.size());
    std::iota(all.indices.begin(), all.indices.end(), 0);
    const auto a = ols(d.outcome, x);
    const auto b = ols_on_subset(d.outcome, x, all);
    EXPECT_EQ(a.coefficients, b.coefficients);
    EXPECT_EQ(a.standard_errors, b.standard_errors);
    EXPECT_EQ(a.r_squared, b.r_squared);
    EXPECT_THROW(ols_on_subset(d.outcome, x, SelectionResult{}), EmptySelection);
}

TEST(OlsOnSubset, OracleSelectionIsConsistent)
{
    Section3Config c;
    c.seed = 12;
    const auto d = simulate_section3(c);
    SelectionResult sel;
    for (std::size_t i = 0; i < d.data.n(); ++i) {
        const auto row = d.data.row(i);
        if (*std::max_element(row.begin(), row.end()) > 1.0)
            sel.indices.push_back(i);
    }
    const auto r = ols_on_subset(d.outcome, d.data.column(0), sel);
    EXPECT_LE(std::abs(r.coefficient("beta") - 2.0), 2.0 * r.standard_error("beta"));
}

TEST(Ols, NaiveEstimateNearAnalyticLimit)
{
    Section3Config c;
    c.T = 200000;
    c.seed = 99;
    const auto d = simulate_section3(c);
    const double plim = 2.0 + (1.0 / 30.0) / (22.0 / 75.0);
    EXPECT_NEAR(plim, 2.1136, 1e-4);
    EXPECT_NEAR(ols(d.outcome, d.data.column(0)).coefficient("beta"), plim, 0.01);
}

TEST(Stars, Convention)
{
    EXPECT_EQ(stars(1.0, 0.1), "***");
    EXPECT_EQ(stars(0.2, 0.1), "**");  // z = 2.0, p = 0.046
    EXPECT_EQ(stars(0.18, 0.1), "*");  // z = 1.8, p = 0.072
    EXPECT_EQ(stars(0.1, 0.1), "");
    EXPECT_EQ(stars(1.0, std::nan("")), "");
}

// --- fixed effects -----------------------------------------------------------

namespace {

struct RandomPanel {
    Frame frame;
    std::vector<std::string> fes;
};

RandomPanel random_panel(std::uint64_t seed)
{
    KeyedStream rng(seed, 0);
    const std::size_t n = 12 + rng.below(39); // 12..50
    const std::size_t F = 1 + rng.below(3);
    RandomPanel p;
    std::vector<std::vector<std::size_t>> codes(F);
    for (std::size_t f = 0; f < F; ++f) {
        const std::string name = "f" + std::to_string(f);
        p.fes.push_back(name);
        const std::size_t L = 2 + rng.below(4);
        auto& col = p.frame.factors[name];
        for (std::size_t i = 0; i < n; ++i) {
            // every level appears at least once
            const std::size_t level = i < L ? i : rng.below(L);
            codes[f].push_back(level);
            col.push_back("L" + std::to_string(level));
        }
    }
    auto& cl = p.frame.factors["cluster"];
    for (std::size_t i = 0; i < n; ++i)
        cl.push_back("g" + std::to_string(rng.below(5)));
    auto& x = p.frame.numeric["x"];
    auto& y = p.frame.numeric["y"];
    for (std::size_t i = 0; i < n; ++i) {
        double effect = 0.0;
        for (std::size_t f = 0; f < F; ++f)
            effect += 0.7 * static_cast<double>(codes[f][i] * (f + 1));
        x.push_back(rng.normal() + 0.3 * effect);
        y.push_back(effect - 1.5 * x.back() + rng.normal());
    }
    return p;
}

// Dummy-variable design: intercept, L_f - 1 dummies per factor, then x.
Eigen::MatrixXd dummy_design(const RandomPanel& p)
{
    const auto& x = p.frame.numeric.at("x");
    const std::size_t n = x.size();
    std::vector<Eigen::VectorXd> cols{Eigen::VectorXd::Ones(n)};
    for (const auto& f : p.fes) {
        const auto& v = p.frame.factors.at(f);
        std::vector<std::string> levels(v.begin(), v.end());
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
        for (std::size_t l = 1; l < levels.size(); ++l) {
            Eigen::VectorXd c(n);
            for (std::size_t i = 0; i < n; ++i)
                c(i) = v[i] == levels[l] ? 1.0 : 0.0;
            cols.push_back(c);
        }
    }
    Eigen::MatrixXd X(n, cols.size() + 1);
    for (std::size_t j = 0; j < cols.size(); ++j)
        X.col(static_cast<Eigen::Index>(j)) = cols[j];
    for (std::size_t i = 0; i < n; ++i)
        X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cols.size())) = x[i];
    return X;
}

} // namespace

TEST(FeRegression, MatchesDummyVariableOls)
{
    std::size_t compared = 0;
    for (std::uint64_t seed = 1; compared < 100; ++seed) {
        const auto p = random_panel(seed);
        const Eigen::MatrixXd X = dummy_design(p);
        const Eigen::Index k = X.cols();
        const auto n = X.rows();
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        // dummies can be collinear by chance; those panels are not comparable
        if (qr.rank() < k || n <= k)
            continue;
        ++compared;
        const auto& yv = p.frame.numeric.at("y");
        const Eigen::VectorXd Y = Eigen::Map<const Eigen::VectorXd>(yv.data(), n);
        const Eigen::VectorXd b = qr.solve(Y);
        const Eigen::VectorXd e = Y - X * b;

        // cluster sandwich on the full dummy design
        const Eigen::MatrixXd bread = (X.transpose() * X).inverse();
        std::map<std::string, Eigen::VectorXd> scores;
        const auto& cl = p.frame.factors.at("cluster");
        for (Eigen::Index i = 0; i < n; ++i) {
            auto [it, fresh] = scores.try_emplace(cl[static_cast<std::size_t>(i)], Eigen::VectorXd::Zero(k));
            it->second += X.row(i).transpose() * e(i);
        }
        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
        for (const auto& [g, s] : scores)
            meat += s * s.transpose();
        const double G = static_cast<double>(scores.size());
        const double c = G / (G - 1.0) * (n - 1.0) / static_cast<double>(n - k);
        const double se = std::sqrt(c * (bread * meat * bread)(k - 1, k - 1));

        const auto r = fe_regression(p.frame, {"y", "x", p.fes, "cluster"});
        ASSERT_NEAR(r.coefficient("x"), b(k - 1), 1e-8) << "seed " << seed;
        ASSERT_NEAR(r.standard_error("x"), se, 1e-8) << "seed " << seed;
        for (Eigen::Index i = 0; i < n; ++i)
            ASSERT_NEAR(r.residuals[static_cast<std::size_t>(i)], e(i), 1e-8) << "seed " << seed;
        EXPECT_EQ(r.se_kind, SeKind::cluster);
    }
}

TEST(FeRegression, CollinearFixedEffects)
{
    Frame f;
    for (int i = 0; i < 20; ++i) {
        const int cell = i % 4;
        f.factors["cell"].push_back("c" + std::to_string(cell));
        f.factors["store"].push_back("s" + std::to_string(i % 3));
        f.numeric["p"].push_back(1.0 + 0.5 * cell); // constant within every cell
        f.numeric["q"].push_back(static_cast<double>(i));
    }
    EXPECT_THROW(fe_regression(f, {"q", "p", {"cell"}, "store"}), CollinearFixedEffects);
}

TEST(FeRegression, Validation)
{
    Frame f;
    for (int i = 0; i < 10; ++i) {
        f.factors["one"].push_back("a");
        f.factors["two"].push_back(i % 2 ? "a" : "b");
        f.numeric["x"].push_back(i * 0.3 + (i % 3));
        f.numeric["y"].push_back(static_cast<double>(i));
    }
    EXPECT_THROW(fe_regression(f, {"y", "x", {"one"}, "two"}), InvalidData);
    EXPECT_THROW(fe_regression(f, {"y", "x", {"missing"}, "two"}), SchemaMismatch);
    EXPECT_THROW(fe_regression(f, {"y", "x", {"two", "two"}, "two"}), InvalidOptions);
    f.numeric["x"].pop_back();
    EXPECT_THROW(fe_regression(f, {"y", "x", {"two"}, "two"}), LengthMismatch);
}

TEST(FeRegression, RecoversKnownElasticity)
{
    // log q = product + store + period effects - 2 log p + noise
    KeyedStream rng(77, 0);
    Frame f;
    for (int s = 0; s < 30; ++s)
        for (int j = 0; j < 4; ++j)
            for (int t = 0; t < 2; ++t) {
                const double lp = 0.1 * j + (s % 2 && t ? 0.04 : 0.0) + 0.02 * rng.normal();
                f.factors["store"].push_back("s" + std::to_string(s));
                f.factors["product"].push_back("p" + std::to_string(j));
                f.factors["period"].push_back(t ? "treatment" : "control");
                f.numeric["lp"].push_back(lp);
                f.numeric["lq"].push_back(0.3 * s - 0.2 * j + 0.1 * t - 2.0 * lp + 0.05 * rng.normal());
            }
    const auto r = fe_regression(f, {"lq", "lp", {"product", "store", "period"}, "store"});
    EXPECT_LE(std::abs(r.coefficient("lp") + 2.0), 1.96 * r.standard_error("lp"));
    EXPECT_EQ(r.se_detail, "store");
}
