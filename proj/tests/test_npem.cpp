#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "exomix/npem.hpp"
#include "exomix/random.hpp"
#include "exomix/simgen.hpp"

using namespace exomix;

namespace {

FitOptions fast_options(std::uint64_t seed = 1)
{
    FitOptions o;
    o.seed = seed;
    o.kde_grid_size = 512;
    return o;
}

void expect_simplex(const MixtureFit& fit)
{
    double total = std::accumulate(fit.weights.begin(), fit.weights.end(), 0.0);
    EXPECT_NEAR(total, 1.0, 1e-10);
    for (double w : fit.weights)
        EXPECT_GE(w, 0.0);
    for (std::size_t i = 0; i < fit.n(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < fit.m(); ++j) {
            EXPECT_GE(fit.posteriors(i, j), 0.0);
            s += fit.posteriors(i, j);
        }
        ASSERT_NEAR(s, 1.0, 1e-10) << "row " << i;
    }
}

// r = 3 coordinates, component 0 around 0 and component 1 around 10.
DataMatrix separated(std::size_t n, double w1, std::vector<int>& truth, std::uint64_t seed)
{
    KeyedStream rng(seed, 0);
    Matrix v(n, 3);
    truth.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        truth[i] = rng.uniform() < w1 ? 1 : 0;
        for (std::size_t k = 0; k < 3; ++k)
            v(i, k) = 10.0 * truth[i] + 0.1 * rng.normal();
    }
    return DataMatrix(std::move(v));
}

double normal_pdf(double x, double mu, double sd)
{
    const double z = (x - mu) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

} // namespace

TEST(Identifiability, Examples)
{
    EXPECT_EQ(check_identifiability(2, 3), Identifiability::satisfied);
    EXPECT_EQ(check_identifiability(3, 3), Identifiability::violated);
    EXPECT_EQ(check_identifiability(3, 4), Identifiability::satisfied);
    EXPECT_EQ(check_identifiability(1, 1), Identifiability::violated);
    EXPECT_THROW(check_identifiability(0, 3), InvalidOptions);
}

TEST(NpemFit, ViolatedIdentifiabilityWarnsAndProceeds)
{
    Section3Config c;
    c.seed = 4;
    const auto d = simulate_section3(c);
    const auto fit = npem_fit(d.data, 3, fast_options());
    ASSERT_FALSE(fit.warnings.empty());
    EXPECT_NE(fit.warnings.front().find("identifiability"), std::string::npos);
    EXPECT_EQ(fit.m(), 3u);
    expect_simplex(fit);
}

TEST(NpemFit, InvalidOptions)
{
    Section3Config c;
    c.T = 50;
    const auto d = simulate_section3(c);
    FitOptions o;
    o.max_iterations = 0;
    EXPECT_THROW(npem_fit(d.data, 2, o), InvalidOptions);
    o = {};
    o.restarts = 0;
    EXPECT_THROW(npem_fit(d.data, 2, o), InvalidOptions);
    o = {};
    o.kde_grid_size = 10;
    EXPECT_THROW(npem_fit(d.data, 2, o), InvalidOptions);
    EXPECT_THROW(npem_fit(d.data, 0, FitOptions{}), InvalidOptions);
    EXPECT_THROW(npem_fit(d.data.select_rows(std::vector<std::size_t>{0, 1, 2, 3}), 2, FitOptions{}),
                 InsufficientData);
}

TEST(NpemFit, SingleComponentIsPlainKde)
{
    Section3Config c;
    c.T = 300;
    const auto d = simulate_section3(c);
    const auto fit = npem_fit(d.data, 1, FitOptions{});
    ASSERT_EQ(fit.weights.size(), 1u);
    EXPECT_DOUBLE_EQ(fit.weights[0], 1.0);
    for (std::size_t i = 0; i < fit.n(); ++i)
        EXPECT_DOUBLE_EQ(fit.posteriors(i, 0), 1.0);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto x = d.data.column(k);
        const double h = silverman_bandwidth(x);
        EXPECT_DOUBLE_EQ(fit.bandwidths[k], h);
        for (double u : {0.1, 0.5, 1.3}) {
            const std::vector<double> q{u};
            EXPECT_NEAR(fit.densities[0][k](u), kde_eval(std::span<const double>(x), h, q)[0], 1e-14);
        }
    }
}

TEST(NpemFit, SeparatedComponentsMatchOraclePosteriors)
{
    std::vector<int> truth;
    const auto data = separated(1000, 0.35, truth, 17);
    const auto fit = npem_fit(data, 2, FitOptions{});
    expect_simplex(fit);
    // components ascend in weight: index 0 is the 10-centred one
    const auto oracle = posteriors_from_densities(data, std::vector<double>{0.35, 0.65},
                                                  [](std::size_t j, std::size_t, double x) {
                                                      return normal_pdf(x, j == 0 ? 10.0 : 0.0, 0.1);
                                                  });
    double mae = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i)
        for (std::size_t j = 0; j < 2; ++j)
            mae += std::abs(fit.posteriors(i, j) - oracle(i, j));
    mae /= 2.0 * static_cast<double>(data.n());
    EXPECT_LE(mae, 1e-3);
}

TEST(NpemFit, Section3WeightsAsASet)
{
    // unlabeled weights near {0.4, 0.6}; the estimator's known pull toward
    // balance at T=2000 is covered by the acceptance suite
    Section3Config c;
    c.seed = 2;
    const auto fit = npem_fit(simulate_section3(c).data, 2, fast_options());
    expect_simplex(fit);
    EXPECT_LE(fit.weights[0], fit.weights[1]);
    EXPECT_GT(fit.weights[0], 0.2);
}

TEST(NpemFit, DeterministicGivenSeed)
{
    Section3Config c;
    c.T = 600;
    c.seed = 9;
    const auto d = simulate_section3(c);
    auto o = fast_options(5);
    o.restarts = 3;
    const auto a = npem_fit(d.data, 2, o);
    o.threads = 3;
    const auto b = npem_fit(d.data, 2, o);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.posteriors, b.posteriors);
    EXPECT_EQ(a.log_likelihood_trace, b.log_likelihood_trace);
    EXPECT_EQ(a.restart_index, b.restart_index);
}

TEST(NpemFit, PermutingRowsPermutesPosteriors)
{
    std::vector<int> truth;
    const auto data = separated(400, 0.4, truth, 23);
    std::vector<std::size_t> perm(data.n());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[3], perm[100]);
    FitOptions o;
    o.restarts = 1;
    const auto a = npem_fit(data, 2, o);
    const auto b = npem_fit(data.select_rows(perm), 2, o);
    for (std::size_t j = 0; j < 2; ++j)
        EXPECT_NEAR(a.weights[j], b.weights[j], 1e-9);
    for (std::size_t i = 0; i < data.n(); ++i)
        for (std::size_t j = 0; j < 2; ++j)
            ASSERT_NEAR(b.posteriors(i, j), a.posteriors(perm[i], j), 1e-9);
    for (std::size_t k = 0; k < 3; ++k)
        for (double u : {-0.1, 0.0, 9.9, 10.2})
            EXPECT_NEAR(a.densities[1][k](u), b.densities[1][k](u), 1e-9);
}

TEST(PosteriorOf, TrainingRowReproducesStoredPosterior)
{
    Section3Config c;
    c.T = 500;
    const auto d = simulate_section3(c);
    for (std::size_t grid : {std::size_t{0}, std::size_t{512}}) {
        FitOptions o;
        o.kde_grid_size = grid;
        o.restarts = 2;
        const auto fit = npem_fit(d.data, 2, o);
        for (std::size_t i = 0; i < fit.n(); i += 7) {
            const auto p = posterior_of(fit, fit.data.row(i));
            for (std::size_t j = 0; j < 2; ++j)
                ASSERT_EQ(p[j], fit.posteriors(i, j)) << "grid " << grid << " row " << i;
        }
    }
}

TEST(PosteriorOf, NewPointsOnSimplexAndValidated)
{
    Section3Config c;
    c.T = 300;
    const auto fit = npem_fit(simulate_section3(c).data, 2, fast_options());
    for (double u : {-5.0, 0.5, 1.5, 40.0}) {
        const std::vector<double> row{u, u, u};
        const auto p = posterior_of(fit, row);
        EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
    }
    const std::vector<double> short_row{0.5};
    EXPECT_THROW(posterior_of(fit, short_row), LengthMismatch);
    const std::vector<double> bad{0.5, NAN, 0.5};
    EXPECT_THROW(posterior_of(fit, bad), InvalidData);
}

TEST(PosteriorOf, IdenticalComponentsGiveUniformPosterior)
{
    Section3Config c;
    c.T = 200;
    const auto d = simulate_section3(c);
    auto fit = npem_fit(d.data, 2, FitOptions{});
    fit.weights = {0.5, 0.5};
    fit.densities[0] = fit.densities[1];
    const std::vector<double> row{0.3, 0.9, 1.7};
    const auto p = posterior_of(fit, row);
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(OraclePosteriors, OutsideUnitCubeIsExogenousExactly)
{
    Section3Config c;
    const auto d = simulate_section3(c);
    const auto p = posteriors_from_densities(d.data, std::vector<double>{0.4, 0.6},
                                             [](std::size_t j, std::size_t, double x) {
                                                 if (j == 0)
                                                     return x >= 0.0 && x <= 1.0 ? 1.0 : 0.0;
                                                 return x >= 0.0 && x <= 2.0 ? 0.5 : 0.0;
                                             });
    for (std::size_t i = 0; i < d.data.n(); ++i) {
        const auto row = d.data.row(i);
        if (*std::max_element(row.begin(), row.end()) > 1.0)
            ASSERT_EQ(p(i, 1), 1.0);
        else
            ASSERT_NEAR(p(i, 1), 0.6 / 8.0 / (0.4 + 0.6 / 8.0), 1e-12);
    }
}

TEST(NpemFit, TraceAndSimplexOnEveryRestartScheme)
{
    Section3Config c;
    c.T = 400;
    const auto d = simulate_section3(c);
    for (auto init : {InitMethod::kmeans, InitMethod::random_posterior}) {
        auto o = fast_options(3);
        o.init = init;
        const auto fit = npem_fit(d.data, 2, o);
        expect_simplex(fit);
        EXPECT_EQ(fit.log_likelihood_trace.size(), static_cast<std::size_t>(fit.iterations_run));
        EXPECT_TRUE(std::isfinite(fit.log_likelihood));
    }
}
