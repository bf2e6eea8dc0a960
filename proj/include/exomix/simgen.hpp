#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "exomix/error.hpp"
#include "exomix/labels.hpp"
#include "exomix/matrix.hpp"
#include "exomix/panel.hpp"
#include "exomix/random.hpp"

namespace exomix {

/// Two-component simulation: with probability 1 - pi the observed triple
/// (X, W1, W2) is the U(0,1)^3 draw (endogenous), otherwise the U(0,2)^3
/// draw (exogenous). eps = X1 + W11 + W21 + v uses the U(0,1)^3 draw in
/// every row, and Y = beta X + eps.
struct Section3Config {
    std::size_t T = 2000;
    double pi = 0.6;
    double beta = 2.0;
    std::uint64_t seed = 1;

    void validate() const
    {
        if (T < 1)
            throw InvalidOptions("T must be >= 1");
        if (!(pi >= 0.0 && pi <= 1.0))
            throw InvalidOptions("pi must lie in [0, 1]");
        if (!std::isfinite(beta))
            throw InvalidOptions("beta must be finite");
    }
};

struct LabeledDataset {
    DataMatrix data;                    // columns X, W1, W2
    std::vector<double> outcome;        // Y
    std::vector<int> latent_component;  // 1 = endogenous, 2 = exogenous
    std::vector<double> latent_epsilon; // eps
};

inline constexpr int endogenous_component = 1;
inline constexpr int exogenous_component = 2;

/// Row i is drawn from the stream keyed by (seed, i). Uniforms sit on the
/// 2^-32 grid, so Y - beta X - eps == 0 holds exactly whenever beta X is
/// representable (e.g. beta = 2).
inline LabeledDataset simulate_section3(const Section3Config& config)
{
    config.validate();
    const std::size_t T = config.T;
    Matrix values(T, 3);
    LabeledDataset out;
    out.outcome.resize(T);
    out.latent_component.resize(T);
    out.latent_epsilon.resize(T);
    for (std::size_t i = 0; i < T; ++i) {
        KeyedStream rng(config.seed, i);
        const double selector = rng.uniform();
        std::array<double, 3> endo{}, exo{};
        for (double& v : endo)
            v = rng.uniform_dyadic32();
        for (double& v : exo)
            v = 2.0 * rng.uniform_dyadic32();
        const double v = rng.uniform_dyadic32();

        const bool endogenous = selector < 1.0 - config.pi;
        const auto& chosen = endogenous ? endo : exo;
        for (std::size_t k = 0; k < 3; ++k)
            values(i, k) = chosen[k];
        const double eps = endo[0] + endo[1] + endo[2] + v;
        out.latent_component[i] = endogenous ? endogenous_component : exogenous_component;
        out.latent_epsilon[i] = eps;
        out.outcome[i] = config.beta * chosen[0] + eps;
    }
    out.data = DataMatrix(std::move(values), {"X", "W1", "W2"});
    return out;
}

// --------------------------------------------------------------------------

/// Synthetic scanner panel with three pricing regimes.
///
/// Each store-category runs a regime in contiguous blocks of `block_weeks`
/// weeks drawn from `treatment_shares` (Control, Hi-Lo, EDLP). Stores are
/// spread round-robin over zones. For product j,
///   log price    = base_j + shift(regime) + noise_sd * N(0,1)
///   log quantity = intercept_j + elasticity * log price + quantity_noise_sd * N(0,1)
struct PricingSimConfig {
    std::size_t n_stores = 20;
    std::size_t n_weeks = 104;
    std::size_t n_products = 5; // per category
    std::size_t n_categories = 2;
    std::size_t n_zones = 2;
    std::size_t block_weeks = 12;
    std::array<double, 3> treatment_shares{0.6, 0.2, 0.2};
    double hilo_shift = 0.04;
    double edlp_shift = -0.04;
    double noise_sd = 0.01;
    double quantity_noise_sd = 0.05;
    double elasticity = -2.0;
    std::uint64_t seed = 1;

    void validate() const
    {
        if (n_stores < 1 || n_weeks < 1 || n_products < 1 || n_categories < 1 || n_zones < 1 || block_weeks < 1)
            throw InvalidOptions("pricing simulation sizes must be >= 1");
        if (n_zones > n_stores)
            throw InvalidOptions("more zones than stores");
        double total = 0.0;
        for (double s : treatment_shares) {
            if (!(s >= 0.0))
                throw InvalidOptions("treatment shares must be non-negative");
            total += s;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw InvalidOptions("treatment shares must sum to 1");
        if (!(hilo_shift >= 0.0) || !(edlp_shift <= 0.0))
            throw InvalidOptions("shifts must satisfy hilo_shift >= 0 >= edlp_shift");
        if (!(noise_sd >= 0.0) || !(quantity_noise_sd >= 0.0))
            throw InvalidOptions("noise standard deviations must be non-negative");
        if (!std::isfinite(elasticity))
            throw InvalidOptions("elasticity must be finite");
    }
};

struct PricingDataset {
    PanelTable panel;
    std::vector<StoreWeekLabel> truth; // one per store-week-category
};

inline std::string sim_store_name(std::size_t s) { return "S" + std::to_string(s + 1); }
inline std::string sim_zone_name(std::size_t z) { return "Z" + std::to_string(z + 1); }
inline std::string sim_category_name(std::size_t c) { return "C" + std::to_string(c + 1); }
inline std::string sim_product_name(std::size_t c, std::size_t j)
{
    return "C" + std::to_string(c + 1) + "P" + std::to_string(j + 1);
}

inline PricingDataset simulate_pricing(const PricingSimConfig& config)
{
    config.validate();
    PricingDataset out;
    const std::array<const std::string*, 3> names{&label_control, &label_hilo, &label_edlp};
    const std::array<double, 3> shifts{0.0, config.hilo_shift, config.edlp_shift};

    // Stream ids: 0 = product constants, 1 + (c * stores + s) = regime blocks,
    // then one stream per (c, s, w) cell.
    KeyedStream constants(config.seed, 0);
    std::vector<std::vector<double>> base(config.n_categories), intercept(config.n_categories);
    for (std::size_t c = 0; c < config.n_categories; ++c)
        for (std::size_t j = 0; j < config.n_products; ++j) {
            base[c].push_back(std::log(1.0 + 4.0 * constants.uniform()));
            intercept[c].push_back(3.0 + 2.0 * constants.uniform());
        }

    const std::uint64_t cell_offset = 1 + config.n_categories * config.n_stores;
    for (std::size_t c = 0; c < config.n_categories; ++c) {
        for (std::size_t s = 0; s < config.n_stores; ++s) {
            KeyedStream blocks(config.seed, 1 + c * config.n_stores + s);
            const std::string zone = sim_zone_name(s % config.n_zones);
            std::size_t regime = 0;
            for (std::size_t w = 0; w < config.n_weeks; ++w) {
                if (w % config.block_weeks == 0) {
                    const double u = blocks.uniform();
                    regime = u < config.treatment_shares[0]                                  ? 0
                             : u < config.treatment_shares[0] + config.treatment_shares[1] ? 1
                                                                                             : 2;
                }
                const auto week = static_cast<int>(w + 1);
                out.truth.push_back({sim_category_name(c), zone, sim_store_name(s), week, *names[regime]});
                KeyedStream cell(config.seed,
                                 cell_offset + (c * config.n_stores + s) * config.n_weeks + w);
                for (std::size_t j = 0; j < config.n_products; ++j) {
                    const double log_price = base[c][j] + shifts[regime] + config.noise_sd * cell.normal();
                    const double log_qty =
                        intercept[c][j] + config.elasticity * log_price + config.quantity_noise_sd * cell.normal();
                    PanelRow row;
                    row.category = sim_category_name(c);
                    row.zone = zone;
                    row.store = sim_store_name(s);
                    row.week = week;
                    row.product = sim_product_name(c, j);
                    row.price = std::exp(log_price);
                    row.quantity = std::exp(log_qty);
                    out.panel.rows.push_back(std::move(row));
                }
            }
        }
    }
    out.panel.rebuild_index();
    return out;
}

} // namespace exomix
