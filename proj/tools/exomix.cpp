// exomix: command-line driver for mixture-based selection of exogenous
// observations. Every run writes config.json next to its results; running
// `exomix --config <that file> --output <dir>` repeats it exactly.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "exomix/bootstrap.hpp"
#include "exomix/csv.hpp"
#include "exomix/error.hpp"
#include "exomix/experiments.hpp"
#include "exomix/labeling.hpp"
#include "exomix/npem.hpp"
#include "exomix/panel.hpp"
#include "exomix/pipeline.hpp"
#include "exomix/regress.hpp"
#include "exomix/report.hpp"
#include "exomix/simgen.hpp"

namespace fs = std::filesystem;
using namespace exomix;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_other = 1;
constexpr int exit_config = 2;
constexpr int exit_data = 3;
constexpr int exit_estimation = 4;
constexpr int exit_io = 5;

int exit_code(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::config:
        return exit_config;
    case ErrorKind::data:
        return exit_data;
    case ErrorKind::estimation:
        return exit_estimation;
    case ErrorKind::io:
        return exit_io;
    }
    return exit_other;
}

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};

// Options that define a run, in registration order per (sub)command. Their
// resolved values form the emitted config; config files are fed back
// through the same options.
class Registry {
public:
    template <class T>
    CLI::Option* option(CLI::App* app, const std::string& name, T& var, const std::string& help)
    {
        auto* o = app->add_option("--" + name, var, help);
        if constexpr (is_vector<T>::value)
            o->delimiter(',');
        else
            o->capture_default_str();
        entries_[app].push_back({name, o, [&var] { return json(var); }});
        return o;
    }

    CLI::Option* flag(CLI::App* app, const std::string& name, bool& var, const std::string& help)
    {
        auto* o = app->add_flag("--" + name, var, help);
        entries_[app].push_back({name, o, [&var] { return json(var); }});
        return o;
    }

    json resolved(const std::vector<CLI::App*>& chain) const
    {
        json out = json::object();
        for (auto* app : chain)
            if (auto it = entries_.find(app); it != entries_.end())
                for (const auto& e : it->second)
                    out[e.name] = e.value();
        return out;
    }

    // Applies file values to options not given on the command line.
    void apply(const std::vector<CLI::App*>& chain, const json& options) const
    {
        std::map<std::string, bool> known;
        for (auto* app : chain)
            if (auto it = entries_.find(app); it != entries_.end())
                for (const auto& e : it->second) {
                    known[e.name] = true;
                    if (!options.contains(e.name) || e.option->count() > 0)
                        continue;
                    const std::string text = as_text(options[e.name]);
                    if (text.empty() && options[e.name].is_array())
                        continue;
                    e.option->add_result(text);
                    try {
                        e.option->run_callback();
                    } catch (const CLI::Error& err) {
                        throw InvalidOptions("config value for '" + e.name + "': " + err.what());
                    }
                }
        for (const auto& [key, _] : options.items())
            if (!known.count(key))
                throw InvalidOptions("config file sets unknown option '" + key + "' for this command");
    }

private:
    struct Entry {
        std::string name;
        CLI::Option* option;
        std::function<json()> value;
    };

    static std::string as_text(const json& v)
    {
        if (v.is_string())
            return v.get<std::string>();
        if (v.is_array()) {
            std::string out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out += (i ? "," : "") + as_text(v[i]);
            return out;
        }
        return v.dump();
    }

    std::map<CLI::App*, std::vector<Entry>> entries_;
};

// --- files -----------------------------------------------------------------

std::ifstream open_in(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path + "' for reading");
    return in;
}

void write_file(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    out << content;
    out.close();
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

json read_json(const std::string& path)
{
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("'" + path + "' is not valid JSON: " + e.what());
    }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

csv::Table read_table(const std::string& path)
{
    auto in = open_in(path);
    return csv::read(in);
}

std::vector<double> numeric_column(const csv::Table& t, const std::string& name)
{
    const std::size_t c = t.column(name);
    std::vector<double> out;
    out.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        out.push_back(csv::parse_double(t.rows[i][c], t.line_numbers[i], name));
    return out;
}

bool all_digits(const std::string& s)
{
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// A list of column names, or a single count meaning the first N columns other
// than the outcome and latent_* columns.
std::vector<std::string> resolve_coordinates(const csv::Table& t, const std::vector<std::string>& coords,
                                             const std::string& outcome)
{
    if (coords.size() == 1 && all_digits(coords[0]) && !t.has_column(coords[0])) {
        const auto count = std::stoul(coords[0]);
        std::vector<std::string> out;
        for (const auto& h : t.header)
            if (h != outcome && h.rfind("latent_", 0) != 0 && out.size() < count)
                out.push_back(h);
        if (out.size() < count || count == 0)
            throw InvalidOptions("--coords " + coords[0] + ": the data has only " + std::to_string(out.size()) +
                                 " coordinate columns");
        return out;
    }
    if (coords.empty())
        throw InvalidOptions("--coords needs at least one column");
    return coords;
}

DataMatrix read_matrix(const csv::Table& t, const std::vector<std::string>& names)
{
    std::vector<std::vector<double>> columns;
    for (const auto& n : names)
        columns.push_back(numeric_column(t, n));
    return DataMatrix::from_columns(columns, names);
}

std::string file_safe(const std::string& s)
{
    std::string out;
    for (char c : s)
        out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
    return out;
}

// --- shared option groups ----------------------------------------------------

struct FitArgs {
    std::size_t components = 2;
    int max_iterations = 500;
    double tolerance = 1e-6;
    int restarts = 5;
    std::string init = "kmeans";
    std::string bandwidth = "silverman";
    std::size_t kde_grid = 0;

    void add(Registry& reg, CLI::App* app)
    {
        reg.option(app, "components", components, "number of mixture components m");
        reg.option(app, "max-iterations", max_iterations, "npEM iteration cap");
        reg.option(app, "tolerance", tolerance, "stop when max |weight change| + mean |posterior change| is below");
        reg.option(app, "restarts", restarts, "npEM restarts; the best smoothed log-likelihood wins");
        reg.option(app, "init", init, "kmeans or random_posterior");
        reg.option(app, "bandwidth", bandwidth, "silverman, or a fixed positive bandwidth");
        reg.option(app, "kde-grid", kde_grid, "0 = exact densities; >= 64 = binned grid nodes (much faster)");
    }

    FitOptions options(std::uint64_t seed, std::size_t threads) const
    {
        FitOptions o;
        o.max_iterations = max_iterations;
        o.tolerance = tolerance;
        o.restarts = restarts;
        if (init == "kmeans")
            o.init = InitMethod::kmeans;
        else if (init == "random_posterior")
            o.init = InitMethod::random_posterior;
        else
            throw InvalidOptions("--init must be kmeans or random_posterior, got '" + init + "'");
        if (bandwidth != "silverman") {
            double h = 0.0;
            try {
                std::size_t used = 0;
                h = std::stod(bandwidth, &used);
                if (used != bandwidth.size())
                    throw std::invalid_argument("trailing characters");
            } catch (const std::exception&) {
                throw InvalidOptions("--bandwidth must be 'silverman' or a number, got '" + bandwidth + "'");
            }
            o.bandwidth_rule = BandwidthRule::fixed(h);
        }
        o.kde_grid_size = kde_grid;
        o.seed = seed;
        o.threads = threads;
        o.validate();
        return o;
    }
};

struct RuleArgs {
    std::string rule = "moment";
    std::vector<std::string> moment_coords{"X"};
    std::vector<std::string> labels{label_exogenous, label_endogenous};

    void add(Registry& reg, CLI::App* app)
    {
        reg.option(app, "rule", rule, "moment (rank by posterior-weighted mean) or weight (rank by weight)");
        reg.option(app, "moment-coords", moment_coords, "coordinates summed by the moment rule");
        reg.option(app, "labels", labels, "labels from highest to lowest (moment) or majority,minority (weight)");
    }

    LabelRule build(const std::vector<std::string>& coordinate_names) const
    {
        if (rule == "weight") {
            if (labels.size() != 2)
                throw InvalidOptions("the weight rule takes exactly two labels: majority,minority");
            return LabelRule::weight_order(labels[0], labels[1]);
        }
        if (rule != "moment")
            throw InvalidOptions("--rule must be moment or weight, got '" + rule + "'");
        std::vector<std::size_t> idx;
        for (const auto& c : moment_coords) {
            auto it = std::find(coordinate_names.begin(), coordinate_names.end(), c);
            if (it == coordinate_names.end())
                throw InvalidOptions("moment coordinate '" + c + "' is not a fitted coordinate");
            idx.push_back(static_cast<std::size_t>(it - coordinate_names.begin()));
        }
        return LabelRule::moment_order(idx, labels);
    }
};

struct SchemaArgs {
    SchemaMap map;

    void add(Registry& reg, CLI::App* app)
    {
        reg.option(app, "col-category", map.category, "category column");
        reg.option(app, "col-zone", map.zone, "zone column");
        reg.option(app, "col-store", map.store, "store column");
        reg.option(app, "col-week", map.week, "week column");
        reg.option(app, "col-product", map.product, "product column");
        reg.option(app, "col-price", map.price, "price column");
        reg.option(app, "col-quantity", map.quantity, "quantity column (empty: none)");
    }
};

struct PrepArgs {
    double threshold = 0.03;
    std::vector<int> filter_window;
    std::size_t cap = 12;
    std::string missing = "drop_unit";
    double max_missing = 0.15;

    void add(Registry& reg, CLI::App* app)
    {
        reg.option(app, "threshold", threshold, "keep products whose cross-store price spread exceeds this");
        reg.option(app, "filter-window", filter_window, "first,last week considered by the product filter");
        reg.option(app, "cap", cap, "maximum number of product coordinates (0 = no cap)");
        reg.option(app, "missing", missing, "drop_unit or drop_product");
        reg.option(app, "max-missing", max_missing, "exclude stores lacking data in more than this share of weeks");
    }

    MissingPolicy policy() const
    {
        if (missing == "drop_unit")
            return MissingPolicy::drop_unit;
        if (missing == "drop_product")
            return MissingPolicy::drop_product;
        throw InvalidOptions("--missing must be drop_unit or drop_product, got '" + missing + "'");
    }

    std::optional<std::pair<int, int>> window() const
    {
        if (filter_window.empty())
            return std::nullopt;
        if (filter_window.size() != 2)
            throw InvalidOptions("--filter-window takes first,last");
        return std::make_pair(filter_window[0], filter_window[1]);
    }
};

PanelTable read_panel(const std::string& path, const SchemaMap& schema)
{
    if (path.empty())
        throw InvalidOptions("--panel is required");
    auto in = open_in(path);
    return load_panel(in, schema);
}

void require(const std::string& value, const char* flag)
{
    if (value.empty())
        throw InvalidOptions(std::string(flag) + " is required");
}

// Density curves on 512 points spanning each coordinate's range plus 3 bandwidths.
std::string density_csv(const MixtureFit& fit)
{
    std::ostringstream out;
    std::vector<std::string> head{"coordinate", "x"};
    for (std::size_t j = 0; j < fit.m(); ++j)
        head.push_back("component_" + std::to_string(j + 1));
    csv::write_row(out, head);
    for (std::size_t k = 0; k < fit.r(); ++k) {
        const auto col = fit.data.column(k);
        const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
        const double a = *lo - 3.0 * fit.bandwidths[k], b = *hi + 3.0 * fit.bandwidths[k];
        for (int g = 0; g < 512; ++g) {
            const double x = a + (b - a) * g / 511.0;
            std::vector<std::string> row{fit.data.names()[k], csv::format(x)};
            for (std::size_t j = 0; j < fit.m(); ++j)
                row.push_back(csv::format(fit.densities[j][k](x)));
            csv::write_row(out, row);
        }
    }
    return out.str();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Select likely exogenous observations with a nonparametric mixture model, then estimate on them."};
    app.require_subcommand(0, 1);
    Registry reg;

    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::string config_path;
    std::string output = ".";
    reg.option(&app, "seed", seed, "master random seed");
    reg.option(&app, "threads", threads, "worker threads (results do not depend on it)");
    app.add_option("--config", config_path, "JSON config written by an earlier run; flags override its values");
    app.add_option("--output", output, "output directory")->capture_default_str();

    // simulate ---------------------------------------------------------------
    auto* simulate = app.add_subcommand("simulate", "generate synthetic datasets")->fallthrough();
    simulate->require_subcommand(1);
    Section3Config s3;
    bool emit_latent = false;
    auto* sim_s3 = simulate->add_subcommand("section3", "two-component uniform design")->fallthrough();
    reg.option(sim_s3, "t", s3.T, "sample size");
    reg.option(sim_s3, "pi", s3.pi, "weight of the exogenous component");
    reg.option(sim_s3, "beta", s3.beta, "true slope");
    reg.flag(sim_s3, "emit-latent", emit_latent, "add latent_component and latent_epsilon columns");

    PricingSimConfig ps;
    std::vector<double> shares(ps.treatment_shares.begin(), ps.treatment_shares.end());
    auto* sim_pr = simulate->add_subcommand("pricing", "scanner panel with Control / Hi-Lo / EDLP regimes")->fallthrough();
    reg.option(sim_pr, "stores", ps.n_stores, "number of stores");
    reg.option(sim_pr, "weeks", ps.n_weeks, "number of weeks");
    reg.option(sim_pr, "products", ps.n_products, "products per category");
    reg.option(sim_pr, "categories", ps.n_categories, "number of categories");
    reg.option(sim_pr, "zones", ps.n_zones, "number of pricing zones");
    reg.option(sim_pr, "block-weeks", ps.block_weeks, "length of each regime block");
    reg.option(sim_pr, "shares", shares, "Control,Hi-Lo,EDLP block probabilities");
    reg.option(sim_pr, "hilo-shift", ps.hilo_shift, "Hi-Lo log-price shift");
    reg.option(sim_pr, "edlp-shift", ps.edlp_shift, "EDLP log-price shift");
    reg.option(sim_pr, "noise-sd", ps.noise_sd, "log-price noise sd");
    reg.option(sim_pr, "quantity-noise-sd", ps.quantity_noise_sd, "log-quantity noise sd");
    reg.option(sim_pr, "elasticity", ps.elasticity, "price elasticity of demand");

    // fit ----------------------------------------------------------------------
    auto* fit_cmd = app.add_subcommand("fit", "estimate the mixture")->fallthrough();
    std::string data_path;
    std::vector<std::string> coords{"X", "W1", "W2"};
    std::string outcome = "Y";
    FitArgs fit_args;
    reg.option(fit_cmd, "data", data_path, "CSV with one column per coordinate");
    reg.option(fit_cmd, "coords", coords, "coordinate columns, or a count of leading columns");
    reg.option(fit_cmd, "y", outcome, "outcome column, skipped when --coords is a count");
    fit_args.add(reg, fit_cmd);

    // label --------------------------------------------------------------------
    auto* label_cmd = app.add_subcommand("label", "name the fitted components")->fallthrough();
    std::string fit_path;
    RuleArgs rule_args;
    reg.option(label_cmd, "fit", fit_path, "fit.json from the fit command");
    rule_args.add(reg, label_cmd);

    // select -------------------------------------------------------------------
    auto* select_cmd = app.add_subcommand("select", "rows whose target posterior reaches p")->fallthrough();
    std::string labels_path;
    std::string target = label_exogenous;
    double p = 0.9;
    reg.option(select_cmd, "fit", fit_path, "fit.json");
    reg.option(select_cmd, "labels", labels_path, "labels.json from the label command");
    reg.option(select_cmd, "target", target, "label whose posterior is thresholded");
    reg.option(select_cmd, "p", p, "posterior threshold in [0, 1]");

    // regress ------------------------------------------------------------------
    auto* regress_cmd = app.add_subcommand("regress", "OLS, or fixed-effects regression with clustered errors")
                            ->fallthrough();
    std::string x_name = "X";
    std::string selection_path;
    bool no_intercept = false;
    std::vector<std::string> fixed_effects;
    std::string cluster;
    reg.option(regress_cmd, "data", data_path, "CSV input");
    reg.option(regress_cmd, "y", outcome, "outcome column");
    reg.option(regress_cmd, "x", x_name, "regressor column");
    reg.option(regress_cmd, "selection", selection_path, "selection.json restricting the rows (OLS mode)");
    reg.flag(regress_cmd, "no-intercept", no_intercept, "OLS without intercept");
    reg.option(regress_cmd, "fe", fixed_effects, "fixed-effect columns; switches to FE mode");
    reg.option(regress_cmd, "cluster", cluster, "cluster column for FE standard errors");

    // pipeline -----------------------------------------------------------------
    auto* pipeline = app.add_subcommand("pipeline", "fit, label, select and estimate")->fallthrough();
    pipeline->require_subcommand(1);
    auto* pipe_s3 = pipeline->add_subcommand("section3", "single-regressor subset estimation")->fallthrough();
    std::size_t bootstrap_B = 0;
    int replicate_restarts = 0;
    reg.option(pipe_s3, "data", data_path, "CSV with the outcome and coordinates");
    reg.option(pipe_s3, "y", outcome, "outcome column");
    reg.option(pipe_s3, "x", x_name, "regressor column (one of the coordinates)");
    reg.option(pipe_s3, "coords", coords, "coordinate columns, or a count of leading columns");
    fit_args.add(reg, pipe_s3);
    rule_args.add(reg, pipe_s3);
    reg.option(pipe_s3, "target", target, "label of the exogenous component");
    reg.option(pipe_s3, "p", p, "posterior threshold in [0, 1]");
    reg.option(pipe_s3, "bootstrap", bootstrap_B, "bootstrap replicates over the whole procedure (0 = off, else >= 50)");
    reg.option(pipe_s3, "replicate-restarts", replicate_restarts, "npEM restarts per replicate (0 = --restarts)");

    auto* pipe_panel = pipeline->add_subcommand("panel", "label store-weeks with pricing regimes")->fallthrough();
    std::string panel_path;
    std::string truth_path;
    SchemaArgs schema;
    PrepArgs prep;
    FitArgs panel_fit;
    panel_fit.components = 3;
    int window = 6;
    std::vector<std::string> ordering{label_hilo, label_control, label_edlp};
    reg.option(pipe_panel, "panel", panel_path, "long-format panel CSV");
    reg.option(pipe_panel, "truth", truth_path, "optional true labels CSV (category,zone,store,week,label)");
    schema.add(reg, pipe_panel);
    prep.add(reg, pipe_panel);
    panel_fit.add(reg, pipe_panel);
    reg.option(pipe_panel, "ordering", ordering, "labels from highest to lowest mean demeaned price");
    reg.option(pipe_panel, "window", window, "weeks on each side of a Control -> treatment switch");

    // panel-prep ---------------------------------------------------------------
    auto* prep_cmd = app.add_subcommand("panel-prep", "demean, filter products and build coordinate matrices")
                         ->fallthrough();
    std::vector<std::string> demean_group{"zone", "week", "product"};
    std::string only_category, only_zone;
    reg.option(prep_cmd, "panel", panel_path, "long-format panel CSV");
    schema.add(reg, prep_cmd);
    prep.add(reg, prep_cmd);
    reg.option(prep_cmd, "demean-group", demean_group, "columns defining the demeaning groups");
    reg.option(prep_cmd, "category", only_category, "restrict to one category");
    reg.option(prep_cmd, "zone", only_zone, "restrict to one zone");

    // --- parse, merging the config file --------------------------------------
    std::vector<std::string> args(argv + 1, argv + argc);
    json file_config;
    try {
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size())
                config_path = args[i + 1];
            else if (args[i].rfind("--config=", 0) == 0)
                config_path = args[i].substr(9);
        }
        if (!config_path.empty()) {
            file_config = read_json(config_path);
            if (!file_config.is_object() || !file_config.contains("command") || !file_config.contains("options"))
                throw InvalidOptions("config file needs 'command' and 'options'");
            bool has_command = false;
            for (const auto& a : args)
                for (auto* sub : app.get_subcommands({}))
                    has_command = has_command || a == sub->get_name();
            if (!has_command) {
                auto cmd = file_config["command"].get<std::vector<std::string>>();
                args.insert(args.begin(), cmd.begin(), cmd.end());
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "error: malformed config: " << e.what() << "\n";
        return exit_config;
    }

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_config;
    }

    std::vector<CLI::App*> chain{&app};
    for (CLI::App* cur = &app; !cur->get_subcommands().empty();) {
        cur = cur->get_subcommands().front();
        chain.push_back(cur);
    }
    if (chain.size() == 1) {
        std::cout << app.help();
        return exit_ok;
    }
    std::vector<std::string> command;
    for (std::size_t i = 1; i < chain.size(); ++i)
        command.push_back(chain[i]->get_name());

    try {
        if (!file_config.is_null()) {
            if (file_config["command"].get<std::vector<std::string>>() != command)
                throw InvalidOptions("config file is for '" +
                                     file_config["command"].dump() + "', not this command");
            reg.apply(chain, file_config["options"]);
        }
        const json config = {{"command", command}, {"options", reg.resolved(chain)}};
        const fs::path out_dir(output);
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec)
            throw IoError("cannot create output directory '" + output + "': " + ec.message());
        if (threads < 1)
            throw InvalidOptions("--threads must be >= 1");

        // Each command validates everything, computes, then writes its files.
        if (chain.back() == sim_s3) {
            s3.seed = seed;
            const auto d = simulate_section3(s3);
            std::ostringstream csv_out;
            std::vector<std::string> head{"Y", "X", "W1", "W2"};
            if (emit_latent) {
                head.push_back("latent_component");
                head.push_back("latent_epsilon");
            }
            csv::write_row(csv_out, head);
            for (std::size_t i = 0; i < d.data.n(); ++i) {
                std::vector<std::string> row{csv::format(d.outcome[i]), csv::format(d.data(i, 0)),
                                             csv::format(d.data(i, 1)), csv::format(d.data(i, 2))};
                if (emit_latent) {
                    row.push_back(std::to_string(d.latent_component[i]));
                    row.push_back(csv::format(d.latent_epsilon[i]));
                }
                csv::write_row(csv_out, row);
            }
            write_file(out_dir / "section3.csv", csv_out.str());
            write_file(out_dir / "config.json", dump(config));
            std::cout << "wrote " << d.data.n() << " rows to " << (out_dir / "section3.csv").string() << "\n";
        } else if (chain.back() == sim_pr) {
            if (shares.size() != 3)
                throw InvalidOptions("--shares takes three values: Control,Hi-Lo,EDLP");
            std::copy(shares.begin(), shares.end(), ps.treatment_shares.begin());
            ps.seed = seed;
            const auto d = simulate_pricing(ps);
            std::ostringstream panel_out, truth_out;
            write_panel(panel_out, d.panel, false);
            write_labels(truth_out, d.truth);
            write_file(out_dir / "panel.csv", panel_out.str());
            write_file(out_dir / "truth.csv", truth_out.str());
            write_file(out_dir / "config.json", dump(config));
            std::cout << "wrote " << d.panel.rows.size() << " panel rows and " << d.truth.size()
                      << " store-week labels to " << out_dir.string() << "\n";
        } else if (chain.back() == fit_cmd) {
            require(data_path, "--data");
            const auto options = fit_args.options(seed, threads);
            const auto table = read_table(data_path);
            const auto names = resolve_coordinates(table, coords, outcome);
            const auto fit = npem_fit(read_matrix(table, names), fit_args.components, options);
            for (const auto& w : fit.warnings)
                std::cerr << "warning: " << w << "\n";
            json doc = to_json(fit);
            doc["config"] = config;
            write_file(out_dir / "fit.json", dump(doc));
            write_file(out_dir / "densities.csv", density_csv(fit));
            write_file(out_dir / "config.json", dump(config));
            std::cout << "weights:";
            for (double w : fit.weights)
                std::cout << " " << fixed3(w);
            std::cout << "  iterations: " << fit.iterations_run << (fit.converged ? "" : " (not converged)") << "\n";
        } else if (chain.back() == label_cmd) {
            require(fit_path, "--fit");
            const auto fit = fit_from_json(read_json(fit_path));
            const auto rule = rule_args.build(fit.data.names());
            const auto labels = label_components(fit, rule);
            const auto argmax = assign_argmax_labels(fit, labels);
            json doc = {{"labels", labels.names}, {"weights", numbers(fit.weights)}, {"config", config}};
            std::ostringstream rows;
            std::vector<std::string> head{"row", "label"};
            for (const auto& l : labels.names)
                head.push_back("posterior_" + l);
            csv::write_row(rows, head);
            for (std::size_t i = 0; i < fit.n(); ++i) {
                std::vector<std::string> r{std::to_string(i), argmax[i]};
                for (std::size_t j = 0; j < fit.m(); ++j)
                    r.push_back(csv::format(fit.posteriors(i, j)));
                csv::write_row(rows, r);
            }
            write_file(out_dir / "labels.json", dump(doc));
            write_file(out_dir / "row_labels.csv", rows.str());
            write_file(out_dir / "config.json", dump(config));
            for (std::size_t j = 0; j < fit.m(); ++j)
                std::cout << "component " << j + 1 << " (weight " << fixed3(fit.weights[j]) << "): " << labels.names[j]
                          << "\n";
        } else if (chain.back() == select_cmd) {
            require(fit_path, "--fit");
            require(labels_path, "--labels");
            const auto fit = fit_from_json(read_json(fit_path));
            ComponentLabels labels;
            try {
                labels.names = read_json(labels_path).at("labels").get<std::vector<std::string>>();
            } catch (const json::exception& e) {
                throw ParseError("'" + labels_path + "' has no label list: " + e.what());
            }
            const auto sel = select_subset(fit, labels, target, p);
            json doc = to_json(sel);
            doc["target"] = target;
            doc["config"] = config;
            std::ostringstream rows;
            csv::write_row(rows, {"row", "target_posterior", "selected"});
            std::size_t next = 0;
            for (std::size_t i = 0; i < fit.n(); ++i) {
                const bool chosen = next < sel.indices.size() && sel.indices[next] == i;
                next += chosen;
                csv::write_row(rows, {std::to_string(i), csv::format(sel.target_posteriors[i]), chosen ? "1" : "0"});
            }
            write_file(out_dir / "selection.json", dump(doc));
            write_file(out_dir / "selection.csv", rows.str());
            write_file(out_dir / "config.json", dump(config));
            std::cout << "selected " << sel.indices.size() << " of " << fit.n() << " rows\n";
        } else if (chain.back() == regress_cmd) {
            require(data_path, "--data");
            const auto table = read_table(data_path);
            RegressionResult result;
            if (!fixed_effects.empty()) {
                require(cluster, "--cluster");
                if (!selection_path.empty())
                    throw InvalidOptions("--selection applies to OLS mode only");
                Frame frame;
                frame.numeric[outcome] = numeric_column(table, outcome);
                frame.numeric[x_name] = numeric_column(table, x_name);
                std::vector<std::string> factor_names = fixed_effects;
                factor_names.push_back(cluster);
                for (const auto& f : factor_names) {
                    const std::size_t c = table.column(f);
                    auto& col = frame.factors[f];
                    if (!col.empty())
                        continue; // the cluster key may repeat a fixed effect
                    for (const auto& row : table.rows)
                        col.push_back(row[c]);
                }
                result = fe_regression(frame, {outcome, x_name, fixed_effects, cluster});
            } else {
                if (!cluster.empty())
                    throw InvalidOptions("--cluster needs --fe");
                const auto y = numeric_column(table, outcome);
                const auto x = numeric_column(table, x_name);
                if (selection_path.empty()) {
                    result = ols(y, x, !no_intercept);
                } else {
                    SelectionResult sel;
                    try {
                        const auto j = read_json(selection_path);
                        sel.indices = j.at("indices").get<std::vector<std::size_t>>();
                        sel.threshold = j.at("threshold").get<double>();
                    } catch (const json::exception& e) {
                        throw ParseError("'" + selection_path + "' is not a selection document: " + e.what());
                    }
                    result = ols_on_subset(y, x, sel, !no_intercept);
                }
            }
            json doc = to_json(result);
            doc["config"] = config;
            const std::string table_text = regression_table({{outcome, result}});
            write_file(out_dir / "regression.json", dump(doc));
            write_file(out_dir / "table.txt", table_text);
            write_file(out_dir / "config.json", dump(config));
            std::cout << table_text;
        } else if (chain.back() == pipe_s3) {
            require(data_path, "--data");
            const auto table = read_table(data_path);
            const auto names = resolve_coordinates(table, coords, outcome);
            auto it = std::find(names.begin(), names.end(), x_name);
            if (it == names.end())
                throw InvalidOptions("--x '" + x_name + "' must be one of the coordinates");
            SubsetPipelineConfig pc;
            pc.m = fit_args.components;
            pc.fit = fit_args.options(seed, threads);
            pc.rule = rule_args.build(names);
            pc.target = target;
            pc.p = p;
            pc.regressor = static_cast<std::size_t>(it - names.begin());
            const auto data = read_matrix(table, names);
            const auto y = numeric_column(table, outcome);
            std::optional<BootstrapOptions> bo;
            if (bootstrap_B > 0) {
                bo.emplace();
                bo->B = bootstrap_B;
                bo->seed = seed;
                bo->threads = threads;
                bo->replicate_restarts = replicate_restarts;
                bo->validate();
            }
            pc.validate(data);

            const auto est = run_subset_pipeline(data, y, pc);
            for (const auto& w : est.fit.warnings)
                std::cerr << "warning: " << w << "\n";
            json doc;
            doc["config"] = config;
            doc["full_sample"] = to_json(est.full);
            doc["subset"] = to_json(est.subset);
            doc["selected_rows"] = est.selection.indices.size();
            doc["labels"] = est.labels.names;
            doc["weights"] = numbers(est.fit.weights);
            doc["iterations_run"] = est.fit.iterations_run;
            doc["converged"] = est.fit.converged;
            doc["warnings"] = est.fit.warnings;
            std::vector<TableColumn> cols{{"Full sample", est.full}};
            if (bo) {
                const auto boot = bootstrap_pipeline(data, y, pc, *bo);
                doc["bootstrap"] = to_json(boot);
                const auto with_boot = with_bootstrap_se(est.subset, boot);
                doc["subset_bootstrap_se"] = to_json(with_boot);
                cols.push_back({"chi(p)", with_boot});
            } else {
                cols.push_back({"chi(p)", est.subset});
            }
            const std::string table_text = regression_table(cols);
            write_file(out_dir / "results.json", dump(doc));
            write_file(out_dir / "table.txt", table_text);
            write_file(out_dir / "config.json", dump(config));
            std::cout << table_text;
        } else if (chain.back() == pipe_panel) {
            PanelPipelineConfig pc;
            pc.product_threshold = prep.threshold;
            pc.filter_window = prep.window();
            pc.coordinate_cap = prep.cap;
            pc.missing = prep.policy();
            pc.max_missing_week_share = prep.max_missing;
            pc.m = panel_fit.components;
            pc.fit = panel_fit.options(seed, threads);
            pc.ordering = ordering;
            pc.window = window;
            pc.validate();
            const auto panel = read_panel(panel_path, schema.map);
            std::optional<std::vector<StoreWeekLabel>> truth;
            if (!truth_path.empty()) {
                auto in = open_in(truth_path);
                truth = read_labels(in);
            }
            const auto result = run_panel_pipeline(panel, pc, truth ? &*truth : nullptr);
            for (const auto& g : result.groups)
                for (const auto& n : g.notices)
                    std::cerr << "notice (" << g.category << ", " << g.zone << "): " << n << "\n";
            json doc = to_json(result);
            doc["config"] = config;
            std::ostringstream labels_out;
            write_labels(labels_out, result.labels);
            std::string tables;
            if (result.accuracy)
                tables += "Label accuracy\n" + accuracy_table(*result.accuracy) + "\n";
            tables += "Price changes (" + std::to_string(window) + "+" + std::to_string(window) + " week windows)\n" +
                      price_change_table(result.price_changes) + "\n";
            tables += "Elasticities (matched pairs, fixed effects)\n" + elasticity_table(result.elasticities);
            write_file(out_dir / "results.json", dump(doc));
            write_file(out_dir / "labels.csv", labels_out.str());
            write_file(out_dir / "tables.txt", tables);
            write_file(out_dir / "config.json", dump(config));
            std::cout << tables;
        } else if (chain.back() == prep_cmd) {
            std::vector<PanelKey> group;
            for (const auto& g : demean_group) {
                if (g == "category")
                    group.push_back(PanelKey::category);
                else if (g == "zone")
                    group.push_back(PanelKey::zone);
                else if (g == "store")
                    group.push_back(PanelKey::store);
                else if (g == "week")
                    group.push_back(PanelKey::week);
                else if (g == "product")
                    group.push_back(PanelKey::product);
                else
                    throw InvalidOptions("--demean-group: unknown column '" + g + "'");
            }
            const auto policy = prep.policy();
            const auto fw = prep.window();
            const auto panel = log_demean(read_panel(panel_path, schema.map), group);

            json doc;
            doc["config"] = config;
            json groups = json::array();
            std::map<std::string, std::string> files;
            std::ostringstream products_out;
            csv::write_row(products_out, {"category", "zone", "product", "max_relative_spread", "coordinate"});
            for (const auto& category : panel.categories()) {
                if (!only_category.empty() && category != only_category)
                    continue;
                for (const auto& zone : panel.zones(category)) {
                    if (!only_zone.empty() && zone != only_zone)
                        continue;
                    const auto sub = panel.subset(category, zone);
                    const auto varying = filter_products(sub, prep.threshold, fw);
                    WideMatrixSpec spec;
                    spec.zone = zone;
                    spec.category = category;
                    spec.coordinates = choose_coordinates(varying, prep.cap);
                    spec.max_missing_week_share = prep.max_missing;
                    const auto wide = to_matrix(sub, spec, policy);
                    for (const auto& v : varying)
                        csv::write_row(products_out,
                                       {category, zone, v.product, csv::format(v.max_relative_spread),
                                        std::find(wide.coordinates.begin(), wide.coordinates.end(), v.product) !=
                                                wide.coordinates.end()
                                            ? "1"
                                            : "0"});
                    std::ostringstream m;
                    std::vector<std::string> head{"store", "week"};
                    head.insert(head.end(), wide.coordinates.begin(), wide.coordinates.end());
                    csv::write_row(m, head);
                    for (std::size_t i = 0; i < wide.units.size(); ++i) {
                        std::vector<std::string> row{wide.units[i].store, std::to_string(wide.units[i].week)};
                        for (std::size_t k = 0; k < wide.data.r(); ++k)
                            row.push_back(csv::format(wide.data(i, k)));
                        csv::write_row(m, row);
                    }
                    const std::string name = "matrix_" + file_safe(category) + "_" + file_safe(zone) + ".csv";
                    if (files.count(name))
                        throw InvalidData("groups '" + files[name] + "' and '" + category + "/" + zone +
                                          "' map to the same file name");
                    files[name] = category + "/" + zone;
                    write_file(out_dir / name, m.str());
                    groups.push_back({{"category", category},
                                      {"zone", zone},
                                      {"file", name},
                                      {"rows", wide.units.size()},
                                      {"coordinates", wide.coordinates},
                                      {"qualifying_products", varying.size()},
                                      {"excluded_stores", wide.excluded_stores},
                                      {"dropped_products", wide.dropped_products},
                                      {"dropped_units", wide.dropped_units},
                                      {"notices", wide.notices},
                                      {"missing_policy", prep.missing}});
                    for (const auto& n : wide.notices)
                        std::cerr << "notice (" << category << ", " << zone << "): " << n << "\n";
                }
            }
            if (groups.empty())
                throw EmptyResult("no (category, zone) group matches the restriction");
            doc["groups"] = groups;
            std::ostringstream demeaned;
            write_panel(demeaned, panel, true);
            write_file(out_dir / "demeaned.csv", demeaned.str());
            write_file(out_dir / "products.csv", products_out.str());
            write_file(out_dir / "prep.json", dump(doc));
            write_file(out_dir / "config.json", dump(config));
            std::cout << "prepared " << groups.size() << " group(s) in " << out_dir.string() << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_other;
    }
    return exit_ok;
}
