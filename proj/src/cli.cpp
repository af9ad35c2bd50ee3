#include "liqlsmc/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "liqlsmc/io.hpp"
#include "liqlsmc/parallel.hpp"

namespace liqlsmc {

namespace fs = std::filesystem;

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = {
        {"utility.kind", "", true, "crra or cara"},
        {"utility.gamma", "", true, "risk aversion, > 0"},
        {"grid.step", "", true, "allocation grid increment; levels are 0, step, ..., 1"},
        {"rf", "0.001", false, "risk-free rate per period"},
        {"w0", "1e8", false, "initial wealth in dollars"},
        {"s0", "200", false, "initial share price in dollars"},
        {"paths", "100000", false, "training sample size M"},
        {"steps", "12", false, "number of rebalancing periods N"},
        {"iterations", "1", false, "control iterations I"},
        {"seed", "1", false, "training seed"},
        {"algorithm", "per-level", false, "per-level or klp"},
        {"threads", "0", false, "worker threads; 0 reads LIQLSMC_THREADS, else hardware concurrency"},
        {"basis.degree", "2", false, "polynomial degree"},
        {"basis.cross_terms", "true", false, "include mixed monomials"},
        {"rebalance.tol", "1e-4", false, "fixed-point tolerance"},
        {"rebalance.max_iter", "50", false, "fixed-point iteration cap"},
        {"max_excluded_fraction", "0.01", false, "largest share of paths a regression may drop"},
        {"costs.model", "power-law", false, "zero, proportional or power-law"},
        {"costs.tc_rate", "0", false, "proportional transaction cost rate"},
        {"liquidity.sigma_day", "2.5", false, "daily price volatility, $/share"},
        {"liquidity.vol_day", "120e6", false, "daily traded volume, shares"},
        {"liquidity.theta", "988e6", false, "shares outstanding"},
        {"liquidity.delta", "0.0128205128205128205", false, "execution window as a fraction of a day (5/390)"},
        {"liquidity.mi_coeff", "0.314", false, "impact coefficient"},
        {"liquidity.lc_coeff", "0.142", false, "liquidity cost coefficient"},
        {"liquidity.mi_exponent", "0.25", false, "impact exponent on theta/vol"},
        {"liquidity.lc_exponent", "0.6", false, "liquidity cost exponent"},
        {"model.kind", "var1", false, "iid or var1"},
        {"model.annual_mean", "0.03", false, "iid: annual mean log-return"},
        {"model.annual_vol", "0.15", false, "iid: annual log-return volatility"},
        {"model.period_length", "1", false, "iid: years per step"},
        {"model.var1_file", "", false, "var1: model JSON; empty uses the built-in synthetic stand-in"},
        {"model.asset_index", "0", false, "calibrate: column of the traded asset"},
        {"eval.seed", "2", false, "evaluation seed, must differ from seed"},
        {"eval.paths", "0", false, "evaluation sample size; 0 means paths"},
        {"io.output_dir", "out", false, "directory for all outputs"},
        {"io.policy", "", false, "policy JSON for evaluate/evolution; empty solves first"},
        {"io.prices_csv", "", false, "calibrate: price history CSV"},
        {"sweep.axis", "vol_day", false, "vol_day, sigma_day, w0, horizon or gamma"},
        {"sweep.values", "", false, "comma-separated axis values"},
        {"benchmark.paths", "1000,10000,100000", false, "comma-separated sample sizes"},
        {"benchmark.iterations", "3", false, "largest control iteration count"},
        {"benchmark.klp", "true", false, "include the control-regression baseline"},
    };
    return schema;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

const ConfigKey* find_key(const std::string& name) {
    for (const auto& k : config_schema())
        if (k.name == name) return &k;
    return nullptr;
}

std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& where) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected key = value, got '" + line + "'");
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument(where + ": empty key");
    return {key, trim(line.substr(eq + 1))};
}

double as_double(const ConfigValues& v, const std::string& key) {
    const auto& s = v.at(key);
    double x = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(x))
        throw ConfigError(key, "expected a number, got '" + s + "'");
    return x;
}

std::uint64_t as_count(const ConfigValues& v, const std::string& key) {
    const auto& s = v.at(key);
    std::uint64_t x = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec == std::errc() && r.ptr == s.data() + s.size()) return x;
    // Allow integral scientific notation such as 1e5.
    double d = 0.0;
    const auto rd = std::from_chars(s.data(), s.data() + s.size(), d);
    if (rd.ec == std::errc() && rd.ptr == s.data() + s.size() && d >= 0.0 && d == std::floor(d) && d < 1.8e19)
        return static_cast<std::uint64_t>(d);
    throw ConfigError(key, "expected a nonnegative integer, got '" + s + "'");
}

bool as_bool(const ConfigValues& v, const std::string& key) {
    const auto& s = v.at(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key, "expected true or false, got '" + s + "'");
}

std::vector<double> as_list(const ConfigValues& v, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(v.at(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        ConfigValues one{{key, item}};
        out.push_back(as_double(one, key));
    }
    return out;
}

template <class F>
auto checked(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(key, e.what());
    }
}

}  // namespace

ConfigValues parse_config_text(const std::string& text) {
    ConfigValues out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto [k, v] = split_assignment(line, "config line " + std::to_string(lineno));
        if (!out.emplace(k, v).second) throw ConfigError(k, "given twice (line " + std::to_string(lineno) + ")");
    }
    return out;
}

ConfigValues apply_overrides(ConfigValues values, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        auto [k, v] = split_assignment(o, "override");
        values[k] = v;
    }
    return values;
}

RunConfig resolve_config(const ConfigValues& values) {
    for (const auto& [k, v] : values)
        if (!find_key(k)) throw ConfigError(k, "unknown key");
    ConfigValues v;
    for (const auto& key : config_schema()) {
        const auto it = values.find(key.name);
        if (it != values.end()) {
            v[key.name] = it->second;
        } else if (key.required) {
            throw ConfigError(key.name, "required key is missing");
        } else {
            v[key.name] = key.default_value;
        }
    }

    RunConfig rc;
    SolveConfig& s = rc.solve;
    const auto kind = v.at("utility.kind");
    const double gamma = as_double(v, "utility.gamma");
    if (kind == "crra")
        s.utility = checked("utility.gamma", [&] { return Utility::crra(gamma); });
    else if (kind == "cara")
        s.utility = checked("utility.gamma", [&] { return Utility::cara(gamma); });
    else
        throw ConfigError("utility.kind", "expected crra or cara, got '" + kind + "'");

    s.grid = checked("grid.step", [&] { return ControlGrid::uniform(as_double(v, "grid.step")); });
    s.rf = as_double(v, "rf");
    if (!(s.rf > -1.0)) throw ConfigError("rf", "must exceed -1");
    s.w0 = as_double(v, "w0");
    if (!(s.w0 > 0.0)) throw ConfigError("w0", "must be positive");
    s.s0 = as_double(v, "s0");
    if (!(s.s0 > 0.0)) throw ConfigError("s0", "must be positive");
    s.n_paths = as_count(v, "paths");
    if (s.n_paths < 1) throw ConfigError("paths", "must be >= 1");
    s.n_steps = as_count(v, "steps");
    if (s.n_steps < 1) throw ConfigError("steps", "must be >= 1");
    s.iterations = as_count(v, "iterations");
    s.seed = as_count(v, "seed");
    s.algorithm = checked("algorithm", [&] { return algorithm_from_string(v.at("algorithm")); });
    const auto threads = as_count(v, "threads");
    s.threads = threads == 0 ? default_thread_count() : threads;
    s.basis_degree = as_count(v, "basis.degree");
    if (s.basis_degree < 1) throw ConfigError("basis.degree", "must be >= 1");
    s.cross_terms = as_bool(v, "basis.cross_terms");
    s.rebalance.tol = as_double(v, "rebalance.tol");
    if (!(s.rebalance.tol > 0.0)) throw ConfigError("rebalance.tol", "must be positive");
    s.rebalance.max_iter = as_count(v, "rebalance.max_iter");
    if (s.rebalance.max_iter < 1) throw ConfigError("rebalance.max_iter", "must be >= 1");
    s.max_excluded_fraction = as_double(v, "max_excluded_fraction");
    if (!(s.max_excluded_fraction >= 0.0 && s.max_excluded_fraction <= 1.0))
        throw ConfigError("max_excluded_fraction", "must lie in [0, 1]");

    const double tc = as_double(v, "costs.tc_rate");
    const auto model = v.at("costs.model");
    if (model == "zero") {
        if (tc != 0.0) throw ConfigError("costs.tc_rate", "must be 0 with costs.model = zero");
        s.costs = CostModel::zero();
    } else if (model == "proportional") {
        s.costs = checked("costs.tc_rate", [&] { return CostModel::proportional(tc); });
    } else if (model == "power-law") {
        LiquidityParams lp;
        lp.sigma_day = as_double(v, "liquidity.sigma_day");
        lp.vol_day = as_double(v, "liquidity.vol_day");
        lp.theta = as_double(v, "liquidity.theta");
        lp.delta = as_double(v, "liquidity.delta");
        lp.mi_coeff = as_double(v, "liquidity.mi_coeff");
        lp.lc_coeff = as_double(v, "liquidity.lc_coeff");
        lp.mi_exponent = as_double(v, "liquidity.mi_exponent");
        lp.lc_exponent = as_double(v, "liquidity.lc_exponent");
        s.costs = checked("liquidity", [&] { return CostModel::power_law(lp, tc); });
    } else {
        throw ConfigError("costs.model", "expected zero, proportional or power-law, got '" + model + "'");
    }

    const auto mkind = v.at("model.kind");
    rc.var1_path = v.at("model.var1_file");
    if (mkind == "iid") {
        IidLognormalModel m;
        m.annual_mean = as_double(v, "model.annual_mean");
        m.annual_vol = as_double(v, "model.annual_vol");
        m.period_length = as_double(v, "model.period_length");
        checked("model", [&] {
            m.validate();
            return 0;
        });
        rc.model = m;
    } else if (mkind == "var1") {
        // The model file is read when a command needs it, after validation.
        rc.model = synthetic_standin_var1();
    } else {
        throw ConfigError("model.kind", "expected iid or var1, got '" + mkind + "'");
    }
    rc.asset_index = as_count(v, "model.asset_index");

    rc.eval_seed = as_count(v, "eval.seed");
    if (rc.eval_seed == s.seed) throw ConfigError("eval.seed", "must differ from seed");
    rc.eval_paths = as_count(v, "eval.paths");
    rc.output_dir = v.at("io.output_dir");
    if (rc.output_dir.empty()) throw ConfigError("io.output_dir", "must not be empty");
    rc.policy_path = v.at("io.policy");
    rc.prices_csv = v.at("io.prices_csv");

    rc.sweep_axis = checked("sweep.axis", [&] { return sweep_axis_from_string(v.at("sweep.axis")); });
    rc.sweep_values = as_list(v, "sweep.values");
    for (double x : as_list(v, "benchmark.paths")) {
        if (!(x >= 1.0) || x != std::floor(x)) throw ConfigError("benchmark.paths", "entries must be positive integers");
        rc.benchmark_paths.push_back(static_cast<std::size_t>(x));
    }
    rc.benchmark_iterations = as_count(v, "benchmark.iterations");
    rc.benchmark_klp = as_bool(v, "benchmark.klp");

    checked("config", [&] {
        s.validate();
        return 0;
    });
    rc.resolved = v;
    return rc;
}

std::string render_config(const RunConfig& rc) {
    std::ostringstream os;
    for (const auto& key : config_schema()) os << key.name << " = " << rc.resolved.at(key.name) << '\n';
    return os.str();
}

const std::vector<std::string>& commands() {
    static const std::vector<std::string> c = {"calibrate", "solve",    "evaluate", "compare-blind",
                                               "evolution", "sweep",    "benchmark"};
    return c;
}

namespace {

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

void write_file(const fs::path& p, const std::string& text) { save_text(p.string(), text); }

struct Context {
    RunConfig rc;
    fs::path out;
    std::ostream& log;

    ExogenousModel model() const {
        if (rc.resolved.at("model.kind") == "var1" && !rc.var1_path.empty()) return var1_from_json(load_text(rc.var1_path));
        return rc.model;
    }
    PathSet training(const SolveConfig& s) const { return simulate(model(), s.n_paths, s.n_steps, s.seed); }
    PathSet evaluation(const SolveConfig& s) const {
        return simulate(model(), rc.eval_paths ? rc.eval_paths : s.n_paths, s.n_steps, rc.eval_seed);
    }

    Policy policy() const {
        if (!rc.policy_path.empty()) {
            Policy p = policy_from_json(load_text(rc.policy_path));
            if (p.n_steps != rc.solve.n_steps)
                throw std::invalid_argument("policy horizon " + std::to_string(p.n_steps) + " differs from steps = " +
                                            std::to_string(rc.solve.n_steps));
            return p;
        }
        log << "no io.policy given; solving first\n";
        return solve_with_iteration(training(rc.solve), rc.solve).policy;
    }
};

void cmd_calibrate(Context& c) {
    if (c.rc.prices_csv.empty()) throw ConfigError("io.prices_csv", "calibrate needs a price CSV");
    const auto table = load_price_csv(c.rc.prices_csv);
    Var1Model m = calibrate_var1(to_log_returns(table.prices));
    if (c.rc.asset_index >= m.dimension()) throw ConfigError("model.asset_index", "outside the CSV columns");
    m.asset_index = c.rc.asset_index;
    m.names = table.names;
    m.period_length = as_double(c.rc.resolved, "model.period_length");
    write_file(c.out / "var1.json", var1_to_json(m));
    c.log << "calibrated VAR(1) on " << table.prices.rows() << " prices x " << table.prices.cols()
          << " series, spectral radius " << fmt(m.spectral_radius()) << '\n';
}

void cmd_solve(Context& c) {
    const auto train = c.training(c.rc.solve);
    const auto test = c.evaluation(c.rc.solve);
    const auto res = solve_with_iteration(train, c.rc.solve, &test);
    write_file(c.out / "policy.json", policy_to_json(res.policy));
    std::ostringstream os;
    os << "iteration,alpha0,best_cv,cer_bps,excluded\n";
    for (const auto& d : res.diagnostics)
        os << d.iteration << ',' << fmt(d.initial_action) << ',' << fmt(d.best_initial_cv) << ','
           << fmt(to_bps(d.oos_cer)) << ',' << d.excluded_paths << '\n';
    write_file(c.out / "diagnostics.csv", os.str());
    const auto& last = res.diagnostics.back();
    c.log << "alpha0 = " << fmt(last.initial_action) << ", CER = " << fmt(to_bps(last.oos_cer)) << " bps\n";
}

void cmd_evaluate(Context& c) {
    const Policy p = c.policy();
    const auto r = evaluate_on(p, c.evaluation(c.rc.solve), c.rc.solve);
    std::ostringstream os;
    os << "cer_bps,alpha0,mean_w,sd_w,q05_w,q25_w,q50_w,q75_w,q95_w,n_paths,excluded\n";
    os << fmt(r.cer_bps()) << ',' << fmt(r.initial_action) << ',' << fmt(r.terminal_wealth.mean) << ','
       << fmt(r.terminal_wealth.stdev);
    for (double q : r.terminal_wealth.quantiles) os << ',' << fmt(q);
    os << ',' << r.n_paths_evaluated << ',' << r.excluded_paths << '\n';
    write_file(c.out / "evaluation.csv", os.str());
    c.log << "CER = " << fmt(r.cer_bps()) << " bps, alpha0 = " << fmt(r.initial_action) << '\n';
}

void cmd_compare(Context& c) {
    const auto r = liquidity_blind_comparison(c.model(), c.rc.solve, c.rc.eval_seed, c.rc.eval_paths);
    std::ostringstream os;
    write_comparison_csv(os, r);
    write_file(c.out / "comparison.csv", os.str());
    c.log << "aware " << fmt(r.aware.cer_bps()) << " bps, blind " << fmt(r.blind.cer_bps()) << " bps\n";
}

void cmd_evolution(Context& c) {
    const Policy p = c.policy();
    const auto t = distribution_evolution(run_policy(c.evaluation(c.rc.solve), p, c.rc.solve).sample);
    std::ostringstream os;
    write_evolution_csv(os, t);
    write_file(c.out / "evolution.csv", os.str());
}

void cmd_sweep(Context& c) {
    if (c.rc.sweep_values.empty()) throw ConfigError("sweep.values", "sweep needs at least one value");
    const auto r = sweep(c.rc.sweep_axis, c.rc.sweep_values, c.model(), c.rc.solve, c.rc.eval_seed, c.rc.eval_paths);
    std::ostringstream os;
    write_sweep_csv(os, r);
    write_file(c.out / "sweep.csv", os.str());
}

void cmd_benchmark(Context& c) {
    if (c.rc.benchmark_paths.empty()) throw ConfigError("benchmark.paths", "benchmark needs at least one sample size");
    const auto test = c.evaluation(c.rc.solve);
    std::ostringstream os;
    os << "algorithm,iterations,paths,cer_bps,alpha0\n";
    for (std::size_t m : c.rc.benchmark_paths) {
        SolveConfig s = c.rc.solve;
        s.n_paths = m;
        const auto train = c.training(s);
        if (c.rc.benchmark_klp) {
            SolveConfig k = s;
            k.algorithm = Algorithm::Klp;
            k.iterations = 0;
            const auto res = solve_with_iteration(train, k, &test);
            os << "klp,0," << m << ',' << fmt(to_bps(res.diagnostics[0].oos_cer)) << ','
               << fmt(res.diagnostics[0].initial_action) << '\n';
        }
        s.algorithm = Algorithm::PerLevel;
        s.iterations = c.rc.benchmark_iterations;
        const auto res = solve_with_iteration(train, s, &test);
        for (const auto& d : res.diagnostics)
            os << "per-level," << d.iteration << ',' << m << ',' << fmt(to_bps(d.oos_cer)) << ','
               << fmt(d.initial_action) << '\n';
        c.log << "benchmark: M = " << m << " done\n";
    }
    write_file(c.out / "benchmark.csv", os.str());
}

}  // namespace

int run(const std::string& command, const std::string& config_path, const std::vector<std::string>& overrides,
        bool dry_run, std::ostream& out, std::ostream& err) {
    try {
        if (std::find(commands().begin(), commands().end(), command) == commands().end())
            throw std::invalid_argument("unknown command '" + command + "'");
        ConfigValues values;
        if (!config_path.empty()) values = parse_config_text(load_text(config_path));
        const RunConfig rc = resolve_config(apply_overrides(std::move(values), overrides));
        if (dry_run) {
            out << render_config(rc);
            return 0;
        }
        Context c{rc, fs::path(rc.output_dir), out};
        fs::create_directories(c.out);
        write_file(c.out / "resolved.cfg", render_config(rc));

        if (command == "calibrate") cmd_calibrate(c);
        else if (command == "solve") cmd_solve(c);
        else if (command == "evaluate") cmd_evaluate(c);
        else if (command == "compare-blind") cmd_compare(c);
        else if (command == "evolution") cmd_evolution(c);
        else if (command == "sweep") cmd_sweep(c);
        else cmd_benchmark(c);
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << command << ": " << e.what() << '\n';
        return 1;
    }
}

}  // namespace liqlsmc
