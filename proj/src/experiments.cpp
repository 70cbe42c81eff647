#include "cbe/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "cbe/fields.hpp"
#include "cbe/gmc.hpp"
#include "cbe/log.hpp"
#include "cbe/loopeq.hpp"
#include "cbe/oracles.hpp"
#include "cbe/quadrature.hpp"

namespace cbe {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

const std::map<std::string, json>& schemas()
{
    static const std::map<std::string, json> s = {
        {"sample", {{"beta", 2.0}, {"n", 8}, {"seed", 1}, {"replicates", 1}, {"threads", 0}}},
        {"fields",
         {{"beta", 2.0}, {"n", 64}, {"seed", 1}, {"replicate", 0}, {"field", "log_abs_P"}, {"r", 1.0},
          {"grid", 0}, {"offset", 0.0}}},
        {"oracle",
         {{"beta", 2.0}, {"n", 8}, {"gamma", 2.0}, {"kind", "abs_charpoly"}, {"beta_list", nullptr},
          {"n_list", nullptr}, {"gamma_list", nullptr}, {"kind_list", nullptr}}},
        {"clt",
         {{"beta", 2.0}, {"n", 256}, {"replicates", 2000}, {"seed", 1}, {"threads", 0}, {"function", "cos"},
          {"laplace_t", 1.0}, {"ks_alpha", 0.01}}},
        {"meso",
         {{"beta", 2.0}, {"n", 4096}, {"replicates", 2000}, {"seed", 1}, {"threads", 0},
          {"function", "bump3"}, {"L_exponent", 0.5}, {"L_list", json::array({8, 32, 128})}, {"grid", 0}}},
        {"sine",
         {{"beta", 2.0}, {"n", 4096}, {"replicates", 2000}, {"seed", 1}, {"threads", 0},
          {"function", "bump3:width=0.5"}, {"nu", 16.0}, {"tolerance", 0.10}}},
        {"rigidity",
         {{"beta", 2.0}, {"n_list", json::array({256, 1024})}, {"replicates", 2000}, {"seed", 1},
          {"threads", 0}, {"delta", 0.5}, {"t_grid", json::array({1, 2, 3, 4, 5, 6, 8, 10})},
          {"tail_alpha", 0.01}, {"extremes", false}, {"trend", false}, {"oversample", 8}}},
        {"loopeq",
         {{"beta_list", json::array({1, 2, 4})}, {"n_list", json::array({8, 64})}, {"replicates", 4000},
          {"seed", 1}, {"threads", 0}, {"functions", json::array({"cos", "phi_r:r=0.5"})},
          {"t_grid", json::array({0, 0.5, 1})}, {"ess_fraction", 0.1}}},
        {"errbudget",
         {{"beta_list", json::array({2})}, {"n_list", json::array({16, 64})}, {"replicates", 2000},
          {"seed", 1}, {"threads", 0}, {"functions", json::array({"cos"})},
          {"t_grid", json::array({0, 0.25, 0.5, 0.75, 1})}}},
        {"gmc",
         {{"task", "moments"}, {"beta", 2.0}, {"n", 2048}, {"replicates", 1000}, {"seed", 1},
          {"threads", 0}, {"gamma", 0.5}, {"r", 0.99}, {"field", "log_abs_P"}, {"grid", 0},
          {"arc_a.start", 0.0}, {"arc_a.length", 1.0}, {"arc_b.start", 2.0}, {"arc_b.length", 1.0},
          {"gamma_list", json::array({0.5, 1.0, 1.5, 2.0, 2.5, 3.0})}, {"band", 0.15},
          {"slope_change", 0.25}, {"thick.target", -0.25}, {"thick.band", 0.35}}},
    };
    return s;
}

bool same_kind(const json& a, const json& b)
{
    if (a.is_null() || b.is_null())
        return true;
    if (a.is_number() && b.is_number())
        return !(a.is_number_integer() && b.is_number_float() && b.get<double>() != std::floor(b.get<double>()));
    return a.type() == b.type();
}

std::string fmt(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

Check make_check(std::string name, bool ok, std::string detail) { return {std::move(name), ok, std::move(detail)}; }

std::span<const SpectrumSample> samples_for(SampleCache* cache, SampleCache& local, double beta, int n,
                                            std::size_t reps, std::uint64_t seed, int threads)
{
    return (cache ? *cache : local).get(beta, n, reps, seed, threads);
}

void require_replicates(std::int64_t reps, std::int64_t min_reps)
{
    if (reps < min_reps)
        throw ConfigError("replicates must be at least " + std::to_string(min_reps) + " for CI-based tests");
}

double line_integral(const CompactFn& w)
{
    std::vector<double> x, wt;
    composite_gauss(w.breakpoints(), 64, 0.0, x, wt);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += wt[i] * w(x[i]);
    return s;
}

double wrap_pm_pi(double x)
{
    x = std::fmod(x, kTwoPi);
    if (x > std::numbers::pi)
        x -= kTwoPi;
    if (x <= -std::numbers::pi)
        x += kTwoPi;
    return x;
}

// sum_j w(L theta_j) over the wrapped window, minus N times the circle mean of w_L.
double meso_statistic(const SpectrumSample& s, const CompactFn& w, double scale, double centering)
{
    const double reach = w.support_half_width() / scale;
    double acc = 0.0;
    for (double t : s.angles) {
        double d = wrap_pm_pi(t);
        if (std::abs(d) < reach)
            acc += w(scale * d);
    }
    return acc - centering;
}

PeriodicFn periodic_from_spec(const FunctionSpec& f)
{
    if (!is_periodic_name(f.name))
        throw ConfigError("'" + f.name + "' is not a periodic test function");
    return make_periodic(f.name, f.params);
}

CompactFn compact_from_spec(const FunctionSpec& f)
{
    if (!is_compact_name(f.name))
        throw ConfigError("'" + f.name + "' is not a compactly supported test function");
    return make_compact(f.name, f.params);
}

std::string n_tag(int n) { return "n=" + std::to_string(n); }

// |m_k - target| strictly decreasing along the sequence.
bool monotone_toward(const std::vector<double>& m, double target)
{
    for (std::size_t i = 1; i < m.size(); ++i)
        if (!(std::abs(m[i] - target) < std::abs(m[i - 1] - target)))
            return false;
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------------------
// Config

Config::Config(std::string experiment, json defaults) : experiment_(std::move(experiment))
{
    if (!defaults.is_object())
        throw ConfigError("schema must be a JSON object");
    schema_ = defaults;
    for (auto it = defaults.begin(); it != defaults.end(); ++it)
        if (!it.value().is_null())
            values_[it.key()] = it.value();
}

Config Config::for_experiment(const std::string& experiment)
{
    auto it = schemas().find(experiment);
    if (it == schemas().end())
        throw ConfigError("unknown experiment '" + experiment + "'");
    return Config(experiment, it->second);
}

std::vector<std::string> experiment_names()
{
    std::vector<std::string> out;
    for (const auto& [k, v] : schemas())
        out.push_back(k);
    return out;
}

void Config::set(const std::string& key, json value)
{
    auto it = schema_.find(key);
    if (it == schema_.end()) {
        std::string known;
        for (auto k = schema_.begin(); k != schema_.end(); ++k)
            known += (known.empty() ? "" : ", ") + k.key();
        throw ConfigError("unknown key '" + key + "' for experiment '" + experiment_ + "' (known: " + known + ")");
    }
    if (!same_kind(*it, value))
        throw ConfigError("key '" + key + "' expects " + std::string(it->type_name()) + ", got " +
                          value.type_name());
    values_[key] = std::move(value);
}

void Config::merge(const json& object, const std::string& origin)
{
    if (!object.is_object())
        throw ConfigError(origin + ": configuration must be a JSON object");
    for (auto it = object.begin(); it != object.end(); ++it) {
        if (it.key() == "experiment") {
            if (it.value() != experiment_)
                throw ConfigError(origin + ": config is for experiment " + it.value().dump() + ", not '" +
                                  experiment_ + "'");
            continue;
        }
        set(it.key(), it.value());
    }
}

void Config::merge_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    merge(j, path);
}

void Config::apply_override(const std::string& assignment)
{
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json v = json::parse(raw, nullptr, false);
    if (v.is_discarded())
        v = raw;
    set(key, v);
    overrides_.push_back(assignment);
}

const json& Config::at(const std::string& key) const
{
    auto it = values_.find(key);
    if (it == values_.end())
        throw ConfigError("configuration key '" + key + "' has no value");
    return *it;
}

bool Config::has(const std::string& key) const { return values_.contains(key); }
double Config::number(const std::string& key) const
{
    const json& v = at(key);
    if (!v.is_number())
        throw ConfigError("key '" + key + "' must be a number");
    return v.get<double>();
}
std::int64_t Config::integer(const std::string& key) const
{
    double d = number(key);
    if (d != std::floor(d))
        throw ConfigError("key '" + key + "' must be an integer");
    return static_cast<std::int64_t>(d);
}
std::uint64_t Config::seed(const std::string& key) const
{
    const json& v = at(key);
    if (v.is_number_unsigned())
        return v.get<std::uint64_t>();
    std::int64_t i = integer(key);
    if (i < 0)
        throw ConfigError("seed must be nonnegative");
    return static_cast<std::uint64_t>(i);
}
bool Config::boolean(const std::string& key) const
{
    const json& v = at(key);
    if (!v.is_boolean())
        throw ConfigError("key '" + key + "' must be true or false");
    return v.get<bool>();
}
std::string Config::string(const std::string& key) const
{
    const json& v = at(key);
    if (!v.is_string())
        throw ConfigError("key '" + key + "' must be a string");
    return v.get<std::string>();
}
std::vector<double> Config::numbers(const std::string& key) const
{
    const json& v = at(key);
    if (v.is_number())
        return {v.get<double>()};
    if (!v.is_array())
        throw ConfigError("key '" + key + "' must be a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number())
            throw ConfigError("key '" + key + "' must be a list of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}
std::vector<int> Config::integers(const std::string& key) const
{
    std::vector<int> out;
    for (double d : numbers(key)) {
        if (d != std::floor(d))
            throw ConfigError("key '" + key + "' must be a list of integers");
        out.push_back(static_cast<int>(d));
    }
    return out;
}
std::vector<std::string> Config::strings(const std::string& key) const
{
    const json& v = at(key);
    if (v.is_string())
        return {v.get<std::string>()};
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string())
            throw ConfigError("key '" + key + "' must be a list of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

std::string Config::hash() const
{
    json canon = values_;
    canon["experiment"] = experiment_;
    std::string text = canon.dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

FunctionSpec parse_function_spec(const std::string& text)
{
    FunctionSpec f;
    f.text = text;
    auto colon = text.find(':');
    f.name = text.substr(0, colon);
    if (f.name.empty())
        throw ConfigError("empty test function name in '" + text + "'");
    if (colon == std::string::npos)
        return f;
    std::stringstream rest(text.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("test function parameter '" + item + "' is not key=value");
        try {
            std::size_t used = 0;
            std::string val = item.substr(eq + 1);
            double v = std::stod(val, &used);
            if (used != val.size())
                throw std::invalid_argument(val);
            f.params[item.substr(0, eq)] = v;
        } catch (const std::exception&) {
            throw ConfigError("test function parameter '" + item + "' has a non-numeric value");
        }
    }
    return f;
}

// ---------------------------------------------------------------------------------------
// Execution

int resolve_threads(int requested)
{
    if (requested > 0)
        return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body)
{
    const int t = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(count, 1));
    if (t <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int k = 0; k < t; ++k)
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= count)
                    return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                    next.store(count);
                }
            }
        });
    for (auto& th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

std::span<const SpectrumSample> SampleCache::get(double beta, int n, std::size_t replicates,
                                                 std::uint64_t seed, int threads)
{
    std::lock_guard<std::mutex> lock(mutex_);
    auto& v = store_[{beta, n, seed}];
    if (v.size() < replicates) {
        std::size_t start = v.size();
        v.resize(replicates);
        EnsembleSpec spec{beta, n, seed};
        parallel_for(replicates - start, threads, [&](std::size_t i) {
            RngStream rng(seed, start + i);
            v[start + i] = sample_spectrum(spec, rng);
        });
    }
    return std::span<const SpectrumSample>(v.data(), replicates);
}

bool ExperimentResult::passed() const
{
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

json to_json(const RunSummary& s)
{
    json j = {{"replicates", s.replicates}, {"estimate", s.estimate},       {"std_error", s.std_error},
              {"ci95", {s.ci95.lo, s.ci95.hi}}, {"n_eff", s.n_eff},        {"variance", s.variance},
              {"variance_se", s.variance_se}, {"skewness", s.skewness},    {"kurtosis", s.kurtosis}};
    if (std::isfinite(s.ks_statistic)) {
        j["ks_statistic"] = s.ks_statistic;
        j["ks_pvalue"] = s.ks_pvalue;
    }
    return j;
}

// ---------------------------------------------------------------------------------------
// Drivers

ExperimentResult run_global_clt(const Config& cfg, SampleCache* cache)
{
    const double beta = cfg.number("beta");
    const int n = static_cast<int>(cfg.integer("n"));
    const auto reps = cfg.integer("replicates");
    require_replicates(reps, 100);
    const FunctionSpec fs = parse_function_spec(cfg.string("function"));
    const PeriodicFn w = periodic_from_spec(fs);
    const double c0 = w.coefficient(0).real();

    SampleCache local;
    auto samples = samples_for(cache, local, beta, n, reps, cfg.seed(), cfg.integer("threads"));
    std::vector<double> x(reps);
    parallel_for(reps, cfg.integer("threads"), [&](std::size_t i) {
        double acc = 0.0;
        for (double t : samples[i].angles)
            acc += w(t);
        x[i] = acc - n * c0;
    });

    const double sigma2 = sigma_sq(w).value;
    const GaussianPrediction pred = clt_prediction(sigma2, beta);
    const double t = cfg.number("laplace_t");
    Cdf ref;
    if (pred.variance > 0.0)
        ref = [v = pred.variance](double y) { return normal_cdf(y, 0.0, v); };

    ExperimentResult r;
    r.name = "clt";
    r.summary = summarize(x, ref);
    const LogLaplace ll = log_laplace(x, t);
    const double ll_pred = t * t * pred.log_laplace;
    r.columns = {"replicate", "statistic"};
    for (std::size_t i = 0; i < x.size(); ++i)
        r.rows.push_back({static_cast<double>(i), x[i]});

    const double var_dev = std::abs(r.summary.variance - pred.variance);
    r.checks.push_back(make_check("variance", var_dev <= 3.0 * r.summary.variance_se,
                                  "empirical " + fmt(r.summary.variance) + " vs " + fmt(pred.variance) +
                                      ", 3 SE = " + fmt(3.0 * r.summary.variance_se)));
    r.checks.push_back(make_check("log_laplace", std::abs(ll.value - ll_pred) <= 3.0 * ll.std_error,
                                  "empirical " + fmt(ll.value) + " vs " + fmt(ll_pred) +
                                      ", 3 SE = " + fmt(3.0 * ll.std_error)));
    if (ref)
        r.checks.push_back(make_check("ks", r.summary.ks_pvalue > cfg.number("ks_alpha"),
                                      "p = " + fmt(r.summary.ks_pvalue)));
    r.report = {{"beta", beta},
                {"n", n},
                {"function", fs.text},
                {"sigma2", sigma2},
                {"predicted_variance", pred.variance},
                {"log_laplace", {{"t", t}, {"estimate", ll.value}, {"std_error", ll.std_error}, {"predicted", ll_pred}}},
                {"summary", to_json(r.summary)}};
    return r;
}

ExperimentResult run_meso_clt(const Config& cfg, SampleCache* cache)
{
    const double beta = cfg.number("beta");
    const int n = static_cast<int>(cfg.integer("n"));
    const auto reps = cfg.integer("replicates");
    require_replicates(reps, 100);
    const FunctionSpec fs = parse_function_spec(cfg.string("function"));
    const CompactFn w = compact_from_spec(fs);
    const double a = cfg.number("L_exponent");
    if (!(a > 0.0 && a < 1.0))
        throw ConfigError("L_exponent must lie in (0, 1)");
    std::vector<double> scales = {std::pow(static_cast<double>(n), a)};
    for (double l : cfg.numbers("L_list"))
        scales.push_back(l);
    for (double l : scales)
        if (!(l > 0.0) || w.support_half_width() / l >= std::numbers::pi)
            throw ConfigError("support overflow: S / L must stay below pi (L = " + fmt(l) + ")");

    SampleCache local;
    auto samples = samples_for(cache, local, beta, n, reps, cfg.seed(), cfg.integer("threads"));
    const double mass = line_integral(w);
    const HalfNorm hn = h_half_norm(w);
    const double grid = static_cast<double>(cfg.integer("grid"));

    ExperimentResult r;
    r.name = "meso";
    r.columns = {"replicate"};
    std::vector<std::vector<double>> stats(scales.size(), std::vector<double>(reps));
    json per_scale = json::array();
    std::vector<double> gaps;
    for (std::size_t k = 0; k < scales.size(); ++k) {
        const double L = scales[k];
        const double centering = n * mass / (kTwoPi * L);
        parallel_for(reps, cfg.integer("threads"),
                     [&](std::size_t i) { stats[k][i] = meso_statistic(samples[i], w, L, centering); });
        std::size_t m = grid > 0 ? static_cast<std::size_t>(grid) : 4 * default_meso_grid(L);
        const double s2 = sigma_sq(meso_wrap({w, L}, m)).value;
        const RunSummary sum = summarize(stats[k]);
        const double gap = std::abs(s2 - hn.value);
        if (k > 0)
            gaps.push_back(gap);
        per_scale.push_back({{"L", L},
                             {"sigma2_wL", s2},
                             {"predicted_variance", 2.0 * s2 / beta},
                             {"gap_sigma2_to_norm", gap},
                             {"empirical_gap", std::abs(sum.variance - 2.0 * hn.value / beta)},
                             {"summary", to_json(sum)}});
        r.columns.push_back("statistic_L" + fmt(L));
        if (k == 0) {
            r.summary = sum;
            const double pred = 2.0 * s2 / beta;
            r.checks.push_back(make_check("variance", std::abs(sum.variance - pred) <= 3.0 * sum.variance_se,
                                          "L = " + fmt(L) + ": empirical " + fmt(sum.variance) + " vs " +
                                              fmt(pred) + ", 3 SE = " + fmt(3.0 * sum.variance_se)));
        }
    }
    for (std::int64_t i = 0; i < reps; ++i) {
        std::vector<double> row = {static_cast<double>(i)};
        for (const auto& s : stats)
            row.push_back(s[i]);
        r.rows.push_back(std::move(row));
    }
    if (gaps.size() >= 2) {
        bool mono = std::is_sorted(gaps.rbegin(), gaps.rend()) &&
                    std::adjacent_find(gaps.begin(), gaps.end()) == gaps.end();
        std::string d;
        for (double g : gaps)
            d += (d.empty() ? "" : " > ") + fmt(g);
        r.checks.push_back(make_check("gap_monotone", mono, "|sigma2(w_L) - ||w||^2| along L_list: " + d));
    }
    r.report = {{"beta", beta},
                {"n", n},
                {"function", fs.text},
                {"h_half_norm_sq", hn.value},
                {"norm_prediction", 2.0 * hn.value / beta},
                {"scales", per_scale},
                {"summary", to_json(r.summary)}};
    return r;
}

ExperimentResult run_sine_clt(const Config& cfg, SampleCache* cache)
{
    const double beta = cfg.number("beta");
    const int n = static_cast<int>(cfg.integer("n"));
    const auto reps = cfg.integer("replicates");
    require_replicates(reps, 100);
    const double nu = cfg.number("nu");
    const FunctionSpec fs = parse_function_spec(cfg.string("function"));
    const CompactFn w = compact_from_spec(fs);
    if (!(nu > 0.0))
        throw ConfigError("nu must be positive");
    const double L = n / (kTwoPi * nu);
    if (w.support_half_width() / L >= std::numbers::pi)
        throw ConfigError("window overflow: nu * S must stay below N / 2");
    if (nu > std::pow(static_cast<double>(n), 0.25))
        log_warning("sine window nu = " + fmt(nu) + " exceeds N^{1/4} = " + fmt(std::pow(n, 0.25)));

    SampleCache local;
    auto samples = samples_for(cache, local, beta, n, reps, cfg.seed(), cfg.integer("threads"));
    const double line_mass = line_integral(w);
    // N int w_L dtheta / 2pi on the circle, by its own quadrature.
    std::vector<double> br;
    for (double b : w.breakpoints())
        br.push_back(b / L);
    std::vector<double> x, wt;
    composite_gauss(br, 64, 0.0, x, wt);
    double circle = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        circle += wt[i] * w(L * x[i]);
    circle *= n / kTwoPi;
    const double centering = nu * line_mass;

    std::vector<double> stat(reps);
    parallel_for(reps, cfg.integer("threads"),
                 [&](std::size_t i) { stat[i] = meso_statistic(samples[i], w, L, centering); });
    const HalfNorm hn = h_half_norm(w);
    const double pred = 2.0 * hn.value / beta;

    ExperimentResult r;
    r.name = "sine";
    r.summary = summarize(stat);
    r.columns = {"replicate", "statistic"};
    for (std::int64_t i = 0; i < reps; ++i)
        r.rows.push_back({static_cast<double>(i), stat[i]});
    const double tol = cfg.number("tolerance");
    r.checks.push_back(make_check("variance", std::abs(r.summary.variance - pred) <= tol * pred,
                                  "empirical " + fmt(r.summary.variance) + " vs " + fmt(pred) + " (+-" +
                                      fmt(100 * tol) + "%)"));
    const double rel = std::abs(circle - centering) / std::max(std::abs(centering), 1e-300);
    r.checks.push_back(make_check("centering_identity", rel < 1e-10,
                                  "N int w_L = " + fmt(circle) + ", nu int w = " + fmt(centering)));
    r.report = {{"beta", beta},
                {"n", n},
                {"nu", nu},
                {"scale_L", L},
                {"function", fs.text},
                {"h_half_norm_sq", hn.value},
                {"predicted_variance", pred},
                {"centering", {{"circle", circle}, {"line", centering}}},
                {"summary", to_json(r.summary)}};
    return r;
}

ExperimentResult run_rigidity(const Config& cfg, SampleCache* cache)
{
    const double beta = cfg.number("beta");
    const auto ns = cfg.integers("n_list");
    const auto reps = cfg.integer("replicates");
    require_replicates(reps, 100);
    const auto t_grid = cfg.numbers("t_grid");
    const double delta = cfg.number("delta");
    const bool extremes = cfg.boolean("extremes");
    const int oversample = static_cast<int>(cfg.integer("oversample"));
    const int threads = static_cast<int>(cfg.integer("threads"));
    for (int n : ns)
        if (n < 2)
            throw ConfigError("rigidity needs n >= 2");

    ExperimentResult r;
    r.name = "rigidity";
    r.columns = {"n", "replicate", "max_dev", "normalized", "max_h", "max_h_nodes"};
    if (extremes) {
        r.columns.push_back("max_logp_over_logn");
        r.columns.push_back("max_psi_over_logn");
    }
    // Bonferroni over all (N, t) pairs where the bound is informative.
    std::size_t tests = 0;
    for (int n : ns)
        for (double t : t_grid)
            tests += maxh_tail_bound(beta, n, t) < 1.0;
    const double alpha = cfg.number("tail_alpha") / std::max<std::size_t>(tests, 1);

    json per_n = json::array();
    std::vector<double> med_logp, med_psi, med_rig;
    bool tail_ok = true, lift_ok = true;
    std::string tail_detail;
    SampleCache local;
    for (int n : ns) {
        auto samples = samples_for(cache, local, beta, n, reps, cfg.seed(), threads);
        const double logn = std::log(static_cast<double>(n));
        std::vector<double> dev(reps), norm(reps), mh(reps), mhk(reps), lp(reps), ps(reps);
        parallel_for(reps, threads, [&](std::size_t i) {
            const auto& a = samples[i].angles;
            double d = 0.0, hk = 0.0;
            for (int k = 1; k <= n; ++k) {
                d = std::max(d, std::abs(a[k - 1] - kTwoPi * k / n));
                hk = std::max(hk, std::abs(k - n * a[k - 1] / kTwoPi));
            }
            dev[i] = d;
            norm[i] = n * d / (std::sqrt(2.0 / beta) * logn);
            mh[i] = max_abs_counting_exact(samples[i]);
            mhk[i] = hk;
            if (extremes) {
                lp[i] = max_logp_grid(samples[i], oversample) / logn;
                ps[i] = max_psi_exact(samples[i]).max / logn;
            }
        });
        for (std::int64_t i = 0; i < reps; ++i) {
            std::vector<double> row = {double(n), double(i), dev[i], norm[i], mh[i], mhk[i]};
            if (extremes) {
                row.push_back(lp[i]);
                row.push_back(ps[i]);
            }
            r.rows.push_back(std::move(row));
            if (mh[i] > mhk[i] + 1.0 + 1e-9)
                lift_ok = false;
        }
        json tails = json::array();
        for (double t : t_grid) {
            const double bound = maxh_tail_bound(beta, n, t);
            std::size_t count = std::count_if(mh.begin(), mh.end(), [t](double v) { return v >= t; });
            const double p = binomial_upper_tail(count, reps, bound);
            const bool ok = bound >= 1.0 || p >= alpha;
            tail_ok = tail_ok && ok;
            if (!ok)
                tail_detail += " N=" + std::to_string(n) + ",t=" + fmt(t);
            tails.push_back({{"t", t}, {"bound", bound}, {"exceedance", double(count) / reps}, {"p_value", p}});
        }
        const auto band = rigidity_band(beta, n, delta);
        const double inside =
            double(std::count_if(dev.begin(), dev.end(), [&](double v) { return v >= band.first && v <= band.second; })) /
            reps;
        json entry = {{"n", n},
                      {"normalized_rigidity", to_json(summarize(norm))},
                      {"median_normalized_rigidity", median(norm)},
                      {"fraction_in_band", inside},
                      {"band", {band.first, band.second}},
                      {"max_h", to_json(summarize(mh))},
                      {"tail", tails}};
        med_rig.push_back(median(norm));
        if (extremes) {
            med_logp.push_back(median(lp));
            med_psi.push_back(median(ps));
            entry["median_max_logp_over_logn"] = med_logp.back();
            entry["median_max_psi_over_logn"] = med_psi.back();
        }
        per_n.push_back(entry);
        if (n == ns.front())
            r.summary = summarize(norm);
    }
    r.checks.push_back(make_check("tail_bound", tail_ok,
                                  tail_ok ? "no rejection at Bonferroni level " + fmt(alpha)
                                          : "rejected at" + tail_detail));
    r.checks.push_back(make_check("counting_lift", lift_ok, "max |h| <= max_k |h(theta_k)| + 1 on every replicate"));
    if (cfg.boolean("trend") && ns.size() >= 2) {
        const double target = std::sqrt(2.0 / beta);
        auto seq = [](const std::vector<double>& v) {
            std::string s;
            for (double x : v)
                s += (s.empty() ? "" : ", ") + fmt(x);
            return s;
        };
        if (extremes) {
            r.checks.push_back(make_check("trend_max_logp", monotone_toward(med_logp, target),
                                          "medians " + seq(med_logp) + " toward " + fmt(target)));
            r.checks.push_back(make_check("trend_max_psi", monotone_toward(med_psi, target),
                                          "medians " + seq(med_psi) + " toward " + fmt(target)));
        }
        r.checks.push_back(make_check("trend_rigidity", monotone_toward(med_rig, 2.0),
                                      "medians " + seq(med_rig) + " toward 2"));
    }
    r.report = {{"beta", beta}, {"per_n", per_n}, {"bonferroni_level", alpha}, {"summary", to_json(r.summary)}};
    return r;
}

namespace {

struct LoopCell {
    double beta;
    int n;
    std::string function;
    double t;
    RunSummary summary;
};

// Self-normalized reweighting of W_N (or of W~_N when tilde) to the biased law at each t.
std::vector<LoopCell> loop_matrix(const Config& cfg, SampleCache* cache, bool tilde, ExperimentResult& r)
{
    const auto betas = cfg.numbers("beta_list");
    const auto ns = cfg.integers("n_list");
    const auto reps = cfg.integer("replicates");
    require_replicates(reps, 100);
    const auto fns = cfg.strings("functions");
    const auto ts = cfg.numbers("t_grid");
    const int threads = static_cast<int>(cfg.integer("threads"));
    SampleCache local;
    std::vector<LoopCell> out;
    r.columns = {"beta", "n", "function_index", "t", "replicate", tilde ? "w_tilde" : "w_n", "log_weight"};
    for (double beta : betas)
        for (int n : ns) {
            auto samples = samples_for(cache, local, beta, n, reps, cfg.seed(), threads);
            for (std::size_t fi = 0; fi < fns.size(); ++fi) {
                const PeriodicFn w = periodic_from_spec(parse_function_spec(fns[fi]));
                const LoopFunctional lf(w);
                std::vector<double> lin(reps);
                parallel_for(reps, threads, [&](std::size_t i) { lin[i] = importance_weight(samples[i], w); });
                for (double t : ts) {
                    std::vector<double> val(reps), lw(reps);
                    parallel_for(reps, threads, [&](std::size_t i) {
                        val[i] = tilde ? lf.w_tilde(samples[i], t).total : lf.w_functional(samples[i], t);
                        lw[i] = t * lin[i];
                    });
                    for (std::int64_t i = 0; i < reps; ++i)
                        r.rows.push_back({beta, double(n), double(fi), t, double(i), val[i], lw[i]});
                    out.push_back({beta, n, fns[fi], t, summarize_weighted(val, lw)});
                }
            }
        }
    return out;
}

}  // namespace

ExperimentResult run_loop_null(const Config& cfg, SampleCache* cache)
{
    ExperimentResult r;
    r.name = "loopeq";
    auto cells = loop_matrix(cfg, cache, false, r);
    const double ess_frac = cfg.number("ess_fraction");
    json table = json::array();
    bool cover = true, ess_ok = true;
    std::string bad;
    for (const auto& c : cells) {
        const bool ok = std::abs(c.summary.estimate) < 3.0 * c.summary.std_error;
        const bool e_ok = c.summary.n_eff >= ess_frac * c.summary.replicates;
        if (!e_ok)
            log_warning("ESS collapse at beta=" + fmt(c.beta) + ", " + n_tag(c.n) + ", w=" + c.function +
                        ", t=" + fmt(c.t));
        cover = cover && ok;
        ess_ok = ess_ok && e_ok;
        if (!ok || !e_ok)
            bad += " (beta=" + fmt(c.beta) + "," + n_tag(c.n) + "," + c.function + ",t=" + fmt(c.t) + ")";
        table.push_back({{"beta", c.beta},
                         {"n", c.n},
                         {"function", c.function},
                         {"t", c.t},
                         {"estimate", c.summary.estimate},
                         {"std_error", c.summary.std_error},
                         {"ess", c.summary.n_eff},
                         {"w_over_n_sd", std::sqrt(c.summary.variance) / c.n},
                         {"covers_zero", ok}});
    }
    r.summary = cells.front().summary;
    r.checks.push_back(make_check("null_covers_zero", cover,
                                  cover ? "|E[W_N]| < 3 SE in all " + std::to_string(cells.size()) + " cells"
                                        : "failing cells:" + bad));
    r.checks.push_back(make_check("ess_guard", ess_ok, "ESS >= " + fmt(ess_frac) + " * replicates"));
    r.report = {{"cells", table}};
    return r;
}

ExperimentResult run_error_budget(const Config& cfg, SampleCache* cache)
{
    ExperimentResult r;
    r.name = "errbudget";
    auto cells = loop_matrix(cfg, cache, true, r);
    std::map<std::tuple<double, int, std::string>, std::pair<double, double>> sup;
    for (const auto& c : cells) {
        auto& s = sup[{c.beta, c.n, c.function}];
        double v = 2.0 / (c.beta * c.n) * std::abs(c.summary.estimate);
        if (v >= s.first)
            s = {v, 2.0 / (c.beta * c.n) * c.summary.std_error};
    }
    std::map<std::string, RFunctionals> rf;
    json table = json::array();
    for (const auto& [key, v] : sup) {
        const auto& [beta, n, fn] = key;
        if (!rf.count(fn))
            rf[fn] = r_functionals(periodic_from_spec(parse_function_spec(fn)));
        const RFunctionals& R = rf[fn];
        const double logn = std::log(static_cast<double>(n));
        const double rhs = (R.R0 * logn + R.R1 + R.R2 * std::pow(static_cast<double>(n), -5.0)) * logn / n;
        table.push_back({{"beta", beta},
                         {"n", n},
                         {"function", fn},
                         {"delta_hat", v.first},
                         {"delta_hat_se", v.second},
                         {"R0", R.R0},
                         {"R0_change", R.R0_change},
                         {"R1", R.R1},
                         {"R2", R.R2},
                         {"bound_rhs", rhs}});
    }
    r.summary = cells.front().summary;
    r.report = {{"budget", table}};
    return r;
}

ExperimentResult run_gmc(const Config& cfg, SampleCache* cache)
{
    const std::string task = cfg.string("task");
    const double beta = cfg.number("beta");
    const int n = static_cast<int>(cfg.integer("n"));
    const auto reps = cfg.integer("replicates");
    require_replicates(reps, 100);
    const int threads = static_cast<int>(cfg.integer("threads"));
    FieldKind kind;
    try {
        kind = field_kind_from_string(cfg.string("field"));
    } catch (const FieldError& e) {
        throw ConfigError(e.what());
    }
    SampleCache local;
    auto samples = samples_for(cache, local, beta, n, reps, cfg.seed(), threads);
    const std::size_t grid = cfg.integer("grid") > 0 ? cfg.integer("grid") : default_field_grid(n);

    ExperimentResult r;
    r.name = "gmc";
    if (task == "moments") {
        const double gamma = cfg.number("gamma"), rad = cfg.number("r");
        const Arc A{cfg.number("arc_a.start"), cfg.number("arc_a.length")};
        const Arc B{cfg.number("arc_b.start"), cfg.number("arc_b.length")};
        const double logz = asymptotic_log_normalizer(beta, gamma, rad);
        std::vector<double> ma(reps), mb(reps), tot(reps), prod(reps);
        std::vector<std::vector<double>> held(reps);
        bool uniform0 = true;
        std::mutex mu;
        parallel_for(reps, threads, [&](std::size_t i) {
            FieldGrid f = field_grid(samples[i], kind, rad, grid);
            GmcMeasureGrid m = build_measure(f, gamma, NormalizerMode::asymptotic, logz);
            ma[i] = m.mass(A);
            mb[i] = m.mass(B);
            tot[i] = m.total_mass();
            prod[i] = ma[i] * mb[i];
            if (i == 0) {
                GmcMeasureGrid m0 = build_measure(f, 0.0, NormalizerMode::asymptotic, 0.0);
                bool u = std::all_of(m0.weights.begin(), m0.weights.end(), [](double w) { return w == 1.0; });
                std::lock_guard<std::mutex> lock(mu);
                uniform0 = u;
            }
            held[i] = std::move(f.values);
        });
        // Monte Carlo normalizer fitted on the first half, total mass checked on the second.
        const std::size_t half = reps / 2;
        std::vector<FieldGrid> fit(half);
        for (std::size_t i = 0; i < half; ++i) {
            fit[i].values = std::move(held[i]);
            fit[i].r = rad;
            fit[i].kind = kind;
            fit[i].source = samples[i].spec;
        }
        const double logz_mc = monte_carlo_log_normalizer(fit, gamma);
        std::vector<double> tot_mc;
        for (std::int64_t i = half; i < reps; ++i) {
            FieldGrid f;
            f.values = std::move(held[i]);
            f.r = rad;
            f.kind = kind;
            f.source = samples[i].spec;
            tot_mc.push_back(build_measure(f, gamma, NormalizerMode::monte_carlo, logz_mc).total_mass());
        }
        const double pred = mass_second_moment(gamma, rad, beta, A, B);
        const RunSummary sp = summarize(prod), st = summarize(tot), sm = summarize(tot_mc);
        r.summary = sp;
        r.columns = {"replicate", "mass_a", "mass_b", "total_mass"};
        for (std::int64_t i = 0; i < reps; ++i)
            r.rows.push_back({double(i), ma[i], mb[i], tot[i]});
        r.checks.push_back(make_check("second_moment", std::abs(sp.estimate - pred) <= 3.0 * sp.std_error,
                                      "empirical " + fmt(sp.estimate) + " vs " + fmt(pred) +
                                          ", 3 SE = " + fmt(3.0 * sp.std_error)));
        r.checks.push_back(make_check("total_mass", std::abs(st.estimate - 1.0) <= 3.0 * st.std_error,
                                      "mean " + fmt(st.estimate) + ", 3 SE = " + fmt(3.0 * st.std_error)));
        r.checks.push_back(make_check("uniform_at_gamma0", uniform0, "weights identically 1 at gamma = 0"));
        r.report = {{"beta", beta},
                    {"n", n},
                    {"gamma", gamma},
                    {"r", rad},
                    {"grid", grid},
                    {"log_normalizer", logz},
                    {"second_moment", {{"prediction", pred}, {"summary", to_json(sp)}}},
                    {"total_mass", to_json(st)},
                    {"monte_carlo_normalizer",
                     {{"log_normalizer", logz_mc}, {"held_out_total_mass", to_json(sm)}}}};
        return r;
    }
    if (task == "free_energy" || task == "thick_points") {
        const auto gammas = cfg.numbers("gamma_list");
        const double gamma = cfg.number("gamma");
        const double logn = std::log(static_cast<double>(n));
        std::vector<std::vector<double>> fe(reps, std::vector<double>(gammas.size()));
        std::vector<double> thick(reps);
        const bool free = task == "free_energy";
        parallel_for(reps, threads, [&](std::size_t i) {
            FieldGrid f = field_grid(samples[i], kind, 1.0, grid, 0.5);
            if (free)
                for (std::size_t g = 0; g < gammas.size(); ++g)
                    fe[i][g] = log_partition_rate(f, gammas[g]);
            else
                thick[i] = std::log(thick_point_measure(f, gamma)) / logn;
        });
        if (!free) {
            const double med = median(thick);
            const double target = cfg.number("thick.target"), band = cfg.number("thick.band");
            r.columns = {"replicate", "log_measure_over_logn"};
            for (std::int64_t i = 0; i < reps; ++i)
                r.rows.push_back({double(i), thick[i]});
            std::vector<double> finite;
            for (double v : thick)
                if (std::isfinite(v))
                    finite.push_back(v);
            if (finite.size() >= 2)
                r.summary = summarize(finite);
            r.checks.push_back(make_check("thick_points", std::abs(med - target) <= band,
                                          "median " + fmt(med) + " vs " + fmt(target) + " +- " + fmt(band)));
            r.report = {{"beta", beta},
                        {"n", n},
                        {"gamma", gamma},
                        {"grid", grid},
                        {"median", med},
                        {"empty_fraction", 1.0 - double(finite.size()) / reps},
                        {"prediction", -gamma * gamma / (2.0 * beta)}};
            return r;
        }
        const double band = cfg.number("band");
        json curve = json::array();
        std::vector<double> mean(gammas.size());
        bool within = true;
        r.columns = {"replicate"};
        for (double g : gammas)
            r.columns.push_back("rate_gamma_" + fmt(g));
        for (std::size_t g = 0; g < gammas.size(); ++g) {
            std::vector<double> col(reps);
            for (std::int64_t i = 0; i < reps; ++i)
                col[i] = fe[i][g];
            RunSummary s = summarize(col);
            mean[g] = s.estimate;
            const double pred = free_energy_prediction(beta, gammas[g]);
            within = within && std::abs(mean[g] - pred) <= band;
            curve.push_back({{"gamma", gammas[g]}, {"estimate", s.estimate}, {"std_error", s.std_error}, {"prediction", pred}});
            if (g == 0)
                r.summary = s;
        }
        for (std::int64_t i = 0; i < reps; ++i) {
            std::vector<double> row = {double(i)};
            row.insert(row.end(), fe[i].begin(), fe[i].end());
            r.rows.push_back(std::move(row));
        }
        std::string d;
        for (std::size_t g = 0; g < gammas.size(); ++g)
            d += (d.empty() ? "" : ", ") + fmt(gammas[g]) + ":" + fmt(mean[g]);
        r.checks.push_back(make_check("free_energy_band", within, "curve " + d + " within +-" + fmt(band)));
        // Widest secants on either side of the critical point that the grid offers.
        const double crit = std::sqrt(2.0 * beta);
        int ic = -1;
        for (std::size_t g = 0; g < gammas.size(); ++g)
            if (std::abs(gammas[g] - crit) < 1e-12)
                ic = static_cast<int>(g);
        if (ic > 0 && ic + 1 < static_cast<int>(gammas.size())) {
            const std::size_t lo = 0, hi = gammas.size() - 1;
            const double left = (mean[ic] - mean[lo]) / (gammas[ic] - gammas[lo]);
            const double right = (mean[hi] - mean[ic]) / (gammas[hi] - gammas[ic]);
            const double change = std::abs(right - left) / std::abs(left);
            r.checks.push_back(make_check("slope_change", change > cfg.number("slope_change"),
                                          "left secant " + fmt(left) + ", right secant " + fmt(right) +
                                              ", relative change " + fmt(change)));
            r.report["secants"] = {{"left", left}, {"right", right}, {"relative_change", change}};
        }
        r.report.update({{"beta", beta}, {"n", n}, {"grid", grid}, {"curve", curve}});
        return r;
    }
    throw ConfigError("gmc task must be moments, free_energy or thick_points");
}

ExperimentResult run_experiment(const Config& cfg, SampleCache* cache)
{
    const std::string& e = cfg.experiment();
    if (e == "clt")
        return run_global_clt(cfg, cache);
    if (e == "meso")
        return run_meso_clt(cfg, cache);
    if (e == "sine")
        return run_sine_clt(cfg, cache);
    if (e == "rigidity")
        return run_rigidity(cfg, cache);
    if (e == "loopeq")
        return run_loop_null(cfg, cache);
    if (e == "errbudget")
        return run_error_budget(cfg, cache);
    if (e == "gmc")
        return run_gmc(cfg, cache);
    throw ConfigError("'" + e + "' is not a Monte Carlo experiment");
}

}  // namespace cbe
