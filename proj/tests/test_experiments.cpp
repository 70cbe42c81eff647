#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cbe/experiments.hpp"
#include "cbe/io.hpp"
#include "cbe/stats.hpp"
#include "doctest.h"

using namespace cbe;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& tag)
{
    fs::path p = fs::temp_directory_path() / ("cbe_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Config small(const std::string& experiment, const json& overrides)
{
    Config c = Config::for_experiment(experiment);
    c.merge(overrides, "test");
    return c;
}

std::string dump_result(const ExperimentResult& r)
{
    json checks = json::array();
    for (const auto& c : r.checks)
        checks.push_back({c.name, c.passed, c.detail});
    return json({{"summary", to_json(r.summary)}, {"report", r.report}, {"rows", r.rows}, {"checks", checks}}).dump();
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config defaults, merge and validation")
{
    const auto names = experiment_names();
    for (const auto& name : names)
        CHECK_NOTHROW(Config::for_experiment(name));
    for (const char* required : {"sample", "fields", "oracle", "clt", "meso", "sine", "rigidity", "loopeq", "errbudget", "gmc"})
        CHECK(std::count(names.begin(), names.end(), required) == 1);
    CHECK_THROWS_AS(Config::for_experiment("nope"), ConfigError);

    Config c = Config::for_experiment("clt");
    CHECK(c.number("beta") == 2.0);
    CHECK(c.integer("n") == 256);
    CHECK(c.string("function") == "cos");
    c.merge({{"experiment", "clt"}, {"beta", 4}, {"n", 32}}, "inline");
    CHECK(c.number("beta") == 4.0);
    CHECK(c.integer("n") == 32);
    CHECK_THROWS_AS(c.merge({{"bogus", 1}}, "inline"), ConfigError);
    CHECK_THROWS_AS(c.merge({{"n", "many"}}, "inline"), ConfigError);
    CHECK_THROWS_AS(c.merge({{"n", 2.5}}, "inline"), ConfigError);
    CHECK_THROWS_AS(c.merge({{"experiment", "meso"}}, "inline"), ConfigError);
    CHECK_THROWS_AS(c.merge(json::array({1}), "inline"), ConfigError);
    CHECK_THROWS_AS(c.number("function"), ConfigError);
    c.apply_override("seed=-1");
    CHECK_THROWS_AS(c.seed(), ConfigError);

    Config o = Config::for_experiment("oracle");
    CHECK_FALSE(o.has("beta_list"));
    CHECK_THROWS_AS(o.numbers("beta_list"), ConfigError);
    o.apply_override("beta_list=[1,2,4]");
    CHECK(o.numbers("beta_list") == std::vector<double>{1, 2, 4});
    o.apply_override("kind=exp_psi");
    CHECK(o.string("kind") == "exp_psi");
    CHECK(o.numbers("gamma") == std::vector<double>{2.0});
    CHECK(o.overrides().size() == 2);
    CHECK_THROWS_AS(o.apply_override("novalue"), ConfigError);
    CHECK_THROWS_AS(o.apply_override("=3"), ConfigError);
    CHECK_THROWS_AS(o.apply_override("unknown=3"), ConfigError);
}

TEST_CASE("config files")
{
    const fs::path dir = scratch_dir("cfg");
    {
        std::ofstream(dir / "good.json") << R"({"experiment": "rigidity", "n_list": [64], "replicates": 150})";
        std::ofstream(dir / "bad.json") << "{ not json";
    }
    Config c = Config::for_experiment("rigidity");
    c.merge_file((dir / "good.json").string());
    CHECK(c.integers("n_list") == std::vector<int>{64});
    CHECK(c.integer("replicates") == 150);
    CHECK_THROWS_AS(c.merge_file((dir / "bad.json").string()), ConfigError);
    CHECK_THROWS_AS(c.merge_file((dir / "missing.json").string()), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("config hash")
{
    Config a = Config::for_experiment("clt"), b = Config::for_experiment("clt");
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    b.apply_override("seed=2");
    CHECK(a.hash() != b.hash());
    b.apply_override("seed=1");
    CHECK(a.hash() == b.hash());
    // Key order in the input does not matter.
    Config c = Config::for_experiment("clt"), d = Config::for_experiment("clt");
    c.merge({{"n", 16}, {"beta", 1.0}}, "x");
    d.merge({{"beta", 1.0}, {"n", 16}}, "y");
    CHECK(c.hash() == d.hash());
    CHECK(Config::for_experiment("meso").hash() != a.hash());
}

TEST_CASE("function specs")
{
    FunctionSpec f = parse_function_spec("phi_r:r=0.5");
    CHECK(f.name == "phi_r");
    CHECK(f.params.at("r") == 0.5);
    CHECK(f.text == "phi_r:r=0.5");
    FunctionSpec g = parse_function_spec("cos:k=3,amplitude=-2e-1");
    CHECK(g.params.at("k") == 3.0);
    CHECK(g.params.at("amplitude") == -0.2);
    CHECK(parse_function_spec("bump3").params.empty());
    CHECK_THROWS_AS(parse_function_spec(""), ConfigError);
    CHECK_THROWS_AS(parse_function_spec(":r=1"), ConfigError);
    CHECK_THROWS_AS(parse_function_spec("cos:k"), ConfigError);
    CHECK_THROWS_AS(parse_function_spec("cos:k=two"), ConfigError);
    CHECK_THROWS_AS(parse_function_spec("cos:k=2x"), ConfigError);
}

TEST_CASE("parallel_for visits every index once and propagates errors")
{
    CHECK(resolve_threads(3) == 3);
    CHECK(resolve_threads(0) >= 1);
    for (int threads : {1, 2, 5}) {
        std::vector<std::atomic<int>> hits(1000);
        parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
        CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));
        CHECK_THROWS_AS(parallel_for(100, threads,
                                     [](std::size_t i) {
                                         if (i == 37)
                                             throw std::runtime_error("boom");
                                     }),
                        std::runtime_error);
    }
    parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("sample cache shares prefixes and matches direct draws")
{
    SampleCache cache;
    auto a = cache.get(2.0, 16, 5, 9, 2);
    REQUIRE(a.size() == 5);
    const std::vector<double> first = a[0].angles;
    auto b = cache.get(2.0, 16, 12, 9, 3);
    REQUIRE(b.size() == 12);
    CHECK(b[0].angles == first);
    for (std::size_t i = 0; i < b.size(); ++i) {
        RngStream rng(9, i);
        CHECK(b[i].angles == sample_spectrum({2.0, 16, 9}, rng).angles);
    }
    CHECK(cache.get(2.0, 16, 3, 9, 1).size() == 3);
    CHECK(cache.get(2.0, 16, 3, 10, 1)[0].angles != first);
}

TEST_CASE("summaries")
{
    RunSummary c = summarize({4.0, 4.0, 4.0, 4.0});
    CHECK(c.estimate == 4.0);
    CHECK(c.std_error == 0.0);
    RunSummary s = summarize({1.0, 2.0, 3.0});
    CHECK(s.estimate == doctest::Approx(2.0));
    CHECK(s.variance == doctest::Approx(1.0));
    CHECK(s.ci95.lo == doctest::Approx(s.estimate - 1.96 * s.std_error));
    CHECK(s.ci95.hi == doctest::Approx(s.estimate + 1.96 * s.std_error));
    CHECK(s.n_eff == 3.0);
    CHECK_THROWS_AS(summarize({1.0}), StatsError);
    CHECK_THROWS_AS(summarize({1.0, NAN}), StatsError);

    RngStream rng(2024);
    std::vector<double> z(100000);
    for (double& v : z)
        v = rng.normal();
    RunSummary n = summarize(z, [](double x) { return normal_cdf(x, 0.0, 1.0); });
    CHECK(n.ks_pvalue > 0.01);
    CHECK(std::abs(n.skewness) < 0.05);
    CHECK(std::abs(n.kurtosis) < 0.1);

    RunSummary w = summarize_weighted({1.0, 2.0, 3.0, 4.0}, {0.0, 0.0, 0.0, 0.0});
    CHECK(w.estimate == doctest::Approx(2.5));
    CHECK(w.n_eff == doctest::Approx(4.0));
    RunSummary w2 = summarize_weighted({1.0, 2.0, 3.0, 4.0}, {0.0, std::log(3.0), 0.0, 0.0});
    CHECK(w2.estimate == doctest::Approx((1 + 6 + 3 + 4) / 6.0));
    CHECK(w2.n_eff < 4.0);
}

TEST_CASE("global clt driver")
{
    Config cfg = small("clt", {{"n", 64}, {"replicates", 600}, {"seed", 3}, {"threads", 1}});
    ExperimentResult r = run_global_clt(cfg);
    CHECK(r.passed());
    CHECK(r.report["predicted_variance"].get<double>() == doctest::Approx(0.5));
    CHECK(r.rows.size() == 600);
    CHECK(r.columns == std::vector<std::string>{"replicate", "statistic"});

    Config beta1 = small("clt", {{"beta", 1.0}, {"n", 64}, {"replicates", 600}, {"seed", 4}});
    ExperimentResult r1 = run_global_clt(beta1);
    CHECK(r1.report["predicted_variance"].get<double>() == doctest::Approx(1.0));
    CHECK(std::abs(r1.summary.variance - 1.0) < 3 * r1.summary.variance_se);

    // A constant test function is removed by the centering.
    Config flat = small("clt", {{"n", 32}, {"replicates", 100}, {"function", "cos:k=0,amplitude=3"}});
    ExperimentResult rf = run_global_clt(flat);
    for (const auto& row : rf.rows)
        CHECK(std::abs(row[1]) < 1e-12);
    CHECK(rf.summary.variance < 1e-24);

    CHECK_THROWS_AS(run_global_clt(small("clt", {{"replicates", 50}})), ConfigError);
    CHECK_THROWS_AS(run_global_clt(small("clt", {{"function", "bump3"}})), ConfigError);
}

TEST_CASE("runs are reproducible and independent of thread count")
{
    Config a = small("clt", {{"n", 32}, {"replicates", 200}, {"seed", 17}, {"threads", 1}});
    Config b = small("clt", {{"n", 32}, {"replicates", 200}, {"seed", 17}, {"threads", 4}});
    CHECK(dump_result(run_global_clt(a)) == dump_result(run_global_clt(a)));
    CHECK(dump_result(run_global_clt(a)) == dump_result(run_global_clt(b)));
    SampleCache cache;
    CHECK(dump_result(run_global_clt(a, &cache)) == dump_result(run_global_clt(b)));
}

TEST_CASE("disjoint seeds agree within combined error")
{
    const RunSummary s1 = run_global_clt(small("clt", {{"n", 32}, {"replicates", 800}, {"seed", 100}})).summary;
    const RunSummary s2 = run_global_clt(small("clt", {{"n", 32}, {"replicates", 800}, {"seed", 200}})).summary;
    CHECK(std::abs(s1.estimate - s2.estimate) < 3 * std::hypot(s1.std_error, s2.std_error));
    CHECK(std::abs(s1.variance - s2.variance) < 3 * std::hypot(s1.variance_se, s2.variance_se));
}

TEST_CASE("mesoscopic driver")
{
    Config cfg = small("meso", {{"n", 512}, {"replicates", 300}, {"L_list", json::array({1, 4, 16})}, {"seed", 5}});
    ExperimentResult r = run_meso_clt(cfg);
    REQUIRE(r.report["scales"].size() == 4);
    CHECK(r.columns.size() == 5);
    for (const auto& check : r.checks)
        if (check.name == "variance")
            CHECK_MESSAGE(check.passed, check.detail);
    // L = 1 is the plain linear statistic of the wrapped function.
    const PeriodicFn w1 = meso_wrap({make_compact("bump3"), 1.0});
    SampleCache cache;
    auto samples = cache.get(2.0, 512, 300, 5, 0);
    const double c0 = w1.coefficient(0).real();
    for (std::size_t i = 0; i < 20; ++i) {
        double acc = 0.0;
        for (double t : samples[i].angles)
            acc += w1(t);
        CHECK(std::abs(r.rows[i][2] - (acc - 512 * c0)) < 1e-7);
    }
    CHECK_THROWS_AS(run_meso_clt(small("meso", {{"L_exponent", 1.0}})), ConfigError);
    CHECK_THROWS_AS(run_meso_clt(small("meso", {{"n", 64}, {"replicates", 100}, {"L_list", json::array({0.1})}})),
                    ConfigError);
}

TEST_CASE("sine driver")
{
    Config cfg = small("sine", {{"n", 1024}, {"replicates", 300}, {"nu", 4.0}, {"seed", 6}, {"tolerance", 0.25}});
    ExperimentResult r = run_sine_clt(cfg);
    for (const auto& check : r.checks)
        CHECK_MESSAGE(check.passed, check.name << ": " << check.detail);
    CHECK(r.report["scale_L"].get<double>() == doctest::Approx(1024 / (2 * M_PI * 4)));
    // nu = 1 with a half-width-1/2 bump sees O(1) eigenvalues.
    Config one = small("sine", {{"n", 1024}, {"replicates", 100}, {"nu", 1.0}, {"seed", 6}});
    ExperimentResult r1 = run_sine_clt(one);
    SampleCache cache;
    auto samples = cache.get(2.0, 1024, 100, 6, 0);
    const double reach = 0.5 * 2 * M_PI / 1024;
    for (const auto& s : samples) {
        auto near = std::count_if(s.angles.begin(), s.angles.end(),
                                  [&](double t) { return t < reach || t > 2 * M_PI - reach; });
        CHECK(near <= 4);
    }
    CHECK(r1.rows.size() == 100);
}

TEST_CASE("rigidity driver")
{
    Config cfg = small("rigidity", {{"n_list", json::array({64, 128})}, {"replicates", 200}, {"extremes", true},
                                    {"trend", false}, {"oversample", 4}, {"seed", 7}});
    ExperimentResult r = run_rigidity(cfg);
    for (const auto& check : r.checks)
        CHECK_MESSAGE(check.passed, check.name << ": " << check.detail);
    CHECK(r.rows.size() == 400);
    CHECK(r.columns.size() == 8);
    for (const auto& row : r.rows) {
        CHECK(row[4] >= row[5] - 1e-9);
        CHECK(row[4] <= row[5] + 1.0 + 1e-9);
    }
    CHECK(r.report["per_n"].size() == 2);
    CHECK_THROWS_AS(run_rigidity(small("rigidity", {{"n_list", json::array({1})}, {"replicates", 100}})), ConfigError);
}

TEST_CASE("loop equation and error budget drivers")
{
    Config cfg = small("loopeq", {{"beta_list", json::array({1, 2})}, {"n_list", json::array({8})}, {"replicates", 1500},
                                  {"seed", 8}});
    ExperimentResult r = run_loop_null(cfg);
    for (const auto& check : r.checks)
        CHECK_MESSAGE(check.passed, check.name << ": " << check.detail);
    CHECK(r.report["cells"].size() == 2 * 1 * 2 * 3);
    CHECK(r.rows.size() == 12 * 1500);

    Config eb = small("errbudget", {{"n_list", json::array({8, 16})}, {"replicates", 300}, {"seed", 8}});
    ExperimentResult b = run_error_budget(eb);
    REQUIRE(b.report["budget"].size() == 2);
    for (const auto& row : b.report["budget"]) {
        for (const char* key : {"delta_hat", "R0", "R1", "R2", "bound_rhs"})
            CHECK(row.contains(key));
        CHECK(row["delta_hat"].get<double>() >= 0.0);
        CHECK(row["R1"].get<double>() > 0.0);
    }
}

TEST_CASE("gmc driver tasks")
{
    ExperimentResult m = run_gmc(small("gmc", {{"n", 128}, {"replicates", 200}, {"r", 0.9}, {"grid", 1024}, {"seed", 9}}));
    for (const auto& check : m.checks)
        CHECK_MESSAGE(check.passed, check.name << ": " << check.detail);
    CHECK(m.report.contains("monte_carlo_normalizer"));

    ExperimentResult f = run_gmc(small("gmc", {{"task", "free_energy"}, {"n", 128}, {"replicates", 100}, {"seed", 9},
                                               {"band", 10.0}, {"slope_change", 0.0}}));
    CHECK(f.report["curve"].size() == 6);
    CHECK(f.report.contains("secants"));
    CHECK(f.columns.size() == 7);

    ExperimentResult t = run_gmc(small("gmc", {{"task", "thick_points"}, {"n", 128}, {"replicates", 100}, {"gamma", 1.0},
                                               {"seed", 9}, {"thick.band", 10.0}}));
    CHECK(t.passed());
    CHECK(t.report["prediction"].get<double>() == doctest::Approx(-0.25));

    CHECK_THROWS_AS(run_gmc(small("gmc", {{"task", "other"}, {"n", 16}, {"replicates", 100}})), ConfigError);
    CHECK_THROWS_AS(run_experiment(Config::for_experiment("oracle")), ConfigError);
}

TEST_CASE("number formatting and csv output")
{
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0})
        CHECK(std::stod(format_number(x)) == x);
    CHECK(format_number(NAN) == "nan");
    CHECK(format_number(-INFINITY) == "-inf");
    std::ostringstream os;
    write_csv(os, {"a", "b"}, {{1, 2}, {3, 0.5}});
    CHECK(os.str() == "a,b\n1,2\n3,0.5\n");
    std::ostringstream bad;
    CHECK_THROWS(write_csv(bad, {"a"}, {{1, 2}}));

    SpectrumSample s;
    s.angles = {0.5, 1.5};
    std::vector<SpectrumSample> v = {s, s};
    std::ostringstream ss;
    write_samples(ss, v);
    CHECK(ss.str() == "replicate,index,angle\n0,0,0.5\n0,1,1.5\n1,0,0.5\n1,1,1.5\n");

    std::ostringstream ot;
    write_oracle_table(ot, {2.0}, {1, 8}, {2.0}, {"abs_charpoly"});
    CHECK(ot.str().rfind("beta,n,gamma,kind,log_moment\n", 0) == 0);
    std::string last = ot.str();
    last.pop_back();
    last = last.substr(last.rfind('\n') + 1);
    CHECK(last.rfind("2,8,2,abs_charpoly,", 0) == 0);
    CHECK(std::stod(last.substr(last.rfind(',') + 1)) == doctest::Approx(std::log(9.0)).epsilon(1e-14));
}

TEST_CASE("field dump and sidecar")
{
    RngStream rng(1);
    SpectrumSample s = sample_spectrum({2.0, 8, 1}, rng);
    FieldGrid f = field_grid(s, FieldKind::Psi, 1.0, 16, 0.5);
    std::ostringstream os;
    write_field(os, f);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "theta,value");
    int rows = 0;
    while (std::getline(is, line))
        ++rows;
    CHECK(rows == 16);
    json j = field_sidecar(f);
    CHECK(j["kind"] == to_string(FieldKind::Psi));
    CHECK(j["grid"] == 16);
    CHECK(j["offset"] == 0.5);
    CHECK(j["n"] == 8);
}

TEST_CASE("result files")
{
    const fs::path dir = scratch_dir("result");
    Config cfg = small("clt", {{"n", 16}, {"replicates", 100}, {"seed", 2}});
    cfg.apply_override("laplace_t=0.5");
    ExperimentResult r = run_global_clt(cfg);
    write_result((dir / "out").string(), r, cfg, "cbe_lab run clt", 1.25);
    json summary = json::parse(read_file(dir / "out" / "summary.json"));
    CHECK(summary["experiment"] == "clt");
    CHECK(summary["config_hash"] == cfg.hash());
    CHECK(summary["passed"] == r.passed());
    CHECK(summary["checks"].size() == r.checks.size());
    json manifest = json::parse(read_file(dir / "out" / "manifest.json"));
    CHECK(manifest["config_hash"] == cfg.hash());
    CHECK(manifest["seed"] == 2);
    CHECK(manifest["overrides"] == json::array({"laplace_t=0.5"}));
    CHECK(manifest["config"]["experiment"] == "clt");
    CHECK(manifest["duration_seconds"] == 1.25);
    const std::string csv = read_file(dir / "out" / "statistics.csv");
    CHECK(csv.rfind("replicate,statistic\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 101);
    fs::remove_all(dir);
}
