#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "liqlsmc/cli.hpp"
#include "liqlsmc/io.hpp"

using namespace liqlsmc;
namespace fs = std::filesystem;

namespace {

const char* kBase =
    "utility.kind = cara  # normalized wealth\n"
    "utility.gamma = 5\n"
    "grid.step = 0.25\n"
    "rf = 0.012\n"
    "w0 = 1\n"
    "s0 = 1\n"
    "paths = 400\n"
    "steps = 2\n"
    "costs.model = zero\n"
    "model.kind = iid\n"
    "benchmark.paths = 300,600\n";

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("liqlsmc_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_cfg(const fs::path& dir, const std::string& text) {
    const auto p = dir / "run.cfg";
    save_text(p.string(), text);
    return p.string();
}

int run_quiet(const std::string& cmd, const std::string& cfg, const std::vector<std::string>& ov, std::string* err = nullptr,
              bool dry = false, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int rc = run(cmd, cfg, ov, dry, o, e);
    if (err) *err = e.str();
    if (out) *out = o.str();
    return rc;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto v = parse_config_text("# header\n a = 1 \n\nb=two # tail\n");
    CHECK(v.size() == 2);
    CHECK(v.at("a") == "1");
    CHECK(v.at("b") == "two");
    CHECK_THROWS_AS(parse_config_text("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS(parse_config_text("just words\n"));
    CHECK(apply_overrides(v, {"a=3", "c = x"}).at("a") == "3");
    CHECK_THROWS(apply_overrides(v, {"novalue"}));
}

TEST_CASE("validation names the offending key") {
    auto check_key = [](const std::string& text, const std::string& key) {
        try {
            resolve_config(parse_config_text(text));
            FAIL("expected a ConfigError for " << key);
        } catch (const ConfigError& e) {
            CHECK(e.key() == key);
        }
    };
    check_key("utility.kind = crra\nutility.gamma = 5\n", "grid.step");
    check_key(std::string(kBase) + "bogus = 1\n", "bogus");
    check_key(std::string(kBase) + "threads = -1\n", "threads");
    check_key(std::string(kBase) + "algorithm = vfi\n", "algorithm");
    check_key(std::string(kBase) + "eval.seed = 1\n", "eval.seed");
    check_key(std::string(kBase) + "basis.cross_terms = maybe\n", "basis.cross_terms");
    check_key("utility.kind = crra\nutility.gamma = 5\ngrid.step = 0.3\n", "grid.step");
    check_key("utility.kind = crra\nutility.gamma = -5\ngrid.step = 0.5\n", "utility.gamma");
}

TEST_CASE("defaults and overrides") {
    const auto rc = resolve_config(parse_config_text("utility.kind = crra\nutility.gamma = 5\ngrid.step = 0.01\n"));
    CHECK(rc.solve.rf == doctest::Approx(0.001));
    CHECK(rc.solve.w0 == 1e8);
    CHECK(rc.solve.n_paths == 100000);
    CHECK(rc.solve.n_steps == 12);
    CHECK(rc.solve.iterations == 1);
    CHECK(rc.solve.grid.size() == 101);
    CHECK(rc.solve.costs.liquidity()->theta == 988e6);
    CHECK(rc.solve.costs.liquidity()->delta == doctest::Approx(5.0 / 390.0).epsilon(1e-15));
    CHECK(rc.solve.threads >= 1);
    const auto over = resolve_config(apply_overrides(parse_config_text(kBase), {"paths=1e3", "utility.gamma=15"}));
    CHECK(over.solve.n_paths == 1000);
    CHECK(over.solve.utility.gamma() == 15);
    CHECK(render_config(over).find("paths = 1e3\n") != std::string::npos);
}

TEST_CASE("run reports errors with a nonzero status") {
    const auto dir = scratch("errors");
    std::string err;
    CHECK(run_quiet("solve", write_cfg(dir, "utility.kind = crra\nutility.gamma = 5\n"), {}, &err) != 0);
    CHECK(err.find("grid.step") != std::string::npos);
    CHECK(run_quiet("launch", write_cfg(dir, kBase), {}, &err) != 0);
    CHECK(run_quiet("solve", (dir / "missing.cfg").string(), {}, &err) != 0);
    CHECK(run_quiet("evaluate", write_cfg(dir, kBase), {"io.policy=" + (dir / "none.json").string()}, &err) != 0);
    CHECK(run_quiet("calibrate", write_cfg(dir, kBase), {"io.output_dir=" + dir.string()}, &err) != 0);
    CHECK(err.find("io.prices_csv") != std::string::npos);
}

TEST_CASE("dry run prints the resolved config and computes nothing") {
    const auto dir = scratch("dry");
    std::string out;
    const auto target = dir / "should_not_exist";
    CHECK(run_quiet("solve", write_cfg(dir, kBase), {"io.output_dir=" + target.string()}, nullptr, true, &out) == 0);
    CHECK(!fs::exists(target));
    CHECK(out.find("grid.step = 0.25\n") != std::string::npos);
    CHECK(out.find("liquidity.theta = 988e6\n") != std::string::npos);
}

TEST_CASE("commands write deterministic outputs") {
    const auto dir = scratch("outputs");
    const auto cfg = write_cfg(dir, kBase);
    for (const char* sub : {"a", "b"}) {
        const auto out = (dir / sub).string();
        REQUIRE(run_quiet("solve", cfg, {"io.output_dir=" + out}) == 0);
        REQUIRE(run_quiet("benchmark", cfg, {"io.output_dir=" + out, "benchmark.iterations=3"}) == 0);
        REQUIRE(run_quiet("evaluate", cfg, {"io.output_dir=" + out, "io.policy=" + out + "/policy.json"}) == 0);
        REQUIRE(run_quiet("evolution", cfg, {"io.output_dir=" + out, "io.policy=" + out + "/policy.json"}) == 0);
        REQUIRE(run_quiet("sweep", cfg, {"io.output_dir=" + out, "sweep.axis=gamma", "sweep.values=2,5"}) == 0);
        REQUIRE(run_quiet("compare-blind", cfg, {"io.output_dir=" + out}) == 0);
    }
    for (const char* f : {"policy.json", "diagnostics.csv", "benchmark.csv", "evaluation.csv", "evolution.csv",
                          "sweep.csv", "comparison.csv"}) {
        CAPTURE(f);
        CHECK(load_text((dir / "a" / f).string()) == load_text((dir / "b" / f).string()));
    }
    const auto bench = load_text((dir / "a" / "benchmark.csv").string());
    CHECK(bench.rfind("algorithm,iterations,paths,cer_bps,alpha0\n", 0) == 0);
    for (const char* m : {"300", "600"}) {
        CHECK(bench.find(std::string("klp,0,") + m + ",") != std::string::npos);
        for (const char* i : {"0", "1", "2", "3"})
            CHECK(bench.find(std::string("per-level,") + i + "," + m + ",") != std::string::npos);
    }
    CHECK(load_text((dir / "a" / "sweep.csv").string()).rfind("axis,value,cer_bps,alpha0\n", 0) == 0);
}

TEST_CASE("calibrate writes a loadable VAR(1)") {
    const auto dir = scratch("calibrate");
    std::string csv = "date,STOCK,PRED\n";
    double a = 100.0, b = 50.0;
    std::uint64_t x = 7;
    for (int t = 0; t < 200; ++t) {
        x = x * 6364136223846793005ULL + 1442695040888963407ULL;
        const double e1 = static_cast<double>(x >> 40) / (1ULL << 24) - 0.5;
        const double e2 = static_cast<double>((x >> 16) & 0xffffff) / (1ULL << 24) - 0.5;
        a *= std::exp(0.005 + 0.05 * e1);
        b *= std::exp(0.01 * e2);
        csv += "2000-01-01," + std::to_string(a) + "," + std::to_string(b) + "\n";
    }
    save_text((dir / "prices.csv").string(), csv);
    const auto cfg = write_cfg(dir, kBase);
    REQUIRE(run_quiet("calibrate", cfg, {"io.output_dir=" + dir.string(), "io.prices_csv=" + (dir / "prices.csv").string(),
                                         "model.period_length=0.0833333333333"}) == 0);
    const auto m = var1_from_json(load_text((dir / "var1.json").string()));
    CHECK(m.dimension() == 2);
    CHECK(m.names == std::vector<std::string>{"STOCK", "PRED"});
    CHECK(run_quiet("solve", cfg, {"io.output_dir=" + (dir / "s").string(), "model.kind=var1",
                                   "model.var1_file=" + (dir / "var1.json").string()}) == 0);
}
