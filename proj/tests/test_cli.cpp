#include <doctest.h>

#include <monolab/runner.hpp>

#include <filesystem>

using namespace monolab;

namespace {

nlohmann::json enum_config(const std::string& outdir) {
    return {
        {"task", "enumerate"},
        {"seed", 424242},
        {"jobs", 2},
        {"output_dir", outdir},
        {"sphere", {{"a", {0.83, 0.57}}, {"regime", "symmetric"}}},
        {"delta", {0.21, -0.13, 0.34}},
        {"L", 1},
        {"tolerances", {{"newton", 1e-12}, {"oracle", 1e-6}}},
    };
}

std::string digest_of(const RunRecord& rec, const std::string& suffix) {
    for (auto& o : rec.outputs)
        if (o.path.size() >= suffix.size() &&
            o.path.compare(o.path.size() - suffix.size(), suffix.size(), suffix) == 0)
            return o.sha256;
    return "";
}

} // namespace

TEST_CASE("config validation names the offending field") {
    CHECK_THROWS_AS(RunConfig::parse({{"seed", 1}}), config_error);
    CHECK_THROWS_AS(RunConfig::parse({{"task", "no-such-task"}}), config_error);
    CHECK_THROWS_AS(RunConfig::parse({{"task", "verify"}, {"jobs", 0}}), config_error);
    CHECK_THROWS_AS(RunConfig::parse({{"task", "verify"}, {"tolerances", {{"newton", -1.0}}}}),
                    config_error);
    // missing task-specific field is reported by the runner
    auto cfg = RunConfig::parse({{"task", "enumerate"}, {"output_dir", "/tmp/monolab_cli_x"}});
    CHECK_THROWS_AS(run(cfg), config_error);
}

TEST_CASE("config round-trips through canonical serialization") {
    auto j = enum_config("/tmp/monolab_rt");
    auto cfg = RunConfig::parse(j);
    auto j2 = nlohmann::json::parse(cfg.canonical());
    CHECK(j2 == j);
    auto cfg2 = RunConfig::parse(j2);
    CHECK(cfg2.canonical() == cfg.canonical());
}

TEST_CASE("count-partitions task prints the count and writes a record") {
    RunConfig cfg = RunConfig::parse(
        {{"task", "count-partitions"}, {"L", 2}, {"kinds", 3}, {"output_dir", "/tmp/monolab_cnt"}});
    std::string text;
    auto rec = run(cfg, &text);
    CHECK(text == "9\n");
    CHECK(rec.status == "ok");
    CHECK(!rec.outputs.empty());
}

TEST_CASE("dictionary task reproduces the worked example") {
    RunConfig cfg = RunConfig::parse({{"task", "dictionary"},
                                      {"a", {2.0 / 3, 2.0 / 3, 2.0 / 3}},
                                      {"m", {-0.5, -0.5, -0.5}},
                                      {"rho", 1.0},
                                      {"output_dir", "/tmp/monolab_dict"}});
    std::string text;
    auto rec = run(cfg, &text);
    CHECK(rec.status == "ok");
    CHECK(text.find("muR = 2") != std::string::npos);
    auto j = nlohmann::json::parse(rundetail::slurp("/tmp/monolab_dict/dictionary.json"));
    CHECK(j.at("k")[0].get<double>() == doctest::Approx(0.0));
    CHECK(j.at("muR").get<double>() == doctest::Approx(2.0));
}

TEST_CASE("identical config and seed produce byte-identical result files") {
    std::filesystem::remove_all("/tmp/monolab_det_a");
    std::filesystem::remove_all("/tmp/monolab_det_b");
    auto recA = run(RunConfig::parse(enum_config("/tmp/monolab_det_a")));
    auto recB = run(RunConfig::parse(enum_config("/tmp/monolab_det_b")));
    REQUIRE(recA.status == "ok");
    REQUIRE(recB.status == "ok");
    for (const char* suffix : {"moduli.json", "summary.txt", "moduli_scatter.svg"}) {
        auto da = digest_of(recA, suffix), db = digest_of(recB, suffix);
        CHECK(!da.empty());
        CHECK(da == db);
    }
}

TEST_CASE("results do not depend on the worker count") {
    std::filesystem::remove_all("/tmp/monolab_det_j1");
    std::filesystem::remove_all("/tmp/monolab_det_j2");
    auto c1 = enum_config("/tmp/monolab_det_j1");
    auto c2 = enum_config("/tmp/monolab_det_j2");
    c1["jobs"] = 1;
    c2["jobs"] = 2;
    auto r1 = run(RunConfig::parse(c1));
    auto r2 = run(RunConfig::parse(c2));
    CHECK(digest_of(r1, "moduli.json") == digest_of(r2, "moduli.json"));
    CHECK(digest_of(r1, "summary.txt") == digest_of(r2, "summary.txt"));
}

TEST_CASE("wilson task emits CSV and SVG; charges task consumes the CSV") {
    std::filesystem::remove_all("/tmp/monolab_wil");
    nlohmann::json j = {
        {"task", "wilson"},
        {"jobs", 2},
        {"output_dir", "/tmp/monolab_wil"},
        {"sphere", {{"a", {0.83, 0.57}}}},
        {"delta", {0.21, -0.13, 0.34}},
        {"theta", {{"lo", 2.0}, {"hi", 3.0}, {"points", 13}}},
        {"charges", {{"N", 3}}},
        {"tolerances", {{"transport", 1e-10}}},
    };
    auto rec = run(RunConfig::parse(j));
    CHECK(rec.status == "ok");
    auto scan = read_scan_csv("/tmp/monolab_wil/scan.csv");
    CHECK(scan.samples.size() == 13);
    auto svg = rundetail::slurp("/tmp/monolab_wil/logW.svg");
    CHECK(svg.find("<svg") != std::string::npos);

    RunConfig ccfg = RunConfig::parse({{"task", "charges"},
                                       {"scan_file", "/tmp/monolab_wil/scan.csv"},
                                       {"N", 3},
                                       {"output_dir", "/tmp/monolab_chg"}});
    auto crec = run(ccfg);
    CHECK(crec.status == "ok");
    auto cj = nlohmann::json::parse(rundetail::slurp("/tmp/monolab_chg/charges.json"));
    CHECK(cj.contains("q"));
    CHECK(cj.at("reliable").get<bool>());
}

TEST_CASE("transport task reports the matrix with unit determinant") {
    std::filesystem::remove_all("/tmp/monolab_tr");
    nlohmann::json path = {{"base", {0.0, 0.0}},
                           {"loop", false},
                           {"segments", {{{"type", "line"}, {"from", {0.0, 0.0}}, {"to", {0.3, 0.2}}}}}};
    nlohmann::json j = {{"task", "transport"},
                        {"output_dir", "/tmp/monolab_tr"},
                        {"sphere", {{"a", {0.7, 0.6}}}},
                        {"delta", {0.3, 0.1, -0.05}},
                        {"lambda2", {0.4, 0.2}},
                        {"path", path}};
    std::string text;
    auto rec = run(RunConfig::parse(j), &text);
    CHECK(rec.status == "ok");
    auto out = nlohmann::json::parse(rundetail::slurp("/tmp/monolab_tr/transport.json"));
    CHECK(out.at("det_defect").get<double>() < 1e-8);
}

TEST_CASE("verify task reports all suites passing") {
    RunConfig cfg = RunConfig::parse(
        {{"task", "verify"}, {"jobs", 2}, {"output_dir", "/tmp/monolab_ver"}});
    std::string text;
    auto rec = run(cfg, &text);
    CHECK(rec.status == "ok");
    CHECK(text.find("FAIL") == std::string::npos);
    CHECK(text.find("all suites passed") != std::string::npos);
}

TEST_CASE("branch jumps inside a charge window are reported") {
    // alternating signs make the ratio continuation ambiguous
    std::vector<ScanSample> samples;
    for (int k = 0; k < 12; ++k)
        samples.push_back({cplx{2.0 + 0.1 * k, 0.0}, (k % 2 ? -1.0 : 1.0) * cplx{2.0, 0.0}, 0.0});
    CHECK_THROWS_AS(extract_charges(samples, 2), domain_error);
}

TEST_CASE("run record lists outputs with digests") {
    auto rec = run(RunConfig::parse(
        {{"task", "count-partitions"}, {"L", 5}, {"kinds", 1}, {"output_dir", "/tmp/monolab_cnt2"}}));
    REQUIRE(!rec.outputs.empty());
    for (auto& o : rec.outputs) {
        CHECK(o.bytes > 0);
        CHECK(o.sha256.size() == 64);
    }
    auto j = nlohmann::json::parse(rundetail::slurp("/tmp/monolab_cnt2/run_record.json"));
    CHECK(j.at("status").get<std::string>() == "ok");
    CHECK(j.contains("timing_ms"));
}
