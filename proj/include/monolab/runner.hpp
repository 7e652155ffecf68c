#pragma once

#include "monolab/apparent.hpp"
#include "monolab/mshg_connection.hpp"
#include "monolab/report.hpp"
#include "monolab/sha256.hpp"
#include "monolab/partitions.hpp"
#include "monolab/rng.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

namespace monolab {

inline const char* artifact_version = "1.0.0";

// ------------------------------------------------------------------------
// Run configuration: one JSON document per run. Top-level fields are
// validated here; task blocks are validated by the task runners, which
// throw config_error naming the offending field.
// ------------------------------------------------------------------------

struct RunConfig {
    nlohmann::json doc;

    std::string task;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    unsigned jobs = 1;

    static RunConfig parse(const nlohmann::json& j) {
        RunConfig c;
        c.doc = j;
        if (!j.contains("task") || !j.at("task").is_string())
            throw config_error("field 'task': required string");
        c.task = j.at("task").get<std::string>();
        static const char* tasks[] = {"enumerate", "wilson",  "charges",          "pde-solve",
                                      "pde-wilson", "dictionary", "count-partitions", "verify",
                                      "transport"};
        bool ok = false;
        for (auto* t : tasks)
            if (c.task == t) ok = true;
        if (!ok) throw config_error("field 'task': unknown task '" + c.task + "'");
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("jobs")) {
            int n = j.at("jobs").get<int>();
            if (n < 1) throw config_error("field 'jobs': must be positive");
            c.jobs = static_cast<unsigned>(n);
        }
        // environment overrides: output location and parallelism only
        if (const char* e = std::getenv("MONOLAB_OUTPUT_DIR")) c.output_dir = e;
        if (const char* e = std::getenv("MONOLAB_JOBS")) c.jobs = std::max(1, std::atoi(e));
        // tolerances, when present, must be positive
        if (j.contains("tolerances"))
            for (auto& [k, v] : j.at("tolerances").items())
                if (!v.is_number() || v.get<double>() <= 0)
                    throw config_error("field 'tolerances." + k + "': must be positive");
        return c;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw config_error("cannot open config file '" + path + "'");
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw config_error(std::string("config parse: ") + e.what());
        }
        return parse(j);
    }

    /// canonical serialization (sorted keys, 2-space indent)
    std::string canonical() const { return doc.dump(2) + "\n"; }

    double tolerance(const std::string& name, double dflt) const {
        if (doc.contains("tolerances") && doc.at("tolerances").contains(name))
            return doc.at("tolerances").at(name).get<double>();
        return dflt;
    }
};

struct RunRecord {
    nlohmann::json config;
    std::string version = artifact_version;
    std::string status = "ok";
    long timing_ms = 0;
    struct Output {
        std::string path;
        std::uint64_t bytes;
        std::string sha256;
    };
    std::vector<Output> outputs;

    nlohmann::json to_json() const {
        nlohmann::json outs = nlohmann::json::array();
        for (auto& o : outputs)
            outs.push_back({{"path", o.path}, {"bytes", o.bytes}, {"sha256", o.sha256}});
        return {{"config", config},
                {"version", version},
                {"status", status},
                {"timing_ms", timing_ms},
                {"outputs", outs}};
    }
};

namespace rundetail {

inline std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void register_output(RunRecord& rec, const std::string& path) {
    auto bytes = slurp(path);
    rec.outputs.push_back({path, bytes.size(), sha256_hex(bytes)});
}

inline void write_text(RunRecord& rec, const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("cannot open '" + path + "' for writing");
    os << text;
    os.close();
    register_output(rec, path);
}

inline SphereData sphere_from_config(const nlohmann::json& j) {
    if (!j.contains("sphere")) throw config_error("field 'sphere': required");
    auto& s = j.at("sphere");
    Regime reg = Regime::symmetric;
    if (s.contains("regime")) {
        auto r = s.at("regime").get<std::string>();
        if (r == "unitary") reg = Regime::unitary;
        else if (r != "symmetric") throw config_error("field 'sphere.regime': unknown regime");
    }
    if (s.contains("z")) return sphere_from_json(s);
    if (!s.contains("a") || s.at("a").size() < 2)
        throw config_error("field 'sphere.a': need at least [a1, a2]");
    return SphereData::default_frame(s.at("a")[0].get<double>(), s.at("a")[1].get<double>(), reg);
}

inline std::array<double, 3> delta_from_config(const nlohmann::json& j) {
    if (!j.contains("delta") || j.at("delta").size() != 3)
        throw config_error("field 'delta': need [d1, d2, d3]");
    return {j.at("delta")[0].get<double>(), j.at("delta")[1].get<double>(),
            j.at("delta")[2].get<double>()};
}

inline FuchsianOperator operator_from_config(const nlohmann::json& j) {
    if (j.contains("operator_file")) return fuchsian_from_json(
        nlohmann::json::parse(slurp(j.at("operator_file").get<std::string>())));
    if (j.contains("operator")) return fuchsian_from_json(j.at("operator"));
    // assembled from sphere + delta (+ apparent)
    auto sphere = sphere_from_config(j);
    auto delta = delta_from_config(j);
    std::vector<ApparentPair> ap;
    if (j.contains("apparent"))
        for (auto& p : j.at("apparent"))
            ap.push_back({cplx_from_json(p.at("x")), cplx_from_json(p.at("c"))});
    return FuchsianOperator(sphere, delta, ap);
}

inline PathSpec loop_from_config(const nlohmann::json& j, const SphereData& sphere) {
    if (j.contains("path_file"))
        return path_from_json(nlohmann::json::parse(slurp(j.at("path_file").get<std::string>())));
    if (j.contains("path")) return path_from_json(j.at("path"));
    // default: a Pochhammer commutator
    int i = 0, jj = 1;
    cplx base{0.0};
    double radius = 0.0;
    if (j.contains("loop")) {
        auto& l = j.at("loop");
        if (l.contains("i")) i = l.at("i").get<int>();
        if (l.contains("j")) jj = l.at("j").get<int>();
        if (l.contains("base")) base = cplx_from_json(l.at("base"));
        if (l.contains("radius")) radius = l.at("radius").get<double>();
    }
    return pochhammer_loop(sphere, i, jj, base, radius);
}

inline std::vector<cplx> theta_grid_from_config(const nlohmann::json& j) {
    if (!j.contains("theta")) throw config_error("field 'theta': required");
    auto& t = j.at("theta");
    double lo = t.at("lo").get<double>(), hi = t.at("hi").get<double>();
    int points = t.at("points").get<int>();
    double imag = t.contains("imag") ? t.at("imag").get<double>() : 0.0;
    if (points < 2 || hi <= lo) throw config_error("field 'theta': need hi > lo, points >= 2");
    std::vector<cplx> g;
    for (int k = 0; k < points; ++k)
        g.push_back(cplx{lo + (hi - lo) * k / (points - 1.0), imag});
    return g;
}

} // namespace rundetail

// ---- task runners -------------------------------------------------------

inline void run_enumerate(const RunConfig& cfg, RunRecord& rec) {
    using namespace rundetail;
    auto sphere = sphere_from_config(cfg.doc);
    auto delta = delta_from_config(cfg.doc);
    if (!cfg.doc.contains("L")) throw config_error("field 'L': required");
    auto L = cfg.doc.at("L").get<std::size_t>();

    EnumerationStrategy strat;
    strat.seed = cfg.seed;
    strat.jobs = cfg.jobs;
    strat.newton.tol = cfg.tolerance("newton", 1e-12);
    strat.oracle_tol = cfg.tolerance("oracle", 1e-6);
    if (cfg.doc.contains("budget")) {
        auto& b = cfg.doc.at("budget");
        if (b.contains("max_solves")) strat.max_solves = b.at("max_solves").get<std::size_t>();
        if (b.contains("random_tuples")) strat.random_tuples = b.at("random_tuples").get<std::size_t>();
    }
    auto set = enumerate_moduli(sphere, delta, L, strat);

    std::string dir = cfg.output_dir;
    write_text(rec, dir + "/moduli.json", to_json(set).dump(2) + "\n");
    write_moduli_svg(set, dir + "/moduli_scatter.svg");
    register_output(rec, dir + "/moduli_scatter.svg");

    std::ostringstream sum;
    auto expected = partition_count(static_cast<unsigned>(L), 3);
    sum << "moduli enumeration: L = " << L << "\n"
        << "found " << set.points.size() << ", expected p3(" << L << ") = " << expected << "\n"
        << "seeds tried " << set.seeds_tried << ", converged " << set.converged
        << ", oracle rejections " << set.oracle_rejected << "\n";
    if (!generic_parameters(sphere.exponents(), delta))
        sum << "warning: parameters fail the genericity heuristic\n";
    sum << "\n  #   residual      oracle-dev    positions\n";
    for (std::size_t i = 0; i < set.points.size(); ++i) {
        char line[160];
        std::snprintf(line, sizeof line, "%3zu   %.3e     %.3e", i, set.points[i].residual,
                      set.oracle_deviation[i]);
        sum << line;
        for (auto& ap : set.points[i].op.apparent()) {
            char pos[64];
            std::snprintf(pos, sizeof pos, "  (%+.6f%+.6fi)", ap.x.real(), ap.x.imag());
            sum << pos;
        }
        sum << "\n";
    }

    // optional: charge spectrum per point, with the pairwise separation
    // recorded (degeneracies are reported, never assumed away)
    if (cfg.doc.contains("charges_per_point") && cfg.doc.at("charges_per_point").get<bool>()) {
        auto spectra = moduli_charge_spectra(set, cfg.tolerance("transport", 1e-11), cfg.jobs);
        sum << "\n  #   q1                         q3\n";
        for (std::size_t i = 0; i < spectra.size(); ++i) {
            char line[160];
            std::snprintf(line, sizeof line, "%3zu   %+.6f%+.6fi   %+.6f%+.6fi\n", i,
                          spectra[i].q[0].real(), spectra[i].q[0].imag(), spectra[i].q[1].real(),
                          spectra[i].q[1].imag());
            sum << line;
        }
        double sep = 1e300;
        for (std::size_t i = 0; i < spectra.size(); ++i)
            for (std::size_t j = i + 1; j < spectra.size(); ++j)
                sep = std::min(sep, std::abs(spectra[i].q[0] - spectra[j].q[0]) +
                                        std::abs(spectra[i].q[1] - spectra[j].q[1]));
        if (spectra.size() > 1) {
            char line[120];
            std::snprintf(line, sizeof line, "min pairwise spectral separation %.3e%s\n", sep,
                          sep < 1e-6 ? "  [degenerate spectra recorded]" : "");
            sum << line;
        }
    }
    write_text(rec, dir + "/summary.txt", sum.str());
    if (set.points.size() != expected) rec.status = "count-mismatch";
}

inline void run_wilson(const RunConfig& cfg, RunRecord& rec, bool pde_mode) {
    using namespace rundetail;
    std::string dir = cfg.output_dir;
    ScanResult scan;
    SphereData sphere = SphereData::default_frame(0.5, 0.5); // replaced below
    if (pde_mode) {
        if (!cfg.doc.contains("checkpoint")) throw config_error("field 'checkpoint': required");
        auto field = load_field(cfg.doc.at("checkpoint").get<std::string>());
        sphere = field.sphere;
        auto loop = loop_from_config(cfg.doc, sphere);
        auto grid = theta_grid_from_config(cfg.doc);
        TransportOptions topts{.tol = cfg.tolerance("transport", 1e-10)};
        scan = wilson_scan_pde(field, field.rho, grid, loop, topts, cfg.jobs);
    } else {
        auto op = operator_from_config(cfg.doc);
        sphere = op.sphere();
        auto loop = loop_from_config(cfg.doc, sphere);
        auto grid = theta_grid_from_config(cfg.doc);
        cplx lb2{1.0};
        if (cfg.doc.contains("lambda_bar_scale2"))
            lb2 = cfg.doc.at("lambda_bar_scale2").is_number()
                      ? cplx{cfg.doc.at("lambda_bar_scale2").get<double>(), 0.0}
                      : cplx_from_json(cfg.doc.at("lambda_bar_scale2"));
        TransportOptions topts{.tol = cfg.tolerance("transport", 1e-10)};
        scan = wilson_scan_ode(op, grid, loop, lb2, topts, cfg.jobs);
    }
    write_scan_csv(scan, dir + "/scan.csv");
    register_output(rec, dir + "/scan.csv");
    if (scan.truncated) rec.status = "truncated";

    std::optional<ChargeSpectrum> cs;
    if (cfg.doc.contains("charges")) {
        int N = cfg.doc.at("charges").contains("N") ? cfg.doc.at("charges").at("N").get<int>() : 4;
        ChargeSide side = ChargeSide::positive;
        if (cfg.doc.at("charges").contains("side") &&
            cfg.doc.at("charges").at("side").get<std::string>() == "negative")
            side = ChargeSide::negative;
        cs = extract_charges(scan.samples, N, side);
        write_text(rec, dir + "/charges.json", to_json(*cs).dump(2) + "\n");
    }
    write_logw_svg(scan, dir + "/logW.svg", cs ? &*cs : nullptr);
    register_output(rec, dir + "/logW.svg");
}

inline void run_charges(const RunConfig& cfg, RunRecord& rec) {
    using namespace rundetail;
    if (!cfg.doc.contains("scan_file")) throw config_error("field 'scan_file': required");
    auto scan = read_scan_csv(cfg.doc.at("scan_file").get<std::string>());
    int N = cfg.doc.contains("N") ? cfg.doc.at("N").get<int>() : 4;
    ChargeSide side = ChargeSide::positive;
    if (cfg.doc.contains("side") && cfg.doc.at("side").get<std::string>() == "negative")
        side = ChargeSide::negative;
    double lo = -1e300, hi = 1e300;
    if (cfg.doc.contains("window")) {
        lo = cfg.doc.at("window")[0].get<double>();
        hi = cfg.doc.at("window")[1].get<double>();
    }
    std::vector<ScanSample> in;
    for (auto& s : scan.samples)
        if (s.theta.real() >= lo && s.theta.real() <= hi) in.push_back(s);
    auto cs = extract_charges(in, N, side);
    write_text(rec, cfg.output_dir + "/charges.json", to_json(cs).dump(2) + "\n");
    if (!cs.reliable) rec.status = "unreliable-fit";
}

inline void run_pde_solve(const RunConfig& cfg, RunRecord& rec) {
    using namespace rundetail;
    auto sphere = sphere_from_config(cfg.doc);
    if (!cfg.doc.contains("m")) throw config_error("field 'm': required");
    std::vector<double> m = cfg.doc.at("m").get<std::vector<double>>();
    if (!cfg.doc.contains("rho")) throw config_error("field 'rho': required");
    double rho = cfg.doc.at("rho").get<double>();

    MeshSpec spec;
    if (cfg.doc.contains("mesh")) {
        auto& ms = cfg.doc.at("mesh");
        if (ms.contains("n")) spec.n = ms.at("n").get<int>();
        if (ms.contains("core_factor")) spec.core_factor = ms.at("core_factor").get<double>();
        if (ms.contains("tail_decades")) spec.tail_decades = ms.at("tail_decades").get<double>();
    }
    SolveOptions opt;
    opt.tol = cfg.tolerance("pde", 1e-10);

    std::optional<MShGField> field;
    std::vector<double> chain;
    if (cfg.doc.contains("rho_chain")) chain = cfg.doc.at("rho_chain").get<std::vector<double>>();
    for (double r : chain) {
        field = field ? solve_vacuum(sphere, m, r, spec, opt, &*field)
                      : solve_vacuum(sphere, m, r, spec, opt);
    }
    field = field ? solve_vacuum(sphere, m, rho, spec, opt, &*field)
                  : solve_vacuum(sphere, m, rho, spec, opt);

    std::string dir = cfg.output_dir;
    save_field(*field, dir + "/field.mshg");
    register_output(rec, dir + "/field.mshg");

    std::ostringstream rep;
    rep << "vacuum solve: rho = " << rho << ", mesh n = " << spec.n << "\n"
        << "newton iterations " << field->diag.newton_iterations << ", residual "
        << field->diag.final_residual << "\n"
        << "chart residual (outside cores) " << residual_norm(*field) << "\n\n"
        << "boundary profile fits (exponent p in e^{-eta} ~ r^p):\n";
    for (auto& bf : boundary_profile_check(*field)) {
        char line[160];
        std::snprintf(line, sizeof line, "  %-9s fitted %+.6f  target %+.6f  deviation %.2e%s\n",
                      bf.location.c_str(), bf.fitted_exponent, bf.target_exponent, bf.deviation,
                      bf.resolved ? "" : "  [under-resolved]");
        rep << line;
    }
    write_text(rec, dir + "/boundary_report.txt", rep.str());
}

inline void run_dictionary(const RunConfig& cfg, RunRecord& rec, std::string* stdout_text) {
    if (!cfg.doc.contains("a") || cfg.doc.at("a").size() != 3)
        throw config_error("field 'a': need [a1, a2, a3]");
    std::array<double, 3> a{cfg.doc.at("a")[0].get<double>(), cfg.doc.at("a")[1].get<double>(),
                            cfg.doc.at("a")[2].get<double>()};
    if (!cfg.doc.contains("m")) throw config_error("field 'm': required");
    std::vector<double> m = cfg.doc.at("m").get<std::vector<double>>();
    if (!cfg.doc.contains("rho")) throw config_error("field 'rho': required");
    double rho = cfg.doc.at("rho").get<double>();
    Regime reg = Regime::symmetric;
    if (cfg.doc.contains("regime") && cfg.doc.at("regime").get<std::string>() == "unitary")
        reg = Regime::unitary;
    auto d = dictionary(a, m, rho, reg);
    rundetail::write_text(rec, cfg.output_dir + "/dictionary.json", to_json(d).dump(2) + "\n");
    if (stdout_text) {
        std::ostringstream ss;
        ss << "alpha^2 = (" << d.alpha2[0] << ", " << d.alpha2[1] << ", " << d.alpha2[2] << ")\n";
        ss << "k = (";
        for (std::size_t i = 0; i < d.k.size(); ++i) ss << (i ? ", " : "") << d.k[i];
        ss << ")\nmuR = " << d.muR << "\n";
        if (d.regime == Regime::unitary) ss << "b^2 = " << d.b2 << "\n";
        *stdout_text = ss.str();
    }
}

inline void run_count_partitions(const RunConfig& cfg, RunRecord& rec, std::string* stdout_text) {
    if (!cfg.doc.contains("L")) throw config_error("field 'L': required");
    unsigned L = cfg.doc.at("L").get<unsigned>();
    unsigned kinds = cfg.doc.contains("kinds") ? cfg.doc.at("kinds").get<unsigned>() : 3;
    auto v = partition_count(L, kinds);
    rundetail::write_text(rec, cfg.output_dir + "/partitions.json",
                          nlohmann::json({{"L", L}, {"kinds", kinds}, {"count", v}}).dump(2) + "\n");
    if (stdout_text) *stdout_text = std::to_string(v) + "\n";
}

inline void run_transport(const RunConfig& cfg, RunRecord& rec, std::string* stdout_text) {
    using namespace rundetail;
    auto op = operator_from_config(cfg.doc);
    PathSpec path;
    if (cfg.doc.contains("path_file"))
        path = path_from_json(nlohmann::json::parse(slurp(cfg.doc.at("path_file").get<std::string>())));
    else if (cfg.doc.contains("path"))
        path = path_from_json(cfg.doc.at("path"));
    else
        throw config_error("field 'path' or 'path_file': required");
    cplx l2{0.0};
    if (cfg.doc.contains("lambda2")) l2 = cplx_from_json(cfg.doc.at("lambda2"));
    TransportOptions topts{.tol = cfg.tolerance("transport", 1e-10)};
    auto tm = transport(op, l2, path, topts);
    nlohmann::json out = {{"matrix", {to_json(tm.m.a), to_json(tm.m.b), to_json(tm.m.c), to_json(tm.m.d)}},
                          {"det_defect", tm.det_defect()},
                          {"tol_est", tm.tol_est},
                          {"steps", tm.steps},
                          {"lambda2", to_json(l2)}};
    write_text(rec, cfg.output_dir + "/transport.json", out.dump(2) + "\n");
    if (stdout_text) *stdout_text = out.dump(2) + "\n";
}

// ---- verification suite (fast invariant sweep) ----------------------------

struct VerifyRow {
    std::string name;
    bool pass;
    std::string detail;
};

inline std::vector<VerifyRow> run_verify_suite(std::uint64_t seed, unsigned jobs);

inline void run_verify(const RunConfig& cfg, RunRecord& rec, std::string* stdout_text) {
    auto rows = run_verify_suite(cfg.seed, cfg.jobs);
    std::ostringstream ss;
    bool all = true;
    ss << "invariant suite\n---------------\n";
    for (auto& r : rows) {
        char line[200];
        std::snprintf(line, sizeof line, "%-44s %s   %s\n", r.name.c_str(),
                      r.pass ? "PASS" : "FAIL", r.detail.c_str());
        ss << line;
        all = all && r.pass;
    }
    ss << (all ? "\nall suites passed\n" : "\nFAILURES present\n");
    rundetail::write_text(rec, cfg.output_dir + "/verify_report.txt", ss.str());
    if (stdout_text) *stdout_text = ss.str();
    if (!all) rec.status = "verify-failed";
}

// ---- dispatch --------------------------------------------------------------

inline RunRecord run(const RunConfig& cfg, std::string* stdout_text = nullptr) {
    RunRecord rec;
    rec.config = cfg.doc;
    auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(cfg.output_dir);

    if (cfg.task == "enumerate") run_enumerate(cfg, rec);
    else if (cfg.task == "wilson") run_wilson(cfg, rec, false);
    else if (cfg.task == "pde-wilson") run_wilson(cfg, rec, true);
    else if (cfg.task == "charges") run_charges(cfg, rec);
    else if (cfg.task == "pde-solve") run_pde_solve(cfg, rec);
    else if (cfg.task == "dictionary") run_dictionary(cfg, rec, stdout_text);
    else if (cfg.task == "count-partitions") run_count_partitions(cfg, rec, stdout_text);
    else if (cfg.task == "transport") run_transport(cfg, rec, stdout_text);
    else if (cfg.task == "verify") run_verify(cfg, rec, stdout_text);
    else throw config_error("unhandled task '" + cfg.task + "'");

    rec.timing_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    std::ofstream os(cfg.output_dir + "/run_record.json");
    os << rec.to_json().dump(2) << "\n";
    return rec;
}

// ---- the verify suite body --------------------------------------------------

inline std::vector<VerifyRow> run_verify_suite(std::uint64_t seed, unsigned jobs) {
    std::vector<VerifyRow> rows;
    char buf[160];
    auto add = [&](const std::string& name, bool pass, const std::string& detail) {
        rows.push_back({name, pass, detail});
    };

    // partitions against brute force (frozen small values)
    {
        bool ok = partition_count(0, 3) == 1 && partition_count(1, 3) == 3 &&
                  partition_count(2, 3) == 9 && partition_count(3, 3) == 22 &&
                  partition_count(5, 1) == 7;
        add("partition generating function", ok, "p3(0..3), p1(5)");
    }
    // quadratic-differential covariance
    {
        auto s = SphereData::default_frame(0.83, 0.55);
        Rng rng(seed + 1);
        int checked = 0, passed = 0;
        for (int t = 0; t < 30 && checked < 8; ++t) {
            Mobius m{cplx{rng.uniform(-1, 1), rng.uniform(-1, 1)},
                     cplx{rng.uniform(-1, 1), rng.uniform(-1, 1)},
                     cplx{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)},
                     cplx{1.0 + rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)}};
            if (std::abs(m.det()) < 0.2) continue;
            try {
                auto pushed = mobius_pushforward(s, m);
                cplx anchor = s.branch_anchor();
                cplx z{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
                BranchState b(s, anchor);
                BranchState bp(pushed, m(anchor));
                const int steps = 40;
                for (int k = 1; k <= steps; ++k) {
                    cplx p = anchor + (z - anchor) * (static_cast<double>(k) / steps);
                    b = b.continue_to(s, p);
                    bp = bp.continue_to(pushed, m(p));
                }
                cplx lhs = eval_P(pushed, m(z), bp) * sqr(m.deriv(z));
                cplx rhs = eval_P(s, z, b);
                ++checked;
                if (std::abs(lhs - rhs) < 1e-10 * (1.0 + std::abs(rhs))) ++passed;
            } catch (const error&) {
                continue;
            }
        }
        std::snprintf(buf, sizeof buf, "%d/%d draws", passed, checked);
        add("quadratic-differential covariance", checked >= 6 && passed == checked, buf);
    }
    // analytic monodromy trace
    {
        Rng rng(seed + 2);
        double worst = 0;
        for (int k = 0; k < 3; ++k) {
            double d1 = rng.uniform(-0.2, 2.0);
            double disc = std::sqrt(1.0 + 4.0 * d1);
            if (std::abs(disc - std::round(disc)) < 1e-3) continue;
            FuchsianOperator op(SphereData::default_frame(0.7, 0.6), {d1, 0.0, 0.0});
            double radius = 0.1 * op.sphere().min_separation();
            auto tm = monodromy_around(op, cplx{0.0}, op.sphere().puncture(0), radius,
                                       op.sphere().puncture(0) + 2.5 * radius, {.tol = 1e-12});
            cplx expected = -2.0 * std::cos(pi * std::sqrt(cplx{1.0 + 4.0 * d1}));
            worst = std::max(worst, std::abs(tm.m.trace() - expected));
        }
        std::snprintf(buf, sizeof buf, "max dev %.1e", worst);
        add("Frobenius monodromy trace", worst < 1e-8, buf);
    }
    // transport group properties
    {
        auto s = SphereData::default_frame(0.8, 0.45);
        FuchsianOperator op(s, {0.3, 0.45, 0.1});
        auto loop = pochhammer_loop(s, 0, 1, cplx{0.0});
        auto t1 = transport(op, cplx{0.4, 0.2}, loop, {.tol = 1e-11});
        auto t2 = transport(op, cplx{0.4, 0.2}, loop.then(loop), {.tol = 1e-11});
        double dev = dist_inf(t2.m, t1.m * t1.m) / (1.0 + sqr(t1.m.norm_inf()));
        std::snprintf(buf, sizeof buf, "dev %.1e, det defect %.1e", dev, t1.det_defect());
        add("transport group property and det", dev < 1e-7 && t1.det_defect() < 1e-7, buf);
    }
    // Wilson invariance
    {
        auto s = SphereData::default_frame(0.8, 0.45);
        FuchsianOperator op(s, {0.3, 0.45, 0.1});
        cplx w1 = wilson_trace(op, cplx{1.3, 0.4}, pochhammer_loop(s, 0, 1, cplx{0.0}), {.tol = 1e-11});
        cplx w2 = wilson_trace(op, cplx{1.3, 0.4}, pochhammer_loop(s, 0, 1, cplx{0.12, -0.2}, 0.13),
                               {.tol = 1e-11});
        std::snprintf(buf, sizeof buf, "rel dev %.1e", rel_diff(w1, w2));
        add("Wilson contour invariance (ODE)", rel_diff(w1, w2) < 1e-6, buf);
    }
    // moduli counting at L = 1
    {
        auto s = SphereData::default_frame(0.83, 0.57);
        EnumerationStrategy st;
        st.seed = seed;
        st.jobs = jobs;
        auto set = enumerate_moduli(s, {0.21, -0.13, 0.34}, 1, st);
        double worst = 0;
        for (auto& d : set.oracle_deviation) worst = std::max(worst, d);
        std::snprintf(buf, sizeof buf, "found %zu, worst oracle dev %.1e", set.points.size(), worst);
        add("moduli cardinality p3(1)", set.points.size() == 3 && worst < 1e-6, buf);
    }
    // charge extraction on synthetic data
    {
        const cplx C{1.37, 0.21}, q1{-0.52, 0.83};
        std::vector<ScanSample> samples;
        for (int k = 0; k < 24; ++k) {
            double th = 2.0 + k / 23.0;
            samples.push_back({cplx{th, 0.0}, std::exp(C * std::exp(th) + q1 * std::exp(-th)), 0.0});
        }
        auto cs = extract_charges(samples, 2);
        bool ok = std::abs(cs.C - C) < 1e-8 && std::abs(cs.q[0] - q1) < 1e-8;
        std::snprintf(buf, sizeof buf, "C dev %.1e", std::abs(cs.C - C));
        add("charge extraction synthetic recovery", ok, buf);
    }
    // dictionary checks
    {
        auto d = dictionary({0.8, 0.7, 0.5}, {-0.4, -0.45, -0.5}, 0.3);
        bool ok = std::abs(d.k[0] - 0.25) < 1e-14 && std::abs(d.muR - 0.6) < 1e-15 &&
                  std::abs(d.alpha2[0] + d.alpha2[1] + d.alpha2[2] - 0.5) < 1e-14;
        bool rejected = false;
        try {
            dictionary({0.8, 0.7, 0.5}, {-0.2, -0.45, -0.5}, 0.3);
        } catch (const domain_error&) {
            rejected = true;
        }
        add("parameter dictionary and domain guard", ok && rejected, "formulas exact");
    }
    // constant-coefficient patch
    {
        auto [dev, resid] = solve_constant_patch(0.7, 1.3, 32);
        std::snprintf(buf, sizeof buf, "dev %.1e resid %.1e", dev, resid);
        add("MShG constant-patch exact solution", dev < 1e-9 && resid < 1e-10, buf);
    }
    // small vacuum solve and boundary exponents
    {
        auto s = SphereData::default_frame(2.0 / 3, 2.0 / 3);
        MeshSpec spec;
        spec.n = 48;
        auto f = solve_vacuum(s, {-0.4, -0.4, -0.4}, 1.0, spec);
        double worst = 0;
        bool resolved = true;
        for (auto& bf : boundary_profile_check(f)) {
            worst = std::max(worst, bf.deviation);
            resolved = resolved && bf.resolved;
        }
        std::snprintf(buf, sizeof buf, "residual %.1e, worst exponent dev %.1e",
                      residual_norm(f), worst);
        add("vacuum solve and boundary exponents", resolved && worst < 5e-3 && residual_norm(f) < 1e-9,
            buf);
    }
    // massive Wilson loop on the solved field
    {
        auto s = SphereData::default_frame(0.83, 0.57);
        MeshSpec spec;
        spec.n = 48;
        auto f = solve_vacuum(s, {-0.40, -0.38, -0.42}, 0.7, spec);
        TransportOptions topts{.tol = 1e-10};
        auto spt = SpectralPoint::from_theta(0.7, cplx{0.6, 0.25});
        cplx wA = pde_wilson(f, spt, pochhammer_loop(s, 0, 1, cplx{0.0}, 0.36), topts);
        cplx wB = pde_wilson(f, spt, pochhammer_loop(s, 0, 1, cplx{0.08, -0.05}, 0.42), topts);
        cplx wPi = pde_wilson(f, SpectralPoint::from_theta(0.7, cplx{0.6, 0.25 + pi}),
                              pochhammer_loop(s, 0, 1, cplx{0.0}, 0.36), topts);
        double shape = std::abs(wA - wB) / (1.0 + std::abs(wA));
        double per = std::abs(wPi - wA) / (1.0 + std::abs(wA));
        std::snprintf(buf, sizeof buf, "shape dev %.1e, periodicity %.1e", shape, per);
        add("massive Wilson invariance", shape < 1e-3 && per < 1e-6, buf);
    }
    return rows;
}

} // namespace monolab
