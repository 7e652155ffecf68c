// monolab command-line front end: every subcommand builds a JSON run
// configuration (from --config plus any explicit flags) and hands it to
// the library runner. Exit codes: 0 success, 2 configuration error,
// 3 computation error, 4 verification failure.

#include <CLI11.hpp>

#include <monolab/runner.hpp>

#include <cstdio>
#include <iostream>

using namespace monolab;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string output_dir;
    int jobs = 0;
    long long seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "JSON run configuration file");
    cmd->add_option("--output", a.output_dir, "output directory (overrides config)");
    cmd->add_option("--jobs", a.jobs, "worker pool size (overrides config)");
    cmd->add_option("--seed", a.seed, "random seed (overrides config)");
}

nlohmann::json base_config(const CommonArgs& a, const std::string& task) {
    nlohmann::json j;
    if (!a.config_path.empty()) {
        std::ifstream is(a.config_path);
        if (!is) throw config_error("cannot open config file '" + a.config_path + "'");
        is >> j;
    }
    j["task"] = task;
    if (!a.output_dir.empty()) j["output_dir"] = a.output_dir;
    if (a.jobs > 0) j["jobs"] = a.jobs;
    if (a.seed >= 0) j["seed"] = static_cast<std::uint64_t>(a.seed);
    return j;
}

int dispatch(const nlohmann::json& doc) {
    std::string text;
    RunConfig cfg = RunConfig::parse(doc);
    RunRecord rec = run(cfg, &text);
    if (!text.empty()) std::fputs(text.c_str(), stdout);
    if (rec.status == "ok") return 0;
    std::fprintf(stderr, "status: %s\n", rec.status.c_str());
    return rec.status == "verify-failed" ? 4 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for monodromy-free Fuchsian operators, Wilson loops\n"
                 "and the vacuum modified sinh-Gordon equation on the 3-punctured sphere"};
    app.require_subcommand(1);

    CommonArgs enum_args, wil_args, chg_args, pde_args, pwil_args, dict_args, cnt_args,
        ver_args, tr_args;

    auto* c_enum = app.add_subcommand("enumerate", "enumerate the moduli set A^(L)");
    add_common(c_enum, enum_args);
    int enum_L = -1;
    c_enum->add_option("--L", enum_L, "number of monodromy-free punctures");

    auto* c_wil = app.add_subcommand("wilson", "Wilson-loop scan over theta (ODE picture)");
    add_common(c_wil, wil_args);

    auto* c_chg = app.add_subcommand("charges", "extract conserved charges from a scan CSV");
    add_common(c_chg, chg_args);
    std::string chg_scan;
    c_chg->add_option("--scan", chg_scan, "scan CSV file");

    auto* c_tr = app.add_subcommand("transport", "transport a path for one operator");
    add_common(c_tr, tr_args);

    auto* c_pde = app.add_subcommand("pde-solve", "solve the vacuum MShG equation");
    add_common(c_pde, pde_args);

    auto* c_pwil = app.add_subcommand("pde-wilson", "Wilson-loop scan on a field checkpoint");
    add_common(c_pwil, pwil_args);
    std::string pwil_ckpt;
    c_pwil->add_option("--checkpoint", pwil_ckpt, "field checkpoint file");

    auto* c_dict = app.add_subcommand("dictionary", "classical/quantum parameter dictionary");
    add_common(c_dict, dict_args);
    std::vector<double> dict_a, dict_m;
    double dict_rho = 0;
    std::string dict_regime;
    c_dict->add_option("--a", dict_a, "exponents a1 a2 a3")->expected(3);
    c_dict->add_option("--m", dict_m, "m parameters (3 symmetric, 2 unitary)");
    c_dict->add_option("--rho", dict_rho, "rho > 0");
    c_dict->add_option("--regime", dict_regime, "symmetric|unitary");

    auto* c_cnt = app.add_subcommand("count-partitions", "k-colored partition count");
    add_common(c_cnt, cnt_args);
    int cnt_L = -1, cnt_kinds = 3;
    c_cnt->add_option("--L", cnt_L, "integer to partition")->required();
    c_cnt->add_option("--kinds", cnt_kinds, "number of part kinds");

    auto* c_ver = app.add_subcommand("verify", "run the invariant suites end-to-end");
    add_common(c_ver, ver_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_enum->parsed()) {
            auto j = base_config(enum_args, "enumerate");
            if (enum_L >= 0) j["L"] = enum_L;
            return dispatch(j);
        }
        if (c_wil->parsed()) return dispatch(base_config(wil_args, "wilson"));
        if (c_chg->parsed()) {
            auto j = base_config(chg_args, "charges");
            if (!chg_scan.empty()) j["scan_file"] = chg_scan;
            return dispatch(j);
        }
        if (c_tr->parsed()) return dispatch(base_config(tr_args, "transport"));
        if (c_pde->parsed()) return dispatch(base_config(pde_args, "pde-solve"));
        if (c_pwil->parsed()) {
            auto j = base_config(pwil_args, "pde-wilson");
            if (!pwil_ckpt.empty()) j["checkpoint"] = pwil_ckpt;
            return dispatch(j);
        }
        if (c_dict->parsed()) {
            auto j = base_config(dict_args, "dictionary");
            if (!dict_a.empty()) j["a"] = dict_a;
            if (!dict_m.empty()) j["m"] = dict_m;
            if (dict_rho > 0) j["rho"] = dict_rho;
            if (!dict_regime.empty()) j["regime"] = dict_regime;
            return dispatch(j);
        }
        if (c_cnt->parsed()) {
            auto j = base_config(cnt_args, "count-partitions");
            j["L"] = cnt_L;
            j["kinds"] = cnt_kinds;
            return dispatch(j);
        }
        if (c_ver->parsed()) return dispatch(base_config(ver_args, "verify"));
    } catch (const config_error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const domain_error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 3;
    }
    return 0;
}
