#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ekc/run.hpp"
#include "ekc/twin.hpp"

namespace {

constexpr const char* kVersion = "ekc 1.0.0";

void describe_prm_format(const std::string& kind) {
    if (kind.empty() || kind == "main") {
        std::cout <<
            "main parameter file:\n"
            "  MODE        = ENKF | ENOI            (mandatory)\n"
            "  SCHEME      = DENKF* | ETKF\n"
            "  ALPHA       = [0..1]                 (default 1)\n"
            "  MODEL GRID OBSTYPES OBS              (paths, mandatory)\n"
            "  DATE        = <days>                 (mandatory)\n"
            "  ENSDIR      = <dir>                  (mandatory)\n"
            "  BGDIR       = <dir>                  (mandatory for ENOI)\n"
            "  KFACTOR RFACTOR LOCRAD [WEIGHT] STRIDE SOBSTRIDE\n"
            "  INFLATION   = <mult> [<cap> | PLAIN] (default 1.0 0.5)\n"
            "  ZSTATINTS   = <z1> <z2> (repeatable)\n"
            "  REGION      = <name> <lon1> <lon2> <lat1> <lat2>\n"
            "  POINTLOG    = <i> <j> (repeatable)\n"
            "  BADBATCHES  = <type> <max bias> <max mad> <min nobs>\n";
    }
    if (kind.empty() || kind == "model") {
        std::cout <<
            "model parameter file:\n"
            "  NAME = <model name>\n"
            "  per variable: VAR = <name>, GRID = <grid name>,\n"
            "    INFLATION = <mult> [<cap> | PLAIN], RANDOMISE = <lambda> <sigma>\n";
    }
    if (kind.empty() || kind == "grid") {
        std::cout <<
            "grid parameter file:\n"
            "  NAME VTYPE(z) DATA XDIMNAME YDIMNAME ZDIMNAME\n"
            "  XVARNAME YVARNAME ZVARNAME DEPTHVARNAME NUMLEVELSVARNAME\n";
    }
    if (kind.empty() || kind == "obstypes") {
        std::cout <<
            "observation types parameter file, per type:\n"
            "  NAME VAR [VAR2] ISSURFACE HFUNCTION [OFFSET <file> <var>]\n"
            "  [ASYNC <days>] [LOCRAD ... [WEIGHT ...]] [RFACTOR]\n"
            "  [MINVALUE MAXVALUE XMIN XMAX YMIN YMAX ZMIN ZMAX]\n";
    }
    if (kind.empty() || kind == "obsdata") {
        std::cout <<
            "observation data parameter file, per product:\n"
            "  PRODUCT READER(csv) TYPE FILE (repeatable, glob patterns)\n"
            "  ERROR_STD = <value>|<file> <var> [EQUAL|PLUS|MULT|MIN|MAX]\n"
            "  PARAMETER <name> = <value>\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ensemble data assimilation toolkit"};
    app.set_version_flag("--version", kVersion);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: all cores)");
    std::string describe_kind;
    auto* describe = app.add_flag_function(
        "--describe-prm-format",
        [&describe_kind](std::int64_t) {
            describe_prm_format(describe_kind);
            std::exit(0);
        },
        "print the parameter file formats and exit");
    app.add_option("--prm-kind", describe_kind,
                   "restrict --describe-prm-format to one file kind")
        ->needs(describe);

    std::string prm_path, out_dir = ".";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("prm", prm_path, "main parameter file")->required();
        sub->add_option("--dir", out_dir, "working directory for outputs");
    };

    ekc::PrepOptions popt;
    auto* prep = app.add_subcommand("prep", "preprocess observations");
    add_common(prep);
    prep->add_flag("--consider-subgrid-variability", popt.consider_subgrid,
                   "inflate superob error by subgrid value spread");
    prep->add_flag("--log-all-obs", popt.log_all_obs,
                   "keep out-of-domain observations in observations-orig");
    prep->add_flag("--no-superobing", popt.no_superob, "skip superobing");
    prep->add_option("--describe-superob", popt.describe_superob,
                     "print the composition of this superobservation");

    ekc::CalcOptions copt;
    std::vector<double> sobs_xyz, sobs_ijk;
    std::string sobs_type = "V";
    auto* calc = app.add_subcommand("calc", "calculate ensemble transforms");
    add_common(calc);
    calc->add_flag("--forecast-stats-only", copt.forecast_stats_only,
                   "calculate and print forecast observation stats only");
    calc->add_flag("--ignore-no-obs", copt.ignore_no_obs, "proceed with no observations");
    calc->add_flag("--no-mean-update", copt.no_mean_update, "zero the mean-update weights");
    calc->add_flag("--point-logs-only", copt.point_logs_only, "write point logs only");
    calc->add_flag("--print-batch-stats", copt.print_batch_stats,
                   "print innovation stats per batch");
    calc->add_flag("--use-rmsd-for-obsstats", copt.use_rmsd,
                   "report RMSD instead of MAD");
    calc->add_option("--use-these-obs", copt.use_these_obs,
                     "assimilate this observation file");
    calc->add_option("--single-observation-xyz", sobs_xyz,
                     "<lon> <lat> <depth> <inn> <std>: assimilate a single observation, "
                     "value taken as the innovation")
        ->expected(5);
    calc->add_option("--single-observation-ijk", sobs_ijk,
                     "<fi> <fj> <fk> <inn> <std>: as above with grid indices")
        ->expected(5);
    calc->add_option("--single-observation-type", sobs_type,
                     "observation type for the single-observation modes");

    ekc::UpdateOptions uopt;
    auto* update = app.add_subcommand("update", "update the ensemble or background");
    add_common(update);
    update->add_flag("--output-increment", uopt.output_increment,
                     "write analysis increments");
    update->add_flag("--calculate-spread", uopt.calculate_spread,
                     "write forecast and analysis spread");
    update->add_flag("--no-fields-write", uopt.no_fields_write, "suppress field output");
    update->add_flag("--joint-output", uopt.joint_output,
                     "write analyses as \"_an\" variables next to the forecasts");
    update->add_flag("--write-inflation", uopt.write_inflation,
                     "write the applied inflation multiple");
    update->add_flag("--direct-write", uopt.direct_write, "accepted and ignored");
    update->add_flag("--leave-tiles", uopt.leave_tiles, "accepted and ignored");

    auto* stats = app.add_subcommand("stats", "forecast observation stats only");
    add_common(stats);
    bool stats_rmsd = false;
    stats->add_flag("--use-rmsd-for-obsstats", stats_rmsd, "report RMSD instead of MAD");

    std::string scenario;
    std::string twin_csv;
    auto* twin = app.add_subcommand("twin", "run a twin experiment");
    twin->add_option("scenario", scenario, "lorenz96 | linadv-oracle | enoi-lorenz96")
        ->required();
    twin->add_option("--csv", twin_csv, "write per-cycle metrics to this file");

    app.require_subcommand(0, 1);
    CLI11_PARSE(app, argc, argv);

    try {
        if (threads > 0) ekc::set_num_threads(threads);

        if (twin->parsed()) {
            ekc::TwinResult res = ekc::twin_run(scenario);
            if (!twin_csv.empty()) ekc::write_twin_csv(twin_csv, res);
            std::cout << res.scenario << ": " << res.message << " -> "
                      << (res.pass ? "ok" : "FAILED") << "\n";
            return res.pass ? 0 : 1;
        }
        if (!prep->parsed() && !calc->parsed() && !update->parsed() && !stats->parsed()) {
            std::cout << app.help();
            return 0;
        }

        ekc::DaConfig cfg = ekc::load_config(prm_path);
        if (prep->parsed()) {
            popt.out_dir = out_dir;
            ekc::prep_run(cfg, popt);
        } else if (calc->parsed()) {
            copt.out_dir = out_dir;
            if (!sobs_xyz.empty() || !sobs_ijk.empty()) {
                const auto& v = sobs_xyz.empty() ? sobs_ijk : sobs_xyz;
                ekc::SingleObs so;
                so.ijk = sobs_xyz.empty();
                so.a = v[0];
                so.b = v[1];
                so.c = v[2];
                so.innovation = v[3];
                so.std = v[4];
                so.type = sobs_type;
                copt.single_obs = so;
            }
            ekc::calc_run(cfg, copt);
        } else if (stats->parsed()) {
            copt = ekc::CalcOptions{};
            copt.out_dir = out_dir;
            copt.forecast_stats_only = true;
            copt.use_rmsd = stats_rmsd;
            ekc::calc_run(cfg, copt);
        } else if (update->parsed()) {
            uopt.out_dir = out_dir;
            ekc::update_run(cfg, uopt);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
