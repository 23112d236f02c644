// evolve-bench: run the platform's latency scenarios on emulated links,
// summarize result CSVs, or print the analytical transfer-time oracle.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "evolve/bench.hpp"
#include "evolve/errors.hpp"
#include "evolve/link.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct RunArgs {
    std::string scenario;
    std::string profile = "EVolve100";
    std::string transport = "ideal";
    int samples = 300;
    uint64_t seed = 1;
    std::string out_path;
    std::vector<int> bursts;
    std::string profiles_file;
    bool reconnect = false;
};

int cmd_run(const RunArgs& args) {
    evolve::Scenario sc;
    sc.name = evolve::scenario_from_string(args.scenario);
    sc.profile = args.profile;
    sc.transport.kind = evolve::transport_kind_from_string(args.transport);
    sc.samples = args.samples;
    sc.seed = args.seed;
    sc.reconnect_per_sample = args.reconnect;
    if (!args.bursts.empty()) sc.bursts = args.bursts;
    if (!args.profiles_file.empty())
        sc.extra_profiles = evolve::LinkProfile::load_file(args.profiles_file);
    sc.validate();
    evolve::LinkProfile::resolve(sc.profile, sc.extra_profiles);  // fail fast on bad names

    auto measurements = evolve::run_scenario(sc);

    std::ofstream out(args.out_path, std::ios::trunc);
    if (!out) throw evolve::ConfigError("cannot open output file: " + args.out_path);
    evolve::write_csv(out, measurements);

    auto rows = evolve::summarize(measurements);
    std::cout << evolve::render_table(rows);
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& files, const std::string& dat_path) {
    std::vector<evolve::Measurement> all;
    for (const auto& path : files) {
        std::ifstream in(path);
        if (!in) throw evolve::ConfigError("cannot open " + path);
        auto part = evolve::read_csv(in);
        all.insert(all.end(), part.begin(), part.end());
    }
    auto rows = evolve::summarize(all);
    std::cout << evolve::render_table(rows);
    if (!dat_path.empty()) {
        std::ofstream dat(dat_path, std::ios::trunc);
        if (!dat) throw evolve::ConfigError("cannot open " + dat_path);
        dat << evolve::render_dat(rows);
    }
    return kExitOk;
}

int cmd_oracle(const std::string& profile, const std::string& transport, uint64_t req,
               uint64_t resp, const std::string& profiles_file) {
    std::vector<evolve::LinkProfile> extra;
    if (!profiles_file.empty()) extra = evolve::LinkProfile::load_file(profiles_file);
    auto p = evolve::LinkProfile::resolve(profile, extra);
    evolve::TransportModel model;
    model.kind = evolve::transport_kind_from_string(transport);
    if (req < 1) throw evolve::UsageError("--req must be >= 1");
    double ms = evolve::model_transfer_time_ms(p, model, req, resp);
    std::cout.setf(std::ios::fixed);
    std::cout.precision(3);
    std::cout << ms << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EVolve VAS platform benchmark harness"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "run one scenario and write a CSV");
    run->add_option("--scenario", run_args.scenario,
                    "stability|updates|siem_upload|fl_pull|naive_payment|micropayments")
        ->required();
    run->add_option("--profile", run_args.profile, "link profile name (built-in or from file)");
    run->add_option("--transport", run_args.transport, "ideal|loss");
    run->add_option("--samples", run_args.samples, "samples per scenario (default 300)");
    run->add_option("--seed", run_args.seed, "deterministic seed");
    run->add_option("--out", run_args.out_path, "output CSV path")->required();
    run->add_option("--bursts", run_args.bursts, "micropayment burst counts")->delimiter(',');
    run->add_option("--profiles", run_args.profiles_file, "extra link profiles (JSON)");
    run->add_flag("--reconnect", run_args.reconnect, "reconnect before every sample");

    std::vector<std::string> report_files;
    std::string dat_path;
    auto* report = app.add_subcommand("report", "summarize measurement CSVs");
    report->add_option("files", report_files, "CSV files")->required()->expected(-1);
    report->add_option("--dat", dat_path, "also write a gnuplot-friendly .dat file");

    std::string oracle_profile, oracle_transport = "ideal", oracle_profiles;
    uint64_t oracle_req = 0, oracle_resp = 0;
    auto* oracle = app.add_subcommand("oracle", "print the analytical transfer time (ms)");
    oracle->add_option("--profile", oracle_profile)->required();
    oracle->add_option("--transport", oracle_transport);
    oracle->add_option("--req", oracle_req, "request bytes")->required();
    oracle->add_option("--resp", oracle_resp, "response bytes");
    oracle->add_option("--profiles", oracle_profiles, "extra link profiles (JSON)");

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(run_args);
        if (report->parsed()) return cmd_report(report_files, dat_path);
        if (oracle->parsed())
            return cmd_oracle(oracle_profile, oracle_transport, oracle_req, oracle_resp,
                              oracle_profiles);
        return kExitUsage;
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const evolve::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const evolve::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const evolve::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
