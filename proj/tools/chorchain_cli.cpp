#include "chorchain/audit.hpp"
#include "chorchain/harness.hpp"
#include "chorchain/log.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace chorchain;

namespace {

/// "1".."4" selects an embedded model; anything else is a JSON file.
ProcessModel resolve_model(const std::string& arg)
{
    if (arg.size() == 1 && arg[0] >= '1' && arg[0] <= '4')
        return evaluation_model(arg[0] - '0');
    return ProcessModel::load_file(arg);
}

std::optional<std::size_t> parse_fault(const std::string& s)
{
    if (s == "none")
        return std::nullopt;
    return std::stoul(s);
}

bool on_off(const std::string& s) { return s == "on"; }

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    if (!in)
        throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spill(const fs::path& p, const std::string& text)
{
    std::ofstream out(p);
    if (!out)
        throw std::runtime_error("cannot write " + p.string());
    out << text;
}

struct RunArgs {
    std::string model = "1";
    std::string variant = "first";
    std::string verify = "on";
    std::string greedy = "off";
    std::string fault = "none";
    std::uint64_t seed = 1;
    double block_mean = 6.0;
    std::uint64_t fee = FeePolicy{}.per_tx_fee;
    std::size_t reps = 1;
    std::string out = "out";
    bool serial = false;
    std::size_t dumps = 1;
};

int cmd_run(const RunArgs& a)
{
    const ProcessModel model = resolve_model(a.model);
    ScenarioConfig cfg;
    cfg.model = &model;
    cfg.variant = a.variant;
    cfg.verify = on_off(a.verify);
    cfg.greedy = on_off(a.greedy);
    cfg.fault_step = parse_fault(a.fault);
    cfg.seed = a.seed;
    cfg.block_mean = a.block_mean;
    cfg.fee.per_tx_fee = a.fee;
    cfg.reps = a.reps;

    fs::create_directories(a.out);
    auto runs = a.serial ? run_batch_serial(cfg) : run_batch(cfg);

    std::string csv = metrics_csv_header() + "\n";
    for (const auto& r : runs)
        csv += metrics_csv_row(r) + "\n";
    spill(fs::path(a.out) / "metrics.csv", csv);

    const Summary s = summarize(runs);
    spill(fs::path(a.out) / "summary.json", summary_json(s, &cfg) + "\n");

    if (cfg.verify) {
        cfg.keep_dump = true;
        for (std::size_t i = 0; i < std::min(a.dumps, a.reps); ++i) {
            const auto seed = cfg.seed + i;
            spill(fs::path(a.out) / fmt::format("chain-{}.dump", seed), run_scenario(cfg, seed).dump);
        }
    }
    std::cout << summary_table(s);
    for (const auto& r : runs)
        if (r.aborted && !r.fault_step)
            spdlog::warn("seed {} aborted: {}", r.seed, r.abort_reason);
    return 0;
}

int cmd_summarize(const std::string& dir)
{
    std::vector<RunMetrics> runs;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        std::cerr << "no metrics files under " << dir << "\n";
        return 1;
    }
    for (const auto& f : files) {
        auto part = parse_metrics_csv(slurp(f));
        runs.insert(runs.end(), part.begin(), part.end());
    }
    std::cout << summary_table(summarize(runs));
    return 0;
}

int cmd_audit(const std::string& chain, const std::string& model_spec)
{
    const ProcessModel model = resolve_model(model_spec);
    const AuditReport report = audit_chain(load_dump_file(chain), model);
    std::cout << format_report(report);
    return report.clean() ? 0 : 2;
}

} // namespace

int main(int argc, char** argv)
{
    init_logging();
    CLI::App app{"Run, summarize and audit simulated choreography executions"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "execute scenario repetitions");
    run_cmd->add_option("--model", run.model, "1-4 or a model JSON file");
    run_cmd->add_option("--variant", run.variant, "first, last or <xor id>=<branch>,...");
    run_cmd->add_option("--verify", run.verify)->check(CLI::IsMember({"on", "off"}));
    run_cmd->add_option("--greedy", run.greedy)->check(CLI::IsMember({"on", "off"}));
    run_cmd->add_option("--fault-step", run.fault, "handover index (1-based) or none");
    run_cmd->add_option("--seed", run.seed);
    run_cmd->add_option("--block-mean", run.block_mean, "mean block interval in seconds")->check(CLI::PositiveNumber);
    run_cmd->add_option("--fee", run.fee, "fee per transaction in satoshi");
    run_cmd->add_option("--reps", run.reps)->check(CLI::Range(std::size_t{1}, std::size_t{1'000'000}));
    run_cmd->add_option("--out", run.out, "output directory");
    run_cmd->add_option("--dumps", run.dumps, "chain dumps to keep");
    run_cmd->add_flag("--serial", run.serial, "run repetitions without OpenMP");

    std::string dir;
    auto* sum_cmd = app.add_subcommand("summarize", "aggregate metrics.csv files");
    sum_cmd->add_option("dir", dir)->required()->check(CLI::ExistingDirectory);

    std::string chain, model = "1";
    auto* audit_cmd = app.add_subcommand("audit", "verify a chain dump");
    audit_cmd->add_option("--chain", chain)->required()->check(CLI::ExistingFile);
    audit_cmd->add_option("--model", model, "1-4 or a model JSON file");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run_cmd)
            return cmd_run(run);
        if (*sum_cmd)
            return cmd_summarize(dir);
        return cmd_audit(chain, model);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
