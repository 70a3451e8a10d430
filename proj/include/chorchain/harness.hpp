#pragma once

#include "chorchain/handover.hpp"
#include "chorchain/process_model.hpp"
#include "chorchain/tx_engine.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chorchain {

/// XOR choices for one run. "first" and "last" pick the same branch at every
/// XOR split; "x1=1,x3=0" names branches per split node id.
struct Variant {
    std::string name = "first";
    std::map<std::size_t, std::size_t> choice; // XOR split node index → branch

    static Variant parse(std::string_view choices, const ProcessModel& model);
    std::size_t branch_for(std::size_t node, std::size_t branches) const;

private:
    enum class Default { First, Last } fallback_ = Default::First;
};

// Plans -------------------------------------------------------------------------------

struct TokenRef {
    std::size_t step = 0;
    std::size_t output = 0;

    friend auto operator<=>(const TokenRef&, const TokenRef&) = default;
};

struct PlanStep {
    enum class Kind { Start, Handover, Split, Join, End };

    Kind kind = Kind::Handover;
    std::vector<TokenRef> inputs;
    std::string actor;    // holder performing the step
    std::string receiver; // handover target
    TaskId task = 0;      // task id written into the handover block
    std::size_t fanout = 1;
    /// Task the resulting token's holder performs before passing it on.
    std::optional<TaskId> runs_task;
    std::string lineage;
};

std::string_view to_string(PlanStep::Kind kind);

/// Participants are "owner" and "p<task id>".
struct Plan {
    std::vector<PlanStep> steps;

    std::size_t handover_count() const;
    /// Transactions after the start transaction.
    std::size_t tx_count() const;
    std::vector<std::string> participants() const;
};

/// Compiles a model and XOR choice into token moves. Throws ModelError for
/// shapes the harness does not drive: a split or join directly after an
/// AND-join, or an AND block closing a branch.
Plan compile_plan(const ProcessModel& model, const Variant& variant);

inline std::string participant_for(TaskId task) { return "p" + std::to_string(task); }

// Scenarios ---------------------------------------------------------------------------

struct ScenarioConfig {
    int model_id = 1;
    const ProcessModel* model = nullptr; // overrides model_id when set
    std::string variant = "first";
    bool verify = true;
    bool greedy = false;
    /// 1-based index into the plan's handovers; the sender announces the
    /// negotiated task but writes another one into the template.
    std::optional<std::size_t> fault_step;
    std::uint64_t seed = 1;
    double block_mean = 6.0;
    FeePolicy fee;
    std::size_t reps = 1;
    ProtocolCosts costs;
    bool keep_dump = false;

    const ProcessModel& resolved_model() const { return model ? *model : evaluation_model(model_id); }
};

/// Simulated task duration: 50–180 ms from the task id.
double base_task_duration(TaskId task);

struct RunMetrics {
    std::uint64_t seed = 0;
    int model_id = 0;
    std::string variant;
    bool verify = true;
    bool greedy = false;
    std::optional<std::size_t> fault_step;

    double duration = 0.0;  // simulated seconds from start to end confirmation
    double task_time = 0.0; // critical path of task durations alone
    std::size_t tx_count = 0;
    std::size_t handovers = 0;
    std::size_t tasks_covered = 0;
    std::vector<double> confirmation_waits; // per transaction, broadcast to depth 1
    std::uint64_t total_fees = 0;
    std::uint64_t start_budget = 0;
    std::uint64_t end_residual = 0;
    /// Token value left on outputs no step consumed, e.g. a sibling branch after an abort.
    std::uint64_t stranded_value = 0;
    PhaseTimes phases;

    bool completed = false; // an end transaction confirmed
    bool aborted = false;
    std::string abort_reason;
    bool detected = false; // receiver rejected at check 3 and an extraordinary end followed
    int rejected_check = 0;
    bool conformant = false;
    std::size_t identities_learned = 0;
    std::size_t identity_gaps = 0;
    std::size_t frames = 0;

    /// Fraction of each phase in the summed phase time.
    double phase_fraction(double PhaseTimes::*phase) const;
};

struct ScenarioResult {
    RunMetrics metrics;
    ExecutionTrace trace;
    std::string dump; // filled when keep_dump
};

/// One repetition with the given seed (the config's seed and reps are ignored).
ScenarioResult run_scenario(const ScenarioConfig& config, std::uint64_t seed);

/// Seeds config.seed .. config.seed + reps - 1, in order.
std::vector<RunMetrics> run_batch(const ScenarioConfig& config);
/// Reference implementation of run_batch without OpenMP.
std::vector<RunMetrics> run_batch_serial(const ScenarioConfig& config);

// Summaries -------------------------------------------------------------------------------

struct Summary {
    std::size_t runs = 0;
    double mean_duration = 0.0;
    double stddev_duration = 0.0;
    double median_confirmation = 0.0;
    double mean_confirmation = 0.0;
    double mean_fees = 0.0;
    double confirmation_share = 0.0; // of summed phase time, over all runs
    double logic_share = 0.0;
    double provider_share = 0.0;
    double broadcast_share = 0.0;
    double detection_rate = 0.0; // among fault runs
    double conformant_rate = 0.0;
    double mean_tx_count = 0.0;
};

Summary summarize(const std::vector<RunMetrics>& runs);

std::string metrics_csv_header();
std::string metrics_csv_row(const RunMetrics& m);
std::vector<RunMetrics> parse_metrics_csv(std::string_view text);
std::string summary_json(const Summary& s, const ScenarioConfig* config = nullptr);
std::string summary_table(const Summary& s);

} // namespace chorchain
