#include "chorchain/audit.hpp"
#include "chorchain/harness.hpp"

#include <gtest/gtest.h>

using namespace chorchain;

namespace {

ScenarioConfig config(int model)
{
    ScenarioConfig c;
    c.model_id = model;
    return c;
}

} // namespace

TEST(Plan, TransactionCountsStayWithinTheBudgetEstimate)
{
    for (int m = 1; m <= 4; ++m) {
        const auto& model = evaluation_model(m);
        for (const char* v : {"first", "last"}) {
            Plan plan = compile_plan(model, Variant::parse(v, model));
            EXPECT_LE(plan.tx_count(), estimate_tx_count(model)) << "model " << m << " " << v;
            EXPECT_EQ(plan.steps.front().kind, PlanStep::Kind::Start);
            EXPECT_EQ(plan.steps.back().kind, PlanStep::Kind::End);
            EXPECT_EQ(plan.steps.back().actor, "owner");
        }
    }
}

TEST(Plan, AndBlockSplitsFeedsAndJoins)
{
    Plan plan = compile_plan(evaluation_model(3), Variant{});
    std::vector<PlanStep::Kind> kinds;
    for (const auto& s : plan.steps)
        kinds.push_back(s.kind);
    using K = PlanStep::Kind;
    EXPECT_EQ(kinds, (std::vector<K>{K::Start, K::Handover, K::Split, K::Handover, K::Handover, K::Handover,
                                     K::Handover, K::Join, K::Handover, K::End}));
    const PlanStep& join = plan.steps[7];
    EXPECT_EQ(join.inputs.size(), 2u);
    EXPECT_EQ(join.actor, "p4");
    EXPECT_EQ(join.runs_task, TaskId{4});
    EXPECT_EQ(plan.steps[3].lineage, "0.0");
    EXPECT_EQ(plan.steps[4].lineage, "0.1");
}

TEST(Plan, VariantsPickXorBranches)
{
    const auto& model = evaluation_model(2);
    const auto first = compile_plan(model, Variant::parse("first", model));
    const auto last = compile_plan(model, Variant::parse("last", model));
    std::vector<TaskId> a, b;
    for (const auto& s : first.steps)
        if (s.runs_task)
            a.push_back(*s.runs_task);
    for (const auto& s : last.steps)
        if (s.runs_task)
            b.push_back(*s.runs_task);
    EXPECT_NE(a, b);
    EXPECT_THROW(Variant::parse("t1=0", model), std::invalid_argument);
    EXPECT_THROW(Variant::parse("nonsense", model), std::invalid_argument);
}

TEST(Scenario, FaultFreeRunCompletesConformantAndClosesFees)
{
    for (int m = 1; m <= 4; ++m) {
        auto c = config(m);
        c.keep_dump = true;
        auto r = run_scenario(c, 5);
        const auto& x = r.metrics;
        EXPECT_TRUE(x.completed) << x.abort_reason;
        EXPECT_FALSE(x.aborted);
        EXPECT_TRUE(x.conformant);
        EXPECT_EQ(x.tx_count, compile_plan(evaluation_model(m), Variant{}).tx_count() + 1);
        EXPECT_EQ(x.start_budget - x.end_residual + c.fee.per_tx_fee, x.total_fees);
        EXPECT_EQ(x.stranded_value, 0u);
        EXPECT_EQ(x.identity_gaps, 0u);
        EXPECT_EQ(x.identities_learned, x.handovers);

        AuditReport audit = audit_chain(parse_dump(r.dump), evaluation_model(m));
        EXPECT_TRUE(audit.clean()) << format_report(audit);
    }
}

TEST(Scenario, TemplateFaultIsDetectedAtCheckThree)
{
    auto c = config(2);
    c.fault_step = 2;
    auto x = run_scenario(c, 3).metrics;
    EXPECT_TRUE(x.aborted);
    EXPECT_TRUE(x.detected);
    EXPECT_EQ(x.rejected_check, 3);
    EXPECT_TRUE(x.completed); // the extraordinary end confirmed
    EXPECT_EQ(x.handovers, 1u);

    auto par = config(3);
    par.fault_step = 2; // first branch; the sibling branch token is left behind
    auto y = run_scenario(par, 1).metrics;
    EXPECT_TRUE(y.detected);
    EXPECT_GT(y.stranded_value, 0u);
    EXPECT_EQ(y.start_budget - y.end_residual - y.stranded_value + par.fee.per_tx_fee, y.total_fees);

    c.fault_step = 99;
    EXPECT_THROW(run_scenario(c, 3), std::invalid_argument);
}

TEST(Scenario, GreedyIsFasterThanWaitingForDepth)
{
    auto c = config(4);
    const double slow = run_scenario(c, 11).metrics.duration;
    c.greedy = true;
    const double fast = run_scenario(c, 11).metrics.duration;
    EXPECT_LT(fast, slow);
}

TEST(Scenario, SameSeedSameRun)
{
    auto c = config(3);
    c.keep_dump = true;
    auto a = run_scenario(c, 42);
    auto b = run_scenario(c, 42);
    EXPECT_EQ(a.dump, b.dump);
    EXPECT_EQ(metrics_csv_row(a.metrics), metrics_csv_row(b.metrics));
}

TEST(Scenario, VerificationOffMeasuresTasksOnly)
{
    auto c = config(1);
    c.verify = false;
    c.reps = 10;
    const auto s = summarize(run_batch_serial(c));
    EXPECT_GT(s.mean_duration, 0.0);
    EXPECT_LT(s.stddev_duration / s.mean_duration, 0.02);
}

TEST(Batch, ParallelMatchesSerial)
{
    auto c = config(3);
    c.reps = 6;
    c.seed = 100;
    const auto serial = run_batch_serial(c);
    const auto parallel = run_batch(c);
    ASSERT_EQ(serial.size(), parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i)
        EXPECT_EQ(metrics_csv_row(serial[i]), metrics_csv_row(parallel[i]));
}

TEST(Summary, CsvRoundTripAndShares)
{
    auto c = config(1);
    c.reps = 3;
    auto runs = run_batch_serial(c);
    std::string csv = metrics_csv_header() + "\n";
    for (const auto& r : runs)
        csv += metrics_csv_row(r) + "\n";
    auto back = parse_metrics_csv(csv);
    ASSERT_EQ(back.size(), runs.size());
    for (std::size_t i = 0; i < runs.size(); ++i)
        EXPECT_EQ(metrics_csv_row(back[i]), metrics_csv_row(runs[i]));

    const auto s = summarize(runs);
    EXPECT_NEAR(s.logic_share + s.provider_share + s.broadcast_share + s.confirmation_share, 1.0, 1e-9);
    EXPECT_GT(s.confirmation_share, 0.9);
    EXPECT_NE(summary_json(s, &c).find("\"confirmation\""), std::string::npos);
    EXPECT_THROW(parse_metrics_csv("1,2,3\n"), std::runtime_error);
}
