#include "chorchain/process_model.hpp"
#include "chorchain/rng.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace chorchain;
using chorchain::testing::trace_of;

namespace {

bool oracle_accepts(const std::set<TaskSequence>& valid, const TaskSequence& seq, bool ended)
{
    for (const auto& v : valid) {
        if (ended) {
            if (v == seq)
                return true;
        } else if (seq.size() <= v.size() && std::equal(seq.begin(), seq.end(), v.begin())) {
            return true;
        }
    }
    return false;
}

} // namespace

TEST(Conformance, SequentialComplete)
{
    EXPECT_TRUE(is_conformant(check_conformance(evaluation_model(1), trace_of({1, 2, 3}, true))));
}

TEST(Conformance, SkippedTask)
{
    auto verdict = check_conformance(evaluation_model(1), trace_of({1, 3}, false));
    ASSERT_TRUE(std::holds_alternative<Deviation>(verdict));
    const auto& d = std::get<Deviation>(verdict);
    EXPECT_EQ(d.position, 2u);
    EXPECT_EQ(d.expected, (std::set<TaskId>{2}));
    EXPECT_EQ(d.actual, std::optional<TaskId>(3));
}

TEST(Conformance, StartOnlyIsPrefix)
{
    EXPECT_TRUE(is_conformant(check_conformance(evaluation_model(4), trace_of({}, false))));
}

TEST(Conformance, PrematureEnd)
{
    auto verdict = check_conformance(evaluation_model(1), trace_of({1, 2}, true));
    ASSERT_TRUE(std::holds_alternative<Deviation>(verdict));
    const auto& d = std::get<Deviation>(verdict);
    EXPECT_EQ(d.position, 3u);
    EXPECT_FALSE(d.actual.has_value());
    EXPECT_EQ(d.expected, (std::set<TaskId>{3}));
}

TEST(Conformance, ExtraordinaryEndIsPrefixCheck)
{
    auto trace = trace_of({1}, true);
    trace.events.back().extraordinary = true;
    EXPECT_TRUE(trace.aborted());
    EXPECT_TRUE(is_conformant(check_conformance(evaluation_model(1), trace)));
}

TEST(Conformance, XorBranchesAreExclusive)
{
    const auto& m = evaluation_model(2);
    EXPECT_TRUE(is_conformant(check_sequence(m, {1, 3, 4}, true)));
    EXPECT_FALSE(is_conformant(check_sequence(m, {1, 2, 3}, false)));
}

TEST(Conformance, FeedersCountAtJoin)
{
    // Model 3: split after t1, branches t2 and t3, both feed t4's participant.
    const auto& m = evaluation_model(3);
    ExecutionTrace trace;
    trace.events = {
        {EventKind::Start, 0, 0, "0", false, {}},    {EventKind::Handover, 1, 1, "0", false, {}},
        {EventKind::Split, 0, 2, "0", false, {}},    {EventKind::Handover, 3, 3, "0.1", false, {}},
        {EventKind::Handover, 2, 3, "0.0", false, {}}, {EventKind::Handover, 4, 4, "0.1", false, {}},
        {EventKind::Handover, 4, 5, "0.0", false, {}}, {EventKind::Join, 0, 6, "0", false, {}},
        {EventKind::Handover, kFillerTaskId, 7, "0", false, {}}, {EventKind::End, 0, 8, "0", false, {}},
    };
    EXPECT_EQ(task_sequence(m, trace), (TaskSequence{1, 3, 2, 4}));
    EXPECT_TRUE(is_conformant(check_conformance(m, trace)));

    trace.events.erase(trace.events.begin() + 7); // no Join: feeders surface at End
    EXPECT_EQ(task_sequence(m, trace), (TaskSequence{1, 3, 2, 4}));
}

TEST(Conformance, OracleEquivalenceOnPrefixesAndMutations)
{
    for (int id = 1; id <= 4; ++id) {
        const auto& m = evaluation_model(id);
        const auto valid = enumerate_valid_traces(m, 100000);
        std::vector<TaskId> alphabet = m.task_ids();
        alphabet.push_back(77);

        for (const auto& v : valid)
            for (std::size_t k = 0; k <= v.size(); ++k) {
                TaskSequence prefix(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
                for (bool ended : {false, true})
                    EXPECT_EQ(is_conformant(check_sequence(m, prefix, ended)), oracle_accepts(valid, prefix, ended))
                        << "model " << id << " k=" << k;
            }

        Rng rng(derive_seed(1234, static_cast<std::uint64_t>(id)));
        std::vector<TaskSequence> pool(valid.begin(), valid.end());
        for (int i = 0; i < 1000; ++i) {
            TaskSequence s = pool[rng.below(pool.size())];
            switch (rng.below(4)) {
            case 0: if (!s.empty()) s.erase(s.begin() + static_cast<std::ptrdiff_t>(rng.below(s.size()))); break;
            case 1: s.insert(s.begin() + static_cast<std::ptrdiff_t>(rng.below(s.size() + 1)), alphabet[rng.below(alphabet.size())]); break;
            case 2: if (s.size() > 1) { auto a = rng.below(s.size()), b = rng.below(s.size()); std::swap(s[a], s[b]); } break;
            default: if (!s.empty()) s[rng.below(s.size())] = alphabet[rng.below(alphabet.size())]; break;
            }
            const bool ended = rng.below(2) == 1;
            auto verdict = check_sequence(m, s, ended);
            ASSERT_EQ(is_conformant(verdict), oracle_accepts(valid, s, ended)) << "model " << id << " mutation " << i;
        }
    }
}
