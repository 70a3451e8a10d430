#include "chorchain/process_model.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace chorchain;

namespace {

std::string doc(const std::string& nodes, const std::string& edges)
{
    return R"({"model_id": 9, "nodes": [)" + nodes + R"(], "edges": [)" + edges + "]}";
}

ModelError load_error(const std::string& document)
{
    try {
        ProcessModel::load(document);
    } catch (const ModelError& e) {
        return e;
    }
    ADD_FAILURE() << "document loaded unexpectedly";
    return ModelError(ModelError::Kind::Parse, "", "");
}

const std::string kSingle = doc(R"({"id":"s","kind":"start"},{"id":"a","kind":"task","task_id":1},{"id":"e","kind":"end"})",
                                R"({"from":"s","to":"a"},{"from":"a","to":"e"})");

} // namespace

TEST(ProcessModel, LoadsEvaluationModelFiles)
{
    struct Expect {
        std::size_t tasks, xors, ands;
    };
    const Expect expect[] = {{3, 0, 0}, {4, 1, 0}, {4, 0, 1}, {5, 1, 1}};
    for (int id = 1; id <= 4; ++id) {
        auto m = ProcessModel::load_file(chorchain::testing::model_path(id));
        EXPECT_EQ(m.model_id(), id);
        EXPECT_EQ(m.task_count(), expect[id - 1].tasks) << id;
        EXPECT_EQ(m.xor_count(), expect[id - 1].xors) << id;
        EXPECT_EQ(m.and_count(), expect[id - 1].ands) << id;
    }
}

TEST(ProcessModel, BuiltinModelsMatchFiles)
{
    for (int id = 1; id <= 4; ++id) {
        auto file = ProcessModel::load_file(chorchain::testing::model_path(id));
        const auto& builtin = evaluation_model(id);
        EXPECT_EQ(enumerate_valid_traces(file, 1000), enumerate_valid_traces(builtin, 1000));
        EXPECT_EQ(file.nodes().size(), builtin.nodes().size());
    }
    EXPECT_THROW(evaluation_model(5), std::out_of_range);
}

TEST(ProcessModel, JoinSuccessor)
{
    const auto& m3 = evaluation_model(3);
    EXPECT_TRUE(m3.is_join_successor(4));
    EXPECT_EQ(m3.join_width(4), 2u);
    EXPECT_FALSE(m3.is_join_successor(2));
    EXPECT_FALSE(evaluation_model(2).is_join_successor(4));
}

TEST(ProcessModel, SingleTaskModel)
{
    auto m = ProcessModel::load(kSingle);
    EXPECT_EQ(enumerate_valid_traces(m, 10), (std::set<TaskSequence>{{1}}));
}

TEST(ProcessModel, AndSplitWithoutJoin)
{
    auto e = load_error(doc(R"({"id":"s","kind":"start"},{"id":"split","kind":"and_split"},)"
                            R"({"id":"a","kind":"task","task_id":1},{"id":"b","kind":"task","task_id":2},)"
                            R"({"id":"x","kind":"xor_join"},{"id":"e","kind":"end"})",
                            R"({"from":"s","to":"split"},{"from":"split","to":"a"},{"from":"split","to":"b"},)"
                            R"({"from":"a","to":"x"},{"from":"b","to":"x"},{"from":"x","to":"e"})"));
    EXPECT_EQ(e.kind(), ModelError::Kind::Structure);
    EXPECT_EQ(e.node(), "split");
}

TEST(ProcessModel, StructuralErrorsNameTheNode)
{
    auto two_starts = load_error(doc(R"({"id":"s","kind":"start"},{"id":"s2","kind":"start"},)"
                                     R"({"id":"a","kind":"task","task_id":1},{"id":"e","kind":"end"})",
                                     R"({"from":"s","to":"a"},{"from":"s2","to":"a"},{"from":"a","to":"e"})"));
    EXPECT_EQ(two_starts.node(), "s2");

    auto cycle = load_error(doc(R"({"id":"s","kind":"start"},{"id":"x","kind":"xor_join"},)"
                                R"({"id":"a","kind":"task","task_id":1},{"id":"y","kind":"xor_split"},{"id":"e","kind":"end"})",
                                R"({"from":"s","to":"x"},{"from":"x","to":"a"},{"from":"a","to":"y"},)"
                                R"({"from":"y","to":"x"},{"from":"y","to":"e"})"));
    EXPECT_EQ(cycle.kind(), ModelError::Kind::Structure);
    EXPECT_NE(std::string(cycle.what()).find("cycle"), std::string::npos);

    auto dup = load_error(doc(R"({"id":"s","kind":"start"},{"id":"a","kind":"task","task_id":1},)"
                              R"({"id":"b","kind":"task","task_id":1},{"id":"e","kind":"end"})",
                              R"({"from":"s","to":"a"},{"from":"a","to":"b"},{"from":"b","to":"e"})"));
    EXPECT_EQ(dup.node(), "b");

    auto reserved = load_error(doc(R"({"id":"s","kind":"start"},{"id":"a","kind":"task","task_id":251},{"id":"e","kind":"end"})",
                                   R"({"from":"s","to":"a"},{"from":"a","to":"e"})"));
    EXPECT_EQ(reserved.node(), "a");

    auto mixed = load_error(doc(R"({"id":"s","kind":"start"},{"id":"split","kind":"xor_split"},)"
                                R"({"id":"a","kind":"task","task_id":1},{"id":"b","kind":"task","task_id":2},)"
                                R"({"id":"j","kind":"and_join"},{"id":"e","kind":"end"})",
                                R"({"from":"s","to":"split"},{"from":"split","to":"a"},{"from":"split","to":"b"},)"
                                R"({"from":"a","to":"j"},{"from":"b","to":"j"},{"from":"j","to":"e"})"));
    EXPECT_EQ(mixed.node(), "split");
}

TEST(ProcessModel, ParseErrors)
{
    EXPECT_EQ(load_error("{not json").kind(), ModelError::Kind::Parse);
    EXPECT_EQ(load_error(R"({"nodes": [], "edges": []})").kind(), ModelError::Kind::Parse);
    auto unknown = load_error(doc(R"({"id":"s","kind":"loop"})", ""));
    EXPECT_EQ(unknown.kind(), ModelError::Kind::Parse);
    EXPECT_EQ(unknown.node(), "s");
    EXPECT_THROW(ProcessModel::load_file("/nonexistent/model.json"), ModelError);
}

TEST(Enumerate, EvaluationModels)
{
    EXPECT_EQ(enumerate_valid_traces(evaluation_model(1), 100), (std::set<TaskSequence>{{1, 2, 3}}));
    EXPECT_EQ(enumerate_valid_traces(evaluation_model(2), 100), (std::set<TaskSequence>{{1, 2, 4}, {1, 3, 4}}));
    EXPECT_EQ(enumerate_valid_traces(evaluation_model(3), 100), (std::set<TaskSequence>{{1, 2, 3, 4}, {1, 3, 2, 4}}));
    EXPECT_EQ(enumerate_valid_traces(evaluation_model(4), 100),
              (std::set<TaskSequence>{{1, 2, 3, 5}, {1, 3, 2, 5}, {1, 2, 4, 5}, {1, 4, 2, 5}}));
}

TEST(Enumerate, XorProductOfBranchCounts)
{
    // Two consecutive XOR blocks of 3 and 2 branches.
    auto m = ProcessModel::load(doc(
        R"({"id":"s","kind":"start"},{"id":"x1","kind":"xor_split"},{"id":"a","kind":"task","task_id":1},)"
        R"({"id":"b","kind":"task","task_id":2},{"id":"c","kind":"task","task_id":3},{"id":"j1","kind":"xor_join"},)"
        R"({"id":"x2","kind":"xor_split"},{"id":"d","kind":"task","task_id":4},{"id":"f","kind":"task","task_id":5},)"
        R"({"id":"j2","kind":"xor_join"},{"id":"e","kind":"end"})",
        R"({"from":"s","to":"x1"},{"from":"x1","to":"a"},{"from":"x1","to":"b"},{"from":"x1","to":"c"},)"
        R"({"from":"a","to":"j1"},{"from":"b","to":"j1"},{"from":"c","to":"j1"},{"from":"j1","to":"x2"},)"
        R"({"from":"x2","to":"d"},{"from":"x2","to":"f"},{"from":"d","to":"j2"},{"from":"f","to":"j2"},{"from":"j2","to":"e"})"));
    EXPECT_EQ(enumerate_valid_traces(m, 1000).size(), 6u);
    EXPECT_EQ(enumerate_valid_traces(m, 4).size(), 4u);
}
