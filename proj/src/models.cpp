#include "chorchain/process_model.hpp"

#include <array>

namespace chorchain {

namespace {

// Same content as models/model1.json .. model4.json.
constexpr std::array<std::string_view, 4> kDocuments{
    R"({"model_id":1,"nodes":[{"id":"start","kind":"start"},{"id":"t1","kind":"task","task_id":1},{"id":"t2","kind":"task","task_id":2},{"id":"t3","kind":"task","task_id":3},{"id":"end","kind":"end"}],"edges":[{"from":"start","to":"t1"},{"from":"t1","to":"t2"},{"from":"t2","to":"t3"},{"from":"t3","to":"end"}]})",
    R"({"model_id":2,"nodes":[{"id":"start","kind":"start"},{"id":"t1","kind":"task","task_id":1},{"id":"x1","kind":"xor_split"},{"id":"t2","kind":"task","task_id":2},{"id":"t3","kind":"task","task_id":3},{"id":"x2","kind":"xor_join"},{"id":"t4","kind":"task","task_id":4},{"id":"end","kind":"end"}],"edges":[{"from":"start","to":"t1"},{"from":"t1","to":"x1"},{"from":"x1","to":"t2"},{"from":"x1","to":"t3"},{"from":"t2","to":"x2"},{"from":"t3","to":"x2"},{"from":"x2","to":"t4"},{"from":"t4","to":"end"}]})",
    R"({"model_id":3,"nodes":[{"id":"start","kind":"start"},{"id":"t1","kind":"task","task_id":1},{"id":"a1","kind":"and_split"},{"id":"t2","kind":"task","task_id":2},{"id":"t3","kind":"task","task_id":3},{"id":"a2","kind":"and_join"},{"id":"t4","kind":"task","task_id":4},{"id":"end","kind":"end"}],"edges":[{"from":"start","to":"t1"},{"from":"t1","to":"a1"},{"from":"a1","to":"t2"},{"from":"a1","to":"t3"},{"from":"t2","to":"a2"},{"from":"t3","to":"a2"},{"from":"a2","to":"t4"},{"from":"t4","to":"end"}]})",
    R"({"model_id":4,"nodes":[{"id":"start","kind":"start"},{"id":"t1","kind":"task","task_id":1},{"id":"a1","kind":"and_split"},{"id":"t2","kind":"task","task_id":2},{"id":"x1","kind":"xor_split"},{"id":"t3","kind":"task","task_id":3},{"id":"t4","kind":"task","task_id":4},{"id":"x2","kind":"xor_join"},{"id":"a2","kind":"and_join"},{"id":"t5","kind":"task","task_id":5},{"id":"end","kind":"end"}],"edges":[{"from":"start","to":"t1"},{"from":"t1","to":"a1"},{"from":"a1","to":"t2"},{"from":"a1","to":"x1"},{"from":"x1","to":"t3"},{"from":"x1","to":"t4"},{"from":"t3","to":"x2"},{"from":"t4","to":"x2"},{"from":"x2","to":"a2"},{"from":"t2","to":"a2"},{"from":"a2","to":"t5"},{"from":"t5","to":"end"}]})",
};

} // namespace

const ProcessModel& evaluation_model(int id)
{
    static const std::array<ProcessModel, 4> models{
        ProcessModel::load(kDocuments[0]), ProcessModel::load(kDocuments[1]),
        ProcessModel::load(kDocuments[2]), ProcessModel::load(kDocuments[3])};
    if (id < 1 || id > 4)
        throw std::out_of_range("evaluation model id must be 1..4, got " + std::to_string(id));
    return models[static_cast<std::size_t>(id - 1)];
}

} // namespace chorchain
