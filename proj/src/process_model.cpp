#include "chorchain/process_model.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>

namespace chorchain {

using nlohmann::json;

std::string_view to_string(NodeKind kind)
{
    switch (kind) {
    case NodeKind::Start: return "start";
    case NodeKind::Task: return "task";
    case NodeKind::XorSplit: return "xor_split";
    case NodeKind::XorJoin: return "xor_join";
    case NodeKind::AndSplit: return "and_split";
    case NodeKind::AndJoin: return "and_join";
    case NodeKind::End: return "end";
    }
    return "?";
}

std::string_view to_string(EventKind kind)
{
    switch (kind) {
    case EventKind::Start: return "start";
    case EventKind::Handover: return "handover";
    case EventKind::Split: return "split";
    case EventKind::Join: return "join";
    case EventKind::End: return "end";
    }
    return "?";
}

namespace {

NodeKind parse_kind(const std::string& text, const std::string& node)
{
    static const std::map<std::string, NodeKind> table{
        {"start", NodeKind::Start},         {"task", NodeKind::Task},
        {"xor_split", NodeKind::XorSplit},  {"xor_join", NodeKind::XorJoin},
        {"and_split", NodeKind::AndSplit},  {"and_join", NodeKind::AndJoin},
        {"end", NodeKind::End},
    };
    auto it = table.find(text);
    if (it == table.end())
        throw ModelError(ModelError::Kind::Parse, node, "node '" + node + "' has unknown kind '" + text + "'");
    return it->second;
}

[[noreturn]] void structure_error(const std::string& node, const std::string& message)
{
    throw ModelError(ModelError::Kind::Structure, node, message);
}

bool is_split(NodeKind k) { return k == NodeKind::XorSplit || k == NodeKind::AndSplit; }
bool is_join(NodeKind k) { return k == NodeKind::XorJoin || k == NodeKind::AndJoin; }

} // namespace

ProcessModel ProcessModel::load(std::string_view document)
{
    ProcessModel model;
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ModelError(ModelError::Kind::Parse, "", std::string("model parse error: ") + e.what());
    }

    std::map<std::string, std::size_t> index;
    try {
        if (!doc.is_object())
            throw ModelError(ModelError::Kind::Parse, "", "model document must be a JSON object");
        model.model_id_ = doc.at("model_id").get<int>();
        for (const auto& n : doc.at("nodes")) {
            Node node;
            node.id = n.at("id").get<std::string>();
            if (node.id.empty())
                throw ModelError(ModelError::Kind::Parse, "", "node with empty id");
            node.kind = parse_kind(n.at("kind").get<std::string>(), node.id);
            if (n.contains("task_id")) {
                const auto raw = n.at("task_id").get<long long>();
                if (node.kind != NodeKind::Task)
                    structure_error(node.id, "node '" + node.id + "' is not a task but has a task_id");
                if (raw < kMinTaskId || raw > kMaxTaskId)
                    structure_error(node.id, "task '" + node.id + "' has task_id " + std::to_string(raw) +
                                                 " outside 1.." + std::to_string(kMaxTaskId));
                node.task_id = static_cast<TaskId>(raw);
            } else if (node.kind == NodeKind::Task) {
                structure_error(node.id, "task '" + node.id + "' has no task_id");
            }
            if (!index.emplace(node.id, model.nodes_.size()).second)
                structure_error(node.id, "duplicate node id '" + node.id + "'");
            model.nodes_.push_back(std::move(node));
        }
        for (const auto& e : doc.at("edges")) {
            const auto from = e.at("from").get<std::string>();
            const auto to = e.at("to").get<std::string>();
            auto f = index.find(from);
            auto t = index.find(to);
            if (f == index.end())
                structure_error(from, "edge references unknown node '" + from + "'");
            if (t == index.end())
                structure_error(to, "edge references unknown node '" + to + "'");
            model.edges_.push_back({f->second, t->second});
        }
    } catch (const json::exception& e) {
        throw ModelError(ModelError::Kind::Parse, "", std::string("model parse error: ") + e.what());
    }

    model.validate_and_build();
    return model;
}

ProcessModel ProcessModel::load_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ModelError(ModelError::Kind::Parse, "", "cannot open model file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return load(buffer.str());
}

void ProcessModel::validate_and_build()
{
    const std::size_t n = nodes_.size();
    out_.assign(n, {});
    in_.assign(n, {});

    std::set<TaskId> seen_tasks;
    std::optional<std::size_t> start, end;
    for (std::size_t i = 0; i < n; ++i) {
        const Node& node = nodes_[i];
        if (node.task_id && !seen_tasks.insert(*node.task_id).second)
            structure_error(node.id, "task_id " + std::to_string(*node.task_id) + " used twice (node '" +
                                         node.id + "')");
        if (node.kind == NodeKind::Start) {
            if (start)
                structure_error(node.id, "multiple start nodes ('" + nodes_[*start].id + "', '" + node.id + "')");
            start = i;
        }
        if (node.kind == NodeKind::End) {
            if (end)
                structure_error(node.id, "multiple end nodes ('" + nodes_[*end].id + "', '" + node.id + "')");
            end = i;
        }
    }
    if (!start)
        structure_error("", "model has no start node");
    if (!end)
        structure_error("", "model has no end node");
    start_ = *start;
    end_ = *end;

    std::set<std::pair<std::size_t, std::size_t>> unique_edges;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        const Edge& edge = edges_[e];
        if (edge.from == edge.to)
            structure_error(nodes_[edge.from].id, "self-loop on '" + nodes_[edge.from].id + "'");
        if (!unique_edges.insert({edge.from, edge.to}).second)
            structure_error(nodes_[edge.from].id,
                            "duplicate edge '" + nodes_[edge.from].id + "' -> '" + nodes_[edge.to].id + "'");
        out_[edge.from].push_back(e);
        in_[edge.to].push_back(e);
    }

    for (std::size_t i = 0; i < n; ++i) {
        const Node& node = nodes_[i];
        const std::size_t din = in_[i].size();
        const std::size_t dout = out_[i].size();
        bool ok = true;
        switch (node.kind) {
        case NodeKind::Start: ok = din == 0 && dout == 1; break;
        case NodeKind::End: ok = din == 1 && dout == 0; break;
        case NodeKind::Task: ok = din == 1 && dout == 1; break;
        case NodeKind::XorSplit:
        case NodeKind::AndSplit: ok = din == 1 && dout >= 2; break;
        case NodeKind::XorJoin:
        case NodeKind::AndJoin: ok = din >= 2 && dout == 1; break;
        }
        if (!ok)
            structure_error(node.id, std::string(to_string(node.kind)) + " node '" + node.id + "' has " +
                                         std::to_string(din) + " incoming and " + std::to_string(dout) +
                                         " outgoing edges");
    }

    // Acyclicity (Kahn).
    std::vector<std::size_t> indegree(n);
    for (std::size_t i = 0; i < n; ++i)
        indegree[i] = in_[i].size();
    std::queue<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indegree[i] == 0)
            ready.push(i);
    std::size_t visited = 0;
    while (!ready.empty()) {
        std::size_t v = ready.front();
        ready.pop();
        ++visited;
        for (std::size_t e : out_[v])
            if (--indegree[edges_[e].to] == 0)
                ready.push(edges_[e].to);
    }
    if (visited != n) {
        for (std::size_t i = 0; i < n; ++i)
            if (indegree[i] > 0)
                structure_error(nodes_[i].id, "cycle through node '" + nodes_[i].id + "'");
    }

    // Connectivity: everything reachable from start.
    std::vector<bool> reached(n, false);
    std::vector<std::size_t> stack{start_};
    reached[start_] = true;
    while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        for (std::size_t e : out_[v]) {
            std::size_t w = edges_[e].to;
            if (!reached[w]) {
                reached[w] = true;
                stack.push_back(w);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!reached[i])
            structure_error(nodes_[i].id, "node '" + nodes_[i].id + "' is not reachable from start");

    // Block structure: every split must close at exactly one join of its kind.
    struct Parser {
        const ProcessModel& m;

        std::size_t succ(std::size_t v) const { return m.edges_[m.out_[v].front()].to; }

        std::pair<Block, std::size_t> seq(std::size_t v) const
        {
            Block block;
            block.kind = Block::Kind::Seq;
            for (;;) {
                const Node& node = m.nodes_[v];
                if (node.kind == NodeKind::Task) {
                    Block task;
                    task.kind = Block::Kind::Task;
                    task.task = *node.task_id;
                    task.node = v;
                    block.children.push_back(std::move(task));
                    v = succ(v);
                } else if (is_split(node.kind)) {
                    const bool is_and = node.kind == NodeKind::AndSplit;
                    const NodeKind join_kind = is_and ? NodeKind::AndJoin : NodeKind::XorJoin;
                    Block gateway;
                    gateway.kind = is_and ? Block::Kind::And : Block::Kind::Xor;
                    gateway.node = v;
                    std::optional<std::size_t> join;
                    for (std::size_t e : m.out_[v]) {
                        auto [branch, stop] = seq(m.edges_[e].to);
                        const Node& stop_node = m.nodes_[stop];
                        if (stop_node.kind != join_kind)
                            structure_error(node.id, std::string(is_and ? "AND" : "XOR") + "-split '" + node.id +
                                                         "' has no matching " + (is_and ? "AND" : "XOR") +
                                                         "-join (branch reaches '" + stop_node.id + "')");
                        if (join && *join != stop)
                            structure_error(node.id, "branches of split '" + node.id + "' close at different joins ('" +
                                                         m.nodes_[*join].id + "', '" + stop_node.id + "')");
                        if (branch.children.empty())
                            structure_error(node.id, "split '" + node.id + "' has an empty branch");
                        join = stop;
                        gateway.children.push_back(std::move(branch));
                    }
                    if (m.in_[*join].size() != m.out_[v].size())
                        structure_error(m.nodes_[*join].id, "join '" + m.nodes_[*join].id + "' merges " +
                                                                std::to_string(m.in_[*join].size()) +
                                                                " paths but split '" + node.id + "' opens " +
                                                                std::to_string(m.out_[v].size()));
                    block.children.push_back(std::move(gateway));
                    v = succ(*join);
                } else if (is_join(node.kind) || node.kind == NodeKind::End) {
                    return {std::move(block), v};
                } else {
                    structure_error(node.id, "unexpected start node '" + node.id + "'");
                }
            }
        }
    };

    Parser parser{*this};
    auto [root, stop] = parser.seq(edges_[out_[start_].front()].to);
    if (stop != end_)
        structure_error(nodes_[stop].id, "join '" + nodes_[stop].id + "' has no matching split");
    if (root.children.empty())
        structure_error(nodes_[start_].id, "model has no tasks");
    root_ = std::move(root);
}

std::size_t ProcessModel::task_count() const
{
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.kind == NodeKind::Task; }));
}

std::size_t ProcessModel::xor_count() const
{
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.kind == NodeKind::XorSplit; }));
}

std::size_t ProcessModel::and_count() const
{
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.kind == NodeKind::AndSplit; }));
}

std::vector<TaskId> ProcessModel::task_ids() const
{
    std::vector<TaskId> ids;
    for (const Node& n : nodes_)
        if (n.task_id)
            ids.push_back(*n.task_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

bool ProcessModel::has_task(TaskId id) const { return node_of_task(id).has_value(); }

std::optional<std::size_t> ProcessModel::node_of_task(TaskId id) const
{
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].task_id == id)
            return i;
    return std::nullopt;
}

bool ProcessModel::is_join_successor(TaskId id) const
{
    auto node = node_of_task(id);
    if (!node)
        return false;
    const std::size_t pred = edges_[in_[*node].front()].from;
    return nodes_[pred].kind == NodeKind::AndJoin;
}

std::size_t ProcessModel::join_width(TaskId id) const
{
    if (!is_join_successor(id))
        return 0;
    const std::size_t pred = edges_[in_[*node_of_task(id)].front()].from;
    return in_[pred].size();
}

// Trace helpers --------------------------------------------------------------

bool ExecutionTrace::ended() const
{
    return std::any_of(events.begin(), events.end(), [](const TraceEvent& e) { return e.kind == EventKind::End; });
}

bool ExecutionTrace::aborted() const
{
    return std::any_of(events.begin(), events.end(),
                       [](const TraceEvent& e) { return e.kind == EventKind::End && e.extraordinary; });
}

// Enumeration oracle over the block tree ---------------------------------------

namespace {

using SeqSet = std::vector<TaskSequence>;

void cap(SeqSet& s, std::size_t limit)
{
    if (s.size() > limit)
        s.resize(limit);
}

void interleave(const TaskSequence& a, std::size_t i, const TaskSequence& b, std::size_t j, TaskSequence& prefix,
                SeqSet& out, std::size_t limit)
{
    if (out.size() >= limit)
        return;
    if (i == a.size() && j == b.size()) {
        out.push_back(prefix);
        return;
    }
    if (i < a.size()) {
        prefix.push_back(a[i]);
        interleave(a, i + 1, b, j, prefix, out, limit);
        prefix.pop_back();
    }
    if (j < b.size()) {
        prefix.push_back(b[j]);
        interleave(a, i, b, j + 1, prefix, out, limit);
        prefix.pop_back();
    }
}

SeqSet sequences(const Block& block, std::size_t limit)
{
    switch (block.kind) {
    case Block::Kind::Task: return {{block.task}};
    case Block::Kind::Seq: {
        SeqSet acc{{}};
        for (const Block& child : block.children) {
            SeqSet tails = sequences(child, limit);
            SeqSet next;
            for (const auto& head : acc)
                for (const auto& tail : tails) {
                    if (next.size() >= limit)
                        break;
                    TaskSequence s = head;
                    s.insert(s.end(), tail.begin(), tail.end());
                    next.push_back(std::move(s));
                }
            acc = std::move(next);
        }
        return acc;
    }
    case Block::Kind::Xor: {
        SeqSet acc;
        for (const Block& child : block.children) {
            SeqSet branch = sequences(child, limit);
            acc.insert(acc.end(), branch.begin(), branch.end());
        }
        cap(acc, limit);
        return acc;
    }
    case Block::Kind::And: {
        SeqSet acc{{}};
        for (const Block& child : block.children) {
            SeqSet branch = sequences(child, limit);
            SeqSet next;
            for (const auto& a : acc)
                for (const auto& b : branch) {
                    TaskSequence prefix;
                    interleave(a, 0, b, 0, prefix, next, limit);
                }
            acc = std::move(next);
        }
        return acc;
    }
    }
    return {};
}

} // namespace

std::set<TaskSequence> enumerate_valid_traces(const ProcessModel& model, std::size_t max_interleavings)
{
    SeqSet all = sequences(model.structure(), max_interleavings);
    std::set<TaskSequence> out;
    for (auto& s : all) {
        if (out.size() >= max_interleavings)
            break;
        out.insert(std::move(s));
    }
    return out;
}

// Token replay on the graph --------------------------------------------------

namespace {

using Marking = std::vector<std::uint8_t>;

class Replayer {
public:
    explicit Replayer(const ProcessModel& m) : m_(m) {}

    std::set<Marking> initial() const
    {
        Marking mk(m_.edges().size(), 0);
        mk[m_.out_edges(m_.start_node()).front()] = 1;
        return closure({mk});
    }

    /// All markings reachable through gateway moves.
    std::set<Marking> closure(std::set<Marking> frontier) const
    {
        std::set<Marking> seen = frontier;
        std::vector<Marking> work(frontier.begin(), frontier.end());
        while (!work.empty()) {
            Marking mk = std::move(work.back());
            work.pop_back();
            for (Marking& next : silent_moves(mk))
                if (seen.insert(next).second)
                    work.push_back(std::move(next));
        }
        return seen;
    }

    std::set<TaskId> enabled(const std::set<Marking>& states) const
    {
        std::set<TaskId> out;
        for (const Marking& mk : states)
            for (std::size_t v = 0; v < m_.nodes().size(); ++v) {
                const Node& node = m_.nodes()[v];
                if (node.kind == NodeKind::Task && mk[m_.in_edges(v).front()] > 0)
                    out.insert(*node.task_id);
            }
        return out;
    }

    std::set<Marking> fire(const std::set<Marking>& states, TaskId task) const
    {
        std::set<Marking> out;
        auto node = m_.node_of_task(task);
        if (!node)
            return out;
        const std::size_t in = m_.in_edges(*node).front();
        const std::size_t outgoing = m_.out_edges(*node).front();
        for (const Marking& mk : states) {
            if (mk[in] == 0)
                continue;
            Marking next = mk;
            --next[in];
            ++next[outgoing];
            out.insert(std::move(next));
        }
        return closure(std::move(out));
    }

    bool complete(const std::set<Marking>& states) const
    {
        const std::size_t end_in = m_.in_edges(m_.end_node()).front();
        for (const Marking& mk : states) {
            std::size_t total = 0;
            for (auto c : mk)
                total += c;
            if (total == 1 && mk[end_in] == 1)
                return true;
        }
        return false;
    }

private:
    std::vector<Marking> silent_moves(const Marking& mk) const
    {
        std::vector<Marking> out;
        for (std::size_t v = 0; v < m_.nodes().size(); ++v) {
            const auto& ins = m_.in_edges(v);
            const auto& outs = m_.out_edges(v);
            switch (m_.nodes()[v].kind) {
            case NodeKind::XorSplit:
                if (mk[ins.front()] > 0)
                    for (std::size_t e : outs) {
                        Marking next = mk;
                        --next[ins.front()];
                        ++next[e];
                        out.push_back(std::move(next));
                    }
                break;
            case NodeKind::AndSplit:
                if (mk[ins.front()] > 0) {
                    Marking next = mk;
                    --next[ins.front()];
                    for (std::size_t e : outs)
                        ++next[e];
                    out.push_back(std::move(next));
                }
                break;
            case NodeKind::XorJoin:
                for (std::size_t e : ins)
                    if (mk[e] > 0) {
                        Marking next = mk;
                        --next[e];
                        ++next[outs.front()];
                        out.push_back(std::move(next));
                    }
                break;
            case NodeKind::AndJoin:
                if (std::all_of(ins.begin(), ins.end(), [&](std::size_t e) { return mk[e] > 0; })) {
                    Marking next = mk;
                    for (std::size_t e : ins)
                        --next[e];
                    ++next[outs.front()];
                    out.push_back(std::move(next));
                }
                break;
            default: break;
            }
        }
        return out;
    }

    const ProcessModel& m_;
};

} // namespace

ConformanceVerdict check_sequence(const ProcessModel& model, const TaskSequence& sequence, bool ended)
{
    Replayer replay(model);
    std::set<Marking> states = replay.initial();
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        std::set<Marking> next = replay.fire(states, sequence[i]);
        if (next.empty()) {
            Deviation d;
            d.position = i + 1;
            d.expected = replay.enabled(states);
            d.actual = sequence[i];
            d.reason = "task " + std::to_string(sequence[i]) + " is not enabled";
            return d;
        }
        states = std::move(next);
    }
    if (ended && !replay.complete(states)) {
        Deviation d;
        d.position = sequence.size() + 1;
        d.expected = replay.enabled(states);
        d.reason = "process ended before the model completed";
        return d;
    }
    return Conformant{};
}

TaskSequence task_sequence(const ProcessModel& model, const ExecutionTrace& trace)
{
    TaskSequence seq;
    std::map<TaskId, std::size_t> pending_feeders;
    auto flush = [&] {
        for (const auto& [task, count] : pending_feeders) {
            (void)count;
            seq.push_back(task);
        }
        pending_feeders.clear();
    };
    for (const TraceEvent& e : trace.events) {
        switch (e.kind) {
        case EventKind::Handover:
            if (e.task_id == kFillerTaskId)
                break;
            if (model.is_join_successor(e.task_id))
                ++pending_feeders[e.task_id];
            else
                seq.push_back(e.task_id);
            break;
        case EventKind::Join:
        case EventKind::End: flush(); break;
        default: break;
        }
    }
    return seq;
}

ConformanceVerdict check_conformance(const ProcessModel& model, const ExecutionTrace& trace)
{
    const auto& ev = trace.events;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (ev[i].kind == EventKind::Start && i != 0) {
            Deviation d;
            d.reason = "start event is not the first event";
            return d;
        }
    }
    const bool ended = trace.ended() && !trace.aborted();
    return check_sequence(model, task_sequence(model, trace), ended);
}

} // namespace chorchain
