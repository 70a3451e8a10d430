#pragma once

#include "chorchain/bytes.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace chorchain {

using TaskId = std::uint8_t;

inline constexpr TaskId kMinTaskId = 1;
inline constexpr TaskId kMaxTaskId = 250;
/// Task id carried by filler handovers that return the token to the owner.
inline constexpr TaskId kFillerTaskId = 0xFB;

enum class NodeKind { Start, Task, XorSplit, XorJoin, AndSplit, AndJoin, End };

std::string_view to_string(NodeKind kind);

struct Node {
    std::string id;
    NodeKind kind = NodeKind::Task;
    std::optional<TaskId> task_id;
};

struct Edge {
    std::size_t from = 0;
    std::size_t to = 0;
};

/// Block-structured view of a model: sequences of tasks, XOR choices and AND
/// parallel blocks. `node` is the split node index for Xor/And blocks.
struct Block {
    enum class Kind { Task, Seq, Xor, And };

    Kind kind = Kind::Seq;
    TaskId task = 0;
    std::size_t node = 0;
    std::vector<Block> children;
};

class ModelError : public std::runtime_error {
public:
    enum class Kind { Parse, Structure };

    ModelError(Kind kind, std::string node, const std::string& message)
        : std::runtime_error(message), kind_(kind), node_(std::move(node))
    {
    }

    Kind kind() const { return kind_; }
    /// Offending node id; empty for document-level problems.
    const std::string& node() const { return node_; }

private:
    Kind kind_;
    std::string node_;
};

/// Immutable after load.
class ProcessModel {
public:
    /// Parses and validates a JSON model document.
    static ProcessModel load(std::string_view document);
    static ProcessModel load_file(const std::string& path);

    int model_id() const { return model_id_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<std::size_t>& out_edges(std::size_t node) const { return out_[node]; }
    const std::vector<std::size_t>& in_edges(std::size_t node) const { return in_[node]; }

    std::size_t start_node() const { return start_; }
    std::size_t end_node() const { return end_; }

    std::size_t task_count() const;
    std::size_t xor_count() const;
    std::size_t and_count() const;
    std::vector<TaskId> task_ids() const;
    bool has_task(TaskId id) const;
    std::optional<std::size_t> node_of_task(TaskId id) const;

    /// Root sequence of the block structure.
    const Block& structure() const { return root_; }

    /// True when the task's only predecessor is an AND-join; handovers to it
    /// feed the join and the task starts at the join.
    bool is_join_successor(TaskId id) const;
    /// Number of parallel branches merged in front of a join-successor task.
    std::size_t join_width(TaskId id) const;

private:
    ProcessModel() = default;
    void validate_and_build();

    int model_id_ = 0;
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::vector<std::size_t>> out_;
    std::vector<std::vector<std::size_t>> in_;
    std::size_t start_ = 0;
    std::size_t end_ = 0;
    Block root_;
};

/// The four built-in evaluation models (ids 1..4).
const ProcessModel& evaluation_model(int id);

// Execution traces ---------------------------------------------------------

enum class EventKind { Start, Handover, Split, Join, End };

std::string_view to_string(EventKind kind);

struct TraceEvent {
    EventKind kind = EventKind::Handover;
    TaskId task_id = 0; // handover target task; 0 for other kinds
    std::uint32_t timestamp = 0;
    std::string lineage;  // "0", "0.1", "0.1.0", ...
    bool extraordinary = false; // End published after detected misbehaviour
    Hash256 tx_id{};
};

struct ExecutionTrace {
    std::uint16_t process_id = 0;
    std::vector<TraceEvent> events;

    bool ended() const;
    bool aborted() const;
};

using TaskSequence = std::vector<TaskId>;

/// Every legal task order, truncated after `max_interleavings` sequences.
std::set<TaskSequence> enumerate_valid_traces(const ProcessModel& model, std::size_t max_interleavings);

struct Conformant {
    friend bool operator==(const Conformant&, const Conformant&) = default;
};

struct Deviation {
    std::size_t position = 0;     // 1-based index into the task sequence
    std::set<TaskId> expected;    // tasks that could have come next
    std::optional<TaskId> actual; // nullopt: the trace ended prematurely
    std::string reason;
};

using ConformanceVerdict = std::variant<Conformant, Deviation>;

inline bool is_conformant(const ConformanceVerdict& v) { return std::holds_alternative<Conformant>(v); }

/// Task order implied by a trace: filler handovers are dropped and
/// join-feeding handovers count once, at their Join event.
TaskSequence task_sequence(const ProcessModel& model, const ExecutionTrace& trace);

/// Replays the trace's task sequence on the model graph. Ended (non-aborted)
/// traces must complete the model; others only need to be a legal prefix.
ConformanceVerdict check_conformance(const ProcessModel& model, const ExecutionTrace& trace);

/// Same replay on a bare task sequence.
ConformanceVerdict check_sequence(const ProcessModel& model, const TaskSequence& sequence, bool ended);

} // namespace chorchain
