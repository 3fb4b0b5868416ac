#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace streamsched {

using TaskId = std::string;

/// Output tuples per input tuple on an edge, kept as an exact fraction.
class Selectivity {
public:
    Selectivity() = default;
    Selectivity(std::int64_t num, std::int64_t den);

    /// Accepts "a:b" or a decimal literal such as "0.5" or "2".
    static Selectivity parse(const std::string& text);

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }
    double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }
    std::string str() const;

    friend bool operator==(const Selectivity&, const Selectivity&) = default;

private:
    std::int64_t num_ = 1;
    std::int64_t den_ = 1;
};

/// Static resources for tasks excluded from model-based allocation (source/sink).
struct FixedResources {
    double cpu_pct = 0.0;
    double mem_pct = 0.0;
    int threads = 1;
};

struct TaskDef {
    TaskId id;
    std::string kind;
    bool is_source = false;
    bool is_sink = false;
    std::optional<FixedResources> fixed;
};

struct StreamEdge {
    TaskId from;
    TaskId to;
    Selectivity selectivity;
};

struct Dataflow {
    std::vector<TaskDef> tasks;
    std::vector<StreamEdge> edges;

    const TaskDef* find(const TaskId& id) const;
    const TaskDef& task(const TaskId& id) const;
    std::vector<const StreamEdge*> in_edges(const TaskId& id) const;
    std::vector<const StreamEdge*> out_edges(const TaskId& id) const;
};

class DagError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input rate (tuples/sec) per task.
using RateMap = std::map<TaskId, double>;

/// Empty iff the dataflow is a well-formed DAG; each entry names the offending task or edge.
std::vector<std::string> validate(const Dataflow& dataflow);

/// Kahn's algorithm with ready tasks released in ascending id order.
/// Throws DagError naming a task on a cycle.
std::vector<TaskId> topo_order(const Dataflow& dataflow);

/// Source tasks carry omega; every other task receives the sum of upstream rate times selectivity.
RateMap get_rate(const Dataflow& dataflow, double omega);

enum class BuiltinDag { Linear, Diamond, Star };

BuiltinDag parse_builtin_dag(const std::string& name);
std::string to_string(BuiltinDag kind);

/// Five application tasks in canonical vertex order plus "source" and "sink".
///   linear:  chain of the five
///   diamond: kinds[0] fans out to kinds[1..3], which join at kinds[4]
///   star:    kinds[0], kinds[1] feed hub kinds[2], which feeds kinds[3], kinds[4]
Dataflow builtin_dag(BuiltinDag kind, const std::vector<std::string>& task_kinds);

/// Kind assignment used when none is given.
std::vector<std::string> default_task_kinds(BuiltinDag kind);

FixedResources default_source_resources();
FixedResources default_sink_resources();

nlohmann::json to_json(const Dataflow& dataflow);
Dataflow dataflow_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RateMap& rates);

}  // namespace streamsched
