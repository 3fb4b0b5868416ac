#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "streamsched/dag.hpp"
#include "streamsched/mapping.hpp"
#include "streamsched/perf_model.hpp"

namespace streamsched {

struct TaskSlotLoad {
    int threads = 0;
    double rate = 0.0;      ///< incoming tuples/sec under shuffle grouping
    double capacity = 0.0;  ///< tuples/sec the group can serve; +inf for fixed tasks
};

struct SlotLoad {
    SlotRef slot;
    std::map<TaskId, TaskSlotLoad> tasks;
};

struct VmUsage {
    std::string id;
    int slots = 1;
    double cpu_pct = 0.0;  ///< summed over the VM's slots, at most slots * 100
    double mem_pct = 0.0;
};

struct Prediction {
    double predicted_rate = 0.0;
    std::vector<VmUsage> vms;    ///< at predicted_rate
    std::vector<SlotLoad> slots; ///< at predicted_rate
    bool mixed_slot_binds = false;
};

/// omega * threads_on_slot / total_threads for each slot.
std::vector<double> shuffle_split(double omega, const std::vector<int>& threads_per_slot);

/// Capacity of each task group on one slot. A lone task gets I(q). Tasks sharing a slot are
/// scaled down together when their combined CPU or memory demand exceeds the slot; demand is
/// C(q), M(q) scaled by incoming / I(q) when incoming rates are given, the unscaled values otherwise.
/// Fixed-resource tasks are never the bottleneck (capacity +inf).
std::map<TaskId, double> slot_capacity(const std::map<TaskId, int>& composition, const Dataflow& dataflow,
                                       const ModelRegistry& models,
                                       const std::map<TaskId, double>* incoming = nullptr);

/// Largest Omega (bisection, 0.1 t/s resolution) for which no slot group receives more than it can serve.
double predict_rate(const Dataflow& dataflow, const MappingPlan& mapping, const ModelRegistry& models);

/// Per-slot incoming rates and capacities at a given Omega.
std::vector<SlotLoad> slot_loads(const Dataflow& dataflow, const MappingPlan& mapping, const ModelRegistry& models,
                                 double omega);

/// Resource use of one task group receiving `rate`: model resources scaled by rate / I(q), capped at 1.
SlotResources group_usage(const TaskDef& task, int threads, double rate, const ModelRegistry& models);

/// Per-VM usage with each group's resources scaled to its incoming rate.
std::vector<VmUsage> predict_utilization(const Dataflow& dataflow, const MappingPlan& mapping, const Cluster& cluster,
                                         const ModelRegistry& models, double omega);

Prediction predict(const Dataflow& dataflow, const MappingPlan& mapping, const Cluster& cluster,
                   const ModelRegistry& models);

nlohmann::json to_json(const VmUsage& usage);
nlohmann::json to_json(const Prediction& prediction, const Cluster& cluster);

}  // namespace streamsched
