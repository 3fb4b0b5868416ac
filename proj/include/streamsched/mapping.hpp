#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "streamsched/allocation.hpp"
#include "streamsched/dag.hpp"
#include "streamsched/perf_model.hpp"

namespace streamsched {

struct VmSpec {
    std::string size;
    int slots = 1;
    double price_per_hour = 0.0;
};

/// D-series sizes D1..D<largest> with 2^(i-1) slots each.
std::vector<VmSpec> d_series_catalog(int largest = 3);

struct Vm {
    std::string id;
    std::string size;
    int slots = 1;
    std::string rack = "rack-0";
};

struct SlotRef {
    int vm = 0;    ///< index into Cluster::vms
    int slot = 0;  ///< index within the VM

    friend auto operator<=>(const SlotRef&, const SlotRef&) = default;
};

struct Cluster {
    std::vector<Vm> vms;

    int total_slots() const;
    /// VM order, then slot index.
    std::vector<SlotRef> slots() const;
    int vm_index(const std::string& id) const;
};

/// As many of the largest VM as fit in rho, then the smallest VM covering the remainder.
Cluster acquire_vms(int rho, const std::vector<VmSpec>& catalog);

struct ThreadId {
    TaskId task;
    int ordinal = 1;  ///< 1..threads

    friend auto operator<=>(const ThreadId&, const ThreadId&) = default;
};

enum class Mapper { DSM, RSM, SAM };

Mapper parse_mapper(const std::string& name);
std::string to_string(Mapper m);

struct MappingPlan {
    Mapper algorithm = Mapper::DSM;
    int extra_slots = 0;
    std::map<ThreadId, SlotRef> assignment;

    /// task -> thread count, per slot
    std::map<SlotRef, std::map<TaskId, int>> slot_composition() const;
};

class InsufficientResources : public std::runtime_error {
public:
    explicit InsufficientResources(TaskId task)
        : std::runtime_error("insufficient resources for task " + task), task_(std::move(task)) {}
    const TaskId& task() const { return task_; }

private:
    TaskId task_;
};

/// Threads of every task in topological order, ordinal ascending.
std::vector<ThreadId> enumerate_threads(const Dataflow& dataflow, const AllocationPlan& allocation);

/// Round robin over slots in VM/slot order.
MappingPlan map_dsm(const std::vector<ThreadId>& threads, const Cluster& cluster);

struct RsmWeights {
    double cpu = 1.0;
    double mem = 1.0;
    double network = 1.0;
};

/// Available CPU% and memory% of a VM (percent of one slot, summed over the VM's slots).
struct VmAvailability {
    double cpu_pct = 0.0;
    double mem_pct = 0.0;
};

/// 0 for the reference VM itself, 0.5 within its rack, 1 across racks.
double network_distance(const Cluster& cluster, int reference_vm, int candidate_vm);

/// Weighted squared distance between a VM's free resources and one thread's footprint
/// (both in fractions of a slot) plus the weighted network term.
double rsm_distance(const VmAvailability& vm, const SlotResources& thread, double network_dist,
                    const RsmWeights& weights);

/// Single-thread footprint used by the resource-aware mappers.
SlotResources thread_footprint(const TaskDef& task, const ModelRegistry& models);

MappingPlan map_rsm(const Dataflow& dataflow, const AllocationPlan& allocation, const Cluster& cluster,
                    const ModelRegistry& models, const RsmWeights& weights = {});

/// Requires an MBA allocation: bundle sizes come from the models, residual resources
/// from the allocation's per-task totals.
MappingPlan map_sam(const Dataflow& dataflow, const AllocationPlan& allocation, const Cluster& cluster,
                    const ModelRegistry& models);

MappingPlan map_with(Mapper mapper, const Dataflow& dataflow, const AllocationPlan& allocation,
                     const Cluster& cluster, const ModelRegistry& models, const RsmWeights& weights = {});

struct RetryResult {
    MappingPlan plan;
    Cluster cluster;
};

using ClusterFactory = std::function<Cluster(int slots)>;

/// Maps on factory(rho); on InsufficientResources retries with rho+1 .. rho+max_extra.
/// Rethrows the last failure when every attempt fails.
RetryResult map_with_retry(const std::function<MappingPlan(const Cluster&)>& mapper, int rho,
                           const ClusterFactory& factory, int max_extra);

/// Slots hosting threads of more than one task.
int mixed_slot_count(const MappingPlan& plan);

nlohmann::json to_json(const Cluster& cluster);
Cluster cluster_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const MappingPlan& plan, const Cluster& cluster);
MappingPlan mapping_from_json(const nlohmann::json& doc, const Cluster& cluster);

}  // namespace streamsched
