#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "streamsched/dag.hpp"
#include "streamsched/perf_model.hpp"

namespace streamsched {

enum class Allocator { LSA, MBA };

Allocator parse_allocator(const std::string& name);
std::string to_string(Allocator a);

/// Threads and cumulative resource estimate for one task. cpu/mem are percentages of
/// one slot and may exceed 100.
struct TaskAllocation {
    TaskId id;
    int threads = 1;
    double cpu_pct = 0.0;
    double mem_pct = 0.0;
};

struct AllocationPlan {
    Allocator algorithm = Allocator::MBA;
    double omega = 0.0;
    int rho = 1;
    std::vector<TaskAllocation> tasks;  ///< topological order

    const TaskAllocation& task(const TaskId& id) const;
    int total_threads() const;
};

class AllocationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear scaling: ceil(omega_i / I(1)) threads, resources scaled from the single-thread sample.
AllocationPlan allocate_lsa(const Dataflow& dataflow, double omega, const ModelRegistry& models);

/// Model-based: full bundles at the model's best rate take a whole slot each; the residual
/// rate gets the fewest threads that sustain it.
AllocationPlan allocate_mba(const Dataflow& dataflow, double omega, const ModelRegistry& models);

AllocationPlan allocate(Allocator algorithm, const Dataflow& dataflow, double omega, const ModelRegistry& models);

/// max(ceil(sum cpu / 100), ceil(sum mem / 100)), never below 1.
int slot_count(const std::vector<TaskAllocation>& tasks);

nlohmann::json to_json(const AllocationPlan& plan);
AllocationPlan allocation_from_json(const nlohmann::json& doc);

}  // namespace streamsched
