#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "streamsched/allocation.hpp"
#include "streamsched/dag.hpp"
#include "streamsched/mapping.hpp"
#include "streamsched/perf_model.hpp"
#include "streamsched/predictor.hpp"
#include "streamsched/simulator.hpp"

namespace streamsched {

struct Schedule {
    AllocationPlan allocation;
    Cluster cluster;
    MappingPlan mapping;
};

/// Allocate, acquire VMs from the catalog and map, adding one slot at a time (up to
/// max_extra) when the mapper runs out of room. Throws std::invalid_argument for SAM over LSA.
Schedule make_schedule(const Dataflow& dataflow, double omega, Allocator allocator, Mapper mapper,
                       const ModelRegistry& models, const std::vector<VmSpec>& catalog, int max_extra = 256,
                       const RsmWeights& weights = {});

/// The five allocator/mapper pairs that make sense (SAM only follows MBA).
std::vector<std::pair<Allocator, Mapper>> valid_pairs();

struct ExperimentSpec {
    std::string dag_name = "dag";
    Dataflow dataflow;
    std::vector<double> rates;
    std::vector<std::pair<Allocator, Mapper>> pairs = valid_pairs();
    std::vector<VmSpec> catalog = d_series_catalog(3);
    /// When set, each pair searches the largest plannable rate on this cluster instead of using `rates`.
    std::optional<Cluster> fixed_cluster;
    double plan_step = 10.0;
    SimConfig sim;
    double sim_step = 10.0;
    /// The simulated search starts at this fraction of the predicted rate (rounded down to
    /// a multiple of sim_step); 0 ascends from sim_step.
    double search_start_fraction = 0.0;
    int max_extra = 256;
};

struct CellResult {
    Allocator allocator = Allocator::MBA;
    Mapper mapper = Mapper::SAM;
    double omega = 0.0;  ///< rate the schedule was planned for
    bool ok = false;
    std::string error;
    int rho = 0;
    int extra_slots = 0;
    std::size_t vm_count = 0;
    double predicted_rate = 0.0;
    double simulated_rate = 0.0;
    std::vector<VmUsage> predicted_vms;
    std::vector<VmUsage> simulated_vms;
    Accuracy accuracy;
};

/// One (allocator, mapper, rate) cell. Errors are captured in the result.
CellResult run_cell(const ExperimentSpec& spec, Allocator allocator, Mapper mapper, double omega,
                    const ModelRegistry& models);

/// Largest multiple of spec.plan_step whose allocation fits the fixed cluster and maps onto it.
/// Returns 0 when even one step does not fit.
double max_plannable_rate(const ExperimentSpec& spec, Allocator allocator, Mapper mapper, const ModelRegistry& models);

std::vector<CellResult> evaluate(const ExperimentSpec& spec, const ModelRegistry& models);
/// Same cells, same order; cells run concurrently.
std::vector<CellResult> evaluate_parallel(const ExperimentSpec& spec, const ModelRegistry& models);

nlohmann::json to_json(const CellResult& cell);
void write_summary_csv(std::ostream& out, const std::string& dag_name, const std::vector<CellResult>& cells);

}  // namespace streamsched
