#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "streamsched/dag.hpp"
#include "streamsched/mapping.hpp"
#include "streamsched/perf_model.hpp"
#include "streamsched/predictor.hpp"

namespace streamsched {

struct SimConfig {
    double duration = 120.0;  ///< simulated seconds
    double warmup = 20.0;
    std::uint64_t seed = 42;
    double tick = 1.0;        ///< backlog sampling interval
    double omega = 0.0;       ///< offered rate per source
    double lambda_latency_max = kDefaultLatencySlopeMax;
    /// A latency slope above lambda_latency_max only counts as growth when it is this many
    /// standard errors above zero (batch-means estimate); <= 0 disables the check.
    double significance = 3.0;
    int batches = 10;
    bool record_trace = false;

    void validate() const;
};

struct LatencyStats {
    std::size_t samples = 0;
    double mean = 0.0;
    double p50 = 0.0;
    double p99 = 0.0;
    double slope = 0.0;        ///< seconds of latency per second of sink arrival time
    double slope_stderr = 0.0;
};

struct TraceRow {
    std::uint64_t tuple_id = 0;
    double emit_time = 0.0;
    double sink_time = 0.0;
};

struct SimReport {
    double omega = 0.0;
    bool stable = true;
    bool latency_growth = false;
    bool backlog_growth = false;
    LatencyStats latency;
    std::vector<VmUsage> vms;                    ///< usage at the observed per-group rates
    std::map<TaskId, double> throughput;         ///< completions/sec after warm-up
    std::map<TaskId, std::size_t> max_queue;     ///< largest backlog seen per task (summed over its groups)
    std::uint64_t events = 0;
    std::vector<TraceRow> trace;
};

SimReport simulate(const Dataflow& dataflow, const MappingPlan& mapping, const Cluster& cluster,
                   const ModelRegistry& models, const SimConfig& config);

struct MaxRateResult {
    double rate = 0.0;
    int runs = 0;
    bool unstable_at_start = false;
};

/// Ascends start, start+step, ... (start defaults to step) and returns the last stable rate
/// before the first unstable one. If `start` is already unstable the ascent restarts from step.
/// Returns 0 when even `step` is unstable.
MaxRateResult find_max_stable_rate(const Dataflow& dataflow, const MappingPlan& mapping, const Cluster& cluster,
                                   const ModelRegistry& models, double step, const SimConfig& config,
                                   double start = 0.0);

/// Same answer as find_max_stable_rate; evaluates a window of candidate rates concurrently.
MaxRateResult find_max_stable_rate_parallel(const Dataflow& dataflow, const MappingPlan& mapping,
                                            const Cluster& cluster, const ModelRegistry& models, double step,
                                            const SimConfig& config, double start = 0.0);

struct VmDelta {
    std::string id;
    double cpu_points = 0.0;  ///< predicted - observed, percent of the VM's capacity
    double mem_points = 0.0;
};

struct Accuracy {
    double rate_error = 0.0;  ///< (predicted - simulated) / simulated
    std::vector<VmDelta> vms;
    double max_cpu_delta = 0.0;
    double max_mem_delta = 0.0;
    double cpu_correlation = 1.0;
    double mem_correlation = 1.0;
};

Accuracy compare(const Prediction& prediction, double simulated_rate, const std::vector<VmUsage>& observed);

nlohmann::json to_json(const SimReport& report);
nlohmann::json to_json(const Accuracy& accuracy);
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace streamsched
