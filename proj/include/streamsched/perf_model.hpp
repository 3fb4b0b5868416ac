#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace streamsched {

/// Peak stable rate and incremental resource use of one task with `threads` threads on one slot.
/// cpu_pct and mem_pct are percentages of a single slot (100 = the whole slot).
struct ModelPoint {
    int threads = 1;
    double peak_rate = 0.0;
    double cpu_pct = 0.0;
    double mem_pct = 0.0;

    friend bool operator==(const ModelPoint&, const ModelPoint&) = default;
};

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sampled thread-count -> (rate, cpu, mem) profile of one task kind.
///
/// Queries between sampled thread counts interpolate linearly; queries past the
/// last sample clamp to it.
class TaskPerfModel {
public:
    TaskPerfModel() = default;
    /// Sorts by thread count; rejects duplicates, non-positive rates and thread counts < 1.
    TaskPerfModel(std::string kind, std::vector<ModelPoint> points);

    const std::string& kind() const { return kind_; }
    const std::vector<ModelPoint>& points() const { return points_; }
    bool empty() const { return points_.empty(); }
    int max_threads() const;

    /// Free-form provenance notes carried through the model file.
    nlohmann::json provenance = nlohmann::json::object();

private:
    std::string kind_;
    std::vector<ModelPoint> points_;
};

struct SlotResources {
    double cpu_pct = 0.0;
    double mem_pct = 0.0;
};

struct MaxPeak {
    double rate = 0.0;
    int threads = 0;
};

/// Peak input rate with q threads on one slot.
double peak_rate(const TaskPerfModel& model, int q);

/// Incremental CPU% and memory% with q threads on one slot.
SlotResources resources(const TaskPerfModel& model, int q);

/// Smallest thread count whose peak rate reaches omega; nullopt above the model's best rate.
std::optional<int> threads_for_rate(const TaskPerfModel& model, double omega);

/// Best rate over all thread counts and the smallest thread count reaching it.
MaxPeak max_peak(const TaskPerfModel& model);

// -- stability ---------------------------------------------------------------

struct LatencySample {
    double time = 0.0;     ///< seconds since trial start
    double latency = 0.0;  ///< seconds
};

struct StabilityVerdict {
    double slope = 0.0;  ///< least-squares latency growth, seconds of latency per second
    bool stable = true;
};

inline constexpr double kDefaultLatencySlopeMax = 0.001;
inline constexpr double kDefaultRateSlopeMin = -0.001;

/// Least-squares slope of latency against time over samples at or after `warmup`.
/// Throws ModelError with fewer than two such samples.
StabilityVerdict detect_stability(const std::vector<LatencySample>& series, double warmup,
                                  double lambda_max = kDefaultLatencySlopeMax);

// -- model building ------------------------------------------------------------

struct TrialResult {
    double cpu_pct = 0.0;
    double mem_pct = 0.0;
    bool is_stable = false;
    /// When non-empty, the builder re-derives stability from it.
    std::vector<LatencySample> latency_series;
};

using TrialRunner = std::function<TrialResult(int threads, double omega)>;

struct BuildParams {
    /// Thread counts to try, ascending. Empty means the default schedule.
    std::vector<int> thread_schedule;
    /// Fixed rate step; <= 0 selects 5% of the last stable rate (at least 1).
    double delta_omega = 0.0;
    int tau_max = 100;
    double omega_max = 1e6;
    double lambda_omega_min = kDefaultRateSlopeMin;
    double lambda_latency_max = kDefaultLatencySlopeMax;
    double warmup = 0.0;
    int slope_window = 3;
};

enum class BuildStop { ThreadLimit, RateSlope, ScheduleExhausted };

struct BuildOutcome {
    TaskPerfModel model;
    BuildStop stopped_by = BuildStop::ThreadLimit;
    int trials = 0;
};

std::vector<int> default_thread_schedule();

/// Sweeps thread counts and, for each, input rates until the first unstable trial,
/// keeping the highest stable rate per thread count.
BuildOutcome build_model(const std::string& kind, const TrialRunner& runner, const BuildParams& params = {});

// -- registry / files ------------------------------------------------------------

class ModelRegistry {
public:
    void add(TaskPerfModel model);
    bool contains(const std::string& kind) const { return models_.count(kind) != 0; }
    const TaskPerfModel& at(const std::string& kind) const;
    const std::map<std::string, TaskPerfModel>& all() const { return models_; }

    /// Loads every *.json model file in a directory.
    static ModelRegistry load_dir(const std::string& dir);

private:
    std::map<std::string, TaskPerfModel> models_;
};

nlohmann::json to_json(const TaskPerfModel& model);
TaskPerfModel model_from_json(const nlohmann::json& doc);

std::string to_string(BuildStop stop);

}  // namespace streamsched
