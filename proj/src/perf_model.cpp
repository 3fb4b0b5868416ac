#include "streamsched/perf_model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace streamsched {

TaskPerfModel::TaskPerfModel(std::string kind, std::vector<ModelPoint> points)
    : kind_(std::move(kind)), points_(std::move(points)) {
    std::sort(points_.begin(), points_.end(),
              [](const ModelPoint& a, const ModelPoint& b) { return a.threads < b.threads; });
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const auto& p = points_[i];
        if (p.threads < 1) throw ModelError(kind_ + ": thread count must be >= 1");
        if (!(p.peak_rate > 0)) throw ModelError(kind_ + ": peak rate must be positive");
        if (p.cpu_pct < 0 || p.mem_pct < 0) throw ModelError(kind_ + ": negative resource usage");
        if (i > 0 && points_[i - 1].threads == p.threads)
            throw ModelError(kind_ + ": duplicate thread count " + std::to_string(p.threads));
    }
}

int TaskPerfModel::max_threads() const { return points_.empty() ? 0 : points_.back().threads; }

namespace {

template <typename Field>
double interpolate(const TaskPerfModel& model, int q, Field field) {
    const auto& pts = model.points();
    if (pts.empty()) throw ModelError("empty performance model for '" + model.kind() + "'");
    if (q < 1) throw ModelError("thread count must be >= 1");
    if (q <= pts.front().threads) return field(pts.front());
    if (q >= pts.back().threads) return field(pts.back());
    auto hi = std::lower_bound(pts.begin(), pts.end(), q,
                               [](const ModelPoint& p, int t) { return p.threads < t; });
    if (hi->threads == q) return field(*hi);
    auto lo = hi - 1;
    const double w = static_cast<double>(q - lo->threads) / static_cast<double>(hi->threads - lo->threads);
    return field(*lo) + w * (field(*hi) - field(*lo));
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0 ? sxy / sxx : 0.0;
}

}  // namespace

double peak_rate(const TaskPerfModel& model, int q) {
    return interpolate(model, q, [](const ModelPoint& p) { return p.peak_rate; });
}

SlotResources resources(const TaskPerfModel& model, int q) {
    return {interpolate(model, q, [](const ModelPoint& p) { return p.cpu_pct; }),
            interpolate(model, q, [](const ModelPoint& p) { return p.mem_pct; })};
}

std::optional<int> threads_for_rate(const TaskPerfModel& model, double omega) {
    if (model.empty()) throw ModelError("empty performance model for '" + model.kind() + "'");
    const double tol = 1e-9 * std::max(1.0, std::abs(omega));
    for (int q = 1; q <= model.max_threads(); ++q)
        if (peak_rate(model, q) >= omega - tol) return q;
    return std::nullopt;
}

MaxPeak max_peak(const TaskPerfModel& model) {
    if (model.empty()) throw ModelError("empty performance model for '" + model.kind() + "'");
    double best = 0.0;
    for (const auto& p : model.points()) best = std::max(best, p.peak_rate);
    return {best, *threads_for_rate(model, best)};
}

StabilityVerdict detect_stability(const std::vector<LatencySample>& series, double warmup, double lambda_max) {
    std::vector<double> t, l;
    for (const auto& s : series) {
        if (s.time < warmup) continue;
        t.push_back(s.time);
        l.push_back(s.latency);
    }
    if (t.size() < 2) throw ModelError("need at least two latency samples past warm-up");
    StabilityVerdict v;
    v.slope = least_squares_slope(t, l);
    v.stable = v.slope <= lambda_max;
    return v;
}

std::vector<int> default_thread_schedule() { return {1, 2, 3, 5, 7, 10, 15, 20, 30, 40, 50, 60}; }

BuildOutcome build_model(const std::string& kind, const TrialRunner& runner, const BuildParams& params) {
    const auto schedule = params.thread_schedule.empty() ? default_thread_schedule() : params.thread_schedule;
    BuildOutcome out;
    out.stopped_by = BuildStop::ScheduleExhausted;

    std::vector<ModelPoint> points;
    std::vector<double> taus, peaks;
    for (int tau : schedule) {
        if (tau >= params.tau_max) {
            out.stopped_by = BuildStop::ThreadLimit;
            break;
        }
        std::optional<ModelPoint> best;
        double omega = 1.0;
        while (omega <= params.omega_max) {
            TrialResult r = runner(tau, omega);
            ++out.trials;
            const bool stable = r.latency_series.empty()
                                    ? r.is_stable
                                    : detect_stability(r.latency_series, params.warmup, params.lambda_latency_max).stable;
            if (!stable) break;
            best = ModelPoint{tau, omega, r.cpu_pct, r.mem_pct};
            omega += params.delta_omega > 0 ? params.delta_omega : std::max(1.0, 0.05 * omega);
        }
        if (!best && points.empty())
            throw ModelError(kind + ": unstable at the lowest rate with " + std::to_string(tau) +
                             " thread(s); task cannot be modeled at this granularity");
        if (best) points.push_back(*best);

        taus.push_back(tau);
        peaks.push_back(best ? best->peak_rate : 0.0);
        if (taus.size() >= 2) {
            const std::size_t w = std::min<std::size_t>(std::max(2, params.slope_window), taus.size());
            const std::vector<double> wx(taus.end() - static_cast<long>(w), taus.end());
            const std::vector<double> wy(peaks.end() - static_cast<long>(w), peaks.end());
            // Flat (within tolerance) or falling peak rates end the thread sweep.
            if (least_squares_slope(wx, wy) <= std::abs(params.lambda_omega_min)) {
                out.stopped_by = BuildStop::RateSlope;
                break;
            }
        }
    }
    out.model = TaskPerfModel(kind, std::move(points));
    return out;
}

std::string to_string(BuildStop stop) {
    switch (stop) {
        case BuildStop::ThreadLimit: return "thread-limit";
        case BuildStop::RateSlope: return "rate-slope";
        case BuildStop::ScheduleExhausted: return "schedule-exhausted";
    }
    return "?";
}

void ModelRegistry::add(TaskPerfModel model) {
    const std::string kind = model.kind();
    models_[kind] = std::move(model);
}

const TaskPerfModel& ModelRegistry::at(const std::string& kind) const {
    auto it = models_.find(kind);
    if (it == models_.end()) throw ModelError("no performance model for task kind '" + kind + "'");
    return it->second;
}

ModelRegistry ModelRegistry::load_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ModelError("model directory '" + dir + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    ModelRegistry reg;
    for (const auto& path : files) {
        std::ifstream in(path);
        try {
            reg.add(model_from_json(nlohmann::json::parse(in)));
        } catch (const nlohmann::json::exception& ex) {
            throw ModelError(path.string() + ": " + ex.what());
        }
    }
    return reg;
}

nlohmann::json to_json(const TaskPerfModel& model) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : model.points())
        pts.push_back({{"threads", p.threads}, {"peak_rate", p.peak_rate}, {"cpu", p.cpu_pct}, {"mem", p.mem_pct}});
    return {{"kind", model.kind()}, {"points", pts}, {"provenance", model.provenance}};
}

TaskPerfModel model_from_json(const nlohmann::json& doc) {
    std::vector<ModelPoint> pts;
    for (const auto& p : doc.at("points"))
        pts.push_back({p.at("threads").get<int>(), p.at("peak_rate").get<double>(), p.at("cpu").get<double>(),
                       p.at("mem").get<double>()});
    TaskPerfModel m(doc.at("kind").get<std::string>(), std::move(pts));
    if (doc.contains("provenance")) m.provenance = doc.at("provenance");
    return m;
}

}  // namespace streamsched
