#include "streamsched/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace streamsched {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Layout {
    std::map<SlotRef, std::map<TaskId, int>> composition;
    std::map<TaskId, int> total_threads;
};

Layout layout_of(const Dataflow& g, const MappingPlan& mapping) {
    Layout l;
    l.composition = mapping.slot_composition();
    for (const auto& [thread, slot] : mapping.assignment) {
        if (!g.find(thread.task)) throw std::invalid_argument("mapping references unknown task '" + thread.task + "'");
        ++l.total_threads[thread.task];
    }
    for (const auto& t : g.tasks)
        if (!l.total_threads.count(t.id)) throw std::invalid_argument("task '" + t.id + "' has no mapped threads");
    return l;
}

}  // namespace

std::vector<double> shuffle_split(double omega, const std::vector<int>& threads_per_slot) {
    long total = 0;
    for (int n : threads_per_slot) {
        if (n < 0) throw std::invalid_argument("negative thread count");
        total += n;
    }
    if (total == 0) throw std::invalid_argument("no threads to split the rate over");
    std::vector<double> out;
    out.reserve(threads_per_slot.size());
    for (int n : threads_per_slot) out.push_back(omega * n / static_cast<double>(total));
    return out;
}

std::map<TaskId, double> slot_capacity(const std::map<TaskId, int>& composition, const Dataflow& g,
                                       const ModelRegistry& models, const std::map<TaskId, double>* incoming) {
    double cpu = 0.0, mem = 0.0;
    std::map<TaskId, double> out;
    for (const auto& [id, q] : composition) {
        const TaskDef& t = g.task(id);
        if (t.fixed) {
            cpu += t.fixed->cpu_pct * q / t.fixed->threads;
            mem += t.fixed->mem_pct * q / t.fixed->threads;
            out[id] = kInf;
            continue;
        }
        const auto& m = models.at(t.kind);
        const double peak = peak_rate(m, q);
        const auto r = resources(m, q);
        double load = 1.0;
        if (incoming) {
            auto it = incoming->find(id);
            load = it == incoming->end() ? 0.0 : std::clamp(it->second / peak, 0.0, 1.0);
        }
        cpu += r.cpu_pct * load;
        mem += r.mem_pct * load;
        out[id] = peak;
    }
    if (composition.size() > 1) {
        double scale = 1.0;
        if (cpu > 100.0) scale = std::min(scale, 100.0 / cpu);
        if (mem > 100.0) scale = std::min(scale, 100.0 / mem);
        for (auto& [id, cap] : out)
            if (std::isfinite(cap)) cap *= scale;
    }
    return out;
}

std::vector<SlotLoad> slot_loads(const Dataflow& g, const MappingPlan& mapping, const ModelRegistry& models,
                                 double omega) {
    const Layout l = layout_of(g, mapping);
    const RateMap rates = get_rate(g, omega);
    std::vector<SlotLoad> out;
    for (const auto& [slot, comp] : l.composition) {
        std::map<TaskId, double> incoming;
        for (const auto& [id, q] : comp) incoming[id] = rates.at(id) * q / l.total_threads.at(id);
        const auto caps = slot_capacity(comp, g, models, &incoming);
        SlotLoad s{slot, {}};
        for (const auto& [id, q] : comp) s.tasks[id] = {q, incoming.at(id), caps.at(id)};
        out.push_back(std::move(s));
    }
    return out;
}

double predict_rate(const Dataflow& g, const MappingPlan& mapping, const ModelRegistry& models) {
    // Contention only ever lowers capacity, so uncontended capacity over unit gain bounds the search.
    std::map<TaskId, double> total_cap, gain;
    for (const auto& s : slot_loads(g, mapping, models, 0.0))
        for (const auto& [id, load] : s.tasks)
            if (std::isfinite(load.capacity)) total_cap[id] += load.capacity;
    for (const auto& s : slot_loads(g, mapping, models, 1.0))
        for (const auto& [id, load] : s.tasks) gain[id] += load.rate;
    double bound = kInf;
    for (const auto& [id, cap] : total_cap)
        if (gain[id] > 0) bound = std::min(bound, cap / gain[id]);
    if (!std::isfinite(bound)) throw std::invalid_argument("no modelled task limits the input rate");

    auto feasible = [&](double omega) {
        for (const auto& s : slot_loads(g, mapping, models, omega))
            for (const auto& [id, load] : s.tasks)
                if (load.rate > load.capacity * (1.0 + 1e-12)) return false;
        return true;
    };
    double lo = 0.0, hi = 10.0 * bound;
    while (hi - lo > 0.1) {
        const double mid = 0.5 * (lo + hi);
        (feasible(mid) ? lo : hi) = mid;
    }
    return lo;
}

SlotResources group_usage(const TaskDef& task, int threads, double rate, const ModelRegistry& models) {
    if (task.fixed)
        return {task.fixed->cpu_pct * threads / task.fixed->threads, task.fixed->mem_pct * threads / task.fixed->threads};
    const auto& m = models.at(task.kind);
    const auto r = resources(m, threads);
    const double scale = std::clamp(rate / peak_rate(m, threads), 0.0, 1.0);
    return {r.cpu_pct * scale, r.mem_pct * scale};
}

std::vector<VmUsage> predict_utilization(const Dataflow& g, const MappingPlan& mapping, const Cluster& cluster,
                                         const ModelRegistry& models, double omega) {
    std::vector<VmUsage> vms;
    for (const auto& v : cluster.vms) vms.push_back({v.id, v.slots, 0.0, 0.0});
    for (const auto& s : slot_loads(g, mapping, models, omega)) {
        auto& vm = vms.at(s.slot.vm);
        for (const auto& [id, load] : s.tasks) {
            const auto u = group_usage(g.task(id), load.threads, load.rate, models);
            vm.cpu_pct += u.cpu_pct;
            vm.mem_pct += u.mem_pct;
        }
    }
    for (auto& vm : vms) {
        vm.cpu_pct = std::min(vm.cpu_pct, 100.0 * vm.slots);
        vm.mem_pct = std::min(vm.mem_pct, 100.0 * vm.slots);
    }
    return vms;
}

Prediction predict(const Dataflow& g, const MappingPlan& mapping, const Cluster& cluster, const ModelRegistry& models) {
    Prediction p;
    p.predicted_rate = predict_rate(g, mapping, models);
    p.vms = predict_utilization(g, mapping, cluster, models, p.predicted_rate);
    p.slots = slot_loads(g, mapping, models, p.predicted_rate);

    // the binding group is the one closest to saturation
    double worst = -1.0;
    for (const auto& s : p.slots)
        for (const auto& [id, load] : s.tasks) {
            if (!std::isfinite(load.capacity) || load.capacity <= 0) continue;
            const double util = load.rate / load.capacity;
            if (util > worst) {
                worst = util;
                p.mixed_slot_binds = s.tasks.size() > 1;
            }
        }
    return p;
}

nlohmann::json to_json(const VmUsage& u) {
    return {{"id", u.id}, {"slots", u.slots}, {"cpu", u.cpu_pct}, {"mem", u.mem_pct}};
}

nlohmann::json to_json(const Prediction& p, const Cluster& cluster) {
    nlohmann::json vms = nlohmann::json::array(), slots = nlohmann::json::array();
    for (const auto& v : p.vms) vms.push_back(to_json(v));
    for (const auto& s : p.slots) {
        nlohmann::json tasks = nlohmann::json::array();
        for (const auto& [id, load] : s.tasks) {
            nlohmann::json row = {{"task", id}, {"threads", load.threads}, {"rate", load.rate}};
            row["capacity"] = std::isfinite(load.capacity) ? nlohmann::json(load.capacity) : nlohmann::json(nullptr);
            tasks.push_back(row);
        }
        slots.push_back({{"vm", cluster.vms.at(s.slot.vm).id}, {"slot", s.slot.slot}, {"tasks", tasks}});
    }
    return {{"predicted_rate", p.predicted_rate}, {"mixed_slot_binds", p.mixed_slot_binds}, {"vms", vms},
            {"slots", slots}};
}

}  // namespace streamsched
