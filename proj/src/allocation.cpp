#include "streamsched/allocation.hpp"

#include <cmath>
#include <numeric>

namespace streamsched {

Allocator parse_allocator(const std::string& name) {
    if (name == "lsa" || name == "LSA") return Allocator::LSA;
    if (name == "mba" || name == "MBA") return Allocator::MBA;
    throw AllocationError("unknown allocator '" + name + "' (expected lsa or mba)");
}

std::string to_string(Allocator a) { return a == Allocator::LSA ? "LSA" : "MBA"; }

const TaskAllocation& AllocationPlan::task(const TaskId& id) const {
    for (const auto& t : tasks)
        if (t.id == id) return t;
    throw AllocationError("allocation has no entry for task '" + id + "'");
}

int AllocationPlan::total_threads() const {
    return std::accumulate(tasks.begin(), tasks.end(), 0, [](int s, const TaskAllocation& t) { return s + t.threads; });
}

namespace {

constexpr double kEps = 1e-9;

// Splits rate into whole multiples of unit plus a remainder in [0, unit).
std::pair<long, double> split_rate(double rate, double unit) {
    long whole = static_cast<long>(std::floor(rate / unit + kEps));
    double rest = rate - static_cast<double>(whole) * unit;
    if (rest < kEps * unit) rest = 0.0;
    return {whole, rest};
}

TaskAllocation lsa_task(const TaskId& id, double rate, const TaskPerfModel& model) {
    const double single = peak_rate(model, 1);
    const auto per_thread = resources(model, 1);
    auto [whole, rest] = split_rate(rate, single);
    TaskAllocation a{id, static_cast<int>(whole), 0.0, 0.0};
    a.cpu_pct = static_cast<double>(whole) * per_thread.cpu_pct;
    a.mem_pct = static_cast<double>(whole) * per_thread.mem_pct;
    if (rest > 0) {
        a.threads += 1;
        a.cpu_pct += per_thread.cpu_pct * rest / single;
        a.mem_pct += per_thread.mem_pct * rest / single;
    }
    return a;
}

TaskAllocation mba_task(const TaskId& id, double rate, const TaskPerfModel& model) {
    const auto best = max_peak(model);
    auto [bundles, rest] = split_rate(rate, best.rate);
    TaskAllocation a{id, static_cast<int>(bundles) * best.threads, 100.0 * static_cast<double>(bundles),
                     100.0 * static_cast<double>(bundles)};
    if (rest > 0) {
        // rest < best.rate, so some thread count always reaches it
        const int q = *threads_for_rate(model, rest);
        a.threads += q;
        if (q > 1) {
            const auto r = resources(model, q);
            a.cpu_pct += r.cpu_pct;
            a.mem_pct += r.mem_pct;
        } else {
            const auto r = resources(model, 1);
            const double scale = rest / peak_rate(model, 1);
            a.cpu_pct += r.cpu_pct * scale;
            a.mem_pct += r.mem_pct * scale;
        }
    }
    return a;
}

template <typename PerTask>
AllocationPlan run_allocator(Allocator algo, const Dataflow& g, double omega, const ModelRegistry& models,
                             PerTask per_task) {
    const RateMap rates = get_rate(g, omega);
    AllocationPlan plan;
    plan.algorithm = algo;
    plan.omega = omega;
    for (const auto& id : topo_order(g)) {
        const TaskDef& t = g.task(id);
        if (t.fixed) {
            plan.tasks.push_back({id, t.fixed->threads, t.fixed->cpu_pct, t.fixed->mem_pct});
            continue;
        }
        const auto& model = models.at(t.kind);
        const double rate = rates.at(id);
        if (rate <= 0) {
            // unreachable task: still deployed with one idle thread
            plan.tasks.push_back({id, 1, 0.0, 0.0});
            continue;
        }
        plan.tasks.push_back(per_task(id, rate, model));
    }
    plan.rho = slot_count(plan.tasks);
    return plan;
}

}  // namespace

AllocationPlan allocate_lsa(const Dataflow& g, double omega, const ModelRegistry& models) {
    return run_allocator(Allocator::LSA, g, omega, models, lsa_task);
}

AllocationPlan allocate_mba(const Dataflow& g, double omega, const ModelRegistry& models) {
    return run_allocator(Allocator::MBA, g, omega, models, mba_task);
}

AllocationPlan allocate(Allocator algorithm, const Dataflow& g, double omega, const ModelRegistry& models) {
    return algorithm == Allocator::LSA ? allocate_lsa(g, omega, models) : allocate_mba(g, omega, models);
}

int slot_count(const std::vector<TaskAllocation>& tasks) {
    double cpu = 0, mem = 0;
    for (const auto& t : tasks) {
        cpu += t.cpu_pct;
        mem += t.mem_pct;
    }
    const auto slots = [](double pct) { return static_cast<int>(std::ceil(pct / 100.0 - 1e-9)); };
    return std::max({1, slots(cpu), slots(mem)});
}

nlohmann::json to_json(const AllocationPlan& plan) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : plan.tasks)
        tasks.push_back({{"id", t.id}, {"threads", t.threads}, {"cpu", t.cpu_pct}, {"mem", t.mem_pct}});
    return {{"algorithm", to_string(plan.algorithm)}, {"omega", plan.omega}, {"rho", plan.rho}, {"tasks", tasks}};
}

AllocationPlan allocation_from_json(const nlohmann::json& doc) {
    try {
        AllocationPlan plan;
        plan.algorithm = parse_allocator(doc.at("algorithm").get<std::string>());
        plan.omega = doc.at("omega").get<double>();
        plan.rho = doc.at("rho").get<int>();
        for (const auto& t : doc.at("tasks"))
            plan.tasks.push_back({t.at("id").get<std::string>(), t.at("threads").get<int>(), t.at("cpu").get<double>(),
                                  t.at("mem").get<double>()});
        return plan;
    } catch (const nlohmann::json::exception& ex) {
        throw AllocationError(std::string("malformed allocation document: ") + ex.what());
    }
}

}  // namespace streamsched
