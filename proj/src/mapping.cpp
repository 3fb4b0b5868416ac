#include "streamsched/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace streamsched {

namespace {
constexpr double kEps = 1e-9;
}

std::vector<VmSpec> d_series_catalog(int largest) {
    static const double kPrices[] = {0.098, 0.196, 0.392, 0.784};
    std::vector<VmSpec> out;
    for (int i = 1; i <= std::clamp(largest, 1, 4); ++i)
        out.push_back({"D" + std::to_string(i), 1 << (i - 1), kPrices[i - 1]});
    return out;
}

int Cluster::total_slots() const {
    int n = 0;
    for (const auto& v : vms) n += v.slots;
    return n;
}

std::vector<SlotRef> Cluster::slots() const {
    std::vector<SlotRef> out;
    for (int v = 0; v < static_cast<int>(vms.size()); ++v)
        for (int s = 0; s < vms[v].slots; ++s) out.push_back({v, s});
    return out;
}

int Cluster::vm_index(const std::string& id) const {
    for (int v = 0; v < static_cast<int>(vms.size()); ++v)
        if (vms[v].id == id) return v;
    throw std::invalid_argument("cluster has no VM '" + id + "'");
}

Cluster acquire_vms(int rho, const std::vector<VmSpec>& catalog) {
    if (rho < 1) throw std::invalid_argument("slot count must be >= 1");
    if (catalog.empty()) throw std::invalid_argument("empty VM catalog");

    auto by_slots_then_price = [](const VmSpec& a, const VmSpec& b) {
        return a.slots != b.slots ? a.slots < b.slots : a.price_per_hour < b.price_per_hour;
    };
    std::vector<VmSpec> sorted = catalog;
    std::stable_sort(sorted.begin(), sorted.end(), by_slots_then_price);
    const int largest_slots = sorted.back().slots;
    const VmSpec largest = *std::find_if(sorted.begin(), sorted.end(),
                                         [&](const VmSpec& s) { return s.slots == largest_slots; });

    Cluster c;
    auto add = [&](const VmSpec& spec) {
        c.vms.push_back({"vm" + std::to_string(c.vms.size() + 1), spec.size, spec.slots, "rack-0"});
    };
    const int n = rho / largest.slots;
    for (int i = 0; i < n; ++i) add(largest);
    const int rest = rho - n * largest.slots;
    if (rest > 0) {
        auto fit = std::find_if(sorted.begin(), sorted.end(), [&](const VmSpec& s) { return s.slots >= rest; });
        add(*fit);
    }
    return c;
}

Mapper parse_mapper(const std::string& name) {
    if (name == "dsm" || name == "DSM") return Mapper::DSM;
    if (name == "rsm" || name == "RSM") return Mapper::RSM;
    if (name == "sam" || name == "SAM") return Mapper::SAM;
    throw std::invalid_argument("unknown mapper '" + name + "' (expected dsm, rsm or sam)");
}

std::string to_string(Mapper m) {
    switch (m) {
        case Mapper::DSM: return "DSM";
        case Mapper::RSM: return "RSM";
        case Mapper::SAM: return "SAM";
    }
    return "?";
}

std::map<SlotRef, std::map<TaskId, int>> MappingPlan::slot_composition() const {
    std::map<SlotRef, std::map<TaskId, int>> out;
    for (const auto& [thread, slot] : assignment) ++out[slot][thread.task];
    return out;
}

std::vector<ThreadId> enumerate_threads(const Dataflow& g, const AllocationPlan& allocation) {
    std::vector<ThreadId> out;
    for (const auto& id : topo_order(g)) {
        const int n = allocation.task(id).threads;
        for (int k = 1; k <= n; ++k) out.push_back({id, k});
    }
    return out;
}

MappingPlan map_dsm(const std::vector<ThreadId>& threads, const Cluster& cluster) {
    const auto slots = cluster.slots();
    if (slots.empty()) throw std::invalid_argument("cluster has no slots");
    MappingPlan plan;
    plan.algorithm = Mapper::DSM;
    for (std::size_t n = 0; n < threads.size(); ++n) plan.assignment[threads[n]] = slots[n % slots.size()];
    return plan;
}

double network_distance(const Cluster& cluster, int reference_vm, int candidate_vm) {
    if (reference_vm == candidate_vm) return 0.0;
    return cluster.vms.at(reference_vm).rack == cluster.vms.at(candidate_vm).rack ? 0.5 : 1.0;
}

double rsm_distance(const VmAvailability& vm, const SlotResources& thread, double network_dist,
                    const RsmWeights& w) {
    const double dm = (vm.mem_pct - thread.mem_pct) / 100.0;
    const double dc = (vm.cpu_pct - thread.cpu_pct) / 100.0;
    return w.mem * dm * dm + w.cpu * dc * dc + w.network * network_dist;
}

SlotResources thread_footprint(const TaskDef& task, const ModelRegistry& models) {
    if (task.fixed) {
        const double n = task.fixed->threads;
        return {task.fixed->cpu_pct / n, task.fixed->mem_pct / n};
    }
    return resources(models.at(task.kind), 1);
}

MappingPlan map_rsm(const Dataflow& g, const AllocationPlan& allocation, const Cluster& cluster,
                    const ModelRegistry& models, const RsmWeights& weights) {
    const int nvm = static_cast<int>(cluster.vms.size());
    if (nvm == 0) throw std::invalid_argument("cluster has no VMs");
    std::vector<VmAvailability> vm_free(nvm);
    std::vector<std::vector<double>> slot_mem(nvm);
    for (int v = 0; v < nvm; ++v) {
        vm_free[v] = {100.0 * cluster.vms[v].slots, 100.0 * cluster.vms[v].slots};
        slot_mem[v].assign(cluster.vms[v].slots, 100.0);
    }

    const auto order = topo_order(g);
    std::map<TaskId, int> pending, mapped;
    std::map<TaskId, SlotResources> footprint;
    int remaining = 0;
    for (const auto& id : order) {
        pending[id] = allocation.task(id).threads;
        remaining += pending[id];
        footprint[id] = thread_footprint(g.task(id), models);
    }

    MappingPlan plan;
    plan.algorithm = Mapper::RSM;
    int reference = 0;
    std::vector<int> candidates(nvm);
    while (remaining > 0) {
        for (const auto& id : order) {
            if (pending[id] == 0) continue;
            const auto& need = footprint[id];
            std::vector<double> dist(nvm);
            for (int v = 0; v < nvm; ++v)
                dist[v] = rsm_distance(vm_free[v], need, network_distance(cluster, reference, v), weights);
            for (int v = 0; v < nvm; ++v) candidates[v] = v;
            std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) { return dist[a] < dist[b]; });

            std::optional<SlotRef> chosen;
            for (int v : candidates) {
                if (vm_free[v].cpu_pct + kEps < need.cpu_pct) continue;
                for (int s = 0; s < cluster.vms[v].slots; ++s) {
                    if (slot_mem[v][s] + kEps >= need.mem_pct) {
                        chosen = SlotRef{v, s};
                        break;
                    }
                }
                if (chosen) break;
            }
            if (!chosen) throw InsufficientResources(id);

            plan.assignment[{id, ++mapped[id]}] = *chosen;
            vm_free[chosen->vm].cpu_pct -= need.cpu_pct;
            vm_free[chosen->vm].mem_pct -= need.mem_pct;
            slot_mem[chosen->vm][chosen->slot] -= need.mem_pct;
            --pending[id];
            --remaining;
            reference = chosen->vm;
        }
    }
    return plan;
}

namespace {

struct SamSlot {
    double cpu = 100.0;
    double mem = 100.0;
    bool used = false;
    bool full_bundle = false;
};

}  // namespace

MappingPlan map_sam(const Dataflow& g, const AllocationPlan& allocation, const Cluster& cluster,
                    const ModelRegistry& models) {
    if (allocation.algorithm != Allocator::MBA)
        throw std::invalid_argument("slot-aware mapping needs an MBA allocation");
    const int nvm = static_cast<int>(cluster.vms.size());
    if (nvm == 0) throw std::invalid_argument("cluster has no VMs");

    std::vector<std::vector<SamSlot>> slots(nvm);
    for (int v = 0; v < nvm; ++v) slots[v].resize(cluster.vms[v].slots);

    const auto order = topo_order(g);
    struct Need {
        int pending = 0;
        int mapped = 0;
        int bundle = std::numeric_limits<int>::max();
        double cpu = 0.0;
        double mem = 0.0;
    };
    std::map<TaskId, Need> need;
    int remaining = 0;
    for (const auto& id : order) {
        const auto& a = allocation.task(id);
        const auto& t = g.task(id);
        Need n{a.threads, 0, std::numeric_limits<int>::max(), a.cpu_pct, a.mem_pct};
        if (!t.fixed) n.bundle = max_peak(models.at(t.kind)).threads;
        need[id] = n;
        remaining += n.pending;
    }

    int current_vm = 0;
    auto next_empty_slot = [&]() -> std::optional<SlotRef> {
        for (int i = 0; i < nvm; ++i) {
            const int v = (current_vm + i) % nvm;
            for (int s = 0; s < cluster.vms[v].slots; ++s)
                if (!slots[v][s].used) return SlotRef{v, s};
        }
        return std::nullopt;
    };
    auto best_fit_slot = [&](double cpu, double mem) -> std::optional<SlotRef> {
        std::optional<SlotRef> best;
        double best_score = std::numeric_limits<double>::infinity();
        for (int v = 0; v < nvm; ++v) {
            for (int s = 0; s < cluster.vms[v].slots; ++s) {
                const auto& sl = slots[v][s];
                if (!sl.used || sl.full_bundle) continue;
                if (sl.cpu + kEps < cpu || sl.mem + kEps < mem) continue;
                const double score = sl.cpu + sl.mem;
                if (score < best_score - kEps) {
                    best_score = score;
                    best = SlotRef{v, s};
                }
            }
        }
        return best;
    };

    MappingPlan plan;
    plan.algorithm = Mapper::SAM;
    auto assign = [&](const TaskId& id, Need& n, int count, SlotRef slot) {
        for (int k = 0; k < count; ++k) plan.assignment[{id, ++n.mapped}] = slot;
        n.pending -= count;
        remaining -= count;
        current_vm = slot.vm;
    };

    while (remaining > 0) {
        for (const auto& id : order) {
            Need& n = need[id];
            if (n.pending == 0) continue;
            // A full bundle also needs a whole slot's worth of the task's resource budget left;
            // otherwise the threads are MBA's residual group even when they number tau-hat.
            const bool full = n.pending >= n.bundle && std::min(n.cpu, n.mem) >= 100.0 - kEps;
            if (full) {
                const auto slot = next_empty_slot();
                if (!slot) throw InsufficientResources(id);
                auto& sl = slots[slot->vm][slot->slot];
                sl.used = true;
                sl.full_bundle = true;
                sl.cpu = 0.0;
                sl.mem = 0.0;
                n.cpu -= 100.0;
                n.mem -= 100.0;
                assign(id, n, n.bundle, *slot);
            } else {
                const double cpu = std::max(0.0, n.cpu), mem = std::max(0.0, n.mem);
                auto slot = best_fit_slot(cpu, mem);
                if (!slot) slot = next_empty_slot();
                if (!slot) throw InsufficientResources(id);
                auto& sl = slots[slot->vm][slot->slot];
                sl.used = true;
                sl.cpu -= cpu;
                sl.mem -= mem;
                n.cpu = 0.0;
                n.mem = 0.0;
                assign(id, n, n.pending, *slot);
            }
        }
    }
    return plan;
}

MappingPlan map_with(Mapper mapper, const Dataflow& g, const AllocationPlan& allocation, const Cluster& cluster,
                     const ModelRegistry& models, const RsmWeights& weights) {
    switch (mapper) {
        case Mapper::DSM: return map_dsm(enumerate_threads(g, allocation), cluster);
        case Mapper::RSM: return map_rsm(g, allocation, cluster, models, weights);
        case Mapper::SAM: return map_sam(g, allocation, cluster, models);
    }
    throw std::invalid_argument("unknown mapper");
}

RetryResult map_with_retry(const std::function<MappingPlan(const Cluster&)>& mapper, int rho,
                           const ClusterFactory& factory, int max_extra) {
    if (max_extra < 0) throw std::invalid_argument("max_extra must be >= 0");
    std::optional<InsufficientResources> last;
    for (int extra = 0; extra <= max_extra; ++extra) {
        Cluster cluster = factory(rho + extra);
        try {
            MappingPlan plan = mapper(cluster);
            plan.extra_slots = extra;
            return {std::move(plan), std::move(cluster)};
        } catch (const InsufficientResources& e) {
            last = e;
        }
    }
    throw *last;
}

int mixed_slot_count(const MappingPlan& plan) {
    int mixed = 0;
    for (const auto& [slot, tasks] : plan.slot_composition())
        if (tasks.size() > 1) ++mixed;
    return mixed;
}

nlohmann::json to_json(const Cluster& cluster) {
    nlohmann::json vms = nlohmann::json::array();
    for (const auto& v : cluster.vms)
        vms.push_back({{"id", v.id}, {"size", v.size}, {"slots", v.slots}, {"rack", v.rack}});
    return {{"vms", vms}};
}

Cluster cluster_from_json(const nlohmann::json& doc) {
    Cluster c;
    for (const auto& v : doc.at("vms")) {
        Vm vm{v.at("id").get<std::string>(), v.value("size", std::string{}), v.at("slots").get<int>(),
              v.value("rack", std::string{"rack-0"})};
        if (vm.slots < 1) throw std::invalid_argument("VM " + vm.id + " needs at least one slot");
        c.vms.push_back(std::move(vm));
    }
    return c;
}

nlohmann::json to_json(const MappingPlan& plan, const Cluster& cluster) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [thread, slot] : plan.assignment)
        rows.push_back({{"task", thread.task}, {"ordinal", thread.ordinal}, {"vm", cluster.vms.at(slot.vm).id},
                        {"slot", slot.slot}});
    return {{"algorithm", to_string(plan.algorithm)}, {"extra_slots", plan.extra_slots}, {"assignments", rows}};
}

MappingPlan mapping_from_json(const nlohmann::json& doc, const Cluster& cluster) {
    MappingPlan plan;
    plan.algorithm = parse_mapper(doc.at("algorithm").get<std::string>());
    plan.extra_slots = doc.value("extra_slots", 0);
    for (const auto& r : doc.at("assignments")) {
        SlotRef slot{cluster.vm_index(r.at("vm").get<std::string>()), r.at("slot").get<int>()};
        if (slot.slot < 0 || slot.slot >= cluster.vms[slot.vm].slots)
            throw std::invalid_argument("slot index out of range for VM " + cluster.vms[slot.vm].id);
        plan.assignment[{r.at("task").get<std::string>(), r.at("ordinal").get<int>()}] = slot;
    }
    return plan;
}

}  // namespace streamsched
