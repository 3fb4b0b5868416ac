#include "streamsched/experiment.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace streamsched {

Schedule make_schedule(const Dataflow& g, double omega, Allocator allocator, Mapper mapper,
                       const ModelRegistry& models, const std::vector<VmSpec>& catalog, int max_extra,
                       const RsmWeights& weights) {
    if (mapper == Mapper::SAM && allocator != Allocator::MBA)
        throw std::invalid_argument("SAM mapping requires MBA allocation");
    Schedule s;
    s.allocation = allocate(allocator, g, omega, models);
    auto fn = [&](const Cluster& c) { return map_with(mapper, g, s.allocation, c, models, weights); };
    auto factory = [&](int slots) { return acquire_vms(slots, catalog); };
    auto r = map_with_retry(fn, s.allocation.rho, factory, max_extra);
    s.cluster = std::move(r.cluster);
    s.mapping = std::move(r.plan);
    return s;
}

std::vector<std::pair<Allocator, Mapper>> valid_pairs() {
    return {{Allocator::LSA, Mapper::DSM},
            {Allocator::LSA, Mapper::RSM},
            {Allocator::MBA, Mapper::DSM},
            {Allocator::MBA, Mapper::RSM},
            {Allocator::MBA, Mapper::SAM}};
}

double max_plannable_rate(const ExperimentSpec& spec, Allocator allocator, Mapper mapper, const ModelRegistry& models) {
    if (!spec.fixed_cluster) throw std::invalid_argument("no fixed cluster given");
    if (!(spec.plan_step > 0)) throw std::invalid_argument("plan step must be positive");
    const Cluster& cluster = *spec.fixed_cluster;
    double best = 0.0;
    for (int k = 1; k <= 100000; ++k) {
        const double omega = k * spec.plan_step;
        const auto alloc = allocate(allocator, spec.dataflow, omega, models);
        if (alloc.rho > cluster.total_slots()) break;
        try {
            map_with(mapper, spec.dataflow, alloc, cluster, models);
        } catch (const InsufficientResources&) {
            break;
        }
        best = omega;
    }
    return best;
}

CellResult run_cell(const ExperimentSpec& spec, Allocator allocator, Mapper mapper, double omega,
                    const ModelRegistry& models) {
    CellResult c;
    c.allocator = allocator;
    c.mapper = mapper;
    c.omega = omega;
    try {
        if (mapper == Mapper::SAM && allocator != Allocator::MBA)
            throw std::invalid_argument("SAM mapping requires MBA allocation");
        Schedule s;
        if (spec.fixed_cluster) {
            c.omega = max_plannable_rate(spec, allocator, mapper, models);
            if (c.omega <= 0) throw std::runtime_error("no plannable rate fits the fixed cluster");
            s.allocation = allocate(allocator, spec.dataflow, c.omega, models);
            s.cluster = *spec.fixed_cluster;
            s.mapping = map_with(mapper, spec.dataflow, s.allocation, s.cluster, models);
        } else {
            s = make_schedule(spec.dataflow, omega, allocator, mapper, models, spec.catalog, spec.max_extra);
        }
        c.rho = s.allocation.rho;
        c.extra_slots = s.mapping.extra_slots;
        c.vm_count = s.cluster.vms.size();

        const Prediction p = predict(spec.dataflow, s.mapping, s.cluster, models);
        c.predicted_rate = p.predicted_rate;
        c.predicted_vms = p.vms;

        double start = 0.0;
        if (spec.search_start_fraction > 0)
            start = std::floor(spec.search_start_fraction * p.predicted_rate / spec.sim_step) * spec.sim_step;
        const auto found = find_max_stable_rate(spec.dataflow, s.mapping, s.cluster, models, spec.sim_step, spec.sim,
                                                start);
        c.simulated_rate = found.rate;
        if (found.rate > 0) {
            SimConfig cfg = spec.sim;
            cfg.omega = found.rate;
            c.simulated_vms = simulate(spec.dataflow, s.mapping, s.cluster, models, cfg).vms;
        }
        c.accuracy = compare(p, c.simulated_rate, c.simulated_vms);
        c.ok = true;
    } catch (const std::exception& ex) {
        c.ok = false;
        c.error = ex.what();
    }
    return c;
}

namespace {

struct CellKey {
    Allocator allocator;
    Mapper mapper;
    double omega;
};

std::vector<CellKey> cells_of(const ExperimentSpec& spec) {
    std::vector<CellKey> out;
    const std::vector<double> rates = spec.fixed_cluster ? std::vector<double>{0.0} : spec.rates;
    for (double r : rates)
        for (const auto& [a, m] : spec.pairs) out.push_back({a, m, r});
    return out;
}

}  // namespace

std::vector<CellResult> evaluate(const ExperimentSpec& spec, const ModelRegistry& models) {
    std::vector<CellResult> out;
    for (const auto& k : cells_of(spec)) out.push_back(run_cell(spec, k.allocator, k.mapper, k.omega, models));
    return out;
}

std::vector<CellResult> evaluate_parallel(const ExperimentSpec& spec, const ModelRegistry& models) {
    const auto keys = cells_of(spec);
    std::vector<CellResult> out(keys.size());
    const long n = static_cast<long>(keys.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) out[i] = run_cell(spec, keys[i].allocator, keys[i].mapper, keys[i].omega, models);
    return out;
}

nlohmann::json to_json(const CellResult& c) {
    nlohmann::json pv = nlohmann::json::array(), sv = nlohmann::json::array();
    for (const auto& v : c.predicted_vms) pv.push_back(to_json(v));
    for (const auto& v : c.simulated_vms) sv.push_back(to_json(v));
    nlohmann::json j = {{"allocator", to_string(c.allocator)},
                        {"mapper", to_string(c.mapper)},
                        {"planned_rate", c.omega},
                        {"ok", c.ok}};
    if (!c.ok) {
        j["error"] = c.error;
        return j;
    }
    j["rho"] = c.rho;
    j["extra_slots"] = c.extra_slots;
    j["vms"] = c.vm_count;
    j["predicted_rate"] = c.predicted_rate;
    j["simulated_rate"] = c.simulated_rate;
    j["predicted_vms"] = pv;
    j["simulated_vms"] = sv;
    j["accuracy"] = to_json(c.accuracy);
    return j;
}

void write_summary_csv(std::ostream& out, const std::string& dag, const std::vector<CellResult>& cells) {
    out << "dag,allocator,mapper,planned_rate,rho,extra_slots,vms,predicted_rate,simulated_rate,rate_error,"
           "max_cpu_delta,max_mem_delta,error\n";
    for (const auto& c : cells) {
        out << dag << ',' << to_string(c.allocator) << ',' << to_string(c.mapper) << ',' << c.omega << ',';
        if (c.ok)
            out << c.rho << ',' << c.extra_slots << ',' << c.vm_count << ',' << c.predicted_rate << ','
                << c.simulated_rate << ',' << c.accuracy.rate_error << ',' << c.accuracy.max_cpu_delta << ','
                << c.accuracy.max_mem_delta << ",\n";
        else
            out << ",,,,,,,,\"" << c.error << "\"\n";
    }
}

}  // namespace streamsched
