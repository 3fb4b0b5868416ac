// Reference computations used by the unit and acceptance tests. Each one is written
// independently of the library code it checks.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "streamsched/allocation.hpp"
#include "streamsched/dag.hpp"
#include "streamsched/mapping.hpp"
#include "streamsched/perf_model.hpp"

namespace oracle {

using streamsched::Dataflow;

/// Sum over every source-to-task path of omega times the product of edge selectivities.
inline std::map<std::string, double> path_rates(const Dataflow& g, double omega) {
    std::map<std::string, double> out;
    for (const auto& t : g.tasks) out[t.id] = 0.0;
    std::function<void(const std::string&, double)> walk = [&](const std::string& at, double carried) {
        out[at] += carried;
        for (const auto& e : g.edges)
            if (e.from == at) walk(e.to, carried * e.selectivity.value());
    };
    for (const auto& t : g.tasks) {
        bool has_in = false;
        for (const auto& e : g.edges) has_in |= e.to == t.id;
        if (!has_in) walk(t.id, omega);
    }
    return out;
}

/// Random DAG over n tasks: edges only from lower to higher index, so it is acyclic.
inline Dataflow random_dag(std::mt19937_64& rng, int n) {
    static const char* kSel[] = {"1:2", "1:1", "2:1"};
    Dataflow g;
    for (int i = 0; i < n; ++i) g.tasks.push_back({"n" + std::to_string(i), "k", false, false, std::nullopt});
    std::bernoulli_distribution coin(0.4);
    std::uniform_int_distribution<int> pick(0, 2);
    for (int j = 1; j < n; ++j) {
        bool any = false;
        for (int i = 0; i < j; ++i)
            if (coin(rng)) {
                g.edges.push_back({g.tasks[i].id, g.tasks[j].id, streamsched::Selectivity::parse(kSel[pick(rng)])});
                any = true;
            }
        // keep most tasks reachable; a task left without in-edges becomes another source
        if (!any && coin(rng)) {
            std::uniform_int_distribution<int> from(0, j - 1);
            g.edges.push_back({g.tasks[from(rng)].id, g.tasks[j].id, streamsched::Selectivity::parse(kSel[pick(rng)])});
        }
    }
    return g;
}

/// Ordinary least-squares slope via the closed form n*Sxy - Sx*Sy over n*Sxx - Sx^2, in long double.
inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    long double n = x.size(), sx = 0, sy = 0, sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxy += static_cast<long double>(x[i]) * y[i];
        sxx += static_cast<long double>(x[i]) * x[i];
    }
    return static_cast<double>((n * sxy - sx * sy) / (n * sxx - sx * sx));
}

/// The sample dataflow used to illustrate the mappers: B feeds O and Y, both feed G.
inline Dataflow sample_dag() {
    Dataflow g;
    for (const char* id : {"B", "O", "Y", "G"}) g.tasks.push_back({id, std::string("kind-") + id, false, false, std::nullopt});
    g.edges = {{"B", "O", {}}, {"B", "Y", {}}, {"O", "G", {}}, {"Y", "G", {}}};
    return g;
}

/// Models for the sample dataflow: single-thread footprint (10% cpu, per-task memory) and a best rate at
/// 2, 3, 3 and 4 threads for B, O, Y and G.
inline streamsched::ModelRegistry sample_models() {
    streamsched::ModelRegistry reg;
    reg.add(streamsched::TaskPerfModel("kind-B", {{1, 10, 10, 25}, {2, 20, 40, 50}}));
    reg.add(streamsched::TaskPerfModel("kind-O", {{1, 10, 10, 15}, {3, 30, 40, 50}}));
    reg.add(streamsched::TaskPerfModel("kind-Y", {{1, 10, 10, 55}, {3, 30, 40, 80}}));
    reg.add(streamsched::TaskPerfModel("kind-G", {{1, 10, 10, 30}, {4, 40, 40, 60}}));
    return reg;
}

/// Thread counts 5, 4, 3, 5 with MBA-style budgets: two bundles plus 20% for B, one bundle plus 20%
/// for O and G, one bundle for Y.
inline streamsched::AllocationPlan sample_allocation(streamsched::Allocator algo) {
    streamsched::AllocationPlan a;
    a.algorithm = algo;
    a.omega = 0;
    a.tasks = {{"B", 5, 220, 220}, {"O", 4, 120, 120}, {"Y", 3, 100, 100}, {"G", 5, 120, 120}};
    a.rho = 6;
    return a;
}

/// Slot for the 1-based slot number n of a cluster whose VMs all have `per_vm` slots.
inline streamsched::SlotRef nth_slot(int n, int per_vm) { return {(n - 1) / per_vm, (n - 1) % per_vm}; }

/// Hand rule for VM acquisition over a powers-of-two catalog with largest VM p_hat slots:
/// floor(rho/p_hat) big VMs plus the next power of two covering the remainder.
inline std::vector<int> acquisition_by_hand(int rho, int p_hat) {
    std::vector<int> sizes(rho / p_hat, p_hat);
    int rest = rho % p_hat;
    if (rest > 0) {
        int p = 1;
        while (p < rest) p *= 2;
        sizes.push_back(p);
    }
    return sizes;
}

}  // namespace oracle
