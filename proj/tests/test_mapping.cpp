#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "streamsched/allocation.hpp"
#include "streamsched/mapping.hpp"

using namespace streamsched;

namespace {

const ModelRegistry& fixtures() {
    static const ModelRegistry reg = ModelRegistry::load_dir(STREAMSCHED_MODELS_DIR);
    return reg;
}

Cluster three_by_two() { return acquire_vms(6, d_series_catalog(2)); }

void expect_total(const MappingPlan& plan, const Dataflow& g, const AllocationPlan& a) {
    auto threads = enumerate_threads(g, a);
    EXPECT_EQ(plan.assignment.size(), threads.size());
    for (const auto& t : threads) EXPECT_TRUE(plan.assignment.count(t)) << t.task << t.ordinal;
}

std::vector<std::string> sizes(const Cluster& c) {
    std::vector<std::string> out;
    for (const auto& v : c.vms) out.push_back(v.size);
    return out;
}

const BuiltinDag kDags[] = {BuiltinDag::Linear, BuiltinDag::Diamond, BuiltinDag::Star};

}  // namespace

TEST(Acquire, HandExamples) {
    auto cat = d_series_catalog(3);
    EXPECT_EQ(sizes(acquire_vms(6, cat)), (std::vector<std::string>{"D3", "D2"}));
    EXPECT_EQ(sizes(acquire_vms(5, cat)), (std::vector<std::string>{"D3", "D1"}));
    auto seven = acquire_vms(7, cat);
    EXPECT_EQ(sizes(seven), (std::vector<std::string>{"D3", "D3"}));
    EXPECT_EQ(seven.total_slots() - 7, 1);
    EXPECT_EQ(seven.vms[1].id, "vm2");
    EXPECT_THROW(acquire_vms(0, cat), std::invalid_argument);
    EXPECT_THROW(acquire_vms(3, {}), std::invalid_argument);
}

TEST(Acquire, MatchesHandRule) {
    for (int largest = 1; largest <= 4; ++largest) {
        auto cat = d_series_catalog(largest);
        const int p_hat = 1 << (largest - 1);
        for (int rho = 1; rho <= 40; ++rho) {
            auto c = acquire_vms(rho, cat);
            std::vector<int> got;
            for (const auto& v : c.vms) got.push_back(v.slots);
            EXPECT_EQ(got, oracle::acquisition_by_hand(rho, p_hat)) << rho;
            EXPECT_LE(c.total_slots() - rho, (1 << (largest - 1)) - 1);
        }
    }
}

TEST(Dsm, SampleWalkthrough) {
    auto g = oracle::sample_dag();
    auto a = oracle::sample_allocation(Allocator::MBA);
    auto plan = map_dsm(enumerate_threads(g, a), three_by_two());
    auto at = [&](const char* t, int k) { return plan.assignment.at({t, k}); };
    for (int k = 1; k <= 5; ++k) EXPECT_EQ(at("B", k), oracle::nth_slot(k, 2));
    EXPECT_EQ(at("O", 1), oracle::nth_slot(6, 2));
    for (int k = 2; k <= 4; ++k) EXPECT_EQ(at("O", k), oracle::nth_slot(k - 1, 2));
    for (int k = 1; k <= 3; ++k) EXPECT_EQ(at("Y", k), oracle::nth_slot(k + 3, 2));
    for (int k = 1; k <= 5; ++k) EXPECT_EQ(at("G", k), oracle::nth_slot(k, 2));
    EXPECT_EQ(plan.algorithm, Mapper::DSM);
}

TEST(Dsm, SmallCasesAndBalance) {
    auto one = map_dsm({{"x", 1}}, three_by_two());
    EXPECT_EQ(one.assignment.at({"x", 1}), (SlotRef{0, 0}));
    std::vector<ThreadId> six;
    for (int k = 1; k <= 6; ++k) six.push_back({"x", k});
    auto bij = map_dsm(six, three_by_two());
    std::set<SlotRef> used;
    for (const auto& [t, s] : bij.assignment) used.insert(s);
    EXPECT_EQ(used.size(), 6u);

    for (BuiltinDag d : kDags) {
        auto g = builtin_dag(d, default_task_kinds(d));
        auto a = allocate_lsa(g, 100, fixtures());
        auto c = acquire_vms(a.rho, d_series_catalog(3));
        auto plan = map_dsm(enumerate_threads(g, a), c);
        expect_total(plan, g, a);
        std::map<SlotRef, int> per;
        for (const auto& s : c.slots()) per[s] = 0;
        for (const auto& [t, s] : plan.assignment) ++per[s];
        int lo = 1 << 30, hi = 0;
        for (const auto& [s, n] : per) lo = std::min(lo, n), hi = std::max(hi, n);
        EXPECT_LE(hi - lo, 1);
    }
}

TEST(Rsm, Distance) {
    EXPECT_DOUBLE_EQ(rsm_distance({30, 40}, {30, 40}, 0.0, {}), 0.0);
    EXPECT_NEAR(rsm_distance({40, 60}, {30, 40}, 1.0, {}), 1.05, 1e-12);
    EXPECT_NEAR(rsm_distance({40, 60}, {30, 40}, 1.0, {2, 3, 0.5}), 2 * 0.01 + 3 * 0.04 + 0.5, 1e-12);

    Cluster c;
    c.vms = {{"a", "D1", 1, "r1"}, {"b", "D1", 1, "r1"}, {"c", "D1", 1, "r2"}};
    EXPECT_EQ(network_distance(c, 0, 0), 0.0);
    EXPECT_EQ(network_distance(c, 0, 1), 0.5);
    EXPECT_EQ(network_distance(c, 0, 2), 1.0);
    EXPECT_LT(rsm_distance({50, 50}, {10, 10}, network_distance(c, 0, 0), {}),
              rsm_distance({50, 50}, {10, 10}, network_distance(c, 0, 1), {}));
}

TEST(Rsm, SampleWalkthrough) {
    auto g = oracle::sample_dag();
    auto models = oracle::sample_models();
    auto plan = map_rsm(g, oracle::sample_allocation(Allocator::MBA), three_by_two(), models);
    // expected (vm, slot) per thread, from an exhaustive replay of the sweep rules
    const std::map<ThreadId, SlotRef> want{
        {{"B", 1}, {0, 0}}, {{"O", 1}, {0, 0}}, {{"Y", 1}, {0, 0}}, {{"G", 1}, {0, 1}},
        {{"B", 2}, {0, 1}}, {{"O", 2}, {0, 1}}, {{"Y", 2}, {1, 0}}, {{"G", 2}, {0, 1}},
        {{"B", 3}, {1, 0}}, {{"O", 3}, {1, 0}}, {{"Y", 3}, {1, 1}}, {{"G", 3}, {1, 1}},
        {{"B", 4}, {2, 0}}, {{"O", 4}, {1, 1}}, {{"G", 4}, {2, 0}},
        {{"B", 5}, {2, 0}}, {{"G", 5}, {2, 1}},
    };
    EXPECT_EQ(plan.assignment, want);
    EXPECT_EQ(plan.algorithm, Mapper::RSM);
}

TEST(Rsm, BookkeepingNeverNegative) {
    for (BuiltinDag d : kDags) {
        auto g = builtin_dag(d, default_task_kinds(d));
        for (double omega : {50.0, 100.0, 200.0}) {
            auto a = allocate_lsa(g, omega, fixtures());
            auto r = map_with_retry([&](const Cluster& c) { return map_rsm(g, a, c, fixtures()); }, a.rho,
                                    [](int n) { return acquire_vms(n, d_series_catalog(3)); }, 256);
            expect_total(r.plan, g, a);
            std::map<int, double> vm_cpu;
            std::map<SlotRef, double> slot_mem;
            for (const auto& [t, s] : r.plan.assignment) {
                auto fp = thread_footprint(g.task(t.task), fixtures());
                vm_cpu[s.vm] += fp.cpu_pct;
                slot_mem[s] += fp.mem_pct;
            }
            for (const auto& [v, cpu] : vm_cpu) EXPECT_LE(cpu, 100.0 * r.cluster.vms[v].slots + 1e-6);
            for (const auto& [s, mem] : slot_mem) EXPECT_LE(mem, 100.0 + 1e-6);
        }
    }
}

TEST(Rsm, FragmentationError) {
    Dataflow g;
    g.tasks = {{"fill", "fill", false, false, std::nullopt}, {"blob", "azure-blob", false, false, std::nullopt}};
    g.edges = {{"fill", "blob", {}}};
    ModelRegistry models = fixtures();
    models.add(TaskPerfModel("fill", {{1, 10, 10, 92}}));
    AllocationPlan a;
    a.tasks = {{"fill", 2, 20, 184}, {"blob", 1, 6.74, 23.92}};
    a.rho = 3;
    Cluster c = acquire_vms(2, d_series_catalog(2));
    try {
        map_rsm(g, a, c, models);
        FAIL() << "expected insufficient resources";
    } catch (const InsufficientResources& e) {
        // round robin: fill 1 -> slot 0, blob -> slot 1, then neither slot has 92 left
        EXPECT_EQ(e.task(), "fill");
    }
}

TEST(Rsm, SingleThread) {
    Dataflow g;
    g.tasks = {{"p", "pi", false, false, std::nullopt}};
    AllocationPlan a;
    a.tasks = {{"p", 1, 90, 2}};
    auto plan = map_rsm(g, a, acquire_vms(1, d_series_catalog(1)), fixtures());
    EXPECT_EQ(plan.assignment.at({"p", 1}), (SlotRef{0, 0}));
}

TEST(Sam, SampleWalkthrough) {
    auto g = oracle::sample_dag();
    auto plan = map_sam(g, oracle::sample_allocation(Allocator::MBA), three_by_two(), oracle::sample_models());
    std::map<ThreadId, SlotRef> want;
    auto put = [&](const char* t, int from, int to, SlotRef s) {
        for (int k = from; k <= to; ++k) want[{t, k}] = s;
    };
    put("B", 1, 2, {0, 0});
    put("O", 1, 3, {0, 1});
    put("Y", 1, 3, {1, 0});
    put("G", 1, 4, {1, 1});
    put("B", 3, 4, {2, 0});
    put("O", 4, 4, {2, 1});
    put("G", 5, 5, {2, 1});
    put("B", 5, 5, {2, 1});
    EXPECT_EQ(plan.assignment, want);
    EXPECT_EQ(mixed_slot_count(plan), 1);
}

TEST(Sam, OneFullBundleAndErrors) {
    Dataflow g;
    g.tasks = {{"b", "azure-blob", false, false, std::nullopt}};
    auto a = allocate_mba(g, 30, fixtures());
    auto plan = map_sam(g, a, acquire_vms(1, d_series_catalog(1)), fixtures());
    EXPECT_EQ(plan.slot_composition().size(), 1u);
    EXPECT_EQ(mixed_slot_count(plan), 0);

    EXPECT_THROW(map_sam(g, allocate_lsa(g, 30, fixtures()), acquire_vms(1, d_series_catalog(1)), fixtures()),
                 std::invalid_argument);

    // full bundle takes the only slot; the residual group finds nothing
    auto more = allocate_mba(g, 40, fixtures());
    EXPECT_THROW(map_sam(g, more, acquire_vms(1, d_series_catalog(1)), fixtures()), InsufficientResources);
}

TEST(Sam, PurityOverFixtureMatrix) {
    for (BuiltinDag d : kDags) {
        auto g = builtin_dag(d, default_task_kinds(d));
        for (double omega = 10; omega <= 300; omega += 10) {
            auto a = allocate_mba(g, omega, fixtures());
            auto r = map_with_retry([&](const Cluster& c) { return map_sam(g, a, c, fixtures()); }, a.rho,
                                    [](int n) { return acquire_vms(n, d_series_catalog(3)); }, 256);
            expect_total(r.plan, g, a);
            EXPECT_LE(mixed_slot_count(r.plan), static_cast<int>(g.tasks.size()));
            // every full bundle sits alone on its slot; only the residual group may share
            const auto rates = get_rate(g, omega);
            for (const auto& t : g.tasks) {
                if (t.fixed) continue;
                const auto best = max_peak(fixtures().at(t.kind));
                const int bundles = static_cast<int>(std::floor(rates.at(t.id) / best.rate + 1e-9));
                const int residual = a.task(t.id).threads - bundles * best.threads;
                int alone = 0, shared = 0;
                for (const auto& [slot, comp] : r.plan.slot_composition()) {
                    auto it = comp.find(t.id);
                    if (it == comp.end() || it->second != best.threads) continue;
                    ++(comp.size() == 1 ? alone : shared);
                }
                EXPECT_GE(alone, bundles) << t.id << " " << omega;
                EXPECT_LE(shared, residual == best.threads ? 1 : 0) << t.id << " " << omega;
            }
        }
    }
}

TEST(Mapping, DeterministicAndTotal) {
    for (BuiltinDag d : kDags) {
        auto g = builtin_dag(d, default_task_kinds(d));
        auto a = allocate_mba(g, 100, fixtures());
        for (Mapper m : {Mapper::DSM, Mapper::RSM, Mapper::SAM}) {
            auto factory = [](int n) { return acquire_vms(n, d_series_catalog(3)); };
            auto fn = [&](const Cluster& c) { return map_with(m, g, a, c, fixtures()); };
            auto r1 = map_with_retry(fn, a.rho, factory, 256);
            auto r2 = map_with_retry(fn, a.rho, factory, 256);
            EXPECT_EQ(r1.plan.assignment, r2.plan.assignment);
            EXPECT_EQ(r1.plan.extra_slots, r2.plan.extra_slots);
            expect_total(r1.plan, g, a);
        }
    }
}

TEST(Retry, CountsExtraSlotsAndGivesUp) {
    auto factory = [](int n) { return acquire_vms(n, d_series_catalog(1)); };
    auto needs = [](int slots) {
        return [slots](const Cluster& c) {
            if (c.total_slots() < slots) throw InsufficientResources("x");
            return MappingPlan{};
        };
    };
    EXPECT_EQ(map_with_retry(needs(3), 3, factory, 0).plan.extra_slots, 0);
    auto r = map_with_retry(needs(5), 3, factory, 4);
    EXPECT_EQ(r.plan.extra_slots, 2);
    EXPECT_EQ(r.cluster.total_slots(), 5);
    EXPECT_THROW(map_with_retry(needs(5), 3, factory, 0), InsufficientResources);
    EXPECT_THROW(map_with_retry(needs(5), 3, factory, -1), std::invalid_argument);
}

TEST(Retry, RsmOnLsaNeedsFewExtraSlots) {
    auto g = builtin_dag(BuiltinDag::Linear, default_task_kinds(BuiltinDag::Linear));
    auto a = allocate_lsa(g, 100, fixtures());
    auto r = map_with_retry([&](const Cluster& c) { return map_rsm(g, a, c, fixtures()); }, a.rho,
                            [](int n) { return acquire_vms(n, d_series_catalog(3)); }, 16);
    EXPECT_GE(r.plan.extra_slots, 1);
    EXPECT_LE(r.plan.extra_slots, 3);
}

TEST(MappingJson, RoundTrip) {
    auto g = oracle::sample_dag();
    auto c = three_by_two();
    c.vms[2].rack = "rack-1";
    auto plan = map_sam(g, oracle::sample_allocation(Allocator::MBA), c, oracle::sample_models());
    plan.extra_slots = 2;
    auto c2 = cluster_from_json(to_json(c));
    EXPECT_EQ(c2.vms[2].rack, "rack-1");
    EXPECT_EQ(c2.total_slots(), 6);
    auto back = mapping_from_json(to_json(plan, c2), c2);
    EXPECT_EQ(back.assignment, plan.assignment);
    EXPECT_EQ(back.extra_slots, 2);
    EXPECT_EQ(back.algorithm, Mapper::SAM);

    auto bad = to_json(plan, c2);
    bad["assignments"][0]["slot"] = 9;
    EXPECT_THROW(mapping_from_json(bad, c2), std::invalid_argument);
    bad["assignments"][0]["vm"] = "nope";
    EXPECT_THROW(mapping_from_json(bad, c2), std::invalid_argument);
}
