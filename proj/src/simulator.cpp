#include "streamsched/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <queue>
#include <random>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace streamsched {

void SimConfig::validate() const {
    if (!(duration > 0)) throw std::invalid_argument("simulation duration must be positive");
    if (!(warmup >= 0) || warmup >= duration) throw std::invalid_argument("warm-up must lie in [0, duration)");
    if (!(tick > 0)) throw std::invalid_argument("tick must be positive");
    if (!(omega >= 0)) throw std::invalid_argument("offered rate must be >= 0");
    if (batches < 2) throw std::invalid_argument("need at least two batches");
}

namespace {

struct Tuple {
    std::uint64_t id;
    double emit;
};

struct Group {
    int task = 0;
    int threads = 0;
    SlotRef slot;
    double capacity = 0.0;
    std::deque<Tuple> queue;  // front is in service
    std::mt19937_64 rng;
    std::uint64_t arrived = 0;
    std::uint64_t completed = 0;
};

struct Edge {
    int to = 0;
    long num = 1, den = 1;
    long credit = 0;
    std::uint64_t next_thread = 0;
};

enum class EvKind { Source, Completion, Tick };

struct Event {
    double time;
    std::uint64_t seq;
    EvKind kind;
    int index;

    bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
};

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    return std::mt19937_64(seq);
}

struct Fit {
    double slope = 0.0;
    double stderr_ = 0.0;
};

Fit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2) return {};
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0) return {};
    Fit f;
    f.slope = sxy / sxx;
    if (n > 2) {
        double sse = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - (my + f.slope * (x[i] - mx));
            sse += r * r;
        }
        f.stderr_ = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
    }
    return f;
}

// Slope of batch means over equal time batches; the stderr of that fit accounts for
// the autocorrelation a per-sample regression would ignore.
Fit batch_fit(const std::vector<double>& t, const std::vector<double>& y, double from, double to, int batches) {
    std::vector<double> sum(batches, 0.0), cnt(batches, 0.0);
    const double width = (to - from) / batches;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const int b = std::clamp(static_cast<int>((t[i] - from) / width), 0, batches - 1);
        sum[b] += y[i];
        cnt[b] += 1;
    }
    std::vector<double> bx, by;
    for (int b = 0; b < batches; ++b)
        if (cnt[b] > 0) {
            bx.push_back(from + (b + 0.5) * width);
            by.push_back(sum[b] / cnt[b]);
        }
    return fit_line(bx, by);
}

bool significant_growth(const Fit& raw, const Fit& batch, double threshold, double z) {
    if (raw.slope <= threshold) return false;
    if (z <= 0) return true;
    return batch.slope > z * batch.stderr_;
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    const auto k = static_cast<std::size_t>(std::clamp(q * (v.size() - 1), 0.0, double(v.size() - 1)) + 0.5);
    std::nth_element(v.begin(), v.begin() + static_cast<long>(k), v.end());
    return v[k];
}

}  // namespace

SimReport simulate(const Dataflow& g, const MappingPlan& mapping, const Cluster& cluster, const ModelRegistry& models,
                   const SimConfig& cfg) {
    cfg.validate();
    const auto order = topo_order(g);
    const int ntasks = static_cast<int>(order.size());
    std::map<TaskId, int> index;
    for (int i = 0; i < ntasks; ++i) index[order[i]] = i;

    std::vector<bool> fixed(ntasks);
    for (int i = 0; i < ntasks; ++i) fixed[i] = g.task(order[i]).fixed.has_value();

    // slot groups, and thread -> group in ordinal order per task
    std::vector<Group> groups;
    std::map<std::pair<SlotRef, int>, int> group_of;
    const RateMap rates = get_rate(g, cfg.omega);
    std::map<TaskId, int> total_threads;
    for (const auto& [thread, slot] : mapping.assignment) ++total_threads[thread.task];
    for (const auto& [slot, comp] : mapping.slot_composition()) {
        if (slot.vm < 0 || slot.vm >= static_cast<int>(cluster.vms.size()) || slot.slot < 0 ||
            slot.slot >= cluster.vms[slot.vm].slots)
            throw std::invalid_argument("mapping uses a slot outside the cluster");
        // service rates follow the contention expected at the offered rate
        std::map<TaskId, double> incoming;
        for (const auto& [id, q] : comp) incoming[id] = rates.at(id) * q / total_threads.at(id);
        const auto caps = slot_capacity(comp, g, models, &incoming);
        for (const auto& [id, q] : comp) {
            const int t = index.at(id);
            group_of[{slot, t}] = static_cast<int>(groups.size());
            Group gr;
            gr.task = t;
            gr.threads = q;
            gr.slot = slot;
            gr.capacity = caps.at(id);
            gr.rng = stream_rng(cfg.seed, 1000 + groups.size());
            groups.push_back(std::move(gr));
        }
    }
    std::vector<std::vector<int>> thread_group(ntasks);
    for (const auto& [thread, slot] : mapping.assignment) {
        const int t = index.at(thread.task);
        auto& v = thread_group[t];
        if (static_cast<int>(v.size()) != thread.ordinal - 1)
            throw std::invalid_argument("thread ordinals of '" + thread.task + "' are not contiguous from 1");
        v.push_back(group_of.at({slot, t}));
    }
    for (int t = 0; t < ntasks; ++t)
        if (thread_group[t].empty()) throw std::invalid_argument("task '" + order[t] + "' has no mapped thread");

    std::vector<std::vector<Edge>> out_edges(ntasks);
    for (const auto& e : g.edges)
        out_edges[index.at(e.from)].push_back({index.at(e.to), e.selectivity.num(), e.selectivity.den(), 0, 0});

    std::vector<int> sources;
    for (int t = 0; t < ntasks; ++t)
        if (g.in_edges(order[t]).empty()) sources.push_back(t);
    std::vector<std::mt19937_64> source_rng;
    for (std::size_t s = 0; s < sources.size(); ++s) source_rng.push_back(stream_rng(cfg.seed, s));
    std::vector<std::uint64_t> source_rr(sources.size(), 0);

    std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
    std::uint64_t seq = 0, next_tuple = 0;
    std::exponential_distribution<double> unit_exp(1.0);
    auto push = [&](double t, EvKind k, int i) { events.push({t, seq++, k, i}); };

    const double window = cfg.duration - cfg.warmup;
    std::vector<std::uint64_t> task_done(ntasks, 0);
    std::vector<double> lat_t, lat_v;
    SimReport rep;
    rep.omega = cfg.omega;
    double now = 0.0;

    auto start_service = [&](int gi) {
        Group& gr = groups[gi];
        push(now + unit_exp(gr.rng) / gr.capacity, EvKind::Completion, gi);
    };

    // defined below; std::function-free recursion through a lambda reference
    auto finish = [&](auto& self, int task, const Tuple& tp) -> void {
        if (now >= cfg.warmup) ++task_done[task];
        if (out_edges[task].empty()) {
            // indexed by arrival time at the sink: tuples still queued at the cutoff would bias
            // an emit-time series towards the fast paths
            if (now >= cfg.warmup) {
                lat_t.push_back(now);
                lat_v.push_back(now - tp.emit);
            }
            if (cfg.record_trace) rep.trace.push_back({tp.id, tp.emit, now});
            return;
        }
        for (auto& e : out_edges[task]) {
            e.credit += e.num;
            while (e.credit >= e.den) {
                e.credit -= e.den;
                const auto& threads = thread_group[e.to];
                const std::uint64_t pick = e.next_thread++ % threads.size();
                if (fixed[e.to]) {
                    self(self, e.to, tp);
                    continue;
                }
                Group& gr = groups[threads[pick]];
                if (now >= cfg.warmup) ++gr.arrived;
                gr.queue.push_back(tp);
                if (gr.queue.size() == 1) start_service(threads[pick]);
            }
        }
    };
    auto arrive_at_source = [&](std::size_t s, const Tuple& tp) {
        const int t = sources[s];
        if (fixed[t]) {
            finish(finish, t, tp);
            return;
        }
        const auto& threads = thread_group[t];
        const int gi = threads[source_rr[s]++ % threads.size()];
        if (now >= cfg.warmup) ++groups[gi].arrived;
        groups[gi].queue.push_back(tp);
        if (groups[gi].queue.size() == 1) start_service(gi);
    };

    if (cfg.omega > 0)
        for (std::size_t s = 0; s < sources.size(); ++s) push(unit_exp(source_rng[s]) / cfg.omega, EvKind::Source, int(s));
    push(cfg.tick, EvKind::Tick, 0);

    std::vector<std::size_t> max_queue(ntasks, 0);
    while (!events.empty() && events.top().time <= cfg.duration) {
        const Event ev = events.top();
        events.pop();
        now = ev.time;
        ++rep.events;
        switch (ev.kind) {
            case EvKind::Source: {
                arrive_at_source(static_cast<std::size_t>(ev.index), Tuple{next_tuple++, now});
                push(now + unit_exp(source_rng[ev.index]) / cfg.omega, EvKind::Source, ev.index);
                break;
            }
            case EvKind::Completion: {
                Group& gr = groups[ev.index];
                const Tuple tp = gr.queue.front();
                gr.queue.pop_front();
                if (now >= cfg.warmup) ++gr.completed;
                if (!gr.queue.empty()) start_service(ev.index);
                finish(finish, gr.task, tp);
                break;
            }
            case EvKind::Tick: {
                std::vector<std::size_t> per_task(ntasks, 0);
                for (const auto& gr : groups) per_task[gr.task] += gr.queue.size();
                for (int t = 0; t < ntasks; ++t) max_queue[t] = std::max(max_queue[t], per_task[t]);
                push(now + cfg.tick, EvKind::Tick, 0);
                break;
            }
        }
    }

    // statistics
    auto& L = rep.latency;
    L.samples = lat_v.size();
    if (!lat_v.empty()) {
        double sum = 0;
        for (double v : lat_v) sum += v;
        L.mean = sum / lat_v.size();
        L.p50 = quantile(lat_v, 0.50);
        L.p99 = quantile(lat_v, 0.99);
    }
    const Fit lat_raw = fit_line(lat_t, lat_v);
    const Fit lat_batch = batch_fit(lat_t, lat_v, cfg.warmup, cfg.duration, cfg.batches);
    L.slope = lat_raw.slope;
    L.slope_stderr = lat_batch.stderr_;
    rep.latency_growth = significant_growth(lat_raw, lat_batch, cfg.lambda_latency_max, cfg.significance);

    // Net accumulation in a slot group over the window. Under a critically loaded queue it
    // behaves like a random walk with variance arrivals + completions, which scales the test.
    for (const auto& gr : groups) {
        const double net = static_cast<double>(gr.arrived) - static_cast<double>(gr.completed);
        const double spread = std::sqrt(static_cast<double>(gr.arrived + gr.completed));
        const bool large = net > 0.02 * static_cast<double>(gr.arrived);
        const bool significant = cfg.significance <= 0 || net > cfg.significance * spread;
        if (net > 0 && large && significant) rep.backlog_growth = true;
    }
    rep.stable = !rep.latency_growth && !rep.backlog_growth;

    for (int t = 0; t < ntasks; ++t) {
        rep.throughput[order[t]] = static_cast<double>(task_done[t]) / window;
        rep.max_queue[order[t]] = max_queue[t];
    }
    for (const auto& v : cluster.vms) rep.vms.push_back({v.id, v.slots, 0.0, 0.0});
    for (const auto& gr : groups) {
        const TaskDef& task = g.task(order[gr.task]);
        const double rate = static_cast<double>(gr.completed) / window;
        const auto u = group_usage(task, gr.threads, rate, models);
        rep.vms[gr.slot.vm].cpu_pct += u.cpu_pct;
        rep.vms[gr.slot.vm].mem_pct += u.mem_pct;
    }
    for (auto& vm : rep.vms) {
        vm.cpu_pct = std::min(vm.cpu_pct, 100.0 * vm.slots);
        vm.mem_pct = std::min(vm.mem_pct, 100.0 * vm.slots);
    }
    return rep;
}

namespace {

constexpr int kMaxAscent = 100000;

struct Search {
    const Dataflow& g;
    const MappingPlan& mapping;
    const Cluster& cluster;
    const ModelRegistry& models;
    const SimConfig& cfg;
    int runs = 0;

    bool stable_at(double rate) const {
        SimConfig c = cfg;
        c.omega = rate;
        return simulate(g, mapping, cluster, models, c).stable;
    }
};

// Resolves the starting point shared by both search variants. Returns nullopt-like
// negative base when even `step` is unstable.
double search_base(Search& s, double step, double start) {
    if (start > 0) {
        ++s.runs;
        if (s.stable_at(start)) return start;
    }
    ++s.runs;
    return s.stable_at(step) ? step : -1.0;
}

}  // namespace

MaxRateResult find_max_stable_rate(const Dataflow& g, const MappingPlan& mapping, const Cluster& cluster,
                                   const ModelRegistry& models, double step, const SimConfig& cfg, double start) {
    if (!(step > 0)) throw std::invalid_argument("rate step must be positive");
    Search s{g, mapping, cluster, models, cfg};
    const double base = search_base(s, step, start);
    if (base < 0) return {0.0, s.runs, true};
    int k = 0;
    while (k < kMaxAscent) {
        ++s.runs;
        if (!s.stable_at(base + (k + 1) * step)) break;
        ++k;
    }
    return {base + k * step, s.runs, false};
}

MaxRateResult find_max_stable_rate_parallel(const Dataflow& g, const MappingPlan& mapping, const Cluster& cluster,
                                            const ModelRegistry& models, double step, const SimConfig& cfg,
                                            double start) {
    if (!(step > 0)) throw std::invalid_argument("rate step must be positive");
    Search s{g, mapping, cluster, models, cfg};
    const double base = search_base(s, step, start);
    if (base < 0) return {0.0, s.runs, true};
#ifdef _OPENMP
    const int width = std::max(1, omp_get_max_threads());
#else
    const int width = 1;
#endif
    int k = 0;
    while (k < kMaxAscent) {
        std::vector<char> ok(width, 0);
#pragma omp parallel for schedule(dynamic, 1)
        for (int i = 0; i < width; ++i) ok[i] = s.stable_at(base + (k + 1 + i) * step) ? 1 : 0;
        s.runs += width;
        int i = 0;
        while (i < width && ok[i]) ++i;
        k += i;
        if (i < width) break;
    }
    return {base + k * step, s.runs, false};
}

Accuracy compare(const Prediction& prediction, double simulated_rate, const std::vector<VmUsage>& observed) {
    Accuracy a;
    if (simulated_rate > 0)
        a.rate_error = (prediction.predicted_rate - simulated_rate) / simulated_rate;
    else
        a.rate_error = prediction.predicted_rate > 0 ? std::numeric_limits<double>::infinity() : 0.0;

    std::vector<double> pc, oc, pm, om;
    for (const auto& p : prediction.vms) {
        auto it = std::find_if(observed.begin(), observed.end(), [&](const VmUsage& o) { return o.id == p.id; });
        const double n = std::max(1, p.slots);
        const double ocpu = it == observed.end() ? 0.0 : it->cpu_pct;
        const double omem = it == observed.end() ? 0.0 : it->mem_pct;
        VmDelta d{p.id, (p.cpu_pct - ocpu) / n, (p.mem_pct - omem) / n};
        a.max_cpu_delta = std::max(a.max_cpu_delta, std::abs(d.cpu_points));
        a.max_mem_delta = std::max(a.max_mem_delta, std::abs(d.mem_points));
        a.vms.push_back(d);
        pc.push_back(p.cpu_pct / n);
        oc.push_back(ocpu / n);
        pm.push_back(p.mem_pct / n);
        om.push_back(omem / n);
    }
    auto pearson = [](const std::vector<double>& x, const std::vector<double>& y) {
        const double n = static_cast<double>(x.size());
        if (x.empty()) return 1.0;
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            mx += x[i] / n;
            my += y[i] / n;
        }
        double sxy = 0, sxx = 0, syy = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
            syy += (y[i] - my) * (y[i] - my);
        }
        if (sxx <= 1e-12 || syy <= 1e-12) return x == y ? 1.0 : 0.0;
        return sxy / std::sqrt(sxx * syy);
    };
    a.cpu_correlation = pearson(pc, oc);
    a.mem_correlation = pearson(pm, om);
    return a;
}

nlohmann::json to_json(const SimReport& r) {
    nlohmann::json vms = nlohmann::json::array();
    for (const auto& v : r.vms) vms.push_back(to_json(v));
    return {{"omega", r.omega},
            {"stable", r.stable},
            {"latency_growth", r.latency_growth},
            {"backlog_growth", r.backlog_growth},
            {"latency",
             {{"samples", r.latency.samples},
              {"mean", r.latency.mean},
              {"p50", r.latency.p50},
              {"p99", r.latency.p99},
              {"slope", r.latency.slope},
              {"slope_stderr", r.latency.slope_stderr}}},
            {"vms", vms},
            {"throughput", r.throughput},
            {"max_queue", r.max_queue},
            {"events", r.events}};
}

nlohmann::json to_json(const Accuracy& a) {
    nlohmann::json vms = nlohmann::json::array();
    for (const auto& v : a.vms) vms.push_back({{"id", v.id}, {"cpu_delta", v.cpu_points}, {"mem_delta", v.mem_points}});
    nlohmann::json err = std::isfinite(a.rate_error) ? nlohmann::json(a.rate_error) : nlohmann::json(nullptr);
    return {{"rate_error", err},
            {"max_cpu_delta", a.max_cpu_delta},
            {"max_mem_delta", a.max_mem_delta},
            {"cpu_correlation", a.cpu_correlation},
            {"mem_correlation", a.mem_correlation},
            {"vms", vms}};
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
    out << "tuple_id,emit_time,sink_time\n";
    for (const auto& r : trace) out << r.tuple_id << ',' << r.emit_time << ',' << r.sink_time << '\n';
}

}  // namespace streamsched
