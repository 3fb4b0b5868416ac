// streamsched command-line front end.
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "streamsched/allocation.hpp"
#include "streamsched/dag.hpp"
#include "streamsched/experiment.hpp"
#include "streamsched/mapping.hpp"
#include "streamsched/perf_model.hpp"
#include "streamsched/predictor.hpp"
#include "streamsched/simulator.hpp"

#ifndef STREAMSCHED_MODELS_DIR
#define STREAMSCHED_MODELS_DIR "data/models"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace streamsched;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 1;
constexpr int kExitUsage = 2;

/// Bad input or configuration; maps to the usage exit code.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string models_dir = STREAMSCHED_MODELS_DIR;
    std::uint64_t seed = 42;
    std::string out_dir;
    std::string format = "json";
};

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError(path + ": " + e.what());
    }
}

// Writes next to the target and renames, so readers never see a half-written file.
void write_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UsageError("cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

/// Writes `name` into the output directory, or prints it when no directory was given.
void emit(const Globals& g, const std::string& name, const std::string& text) {
    if (g.out_dir.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        return;
    }
    write_atomic(fs::path(g.out_dir) / name, text);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

ModelRegistry load_models(const Globals& g) {
    if (!fs::is_directory(g.models_dir)) throw UsageError("model directory '" + g.models_dir + "' does not exist");
    return ModelRegistry::load_dir(g.models_dir);
}

/// A builtin name (linear, diamond, star) or a DAG file.
Dataflow load_dag(const std::string& spec, const std::vector<std::string>& kinds) {
    if (spec == "linear" || spec == "diamond" || spec == "star") {
        const BuiltinDag kind = parse_builtin_dag(spec);
        return builtin_dag(kind, kinds.empty() ? default_task_kinds(kind) : kinds);
    }
    if (!kinds.empty()) throw UsageError("--kinds only applies to builtin DAGs");
    Dataflow d = dataflow_from_json(read_json(spec));
    const auto issues = validate(d);
    if (!issues.empty()) throw UsageError(spec + ": " + issues.front());
    return d;
}

std::vector<std::pair<Allocator, Mapper>> pairs_from(const std::vector<std::string>& allocators,
                                                     const std::vector<std::string>& mappers) {
    std::vector<std::pair<Allocator, Mapper>> out;
    for (const auto& a : allocators)
        for (const auto& m : mappers) {
            const Allocator al = parse_allocator(a);
            const Mapper mp = parse_mapper(m);
            if (mp == Mapper::SAM && al != Allocator::MBA) continue;
            out.emplace_back(al, mp);
        }
    return out;
}

// -- model build ---------------------------------------------------------------

struct SyntheticSpec {
    std::string shape;
    double a = 0.0;
    double b = 0.0;
};

SyntheticSpec parse_synthetic(const std::string& text) {
    // shape:a[:b]
    SyntheticSpec s;
    std::stringstream ss(text);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.size() < 2) throw UsageError("synthetic runner must look like linear:100, flat:300 or bell:300:10");
    s.shape = parts[0];
    try {
        s.a = std::stod(parts[1]);
        s.b = parts.size() > 2 ? std::stod(parts[2]) : 0.0;
    } catch (const std::exception&) {
        throw UsageError("bad number in synthetic runner '" + text + "'");
    }
    if (s.shape == "bell" && !(s.b > 0)) throw UsageError("bell runner needs a peak thread count, e.g. bell:300:10");
    if (s.shape != "linear" && s.shape != "flat" && s.shape != "bell")
        throw UsageError("unknown synthetic shape '" + s.shape + "'");
    if (!(s.a > 0)) throw UsageError("synthetic capacity must be positive");
    return s;
}

double synthetic_cap(const SyntheticSpec& s, int tau) {
    if (s.shape == "linear") return s.a * tau;
    if (s.shape == "flat") return s.a;
    const double x = (tau - s.b) / s.b;
    return s.a * std::max(0.1, 1.0 - 0.5 * x * x);
}

int cmd_model_build(const Globals& g, const std::string& fixture, const std::string& synthetic,
                    const std::string& name, const BuildParams& params) {
    if (fixture.empty() == synthetic.empty()) throw UsageError("give exactly one of --fixture or --synthetic");
    TaskPerfModel model;
    if (!fixture.empty()) {
        model = load_models(g).at(fixture);
    } else {
        const SyntheticSpec spec = parse_synthetic(synthetic);
        TrialRunner runner = [spec](int tau, double omega) {
            TrialResult r;
            const double cap = synthetic_cap(spec, tau);
            r.is_stable = omega <= cap;
            r.cpu_pct = std::min(100.0, 100.0 * omega / std::max(cap, 1.0));
            r.mem_pct = std::min(100.0, 5.0 + tau);
            return r;
        };
        auto out = build_model(name.empty() ? spec.shape : name, runner, params);
        model = std::move(out.model);
        model.provenance = {{"synthetic", synthetic}, {"stopped_by", to_string(out.stopped_by)},
                            {"trials", out.trials}};
    }
    emit(g, model.kind() + ".json", dump(to_json(model)));
    return kExitOk;
}

int cmd_model_show(const Globals& g, const std::string& what) {
    TaskPerfModel model = fs::is_regular_file(what) ? model_from_json(read_json(what)) : load_models(g).at(what);
    if (g.format == "csv") {
        std::ostringstream out;
        out << "threads,peak_rate,cpu,mem\n";
        for (const auto& p : model.points())
            out << p.threads << ',' << p.peak_rate << ',' << p.cpu_pct << ',' << p.mem_pct << '\n';
        emit(g, model.kind() + ".csv", out.str());
    } else {
        json j = to_json(model);
        const auto best = max_peak(model);
        j["max_peak"] = {{"rate", best.rate}, {"threads", best.threads}};
        emit(g, model.kind() + ".json", dump(j));
    }
    return kExitOk;
}

// -- planning commands ---------------------------------------------------------------

int cmd_rate(const Globals& g, const Dataflow& dag, double omega) {
    const RateMap rates = get_rate(dag, omega);
    if (g.format == "csv") {
        std::ostringstream out;
        out << "task,rate\n";
        for (const auto& [id, r] : rates) out << id << ',' << r << '\n';
        emit(g, "rates.csv", out.str());
    } else {
        emit(g, "rates.json", dump(to_json(rates)));
    }
    return kExitOk;
}

int cmd_allocate(const Globals& g, const Dataflow& dag, double omega, const std::string& allocator) {
    const AllocationPlan plan = allocate(parse_allocator(allocator), dag, omega, load_models(g));
    if (g.format == "csv") {
        std::ostringstream out;
        out << "task,threads,cpu,mem\n";
        for (const auto& t : plan.tasks) out << t.id << ',' << t.threads << ',' << t.cpu_pct << ',' << t.mem_pct << '\n';
        emit(g, "allocation.csv", out.str());
    } else {
        emit(g, "allocation.json", dump(to_json(plan)));
    }
    return kExitOk;
}

int cmd_acquire(const Globals& g, int rho, const std::string& allocation_file, int largest) {
    if (rho <= 0 && allocation_file.empty()) throw UsageError("give --rho or --allocation");
    if (rho <= 0) rho = allocation_from_json(read_json(allocation_file)).rho;
    emit(g, "cluster.json", dump(to_json(acquire_vms(rho, d_series_catalog(largest)))));
    return kExitOk;
}

int cmd_map(const Globals& g, const Dataflow& dag, const std::string& allocation_file, const std::string& cluster_file,
            const std::string& mapper_name, int largest, int max_extra) {
    const AllocationPlan alloc = allocation_from_json(read_json(allocation_file));
    const Mapper mapper = parse_mapper(mapper_name);
    if (mapper == Mapper::SAM && alloc.algorithm != Allocator::MBA)
        throw UsageError("SAM mapping requires an MBA allocation");
    const ModelRegistry models = load_models(g);
    auto fn = [&](const Cluster& c) { return map_with(mapper, dag, alloc, c, models); };
    RetryResult r;
    if (!cluster_file.empty()) {
        // a given cluster is taken as is
        Cluster c = cluster_from_json(read_json(cluster_file));
        r = {fn(c), c};
    } else {
        r = map_with_retry(fn, alloc.rho, [&](int n) { return acquire_vms(n, d_series_catalog(largest)); }, max_extra);
    }
    emit(g, "cluster.json", dump(to_json(r.cluster)));
    emit(g, "mapping.json", dump(to_json(r.plan, r.cluster)));
    return kExitOk;
}

int cmd_schedule(const Globals& g, const Dataflow& dag, double omega, const std::string& allocator,
                 const std::string& mapper, int largest, int max_extra) {
    const Allocator al = parse_allocator(allocator);
    const Mapper mp = parse_mapper(mapper);
    if (mp == Mapper::SAM && al != Allocator::MBA) throw UsageError("SAM mapping requires MBA allocation");
    const Schedule s = make_schedule(dag, omega, al, mp, load_models(g), d_series_catalog(largest), max_extra);
    emit(g, "allocation.json", dump(to_json(s.allocation)));
    emit(g, "cluster.json", dump(to_json(s.cluster)));
    emit(g, "mapping.json", dump(to_json(s.mapping, s.cluster)));
    return kExitOk;
}

struct Deployed {
    Cluster cluster;
    MappingPlan mapping;
};

Deployed load_deployment(const std::string& cluster_file, const std::string& mapping_file) {
    Deployed d;
    d.cluster = cluster_from_json(read_json(cluster_file));
    d.mapping = mapping_from_json(read_json(mapping_file), d.cluster);
    return d;
}

int cmd_predict(const Globals& g, const Dataflow& dag, const Deployed& d) {
    const Prediction p = predict(dag, d.mapping, d.cluster, load_models(g));
    if (g.format == "csv") {
        std::ostringstream out;
        out << "vm,slots,cpu,mem\n";
        for (const auto& v : p.vms) out << v.id << ',' << v.slots << ',' << v.cpu_pct << ',' << v.mem_pct << '\n';
        emit(g, "prediction.csv", out.str());
    } else {
        emit(g, "prediction.json", dump(to_json(p, d.cluster)));
    }
    return kExitOk;
}

int cmd_simulate(const Globals& g, const Dataflow& dag, const Deployed& d, SimConfig cfg, double step,
                 bool trace) {
    const ModelRegistry models = load_models(g);
    cfg.seed = g.seed;
    cfg.record_trace = trace;
    json doc;
    if (step > 0) {
        const auto found = find_max_stable_rate(dag, d.mapping, d.cluster, models, step, cfg);
        doc["max_stable_rate"] = found.rate;
        doc["runs"] = found.runs;
        if (found.unstable_at_start) std::cerr << "warning: unstable even at " << step << " t/s\n";
        cfg.omega = found.rate;
    }
    const SimReport rep = simulate(dag, d.mapping, d.cluster, models, cfg);
    doc["report"] = to_json(rep);
    emit(g, "simulation.json", dump(doc));
    if (trace) {
        std::ostringstream out;
        write_trace_csv(out, rep.trace);
        if (g.out_dir.empty())
            std::cerr << "note: --trace needs --out to write trace.csv\n";
        else
            emit(g, "trace.csv", out.str());
    }
    return kExitOk;
}

// -- evaluate ------------------------------------------------------------------------

struct EvalArgs {
    std::string spec_file;
    std::string dag;
    std::vector<std::string> kinds;
    std::vector<double> rates;
    std::vector<std::string> allocators{"lsa", "mba"};
    std::vector<std::string> mappers{"dsm", "rsm", "sam"};
    std::string fixed_cluster;
    int largest = 3;
    double step = 10.0;
    double start_fraction = 0.0;
    bool parallel = false;
};

ExperimentSpec spec_from_file(const std::string& path, EvalArgs& args, Globals& g) {
    const json doc = read_json(path);
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        if (p == "linear" || p == "diamond" || p == "star" || fs::path(p).is_absolute()) return p;
        return (base / p).string();
    };
    ExperimentSpec spec;
    try {
        args.dag = resolve(doc.at("dag").get<std::string>());
        args.kinds = doc.value("kinds", std::vector<std::string>{});
        args.rates = doc.value("rates", std::vector<double>{});
        args.allocators = doc.value("allocators", args.allocators);
        args.mappers = doc.value("mappers", args.mappers);
        if (doc.contains("cluster")) args.fixed_cluster = resolve(doc.at("cluster").get<std::string>());
        args.largest = doc.value("catalog", args.largest);
        if (doc.contains("out") && g.out_dir.empty()) g.out_dir = (base / doc.at("out").get<std::string>()).string();
        const json sim = doc.value("sim", json::object());
        spec.sim.duration = sim.value("duration", spec.sim.duration);
        spec.sim.warmup = sim.value("warmup", spec.sim.warmup);
        spec.sim.significance = sim.value("significance", spec.sim.significance);
        if (sim.contains("seed")) g.seed = sim.at("seed").get<std::uint64_t>();
        args.step = sim.value("step", args.step);
        args.start_fraction = sim.value("start_fraction", args.start_fraction);
    } catch (const json::exception& e) {
        throw UsageError(path + ": " + e.what());
    }
    spec.dag_name = fs::path(args.dag).stem().string();
    return spec;
}

int cmd_evaluate(Globals g, EvalArgs args) {
    ExperimentSpec spec;
    if (!args.spec_file.empty()) spec = spec_from_file(args.spec_file, args, g);
    if (args.dag.empty()) throw UsageError("evaluate needs --spec or --dag");
    spec.dataflow = load_dag(args.dag, args.kinds);
    spec.dag_name = fs::path(args.dag).stem().string();
    spec.pairs = pairs_from(args.allocators, args.mappers);
    if (spec.pairs.empty()) throw UsageError("no valid allocator/mapper pair selected");
    spec.catalog = d_series_catalog(args.largest);
    spec.sim.seed = g.seed;
    spec.sim_step = args.step;
    spec.search_start_fraction = args.start_fraction;
    spec.rates = args.rates;
    if (!args.fixed_cluster.empty()) spec.fixed_cluster = cluster_from_json(read_json(args.fixed_cluster));
    if (!spec.fixed_cluster && spec.rates.empty()) throw UsageError("evaluate needs --rates or --fixed-cluster");
    spec.sim.validate();

    const ModelRegistry models = load_models(g);
    const auto cells = args.parallel ? evaluate_parallel(spec, models) : evaluate(spec, models);

    json report = json::array();
    for (const auto& c : cells) report.push_back(to_json(c));
    std::ostringstream csv;
    write_summary_csv(csv, spec.dag_name, cells);
    if (g.out_dir.empty()) {
        std::cout << (g.format == "csv" ? csv.str() : dump(report));
    } else {
        emit(g, "report.json", dump(report));
        emit(g, "summary.csv", csv.str());
    }
    for (const auto& c : cells)
        if (!c.ok) {
            std::cerr << to_string(c.allocator) << "+" << to_string(c.mapper) << " @ " << c.omega << ": " << c.error
                      << '\n';
        }
    const bool all_ok = std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.ok; });
    return all_ok ? kExitOk : kExitInfeasible;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Allocate, place and simulate streaming dataflows on VM slots"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--models", g.models_dir, "Directory of task performance model files");
    app.add_option("--seed", g.seed, "Random seed for simulations");
    app.add_option("--out", g.out_dir, "Write output files into this directory instead of stdout");
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "csv"}));

    std::string dag;
    std::vector<std::string> kinds;
    double omega = 0.0;
    std::string allocator = "mba", mapper = "sam";
    int largest = 3, max_extra = 256;
    auto add_dag = [&](CLI::App* sub, bool required = true) {
        auto* o = sub->add_option("--dag", dag, "Builtin DAG (linear, diamond, star) or DAG file");
        if (required) o->required();
        sub->add_option("--kinds", kinds, "Task kinds for the five tasks of a builtin DAG")->expected(5);
    };

    // model
    auto* model = app.add_subcommand("model", "Build or inspect task performance models");
    model->require_subcommand(1);
    auto* build = model->add_subcommand("build", "Write a model file from a fixture or a synthetic runner");
    std::string fixture, synthetic, model_name;
    BuildParams params;
    build->add_option("--fixture", fixture, "Copy a shipped model by kind");
    build->add_option("--synthetic", synthetic, "Synthetic runner: linear:A, flat:A or bell:PEAK:AT_THREADS");
    build->add_option("--name", model_name, "Kind name for a synthetic model");
    build->add_option("--delta-omega", params.delta_omega, "Rate step (<= 0: 5% of the last stable rate)");
    build->add_option("--tau-max", params.tau_max, "Thread limit")->check(CLI::PositiveNumber);
    build->add_option("--omega-max", params.omega_max, "Rate limit")->check(CLI::PositiveNumber);
    build->add_option("--threads", params.thread_schedule, "Thread counts to sweep");
    auto* show = model->add_subcommand("show", "Print a model");
    std::string show_what;
    show->add_option("model", show_what, "Model kind or model file")->required();

    auto* rate = app.add_subcommand("rate", "Per-task input rates for a DAG rate");
    add_dag(rate);
    rate->add_option("--omega", omega, "DAG input rate (tuples/sec)")->required()->check(CLI::NonNegativeNumber);

    auto* alloc = app.add_subcommand("allocate", "Threads and slots per task");
    add_dag(alloc);
    alloc->add_option("--omega", omega, "DAG input rate")->required()->check(CLI::NonNegativeNumber);
    alloc->add_option("--allocator", allocator, "lsa or mba")->check(CLI::IsMember({"lsa", "mba", "LSA", "MBA"}));

    auto* acquire = app.add_subcommand("acquire", "VMs for a slot count");
    int rho = 0;
    std::string allocation_file, cluster_file, mapping_file;
    acquire->add_option("--rho", rho, "Slot count")->check(CLI::PositiveNumber);
    acquire->add_option("--allocation", allocation_file, "Allocation file to take the slot count from");
    acquire->add_option("--largest", largest, "Largest D-series size (1-4)")->check(CLI::Range(1, 4));

    auto* map = app.add_subcommand("map", "Map an allocation onto VMs");
    add_dag(map);
    map->add_option("--allocation", allocation_file, "Allocation file")->required();
    map->add_option("--cluster", cluster_file, "Cluster file; without it VMs are acquired with slot retries");
    map->add_option("--mapper", mapper, "dsm, rsm or sam")->check(CLI::IsMember({"dsm", "rsm", "sam", "DSM", "RSM", "SAM"}));
    map->add_option("--largest", largest, "Largest D-series size (1-4)")->check(CLI::Range(1, 4));
    map->add_option("--max-extra", max_extra, "Most extra slots to try")->check(CLI::NonNegativeNumber);

    auto* schedule = app.add_subcommand("schedule", "Allocate, acquire and map in one go");
    add_dag(schedule);
    schedule->add_option("--omega", omega, "DAG input rate")->required()->check(CLI::PositiveNumber);
    schedule->add_option("--allocator", allocator, "lsa or mba")->check(CLI::IsMember({"lsa", "mba", "LSA", "MBA"}));
    schedule->add_option("--mapper", mapper, "dsm, rsm or sam")
        ->check(CLI::IsMember({"dsm", "rsm", "sam", "DSM", "RSM", "SAM"}));
    schedule->add_option("--largest", largest, "Largest D-series size (1-4)")->check(CLI::Range(1, 4));
    schedule->add_option("--max-extra", max_extra, "Most extra slots to try")->check(CLI::NonNegativeNumber);

    auto* pred = app.add_subcommand("predict", "Predicted rate and VM usage of a mapping");
    add_dag(pred);
    pred->add_option("--cluster", cluster_file, "Cluster file")->required();
    pred->add_option("--mapping", mapping_file, "Mapping file")->required();

    auto* sim = app.add_subcommand("simulate", "Simulate a mapping at a rate, or search its max stable rate");
    add_dag(sim);
    SimConfig cfg;
    double step = 0.0;
    bool trace = false;
    sim->add_option("--cluster", cluster_file, "Cluster file")->required();
    sim->add_option("--mapping", mapping_file, "Mapping file")->required();
    sim->add_option("--omega", cfg.omega, "Offered DAG rate")->check(CLI::NonNegativeNumber);
    sim->add_option("--duration", cfg.duration, "Simulated seconds");
    sim->add_option("--warmup", cfg.warmup, "Warm-up seconds");
    sim->add_option("--significance", cfg.significance, "Standard errors needed to call latency growth");
    sim->add_option("--max-rate-step", step, "Search the max stable rate in steps of this size");
    sim->add_flag("--trace", trace, "Write per-tuple trace.csv");

    auto* eval = app.add_subcommand("evaluate", "Run the allocator x mapper experiment matrix");
    EvalArgs ea;
    eval->add_option("--spec", ea.spec_file, "Experiment spec file");
    eval->add_option("--dag", ea.dag, "Builtin DAG or DAG file");
    eval->add_option("--kinds", ea.kinds, "Task kinds for a builtin DAG")->expected(5);
    eval->add_option("--rates", ea.rates, "DAG rates to plan for")->delimiter(',');
    eval->add_option("--allocators", ea.allocators, "Subset of lsa,mba")->delimiter(',');
    eval->add_option("--mappers", ea.mappers, "Subset of dsm,rsm,sam")->delimiter(',');
    eval->add_option("--fixed-cluster", ea.fixed_cluster, "Search the max plannable rate on this cluster");
    eval->add_option("--largest", ea.largest, "Largest D-series size (1-4)")->check(CLI::Range(1, 4));
    eval->add_option("--step", ea.step, "Simulated rate search step")->check(CLI::PositiveNumber);
    eval->add_option("--start-fraction", ea.start_fraction, "Start the search at this fraction of the predicted rate");
    eval->add_flag("--parallel", ea.parallel, "Run cells concurrently");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*build) return cmd_model_build(g, fixture, synthetic, model_name, params);
        if (*show) return cmd_model_show(g, show_what);
        if (*rate) return cmd_rate(g, load_dag(dag, kinds), omega);
        if (*alloc) return cmd_allocate(g, load_dag(dag, kinds), omega, allocator);
        if (*acquire) return cmd_acquire(g, rho, allocation_file, largest);
        if (*map) return cmd_map(g, load_dag(dag, kinds), allocation_file, cluster_file, mapper, largest, max_extra);
        if (*schedule) return cmd_schedule(g, load_dag(dag, kinds), omega, allocator, mapper, largest, max_extra);
        if (*pred) return cmd_predict(g, load_dag(dag, kinds), load_deployment(cluster_file, mapping_file));
        if (*sim) {
            if (step <= 0 && sim->count("--omega") == 0) throw UsageError("simulate needs --omega or --max-rate-step");
            cfg.validate();
            return cmd_simulate(g, load_dag(dag, kinds), load_deployment(cluster_file, mapping_file), cfg, step, trace);
        }
        if (*eval) return cmd_evaluate(g, ea);
    } catch (const InsufficientResources& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const std::exception& e) {
        // everything else is a bad input, file or option combination
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
