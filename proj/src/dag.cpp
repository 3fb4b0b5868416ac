#include "streamsched/dag.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

namespace streamsched {

Selectivity::Selectivity(std::int64_t num, std::int64_t den) {
    if (den == 0) throw DagError("selectivity denominator is zero");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    num_ = g ? num / g : num;
    den_ = g ? den / g : den;
}

Selectivity Selectivity::parse(const std::string& text) {
    const auto colon = text.find(':');
    try {
        if (colon != std::string::npos) {
            std::size_t used_a = 0, used_b = 0;
            const std::string a = text.substr(0, colon), b = text.substr(colon + 1);
            const auto num = std::stoll(a, &used_a);
            const auto den = std::stoll(b, &used_b);
            if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument(text);
            return {num, den};
        }
        // decimal literal: digits [. digits]
        std::int64_t num = 0, den = 1;
        bool seen_dot = false, seen_digit = false;
        for (char ch : text) {
            if (ch == '.' && !seen_dot) {
                seen_dot = true;
            } else if (ch >= '0' && ch <= '9') {
                seen_digit = true;
                num = num * 10 + (ch - '0');
                if (seen_dot) den *= 10;
                if (den > 1'000'000'000'000LL) break;
            } else {
                throw std::invalid_argument(text);
            }
        }
        if (!seen_digit) throw std::invalid_argument(text);
        return {num, den};
    } catch (const std::logic_error&) {
        throw DagError("malformed selectivity '" + text + "'");
    }
}

std::string Selectivity::str() const {
    return std::to_string(num_) + ":" + std::to_string(den_);
}

const TaskDef* Dataflow::find(const TaskId& id) const {
    for (const auto& t : tasks)
        if (t.id == id) return &t;
    return nullptr;
}

const TaskDef& Dataflow::task(const TaskId& id) const {
    if (const auto* t = find(id)) return *t;
    throw DagError("unknown task '" + id + "'");
}

std::vector<const StreamEdge*> Dataflow::in_edges(const TaskId& id) const {
    std::vector<const StreamEdge*> out;
    for (const auto& e : edges)
        if (e.to == id) out.push_back(&e);
    return out;
}

std::vector<const StreamEdge*> Dataflow::out_edges(const TaskId& id) const {
    std::vector<const StreamEdge*> out;
    for (const auto& e : edges)
        if (e.from == id) out.push_back(&e);
    return out;
}

namespace {

// Returns the topological order, or the ids left over when a cycle blocks progress.
std::pair<std::vector<TaskId>, std::vector<TaskId>> kahn(const Dataflow& g) {
    std::map<TaskId, int> indegree;
    for (const auto& t : g.tasks) indegree[t.id] = 0;
    for (const auto& e : g.edges)
        if (indegree.count(e.to) && indegree.count(e.from)) ++indegree[e.to];

    std::priority_queue<TaskId, std::vector<TaskId>, std::greater<>> ready;
    for (const auto& [id, deg] : indegree)
        if (deg == 0) ready.push(id);

    std::vector<TaskId> order;
    while (!ready.empty()) {
        TaskId id = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto& e : g.edges) {
            if (e.from != id || !indegree.count(e.to)) continue;
            if (--indegree[e.to] == 0) ready.push(e.to);
        }
    }
    std::vector<TaskId> blocked;
    for (const auto& [id, deg] : indegree)
        if (deg > 0) blocked.push_back(id);
    return {order, blocked};
}

}  // namespace

std::vector<std::string> validate(const Dataflow& g) {
    std::vector<std::string> issues;
    if (g.tasks.empty()) issues.emplace_back("dataflow has no tasks");

    std::set<TaskId> ids;
    for (const auto& t : g.tasks) {
        if (t.id.empty()) issues.emplace_back("task with empty id");
        if (!ids.insert(t.id).second) issues.push_back("duplicate task id " + t.id);
        if (t.fixed && t.fixed->threads < 1)
            issues.push_back("fixed resources of " + t.id + " need at least one thread");
    }
    for (const auto& e : g.edges) {
        const std::string name = e.from + "->" + e.to;
        if (!ids.count(e.from)) issues.push_back("edge " + name + " starts at unknown task " + e.from);
        if (!ids.count(e.to)) issues.push_back("edge " + name + " ends at unknown task " + e.to);
        if (e.from == e.to) issues.push_back("self-loop at " + e.from);
        if (e.selectivity.num() <= 0) issues.push_back("edge " + name + " has non-positive selectivity");
    }

    bool self_loop = std::any_of(g.edges.begin(), g.edges.end(),
                                 [](const StreamEdge& e) { return e.from == e.to; });
    if (!self_loop && !g.tasks.empty()) {
        auto [order, blocked] = kahn(g);
        if (!blocked.empty()) issues.push_back("cycle detected through " + blocked.front());
    }
    return issues;
}

std::vector<TaskId> topo_order(const Dataflow& g) {
    auto [order, blocked] = kahn(g);
    if (!blocked.empty()) throw DagError("cycle detected through task " + blocked.front());
    return order;
}

RateMap get_rate(const Dataflow& g, double omega) {
    if (omega < 0) throw DagError("negative DAG input rate");
    const auto issues = validate(g);
    if (!issues.empty()) throw DagError("invalid dataflow: " + issues.front());

    RateMap rates;
    for (const auto& id : topo_order(g)) {
        const auto in = g.in_edges(id);
        if (in.empty()) {
            rates[id] = omega;
            continue;
        }
        double sum = 0.0;
        for (const auto* e : in) sum += rates.at(e->from) * e->selectivity.value();
        rates[id] = sum;
    }
    return rates;
}

BuiltinDag parse_builtin_dag(const std::string& name) {
    if (name == "linear") return BuiltinDag::Linear;
    if (name == "diamond") return BuiltinDag::Diamond;
    if (name == "star") return BuiltinDag::Star;
    throw DagError("unknown builtin DAG '" + name + "' (expected linear, diamond or star)");
}

std::string to_string(BuiltinDag kind) {
    switch (kind) {
        case BuiltinDag::Linear: return "linear";
        case BuiltinDag::Diamond: return "diamond";
        case BuiltinDag::Star: return "star";
    }
    return "?";
}

FixedResources default_source_resources() { return {10.0, 15.0, 1}; }
FixedResources default_sink_resources() { return {10.0, 20.0, 1}; }

std::vector<std::string> default_task_kinds(BuiltinDag kind) {
    switch (kind) {
        case BuiltinDag::Linear:
            return {"parse-xml", "pi", "batch-file-write", "azure-blob", "azure-table"};
        case BuiltinDag::Diamond:
            return {"parse-xml", "pi", "azure-blob", "azure-table", "batch-file-write"};
        case BuiltinDag::Star:
            return {"pi", "azure-blob", "parse-xml", "azure-table", "batch-file-write"};
    }
    return {};
}

Dataflow builtin_dag(BuiltinDag kind, const std::vector<std::string>& task_kinds) {
    if (task_kinds.size() != 5)
        throw DagError("builtin DAGs take exactly 5 task kinds, got " + std::to_string(task_kinds.size()));

    Dataflow g;
    TaskDef source{"source", "source", true, false, default_source_resources()};
    TaskDef sink{"sink", "sink", false, true, default_sink_resources()};
    g.tasks.push_back(source);
    for (int i = 0; i < 5; ++i)
        g.tasks.push_back(TaskDef{"t" + std::to_string(i + 1), task_kinds[i], false, false, std::nullopt});
    g.tasks.push_back(sink);

    auto edge = [&](const std::string& a, const std::string& b) { g.edges.push_back({a, b, Selectivity{1, 1}}); };
    switch (kind) {
        case BuiltinDag::Linear:
            edge("source", "t1");
            edge("t1", "t2");
            edge("t2", "t3");
            edge("t3", "t4");
            edge("t4", "t5");
            edge("t5", "sink");
            break;
        case BuiltinDag::Diamond:
            edge("source", "t1");
            for (const char* mid : {"t2", "t3", "t4"}) {
                edge("t1", mid);
                edge(mid, "t5");
            }
            edge("t5", "sink");
            break;
        case BuiltinDag::Star:
            edge("source", "t1");
            edge("source", "t2");
            edge("t1", "t3");
            edge("t2", "t3");
            edge("t3", "t4");
            edge("t3", "t5");
            edge("t4", "sink");
            edge("t5", "sink");
            break;
    }
    return g;
}

nlohmann::json to_json(const Dataflow& g) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : g.tasks) {
        nlohmann::json jt{{"id", t.id}, {"kind", t.kind}};
        if (t.is_source) jt["source"] = true;
        if (t.is_sink) jt["sink"] = true;
        if (t.fixed) jt["fixed"] = {{"cpu", t.fixed->cpu_pct}, {"mem", t.fixed->mem_pct}, {"threads", t.fixed->threads}};
        tasks.push_back(jt);
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges)
        edges.push_back({{"from", e.from}, {"to", e.to}, {"selectivity", e.selectivity.str()}});
    return {{"tasks", tasks}, {"edges", edges}};
}

Dataflow dataflow_from_json(const nlohmann::json& doc) {
    try {
        Dataflow g;
        for (const auto& jt : doc.at("tasks")) {
            TaskDef t;
            t.id = jt.at("id").get<std::string>();
            t.kind = jt.value("kind", t.id);
            t.is_source = jt.value("source", false);
            t.is_sink = jt.value("sink", false);
            if (jt.contains("fixed")) {
                const auto& f = jt.at("fixed");
                t.fixed = FixedResources{f.at("cpu").get<double>(), f.at("mem").get<double>(), f.value("threads", 1)};
            } else if (t.is_source) {
                t.fixed = default_source_resources();
            } else if (t.is_sink) {
                t.fixed = default_sink_resources();
            }
            g.tasks.push_back(std::move(t));
        }
        for (const auto& je : doc.at("edges")) {
            StreamEdge e{je.at("from").get<std::string>(), je.at("to").get<std::string>(), Selectivity{}};
            if (je.contains("selectivity")) {
                const auto& s = je.at("selectivity");
                e.selectivity = Selectivity::parse(s.is_string() ? s.get<std::string>() : s.dump());
            }
            g.edges.push_back(std::move(e));
        }
        return g;
    } catch (const nlohmann::json::exception& ex) {
        throw DagError(std::string("malformed DAG document: ") + ex.what());
    }
}

nlohmann::json to_json(const RateMap& rates) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [id, r] : rates) out[id] = r;
    return out;
}

}  // namespace streamsched
