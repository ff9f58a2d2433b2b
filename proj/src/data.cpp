#include "kgqa/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "kgqa/rng.hpp"
#include "kgqa/threadpool.hpp"
#include "kgqa/vocab.hpp"

namespace kgqa {

using nlohmann::json;

const std::vector<std::string>& synthetic_entity_names() {
    static const std::vector<std::string> names = [] {
        const char* syl[] = {"ba", "de", "fi",  "go",  "hu",  "ka",  "lem", "mo", "nu", "pa",
                             "ri", "so", "tu",  "vel", "wo",  "za",  "che", "dra", "pli", "sku"};
        std::vector<std::string> v;
        for (int i = 0; i < 200; ++i)
            v.push_back(std::string(syl[i / 20]) + syl[i % 20]);
        return v;
    }();
    return names;
}

namespace {

constexpr int32_t kWithRel = 0;  // single synthetic relation

// Mediators and targets come from small dedicated slices of the entity
// vocabulary so their identities recur often enough to be learnable;
// questions and candidates draw from the remaining names.
constexpr int kMediatorPool = 12;
constexpr int kTargetPool = 12;

struct Roles {
    int q1, q2;
    std::vector<int> candidates, mediators, targets;  // indexes into entity names
};

QAExample gen_one(uint64_t dataset_seed, int index, int k, double negation_rate,
                  double hedge_rate) {
    const auto& ent = synthetic_entity_names();
    Rng rng(mix64(mix64(dataset_seed, uint64_t(index)), 0x73796e7468ull));

    Roles r;
    auto sample_distinct = [&](int lo, int hi, int count, std::vector<int>& out) {
        std::unordered_set<int> used;
        while (int(out.size()) < count) {
            int e = lo + int(rng.below(uint64_t(hi - lo)));
            if (used.insert(e).second) out.push_back(e);
        }
    };
    r.mediators.reserve(size_t(k));
    r.targets.reserve(size_t(k));
    sample_distinct(0, kMediatorPool, k, r.mediators);
    sample_distinct(kMediatorPool, kMediatorPool + kTargetPool, k, r.targets);
    std::vector<int> open;
    sample_distinct(kMediatorPool + kTargetPool, int(ent.size()), k + 2, open);
    r.q1 = open[0];
    r.q2 = open[1];
    r.candidates.assign(open.begin() + 2, open.end());

    bool negated = rng.uniform() < negation_rate;
    bool hedged = rng.uniform() < hedge_rate;
    const char* hedge_word = rng.uniform() < 0.5 ? "maybe" : "sometimes";
    int label = int(rng.below(uint64_t(k)));

    QAExample ex;
    ex.label = label;
    ex.id = cat("syn", index);

    // per-example KG: local ids follow a fixed role order
    KgPayload kg;
    auto add_node = [&](int entity) {
        kg.nodes.emplace_back(int32_t(kg.nodes.size()), ent[size_t(entity)]);
        return int32_t(kg.nodes.size()) - 1;
    };
    int32_t q1_node = add_node(r.q1);
    int32_t q2_node = add_node(r.q2);
    std::vector<int32_t> cand_nodes, med_nodes, tgt_nodes;
    for (int i = 0; i < k; ++i) cand_nodes.push_back(add_node(r.candidates[size_t(i)]));
    for (int i = 0; i < k; ++i) med_nodes.push_back(add_node(r.mediators[size_t(i)]));
    for (int i = 0; i < k; ++i) tgt_nodes.push_back(add_node(r.targets[size_t(i)]));

    for (int i = 0; i < k; ++i) kg.edges.push_back({cand_nodes[size_t(i)], kWithRel, med_nodes[size_t(i)]});
    for (int i = 0; i < k; ++i) {
        bool active = negated ? (i != label) : (i == label);
        if (active) {
            kg.edges.push_back({tgt_nodes[size_t(i)], kWithRel, q1_node});
            kg.edges.push_back({tgt_nodes[size_t(i)], kWithRel, q2_node});
        }
    }
    ex.kg = std::move(kg);

    // context: "m x" pairing statements in shuffled order
    std::vector<int> stmt_order(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) stmt_order[size_t(i)] = i;
    rng.shuffle(stmt_order);
    std::string context;
    for (int i : stmt_order) {
        if (!context.empty()) context += ' ';
        context += ent[size_t(r.mediators[size_t(i)])];
        context += " with ";
        context += ent[size_t(r.targets[size_t(i)])];
    }
    ex.context = context;

    std::string question = "which one ";
    if (hedged) question += std::string(hedge_word) + " ";
    question += negated ? "does not go with " : "goes with ";
    question += ent[size_t(r.q1)] + " and " + ent[size_t(r.q2)];
    ex.question = question;

    for (int i = 0; i < k; ++i) ex.candidates.push_back(ent[size_t(r.candidates[size_t(i)])]);
    return ex;
}

}  // namespace

Dataset gen_synthetic_mcqa(uint64_t seed, int n_examples, int k_way, double negation_rate,
                           double hedge_rate, int threads) {
    require(k_way == 4 || k_way == 5, "gen_synthetic_mcqa: k_way must be 4 or 5, got ", k_way);
    require(negation_rate >= 0.0 && negation_rate <= 1.0, "gen_synthetic_mcqa: negation_rate ",
            negation_rate, " outside [0,1]");
    require(hedge_rate >= 0.0 && hedge_rate <= 1.0, "gen_synthetic_mcqa: hedge_rate ", hedge_rate,
            " outside [0,1]");
    require(n_examples >= 0, "gen_synthetic_mcqa: negative n_examples");

    Dataset ds(static_cast<size_t>(n_examples));
    parallel_for(threads, n_examples, [&](int i) {
        ds[size_t(i)] = gen_one(seed, i, k_way, negation_rate, hedge_rate);
        int got = solve_synthetic(ds[size_t(i)]);
        require(got == ds[size_t(i)].label, "gen_synthetic_mcqa: oracle disagrees on example ", i,
                " (got ", got, ", want ", ds[size_t(i)].label, ")");
    });
    return ds;
}

int solve_synthetic(const QAExample& ex) {
    require(ex.kg.has_value(), "solve_synthetic: example has no KG payload");
    const auto& kg = *ex.kg;

    std::unordered_map<std::string, int32_t> node_of;
    for (const auto& [id, name] : kg.nodes) node_of[name] = id;

    auto q_tokens = tokenize(ex.question);
    bool negated = std::find(q_tokens.begin(), q_tokens.end(), "not") != q_tokens.end();
    // question entities: "... with <q1> and <q2>"
    require(q_tokens.size() >= 4, "solve_synthetic: malformed question '", ex.question, "'");
    std::string q1 = q_tokens[q_tokens.size() - 3];
    std::string q2 = q_tokens[q_tokens.size() - 1];
    require(node_of.count(q1) && node_of.count(q2),
            "solve_synthetic: question entities not in KG");
    int32_t q1_node = node_of[q1], q2_node = node_of[q2];

    // context pairings: consecutive "m with x" triples
    std::unordered_map<int32_t, int32_t> partner;
    auto c_tokens = tokenize(ex.context);
    require(c_tokens.size() % 3 == 0, "solve_synthetic: malformed context '", ex.context, "'");
    for (size_t i = 0; i + 3 <= c_tokens.size(); i += 3) {
        require(c_tokens[i + 1] == "with", "solve_synthetic: malformed pairing statement");
        require(node_of.count(c_tokens[i]) && node_of.count(c_tokens[i + 2]),
                "solve_synthetic: pairing entity not in KG");
        partner[node_of[c_tokens[i]]] = node_of[c_tokens[i + 2]];
    }

    std::set<std::pair<int32_t, int32_t>> adj;  // undirected
    for (const auto& e : kg.edges) {
        adj.emplace(e.head, e.tail);
        adj.emplace(e.tail, e.head);
    }

    int answer = -1;
    for (size_t ci = 0; ci < ex.candidates.size(); ++ci) {
        auto it = node_of.find(ex.candidates[ci]);
        require(it != node_of.end(), "solve_synthetic: candidate '", ex.candidates[ci],
                "' not in KG");
        // the candidate's unique mediator
        int32_t mediator = -1;
        for (const auto& e : kg.edges) {
            if (e.head == it->second) mediator = e.tail;
            else if (e.tail == it->second) mediator = e.head;
        }
        require(mediator >= 0, "solve_synthetic: candidate has no mediator edge");
        auto pit = partner.find(mediator);
        require(pit != partner.end(), "solve_synthetic: mediator has no stated partner");
        bool connected =
            adj.count({pit->second, q1_node}) > 0 && adj.count({pit->second, q2_node}) > 0;
        if (connected != negated) {
            require(answer < 0, "solve_synthetic: multiple satisfying candidates");
            answer = int(ci);
        }
    }
    require(answer >= 0, "solve_synthetic: no satisfying candidate");
    return answer;
}

std::string example_to_json(const QAExample& ex) {
    json j;
    j["id"] = ex.id;
    j["context"] = ex.context;
    j["question"] = ex.question;
    j["candidates"] = ex.candidates;
    j["label"] = ex.label;
    if (ex.kg) {
        json nodes = json::array();
        for (const auto& [id, name] : ex.kg->nodes) nodes.push_back({id, name});
        json edges = json::array();
        for (const auto& e : ex.kg->edges) edges.push_back({e.head, e.rel, e.tail});
        j["kg"] = {{"nodes", nodes}, {"edges", edges}};
    }
    return j.dump();
}

QAExample example_from_json(const std::string& line, int line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const std::exception& e) {
        fail("dataset line ", line_no, ": malformed JSON: ", e.what());
    }
    QAExample ex;
    try {
        ex.id = j.at("id").get<std::string>();
        ex.context = j.at("context").get<std::string>();
        ex.question = j.at("question").get<std::string>();
        ex.candidates = j.at("candidates").get<std::vector<std::string>>();
        ex.label = j.at("label").get<int>();
        if (j.count("kg")) {
            KgPayload kg;
            for (const auto& n : j["kg"].at("nodes"))
                kg.nodes.emplace_back(n.at(0).get<int32_t>(), n.at(1).get<std::string>());
            for (const auto& e : j["kg"].at("edges"))
                kg.edges.push_back(
                    {e.at(0).get<int32_t>(), e.at(1).get<int32_t>(), e.at(2).get<int32_t>()});
            ex.kg = std::move(kg);
        }
    } catch (const json::exception& e) {
        fail("dataset line ", line_no, ": ", e.what());
    }
    require(ex.candidates.size() == 4 || ex.candidates.size() == 5, "dataset line ", line_no,
            ": expected 4 or 5 candidates, got ", ex.candidates.size());
    require(ex.label >= 0 && ex.label < int(ex.candidates.size()), "dataset line ", line_no,
            ": label ", ex.label, " out of range for ", ex.candidates.size(), " candidates");
    std::set<std::string> uniq(ex.candidates.begin(), ex.candidates.end());
    require(uniq.size() == ex.candidates.size(), "dataset line ", line_no,
            ": duplicate candidates");
    return ex;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    require(f.good(), "dataset: cannot write ", path);
    for (const auto& ex : ds) f << example_to_json(ex) << '\n';
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "dataset: cannot read ", path);
    Dataset ds;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ds.push_back(example_from_json(line, line_no));
    }
    return ds;
}

int32_t EntityRegistry::id_of(const std::string& name) const {
    auto it = std::lower_bound(names.begin(), names.end(), name);
    require(it != names.end() && *it == name, "registry: unknown entity '", name, "'");
    return int32_t(it - names.begin());
}

void EntityRegistry::save(const std::string& path) const {
    json j;
    j["names"] = names;
    j["n_relations"] = n_relations;
    std::ofstream f(path, std::ios::trunc);
    require(f.good(), "registry: cannot write ", path);
    f << j.dump(2) << '\n';
}

EntityRegistry EntityRegistry::load(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "registry: cannot read ", path);
    json j = json::parse(f);
    EntityRegistry r;
    r.names = j.at("names").get<std::vector<std::string>>();
    r.n_relations = j.at("n_relations").get<int32_t>();
    return r;
}

EntityRegistry build_registry(const Dataset& ds) {
    std::set<std::string> names;
    int32_t max_rel = -1;
    for (const auto& ex : ds) {
        if (!ex.kg) continue;
        for (const auto& [id, name] : ex.kg->nodes) names.insert(normalize_name(name));
        for (const auto& e : ex.kg->edges) max_rel = std::max(max_rel, e.rel);
    }
    EntityRegistry r;
    r.names.assign(names.begin(), names.end());
    r.n_relations = max_rel + 1;
    return r;
}

EntityRegistry build_registry(const KnowledgeGraph& kg) {
    EntityRegistry r;
    r.names = kg.node_names();
    std::sort(r.names.begin(), r.names.end());
    r.names.erase(std::unique(r.names.begin(), r.names.end()), r.names.end());
    r.n_relations = kg.num_relations();
    return r;
}

KnowledgeGraph payload_to_kg(const KgPayload& payload) {
    std::vector<std::string> names(payload.nodes.size());
    for (const auto& [id, name] : payload.nodes) {
        require(id >= 0 && id < int32_t(payload.nodes.size()), "payload: node id ", id,
                " not dense");
        names[size_t(id)] = name;
    }
    int32_t max_rel = -1;
    for (const auto& e : payload.edges) max_rel = std::max(max_rel, e.rel);
    std::vector<std::string> rels;
    for (int32_t i = 0; i <= max_rel; ++i) rels.push_back(cat("r", i));
    return KnowledgeGraph(std::move(names), std::move(rels), payload.edges);
}

}  // namespace kgqa
