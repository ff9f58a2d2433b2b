#include "kgqa/retrieval.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

#include <json.hpp>

#include "kgqa/vocab.hpp"

namespace kgqa {

using nlohmann::json;

const char* node_type_name(NodeType t) {
    switch (t) {
        case NodeType::context: return "context";
        case NodeType::question: return "question";
        case NodeType::answer: return "answer";
        case NodeType::bridge: return "bridge";
        case NodeType::dummy: return "dummy";
        case NodeType::interaction: return "interaction";
    }
    fail("node_type_name: bad type");
}

NodeType node_type_from_name(const std::string& s) {
    for (int i = 0; i < kNumNodeTypes; ++i)
        if (s == node_type_name(NodeType(i))) return NodeType(i);
    fail("node_type_from_name: unknown type '", s, "'");
}

namespace {

// name -> node id; lowest id wins on (rare) normalized-name collisions
std::unordered_map<std::string, int32_t> name_index(const KnowledgeGraph& kg) {
    std::unordered_map<std::string, int32_t> idx;
    for (int32_t i = 0; i < kg.num_nodes(); ++i) idx.emplace(kg.node_name(i), i);
    return idx;
}

int max_name_tokens(const KnowledgeGraph& kg) {
    int mx = 1;
    for (int32_t i = 0; i < kg.num_nodes(); ++i) {
        int n = 1;
        for (char c : kg.node_name(i))
            if (c == ' ') ++n;
        mx = std::max(mx, n);
    }
    return mx;
}

}  // namespace

std::vector<int32_t> link_entities(const std::vector<std::string>& tokens,
                                   const KnowledgeGraph& kg) {
    auto idx = name_index(kg);
    const int max_len = max_name_tokens(kg);
    std::vector<int32_t> out;
    size_t i = 0;
    while (i < tokens.size()) {
        int matched = 0;
        for (int len = std::min<int>(max_len, int(tokens.size() - i)); len >= 1; --len) {
            std::string key = tokens[i];
            for (int k = 1; k < len; ++k) key += ' ' + tokens[i + size_t(k)];
            auto it = idx.find(key);
            if (it != idx.end()) {
                out.push_back(it->second);
                matched = len;
                break;
            }
        }
        i += matched ? size_t(matched) : 1;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<int32_t> expand_bridges(const std::vector<int32_t>& linked, const KnowledgeGraph& kg,
                                    bool directed) {
    std::unordered_set<int32_t> linked_set(linked.begin(), linked.end());
    std::unordered_set<int32_t> result(linked.begin(), linked.end());
    for (int32_t u : linked) {
        for (const auto& [b, rel_ub, dir_ub] : kg.neighbors(u)) {
            if (directed && dir_ub != Direction::out) continue;
            // b qualifies if it also touches a linked node other than u
            for (const auto& [v, rel_bv, dir_bv] : kg.neighbors(b)) {
                if (directed && dir_bv != Direction::out) continue;
                if (v != u && linked_set.count(v)) {
                    result.insert(b);
                    break;
                }
            }
        }
    }
    std::vector<int32_t> out(result.begin(), result.end());
    std::sort(out.begin(), out.end());
    return out;
}

RelevanceScorer::RelevanceScorer(const std::vector<std::string>& text_tokens,
                                 const std::vector<int32_t>& linked,
                                 const std::vector<int32_t>& retrieved,
                                 const KnowledgeGraph& kg, const RetrievalConfig& cfg)
    : kg_(kg), cfg_(cfg), text_tokens_(text_tokens.begin(), text_tokens.end()) {
    // multi-source BFS from the linked set, undirected
    std::unordered_map<int32_t, int> dist;
    std::deque<int32_t> frontier;
    for (int32_t n : linked) {
        dist[n] = 0;
        frontier.push_back(n);
    }
    while (!frontier.empty()) {
        int32_t n = frontier.front();
        frontier.pop_front();
        for (const auto& e : kg_.neighbors(n)) {
            if (!dist.count(e.neighbor)) {
                dist[e.neighbor] = dist[n] + 1;
                frontier.push_back(e.neighbor);
            }
        }
    }
    for (int32_t n : retrieved) {
        auto it = dist.find(n);
        distance_[n] = it == dist.end() ? -1 : it->second;  // -1: unreachable
    }
}

double RelevanceScorer::score(int32_t node) const {
    auto it = distance_.find(node);
    require(it != distance_.end(), "score_relevance: node ", node,
            " is not in the retrieved set");
    std::vector<std::string> name_tokens = tokenize(kg_.node_name(node));
    std::unordered_set<std::string> name_set(name_tokens.begin(), name_tokens.end());
    size_t inter = 0;
    for (const auto& t : name_set)
        if (text_tokens_.count(t)) ++inter;
    size_t uni = name_set.size() + text_tokens_.size() - inter;
    double jaccard = uni == 0 ? 0.0 : double(inter) / double(uni);
    double proximity = it->second < 0 ? 0.0 : 1.0 / (1.0 + double(it->second));
    return cfg_.w_overlap * jaccard + cfg_.w_proximity * proximity;
}

std::vector<int32_t> prune_topk(const std::vector<int32_t>& retrieved,
                                const std::vector<double>& scores,
                                const std::vector<int32_t>& linked, int k) {
    require(k >= 1, "prune_topk: k must be >= 1, got ", k);
    require(retrieved.size() == scores.size(), "prune_topk: ", retrieved.size(), " nodes but ",
            scores.size(), " scores");
    std::unordered_set<int32_t> linked_set(linked.begin(), linked.end());
    std::vector<size_t> order(retrieved.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        bool la = linked_set.count(retrieved[a]) > 0, lb = linked_set.count(retrieved[b]) > 0;
        if (la != lb) return la;
        return retrieved[a] < retrieved[b];
    });
    size_t keep = std::min(size_t(k), order.size());
    std::vector<int32_t> out;
    out.reserve(keep);
    for (size_t i = 0; i < keep; ++i) out.push_back(retrieved[order[i]]);
    std::sort(out.begin(), out.end());
    return out;
}

Subgraph induce_subgraph(const std::vector<int32_t>& v_sub,
                         const std::vector<LinkedEntity>& linked, const KnowledgeGraph& kg,
                         ConnectivityMode mode) {
    Subgraph sg;
    sg.n_relations = kg.num_relations();
    sg.nodes.push_back({-1, NodeType::interaction});

    if (v_sub.empty()) {
        // dummy fallback: one zero-embedding node wired to the interaction node
        sg.nodes.push_back({-1, NodeType::dummy});
        sg.edges.push_back({0, sg.interaction_rel(), 1});
        return sg;
    }

    std::map<int32_t, NodeType> link_type;
    for (const auto& le : linked) {
        auto it = link_type.find(le.node);
        // precedence: answer > question > context
        if (it == link_type.end() || int(le.type) > int(it->second)) link_type[le.node] = le.type;
    }

    std::vector<int32_t> sorted = v_sub;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    std::unordered_map<int32_t, int32_t> local;
    for (int32_t gid : sorted) {
        auto it = link_type.find(gid);
        NodeType t = it == link_type.end() ? NodeType::bridge : it->second;
        local[gid] = sg.num_nodes();
        sg.nodes.push_back({gid, t});
    }

    for (int32_t li = 1; li < sg.num_nodes(); ++li) {
        int32_t gid = sg.nodes[size_t(li)].global;
        bool is_linked = link_type.count(gid) > 0;
        if (mode == ConnectivityMode::all_nodes || is_linked) {
            sg.edges.push_back({0, sg.interaction_rel(), li});
            if (is_linked) sg.linked.push_back(li);
        }
    }
    for (const auto& e : kg.edges()) {
        auto h = local.find(e.head), t = local.find(e.tail);
        if (h != local.end() && t != local.end())
            sg.edges.push_back({h->second, e.rel, t->second});
    }
    return sg;
}

namespace {

std::vector<LinkedEntity> link_all_segments(const std::string& context_text,
                                            const std::string& question_text,
                                            const std::string& answer_text,
                                            const KnowledgeGraph& kg) {
    std::vector<LinkedEntity> linked;
    for (int32_t n : link_entities(tokenize(context_text), kg))
        linked.push_back({n, NodeType::context});
    for (int32_t n : link_entities(tokenize(question_text), kg))
        linked.push_back({n, NodeType::question});
    for (int32_t n : link_entities(tokenize(answer_text), kg))
        linked.push_back({n, NodeType::answer});
    return linked;
}

std::vector<int32_t> linked_ids(const std::vector<LinkedEntity>& linked) {
    std::vector<int32_t> ids;
    for (const auto& le : linked) ids.push_back(le.node);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

}  // namespace

Subgraph retrieve_subgraph(const std::string& context_text, const std::string& question_text,
                           const std::string& answer_text, const KnowledgeGraph& kg,
                           const RetrievalConfig& cfg) {
    auto linked = link_all_segments(context_text, question_text, answer_text, kg);
    auto ids = linked_ids(linked);
    auto retrieved = expand_bridges(ids, kg, cfg.directed_bridges);

    std::string full_text = context_text + " " + question_text + " " + answer_text;
    RelevanceScorer scorer(tokenize(full_text), ids, retrieved, kg, cfg);
    std::vector<double> scores;
    scores.reserve(retrieved.size());
    for (int32_t n : retrieved) scores.push_back(scorer.score(n));

    auto v_sub = prune_topk(retrieved, scores, ids, cfg.top_k);
    return induce_subgraph(v_sub, linked, kg, cfg.connectivity);
}

Subgraph whole_kg_subgraph(const std::string& context_text, const std::string& question_text,
                           const std::string& answer_text, const KnowledgeGraph& kg,
                           ConnectivityMode mode) {
    auto linked = link_all_segments(context_text, question_text, answer_text, kg);
    std::vector<int32_t> all(static_cast<size_t>(kg.num_nodes()));
    for (int32_t i = 0; i < kg.num_nodes(); ++i) all[size_t(i)] = i;
    return induce_subgraph(all, linked, kg, mode);
}

std::string subgraph_to_json(const std::string& example_id, const Subgraph& sg) {
    json j;
    j["example_id"] = example_id;
    json nodes = json::array();
    for (size_t i = 0; i < sg.nodes.size(); ++i)
        nodes.push_back({{"local", i},
                         {"global", sg.nodes[i].global},
                         {"type", node_type_name(sg.nodes[i].type)}});
    j["nodes"] = nodes;
    json edges = json::array();
    for (const auto& e : sg.edges) edges.push_back({e.head, e.rel, e.tail});
    j["edges"] = edges;
    j["linked"] = sg.linked;
    j["n_relations"] = sg.n_relations;
    return j.dump();
}

Subgraph subgraph_from_json(const std::string& line, std::string* example_id_out) {
    json j = json::parse(line);
    if (example_id_out) *example_id_out = j.at("example_id").get<std::string>();
    Subgraph sg;
    sg.n_relations = j.at("n_relations").get<int32_t>();
    for (const auto& n : j.at("nodes"))
        sg.nodes.push_back(
            {n.at("global").get<int32_t>(), node_type_from_name(n.at("type").get<std::string>())});
    for (const auto& e : j.at("edges"))
        sg.edges.push_back({e.at(0).get<int32_t>(), e.at(1).get<int32_t>(), e.at(2).get<int32_t>()});
    sg.linked = j.at("linked").get<std::vector<int32_t>>();
    require(!sg.nodes.empty() && sg.nodes[0].type == NodeType::interaction,
            "subgraph cache: first node must be the interaction node");
    return sg;
}

}  // namespace kgqa
