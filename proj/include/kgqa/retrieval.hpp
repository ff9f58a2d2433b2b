#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgqa/kg.hpp"

namespace kgqa {

// Node types: how each subgraph node entered the example. `dummy` is the
// zero-initialized placeholder used when retrieval finds nothing.
enum class NodeType : uint8_t { context = 0, question, answer, bridge, dummy, interaction };
inline constexpr int kNumNodeTypes = 6;

const char* node_type_name(NodeType t);
NodeType node_type_from_name(const std::string& s);

enum class ConnectivityMode : uint8_t { linked_only, all_nodes };

struct SubgraphNode {
    int32_t global;  // global KG id; -1 for interaction and dummy nodes
    NodeType type;
};

// Per-example retrieved graph. Local id 0 is always the interaction node.
// Edges keep the KG's relation ids and direction; interaction edges use the
// reserved relation id == n_relations and run interaction -> node.
struct Subgraph {
    std::vector<SubgraphNode> nodes;
    std::vector<Edge> edges;        // local ids
    std::vector<int32_t> linked;    // local ids of V_linked ∩ V_sub, ascending
    int32_t n_relations = 0;        // real relation count of the source KG

    int32_t interaction_rel() const { return n_relations; }
    int32_t num_nodes() const { return int32_t(nodes.size()); }
};

struct RetrievalConfig {
    int top_k = 200;
    ConnectivityMode connectivity = ConnectivityMode::linked_only;
    // 2-hop bridge paths ignore edge direction by default; the flag switches
    // to head-to-tail paths only.
    bool directed_bridges = false;
    double w_overlap = 1.0;    // token-overlap Jaccard weight
    double w_proximity = 1.0;  // 1/(1+hops to nearest linked node) weight
};

// Linked entities per text segment, with the segment that matched them.
struct LinkedEntity {
    int32_t node;
    NodeType type;  // context, question or answer
};

// Exact n-gram entity linking over normalized names: greedy left-to-right,
// longest match wins, matches never overlap.
std::vector<int32_t> link_entities(const std::vector<std::string>& tokens,
                                   const KnowledgeGraph& kg);

// V_linked ∪ {b : some pair u != v of linked nodes has edges u-b and b-v}.
std::vector<int32_t> expand_bridges(const std::vector<int32_t>& linked, const KnowledgeGraph& kg,
                                    bool directed);

// Context for relevance scoring: text tokens plus hop distances from the
// linked set, restricted to the retrieved nodes.
class RelevanceScorer {
public:
    RelevanceScorer(const std::vector<std::string>& text_tokens,
                    const std::vector<int32_t>& linked, const std::vector<int32_t>& retrieved,
                    const KnowledgeGraph& kg, const RetrievalConfig& cfg);

    // score = w1 * jaccard(name tokens, text tokens) + w2 / (1 + hop distance)
    double score(int32_t node) const;

private:
    const KnowledgeGraph& kg_;
    RetrievalConfig cfg_;
    std::unordered_set<std::string> text_tokens_;
    std::unordered_map<int32_t, int> distance_;  // only retrieved nodes
};

// Highest K scores; ties resolved linked-before-bridge, then ascending id.
std::vector<int32_t> prune_topk(const std::vector<int32_t>& retrieved,
                                const std::vector<double>& scores,
                                const std::vector<int32_t>& linked, int k);

// Assembles the Subgraph: interaction node at local 0, retained nodes in
// ascending global id order, every KG edge among them, interaction edges per
// the connectivity mode. Empty input produces the dummy fallback graph.
Subgraph induce_subgraph(const std::vector<int32_t>& v_sub,
                         const std::vector<LinkedEntity>& linked, const KnowledgeGraph& kg,
                         ConnectivityMode mode);

// Full pipeline: link each segment, merge with answer > question > context
// precedence, expand bridges, score, prune, induce.
Subgraph retrieve_subgraph(const std::string& context_text, const std::string& question_text,
                           const std::string& answer_text, const KnowledgeGraph& kg,
                           const RetrievalConfig& cfg);

// Bypass mode: every KG node enters the subgraph (no bridge expansion or
// pruning); linking still assigns types and interaction edges.
Subgraph whole_kg_subgraph(const std::string& context_text, const std::string& question_text,
                           const std::string& answer_text, const KnowledgeGraph& kg,
                           ConnectivityMode mode);

// JSON Lines cache, one record per example:
// {"example_id":..., "nodes":[{"local":..,"global":..,"type":".."}],
//  "edges":[[h,r,t],...], "linked":[...]}
std::string subgraph_to_json(const std::string& example_id, const Subgraph& sg);
Subgraph subgraph_from_json(const std::string& line, std::string* example_id_out);

}  // namespace kgqa
