#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgqa/common.hpp"

namespace kgqa {

struct Edge {
    int32_t head;
    int32_t rel;
    int32_t tail;

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

enum class Direction : uint8_t { out, in };

struct NeighborEntry {
    int32_t neighbor;
    int32_t rel;
    Direction dir;

    friend bool operator==(const NeighborEntry&, const NeighborEntry&) = default;
};

// Global knowledge graph with typed directed edges. Immutable after load;
// node surface names are normalized (lowercase, underscores to spaces,
// single-spaced).
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    KnowledgeGraph(std::vector<std::string> node_names, std::vector<std::string> relation_names,
                   std::vector<Edge> edges);

    int32_t num_nodes() const { return int32_t(node_names_.size()); }
    int32_t num_relations() const { return int32_t(relation_names_.size()); }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::string& node_name(int32_t id) const;
    const std::string& relation_name(int32_t id) const;
    const std::vector<std::string>& node_names() const { return node_names_; }

    // Stable order: by neighbor id, then relation id, then direction.
    const std::vector<NeighborEntry>& neighbors(int32_t node) const;

private:
    std::vector<std::string> node_names_;
    std::vector<std::string> relation_names_;
    std::vector<Edge> edges_;
    std::vector<std::vector<NeighborEntry>> adjacency_;  // the EdgeIndex
};

// Lowercase, underscores to spaces, runs of whitespace collapsed, trimmed.
std::string normalize_name(const std::string& raw);

// TSV formats (UTF-8, LF, no header):
//   nodes.tsv      <node_id>\t<name>
//   relations.tsv  <rel_id>\t<name>
//   edges.tsv      <head_id>\t<rel_id>\t<tail_id>
// Ids must be dense from 0. Dangling ids and duplicate (h,r,t) triples are
// errors naming the offending line.
KnowledgeGraph load_kg(const std::string& node_file, const std::string& relation_file,
                       const std::string& edge_file);

void save_kg(const KnowledgeGraph& kg, const std::string& node_file,
             const std::string& relation_file, const std::string& edge_file);

// Deterministic toy graph: a random spanning tree (guaranteeing connectivity)
// plus extra ordered pairs sampled with probability edge_density. No
// self-loops; one edge per ordered pair.
KnowledgeGraph gen_toy_kg(uint64_t seed, int n_nodes, int n_relations, double edge_density);

}  // namespace kgqa
