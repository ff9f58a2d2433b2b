#include "kgqa/kg.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "kgqa/rng.hpp"

namespace kgqa {

std::string normalize_name(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (char c : raw) {
        if (c == '_' || c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(char(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

KnowledgeGraph::KnowledgeGraph(std::vector<std::string> node_names,
                               std::vector<std::string> relation_names, std::vector<Edge> edges)
    : node_names_(std::move(node_names)),
      relation_names_(std::move(relation_names)),
      edges_(std::move(edges)) {
    for (auto& n : node_names_) {
        n = normalize_name(n);
        require(!n.empty(), "kg: empty node name after normalization");
    }
    std::set<Edge> seen;
    for (const auto& e : edges_) {
        require(e.head >= 0 && e.head < num_nodes(), "kg: edge head ", e.head, " out of range");
        require(e.tail >= 0 && e.tail < num_nodes(), "kg: edge tail ", e.tail, " out of range");
        require(e.rel >= 0 && e.rel < num_relations(), "kg: edge relation ", e.rel,
                " out of range");
        require(seen.insert(e).second, "kg: duplicate triple (", e.head, ",", e.rel, ",", e.tail,
                ")");
    }
    adjacency_.resize(size_t(num_nodes()));
    for (const auto& e : edges_) {
        adjacency_[size_t(e.head)].push_back({e.tail, e.rel, Direction::out});
        adjacency_[size_t(e.tail)].push_back({e.head, e.rel, Direction::in});
    }
    for (auto& list : adjacency_)
        std::sort(list.begin(), list.end(), [](const NeighborEntry& a, const NeighborEntry& b) {
            if (a.neighbor != b.neighbor) return a.neighbor < b.neighbor;
            if (a.rel != b.rel) return a.rel < b.rel;
            return a.dir < b.dir;
        });
}

const std::string& KnowledgeGraph::node_name(int32_t id) const {
    require(id >= 0 && id < num_nodes(), "kg: unknown node ", id);
    return node_names_[size_t(id)];
}

const std::string& KnowledgeGraph::relation_name(int32_t id) const {
    require(id >= 0 && id < num_relations(), "kg: unknown relation ", id);
    return relation_names_[size_t(id)];
}

const std::vector<NeighborEntry>& KnowledgeGraph::neighbors(int32_t node) const {
    require(node >= 0 && node < num_nodes(), "kg: unknown node ", node);
    return adjacency_[size_t(node)];
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    for (;;) {
        size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

int32_t parse_id(const std::string& s, const std::string& file, int line_no) {
    try {
        size_t used = 0;
        long v = std::stol(s, &used);
        require(used == s.size(), "");
        return int32_t(v);
    } catch (...) {
        fail(file, ":", line_no, ": expected integer id, got '", s, "'");
    }
}

// Reads "<id>\t<name>" lines; ids must arrive dense from 0 in order-independent
// fashion (we sort by id and verify density).
std::vector<std::string> load_named(const std::string& file, const char* what) {
    std::ifstream f(file);
    require(f.good(), "kg: cannot open ", file);
    std::vector<std::pair<int32_t, std::string>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        require(cols.size() == 2, file, ":", line_no, ": expected 2 tab-separated fields, got ",
                cols.size());
        rows.emplace_back(parse_id(cols[0], file, line_no), cols[1]);
    }
    std::sort(rows.begin(), rows.end());
    std::vector<std::string> names;
    names.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].first == int32_t(i), "kg: ", what, " ids in ", file,
                " are not dense from 0 (saw ", rows[i].first, " at rank ", i, ")");
        names.push_back(rows[i].second);
    }
    return names;
}

}  // namespace

KnowledgeGraph load_kg(const std::string& node_file, const std::string& relation_file,
                       const std::string& edge_file) {
    auto nodes = load_named(node_file, "node");
    auto relations = load_named(relation_file, "relation");

    std::ifstream f(edge_file);
    require(f.good(), "kg: cannot open ", edge_file);
    std::vector<Edge> edges;
    std::set<Edge> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        require(cols.size() == 3, edge_file, ":", line_no,
                ": expected 3 tab-separated fields, got ", cols.size());
        Edge e{parse_id(cols[0], edge_file, line_no), parse_id(cols[1], edge_file, line_no),
               parse_id(cols[2], edge_file, line_no)};
        require(e.head >= 0 && e.head < int32_t(nodes.size()), edge_file, ":", line_no,
                ": head id ", e.head, " does not resolve");
        require(e.tail >= 0 && e.tail < int32_t(nodes.size()), edge_file, ":", line_no,
                ": tail id ", e.tail, " does not resolve");
        require(e.rel >= 0 && e.rel < int32_t(relations.size()), edge_file, ":", line_no,
                ": relation id ", e.rel, " does not resolve");
        require(seen.insert(e).second, edge_file, ":", line_no, ": duplicate triple");
        edges.push_back(e);
    }
    return KnowledgeGraph(std::move(nodes), std::move(relations), std::move(edges));
}

void save_kg(const KnowledgeGraph& kg, const std::string& node_file,
             const std::string& relation_file, const std::string& edge_file) {
    {
        std::ofstream f(node_file, std::ios::trunc);
        require(f.good(), "kg: cannot write ", node_file);
        for (int32_t i = 0; i < kg.num_nodes(); ++i) f << i << '\t' << kg.node_name(i) << '\n';
    }
    {
        std::ofstream f(relation_file, std::ios::trunc);
        require(f.good(), "kg: cannot write ", relation_file);
        for (int32_t i = 0; i < kg.num_relations(); ++i)
            f << i << '\t' << kg.relation_name(i) << '\n';
    }
    {
        std::ofstream f(edge_file, std::ios::trunc);
        require(f.good(), "kg: cannot write ", edge_file);
        for (const auto& e : kg.edges()) f << e.head << '\t' << e.rel << '\t' << e.tail << '\n';
    }
}

KnowledgeGraph gen_toy_kg(uint64_t seed, int n_nodes, int n_relations, double edge_density) {
    require(n_nodes >= 2, "gen_toy_kg: n_nodes must be >= 2, got ", n_nodes);
    require(n_relations >= 1, "gen_toy_kg: n_relations must be >= 1, got ", n_relations);
    require(edge_density > 0.0 && edge_density <= 1.0, "gen_toy_kg: edge_density ", edge_density,
            " outside (0,1]");

    Rng rng(mix64(seed, 0x746f796b67ull));
    std::vector<std::string> nodes, relations;
    for (int i = 0; i < n_nodes; ++i) nodes.push_back(cat("node", i));
    for (int i = 0; i < n_relations; ++i) relations.push_back(cat("rel", i));

    std::set<std::pair<int32_t, int32_t>> pairs;
    std::vector<Edge> edges;
    auto add_edge = [&](int32_t h, int32_t t) {
        if (h == t || !pairs.emplace(h, t).second) return;
        edges.push_back({h, int32_t(rng.below(uint64_t(n_relations))), t});
    };

    // Random spanning tree over a shuffled node order keeps every node
    // reachable, so 2-hop paths exist by construction.
    std::vector<int32_t> order(static_cast<size_t>(n_nodes));
    for (int i = 0; i < n_nodes; ++i) order[size_t(i)] = i;
    rng.shuffle(order);
    for (int i = 1; i < n_nodes; ++i) {
        int32_t parent = order[rng.below(uint64_t(i))];
        int32_t child = order[size_t(i)];
        if (rng.uniform() < 0.5)
            add_edge(parent, child);
        else
            add_edge(child, parent);
    }
    for (int32_t h = 0; h < n_nodes; ++h)
        for (int32_t t = 0; t < n_nodes; ++t) {
            if (h == t) continue;
            if (rng.uniform() < edge_density) add_edge(h, t);
        }

    std::sort(edges.begin(), edges.end());
    return KnowledgeGraph(std::move(nodes), std::move(relations), std::move(edges));
}

}  // namespace kgqa
