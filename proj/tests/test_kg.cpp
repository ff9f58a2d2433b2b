#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "kgqa/kg.hpp"
#include "kgqa/rng.hpp"

using namespace kgqa;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    auto d = fs::temp_directory_path() / "kgqa_test_kg";
    fs::create_directories(d);
    return d;
}

void write(const fs::path& p, const std::string& body) {
    std::ofstream f(p, std::ios::trunc);
    f << body;
}

}  // namespace

TEST_CASE("load_kg reads a small fixture") {
    auto d = tmp_dir();
    write(d / "nodes.tsv", "0\tred fox\n1\tRuns\n2\tDen_Site\n");
    write(d / "relations.tsv", "0\tat\n1\tdoes\n");
    write(d / "edges.tsv", "0\t1\t1\n0\t0\t2\n");
    auto kg = load_kg((d / "nodes.tsv").string(), (d / "relations.tsv").string(),
                      (d / "edges.tsv").string());
    CHECK(kg.num_nodes() == 3);
    CHECK(kg.num_relations() == 2);
    CHECK(kg.edges().size() == 2);
    // names are normalized
    CHECK(kg.node_name(1) == "runs");
    CHECK(kg.node_name(2) == "den site");
}

TEST_CASE("load_kg rejects dangling ids and duplicate triples with line numbers") {
    auto d = tmp_dir();
    write(d / "n.tsv", "0\ta\n1\tb\n");
    write(d / "r.tsv", "0\trel\n");
    write(d / "e_dangling.tsv", "0\t0\t1\n0\t0\t7\n");
    try {
        load_kg((d / "n.tsv").string(), (d / "r.tsv").string(), (d / "e_dangling.tsv").string());
        FAIL("expected error");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find(":2") != std::string::npos);
        CHECK(msg.find("7") != std::string::npos);
    }
    write(d / "e_dup.tsv", "0\t0\t1\n1\t0\t0\n0\t0\t1\n");
    try {
        load_kg((d / "n.tsv").string(), (d / "r.tsv").string(), (d / "e_dup.tsv").string());
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
}

TEST_CASE("generated toy KG round-trips through save and load bit-identically") {
    auto d = tmp_dir();
    auto kg = gen_toy_kg(99, 12, 3, 0.25);
    auto nf = (d / "rt_nodes.tsv").string(), rf = (d / "rt_rels.tsv").string(),
         ef = (d / "rt_edges.tsv").string();
    save_kg(kg, nf, rf, ef);
    auto kg2 = load_kg(nf, rf, ef);
    save_kg(kg2, nf + ".2", rf + ".2", ef + ".2");
    for (auto [a, b] : {std::pair{nf, nf + ".2"}, {rf, rf + ".2"}, {ef, ef + ".2"}}) {
        std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(fa)), {});
        std::string sb((std::istreambuf_iterator<char>(fb)), {});
        CHECK(sa == sb);
        CHECK(!sa.empty());
    }
}

TEST_CASE("gen_toy_kg is a pure function of its arguments") {
    auto a = gen_toy_kg(1, 10, 3, 0.2);
    auto b = gen_toy_kg(1, 10, 3, 0.2);
    CHECK(a.edges() == b.edges());
    auto c = gen_toy_kg(2, 10, 3, 0.2);
    CHECK(a.edges() != c.edges());
}

TEST_CASE("gen_toy_kg with density one yields the complete digraph minus self-loops") {
    auto kg = gen_toy_kg(5, 4, 1, 1.0);
    CHECK(kg.edges().size() == 12);
    for (const auto& e : kg.edges()) CHECK(e.head != e.tail);
}

TEST_CASE("gen_toy_kg parameter validation") {
    CHECK_THROWS_AS(gen_toy_kg(1, 1, 1, 0.5), Error);
    CHECK_THROWS_AS(gen_toy_kg(1, 5, 0, 0.5), Error);
    CHECK_THROWS_AS(gen_toy_kg(1, 5, 1, 0.0), Error);
    CHECK_THROWS_AS(gen_toy_kg(1, 5, 1, 1.5), Error);
}

TEST_CASE("toy KG always contains a spanning structure: everything reachable (BFS oracle)") {
    for (uint64_t seed : {1ull, 2ull, 3ull, 17ull}) {
        auto kg = gen_toy_kg(seed, 15, 2, 0.01);
        // undirected BFS from node 0 over the raw edge list
        std::vector<std::vector<int>> adj(15);
        for (const auto& e : kg.edges()) {
            adj[size_t(e.head)].push_back(e.tail);
            adj[size_t(e.tail)].push_back(e.head);
        }
        std::vector<bool> seen(15, false);
        std::vector<int> frontier{0};
        seen[0] = true;
        while (!frontier.empty()) {
            int n = frontier.back();
            frontier.pop_back();
            for (int m : adj[size_t(n)])
                if (!seen[size_t(m)]) {
                    seen[size_t(m)] = true;
                    frontier.push_back(m);
                }
        }
        for (bool s : seen) CHECK(s);
    }
}

TEST_CASE("neighbors: isolated node, directions, stable order") {
    // 3 nodes, edges 0->1 and 2->0; node 0 has one out and one in edge
    KnowledgeGraph kg({"a", "b", "c"}, {"r"}, {{0, 0, 1}, {2, 0, 0}});
    auto& n0 = kg.neighbors(0);
    REQUIRE(n0.size() == 2);
    CHECK(n0[0].neighbor == 1);
    CHECK(n0[0].dir == Direction::out);
    CHECK(n0[1].neighbor == 2);
    CHECK(n0[1].dir == Direction::in);
    CHECK_THROWS_AS(kg.neighbors(5), Error);

    KnowledgeGraph iso({"a", "b"}, {"r"}, {});
    CHECK(iso.neighbors(0).empty());
}

TEST_CASE("union of neighbors reproduces the edge list exactly (set oracle)") {
    auto kg = gen_toy_kg(33, 20, 4, 0.15);
    std::multiset<std::tuple<int, int, int>> from_edges, from_adj_out, from_adj_in;
    for (const auto& e : kg.edges()) from_edges.insert({e.head, e.rel, e.tail});
    size_t out_total = 0, in_total = 0;
    for (int32_t v = 0; v < kg.num_nodes(); ++v)
        for (const auto& ne : kg.neighbors(v)) {
            if (ne.dir == Direction::out) {
                from_adj_out.insert({v, ne.rel, ne.neighbor});
                ++out_total;
            } else {
                from_adj_in.insert({ne.neighbor, ne.rel, v});
                ++in_total;
            }
        }
    CHECK(from_adj_out == from_edges);
    CHECK(from_adj_in == from_edges);
    CHECK(out_total == kg.edges().size());
    CHECK(in_total == kg.edges().size());
}
