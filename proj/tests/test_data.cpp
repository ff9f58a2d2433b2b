#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "kgqa/data.hpp"
#include "kgqa/vocab.hpp"
#include "test_util.hpp"

using namespace kgqa;

namespace {

// Exhaustive path oracle: a candidate has the property when some context-
// stated partner x of its graph mediator has 2-hop KG paths candidate-m-?
// ... spelled out: candidate -> mediator edge exists, context pairs mediator
// with x, and x has edges to both question entities (any direction).
bool has_property(const QAExample& ex, size_t cand) {
    const auto& kg = *ex.kg;
    std::map<std::string, int32_t> node_of;
    for (auto& [id, name] : kg.nodes) node_of[name] = id;
    auto undirected = [&](int32_t a, int32_t b) {
        for (auto& e : kg.edges)
            if ((e.head == a && e.tail == b) || (e.head == b && e.tail == a)) return true;
        return false;
    };
    auto qt = tokenize(ex.question);
    int32_t q1 = node_of.at(qt[qt.size() - 3]), q2 = node_of.at(qt[qt.size() - 1]);
    int32_t c = node_of.at(ex.candidates[cand]);
    auto ct = tokenize(ex.context);
    for (size_t i = 0; i + 3 <= ct.size(); i += 3) {
        int32_t m = node_of.at(ct[i]), x = node_of.at(ct[i + 2]);
        if (undirected(c, m) && undirected(x, q1) && undirected(x, q2)) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("closed entity vocabulary: 200 distinct single-token names") {
    const auto& names = synthetic_entity_names();
    CHECK(names.size() == 200);
    std::set<std::string> uniq(names.begin(), names.end());
    CHECK(uniq.size() == 200);
    for (const auto& n : names) {
        CHECK(tokenize(n).size() == 1);
        CHECK(n == normalize_name(n));
    }
}

TEST_CASE("positive examples: exactly one candidate has the 2-hop property") {
    auto ds = gen_synthetic_mcqa(11, 40, 5, 0.0, 0.0);
    for (const auto& ex : ds) {
        int holders = 0, holder = -1;
        for (size_t c = 0; c < ex.candidates.size(); ++c)
            if (has_property(ex, c)) {
                ++holders;
                holder = int(c);
            }
        CHECK(holders == 1);
        CHECK(holder == ex.label);
    }
}

TEST_CASE("negated examples: the unique candidate without the property is correct") {
    auto ds = gen_synthetic_mcqa(12, 40, 5, 1.0, 0.0);
    for (const auto& ex : ds) {
        CHECK(ex.question.find("not") != std::string::npos);
        int non_holders = 0, non_holder = -1;
        for (size_t c = 0; c < ex.candidates.size(); ++c)
            if (!has_property(ex, c)) {
                ++non_holders;
                non_holder = int(c);
            }
        CHECK(non_holders == 1);
        CHECK(non_holder == ex.label);
    }
}

TEST_CASE("rule-based solver scores 100 percent") {
    auto ds = gen_synthetic_mcqa(13, 200, 5, 0.4, 0.3);
    for (const auto& ex : ds) CHECK(solve_synthetic(ex) == ex.label);
}

TEST_CASE("hedged questions keep their label and contain a hedge term") {
    auto ds = gen_synthetic_mcqa(14, 30, 4, 0.0, 1.0);
    for (const auto& ex : ds) {
        bool hedged = ex.question.find("maybe") != std::string::npos ||
                      ex.question.find("sometimes") != std::string::npos;
        CHECK(hedged);
        CHECK(solve_synthetic(ex) == ex.label);
    }
}

TEST_CASE("generator purity: same arguments give byte-identical datasets") {
    auto a = gen_synthetic_mcqa(21, 50, 5, 0.3, 0.2);
    auto b = gen_synthetic_mcqa(21, 50, 5, 0.3, 0.2);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i)
        CHECK(example_to_json(a[i]) == example_to_json(b[i]));
}

TEST_CASE("generation is thread-count invariant") {
    auto a = gen_synthetic_mcqa(22, 64, 5, 0.5, 0.1, 1);
    auto b = gen_synthetic_mcqa(22, 64, 5, 0.5, 0.1, 4);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i)
        CHECK(example_to_json(a[i]) == example_to_json(b[i]));
}

TEST_CASE("label distribution conditional on question template is uniform (chi-square)") {
    const int n = 10000, k = 5;
    auto ds = gen_synthetic_mcqa(23, n, k, 0.5, 0.5);
    // group by the text features shared across examples: the question with
    // entity mentions stripped (pure template)
    std::map<std::string, std::vector<int>> counts;
    for (const auto& ex : ds) {
        std::string tmpl;
        for (const auto& t : tokenize(ex.question)) {
            bool entity = std::binary_search(synthetic_entity_names().begin(),
                                             synthetic_entity_names().end(), t);
            tmpl += entity ? "<e>" : t;
            tmpl += ' ';
        }
        auto& c = counts[tmpl];
        if (c.empty()) c.assign(k, 0);
        c[size_t(ex.label)]++;
    }
    CHECK(counts.size() >= 2);  // at least plain and negated templates
    double stat = 0.0;
    double dof = 0.0;
    for (auto& [tmpl, c] : counts) {
        double total = 0;
        for (int x : c) total += x;
        double expect = total / k;
        for (int x : c) stat += (x - expect) * (x - expect) / expect;
        dof += k - 1;
    }
    double p = testutil::chi2_pvalue(stat, dof);
    CHECK(p >= 0.01);
}

TEST_CASE("gen_synthetic_mcqa validates parameters") {
    CHECK_THROWS_AS(gen_synthetic_mcqa(1, 10, 3, 0.0, 0.0), Error);
    CHECK_THROWS_AS(gen_synthetic_mcqa(1, 10, 6, 0.0, 0.0), Error);
    CHECK_THROWS_AS(gen_synthetic_mcqa(1, 10, 5, 1.5, 0.0), Error);
    CHECK_THROWS_AS(gen_synthetic_mcqa(1, 10, 5, 0.0, -0.1), Error);
}

TEST_CASE("dataset JSONL round-trip is byte-identical") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "kgqa_data";
    fs::create_directories(dir);
    auto p1 = (dir / "d1.jsonl").string(), p2 = (dir / "d2.jsonl").string();

    auto ds = gen_synthetic_mcqa(31, 100, 5, 0.25, 0.25);
    save_dataset(ds, p1);
    auto back = load_dataset(p1);
    save_dataset(back, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    CHECK(!s1.empty());
}

TEST_CASE("dataset loading rejects malformed input with line numbers") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "kgqa_data";
    fs::create_directories(dir);

    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream f(dir / name, std::ios::trunc);
        f << body;
        return (dir / name).string();
    };

    CHECK(load_dataset(write("empty.jsonl", "")).empty());

    auto bad = write("bad.jsonl", "{\"id\":\"a\"}\nnot json\n");
    try {
        load_dataset(bad);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }

    auto ds = gen_synthetic_mcqa(32, 1, 5, 0.0, 0.0);
    auto good_line = example_to_json(ds[0]);
    std::string tweaked = good_line;
    auto pos = tweaked.find("\"label\":");
    tweaked.replace(pos, 9, "\"label\":5");
    auto badlabel = write("badlabel.jsonl", tweaked + "\n");
    try {
        load_dataset(badlabel);
        FAIL("expected error");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("label") != std::string::npos);
        CHECK(msg.find("line 1") != std::string::npos);
    }
}

TEST_CASE("registry assigns stable sorted ids and survives persistence") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "kgqa_data";
    fs::create_directories(dir);

    auto ds = gen_synthetic_mcqa(41, 20, 5, 0.2, 0.2);
    auto reg = build_registry(ds);
    CHECK(reg.n_relations == 1);
    CHECK(std::is_sorted(reg.names.begin(), reg.names.end()));
    auto path = (dir / "registry.json").string();
    reg.save(path);
    auto back = EntityRegistry::load(path);
    CHECK(back.names == reg.names);
    CHECK(back.n_relations == reg.n_relations);
    CHECK(reg.id_of(reg.names[3]) == 3);
    CHECK_THROWS_AS(reg.id_of("definitely-not-an-entity"), Error);
}

TEST_CASE("payload_to_kg exposes per-example graphs through the KG interface") {
    auto ds = gen_synthetic_mcqa(51, 3, 5, 0.0, 0.0);
    REQUIRE(ds[0].kg.has_value());
    auto kg = payload_to_kg(*ds[0].kg);
    CHECK(kg.num_nodes() == int32_t(ds[0].kg->nodes.size()));
    CHECK(kg.num_relations() == 1);
    CHECK(kg.edges().size() == ds[0].kg->edges.size());
}
