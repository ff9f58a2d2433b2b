#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kgqa/kg.hpp"

namespace kgqa {

struct KgPayload {
    std::vector<std::pair<int32_t, std::string>> nodes;  // (id, name), ids dense from 0
    std::vector<Edge> edges;
};

struct QAExample {
    std::string id;
    std::string context;
    std::string question;
    std::vector<std::string> candidates;
    int label = 0;
    std::optional<KgPayload> kg;  // absent: retrieve from the global KG
};

using Dataset = std::vector<QAExample>;

// The closed entity vocabulary (200 two-syllable names, fixed independent of
// any seed).
const std::vector<std::string>& synthetic_entity_names();

// Synthetic MCQA where answering provably needs both modalities.
//
// Each example samples question entities Q1,Q2, candidates C_i, mediator
// entities M_i and target entities X_i, all distinct. The per-example KG holds
// edges C_i->M_i for every candidate, and X->Q1, X->Q2 for the "active"
// targets. The context text states the pairings "m x" for every i in random
// order; the question asks which candidate reaches Q1 and Q2.
//
// A candidate is correct when its mediator's *stated* partner is one of the
// Q-adjacent targets (flipped when the question contains "not"). Which target
// is Q-adjacent is visible only in the graph; which mediator pairs with which
// target is visible only in the text; which candidate owns which mediator is
// again visible only in the graph. Text alone and graph alone are therefore
// exactly uninformative about the label position.
//
// With probability negation_rate the question is negated: all targets except
// the correct candidate's are made Q-adjacent and the unique unconnected
// candidate is correct. With probability hedge_rate a hedging word is
// inserted; hedges never change the label.
Dataset gen_synthetic_mcqa(uint64_t seed, int n_examples, int k_way, double negation_rate,
                           double hedge_rate, int threads = 1);

// Deterministic rule-based solver over (question entities, context pairings,
// per-example KG, negation flag); scores 100% on generated data and acts as
// the dataset's correctness oracle.
int solve_synthetic(const QAExample& ex);

// JSON Lines persistence. Round-trips byte-identically under canonical
// re-serialization.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);
std::string example_to_json(const QAExample& ex);
QAExample example_from_json(const std::string& line, int line_no);

// Entity registry: stable global ids for node-embedding lookups. Built either
// from the union of per-example KG node names (sorted) or from a global KG.
struct EntityRegistry {
    std::vector<std::string> names;
    int32_t n_relations = 0;

    int32_t id_of(const std::string& name) const;
    int32_t size() const { return int32_t(names.size()); }

    void save(const std::string& path) const;
    static EntityRegistry load(const std::string& path);
};

EntityRegistry build_registry(const Dataset& ds);
EntityRegistry build_registry(const KnowledgeGraph& kg);

// Expands a per-example payload into a standalone KnowledgeGraph.
KnowledgeGraph payload_to_kg(const KgPayload& payload);

}  // namespace kgqa
