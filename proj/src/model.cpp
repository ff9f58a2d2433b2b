#include "kgqa/model.hpp"

#include <algorithm>
#include <map>

#include "kgqa/threadpool.hpp"

namespace kgqa {

MessagePlan build_message_plan(const Subgraph& sg, const std::vector<int32_t>& node_entity_ids,
                               int32_t table_relations) {
    require(int(node_entity_ids.size()) == sg.num_nodes(), "message plan: entity ids size ",
            node_entity_ids.size(), " vs nodes ", sg.num_nodes());
    MessagePlan plan;
    plan.n_nodes = sg.num_nodes();
    plan.n_relations = table_relations;
    plan.node_entity_ids = node_entity_ids;
    for (const auto& n : sg.nodes) plan.node_type_ids.push_back(int32_t(n.type));

    const int32_t int_row = MessagePlan::interaction_row(table_relations);
    const int32_t self_row = MessagePlan::self_loop_row(table_relations);

    struct Msg {
        int32_t src, dst, row;
    };
    std::vector<Msg> msgs;
    for (const auto& e : sg.edges) {
        if (e.rel == sg.interaction_rel()) {
            msgs.push_back({e.head, e.tail, int_row});
            msgs.push_back({e.tail, e.head, int_row});
        } else {
            require(e.rel >= 0 && e.rel < table_relations, "message plan: relation ", e.rel,
                    " outside table of ", table_relations);
            msgs.push_back({e.head, e.tail, e.rel});
            msgs.push_back({e.tail, e.head, e.rel + table_relations});
        }
    }
    for (int32_t j = 0; j < sg.num_nodes(); ++j) msgs.push_back({j, j, self_row});

    std::sort(msgs.begin(), msgs.end(), [](const Msg& a, const Msg& b) {
        if (a.dst != b.dst) return a.dst < b.dst;
        if (a.src != b.src) return a.src < b.src;
        return a.row < b.row;
    });

    std::map<std::tuple<int32_t, int32_t, int32_t>, int32_t> combo_index;
    for (const auto& m : msgs) {
        plan.src.push_back(m.src);
        plan.dst.push_back(m.dst);
        plan.rel_row.push_back(m.row);
        auto key = std::make_tuple(m.row, plan.node_type_ids[size_t(m.src)],
                                   plan.node_type_ids[size_t(m.dst)]);
        auto [it, fresh] = combo_index.emplace(key, int32_t(plan.combo_rel.size()));
        if (fresh) {
            plan.combo_rel.push_back(m.row);
            plan.combo_ts.push_back(plan.node_type_ids[size_t(m.src)]);
            plan.combo_td.push_back(plan.node_type_ids[size_t(m.dst)]);
        }
        plan.combo_of_edge.push_back(it->second);
    }
    return plan;
}

PreparedExample prepare_example(const QAExample& ex, const Vocabulary& vocab,
                                const EntityRegistry& registry, const KnowledgeGraph* global_kg,
                                const RunConfig& cfg, bool bypass_retrieval) {
    PreparedExample out;
    out.id = ex.id;
    out.label = ex.label;
    require(!ex.candidates.empty(), "prepare_example: no candidates in ", ex.id);

    KnowledgeGraph payload_kg;
    const KnowledgeGraph* kg = nullptr;
    if (ex.kg) {
        payload_kg = payload_to_kg(*ex.kg);
        kg = &payload_kg;
    } else {
        require(global_kg != nullptr, "prepare_example: example ", ex.id,
                " has no KG payload and no global KG was provided");
        kg = global_kg;
    }

    RetrievalConfig rcfg;
    rcfg.top_k = cfg.top_k_nodes;
    rcfg.connectivity = cfg.connectivity_mode == Connectivity::linked_only
                            ? ConnectivityMode::linked_only
                            : ConnectivityMode::all_nodes;
    rcfg.directed_bridges = cfg.directed_bridges;

    for (const auto& cand : ex.candidates) {
        Subgraph sg = bypass_retrieval
                          ? whole_kg_subgraph(ex.context, ex.question, cand, *kg,
                                              rcfg.connectivity)
                          : retrieve_subgraph(ex.context, ex.question, cand, *kg, rcfg);
        std::vector<int32_t> entity_ids;
        for (const auto& n : sg.nodes)
            entity_ids.push_back(n.global < 0 ? -1 : registry.id_of(kg->node_name(n.global)));
        PreparedCandidate pc;
        pc.enc = encode_input(ex.context, ex.question, cand, vocab, cfg.max_tokens);
        pc.plan = build_message_plan(sg, entity_ids, registry.n_relations);
        pc.text_hash = hash_str(cand);
        out.candidates.push_back(std::move(pc));
    }
    return out;
}

std::vector<PreparedExample> prepare_dataset(const Dataset& ds, const Vocabulary& vocab,
                                             const EntityRegistry& registry,
                                             const KnowledgeGraph* global_kg, const RunConfig& cfg,
                                             int threads, bool bypass_retrieval) {
    std::vector<PreparedExample> out(ds.size());
    parallel_for(threads, int(ds.size()), [&](int i) {
        out[size_t(i)] =
            prepare_example(ds[size_t(i)], vocab, registry, global_kg, cfg, bypass_retrieval);
    });
    return out;
}

int predict_index(const std::vector<float>& logits) {
    require(!logits.empty(), "predict: zero candidates");
    int best = 0;
    for (int i = 1; i < int(logits.size()); ++i)
        if (logits[size_t(i)] > logits[size_t(best)]) best = i;
    return best;
}

GradCheckReport model_grad_check(const RunConfig& cfg, double epsilon, int n_coords,
                                 uint64_t seed) {
    RunConfig c = cfg;
    c.dropout = 0.0;
    Dataset ds = gen_synthetic_mcqa(seed, 1, 5, 0.0, 0.0);
    std::vector<std::string> texts;
    for (const auto& ex : ds) {
        texts.push_back(ex.context);
        texts.push_back(ex.question);
        for (const auto& cand : ex.candidates) texts.push_back(cand);
    }
    Vocabulary vocab = Vocabulary::build(texts);
    EntityRegistry registry = build_registry(ds);

    auto mp = build_model<double>(c, vocab.size(), registry.size(), registry.n_relations);
    PreparedExample prepared = prepare_example(ds[0], vocab, registry, nullptr, c);

    std::vector<ParamT<double>*> params;
    for (auto& p : mp.store) params.push_back(&p);

    GradCheckFn run = [&](bool do_backward) {
        GraphT<double> g;
        auto fwd = forward_example(g, mp, prepared, /*dropout_seed=*/0, /*train_mode=*/false);
        double v = g.value(fwd.loss).at(0, 0);
        if (do_backward) g.backward(fwd.loss);
        return v;
    };
    return grad_check(run, params, epsilon, n_coords, seed);
}

}  // namespace kgqa
