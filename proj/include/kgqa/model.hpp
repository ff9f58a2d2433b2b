#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kgqa/config.hpp"
#include "kgqa/data.hpp"
#include "kgqa/gradcheck.hpp"
#include "kgqa/layers.hpp"
#include "kgqa/params.hpp"
#include "kgqa/vocab.hpp"

namespace kgqa {

// Full parameter set. Construction order fixes the checkpoint manifest order.
// The "lm." prefix marks the language-model partition (embeddings plus every
// transformer block, including those inside fusion layers): it gets lr_lm and
// participates in freezing.
template <typename T>
struct ModelParamsT {
    RunConfig cfg;
    int32_t vocab_size = 0;
    int32_t n_entities = 0;
    int32_t n_relations = 0;

    ParamStoreT<T> store;

    ParamT<T>*tok_emb = nullptr, *seg_emb = nullptr, *pos_emb = nullptr;
    std::vector<LmLayerParams<T>> lm_layers;  // size N + M
    ParamT<T>*node_table = nullptr;           // null in zero init mode
    ParamT<T>*node_proj_w = nullptr, *node_proj_b = nullptr;
    ParamT<T>*int_init = nullptr;
    ParamT<T>*type_emb = nullptr, *rel_emb = nullptr;
    std::vector<GnnLayerParams<T>> gnn_layers;          // size M
    std::vector<std::optional<MlpParams<T>>> mint;      // per fusion layer; set when fusing
    ParamT<T>*pool_wq = nullptr, *pool_wk = nullptr, *pool_wv = nullptr;
    MlpParams<T> head;
};

using ModelParams = ModelParamsT<float>;

// One candidate ready for a forward pass.
struct PreparedCandidate {
    EncodedExample enc;
    MessagePlan plan;
    uint64_t text_hash = 0;  // dropout seeding keys on candidate content
};

struct PreparedExample {
    std::string id;
    int label = 0;
    std::vector<PreparedCandidate> candidates;
};

template <typename T>
ModelParamsT<T> build_model(const RunConfig& cfg, int32_t vocab_size, int32_t n_entities,
                            int32_t n_relations);

// Retrieval + encoding for every candidate of one example. Uses the example's
// KG payload when present, otherwise the supplied global KG.
PreparedExample prepare_example(const QAExample& ex, const Vocabulary& vocab,
                                const EntityRegistry& registry, const KnowledgeGraph* global_kg,
                                const RunConfig& cfg, bool bypass_retrieval = false);

std::vector<PreparedExample> prepare_dataset(const Dataset& ds, const Vocabulary& vocab,
                                             const EntityRegistry& registry,
                                             const KnowledgeGraph* global_kg, const RunConfig& cfg,
                                             int threads, bool bypass_retrieval = false);

// Ids of interest from one candidate forward.
template <typename T>
struct CandidateForward {
    typename GraphT<T>::Id logit;
    typename GraphT<T>::Id nodes_initial;  // e^(0)
    typename GraphT<T>::Id tokens_final;   // h^(N+M), all positions
    typename GraphT<T>::Id nodes_final;    // e^(M), all nodes
    typename GraphT<T>::Id pool_beta;
    // states after each fusion layer (post interaction when it fires)
    std::vector<typename GraphT<T>::Id> token_layer_states;
    std::vector<typename GraphT<T>::Id> node_layer_states;
    // per fusion layer, per head attention over messages (plan order)
    std::vector<std::vector<typename GraphT<T>::Id>> gnn_alphas;
};

template <typename T>
CandidateForward<T> forward_candidate(GraphT<T>& g, ModelParamsT<T>& mp,
                                      const PreparedCandidate& cand, DropoutCtx dc);

template <typename T>
struct ExampleForward {
    typename GraphT<T>::Id loss;
    typename GraphT<T>::Id logits;
    std::vector<CandidateForward<T>> candidates;
};

// Forwards every candidate in one graph and applies softmax cross-entropy
// against the label. Dropout seeds derive from (base_seed, candidate text
// hash), so candidate order cannot influence any output.
template <typename T>
ExampleForward<T> forward_example(GraphT<T>& g, ModelParamsT<T>& mp, const PreparedExample& ex,
                                  uint64_t dropout_seed, bool train_mode);

// Argmax with lowest-index tie break.
int predict_index(const std::vector<float>& logits);

// Full-model gradient check on a tiny 64-bit model driven by one synthetic
// example; dropout disabled.
GradCheckReport model_grad_check(const RunConfig& cfg, double epsilon, int n_coords,
                                 uint64_t seed);

// ---- template definitions ----

namespace detail {

template <typename T>
TensorT<T> init_tensor(int rows, int cols, double stddev, uint64_t seed, const char* name) {
    Rng rng(mix64(seed, hash_str(name)));
    TensorT<T> t(rows, cols);
    for (auto& x : t.data) x = T(rng.normal() * stddev);
    return t;
}

// fan-in scaled init for linear weights
template <typename T>
ParamT<T>& add_linear_w(ParamStoreT<T>& store, const std::string& name, int in, int out,
                        uint64_t seed) {
    return store.add(name, init_tensor<T>(in, out, 1.0 / std::sqrt(double(in)), seed,
                                          name.c_str()));
}

template <typename T>
ParamT<T>& add_zeros(ParamStoreT<T>& store, const std::string& name, int rows, int cols) {
    return store.add(name, TensorT<T>::zeros(rows, cols));
}

template <typename T>
MlpParams<T> add_mlp(ParamStoreT<T>& store, const std::string& prefix, int in, int hidden,
                     int out, uint64_t seed) {
    MlpParams<T> p;
    p.w1 = &add_linear_w(store, prefix + ".w1", in, hidden, seed);
    p.b1 = &add_zeros(store, prefix + ".b1", 1, hidden);
    p.w2 = &add_linear_w(store, prefix + ".w2", hidden, out, seed);
    p.b2 = &add_zeros(store, prefix + ".b2", 1, out);
    return p;
}

}  // namespace detail

template <typename T>
ModelParamsT<T> build_model(const RunConfig& cfg, int32_t vocab_size, int32_t n_entities,
                            int32_t n_relations) {
    cfg.validate();
    require(vocab_size > kNumSpecials, "build_model: vocabulary too small (", vocab_size, ")");
    require(n_relations >= 1, "build_model: need at least one relation");

    ModelParamsT<T> mp;
    mp.cfg = cfg;
    mp.vocab_size = vocab_size;
    mp.n_entities = n_entities;
    mp.n_relations = n_relations;
    auto& st = mp.store;
    const uint64_t seed = cfg.seed;
    const int d = cfg.d_lm, dg = cfg.d_gnn;
    const double emb_std = 0.02;
    const double table_std = 0.1;  // node/type/relation identities

    using detail::add_linear_w;
    using detail::add_mlp;
    using detail::add_zeros;
    using detail::init_tensor;

    mp.tok_emb = &st.add("lm.tok_emb", init_tensor<T>(vocab_size, d, emb_std, seed, "lm.tok_emb"));
    mp.seg_emb = &st.add("lm.seg_emb", init_tensor<T>(2, d, emb_std, seed, "lm.seg_emb"));
    mp.pos_emb =
        &st.add("lm.pos_emb", init_tensor<T>(cfg.max_tokens, d, emb_std, seed, "lm.pos_emb"));

    const int ffn_hidden = 2 * d;
    for (int i = 0; i < cfg.n_lm_layers + cfg.m_fusion_layers; ++i) {
        std::string pre = cat("lm.layer", i, ".");
        LmLayerParams<T> lp;
        lp.wq = &add_linear_w(st, pre + "attn.wq", d, d, seed);
        lp.bq = &add_zeros(st, pre + "attn.bq", 1, d);
        lp.wk = &add_linear_w(st, pre + "attn.wk", d, d, seed);
        lp.bk = &add_zeros(st, pre + "attn.bk", 1, d);
        lp.wv = &add_linear_w(st, pre + "attn.wv", d, d, seed);
        lp.bv = &add_zeros(st, pre + "attn.bv", 1, d);
        lp.wo = &add_linear_w(st, pre + "attn.wo", d, d, seed);
        lp.bo = &add_zeros(st, pre + "attn.bo", 1, d);
        lp.ln1_g = &st.add(pre + "ln1.gamma", TensorT<T>::full(1, d, T(1)));
        lp.ln1_b = &add_zeros(st, pre + "ln1.beta", 1, d);
        lp.ffn = add_mlp(st, pre + "ffn", d, ffn_hidden, d, seed);
        lp.ln2_g = &st.add(pre + "ln2.gamma", TensorT<T>::full(1, d, T(1)));
        lp.ln2_b = &add_zeros(st, pre + "ln2.beta", 1, d);
        mp.lm_layers.push_back(lp);
    }

    if (cfg.node_init_mode != NodeInit::zero) {
        mp.node_table = &st.add(
            "gnn.node_table", init_tensor<T>(std::max(n_entities, 1), dg, table_std, seed,
                                             "gnn.node_table"),
            /*trainable=*/cfg.node_init_mode == NodeInit::learned_table);
        mp.node_proj_w = &add_linear_w(st, "gnn.node_proj.w", dg, dg, seed);
        mp.node_proj_b = &add_zeros(st, "gnn.node_proj.b", 1, dg);
    }
    mp.int_init = &st.add("gnn.int_init", init_tensor<T>(1, dg, table_std, seed, "gnn.int_init"));
    mp.type_emb =
        &st.add("gnn.type_emb", init_tensor<T>(kNumNodeTypes, dg, table_std, seed, "gnn.type_emb"));
    mp.rel_emb = &st.add(
        "gnn.rel_emb", init_tensor<T>(2 * n_relations + 2, dg, table_std, seed, "gnn.rel_emb"));

    for (int l = 0; l < cfg.m_fusion_layers; ++l) {
        std::string pre = cat("gnn.layer", l, ".");
        GnnLayerParams<T> gp;
        gp.f_r = add_mlp(st, pre + "f_r", 3 * dg, dg, dg, seed);
        gp.fm_w = &add_linear_w(st, pre + "f_m.w", 3 * dg, dg, seed);
        gp.fm_b = &add_zeros(st, pre + "f_m.b", 1, dg);
        gp.fq_w = &add_linear_w(st, pre + "f_q.w", 2 * dg, dg, seed);
        gp.fq_b = &add_zeros(st, pre + "f_q.b", 1, dg);
        gp.fk_w = &add_linear_w(st, pre + "f_k.w", 3 * dg, dg, seed);
        gp.fk_b = &add_zeros(st, pre + "f_k.b", 1, dg);
        gp.f_n = add_mlp(st, pre + "f_n", dg, dg, dg, seed);
        mp.gnn_layers.push_back(gp);
    }

    std::optional<MlpParams<T>> shared_mint;
    for (int l = 1; l <= cfg.m_fusion_layers; ++l) {
        if (!cfg.fuses_at(l)) {
            mp.mint.emplace_back(std::nullopt);
            continue;
        }
        if (cfg.share_mint) {
            if (!shared_mint)
                shared_mint =
                    add_mlp(st, "mint.shared", d + dg, cfg.mint_hidden, d + dg, seed);
            mp.mint.emplace_back(shared_mint);
        } else {
            mp.mint.emplace_back(
                add_mlp(st, cat("mint.layer", l - 1), d + dg, cfg.mint_hidden, d + dg, seed));
        }
    }

    mp.pool_wq = &add_linear_w(st, "head.pool.wq", d, dg, seed);
    mp.pool_wk = &add_linear_w(st, "head.pool.wk", dg, dg, seed);
    mp.pool_wv = &add_linear_w(st, "head.pool.wv", dg, dg, seed);
    mp.head = add_mlp(st, "head.mlp", d + 2 * dg, d, 1, seed);
    return mp;
}

template <typename T>
CandidateForward<T> forward_candidate(GraphT<T>& g, ModelParamsT<T>& mp,
                                      const PreparedCandidate& cand, DropoutCtx dc) {
    using Id = typename GraphT<T>::Id;
    const RunConfig& cfg = mp.cfg;
    const auto& enc = cand.enc;
    const auto& plan = cand.plan;
    CandidateForward<T> out;

    // token embeddings: sum of token, segment and position rows
    std::vector<int32_t> positions(enc.token_ids.size());
    for (size_t i = 0; i < positions.size(); ++i) positions[i] = int32_t(i);
    Id h = g.add(g.add(g.gather_rows(g.param(*mp.tok_emb), enc.token_ids),
                       g.gather_rows(g.param(*mp.seg_emb), enc.segment_ids)),
                 g.gather_rows(g.param(*mp.pos_emb), positions));
    h = dc.apply(g, h);

    for (int i = 0; i < cfg.n_lm_layers; ++i)
        h = lm_layer_forward(g, h, enc.not_pad, mp.lm_layers[size_t(i)], cfg.lm_heads, dc);

    // initial node states
    Id e;
    {
        std::vector<Id> rows;
        rows.push_back(g.param(*mp.int_init));
        if (plan.n_nodes > 1) {
            if (cfg.node_init_mode == NodeInit::zero || mp.node_table == nullptr) {
                rows.push_back(g.constant(TensorT<T>::zeros(plan.n_nodes - 1, cfg.d_gnn)));
            } else {
                bool any_entity = false;
                for (int i = 1; i < plan.n_nodes; ++i)
                    any_entity = any_entity || plan.node_entity_ids[size_t(i)] >= 0;
                if (!any_entity) {
                    rows.push_back(g.constant(TensorT<T>::zeros(plan.n_nodes - 1, cfg.d_gnn)));
                } else {
                    std::vector<int32_t> gids(plan.node_entity_ids.begin() + 1,
                                              plan.node_entity_ids.end());
                    for (int32_t gid : gids)
                        require(gid >= 0, "forward: entity node without registry id");
                    Id looked = g.gather_rows(g.param(*mp.node_table), gids);
                    rows.push_back(g.add_rowvec(g.matmul(looked, g.param(*mp.node_proj_w)),
                                                g.param(*mp.node_proj_b)));
                }
            }
        }
        e = rows.size() == 1 ? rows[0] : g.concat_rows(rows);
    }
    out.nodes_initial = e;

    GnnShared<T> shared = gnn_shared_inputs(g, plan, *mp.type_emb, *mp.rel_emb);

    for (int l = 1; l <= cfg.m_fusion_layers; ++l) {
        Id h_pre = lm_layer_forward(g, h, enc.not_pad,
                                    mp.lm_layers[size_t(cfg.n_lm_layers + l - 1)], cfg.lm_heads,
                                    dc);
        out.gnn_alphas.emplace_back();
        Id e_pre = gnn_layer_forward(g, e, plan, shared, mp.gnn_layers[size_t(l - 1)],
                                     cfg.gnn_heads, dc, &out.gnn_alphas.back());
        if (cfg.fuses_at(l)) {
            const auto& mint_p = mp.mint[size_t(l - 1)];
            require(mint_p.has_value(), "forward: missing interaction parameters at layer ", l);
            Id h_int = g.slice_rows(h_pre, 0, 1);
            Id e_int = g.slice_rows(e_pre, 0, 1);
            auto [h_mix, e_mix] = mint_forward(g, h_int, e_int, *mint_p);
            h = g.replace_row(h_pre, h_mix, 0);
            e = g.replace_row(e_pre, e_mix, 0);
        } else {
            h = h_pre;
            e = e_pre;
        }
        out.token_layer_states.push_back(h);
        out.node_layer_states.push_back(e);
    }
    out.tokens_final = h;
    out.nodes_final = e;

    // attention pooling of node states, interaction-token state as query
    Id h_int = g.slice_rows(h, 0, 1);
    Id e_int = g.slice_rows(e, 0, 1);
    Id pool_rows = (cfg.pool_include_int || plan.n_nodes == 1)
                       ? e
                       : g.slice_rows(e, 1, plan.n_nodes - 1);
    auto [pooled, beta] =
        attention_pool_forward(g, h_int, pool_rows, *mp.pool_wq, *mp.pool_wk, *mp.pool_wv);
    out.pool_beta = beta;

    Id feat = g.concat_cols({h_int, e_int, pooled});
    Id hidden = g.gelu(g.add_rowvec(g.matmul(feat, g.param(*mp.head.w1)), g.param(*mp.head.b1)));
    hidden = dc.apply(g, hidden);
    out.logit = g.add_rowvec(g.matmul(hidden, g.param(*mp.head.w2)), g.param(*mp.head.b2));
    return out;
}

template <typename T>
ExampleForward<T> forward_example(GraphT<T>& g, ModelParamsT<T>& mp, const PreparedExample& ex,
                                  uint64_t dropout_seed, bool train_mode) {
    require(!ex.candidates.empty(), "forward_example: zero candidates");
    require(ex.label >= 0 && ex.label < int(ex.candidates.size()), "forward_example: label ",
            ex.label, " out of range");
    ExampleForward<T> out;
    std::vector<typename GraphT<T>::Id> logits;
    for (const auto& cand : ex.candidates) {
        DropoutCtx dc;
        dc.rate = mp.cfg.dropout;
        dc.enabled = train_mode;
        dc.base_seed = mix64(dropout_seed, cand.text_hash);
        out.candidates.push_back(forward_candidate(g, mp, cand, dc));
        logits.push_back(out.candidates.back().logit);
    }
    out.logits = g.stack_scalars(logits);
    out.loss = g.cross_entropy(out.logits, ex.label);
    return out;
}

}  // namespace kgqa
