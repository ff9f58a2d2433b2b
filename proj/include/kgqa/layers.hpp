#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "kgqa/autograd.hpp"
#include "kgqa/retrieval.hpp"

namespace kgqa {

// Per-call-site dropout with counter-based seeding: the mask depends on
// (base seed, site index in forward order), never on evaluation order or
// candidate position.
struct DropoutCtx {
    double rate = 0.0;
    bool enabled = false;
    uint64_t base_seed = 0;
    uint64_t site = 0;

    template <typename T>
    typename GraphT<T>::Id apply(GraphT<T>& g, typename GraphT<T>::Id x) {
        ++site;
        if (!enabled || rate <= 0.0) return x;
        auto& v = g.value(x);
        auto mask = make_dropout_mask(v.numel(), rate, mix64(base_seed, site));
        return g.dropout(x, std::move(mask), T(rate));
    }
};

template <typename T>
struct MlpParams {
    ParamT<T>*w1, *b1, *w2, *b2;
};

template <typename T>
struct LmLayerParams {
    ParamT<T>*wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    ParamT<T>*ln1_g, *ln1_b;
    MlpParams<T> ffn;
    ParamT<T>*ln2_g, *ln2_b;
};

template <typename T>
struct GnnLayerParams {
    MlpParams<T> f_r;               // relation mixer over [rel; type_src; type_dst]
    ParamT<T>*fm_w, *fm_b;          // message: linear over [e_src; type_src; r]
    ParamT<T>*fq_w, *fq_b;          // query: linear over [e_src; type_src]
    ParamT<T>*fk_w, *fk_b;          // key: linear over [e_dst; type_dst; r]
    MlpParams<T> f_n;               // node update
};

// Message-passing layout for one subgraph, precomputed once per candidate.
// Every stored KG edge yields two directed messages (forward and reverse
// relation rows), interaction edges use one reserved row in both directions,
// and every node gets a self-loop with its own reserved row. Messages are
// sorted by (dst, src, rel_row) so reductions run in a fixed order.
struct MessagePlan {
    int n_nodes = 0;
    int n_relations = 0;                  // real relation count
    std::vector<int32_t> node_type_ids;   // per node
    std::vector<int32_t> node_entity_ids; // registry ids; -1 for interaction/dummy
    std::vector<int32_t> src, dst, rel_row;
    // unique (rel_row, type_src, type_dst) combos; f_r runs once per combo
    std::vector<int32_t> combo_rel, combo_ts, combo_td;
    std::vector<int32_t> combo_of_edge;

    int n_edges() const { return int(src.size()); }
    int n_combos() const { return int(combo_rel.size()); }
    static constexpr int32_t interaction_row(int32_t n_relations) { return 2 * n_relations; }
    static constexpr int32_t self_loop_row(int32_t n_relations) { return 2 * n_relations + 1; }
    int32_t rel_rows() const { return 2 * n_relations + 2; }
};

// table_relations: relation count the embedding table is sized for (may
// exceed the subgraph's source KG when per-example graphs vary).
MessagePlan build_message_plan(const Subgraph& sg, const std::vector<int32_t>& node_entity_ids,
                               int32_t table_relations);

// Post-norm transformer encoder block with key-side padding mask.
template <typename T>
typename GraphT<T>::Id lm_layer_forward(GraphT<T>& g, typename GraphT<T>::Id h,
                                        const std::vector<uint8_t>& not_pad,
                                        const LmLayerParams<T>& p, int heads, DropoutCtx& dc) {
    using Id = typename GraphT<T>::Id;
    const auto& H = g.value(h);
    require(int(not_pad.size()) == H.rows, "lm_layer: mask length ", not_pad.size(),
            " vs sequence length ", H.rows);
    const int d = H.cols;
    require(d % heads == 0, "lm_layer: heads ", heads, " must divide width ", d);
    const int hd = d / heads;
    const T inv_sqrt = T(1) / std::sqrt(T(hd));

    Id q = g.add_rowvec(g.matmul(h, g.param(*p.wq)), g.param(*p.bq));
    Id k = g.add_rowvec(g.matmul(h, g.param(*p.wk)), g.param(*p.bk));
    Id v = g.add_rowvec(g.matmul(h, g.param(*p.wv)), g.param(*p.bv));

    std::vector<Id> head_outs;
    for (int hh = 0; hh < heads; ++hh) {
        Id qh = g.slice_cols(q, hh * hd, hd);
        Id kh = g.slice_cols(k, hh * hd, hd);
        Id vh = g.slice_cols(v, hh * hd, hd);
        Id scores = g.mul_scalar(g.matmul(qh, g.transpose(kh)), inv_sqrt);
        scores = g.masked_fill_cols(scores, not_pad, T(kMaskFill));
        Id alpha = g.row_softmax(scores);
        head_outs.push_back(g.matmul(alpha, vh));
    }
    Id attn = head_outs.size() == 1 ? head_outs[0] : g.concat_cols(head_outs);
    Id proj = g.add_rowvec(g.matmul(attn, g.param(*p.wo)), g.param(*p.bo));
    proj = dc.apply(g, proj);
    Id res1 = g.layer_norm(g.add(h, proj), g.param(*p.ln1_g), g.param(*p.ln1_b));

    Id f = g.add_rowvec(g.matmul(res1, g.param(*p.ffn.w1)), g.param(*p.ffn.b1));
    f = g.gelu(f);
    f = g.add_rowvec(g.matmul(f, g.param(*p.ffn.w2)), g.param(*p.ffn.b2));
    f = dc.apply(g, f);
    return g.layer_norm(g.add(res1, f), g.param(*p.ln2_g), g.param(*p.ln2_b));
}

// Inputs shared by all GNN layers for one subgraph.
template <typename T>
struct GnnShared {
    typename GraphT<T>::Id type_rows;   // [J x d] node-type embeddings
    typename GraphT<T>::Id combo_cat;   // [C x 3d] concat(rel, type_src, type_dst)
};

template <typename T>
GnnShared<T> gnn_shared_inputs(GraphT<T>& g, const MessagePlan& plan, ParamT<T>& type_emb,
                               ParamT<T>& rel_emb) {
    GnnShared<T> s;
    typename GraphT<T>::Id types = g.param(type_emb);
    typename GraphT<T>::Id rels = g.param(rel_emb);
    s.type_rows = g.gather_rows(types, plan.node_type_ids);
    s.combo_cat = g.concat_cols({g.gather_rows(rels, plan.combo_rel),
                                 g.gather_rows(types, plan.combo_ts),
                                 g.gather_rows(types, plan.combo_td)});
    return s;
}

// Per-message tensors of one GNN layer:
//   r  = f_r([rel; u_src; u_dst])            (2-layer MLP, per combo)
//   m  = f_m([e_src; u_src; r])              (linear, per message)
//   q  = f_q([e_src; u_src]), k = f_k([e_dst; u_dst; r])
template <typename T>
struct GnnEdgeTensors {
    typename GraphT<T>::Id r_edge, messages, q_edge, k_edge;
};

template <typename T>
GnnEdgeTensors<T> gnn_edge_tensors(GraphT<T>& g, typename GraphT<T>::Id e,
                                   const MessagePlan& plan, const GnnShared<T>& shared,
                                   const GnnLayerParams<T>& p) {
    using Id = typename GraphT<T>::Id;
    GnnEdgeTensors<T> t;
    Id r_combo = g.add_rowvec(g.matmul(shared.combo_cat, g.param(*p.f_r.w1)), g.param(*p.f_r.b1));
    r_combo = g.gelu(r_combo);
    r_combo = g.add_rowvec(g.matmul(r_combo, g.param(*p.f_r.w2)), g.param(*p.f_r.b2));
    t.r_edge = g.gather_rows(r_combo, plan.combo_of_edge);

    Id e_src = g.gather_rows(e, plan.src);
    Id e_dst = g.gather_rows(e, plan.dst);
    Id u_src = g.gather_rows(shared.type_rows, plan.src);
    Id u_dst = g.gather_rows(shared.type_rows, plan.dst);

    t.messages = g.add_rowvec(
        g.matmul(g.concat_cols({e_src, u_src, t.r_edge}), g.param(*p.fm_w)), g.param(*p.fm_b));
    Id q_nodes = g.add_rowvec(g.matmul(g.concat_cols({e, shared.type_rows}), g.param(*p.fq_w)),
                              g.param(*p.fq_b));
    t.q_edge = g.gather_rows(q_nodes, plan.src);
    t.k_edge = g.add_rowvec(
        g.matmul(g.concat_cols({e_dst, u_dst, t.r_edge}), g.param(*p.fk_w)), g.param(*p.fk_b));
    return t;
}

// Per-head attention over each destination's incoming messages:
// softmax over the segment of q.k/sqrt(D).
template <typename T>
std::vector<typename GraphT<T>::Id> gnn_attention(GraphT<T>& g, const GnnEdgeTensors<T>& t,
                                                  const MessagePlan& plan, int heads) {
    using Id = typename GraphT<T>::Id;
    const int d = g.value(t.q_edge).cols;
    require(d % heads == 0, "gnn_attention: heads ", heads, " must divide width ", d);
    const int hd = d / heads;
    const T inv_sqrt = T(1) / std::sqrt(T(hd));
    std::vector<Id> alphas;
    for (int hh = 0; hh < heads; ++hh) {
        Id qh = g.slice_cols(t.q_edge, hh * hd, hd);
        Id kh = g.slice_cols(t.k_edge, hh * hd, hd);
        Id gamma = g.mul_scalar(g.row_sum(g.hadamard(qh, kh)), inv_sqrt);
        alphas.push_back(g.segment_softmax(gamma, plan.dst, plan.n_nodes));
    }
    return alphas;
}

// Full layer: aggregate attention-weighted message slices per destination,
// apply f_n, add the residual.
template <typename T>
typename GraphT<T>::Id gnn_layer_forward(GraphT<T>& g, typename GraphT<T>::Id e,
                                         const MessagePlan& plan, const GnnShared<T>& shared,
                                         const GnnLayerParams<T>& p, int heads, DropoutCtx& dc,
                                         std::vector<typename GraphT<T>::Id>* alphas_out = nullptr) {
    using Id = typename GraphT<T>::Id;
    const auto& E = g.value(e);
    require(E.rows == plan.n_nodes, "gnn_layer: node state rows ", E.rows, " vs plan nodes ",
            plan.n_nodes);
    const int d = E.cols;
    const int hd = d / heads;

    GnnEdgeTensors<T> t = gnn_edge_tensors(g, e, plan, shared, p);
    std::vector<Id> alphas = gnn_attention(g, t, plan, heads);
    if (alphas_out) *alphas_out = alphas;

    std::vector<Id> head_outs;
    for (int hh = 0; hh < heads; ++hh) {
        Id mh = g.slice_cols(t.messages, hh * hd, hd);
        head_outs.push_back(
            g.segment_sum(g.scale_rows(mh, alphas[size_t(hh)]), plan.dst, plan.n_nodes));
    }
    Id agg = head_outs.size() == 1 ? head_outs[0] : g.concat_cols(head_outs);

    Id upd = g.add_rowvec(g.matmul(agg, g.param(*p.f_n.w1)), g.param(*p.f_n.b1));
    upd = g.gelu(upd);
    upd = g.add_rowvec(g.matmul(upd, g.param(*p.f_n.w2)), g.param(*p.f_n.b2));
    upd = dc.apply(g, upd);
    return g.add(upd, e);
}

// Attention pooling of node states with the interaction token state as the
// query: beta = softmax(q K^T / sqrt(d)), pooled = beta V.
template <typename T>
std::pair<typename GraphT<T>::Id, typename GraphT<T>::Id> attention_pool_forward(
    GraphT<T>& g, typename GraphT<T>::Id h_int, typename GraphT<T>::Id node_rows,
    ParamT<T>& wq, ParamT<T>& wk, ParamT<T>& wv) {
    using Id = typename GraphT<T>::Id;
    const int d = wq.value.cols;
    Id q = g.matmul(h_int, g.param(wq));
    Id keys = g.matmul(node_rows, g.param(wk));
    Id vals = g.matmul(node_rows, g.param(wv));
    Id beta =
        g.row_softmax(g.mul_scalar(g.matmul(q, g.transpose(keys)), T(1) / std::sqrt(T(d))));
    return {g.matmul(beta, vals), beta};
}

// The modality interaction MLP over the concatenated bottleneck pair; the
// output splits back at d_lm.
template <typename T>
std::pair<typename GraphT<T>::Id, typename GraphT<T>::Id> mint_forward(
    GraphT<T>& g, typename GraphT<T>::Id h_int, typename GraphT<T>::Id e_int,
    const MlpParams<T>& p) {
    using Id = typename GraphT<T>::Id;
    const int d_lm = g.value(h_int).cols;
    const int d_gnn = g.value(e_int).cols;
    Id cat = g.concat_cols({h_int, e_int});
    Id hidden = g.gelu(g.add_rowvec(g.matmul(cat, g.param(*p.w1)), g.param(*p.b1)));
    Id out = g.add_rowvec(g.matmul(hidden, g.param(*p.w2)), g.param(*p.b2));
    require(g.value(out).cols == d_lm + d_gnn, "mint: output width ", g.value(out).cols,
            " must equal input width ", d_lm + d_gnn);
    return {g.slice_cols(out, 0, d_lm), g.slice_cols(out, d_lm, d_gnn)};
}

}  // namespace kgqa
