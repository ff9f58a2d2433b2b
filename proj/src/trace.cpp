#include "kgqa/trace.hpp"

#include <algorithm>
#include <map>
#include <queue>

#include <json.hpp>

#include "kgqa/trainer.hpp"

namespace kgqa {

using nlohmann::json;

TraceResult trace_attention(ModelParams& mp, const PreparedExample& ex) {
    Graph g;
    auto fwd = forward_example(g, mp, ex, /*dropout_seed=*/0, /*train_mode=*/false);
    const auto& logit_row = g.value(fwd.logits);
    std::vector<float> logits(logit_row.data.begin(), logit_row.data.end());

    TraceResult tr;
    tr.example_id = ex.id;
    tr.candidate_index = predict_index(logits);
    const auto& cand = ex.candidates[size_t(tr.candidate_index)];
    const auto& cf = fwd.candidates[size_t(tr.candidate_index)];
    const MessagePlan& plan = cand.plan;
    const int heads = mp.cfg.gnn_heads;
    const int layers = int(cf.gnn_alphas.size());

    // head-averaged attention per message edge, per layer
    std::vector<std::vector<double>> edge_attn(size_t(layers),
                                               std::vector<double>(size_t(plan.n_edges()), 0.0));
    for (int l = 0; l < layers; ++l) {
        for (int h = 0; h < heads; ++h) {
            const auto& alpha = g.value(cf.gnn_alphas[size_t(l)][size_t(h)]);
            for (int e = 0; e < plan.n_edges(); ++e)
                edge_attn[size_t(l)][size_t(e)] += double(alpha.at(e, 0)) / heads;
        }
    }

    for (int l = 0; l < layers; ++l) {
        TraceLayer rec;
        rec.layer = l + 1;
        for (int e = 0; e < plan.n_edges(); ++e)
            if (plan.dst[size_t(e)] == 0)
                rec.weights.emplace_back(plan.src[size_t(e)], edge_attn[size_t(l)][size_t(e)]);
        tr.layers.push_back(std::move(rec));
    }

    // layer-averaged weight per (src, dst), self-loops excluded
    std::map<std::pair<int32_t, int32_t>, double> mean_attn;
    for (int e = 0; e < plan.n_edges(); ++e) {
        if (plan.src[size_t(e)] == plan.dst[size_t(e)]) continue;
        double sum = 0.0;
        for (int l = 0; l < layers; ++l) sum += edge_attn[size_t(l)][size_t(e)];
        mean_attn[{plan.src[size_t(e)], plan.dst[size_t(e)]}] += sum / layers;
    }

    // best-first expansion from the interaction node
    struct Entry {
        double priority;
        int32_t node;
        bool operator<(const Entry& o) const {
            if (priority != o.priority) return priority < o.priority;  // max-heap on priority
            return node > o.node;  // then lower id first
        }
    };
    std::priority_queue<Entry> pq;
    std::vector<uint8_t> seen(size_t(plan.n_nodes), 0);
    auto push_neighbors = [&](int32_t u) {
        for (auto& [key, w] : mean_attn) {
            auto [src, dst] = key;
            if (dst == u && !seen[size_t(src)]) pq.push({w, src});
        }
    };
    seen[0] = 1;
    tr.best_first_order.push_back(0);
    push_neighbors(0);
    while (!pq.empty()) {
        auto [w, node] = pq.top();
        pq.pop();
        if (seen[size_t(node)]) continue;
        seen[size_t(node)] = 1;
        tr.best_first_order.push_back(node);
        push_neighbors(node);
    }
    return tr;
}

std::string trace_to_json(const TraceResult& tr) {
    json j;
    j["example_id"] = tr.example_id;
    j["candidate_index"] = tr.candidate_index;
    json layers = json::array();
    for (const auto& rec : tr.layers) {
        json weights = json::array();
        for (auto& [node, w] : rec.weights) weights.push_back({{"node", node}, {"weight", w}});
        layers.push_back({{"layer", rec.layer}, {"weights", weights}});
    }
    j["layers"] = layers;
    j["best_first_order"] = tr.best_first_order;
    return j.dump(2);
}

}  // namespace kgqa
