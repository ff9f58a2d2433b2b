#pragma once

#include <string>
#include <vector>

#include "kgqa/model.hpp"

namespace kgqa {

// Per-layer attention record at the interaction node: weight of every source
// in its softmax support (neighbors plus the self loop). Weights sum to 1.
struct TraceLayer {
    int layer = 0;  // 1-based fusion layer
    std::vector<std::pair<int32_t, double>> weights;  // (source local id, weight)
};

struct TraceResult {
    std::string example_id;
    int candidate_index = 0;
    std::vector<TraceLayer> layers;           // exactly M records
    std::vector<int32_t> best_first_order;    // nodes in expansion order, starts at 0
};

// Runs the model on the example's predicted candidate and extracts the
// interaction node's attention per layer, then orders nodes by best-first
// expansion where a frontier node's priority is its layer-averaged attention
// on the edge that discovered it (ties broken toward lower local ids).
TraceResult trace_attention(ModelParams& mp, const PreparedExample& ex);

std::string trace_to_json(const TraceResult& tr);

}  // namespace kgqa
