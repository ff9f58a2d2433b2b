#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgqa/common.hpp"

namespace kgqa {

enum class InteractionSchedule : uint8_t { every_layer, every_other_layer, none };
enum class Connectivity : uint8_t { linked_only, all_nodes };
enum class NodeInit : uint8_t { learned_table, random_fixed, zero };
enum class Optimizer : uint8_t { adam, radam };

// All run hyperparameters. Config files are flat "key = value" text with one
// namespace matching these field names.
struct RunConfig {
    int n_lm_layers = 2;    // N: unimodal layers
    int m_fusion_layers = 3;  // M: cross-modal layers
    int d_lm = 64;
    int d_gnn = 32;
    int lm_heads = 2;
    int gnn_heads = 2;
    int mint_hidden = 128;
    double dropout = 0.0;
    bool share_mint = true;
    InteractionSchedule interaction_schedule = InteractionSchedule::every_layer;
    Connectivity connectivity_mode = Connectivity::linked_only;
    NodeInit node_init_mode = NodeInit::learned_table;
    int top_k_nodes = 200;
    int max_tokens = 100;
    double lr_lm = 1e-3;
    double lr_other = 3e-3;
    int freeze_lm_epochs = 0;
    int batch_size = 8;
    int epochs = 30;
    double grad_clip = 1.0;
    uint64_t seed = 42;
    Optimizer optimizer = Optimizer::adam;
    bool pool_include_int = false;
    bool directed_bridges = false;

    void validate() const;

    // True for the ablation row that fuses at layers 1, 3, 5, ...
    bool fuses_at(int layer_1based) const {
        switch (interaction_schedule) {
            case InteractionSchedule::every_layer: return true;
            case InteractionSchedule::every_other_layer: return layer_1based % 2 == 1;
            case InteractionSchedule::none: return false;
        }
        return false;
    }
};

// Named presets: "desk" (the scaled-down defaults above) and the full-size
// recipes "csqa-paper", "obqa-paper", "medqa-paper".
RunConfig preset_config(const std::string& name);
bool is_preset_name(const std::string& name);
std::vector<std::string> preset_names();

// key = value text round-trip; unknown keys and malformed values are errors.
std::string serialize_config(const RunConfig& cfg);
RunConfig parse_config_text(const std::string& text, RunConfig base = RunConfig());
RunConfig load_config_file(const std::string& path, RunConfig base = RunConfig());
void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value);

const char* to_string(InteractionSchedule s);
const char* to_string(Connectivity c);
const char* to_string(NodeInit n);
const char* to_string(Optimizer o);

}  // namespace kgqa
