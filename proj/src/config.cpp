#include "kgqa/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace kgqa {

const char* to_string(InteractionSchedule s) {
    switch (s) {
        case InteractionSchedule::every_layer: return "every_layer";
        case InteractionSchedule::every_other_layer: return "every_other_layer";
        case InteractionSchedule::none: return "none";
    }
    return "?";
}
const char* to_string(Connectivity c) {
    return c == Connectivity::linked_only ? "linked_only" : "all_nodes";
}
const char* to_string(NodeInit n) {
    switch (n) {
        case NodeInit::learned_table: return "learned_table";
        case NodeInit::random_fixed: return "random_fixed";
        case NodeInit::zero: return "zero";
    }
    return "?";
}
const char* to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "radam"; }

void RunConfig::validate() const {
    require(n_lm_layers >= 0, "config: N must be >= 0");
    require(m_fusion_layers >= 1, "config: M must be >= 1");
    require(d_lm >= 1 && d_gnn >= 1 && mint_hidden >= 1, "config: dims must be positive");
    require(lm_heads >= 1 && d_lm % lm_heads == 0, "config: lm_heads must divide d_lm");
    require(gnn_heads >= 1 && d_gnn % gnn_heads == 0, "config: gnn_heads must divide d_gnn");
    require(dropout >= 0.0 && dropout < 1.0, "config: dropout outside [0,1)");
    require(top_k_nodes >= 1, "config: top_k_nodes must be >= 1");
    require(max_tokens >= 8, "config: max_tokens must be >= 8");
    require(lr_lm > 0 && lr_other > 0, "config: learning rates must be positive");
    require(freeze_lm_epochs >= 0, "config: freeze_lm_epochs must be >= 0");
    require(batch_size >= 1, "config: batch_size must be >= 1");
    require(epochs >= 1, "config: epochs must be >= 1");
    require(grad_clip > 0, "config: grad_clip must be positive");
}

RunConfig preset_config(const std::string& name) {
    RunConfig c;  // the desk defaults
    if (name == "desk") return c;
    if (name == "csqa-paper") {
        c.n_lm_layers = 19;
        c.m_fusion_layers = 5;
        c.d_lm = 1024;       // seed-LM width; not part of the published recipe
        c.lm_heads = 16;
        c.d_gnn = 200;
        c.gnn_heads = 2;
        c.mint_hidden = 400;
        c.dropout = 0.2;
        c.top_k_nodes = 200;
        c.max_tokens = 100;
        c.lr_lm = 1e-5;
        c.lr_other = 1e-3;
        c.freeze_lm_epochs = 4;
        c.batch_size = 128;
        c.epochs = 30;
        c.grad_clip = 1.0;
        c.optimizer = Optimizer::radam;
        return c;
    }
    if (name == "obqa-paper") {
        RunConfig b = preset_config("csqa-paper");
        b.n_lm_layers = 18;
        b.m_fusion_layers = 6;
        b.mint_hidden = 200;
        b.epochs = 70;
        return b;
    }
    if (name == "medqa-paper") {
        RunConfig b = preset_config("csqa-paper");
        b.n_lm_layers = 9;
        b.m_fusion_layers = 3;
        b.mint_hidden = 400;
        b.lr_lm = 5e-5;
        b.freeze_lm_epochs = 0;
        b.epochs = 20;
        b.max_tokens = 512;
        return b;
    }
    fail("config: unknown preset '", name, "'");
}

bool is_preset_name(const std::string& name) {
    for (const auto& p : preset_names())
        if (p == name) return true;
    return false;
}

std::vector<std::string> preset_names() {
    return {"desk", "csqa-paper", "obqa-paper", "medqa-paper"};
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream is(value);
    T v{};
    is >> v;
    require(!is.fail() && is.eof(), "config: bad value '", value, "' for key '", key, "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    fail("config: bad boolean '", value, "' for key '", key, "'");
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    os << "n_lm_layers = " << c.n_lm_layers << '\n';
    os << "m_fusion_layers = " << c.m_fusion_layers << '\n';
    os << "d_lm = " << c.d_lm << '\n';
    os << "d_gnn = " << c.d_gnn << '\n';
    os << "lm_heads = " << c.lm_heads << '\n';
    os << "gnn_heads = " << c.gnn_heads << '\n';
    os << "mint_hidden = " << c.mint_hidden << '\n';
    os << "dropout = " << fmt_double(c.dropout) << '\n';
    os << "share_mint = " << (c.share_mint ? "true" : "false") << '\n';
    os << "interaction_schedule = " << to_string(c.interaction_schedule) << '\n';
    os << "connectivity_mode = " << to_string(c.connectivity_mode) << '\n';
    os << "node_init_mode = " << to_string(c.node_init_mode) << '\n';
    os << "top_k_nodes = " << c.top_k_nodes << '\n';
    os << "max_tokens = " << c.max_tokens << '\n';
    os << "lr_lm = " << fmt_double(c.lr_lm) << '\n';
    os << "lr_other = " << fmt_double(c.lr_other) << '\n';
    os << "freeze_lm_epochs = " << c.freeze_lm_epochs << '\n';
    os << "batch_size = " << c.batch_size << '\n';
    os << "epochs = " << c.epochs << '\n';
    os << "grad_clip = " << fmt_double(c.grad_clip) << '\n';
    os << "seed = " << c.seed << '\n';
    os << "optimizer = " << to_string(c.optimizer) << '\n';
    os << "pool_include_int = " << (c.pool_include_int ? "true" : "false") << '\n';
    os << "directed_bridges = " << (c.directed_bridges ? "true" : "false") << '\n';
    return os.str();
}

void apply_config_override(RunConfig& c, const std::string& key, const std::string& value) {
    if (key == "n_lm_layers") c.n_lm_layers = parse_number<int>(key, value);
    else if (key == "m_fusion_layers") c.m_fusion_layers = parse_number<int>(key, value);
    else if (key == "d_lm") c.d_lm = parse_number<int>(key, value);
    else if (key == "d_gnn") c.d_gnn = parse_number<int>(key, value);
    else if (key == "lm_heads") c.lm_heads = parse_number<int>(key, value);
    else if (key == "gnn_heads") c.gnn_heads = parse_number<int>(key, value);
    else if (key == "mint_hidden") c.mint_hidden = parse_number<int>(key, value);
    else if (key == "dropout") c.dropout = parse_number<double>(key, value);
    else if (key == "share_mint") c.share_mint = parse_bool(key, value);
    else if (key == "interaction_schedule") {
        if (value == "every_layer") c.interaction_schedule = InteractionSchedule::every_layer;
        else if (value == "every_other_layer")
            c.interaction_schedule = InteractionSchedule::every_other_layer;
        else if (value == "none") c.interaction_schedule = InteractionSchedule::none;
        else fail("config: bad interaction_schedule '", value, "'");
    } else if (key == "connectivity_mode") {
        if (value == "linked_only") c.connectivity_mode = Connectivity::linked_only;
        else if (value == "all_nodes") c.connectivity_mode = Connectivity::all_nodes;
        else fail("config: bad connectivity_mode '", value, "'");
    } else if (key == "node_init_mode") {
        if (value == "learned_table") c.node_init_mode = NodeInit::learned_table;
        else if (value == "random_fixed") c.node_init_mode = NodeInit::random_fixed;
        else if (value == "zero") c.node_init_mode = NodeInit::zero;
        else fail("config: bad node_init_mode '", value, "'");
    } else if (key == "top_k_nodes") c.top_k_nodes = parse_number<int>(key, value);
    else if (key == "max_tokens") c.max_tokens = parse_number<int>(key, value);
    else if (key == "lr_lm") c.lr_lm = parse_number<double>(key, value);
    else if (key == "lr_other") c.lr_other = parse_number<double>(key, value);
    else if (key == "freeze_lm_epochs") c.freeze_lm_epochs = parse_number<int>(key, value);
    else if (key == "batch_size") c.batch_size = parse_number<int>(key, value);
    else if (key == "epochs") c.epochs = parse_number<int>(key, value);
    else if (key == "grad_clip") c.grad_clip = parse_number<double>(key, value);
    else if (key == "seed") c.seed = parse_number<uint64_t>(key, value);
    else if (key == "optimizer") {
        if (value == "adam") c.optimizer = Optimizer::adam;
        else if (value == "radam") c.optimizer = Optimizer::radam;
        else fail("config: bad optimizer '", value, "'");
    } else if (key == "pool_include_int") c.pool_include_int = parse_bool(key, value);
    else if (key == "directed_bridges") c.directed_bridges = parse_bool(key, value);
    else fail("config: unknown key '", key, "'");
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        require(eq != std::string::npos, "config line ", line_no, ": expected 'key = value'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        apply_config_override(base, key, value);
    }
    return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
    if (is_preset_name(path)) return preset_config(path);
    std::ifstream f(path);
    require(f.good(), "config: cannot read ", path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), base);
}

}  // namespace kgqa
