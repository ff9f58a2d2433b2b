#include "kgqa/ablation.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "kgqa/trainer.hpp"

namespace kgqa {

std::vector<AblationVariant> parse_ablation_suite(const std::string& text) {
    std::vector<AblationVariant> suite;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        size_t tab = line.find('\t');
        require(tab != std::string::npos, "ablation suite line ", line_no,
                ": expected 'label<TAB>deltas'");
        AblationVariant v;
        v.label = line.substr(0, tab);
        std::string deltas = line.substr(tab + 1);
        std::set<std::string> seen_keys;
        std::istringstream ds(deltas);
        std::string item;
        while (std::getline(ds, item, ',')) {
            size_t eq = item.find('=');
            require(eq != std::string::npos, "ablation suite line ", line_no, ": bad delta '",
                    item, "'");
            std::string key = item.substr(0, eq), value = item.substr(eq + 1);
            require(seen_keys.insert(key).second, "ablation suite line ", line_no,
                    ": conflicting deltas for key '", key, "'");
            v.deltas.emplace_back(key, value);
        }
        require(!v.deltas.empty(), "ablation suite line ", line_no, ": no deltas");
        suite.push_back(std::move(v));
    }
    return suite;
}

std::vector<AblationVariant> load_ablation_suite(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "ablation suite: cannot read ", path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_ablation_suite(ss.str());
}

std::vector<AblationVariant> default_ablation_suite() {
    return {
        {"No interaction", {{"interaction_schedule", "none"}}},
        {"Interaction in every other layer", {{"interaction_schedule", "every_other_layer"}}},
        {"No parameter sharing", {{"share_mint", "false"}}},
        {"M = 4", {{"m_fusion_layers", "4"}}},
        {"M = 6", {{"m_fusion_layers", "6"}}},
        {"M = 7", {{"m_fusion_layers", "7"}}},
        {"Interaction node connected to all nodes", {{"connectivity_mode", "all_nodes"}}},
        {"Random node initialization", {{"node_init_mode", "random_fixed"}}},
    };
}

namespace {

double train_once(RunConfig cfg, const Dataset& train, const Dataset& dev, uint64_t seed,
                  int threads) {
    cfg.seed = seed;
    cfg.validate();

    std::vector<std::string> texts;
    for (const auto* ds : {&train, &dev})
        for (const auto& ex : *ds) {
            texts.push_back(ex.context);
            texts.push_back(ex.question);
            for (const auto& c : ex.candidates) texts.push_back(c);
        }
    Vocabulary vocab = Vocabulary::build(texts);
    Dataset both = train;
    both.insert(both.end(), dev.begin(), dev.end());
    EntityRegistry registry = build_registry(both);

    auto prepared_train = prepare_dataset(train, vocab, registry, nullptr, cfg, threads);
    auto prepared_dev = prepare_dataset(dev, vocab, registry, nullptr, cfg, threads);

    auto mp = build_model<float>(cfg, vocab.size(), registry.size(), registry.n_relations);
    Trainer trainer(mp);
    TrainOptions opts;
    opts.threads = threads;
    auto log = trainer.fit(prepared_train, prepared_dev, opts);
    return log.empty() ? 0.0 : log.back().dev_acc;
}

}  // namespace

std::vector<AblationResult> run_ablation(const RunConfig& base,
                                         const std::vector<AblationVariant>& suite,
                                         const Dataset& train, const Dataset& dev,
                                         const std::vector<uint64_t>& seeds, int threads) {
    require(!seeds.empty(), "run_ablation: need at least one seed");
    std::vector<AblationVariant> rows;
    rows.push_back({"full", {}});
    rows.insert(rows.end(), suite.begin(), suite.end());

    std::vector<AblationResult> results;
    for (const auto& variant : rows) {
        RunConfig cfg = base;
        for (const auto& [k, v] : variant.deltas) apply_config_override(cfg, k, v);
        AblationResult res;
        res.label = variant.label;
        for (uint64_t s : seeds) res.accuracies.push_back(train_once(cfg, train, dev, s, threads));
        double sum = 0.0;
        for (double a : res.accuracies) sum += a;
        res.mean = sum / double(res.accuracies.size());
        double var = 0.0;
        for (double a : res.accuracies) var += (a - res.mean) * (a - res.mean);
        res.stddev = res.accuracies.size() > 1
                         ? std::sqrt(var / double(res.accuracies.size() - 1))
                         : 0.0;
        results.push_back(std::move(res));
    }
    return results;
}

std::string ablation_report_tsv(const std::vector<AblationResult>& results,
                                const std::vector<uint64_t>& seeds) {
    std::ostringstream os;
    os << "variant\tmean_acc\tstd\tseeds\n";
    std::string seed_list;
    for (size_t i = 0; i < seeds.size(); ++i)
        seed_list += (i ? "," : "") + cat(seeds[i]);
    os.precision(6);
    for (const auto& r : results)
        os << r.label << '\t' << r.mean << '\t' << r.stddev << '\t' << seed_list << '\n';
    return os.str();
}

}  // namespace kgqa
