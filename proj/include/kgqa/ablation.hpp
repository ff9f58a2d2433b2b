#pragma once

#include <string>
#include <vector>

#include "kgqa/config.hpp"
#include "kgqa/data.hpp"

namespace kgqa {

// One ablation row: a label plus RunConfig deltas applied over the base.
struct AblationVariant {
    std::string label;
    std::vector<std::pair<std::string, std::string>> deltas;
};

// Suite file: one variant per line, "label<TAB>key=value[,key=value...]".
// Lines starting with '#' are comments; a repeated key within one line is a
// conflict error.
std::vector<AblationVariant> load_ablation_suite(const std::string& path);
std::vector<AblationVariant> parse_ablation_suite(const std::string& text);

// The default suite mirrors the standard component ablations: interaction
// removal/thinning, interaction-parameter sharing, fusion depth, interaction
// connectivity, and node-initialization source.
std::vector<AblationVariant> default_ablation_suite();

struct AblationResult {
    std::string label;
    std::vector<double> accuracies;  // one per seed
    double mean = 0.0;
    double stddev = 0.0;
};

// Trains base ("full") plus every variant for each seed and reports dev
// accuracy mean/std. Rows keep suite order with "full" first.
std::vector<AblationResult> run_ablation(const RunConfig& base,
                                         const std::vector<AblationVariant>& suite,
                                         const Dataset& train, const Dataset& dev,
                                         const std::vector<uint64_t>& seeds, int threads);

// TSV: header "variant\tmean_acc\tstd\tseeds", one row per variant.
std::string ablation_report_tsv(const std::vector<AblationResult>& results,
                                const std::vector<uint64_t>& seeds);

}  // namespace kgqa
