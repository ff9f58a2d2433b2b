#pragma once

#include <array>
#include <string>
#include <vector>

#include "kgqa/model.hpp"

namespace kgqa {

// Word lists for the stratified report; matching is case-insensitive whole-
// word over the question text.
struct TermLists {
    std::vector<std::string> negation{"no", "not", "never"};
    std::vector<std::string> hedge{"sometimes", "maybe"};
    std::vector<std::string> prepositions{"in",   "on",      "at",    "by",      "for",
                                          "with", "from",    "to",    "of",      "about",
                                          "into", "over",    "under", "after",   "before",
                                          "between", "through", "during", "against", "near"};
};

struct BucketStat {
    int n = 0;
    int correct = 0;
    double accuracy() const { return n == 0 ? 0.0 : double(correct) / n; }
};

struct EvalReport {
    int n = 0;
    int correct = 0;
    double accuracy = 0.0;
    BucketStat negation_present, negation_absent;
    BucketStat hedge_present, hedge_absent;
    std::array<BucketStat, 5> preposition_buckets;  // counts 0,1,2,3,4+

    std::string to_json() const;
};

int count_matches(const std::string& text, const std::vector<std::string>& terms);

EvalReport evaluate_dataset(ModelParams& mp, const std::vector<PreparedExample>& prepared,
                            const Dataset& raw, const TermLists& terms, int threads);

}  // namespace kgqa
