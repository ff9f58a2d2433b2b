#include "kgqa/evaluate.hpp"

#include <algorithm>

#include <json.hpp>

#include "kgqa/threadpool.hpp"
#include "kgqa/trainer.hpp"
#include "kgqa/vocab.hpp"

namespace kgqa {

using nlohmann::json;

int count_matches(const std::string& text, const std::vector<std::string>& terms) {
    int count = 0;
    for (const auto& tok : tokenize(text))
        if (std::find(terms.begin(), terms.end(), tok) != terms.end()) ++count;
    return count;
}

EvalReport evaluate_dataset(ModelParams& mp, const std::vector<PreparedExample>& prepared,
                            const Dataset& raw, const TermLists& terms, int threads) {
    require(prepared.size() == raw.size(), "evaluate: prepared size ", prepared.size(),
            " vs raw size ", raw.size());
    std::vector<uint8_t> hit(prepared.size(), 0);
    parallel_for(threads, int(prepared.size()), [&](int i) {
        auto logits = example_logits(mp, prepared[size_t(i)]);
        hit[size_t(i)] = predict_index(logits) == prepared[size_t(i)].label ? 1 : 0;
    });

    EvalReport rep;
    for (size_t i = 0; i < raw.size(); ++i) {
        bool ok = hit[i] != 0;
        rep.n += 1;
        rep.correct += ok ? 1 : 0;
        const auto& q = raw[i].question;
        auto& neg = count_matches(q, terms.negation) > 0 ? rep.negation_present
                                                         : rep.negation_absent;
        neg.n += 1;
        neg.correct += ok ? 1 : 0;
        auto& hed = count_matches(q, terms.hedge) > 0 ? rep.hedge_present : rep.hedge_absent;
        hed.n += 1;
        hed.correct += ok ? 1 : 0;
        int preps = std::min(count_matches(q, terms.prepositions), 4);
        rep.preposition_buckets[size_t(preps)].n += 1;
        rep.preposition_buckets[size_t(preps)].correct += ok ? 1 : 0;
    }
    rep.accuracy = rep.n == 0 ? 0.0 : double(rep.correct) / rep.n;
    return rep;
}

std::string EvalReport::to_json() const {
    auto bucket = [](const BucketStat& b) {
        return json{{"n", b.n}, {"correct", b.correct}, {"accuracy", b.accuracy()}};
    };
    json j;
    j["n"] = n;
    j["correct"] = correct;
    j["accuracy"] = accuracy;
    j["negation"] = {{"present", bucket(negation_present)}, {"absent", bucket(negation_absent)}};
    j["hedge"] = {{"present", bucket(hedge_present)}, {"absent", bucket(hedge_absent)}};
    json preps = json::array();
    for (size_t i = 0; i < preposition_buckets.size(); ++i)
        preps.push_back(
            {{"count", i == 4 ? "4+" : cat(i)}, {"stats", bucket(preposition_buckets[i])}});
    j["prepositions"] = preps;
    return j.dump(2);
}

}  // namespace kgqa
