#include "kgqa/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

namespace kgqa {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void Vocabulary::add(const std::string& token) {
    require(!index_.count(token), "vocab: duplicate token '", token, "'");
    index_[token] = int32_t(tokens_.size());
    tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus_texts) {
    Vocabulary v;
    v.add("[pad]");
    v.add("[sep]");
    v.add("[unk]");
    v.add("[int]");
    std::set<std::string> uniq;
    for (const auto& text : corpus_texts)
        for (auto& t : tokenize(text)) uniq.insert(t);
    for (const auto& t : uniq)
        if (!v.index_.count(t)) v.add(t);
    return v;
}

const std::string& Vocabulary::token(int32_t id) const {
    require(id >= 0 && id < size(), "vocab: id ", id, " out of range ", size());
    return tokens_[size_t(id)];
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    require(f.good(), "vocab: cannot write ", path);
    for (int32_t i = kNumSpecials; i < size(); ++i) f << tokens_[size_t(i)] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "vocab: cannot read ", path);
    Vocabulary v;
    v.add("[pad]");
    v.add("[sep]");
    v.add("[unk]");
    v.add("[int]");
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) v.add(line);
    }
    return v;
}

EncodedExample encode_input(const std::string& context, const std::string& question,
                            const std::string& answer, const Vocabulary& vocab, int max_tokens) {
    require(max_tokens >= 8, "encode_input: max_tokens must be >= 8, got ", max_tokens);
    auto c = tokenize(context);
    auto q = tokenize(question);
    auto a = tokenize(answer);
    require(!q.empty(), "encode_input: empty question");
    require(!a.empty(), "encode_input: empty answer");

    // fixed overhead: INT + 3 separators
    size_t fixed = 4 + q.size() + a.size();
    require(fixed <= size_t(max_tokens), "encode_input: question+answer need ", fixed,
            " tokens, budget is ", max_tokens);
    size_t c_keep = std::min(c.size(), size_t(max_tokens) - fixed);

    EncodedExample ex;
    auto push = [&](int32_t id, int32_t seg) {
        ex.token_ids.push_back(id);
        ex.segment_ids.push_back(seg);
        ex.not_pad.push_back(1);
    };
    push(kIntId, 0);
    for (size_t i = 0; i < c_keep; ++i) push(vocab.id(c[i]), 0);
    push(kSepId, 0);
    for (const auto& t : q) push(vocab.id(t), 0);
    push(kSepId, 0);
    for (const auto& t : a) push(vocab.id(t), 1);
    push(kSepId, 1);
    return ex;
}

}  // namespace kgqa
