#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgqa/common.hpp"

namespace kgqa {

// Whitespace tokenizer with lowercase normalization.
std::vector<std::string> tokenize(const std::string& text);

// Token ids are dense; the four specials occupy fixed slots 0..3.
inline constexpr int32_t kPadId = 0;
inline constexpr int32_t kSepId = 1;
inline constexpr int32_t kUnkId = 2;
inline constexpr int32_t kIntId = 3;  // interaction token
inline constexpr int32_t kNumSpecials = 4;

class Vocabulary {
public:
    Vocabulary() = default;

    // Sorted unique tokens after the specials; deterministic for a given set.
    static Vocabulary build(const std::vector<std::string>& corpus_texts);

    int32_t id(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnkId : it->second;
    }
    const std::string& token(int32_t id) const;
    int32_t size() const { return int32_t(tokens_.size()); }

    // File format: one token per line; line number = id - kNumSpecials.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    void add(const std::string& token);

    std::vector<std::string> tokens_;  // includes specials at 0..3
    std::unordered_map<std::string, int32_t> index_;
};

// Token sequence for [c;q;a] with the interaction token prepended:
//   [INT, c..., SEP, q..., SEP, a..., SEP]
// Segment ids: context+question 0, answer (and its trailing SEP) 1.
struct EncodedExample {
    std::vector<int32_t> token_ids;
    std::vector<int32_t> segment_ids;
    std::vector<uint8_t> not_pad;  // 1 for real positions (no PAD is ever emitted here)
};

// Truncates from the context end first; question and answer are always kept
// whole. Empty question or answer is an error; a too-long question+answer is
// an error as well.
EncodedExample encode_input(const std::string& context, const std::string& question,
                            const std::string& answer, const Vocabulary& vocab, int max_tokens);

}  // namespace kgqa
