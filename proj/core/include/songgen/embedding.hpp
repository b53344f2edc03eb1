#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "songgen/corpus.hpp"
#include "songgen/rng.hpp"
#include "songgen/tensor.hpp"

namespace songgen {

struct SkipGramConfig {
    int dimension = 50;
    int window = 7;
    int negatives = 5;
    double alpha = 0.75;
    double initial_lr = 0.03;
    double final_lr = 0.0007;
    int epochs = 5;

    void validate() const;  // throws std::invalid_argument on bad fields
};

// p(s) = f(s)^alpha / sum f^alpha
std::vector<double> noise_distribution(std::span<const std::int64_t> frequencies, double alpha);

struct TokenPair {
    int center = 0;
    int context = 0;
    bool operator==(const TokenPair&) const = default;
};

// All (center, context) pairs within the window; never crosses the sequence ends.
std::vector<TokenPair> context_pairs(std::span<const int> sentence, int window);

// proj_w(s) = (s.w / |w|^2) w; a zero w yields the zero vector.
std::vector<double> project(std::span<const double> s, std::span<const double> w);

class EmbeddingTable {
public:
    EmbeddingTable(Vocabulary vocab, int dimension);

    const Vocabulary& vocab() const noexcept { return vocab_; }
    int dimension() const noexcept { return dimension_; }
    Tensor& input() noexcept { return input_; }
    const Tensor& input() const noexcept { return input_; }
    Tensor& output() noexcept { return output_; }
    const Tensor& output() const noexcept { return output_; }

    // Downstream lookups read the input matrix.
    std::span<const double> vector_of(int token) const { return input_.row_span(token); }

private:
    Vocabulary vocab_;
    int dimension_;
    Tensor input_;
    Tensor output_;
};

class SkipGramTrainer {
public:
    SkipGramTrainer(const Vocabulary& vocab, SkipGramConfig config, std::uint64_t seed);

    // Eq-style objective log s(v_O.v_I) + sum_j log s(-v_j.v_I) for fixed negatives.
    double pair_objective(int center, int context, std::span<const int> negatives) const;
    // One ascent step on that objective; all vectors step from their pre-update values.
    void sgd_pair(int center, int context, std::span<const int> negatives, double lr);

    std::vector<int> draw_negatives(int context);
    double epoch_lr(int epoch) const;

    // Sentences are token-id sequences; reserved ids never appear in them.
    void train(std::span<const std::vector<int>> sentences);

    const EmbeddingTable& table() const noexcept { return table_; }
    EmbeddingTable take_table() { return std::move(table_); }

private:
    SkipGramConfig config_;
    EmbeddingTable table_;
    std::vector<double> noise_cdf_;   // over noise_support_
    std::vector<int> noise_support_;  // token ids with positive frequency
    Rng rng_;
};

// Token-id sentences for skip-gram training, one per corpus sentence in
// corpus order; tokens the vocabulary maps to UNK are dropped, as are
// sentences left empty by that.
std::vector<std::vector<int>> token_sentences(std::span<const SongRecord> records,
                                              const Vocabulary& vocab, TokenLevel level);

enum class EncodingScheme { se, swc, asw, cswp };

EncodingScheme scheme_from_name(std::string_view name);  // "se","swc","asw","cswp"
std::string_view scheme_name(EncodingScheme scheme);
int encoding_width(EncodingScheme scheme, int dimension);

// Writes the per-token row for one syllable/word vector pair.
void encode_token(EncodingScheme scheme, std::span<const double> v_syllable, std::span<const double> v_word,
                  std::span<double> out);

struct LyricEncoding {
    EncodingScheme scheme = EncodingScheme::se;
    Tensor vectors;  // one row per syllable
    int oov_syllables = 0;
    int oov_words = 0;
};

// word_table may be null for SE only.
LyricEncoding encode_lyrics(const SongRecord& rec, EncodingScheme scheme, const EmbeddingTable& syllable_table,
                            const EmbeddingTable* word_table);

// Text file: header, "vocab dimension" line, then token/frequency/input-vector
// lines. The binary twin additionally restores the output matrix bit-exactly.
void save_embedding_text(const std::string& path, const EmbeddingTable& table);
EmbeddingTable load_embedding_text(const std::string& path);
void save_embedding_binary(const std::string& path, const EmbeddingTable& table);
EmbeddingTable load_embedding_binary(const std::string& path);

}  // namespace songgen
