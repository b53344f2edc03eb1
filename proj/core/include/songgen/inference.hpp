#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "songgen/corpus.hpp"
#include "songgen/embedding.hpp"
#include "songgen/model.hpp"
#include "songgen/rng.hpp"

namespace songgen {

// argmax over a probability vector; ties break toward the lowest id.
int greedy_next(std::span<const double> probabilities);

// p_j^(1/tau) / sum_k p_k^(1/tau); tau in (0,1], tau = 1 is the identity.
std::vector<double> temperature_transform(std::span<const double> p, double tau);

enum class Strategy { greedy, temperature };

struct GenerationConfig {
    Strategy strategy = Strategy::greedy;
    double tau = 1.0;           // only consulted by the temperature strategy
    int target_syllables = 100;
    int max_sentence = 16;      // forces the sentence end marker beyond this
    std::uint64_t seed = 1;

    void validate() const;
    std::string echo() const;
};

struct GeneratedSentence {
    std::vector<std::string> syllables;
    std::vector<int> syllable_ids;
    std::vector<MelodyTriple> melody;  // parallel to syllables
};

struct GeneratedSong {
    std::vector<GeneratedSentence> sentences;
    std::string seed_echo;      // the seed (or user lyrics) exactly as supplied
    std::string config_echo;
    std::string checkpoint_id;
    int word_fallbacks = 0;  // generated syllables that reused their own vector as the word vector

    std::size_t syllable_count() const;
};

// Grouping: one word per syllable; sentence structure as generated.
SongRecord to_record(const GeneratedSong& song, std::string id);

std::string pitch_name(int midi);  // 60 -> "C4"
// One row per syllable: syllable | pitch name | duration | rest.
std::string render_score(const GeneratedSong& song);

// One independent generation run over shared immutable parameters. The lyric
// stream never resets between sentences (the end marker is fed back); melody
// composition re-encodes each finished sentence from a zero state, exactly as
// trained.
class GenerationSession {
public:
    // Refuses tables whose vocabulary hashes differ from the checkpoint manifest.
    GenerationSession(const Model& model, const EmbeddingTable& syllable_table,
                      const EmbeddingTable* word_table, GenerationConfig config);

    // Mode (i) lyric stream: consumes the seed, then emits token by token until
    // the target syllable count is reached at a sentence end. Returns sentences
    // of vocabulary ids; the seed occupies the head of the first sentence.
    std::vector<std::vector<int>> generate_lyrics(std::span<const std::string> seed_syllables);

    // Greedy triple decoding for one sentence; pitch, duration and rest heads
    // run to completion one after another.
    std::vector<MelodyTriple> compose_melody(std::span<const int> sentence_ids);

    GeneratedSong generate_song(std::span<const std::string> seed_syllables);  // mode (i)
    // Mode (ii): melody for human lyrics; the input text is echoed untouched.
    GeneratedSong harmonize(std::span<const std::vector<std::string>> sentences);

    int word_fallbacks() const noexcept { return word_fallbacks_; }

private:
    Tensor encoding_of(int token_id);
    int sample(const Tensor& logits, bool sentence_start);
    std::vector<int> map_seed(std::span<const std::string> seed_syllables) const;
    GeneratedSong finish(std::vector<std::vector<int>> sentences, std::string seed_echo);

    const Model* model_;
    const EmbeddingTable* syllables_;
    const EmbeddingTable* words_;
    GenerationConfig config_;
    EncodingScheme scheme_ = EncodingScheme::se;
    std::unordered_map<int, int> syllable_to_word_;
    std::string checkpoint_id_;
    Rng rng_;
    int word_fallbacks_ = 0;
};

}  // namespace songgen
