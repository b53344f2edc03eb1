#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "songgen/corpus.hpp"
#include "songgen/embedding.hpp"
#include "songgen/model.hpp"

namespace songgen {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double lr = 0.0001;
    int lr_decay_every = 10;  // epochs per linear decay stage
    double lr_floor = 1e-6;
    double init_variance = 0.02;
    double clip_norm = 5.0;  // zero or negative disables clipping
    double val_fraction = 0.05;
    double test_fraction = 0.05;
    bool tie_generator_encoder = false;
    std::uint64_t seed = 1;

    void validate() const;
    std::string echo() const;  // one-line summary stored in the manifest
};

// Deterministic by-song split; fractions round down, training keeps the rest.
struct DatasetSplit {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};
DatasetSplit split_by_song(int song_count, double val_fraction, double test_fraction,
                           std::uint64_t seed);

// Sorted distinct MIDI pitches across the records.
std::vector<int> pitch_class_set(std::span<const SongRecord> records);
int pitch_class_index(std::span<const int> classes, int pitch);  // throws when absent

// Encoding row for a reserved token (begin/end markers share the embedding
// rows the tables carry for them).
Tensor reserved_encoding(int token_id, EncodingScheme scheme, const EmbeddingTable& syllable_table,
                         const EmbeddingTable* word_table);

// One example per sentence. Lyric targets get the end marker appended when
// append_end_marker is set; melody streams always span the sung notes.
std::vector<SentenceExample> build_examples(std::span<const SongRecord> records,
                                            EncodingScheme scheme,
                                            const EmbeddingTable& syllable_table,
                                            const EmbeddingTable* word_table,
                                            std::span<const int> pitch_classes,
                                            bool append_end_marker = true);

ModelManifest compose_manifest(EncodingScheme scheme, const ModelConfig& config,
                               const EmbeddingTable& syllable_table, const EmbeddingTable* word_table,
                               std::span<const SongRecord> records, std::string config_echo);

struct EpochStats {
    int epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN without a validation set
};

struct TrainResult {
    std::vector<EpochStats> curve;
    Checkpoint best;  // lowest monitored loss; initial weights if nothing completed
    int best_epoch = 0;
    double best_loss = 0.0;
    bool diverged = false;
};

class Trainer {
public:
    Trainer(Model& model, TrainConfig config);

    double epoch_lr(int epoch) const;  // 0-based epoch
    TrainResult run(std::span<const SentenceExample> train, std::span<const SentenceExample> val);
    // Mean per-sentence loss without updating anything; NaN for an empty set.
    double dataset_loss(std::span<const SentenceExample> examples);

private:
    Model* model_;
    TrainConfig config_;
};

// End-to-end convenience shared by the command line tools and tests: splits,
// builds the model and examples, trains, and stamps the manifest.
struct TrainOutcome {
    TrainResult result;
    DatasetSplit split;
    double test_loss = 0.0;  // NaN without a test set
};
TrainOutcome train_song_model(Model& model, std::span<const SongRecord> records,
                              EncodingScheme scheme, const EmbeddingTable& syllable_table,
                              const EmbeddingTable* word_table, const TrainConfig& config);

// Builds the model itself (widths from the scheme and tables) then trains.
struct BuiltModel {
    Model model;
    TrainOutcome outcome;
};
BuiltModel build_and_train(std::span<const SongRecord> records, EncodingScheme scheme,
                           const EmbeddingTable& syllable_table, const EmbeddingTable* word_table,
                           const TrainConfig& config);

}  // namespace songgen
