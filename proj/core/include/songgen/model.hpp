#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "songgen/checkpoint.hpp"
#include "songgen/graph.hpp"
#include "songgen/optim.hpp"
#include "songgen/tensor.hpp"

namespace songgen {

struct ModelConfig {
    int input_width = 50;   // lyric encoding width
    int hidden = 128;
    int class_embed = 32;   // melody class ids enter the decoders through this table
    int lyric_vocab = 0;
    std::vector<int> pitch_classes;  // sorted distinct MIDI pitches
    bool tie_generator_encoder = false;

    void validate() const;
};

// Everything generation needs to recreate the model and refuse mismatched
// embedding files. Serialized into the checkpoint manifest blob.
struct ModelManifest {
    std::string scheme = "se";
    ModelConfig config;
    std::uint64_t syllable_vocab_hash = 0;
    std::uint64_t word_vocab_hash = 0;  // zero when the scheme ignores words
    std::vector<std::pair<int, int>> syllable_to_word;  // most frequent parent word per syllable id
    std::string config_echo;  // free-form training settings for the record

    std::string serialize() const;
    static ModelManifest parse(const std::string& text);
};

// One teacher-forced training sentence. The lyric stream may carry one more
// step than the melody streams when an end marker is appended to the targets.
struct SentenceExample {
    Tensor lyric_inputs;             // rows: begin-marker encoding, then syllable encodings
    std::vector<int> lyric_targets;  // one per lyric input row
    Tensor encoder_inputs;           // syllable encodings, one row per sung note
    std::vector<int> pitch_targets;
    std::vector<int> duration_targets;
    std::vector<int> rest_targets;
};

struct CellParams {
    Param* W = nullptr;
    Param* U = nullptr;
    Param* Wz = nullptr;
    Param* Uz = nullptr;
    Param* Wr = nullptr;
    Param* Ur = nullptr;
    // context projections; only decoder cells carry them
    Param* C = nullptr;
    Param* Cz = nullptr;
    Param* Cr = nullptr;
};

struct AttentionParams {
    Param* Wa = nullptr;
    Param* Ua = nullptr;
    Param* Va = nullptr;
};

struct HeadParams {
    CellParams cell;
    AttentionParams attention;
    Param* embed = nullptr;  // (classes + 1) rows; the extra row is the begin marker
    Param* out = nullptr;
    int num_classes = 0;

    int begin_id() const noexcept { return num_classes; }
};

struct SentenceForward {
    Value lyric_loss;    // summed over steps
    Value melody_loss;   // all three heads, summed over steps
    Value total;         // lyric_loss + melody_loss
    std::vector<Value> lyric_logits;
    std::vector<Value> pitch_logits;
    std::vector<Value> duration_logits;
    std::vector<Value> rest_logits;
    std::vector<Value> attention_weights;  // pitch head, one row per step
};

inline constexpr double kDefaultInitVariance = 0.02;

class Model {
public:
    Model(ModelConfig config, std::uint64_t init_seed, double init_variance = kDefaultInitVariance);
    explicit Model(const Checkpoint& ck);  // config comes from the manifest

    const ModelConfig& config() const noexcept { return config_; }
    const ModelManifest& manifest() const noexcept { return manifest_; }
    void set_manifest(ModelManifest m) { manifest_ = std::move(m); }

    ParameterStore& params() noexcept { return store_; }
    const ParameterStore& params() const noexcept { return store_; }

    const CellParams& generator() const noexcept { return generator_; }
    const CellParams& encoder() const noexcept { return encoder_; }
    const HeadParams& pitch_head() const noexcept { return pitch_; }
    const HeadParams& duration_head() const noexcept { return duration_; }
    const HeadParams& rest_head() const noexcept { return rest_; }
    Param& generator_out() const noexcept { return *gen_out_; }

    // Differentiable teacher-forced pass over one sentence.
    SentenceForward forward(Graph& g, const SentenceExample& ex) const;
    // Mean over the batch of per-sentence summed losses.
    Value batch_loss(Graph& g, std::span<const SentenceExample> batch) const;
    Value batch_loss(Graph& g, std::span<const SentenceExample* const> batch) const;

    // Gradient-free stepping, shared by inference and accuracy measurement.
    Tensor cell_step(const CellParams& cell, const Tensor& x, const Tensor& h_prev,
                     const Tensor* context) const;
    Tensor generator_logits(const Tensor& h) const;
    // Precomputed encoder-side attention term U_a h_j for every j.
    Tensor attention_precompute(const HeadParams& head, const Tensor& encoder_states) const;
    Tensor attention_context(const HeadParams& head, const Tensor& state, const Tensor& encoder_states,
                             const Tensor& precomputed, Tensor* weights_out = nullptr) const;
    Tensor head_input(const HeadParams& head, int class_id) const;  // throws on invalid id
    Tensor head_logits(const HeadParams& head, const Tensor& h) const;

    Tensor zero_state() const { return Tensor(1, config_.hidden); }

    Checkpoint to_checkpoint(std::int64_t step) const;

private:
    CellParams make_cell(const std::string& prefix, int input_width, bool with_context);
    HeadParams make_head(const std::string& prefix, int num_classes);
    void init_weights(std::uint64_t seed, double variance);
    void bind_from(const Checkpoint& ck);

    ModelConfig config_;
    ModelManifest manifest_;
    ParameterStore store_;
    CellParams generator_;
    CellParams encoder_;
    Param* gen_out_ = nullptr;
    HeadParams pitch_;
    HeadParams duration_;
    HeadParams rest_;
};

// argmax of logits == target, per stream, over teacher-forced steps.
struct StreamAccuracy {
    double lyric = 0.0;
    double pitch = 0.0;
    double duration = 0.0;
    double rest = 0.0;
};
StreamAccuracy teacher_forced_accuracy(const Model& model, std::span<const SentenceExample> examples);

}  // namespace songgen
