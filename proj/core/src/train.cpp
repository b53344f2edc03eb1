#include "songgen/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "songgen/log.hpp"
#include "songgen/rng.hpp"

namespace songgen {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0) fail("epochs must not be negative");
    if (batch_size < 1) fail("batch size must be at least 1");
    if (!(lr >= 0.0)) fail("learning rate must not be negative");
    if (lr_decay_every < 1) fail("lr decay interval must be at least 1 epoch");
    if (!(lr_floor >= 0.0)) fail("lr floor must not be negative");
    if (!(init_variance > 0.0)) fail("init variance must be positive");
    if (!(val_fraction >= 0.0) || val_fraction > 0.45 || !(test_fraction >= 0.0) ||
        test_fraction > 0.45)
        fail("holdout fractions must lie in [0, 0.45]");
}

std::string TrainConfig::echo() const {
    std::ostringstream out;
    out << "epochs=" << epochs << " batch_size=" << batch_size << " lr=" << lr
        << " lr_decay_every=" << lr_decay_every << " lr_floor=" << lr_floor
        << " init_variance=" << init_variance << " clip_norm=" << clip_norm
        << " val_fraction=" << val_fraction << " test_fraction=" << test_fraction
        << " tie_generator_encoder=" << (tie_generator_encoder ? 1 : 0) << " seed=" << seed;
    return out.str();
}

DatasetSplit split_by_song(int song_count, double val_fraction, double test_fraction,
                           std::uint64_t seed) {
    if (song_count < 0) fail("song count must not be negative");
    std::vector<int> order(static_cast<std::size_t>(song_count));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::for_component(seed, "song-split");
    rng.shuffle(order);
    const int val_count = static_cast<int>(song_count * val_fraction);
    const int test_count = static_cast<int>(song_count * test_fraction);
    DatasetSplit split;
    split.val.assign(order.begin(), order.begin() + val_count);
    split.test.assign(order.begin() + val_count, order.begin() + val_count + test_count);
    split.train.assign(order.begin() + val_count + test_count, order.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

std::vector<int> pitch_class_set(std::span<const SongRecord> records) {
    std::set<int> seen;
    for (const SongRecord& rec : records)
        for (const MelodyTriple& m : rec.melody) seen.insert(m.pitch);
    return {seen.begin(), seen.end()};
}

int pitch_class_index(std::span<const int> classes, int pitch) {
    auto it = std::lower_bound(classes.begin(), classes.end(), pitch);
    if (it == classes.end() || *it != pitch)
        fail("pitch " + std::to_string(pitch) + " is not in the model's pitch class set");
    return static_cast<int>(it - classes.begin());
}

Tensor reserved_encoding(int token_id, EncodingScheme scheme, const EmbeddingTable& syllable_table,
                         const EmbeddingTable* word_table) {
    if (scheme != EncodingScheme::se && word_table == nullptr)
        fail("scheme requires a word embedding table");
    if (token_id < 0 || token_id >= Vocabulary::kReserved)
        fail("reserved_encoding expects a reserved token id");
    Tensor row(1, encoding_width(scheme, syllable_table.dimension()));
    std::span<const double> vs = syllable_table.vector_of(token_id);
    std::span<const double> vw =
        word_table ? word_table->vector_of(token_id) : std::span<const double>{};
    encode_token(scheme, vs, vw, {row.data(), static_cast<std::size_t>(row.cols())});
    return row;
}

std::vector<SentenceExample> build_examples(std::span<const SongRecord> records,
                                            EncodingScheme scheme,
                                            const EmbeddingTable& syllable_table,
                                            const EmbeddingTable* word_table,
                                            std::span<const int> pitch_classes,
                                            bool append_end_marker) {
    const Vocabulary& vocab = syllable_table.vocab();
    const Tensor begin = reserved_encoding(Vocabulary::kBos, scheme, syllable_table, word_table);
    const int width = begin.cols();
    std::vector<SentenceExample> out;
    for (const SongRecord& rec : records) {
        LyricEncoding enc = encode_lyrics(rec, scheme, syllable_table, word_table);
        for (const std::vector<int>& sentence : rec.sentences) {
            std::vector<int> sidx;
            for (int w : sentence)
                sidx.insert(sidx.end(), rec.words[w].begin(), rec.words[w].end());
            if (sidx.empty()) continue;
            const int steps = static_cast<int>(sidx.size());

            SentenceExample ex;
            ex.encoder_inputs = Tensor(steps, width);
            std::vector<int> ids(sidx.size());
            for (int t = 0; t < steps; ++t) {
                ids[t] = vocab.id_of(rec.syllables[sidx[t]].text);
                for (int k = 0; k < width; ++k)
                    ex.encoder_inputs.at(t, k) = enc.vectors.at(sidx[t], k);
            }

            const int lyric_steps = append_end_marker ? steps + 1 : steps;
            ex.lyric_inputs = Tensor(lyric_steps, width);
            for (int k = 0; k < width; ++k) ex.lyric_inputs.at(0, k) = begin.at(0, k);
            for (int t = 1; t < lyric_steps; ++t)
                for (int k = 0; k < width; ++k)
                    ex.lyric_inputs.at(t, k) = ex.encoder_inputs.at(t - 1, k);
            ex.lyric_targets = ids;
            if (append_end_marker) ex.lyric_targets.push_back(Vocabulary::kEos);

            ex.pitch_targets.resize(sidx.size());
            ex.duration_targets.resize(sidx.size());
            ex.rest_targets.resize(sidx.size());
            for (int t = 0; t < steps; ++t) {
                const MelodyTriple& m = rec.melody[sidx[t]];
                ex.pitch_targets[t] = pitch_class_index(pitch_classes, m.pitch);
                ex.duration_targets[t] = duration_class_index(m.duration);
                ex.rest_targets[t] = rest_class_index(m.rest);
            }
            out.push_back(std::move(ex));
        }
    }
    return out;
}

ModelManifest compose_manifest(EncodingScheme scheme, const ModelConfig& config,
                               const EmbeddingTable& syllable_table, const EmbeddingTable* word_table,
                               std::span<const SongRecord> records, std::string config_echo) {
    ModelManifest m;
    m.scheme = std::string(scheme_name(scheme));
    m.config = config;
    m.syllable_vocab_hash = syllable_table.vocab().content_hash();
    m.word_vocab_hash = word_table ? word_table->vocab().content_hash() : 0;
    m.config_echo = std::move(config_echo);
    if (word_table) {
        std::map<int, std::map<int, std::int64_t>> counts;
        for (const SongRecord& rec : records)
            for (const SyllableToken& syl : rec.syllables) {
                int sid = syllable_table.vocab().id_of(syl.text);
                int wid = word_table->vocab().id_of(word_text(rec, syl.word_index));
                ++counts[sid][wid];
            }
        for (const auto& [sid, by_word] : counts) {
            int best = -1;
            std::int64_t best_count = -1;
            for (const auto& [wid, n] : by_word)
                if (n > best_count) {
                    best = wid;
                    best_count = n;
                }
            m.syllable_to_word.emplace_back(sid, best);
        }
    }
    return m;
}

Trainer::Trainer(Model& model, TrainConfig config) : model_(&model), config_(std::move(config)) {
    config_.validate();
}

double Trainer::epoch_lr(int epoch) const {
    if (config_.lr <= 0.0) return 0.0;
    const int stages = std::max(1, (config_.epochs + config_.lr_decay_every - 1) / config_.lr_decay_every);
    const int stage = std::min(epoch / config_.lr_decay_every, stages - 1);
    const double lr = config_.lr * (1.0 - static_cast<double>(stage) / static_cast<double>(stages));
    return std::max(lr, std::min(config_.lr_floor, config_.lr));
}

double Trainer::dataset_loss(std::span<const SentenceExample> examples) {
    if (examples.empty()) return kNan;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t start = 0; start < examples.size(); start += config_.batch_size) {
        const std::size_t count = std::min<std::size_t>(config_.batch_size, examples.size() - start);
        Graph g;
        Value loss = model_->batch_loss(g, examples.subspan(start, count));
        sum += loss.item() * static_cast<double>(count);
        n += count;
    }
    return sum / static_cast<double>(n);
}

TrainResult Trainer::run(std::span<const SentenceExample> train,
                         std::span<const SentenceExample> val) {
    if (train.empty()) fail("training needs at least one sentence");
    TrainResult res;
    res.best = model_->to_checkpoint(0);
    res.best_loss = kNan;
    double best_seen = std::numeric_limits<double>::infinity();

    Adam adam(model_->params(), AdamConfig{.lr = config_.lr});
    Rng rng = Rng::for_component(config_.seed, "train-shuffle");
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
        const double lr = epoch_lr(epoch);
        adam.set_lr(lr);
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
            const std::size_t count = std::min<std::size_t>(config_.batch_size, order.size() - start);
            std::vector<const SentenceExample*> batch(count);
            for (std::size_t i = 0; i < count; ++i) batch[i] = &train[order[start + i]];
            try {
                Graph g;
                Value loss = model_->batch_loss(g, batch);
                const double lv = loss.item();
                model_->params().zero_grads();
                g.backward(loss);
                if (config_.clip_norm > 0.0) model_->params().clip_grad_norm(config_.clip_norm);
                adam.step();
                loss_sum += lv * static_cast<double>(count);
                seen += count;
            } catch (const std::runtime_error& e) {
                log_warn("training stopped in epoch ", epoch + 1, ": ", e.what(),
                         "; keeping the last good checkpoint");
                res.diverged = true;
                return res;
            }
        }

        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.lr = lr;
        stats.train_loss = loss_sum / static_cast<double>(seen);
        stats.val_loss = dataset_loss(val);
        res.curve.push_back(stats);

        const double monitored = val.empty() ? stats.train_loss : stats.val_loss;
        if (std::isfinite(monitored) && monitored < best_seen) {
            best_seen = monitored;
            res.best = model_->to_checkpoint(adam.steps_taken());
            res.best_epoch = stats.epoch;
            res.best_loss = monitored;
        }
        log_info("epoch ", stats.epoch, "/", config_.epochs, " lr=", lr,
                 " train_loss=", stats.train_loss, " val_loss=", stats.val_loss);
    }
    return res;
}

TrainOutcome train_song_model(Model& model, std::span<const SongRecord> records,
                              EncodingScheme scheme, const EmbeddingTable& syllable_table,
                              const EmbeddingTable* word_table, const TrainConfig& config) {
    config.validate();
    if (records.empty()) fail("corpus has no songs");

    TrainOutcome out;
    out.split = split_by_song(static_cast<int>(records.size()), config.val_fraction,
                              config.test_fraction, config.seed);
    auto gather = [&](const std::vector<int>& idx) {
        std::vector<SongRecord> subset;
        subset.reserve(idx.size());
        for (int i : idx) subset.push_back(records[i]);
        return subset;
    };
    const std::vector<SongRecord> train_songs = gather(out.split.train);
    const std::vector<SongRecord> val_songs = gather(out.split.val);
    const std::vector<SongRecord> test_songs = gather(out.split.test);

    const std::vector<int>& classes = model.config().pitch_classes;
    const auto train_ex = build_examples(train_songs, scheme, syllable_table, word_table, classes);
    const auto val_ex = build_examples(val_songs, scheme, syllable_table, word_table, classes);
    const auto test_ex = build_examples(test_songs, scheme, syllable_table, word_table, classes);

    model.set_manifest(
        compose_manifest(scheme, model.config(), syllable_table, word_table, records, config.echo()));

    Trainer trainer(model, config);
    out.result = trainer.run(train_ex, val_ex);
    out.test_loss = trainer.dataset_loss(test_ex);
    return out;
}

BuiltModel build_and_train(std::span<const SongRecord> records, EncodingScheme scheme,
                           const EmbeddingTable& syllable_table, const EmbeddingTable* word_table,
                           const TrainConfig& config) {
    config.validate();
    if (records.empty()) fail("corpus has no songs");
    ModelConfig mc;
    mc.input_width = encoding_width(scheme, syllable_table.dimension());
    mc.lyric_vocab = syllable_table.vocab().size();
    mc.pitch_classes = pitch_class_set(records);
    mc.tie_generator_encoder = config.tie_generator_encoder;
    Model model(mc, config.seed, config.init_variance);
    TrainOutcome outcome = train_song_model(model, records, scheme, syllable_table, word_table, config);
    return BuiltModel{std::move(model), std::move(outcome)};
}

}  // namespace songgen
