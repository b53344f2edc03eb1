#include "songgen/inference.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "songgen/log.hpp"

namespace songgen {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

constexpr int kRepeatLimit = 16;  // identical tokens in a row before the sentence is cut

}  // namespace

int greedy_next(std::span<const double> probabilities) {
    if (probabilities.empty()) fail("greedy_next needs a non-empty distribution");
    std::size_t best = 0;
    for (std::size_t i = 1; i < probabilities.size(); ++i)
        if (probabilities[i] > probabilities[best]) best = i;
    return static_cast<int>(best);
}

std::vector<double> temperature_transform(std::span<const double> p, double tau) {
    if (!(tau > 0.0) || tau > 1.0) fail("temperature must lie in (0, 1]");
    if (p.empty()) fail("temperature_transform needs a non-empty distribution");
    std::vector<double> out(p.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0.0)) fail("probabilities must be non-negative");
        out[i] = p[i] == 0.0 ? 0.0 : std::pow(p[i], 1.0 / tau);
        sum += out[i];
    }
    if (!(sum > 0.0)) fail("temperature_transform needs positive probability mass");
    for (double& v : out) v /= sum;
    return out;
}

void GenerationConfig::validate() const {
    if (target_syllables < 1) fail("target length must be at least one syllable");
    if (max_sentence < 1) fail("max sentence length must be at least 1");
    if (strategy == Strategy::temperature && (!(tau > 0.0) || tau > 1.0))
        fail("temperature must lie in (0, 1]");
}

std::string GenerationConfig::echo() const {
    std::ostringstream out;
    out << "strategy=" << (strategy == Strategy::greedy ? "greedy" : "temperature");
    if (strategy == Strategy::temperature) out << " tau=" << tau;
    out << " target_syllables=" << target_syllables << " max_sentence=" << max_sentence
        << " seed=" << seed;
    return out.str();
}

std::size_t GeneratedSong::syllable_count() const {
    std::size_t n = 0;
    for (const GeneratedSentence& s : sentences) n += s.syllables.size();
    return n;
}

SongRecord to_record(const GeneratedSong& song, std::string id) {
    SongRecord rec;
    rec.id = std::move(id);
    for (std::size_t s = 0; s < song.sentences.size(); ++s) {
        const GeneratedSentence& sentence = song.sentences[s];
        std::vector<int> word_ids;
        for (std::size_t i = 0; i < sentence.syllables.size(); ++i) {
            const int word = static_cast<int>(rec.words.size());
            rec.syllables.push_back({sentence.syllables[i], word, static_cast<int>(s)});
            rec.melody.push_back(sentence.melody[i]);
            rec.words.push_back({static_cast<int>(rec.syllables.size()) - 1});
            word_ids.push_back(word);
        }
        rec.sentences.push_back(std::move(word_ids));
    }
    validate_record(rec);
    return rec;
}

std::string pitch_name(int midi) {
    if (midi < 0 || midi > 127) fail("MIDI pitch out of range: " + std::to_string(midi));
    static const char* names[12] = {"C",  "C#", "D",  "D#", "E",  "F",
                                    "F#", "G",  "G#", "A",  "A#", "B"};
    return std::string(names[midi % 12]) + std::to_string(midi / 12 - 1);
}

std::string render_score(const GeneratedSong& song) {
    std::ostringstream out;
    bool first = true;
    for (const GeneratedSentence& sentence : song.sentences) {
        if (!first) out << '\n';
        first = false;
        for (std::size_t i = 0; i < sentence.syllables.size(); ++i) {
            const MelodyTriple& m = sentence.melody[i];
            out << sentence.syllables[i] << " | " << pitch_name(m.pitch) << " | "
                << format_beats(m.duration) << " | " << format_beats(m.rest) << '\n';
        }
    }
    return out.str();
}

GenerationSession::GenerationSession(const Model& model, const EmbeddingTable& syllable_table,
                                     const EmbeddingTable* word_table, GenerationConfig config)
    : model_(&model),
      syllables_(&syllable_table),
      words_(word_table),
      config_(std::move(config)),
      rng_(Rng::for_component(config_.seed, "generation")) {
    config_.validate();
    const ModelManifest& manifest = model.manifest();
    scheme_ = scheme_from_name(manifest.scheme);
    const EncodingScheme scheme = scheme_;
    if (scheme != EncodingScheme::se && words_ == nullptr)
        fail("checkpoint scheme '" + manifest.scheme + "' needs a word embedding table");
    if (manifest.syllable_vocab_hash != syllables_->vocab().content_hash())
        fail("syllable embeddings do not match the checkpoint (vocabulary hash mismatch)");
    if (words_ && manifest.word_vocab_hash != 0 &&
        manifest.word_vocab_hash != words_->vocab().content_hash())
        fail("word embeddings do not match the checkpoint (vocabulary hash mismatch)");
    if (encoding_width(scheme, syllables_->dimension()) != model.config().input_width)
        fail("embedding width does not match the checkpoint");
    if (syllables_->vocab().size() != model.config().lyric_vocab)
        fail("syllable vocabulary size does not match the checkpoint");
    for (const auto& [sid, wid] : manifest.syllable_to_word) syllable_to_word_[sid] = wid;

    char buf[32];
    std::snprintf(buf, sizeof buf, "ck-%016llx",
                  static_cast<unsigned long long>(fnv1a64(manifest.serialize())));
    checkpoint_id_ = buf;
}

Tensor GenerationSession::encoding_of(int token_id) {
    const EncodingScheme scheme = scheme_;
    Tensor row(1, model_->config().input_width);
    std::span<const double> vs = syllables_->vector_of(token_id);
    std::span<const double> vw;
    if (scheme != EncodingScheme::se) {
        if (token_id < Vocabulary::kReserved) {
            vw = words_->vector_of(token_id);
        } else if (auto it = syllable_to_word_.find(token_id); it != syllable_to_word_.end()) {
            vw = words_->vector_of(it->second);
        } else {
            vw = vs;  // unseen pairing: the syllable stands in for its word
            ++word_fallbacks_;
        }
    }
    encode_token(scheme, vs, vw, {row.data(), static_cast<std::size_t>(row.cols())});
    return row;
}

int GenerationSession::sample(const Tensor& logits, bool sentence_start) {
    Tensor probs = ops::softmax(logits);
    std::vector<double> p(probs.values());
    p[Vocabulary::kPad] = 0.0;
    p[Vocabulary::kBos] = 0.0;
    if (sentence_start) p[Vocabulary::kEos] = 0.0;  // sentences are never empty
    double sum = 0.0;
    for (double v : p) sum += v;
    if (!(sum > 0.0)) fail("no probability mass left after masking reserved tokens");
    for (double& v : p) v /= sum;
    if (config_.strategy == Strategy::greedy) return greedy_next(p);
    const std::vector<double> frozen = temperature_transform(p, config_.tau);
    const double u = rng_.uniform();
    double cum = 0.0;
    int last_positive = 0;
    for (std::size_t i = 0; i < frozen.size(); ++i) {
        if (frozen[i] <= 0.0) continue;
        last_positive = static_cast<int>(i);
        cum += frozen[i];
        if (u < cum) return static_cast<int>(i);
    }
    return last_positive;
}

std::vector<int> GenerationSession::map_seed(std::span<const std::string> seed_syllables) const {
    const Vocabulary& vocab = syllables_->vocab();
    std::vector<int> ids;
    int oov = 0;
    for (const std::string& raw : seed_syllables) {
        const std::string norm = normalize_syllable(raw);
        if (norm.empty()) continue;
        const int id = vocab.id_of(norm);
        if (id == Vocabulary::kUnk) ++oov;
        ids.push_back(id);
    }
    if (ids.empty()) fail("seed is empty after normalization");
    if (oov == static_cast<int>(ids.size()))
        log_warn("every seed syllable is out of vocabulary; continuing with UNK");
    return ids;
}

std::vector<std::vector<int>> GenerationSession::generate_lyrics(
    std::span<const std::string> seed_syllables) {
    const std::vector<int> seed = map_seed(seed_syllables);

    Tensor h = model_->zero_state();
    h = model_->cell_step(model_->generator(), encoding_of(Vocabulary::kBos), h, nullptr);
    for (int id : seed) h = model_->cell_step(model_->generator(), encoding_of(id), h, nullptr);

    const std::size_t target = static_cast<std::size_t>(config_.target_syllables);
    const std::size_t cap = 4 * target;
    std::vector<std::vector<int>> sentences;
    std::vector<int> sentence = seed;
    std::size_t total = seed.size();
    int last_id = -1;
    int run_len = 0;

    while (true) {
        const bool force_end = static_cast<int>(sentence.size()) >= config_.max_sentence ||
                               run_len >= kRepeatLimit || total >= cap;
        int id;
        if (force_end)
            id = Vocabulary::kEos;
        else
            id = sample(model_->generator_logits(h), sentence.empty());
        h = model_->cell_step(model_->generator(), encoding_of(id), h, nullptr);
        if (id == Vocabulary::kEos) {
            if (!sentence.empty()) sentences.push_back(std::move(sentence));
            sentence.clear();
            last_id = -1;
            run_len = 0;
            if (total >= target || total >= cap) break;
        } else {
            run_len = id == last_id ? run_len + 1 : 1;
            last_id = id;
            sentence.push_back(id);
            ++total;
        }
    }
    return sentences;
}

std::vector<MelodyTriple> GenerationSession::compose_melody(std::span<const int> sentence_ids) {
    if (sentence_ids.empty()) fail("compose_melody needs a non-empty sentence");
    const int steps = static_cast<int>(sentence_ids.size());
    const int width = model_->config().input_width;

    Tensor rows(steps, width);
    for (int t = 0; t < steps; ++t) {
        Tensor row = encoding_of(sentence_ids[static_cast<std::size_t>(t)]);
        for (int k = 0; k < width; ++k) rows.at(t, k) = row.at(0, k);
    }

    // teacher-forced generator pass seeds the encoder, exactly as in training
    Tensor h = model_->zero_state();
    h = model_->cell_step(model_->generator(), encoding_of(Vocabulary::kBos), h, nullptr);
    for (int t = 0; t < steps; ++t)
        h = model_->cell_step(model_->generator(), ops::select_row(rows, t), h, nullptr);

    Tensor he = h;
    Tensor enc_states(steps, model_->config().hidden);
    for (int t = 0; t < steps; ++t) {
        he = model_->cell_step(model_->encoder(), ops::select_row(rows, t), he, nullptr);
        for (int k = 0; k < he.cols(); ++k) enc_states.at(t, k) = he.at(0, k);
    }

    auto decode = [&](const HeadParams& head) {
        Tensor pre = model_->attention_precompute(head, enc_states);
        Tensor s = he;
        int prev = head.begin_id();
        std::vector<int> classes(static_cast<std::size_t>(steps));
        for (int t = 0; t < steps; ++t) {
            Tensor ctx = model_->attention_context(head, s, enc_states, pre);
            s = model_->cell_step(head.cell, model_->head_input(head, prev), s, &ctx);
            Tensor probs = ops::softmax(model_->head_logits(head, s));
            prev = greedy_next(probs.row_span(0));
            classes[static_cast<std::size_t>(t)] = prev;
        }
        return classes;
    };
    const std::vector<int> pitch = decode(model_->pitch_head());
    const std::vector<int> duration = decode(model_->duration_head());
    const std::vector<int> rest = decode(model_->rest_head());

    std::vector<MelodyTriple> out(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
        MelodyTriple& m = out[static_cast<std::size_t>(t)];
        m.pitch = model_->config().pitch_classes[static_cast<std::size_t>(pitch[static_cast<std::size_t>(t)])];
        m.duration = kDurationClasses[static_cast<std::size_t>(duration[static_cast<std::size_t>(t)])];
        m.rest = kRestClasses[static_cast<std::size_t>(rest[static_cast<std::size_t>(t)])];
    }
    return out;
}

GeneratedSong GenerationSession::finish(std::vector<std::vector<int>> sentences,
                                        std::string seed_echo) {
    const Vocabulary& vocab = syllables_->vocab();
    GeneratedSong song;
    song.seed_echo = std::move(seed_echo);
    song.config_echo = config_.echo();
    song.checkpoint_id = checkpoint_id_;
    for (std::vector<int>& ids : sentences) {
        GeneratedSentence sentence;
        for (int id : ids) sentence.syllables.push_back(vocab.token_of(id));
        sentence.melody = compose_melody(ids);
        sentence.syllable_ids = std::move(ids);
        song.sentences.push_back(std::move(sentence));
    }
    song.word_fallbacks = word_fallbacks_;
    if (word_fallbacks_ > 0)
        log_info("song used the syllable vector for ", word_fallbacks_, " unseen word pairings");
    return song;
}

GeneratedSong GenerationSession::generate_song(std::span<const std::string> seed_syllables) {
    std::string echo;
    for (std::size_t i = 0; i < seed_syllables.size(); ++i) {
        if (i) echo += ' ';
        echo += seed_syllables[i];
    }
    return finish(generate_lyrics(seed_syllables), std::move(echo));
}

GeneratedSong GenerationSession::harmonize(std::span<const std::vector<std::string>> sentences) {
    const Vocabulary& vocab = syllables_->vocab();
    GeneratedSong song;
    song.config_echo = config_.echo();
    song.checkpoint_id = checkpoint_id_;
    std::string echo;
    bool any = false;
    for (const std::vector<std::string>& raw : sentences) {
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (!echo.empty()) echo += i == 0 ? '\n' : ' ';
            echo += raw[i];
        }
        if (raw.empty()) continue;
        GeneratedSentence sentence;
        sentence.syllables = raw;  // user lyrics pass through untouched
        for (const std::string& s : raw) sentence.syllable_ids.push_back(vocab.id_of(normalize_syllable(s)));
        sentence.melody = compose_melody(sentence.syllable_ids);
        song.sentences.push_back(std::move(sentence));
        any = true;
    }
    if (!any) fail("harmonize needs at least one non-empty sentence");
    song.seed_echo = std::move(echo);
    song.word_fallbacks = word_fallbacks_;
    return song;
}

}  // namespace songgen
