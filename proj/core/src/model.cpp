#include "songgen/model.hpp"

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "songgen/corpus.hpp"
#include "songgen/rng.hpp"

namespace songgen {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

int parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        int v = std::stoi(s, &used);
        if (used != s.size()) fail("trailing characters in " + what + ": '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail("expected integer for " + what + ", got '" + s + "'");
    } catch (const std::out_of_range&) {
        fail(what + " out of range: '" + s + "'");
    }
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        std::uint64_t v = std::stoull(s, &used);
        if (used != s.size()) fail("trailing characters in " + what + ": '" + s + "'");
        return v;
    } catch (const std::exception&) {
        fail("expected unsigned integer for " + what + ", got '" + s + "'");
    }
}

int argmax_row(const Tensor& logits) {
    int best = 0;
    for (int k = 1; k < logits.cols(); ++k)
        if (logits.at(0, k) > logits.at(0, best)) best = k;
    return best;
}

}  // namespace

void ModelConfig::validate() const {
    if (input_width <= 0) fail("model input width must be positive");
    if (hidden <= 0) fail("model hidden width must be positive");
    if (class_embed <= 0) fail("model class embedding width must be positive");
    if (lyric_vocab <= 0) fail("model lyric vocabulary must be non-empty");
    if (pitch_classes.empty()) fail("model needs at least one pitch class");
    if (pitch_classes.size() > 128) fail("more pitch classes than MIDI pitches");
    for (std::size_t i = 0; i < pitch_classes.size(); ++i) {
        int p = pitch_classes[i];
        if (p < 0 || p > 127) fail("pitch class out of MIDI range: " + std::to_string(p));
        if (i > 0 && pitch_classes[i - 1] >= p) fail("pitch classes must be strictly increasing");
    }
}

std::string ModelManifest::serialize() const {
    std::ostringstream out;
    out << "scheme=" << scheme << '\n';
    out << "input_width=" << config.input_width << '\n';
    out << "hidden=" << config.hidden << '\n';
    out << "class_embed=" << config.class_embed << '\n';
    out << "lyric_vocab=" << config.lyric_vocab << '\n';
    out << "tie_generator_encoder=" << (config.tie_generator_encoder ? 1 : 0) << '\n';
    out << "pitch_classes=";
    for (std::size_t i = 0; i < config.pitch_classes.size(); ++i) {
        if (i) out << ',';
        out << config.pitch_classes[i];
    }
    out << '\n';
    out << "syllable_vocab_hash=" << syllable_vocab_hash << '\n';
    out << "word_vocab_hash=" << word_vocab_hash << '\n';
    out << "syllable_to_word=";
    for (std::size_t i = 0; i < syllable_to_word.size(); ++i) {
        if (i) out << ',';
        out << syllable_to_word[i].first << ':' << syllable_to_word[i].second;
    }
    out << '\n';
    out << "config_echo=" << config_echo << '\n';
    return out.str();
}

ModelManifest ModelManifest::parse(const std::string& text) {
    ModelManifest m;
    for (const std::string& line : split(text, '\n')) {
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail("malformed manifest line: '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        if (key == "scheme") {
            m.scheme = value;
        } else if (key == "input_width") {
            m.config.input_width = parse_int(value, key);
        } else if (key == "hidden") {
            m.config.hidden = parse_int(value, key);
        } else if (key == "class_embed") {
            m.config.class_embed = parse_int(value, key);
        } else if (key == "lyric_vocab") {
            m.config.lyric_vocab = parse_int(value, key);
        } else if (key == "tie_generator_encoder") {
            m.config.tie_generator_encoder = parse_int(value, key) != 0;
        } else if (key == "pitch_classes") {
            for (const std::string& item : split(value, ','))
                m.config.pitch_classes.push_back(parse_int(item, key));
        } else if (key == "syllable_vocab_hash") {
            m.syllable_vocab_hash = parse_u64(value, key);
        } else if (key == "word_vocab_hash") {
            m.word_vocab_hash = parse_u64(value, key);
        } else if (key == "syllable_to_word") {
            for (const std::string& item : split(value, ',')) {
                std::size_t colon = item.find(':');
                if (colon == std::string::npos) fail("malformed syllable_to_word entry: '" + item + "'");
                m.syllable_to_word.emplace_back(parse_int(item.substr(0, colon), key),
                                                parse_int(item.substr(colon + 1), key));
            }
        } else if (key == "config_echo") {
            m.config_echo = value;
        }
        // unknown keys pass through silently so newer manifests still load
    }
    return m;
}

CellParams Model::make_cell(const std::string& prefix, int input_width, bool with_context) {
    const int h = config_.hidden;
    CellParams cell;
    cell.W = &store_.create(prefix + ".W", Tensor(input_width, h));
    cell.U = &store_.create(prefix + ".U", Tensor(h, h));
    cell.Wz = &store_.create(prefix + ".Wz", Tensor(input_width, h));
    cell.Uz = &store_.create(prefix + ".Uz", Tensor(h, h));
    cell.Wr = &store_.create(prefix + ".Wr", Tensor(input_width, h));
    cell.Ur = &store_.create(prefix + ".Ur", Tensor(h, h));
    if (with_context) {
        cell.C = &store_.create(prefix + ".C", Tensor(h, h));
        cell.Cz = &store_.create(prefix + ".Cz", Tensor(h, h));
        cell.Cr = &store_.create(prefix + ".Cr", Tensor(h, h));
    }
    return cell;
}

HeadParams Model::make_head(const std::string& prefix, int num_classes) {
    const int h = config_.hidden;
    HeadParams head;
    head.num_classes = num_classes;
    head.cell = make_cell(prefix, config_.class_embed, true);
    head.attention.Wa = &store_.create(prefix + ".attn.Wa", Tensor(h, h));
    head.attention.Ua = &store_.create(prefix + ".attn.Ua", Tensor(h, h));
    head.attention.Va = &store_.create(prefix + ".attn.Va", Tensor(h, 1));
    head.embed = &store_.create(prefix + ".embed", Tensor(num_classes + 1, config_.class_embed));
    head.out = &store_.create(prefix + ".out", Tensor(h, num_classes));
    return head;
}

void Model::init_weights(std::uint64_t seed, double variance) {
    if (!(variance > 0.0)) fail("init variance must be positive");
    Rng rng = Rng::for_component(seed, "model-init");
    const double stddev = std::sqrt(variance);
    for (const auto& p : store_.params())
        for (double& v : p->value.values()) v = rng.gaussian(0.0, stddev);
}

Model::Model(ModelConfig config, std::uint64_t init_seed, double init_variance)
    : config_(std::move(config)) {
    config_.validate();
    manifest_.config = config_;
    generator_ = make_cell("gen", config_.input_width, false);
    gen_out_ = &store_.create("gen.out", Tensor(config_.hidden, config_.lyric_vocab));
    encoder_ = config_.tie_generator_encoder ? generator_ : make_cell("enc", config_.input_width, false);
    pitch_ = make_head("pitch", static_cast<int>(config_.pitch_classes.size()));
    duration_ = make_head("duration", static_cast<int>(kDurationClasses.size()));
    rest_ = make_head("rest", static_cast<int>(kRestClasses.size()));
    init_weights(init_seed, init_variance);
}

Model::Model(const Checkpoint& ck) : Model(ModelManifest::parse(ck.manifest).config, 0) {
    manifest_ = ModelManifest::parse(ck.manifest);
    bind_from(ck);
}

void Model::bind_from(const Checkpoint& ck) {
    if (ck.tensors.size() != store_.tensor_count())
        fail("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
             std::to_string(store_.tensor_count()));
    for (const auto& p : store_.params()) {
        const Tensor* t = ck.find(p->name);
        if (!t) fail("checkpoint is missing parameter '" + p->name + "'");
        if (!t->same_shape(p->value))
            fail("checkpoint parameter '" + p->name + "' has shape " + t->shape_str() + ", expected " +
                 p->value.shape_str());
        p->value = *t;
    }
}

Checkpoint Model::to_checkpoint(std::int64_t step) const {
    Checkpoint ck;
    ck.step = step;
    ModelManifest m = manifest_;
    m.config = config_;
    ck.manifest = m.serialize();
    ck.tensors.reserve(store_.tensor_count());
    for (const auto& p : store_.params()) ck.tensors.emplace_back(p->name, p->value);
    return ck;
}

namespace {

Value graph_cell_step(Graph& g, const CellParams& p, Value x, Value h_prev,
                      const std::optional<Value>& context) {
    auto gate_pre = [&](Param* W, Param* U, Param* C, Value hin) {
        Value a = g.add(g.matmul(x, g.param(*W)), g.matmul(hin, g.param(*U)));
        if (context) a = g.add(a, g.matmul(*context, g.param(*C)));
        return a;
    };
    Value z = g.sigmoid(gate_pre(p.Wz, p.Uz, p.Cz, h_prev));
    Value r = g.sigmoid(gate_pre(p.Wr, p.Ur, p.Cr, h_prev));
    Value pre = g.add(g.matmul(x, g.param(*p.W)), g.matmul(g.mul(r, h_prev), g.param(*p.U)));
    if (context) pre = g.add(pre, g.matmul(*context, g.param(*p.C)));
    Value hbar = g.tanh(pre);
    // h = h_prev - z*h_prev + z*hbar
    return g.add(g.sub(h_prev, g.mul(z, h_prev)), g.mul(z, hbar));
}

void validate_example(const ModelConfig& cfg, const SentenceExample& ex) {
    if (ex.lyric_inputs.rows() < 1) fail("sentence example has no lyric steps");
    if (ex.lyric_inputs.cols() != cfg.input_width || ex.encoder_inputs.cols() != cfg.input_width)
        fail("sentence example encoding width does not match the model");
    if (static_cast<int>(ex.lyric_targets.size()) != ex.lyric_inputs.rows())
        fail("lyric targets do not match lyric inputs");
    const int steps = ex.encoder_inputs.rows();
    if (steps < 1) fail("sentence example has no melody steps");
    if (static_cast<int>(ex.pitch_targets.size()) != steps ||
        static_cast<int>(ex.duration_targets.size()) != steps ||
        static_cast<int>(ex.rest_targets.size()) != steps)
        fail("melody targets do not match encoder inputs");
    auto check_range = [](const std::vector<int>& ids, int count, const char* what) {
        for (int id : ids)
            if (id < 0 || id >= count)
                fail(std::string(what) + " target " + std::to_string(id) + " outside 0.." +
                     std::to_string(count - 1));
    };
    check_range(ex.lyric_targets, cfg.lyric_vocab, "lyric");
    check_range(ex.pitch_targets, static_cast<int>(cfg.pitch_classes.size()), "pitch");
    check_range(ex.duration_targets, static_cast<int>(kDurationClasses.size()), "duration");
    check_range(ex.rest_targets, static_cast<int>(kRestClasses.size()), "rest");
}

}  // namespace

SentenceForward Model::forward(Graph& g, const SentenceExample& ex) const {
    validate_example(config_, ex);
    SentenceForward out;

    Value lyric_in = g.constant(ex.lyric_inputs);
    Value h = g.constant(zero_state());
    std::vector<Value> lyric_ces;
    for (int t = 0; t < ex.lyric_inputs.rows(); ++t) {
        h = graph_cell_step(g, generator_, g.select_row(lyric_in, t), h, std::nullopt);
        Value logits = g.matmul(h, g.param(*gen_out_));
        out.lyric_logits.push_back(logits);
        lyric_ces.push_back(g.cross_entropy(logits, ex.lyric_targets[t]));
    }
    out.lyric_loss = g.add_n(lyric_ces);

    const int steps = ex.encoder_inputs.rows();
    Value enc_in = g.constant(ex.encoder_inputs);
    Value he = h;  // encoder starts from the generator's final state
    std::vector<Value> states;
    for (int t = 0; t < steps; ++t) {
        he = graph_cell_step(g, encoder_, g.select_row(enc_in, t), he, std::nullopt);
        states.push_back(he);
    }
    Value enc_states = g.concat_rows(states);

    auto run_head = [&](const HeadParams& head, const std::vector<int>& targets,
                        std::vector<Value>& logits_out, std::vector<Value>* weights_out) {
        Value u_proj = g.matmul(enc_states, g.param(*head.attention.Ua));
        Value embed = g.param(*head.embed);
        Value s = he;  // decoders start from the encoder's final state
        int prev = head.begin_id();
        std::vector<Value> ces;
        for (int t = 0; t < steps; ++t) {
            Value w = g.matmul(s, g.param(*head.attention.Wa));
            std::vector<Value> scores;
            scores.reserve(steps);
            for (int j = 0; j < steps; ++j)
                scores.push_back(
                    g.matmul(g.tanh(g.add(g.select_row(u_proj, j), w)), g.param(*head.attention.Va)));
            Value alpha = g.softmax(g.concat_cols(scores));
            if (weights_out) weights_out->push_back(alpha);
            Value context = g.matmul(alpha, enc_states);
            s = graph_cell_step(g, head.cell, g.select_row(embed, prev), s, context);
            Value logits = g.matmul(s, g.param(*head.out));
            logits_out.push_back(logits);
            ces.push_back(g.cross_entropy(logits, targets[t]));
            prev = targets[t];
        }
        return g.add_n(ces);
    };

    Value pitch_loss = run_head(pitch_, ex.pitch_targets, out.pitch_logits, &out.attention_weights);
    Value duration_loss = run_head(duration_, ex.duration_targets, out.duration_logits, nullptr);
    Value rest_loss = run_head(rest_, ex.rest_targets, out.rest_logits, nullptr);
    out.melody_loss = g.add(g.add(pitch_loss, duration_loss), rest_loss);
    out.total = g.add(out.lyric_loss, out.melody_loss);
    return out;
}

Value Model::batch_loss(Graph& g, std::span<const SentenceExample> batch) const {
    std::vector<const SentenceExample*> ptrs;
    ptrs.reserve(batch.size());
    for (const SentenceExample& ex : batch) ptrs.push_back(&ex);
    return batch_loss(g, ptrs);
}

Value Model::batch_loss(Graph& g, std::span<const SentenceExample* const> batch) const {
    if (batch.empty()) fail("batch_loss needs at least one sentence");
    std::vector<Value> totals;
    totals.reserve(batch.size());
    for (const SentenceExample* ex : batch) totals.push_back(forward(g, *ex).total);
    return g.scale(g.add_n(totals), 1.0 / static_cast<double>(batch.size()));
}

Tensor Model::cell_step(const CellParams& p, const Tensor& x, const Tensor& h_prev,
                        const Tensor* context) const {
    auto gate_pre = [&](const Param* W, const Param* U, const Param* C) {
        Tensor a = ops::add(ops::matmul(x, W->value), ops::matmul(h_prev, U->value));
        if (context) a = ops::add(a, ops::matmul(*context, C->value));
        return a;
    };
    Tensor z = ops::sigmoid(gate_pre(p.Wz, p.Uz, p.Cz));
    Tensor r = ops::sigmoid(gate_pre(p.Wr, p.Ur, p.Cr));
    Tensor pre = ops::add(ops::matmul(x, p.W->value), ops::matmul(ops::mul(r, h_prev), p.U->value));
    if (context) pre = ops::add(pre, ops::matmul(*context, p.C->value));
    Tensor hbar = ops::tanh(pre);
    return ops::add(ops::sub(h_prev, ops::mul(z, h_prev)), ops::mul(z, hbar));
}

Tensor Model::generator_logits(const Tensor& h) const { return ops::matmul(h, gen_out_->value); }

Tensor Model::attention_precompute(const HeadParams& head, const Tensor& encoder_states) const {
    return ops::matmul(encoder_states, head.attention.Ua->value);
}

Tensor Model::attention_context(const HeadParams& head, const Tensor& state,
                                const Tensor& encoder_states, const Tensor& precomputed,
                                Tensor* weights_out) const {
    const int steps = encoder_states.rows();
    const int h = config_.hidden;
    Tensor w = ops::matmul(state, head.attention.Wa->value);
    Tensor scores(1, steps);
    for (int j = 0; j < steps; ++j) {
        double e = 0.0;
        for (int k = 0; k < h; ++k)
            e += std::tanh(precomputed.at(j, k) + w.at(0, k)) * head.attention.Va->value.at(k, 0);
        scores.at(0, j) = e;
    }
    Tensor alpha = ops::softmax(scores);
    if (weights_out) *weights_out = alpha;
    return ops::matmul(alpha, encoder_states);
}

Tensor Model::head_input(const HeadParams& head, int class_id) const {
    if (class_id < 0 || class_id > head.num_classes)
        fail("melody class id " + std::to_string(class_id) + " outside 0.." +
             std::to_string(head.num_classes));
    return ops::select_row(head.embed->value, class_id);
}

Tensor Model::head_logits(const HeadParams& head, const Tensor& h) const {
    return ops::matmul(h, head.out->value);
}

StreamAccuracy teacher_forced_accuracy(const Model& model, std::span<const SentenceExample> examples) {
    std::int64_t lyric_hit = 0, lyric_total = 0;
    std::int64_t pitch_hit = 0, duration_hit = 0, rest_hit = 0, melody_total = 0;
    for (const SentenceExample& ex : examples) {
        Tensor h = model.zero_state();
        for (int t = 0; t < ex.lyric_inputs.rows(); ++t) {
            h = model.cell_step(model.generator(), ops::select_row(ex.lyric_inputs, t), h, nullptr);
            if (argmax_row(model.generator_logits(h)) == ex.lyric_targets[t]) ++lyric_hit;
            ++lyric_total;
        }
        const int steps = ex.encoder_inputs.rows();
        Tensor he = h;
        Tensor enc_states(steps, model.config().hidden);
        for (int t = 0; t < steps; ++t) {
            he = model.cell_step(model.encoder(), ops::select_row(ex.encoder_inputs, t), he, nullptr);
            for (int k = 0; k < he.cols(); ++k) enc_states.at(t, k) = he.at(0, k);
        }
        auto run_head = [&](const HeadParams& head, const std::vector<int>& targets,
                            std::int64_t& hits) {
            Tensor pre = model.attention_precompute(head, enc_states);
            Tensor s = he;
            int prev = head.begin_id();
            for (int t = 0; t < steps; ++t) {
                Tensor context = model.attention_context(head, s, enc_states, pre);
                s = model.cell_step(head.cell, model.head_input(head, prev), s, &context);
                if (argmax_row(model.head_logits(head, s)) == targets[t]) ++hits;
                prev = targets[t];
            }
        };
        run_head(model.pitch_head(), ex.pitch_targets, pitch_hit);
        run_head(model.duration_head(), ex.duration_targets, duration_hit);
        run_head(model.rest_head(), ex.rest_targets, rest_hit);
        melody_total += steps;
    }
    if (lyric_total == 0 || melody_total == 0) fail("accuracy needs at least one example");
    StreamAccuracy acc;
    acc.lyric = static_cast<double>(lyric_hit) / static_cast<double>(lyric_total);
    acc.pitch = static_cast<double>(pitch_hit) / static_cast<double>(melody_total);
    acc.duration = static_cast<double>(duration_hit) / static_cast<double>(melody_total);
    acc.rest = static_cast<double>(rest_hit) / static_cast<double>(melody_total);
    return acc;
}

}  // namespace songgen
