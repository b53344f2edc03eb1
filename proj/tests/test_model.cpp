#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <vector>

#include "doctest.h"
#include "fd_util.hpp"
#include "songgen/model.hpp"
#include "songgen/rng.hpp"
#include "songgen/train.hpp"

using namespace songgen;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.input_width = 3;
    cfg.hidden = 4;
    cfg.class_embed = 3;
    cfg.lyric_vocab = 5;
    cfg.pitch_classes = {60, 64, 67};
    return cfg;
}

void zero_params(Model& m) {
    for (const auto& p : m.params().params()) p->value.fill(0.0);
}

SentenceExample random_example(const ModelConfig& cfg, Rng& rng, int steps, bool with_end) {
    SentenceExample ex;
    ex.encoder_inputs = Tensor(steps, cfg.input_width);
    for (double& v : ex.encoder_inputs.values()) v = rng.gaussian(0.0, 1.0);
    const int lyric_steps = with_end ? steps + 1 : steps;
    ex.lyric_inputs = Tensor(lyric_steps, cfg.input_width);
    for (double& v : ex.lyric_inputs.values()) v = rng.gaussian(0.0, 1.0);
    for (int t = 0; t < lyric_steps; ++t)
        ex.lyric_targets.push_back(static_cast<int>(rng.bounded(static_cast<std::uint64_t>(cfg.lyric_vocab))));
    for (int t = 0; t < steps; ++t) {
        ex.pitch_targets.push_back(static_cast<int>(rng.bounded(cfg.pitch_classes.size())));
        ex.duration_targets.push_back(static_cast<int>(rng.bounded(kDurationClasses.size())));
        ex.rest_targets.push_back(static_cast<int>(rng.bounded(kRestClasses.size())));
    }
    return ex;
}

// Scalar-loop evaluation of one gated step, independent of the tensor kernels.
std::vector<double> ref_cell_step(const CellParams& p, const std::vector<double>& x,
                                  const std::vector<double>& h_prev, const std::vector<double>* ctx) {
    const int hidden = p.U->value.rows();
    auto matvec = [](const Tensor& w, const std::vector<double>& v, int k) {
        double s = 0.0;
        for (int i = 0; i < w.rows(); ++i) s += v[static_cast<std::size_t>(i)] * w.at(i, k);
        return s;
    };
    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    std::vector<double> h(static_cast<std::size_t>(hidden));
    for (int k = 0; k < hidden; ++k) {
        double zp = matvec(p.Wz->value, x, k) + matvec(p.Uz->value, h_prev, k);
        double rp = matvec(p.Wr->value, x, k) + matvec(p.Ur->value, h_prev, k);
        if (ctx) {
            zp += matvec(p.Cz->value, *ctx, k);
            rp += matvec(p.Cr->value, *ctx, k);
        }
        const double z = sigmoid(zp);
        const double r = sigmoid(rp);
        std::vector<double> rh(h_prev);
        for (double& v : rh) v = 0.0;
        for (std::size_t i = 0; i < h_prev.size(); ++i) {
            double ri = sigmoid(matvec(p.Wr->value, x, static_cast<int>(i)) +
                                matvec(p.Ur->value, h_prev, static_cast<int>(i)) +
                                (ctx ? matvec(p.Cr->value, *ctx, static_cast<int>(i)) : 0.0));
            rh[i] = ri * h_prev[i];
        }
        double hp = matvec(p.W->value, x, k) + matvec(p.U->value, rh, k);
        if (ctx) hp += matvec(p.C->value, *ctx, k);
        const double hbar = std::tanh(hp);
        h[static_cast<std::size_t>(k)] = (1.0 - z) * h_prev[static_cast<std::size_t>(k)] + z * hbar;
        (void)r;
    }
    return h;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path((std::filesystem::temp_directory_path() / name).string()) {}
    ~TempFile() { std::remove(path.c_str()); }
};

SongRecord one_sentence_song(std::string id, std::vector<std::string> syls, std::vector<int> pitches) {
    SongRecord rec;
    rec.id = std::move(id);
    for (std::size_t i = 0; i < syls.size(); ++i) {
        rec.syllables.push_back({syls[i], static_cast<int>(i), 0});
        rec.words.push_back({static_cast<int>(i)});
        MelodyTriple m;
        m.pitch = pitches[i];
        m.duration = kDurationClasses[i % kDurationClasses.size()];
        m.rest = i == 0 ? 0.0 : kRestClasses[i % kRestClasses.size()];
        rec.melody.push_back(m);
    }
    std::vector<int> words(syls.size());
    for (std::size_t i = 0; i < syls.size(); ++i) words[i] = static_cast<int>(i);
    rec.sentences.push_back(words);
    validate_record(rec);
    return rec;
}

// Two one-sentence songs sharing the first syllable: with a zero start state
// the opening token is only predictable when every sentence agrees on it.
std::vector<SongRecord> smoke_corpus() {
    return {one_sentence_song("smoke-a", {"la", "ba", "du", "bi", "ko", "ne", "ti", "sa", "vo", "re"},
                              {60, 62, 64, 65, 67, 69, 71, 72, 74, 76}),
            one_sentence_song("smoke-b", {"la", "mi", "ra", "su", "pe", "no", "ki", "ta", "fu", "go"},
                              {48, 50, 52, 53, 55, 57, 59, 60, 62, 64})};
}

// Shorter disjoint pair for the structural example checks.
std::vector<SongRecord> struct_corpus() {
    return {one_sentence_song("struct-a", {"da", "ba", "du", "bi"}, {60, 62, 64, 65}),
            one_sentence_song("struct-b", {"lo", "mi", "ra", "su"}, {67, 69, 71, 72})};
}

EmbeddingTable smoke_table(const std::vector<SongRecord>& records, int dim, std::uint64_t seed) {
    Vocabulary vocab = build_vocabulary(records, 1, TokenLevel::syllable);
    SkipGramConfig cfg;
    cfg.dimension = dim;
    cfg.epochs = 0;  // keep the deterministic random init
    return SkipGramTrainer(vocab, cfg, seed).take_table();
}

}  // namespace

TEST_CASE("zero weights halve the previous state") {
    Model m(tiny_config(), 7);
    zero_params(m);
    Tensor h_prev(1, 4, {0.8, -0.4, 0.2, -1.6});
    Tensor x = Tensor::full(1, 3, 0.9);
    Tensor h = m.cell_step(m.generator(), x, h_prev, nullptr);
    for (int k = 0; k < 4; ++k) CHECK(h.at(0, k) == doctest::Approx(0.5 * h_prev.at(0, k)).epsilon(1e-12));

    Tensor ctx = Tensor::full(1, 4, 2.0);
    Tensor hd = m.cell_step(m.pitch_head().cell, Tensor::full(1, 3, 0.3), h_prev, &ctx);
    for (int k = 0; k < 4; ++k) CHECK(hd.at(0, k) == doctest::Approx(0.5 * h_prev.at(0, k)).epsilon(1e-12));
}

TEST_CASE("gated step matches a scalar-loop evaluation") {
    Model m(tiny_config(), 11);
    Rng rng(3);
    std::vector<double> xv = {0.3, -1.2, 0.7};
    std::vector<double> hv = {0.1, 0.5, -0.9, 0.25};
    std::vector<double> cv = {1.1, -0.3, 0.0, 0.6};
    Tensor x(1, 3, xv);
    Tensor h(1, 4, hv);
    Tensor c(1, 4, cv);

    Tensor got = m.cell_step(m.generator(), x, h, nullptr);
    std::vector<double> want = ref_cell_step(m.generator(), xv, hv, nullptr);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(got.at(0, k) - want[static_cast<std::size_t>(k)]) <= 1e-12);

    Tensor got_ctx = m.cell_step(m.rest_head().cell, x, h, &c);
    std::vector<double> want_ctx = ref_cell_step(m.rest_head().cell, xv, hv, &cv);
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(got_ctx.at(0, k) - want_ctx[static_cast<std::size_t>(k)]) <= 1e-12);
    (void)rng;
}

TEST_CASE("hidden states stay inside (-1, 1) from a zero start") {
    Model m(tiny_config(), 5);
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor h = m.zero_state();
        for (int t = 0; t < 8; ++t) {
            Tensor x(1, 3);
            for (double& v : x.values()) v = rng.gaussian(0.0, 3.0);
            h = m.cell_step(m.encoder(), x, h, nullptr);
            for (int k = 0; k < h.cols(); ++k) {
                CHECK(h.at(0, k) > -1.0);
                CHECK(h.at(0, k) < 1.0);
            }
        }
    }
}

TEST_CASE("attention over a single state is the identity") {
    Model m(tiny_config(), 13);
    Rng rng(2);
    Tensor enc(1, 4);
    Tensor state(1, 4);
    for (double& v : enc.values()) v = rng.gaussian(0.0, 1.0);
    for (double& v : state.values()) v = rng.gaussian(0.0, 1.0);
    Tensor pre = m.attention_precompute(m.pitch_head(), enc);
    Tensor alpha;
    Tensor ctx = m.attention_context(m.pitch_head(), state, enc, pre, &alpha);
    CHECK(alpha.cols() == 1);
    CHECK(alpha.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k < 4; ++k) CHECK(ctx.at(0, k) == doctest::Approx(enc.at(0, k)).epsilon(1e-12));
}

TEST_CASE("identical encoder states attract uniform weights") {
    Model m(tiny_config(), 17);
    Rng rng(4);
    Tensor one_row(1, 4);
    for (double& v : one_row.values()) v = rng.gaussian(0.0, 1.0);
    Tensor enc(3, 4);
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 4; ++k) enc.at(j, k) = one_row.at(0, k);
    Tensor state(1, 4);
    for (double& v : state.values()) v = rng.gaussian(0.0, 1.0);
    Tensor alpha;
    m.attention_context(m.duration_head(), state, enc, m.attention_precompute(m.duration_head(), enc), &alpha);
    for (int j = 0; j < 3; ++j) CHECK(alpha.at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("attention matches a scalar-loop oracle over three states") {
    Model m(tiny_config(), 19);
    const HeadParams& head = m.pitch_head();
    Rng rng(6);
    Tensor enc(3, 4), state(1, 4);
    for (double& v : enc.values()) v = rng.gaussian(0.0, 1.0);
    for (double& v : state.values()) v = rng.gaussian(0.0, 1.0);

    const Tensor& wa = head.attention.Wa->value;
    const Tensor& ua = head.attention.Ua->value;
    const Tensor& va = head.attention.Va->value;
    std::vector<double> scores(3);
    for (int j = 0; j < 3; ++j) {
        double e = 0.0;
        for (int k = 0; k < 4; ++k) {
            double pre = 0.0;
            for (int i = 0; i < 4; ++i) pre += enc.at(j, i) * ua.at(i, k) + state.at(0, i) * wa.at(i, k);
            e += std::tanh(pre) * va.at(k, 0);
        }
        scores[static_cast<std::size_t>(j)] = e;
    }
    double mx = std::max({scores[0], scores[1], scores[2]});
    double denom = 0.0;
    for (double s : scores) denom += std::exp(s - mx);
    std::vector<double> want_alpha(3);
    for (int j = 0; j < 3; ++j) want_alpha[static_cast<std::size_t>(j)] = std::exp(scores[static_cast<std::size_t>(j)] - mx) / denom;
    std::vector<double> want_ctx(4, 0.0);
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 4; ++k) want_ctx[static_cast<std::size_t>(k)] += want_alpha[static_cast<std::size_t>(j)] * enc.at(j, k);

    Tensor alpha;
    Tensor ctx = m.attention_context(head, state, enc, m.attention_precompute(head, enc), &alpha);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(alpha.at(0, j) - want_alpha[static_cast<std::size_t>(j)]) <= 1e-12);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(ctx.at(0, k) - want_ctx[static_cast<std::size_t>(k)]) <= 1e-12);
}

TEST_CASE("forward emits attention rows that sum to one") {
    ModelConfig cfg = tiny_config();
    Model m(cfg, 23);
    Rng rng(8);
    SentenceExample ex = random_example(cfg, rng, 5, true);
    Graph g;
    SentenceForward fwd = m.forward(g, ex);
    REQUIRE(fwd.attention_weights.size() == 5);
    for (const Value& v : fwd.attention_weights) {
        const Tensor& a = v.tensor();
        double s = 0.0;
        for (int j = 0; j < a.cols(); ++j) {
            CHECK(a.at(0, j) > 0.0);
            s += a.at(0, j);
        }
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
}

TEST_CASE("head logits carry one column per class") {
    ModelConfig cfg = tiny_config();
    Model m(cfg, 29);
    Rng rng(10);
    SentenceExample ex = random_example(cfg, rng, 3, true);
    Graph g;
    SentenceForward fwd = m.forward(g, ex);
    CHECK(fwd.lyric_logits.front().tensor().cols() == cfg.lyric_vocab);
    CHECK(fwd.pitch_logits.front().tensor().cols() == 3);
    CHECK(fwd.duration_logits.front().tensor().cols() == 11);
    CHECK(fwd.rest_logits.front().tensor().cols() == 12);
}

TEST_CASE("uniform logits price every stream at log class count") {
    ModelConfig cfg = tiny_config();
    Model m(cfg, 31);
    zero_params(m);
    Rng rng(12);
    const int steps = 6;
    SentenceExample ex = random_example(cfg, rng, steps, false);  // lyric steps == melody steps
    Graph g;
    double loss = m.batch_loss(g, std::span<const SentenceExample>(&ex, 1)).item();
    const double want = steps * (std::log(5.0) + std::log(3.0) + std::log(11.0) + std::log(12.0));
    CHECK(std::abs(loss - want) <= 1e-9);
}

TEST_CASE("per-head losses equal the joint factored loss") {
    ModelConfig cfg = tiny_config();
    Rng rng(14);
    for (int trial = 0; trial < 10; ++trial) {
        Model m(cfg, 100 + static_cast<std::uint64_t>(trial));
        SentenceExample ex = random_example(cfg, rng, 4, true);
        Graph g;
        SentenceForward fwd = m.forward(g, ex);
        double decomposed = fwd.melody_loss.item();
        double joint = 0.0;
        for (int t = 0; t < 4; ++t) {
            double pp = ops::softmax(fwd.pitch_logits[static_cast<std::size_t>(t)].tensor())
                            .at(0, ex.pitch_targets[static_cast<std::size_t>(t)]);
            double pd = ops::softmax(fwd.duration_logits[static_cast<std::size_t>(t)].tensor())
                            .at(0, ex.duration_targets[static_cast<std::size_t>(t)]);
            double pr = ops::softmax(fwd.rest_logits[static_cast<std::size_t>(t)].tensor())
                            .at(0, ex.rest_targets[static_cast<std::size_t>(t)]);
            joint -= std::log(pp * pd * pr);
        }
        CHECK(std::abs(decomposed - joint) <= 1e-9);
    }
}

TEST_CASE("analytic gradients match central differences on every tensor") {
    ModelConfig cfg = tiny_config();
    Model m(cfg, 37);
    Rng rng(16);
    std::vector<SentenceExample> batch;
    batch.push_back(random_example(cfg, rng, 3, true));
    batch.push_back(random_example(cfg, rng, 2, false));

    auto loss_fn = [&] {
        Graph g;
        return m.batch_loss(g, std::span<const SentenceExample>(batch)).item();
    };
    m.params().zero_grads();
    Graph g;
    Value loss = m.batch_loss(g, std::span<const SentenceExample>(batch));
    g.backward(loss);
    // wider step than the default: at 1e-5 the cancellation noise of a ~40-point
    // loss drowns the near-zero attention gradients
    auto res = testutil::check_gradients(m.params(), loss_fn, 1e-4);
    INFO("worst tensor: " << res.worst_param << "[" << res.worst_index << "] analytic=" << res.analytic
                          << " numeric=" << res.numeric);
    CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("graph forward agrees with the plain stepping path") {
    ModelConfig cfg = tiny_config();
    Model m(cfg, 41);
    Rng rng(18);
    SentenceExample ex = random_example(cfg, rng, 4, true);
    Graph g;
    SentenceForward fwd = m.forward(g, ex);

    Tensor h = m.zero_state();
    for (int t = 0; t < ex.lyric_inputs.rows(); ++t) {
        h = m.cell_step(m.generator(), ops::select_row(ex.lyric_inputs, t), h, nullptr);
        const Tensor& want = fwd.lyric_logits[static_cast<std::size_t>(t)].tensor();
        Tensor got = m.generator_logits(h);
        for (int k = 0; k < got.cols(); ++k) CHECK(std::abs(got.at(0, k) - want.at(0, k)) <= 1e-12);
    }
    Tensor he = h;
    Tensor enc(4, cfg.hidden);
    for (int t = 0; t < 4; ++t) {
        he = m.cell_step(m.encoder(), ops::select_row(ex.encoder_inputs, t), he, nullptr);
        for (int k = 0; k < cfg.hidden; ++k) enc.at(t, k) = he.at(0, k);
    }
    auto check_head = [&](const HeadParams& head, const std::vector<int>& targets,
                          const std::vector<Value>& logits) {
        Tensor pre = m.attention_precompute(head, enc);
        Tensor s = he;
        int prev = head.begin_id();
        for (int t = 0; t < 4; ++t) {
            Tensor ctx = m.attention_context(head, s, enc, pre);
            s = m.cell_step(head.cell, m.head_input(head, prev), s, &ctx);
            Tensor got = m.head_logits(head, s);
            const Tensor& want = logits[static_cast<std::size_t>(t)].tensor();
            for (int k = 0; k < got.cols(); ++k) CHECK(std::abs(got.at(0, k) - want.at(0, k)) <= 1e-12);
            prev = targets[static_cast<std::size_t>(t)];
        }
    };
    check_head(m.pitch_head(), ex.pitch_targets, fwd.pitch_logits);
    check_head(m.duration_head(), ex.duration_targets, fwd.duration_logits);
    check_head(m.rest_head(), ex.rest_targets, fwd.rest_logits);
}

TEST_CASE("malformed examples and class ids are rejected") {
    ModelConfig cfg = tiny_config();
    Model m(cfg, 43);
    Rng rng(20);
    SentenceExample ex = random_example(cfg, rng, 3, true);
    Graph g;

    SentenceExample bad = ex;
    bad.pitch_targets.pop_back();
    CHECK_THROWS(m.forward(g, bad));

    bad = ex;
    bad.lyric_targets.back() = cfg.lyric_vocab;
    CHECK_THROWS(m.forward(g, bad));

    bad = ex;
    bad.rest_targets[0] = 12;
    CHECK_THROWS(m.forward(g, bad));

    CHECK_THROWS(m.head_input(m.pitch_head(), 4));  // begin id is 3
    CHECK_NOTHROW(m.head_input(m.pitch_head(), 3));
    CHECK_THROWS(m.head_input(m.pitch_head(), -1));

    CHECK_THROWS(pitch_class_index(cfg.pitch_classes, 61));
    CHECK(pitch_class_index(cfg.pitch_classes, 64) == 1);
}

TEST_CASE("uniform logits make accuracy the frequency of class zero") {
    ModelConfig cfg = tiny_config();
    Model m(cfg, 47);
    zero_params(m);
    SentenceExample ex;
    ex.lyric_inputs = Tensor(4, 3);
    ex.lyric_targets = {0, 1, 0, 2};          // two of four are class 0
    ex.encoder_inputs = Tensor(4, 3);
    ex.pitch_targets = {0, 0, 0, 1};          // three of four
    ex.duration_targets = {5, 5, 5, 5};       // never class 0
    ex.rest_targets = {0, 0, 0, 0};           // always class 0
    StreamAccuracy acc = teacher_forced_accuracy(m, std::span<const SentenceExample>(&ex, 1));
    CHECK(acc.lyric == doctest::Approx(0.5));
    CHECK(acc.pitch == doctest::Approx(0.75));
    CHECK(acc.duration == doctest::Approx(0.0));
    CHECK(acc.rest == doctest::Approx(1.0));
}

TEST_CASE("manifest survives a serialize/parse round trip") {
    ModelManifest m;
    m.scheme = "cswp";
    m.config = tiny_config();
    m.config.tie_generator_encoder = true;
    m.syllable_vocab_hash = 0xdeadbeefcafe1234ull;
    m.word_vocab_hash = 42;
    m.syllable_to_word = {{4, 7}, {5, 4}, {9, 11}};
    m.config_echo = "epochs=3 lr=0.01 note=a=b";
    ModelManifest back = ModelManifest::parse(m.serialize());
    CHECK(back.scheme == m.scheme);
    CHECK(back.config.input_width == m.config.input_width);
    CHECK(back.config.hidden == m.config.hidden);
    CHECK(back.config.class_embed == m.config.class_embed);
    CHECK(back.config.lyric_vocab == m.config.lyric_vocab);
    CHECK(back.config.pitch_classes == m.config.pitch_classes);
    CHECK(back.config.tie_generator_encoder == true);
    CHECK(back.syllable_vocab_hash == m.syllable_vocab_hash);
    CHECK(back.word_vocab_hash == m.word_vocab_hash);
    CHECK(back.syllable_to_word == m.syllable_to_word);
    CHECK(back.config_echo == m.config_echo);
}

TEST_CASE("checkpoints rebuild an identical model") {
    ModelConfig cfg = tiny_config();
    Model m(cfg, 53);
    ModelManifest manifest = m.manifest();
    manifest.scheme = "se";
    manifest.syllable_vocab_hash = 99;
    m.set_manifest(manifest);

    Rng rng(22);
    SentenceExample ex = random_example(cfg, rng, 3, true);
    Graph g1;
    const double want = m.forward(g1, ex).total.item();

    TempFile file("songgen-model-ck.bin");
    save_checkpoint(file.path, m.to_checkpoint(77));
    Checkpoint ck = load_checkpoint(file.path);
    CHECK(ck.step == 77);
    Model back(ck);
    CHECK(back.manifest().syllable_vocab_hash == 99);
    CHECK(back.config().pitch_classes == cfg.pitch_classes);
    Graph g2;
    CHECK(back.forward(g2, ex).total.item() == doctest::Approx(want).epsilon(1e-15));

    Checkpoint broken = m.to_checkpoint(1);
    broken.tensors.pop_back();
    CHECK_THROWS(Model{broken});
}

TEST_CASE("tied generator and encoder share parameters") {
    ModelConfig cfg = tiny_config();
    cfg.tie_generator_encoder = true;
    Model m(cfg, 59);
    CHECK(m.generator().W == m.encoder().W);
    CHECK(m.params().find("enc.W") == nullptr);
    Model untied(tiny_config(), 59);
    CHECK(untied.params().find("enc.W") != nullptr);
    CHECK(untied.params().tensor_count() == m.params().tensor_count() + 6);
}

TEST_CASE("by-song split is a deterministic partition") {
    DatasetSplit s = split_by_song(20, 0.1, 0.1, 5);
    CHECK(s.val.size() == 2);
    CHECK(s.test.size() == 2);
    CHECK(s.train.size() == 16);
    std::vector<bool> seen(20, false);
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (int i : *part) {
            CHECK(!seen[static_cast<std::size_t>(i)]);
            seen[static_cast<std::size_t>(i)] = true;
        }
    for (bool b : seen) CHECK(b);
    DatasetSplit again = split_by_song(20, 0.1, 0.1, 5);
    CHECK(again.train == s.train);
    CHECK(again.val == s.val);
    DatasetSplit other = split_by_song(20, 0.1, 0.1, 6);
    CHECK(other.train != s.train);

    DatasetSplit single = split_by_song(1, 0.05, 0.05, 1);
    CHECK(single.train.size() == 1);
    CHECK(single.val.empty());
}

TEST_CASE("learning rate decays linearly by stage down to the floor") {
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.lr = 0.0001;
    cfg.lr_decay_every = 10;
    ModelConfig mc = tiny_config();
    Model m(mc, 61);
    Trainer tr(m, cfg);
    CHECK(tr.epoch_lr(0) == doctest::Approx(0.0001).epsilon(1e-12));
    CHECK(tr.epoch_lr(9) == doctest::Approx(0.0001).epsilon(1e-12));
    CHECK(tr.epoch_lr(10) == doctest::Approx(0.0001 * (1.0 - 1.0 / 20.0)).epsilon(1e-12));
    CHECK(tr.epoch_lr(199) == doctest::Approx(0.0001 / 20.0).epsilon(1e-12));
    for (int e = 1; e < 200; ++e) CHECK(tr.epoch_lr(e) <= tr.epoch_lr(e - 1));

    TrainConfig zero = cfg;
    zero.lr = 0.0;
    Trainer tz(m, zero);
    CHECK(tz.epoch_lr(0) == 0.0);
    CHECK(tz.epoch_lr(150) == 0.0);
}

TEST_CASE("a tiny corpus is memorized and the run is reproducible") {
    const std::vector<SongRecord> corpus = smoke_corpus();
    EmbeddingTable table = smoke_table(corpus, 6, 77);

    TrainConfig cfg;
    cfg.epochs = 250;
    cfg.batch_size = 8;
    cfg.lr = 0.01;
    cfg.lr_decay_every = 100;
    cfg.val_fraction = 0.0;
    cfg.test_fraction = 0.0;
    cfg.seed = 5;

    ModelConfig mc;
    mc.input_width = 6;
    mc.hidden = 24;
    mc.class_embed = 8;
    mc.lyric_vocab = table.vocab().size();
    mc.pitch_classes = pitch_class_set(corpus);
    Model model(mc, cfg.seed, cfg.init_variance);

    TrainOutcome out = train_song_model(model, corpus, EncodingScheme::se, table, nullptr, cfg);
    REQUIRE(!out.result.diverged);
    REQUIRE(out.result.curve.size() == 250);
    CHECK(out.result.curve.back().train_loss < 0.1 * out.result.curve.front().train_loss);
    CHECK(std::isnan(out.test_loss));

    // the two sentences diverge at token two, so one lyric target of 22 stays
    // unpredictable; the melody heads see the whole sentence through attention
    const auto examples = build_examples(corpus, EncodingScheme::se, table, nullptr, mc.pitch_classes);
    StreamAccuracy acc = teacher_forced_accuracy(model, examples);
    CHECK(acc.lyric >= 0.9);
    CHECK(acc.pitch >= 0.95);
    CHECK(acc.duration >= 0.95);
    CHECK(acc.rest >= 0.95);

    // best checkpoint reloads into an equally accurate model
    Model reloaded(out.result.best);
    StreamAccuracy acc2 = teacher_forced_accuracy(reloaded, examples);
    CHECK(acc2.lyric >= 0.9);
    CHECK(reloaded.manifest().scheme == "se");
    CHECK(reloaded.manifest().syllable_vocab_hash == table.vocab().content_hash());

    // identical seeds replay the identical loss curve
    TrainConfig short_cfg = cfg;
    short_cfg.epochs = 5;
    Model a(mc, cfg.seed, cfg.init_variance), b(mc, cfg.seed, cfg.init_variance);
    TrainOutcome ra = train_song_model(a, corpus, EncodingScheme::se, table, nullptr, short_cfg);
    TrainOutcome rb = train_song_model(b, corpus, EncodingScheme::se, table, nullptr, short_cfg);
    REQUIRE(ra.result.curve.size() == rb.result.curve.size());
    for (std::size_t i = 0; i < ra.result.curve.size(); ++i)
        CHECK(ra.result.curve[i].train_loss == rb.result.curve[i].train_loss);

    TrainConfig other_seed = short_cfg;
    other_seed.seed = 6;
    Model c(mc, other_seed.seed, other_seed.init_variance);
    TrainOutcome rc = train_song_model(c, corpus, EncodingScheme::se, table, nullptr, other_seed);
    CHECK(rc.result.curve.front().train_loss != ra.result.curve.front().train_loss);
}

TEST_CASE("a zero learning rate leaves every parameter untouched") {
    const std::vector<SongRecord> corpus = smoke_corpus();
    EmbeddingTable table = smoke_table(corpus, 6, 78);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr = 0.0;
    cfg.val_fraction = 0.0;
    cfg.test_fraction = 0.0;
    ModelConfig mc;
    mc.input_width = 6;
    mc.hidden = 8;
    mc.class_embed = 4;
    mc.lyric_vocab = table.vocab().size();
    mc.pitch_classes = pitch_class_set(corpus);
    Model model(mc, 1, cfg.init_variance);
    std::vector<Tensor> before;
    for (const auto& p : model.params().params()) before.push_back(p->value);
    TrainOutcome out = train_song_model(model, corpus, EncodingScheme::se, table, nullptr, cfg);
    REQUIRE(!out.result.diverged);
    std::size_t i = 0;
    for (const auto& p : model.params().params()) CHECK(p->value == before[i++]);
}

TEST_CASE("a poisoned parameter aborts training with the last good snapshot") {
    const std::vector<SongRecord> corpus = smoke_corpus();
    EmbeddingTable table = smoke_table(corpus, 6, 79);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.val_fraction = 0.0;
    cfg.test_fraction = 0.0;
    ModelConfig mc;
    mc.input_width = 6;
    mc.hidden = 8;
    mc.class_embed = 4;
    mc.lyric_vocab = table.vocab().size();
    mc.pitch_classes = pitch_class_set(corpus);
    Model model(mc, 2, cfg.init_variance);
    model.params().find("gen.W")->value.at(0, 0) = std::numeric_limits<double>::infinity();
    TrainOutcome out = train_song_model(model, corpus, EncodingScheme::se, table, nullptr, cfg);
    CHECK(out.result.diverged);
    CHECK(out.result.curve.empty());
    CHECK(out.result.best.tensors.size() == model.params().tensor_count());
}

TEST_CASE("examples carry the begin row, end marker and class indices") {
    const std::vector<SongRecord> corpus = struct_corpus();
    EmbeddingTable table = smoke_table(corpus, 6, 80);
    const std::vector<int> classes = pitch_class_set(corpus);
    CHECK(classes == std::vector<int>{60, 62, 64, 65, 67, 69, 71, 72});

    auto examples = build_examples(corpus, EncodingScheme::se, table, nullptr, classes);
    REQUIRE(examples.size() == 2);
    const SentenceExample& ex = examples[0];
    CHECK(ex.encoder_inputs.rows() == 4);
    CHECK(ex.lyric_inputs.rows() == 5);
    REQUIRE(ex.lyric_targets.size() == 5);
    CHECK(ex.lyric_targets.back() == Vocabulary::kEos);

    Tensor begin = reserved_encoding(Vocabulary::kBos, EncodingScheme::se, table, nullptr);
    for (int k = 0; k < 6; ++k) CHECK(ex.lyric_inputs.at(0, k) == begin.at(0, k));

    const Vocabulary& vocab = table.vocab();
    for (int t = 0; t < 4; ++t) {
        CHECK(ex.lyric_targets[static_cast<std::size_t>(t)] ==
              vocab.id_of(corpus[0].syllables[static_cast<std::size_t>(t)].text));
        std::span<const double> row = table.vector_of(ex.lyric_targets[static_cast<std::size_t>(t)]);
        for (int k = 0; k < 6; ++k) {
            CHECK(ex.encoder_inputs.at(t, k) == row[static_cast<std::size_t>(k)]);
            CHECK(ex.lyric_inputs.at(t + 1, k) == row[static_cast<std::size_t>(k)]);
        }
    }
    CHECK(ex.pitch_targets == std::vector<int>{0, 1, 2, 3});
    CHECK(examples[1].pitch_targets == std::vector<int>{4, 5, 6, 7});
    CHECK(ex.duration_targets == std::vector<int>{0, 1, 2, 3});
    CHECK(ex.rest_targets == std::vector<int>{0, 1, 2, 3});

    auto no_end = build_examples(corpus, EncodingScheme::se, table, nullptr, classes, false);
    CHECK(no_end[0].lyric_inputs.rows() == 4);
    CHECK(no_end[0].lyric_targets.size() == 4);
}

TEST_CASE("manifest composition maps syllables to their usual word") {
    const std::vector<SongRecord> corpus = struct_corpus();
    EmbeddingTable syl = smoke_table(corpus, 4, 81);
    Vocabulary word_vocab = build_vocabulary(corpus, 1, TokenLevel::word);
    SkipGramConfig wc;
    wc.dimension = 4;
    wc.epochs = 0;
    EmbeddingTable words = SkipGramTrainer(word_vocab, wc, 82).take_table();

    ModelConfig mc = tiny_config();
    ModelManifest m = compose_manifest(EncodingScheme::swc, mc, syl, &words, corpus, "note");
    CHECK(m.scheme == "swc");
    CHECK(m.syllable_vocab_hash == syl.vocab().content_hash());
    CHECK(m.word_vocab_hash == word_vocab.content_hash());
    CHECK(m.config_echo == "note");
    // each one-syllable word maps its syllable to the same text's word id
    REQUIRE(m.syllable_to_word.size() == 8);
    for (const auto& [sid, wid] : m.syllable_to_word)
        CHECK(word_vocab.token_of(wid) == syl.vocab().token_of(sid));

    ModelManifest se = compose_manifest(EncodingScheme::se, mc, syl, nullptr, corpus, "");
    CHECK(se.word_vocab_hash == 0);
    CHECK(se.syllable_to_word.empty());
}
