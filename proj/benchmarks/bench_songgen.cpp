#include <benchmark/benchmark.h>

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "songgen/corpus.hpp"
#include "songgen/embedding.hpp"
#include "songgen/eval.hpp"
#include "songgen/graph.hpp"
#include "songgen/inference.hpp"
#include "songgen/model.hpp"
#include "songgen/train.hpp"

namespace {

using namespace songgen;

// Deterministic synthetic songs shaped like parsed records: one word per
// syllable, pitches inside a two-octave band, class values from the canonical
// sets. Freshly initialized weights cost the same as trained ones, so none of
// the benchmarks below pay for a real training run in their setup.
SongRecord make_song(int index, int sentences, int length) {
    static constexpr std::array<const char*, 8> kOnsets{"b", "d", "k", "l", "m", "n", "s", "t"};
    static constexpr std::array<const char*, 5> kVowels{"a", "e", "i", "o", "u"};
    SongRecord rec;
    rec.id = "bench-" + std::to_string(index);
    for (int s = 0; s < sentences; ++s) {
        rec.sentences.emplace_back();
        for (int i = 0; i < length; ++i) {
            const int syllable = static_cast<int>(rec.size());
            const int code = index * 131 + syllable * 7 + 13;
            rec.syllables.push_back({std::string(kOnsets[code % 8]) + kVowels[(code / 8) % 5],
                                     syllable, s});
            rec.melody.push_back({48 + code % 24,
                                  kDurationClasses[static_cast<std::size_t>(code) % kDurationClasses.size()],
                                  i == 0 ? 0.0 : kRestClasses[static_cast<std::size_t>(code) % kRestClasses.size()]});
            rec.words.push_back({syllable});
            rec.sentences.back().push_back(syllable);
        }
    }
    return rec;
}

std::vector<SongRecord> make_corpus(int songs, int sentences, int length, int first = 0) {
    std::vector<SongRecord> corpus;
    corpus.reserve(static_cast<std::size_t>(songs));
    for (int i = 0; i < songs; ++i) {
        corpus.push_back(make_song(first + i, sentences, length));
        validate_record(corpus.back());
    }
    return corpus;
}

struct Workbench {
    std::vector<SongRecord> corpus;
    EmbeddingTable table;
    Model model;
    std::vector<SentenceExample> examples;
};

Workbench make_workbench(int songs, int length, int dimension, int hidden, int class_embed) {
    std::vector<SongRecord> corpus = make_corpus(songs, 1, length);
    Vocabulary vocab = build_vocabulary(corpus, 1, TokenLevel::syllable);
    SkipGramConfig sg;
    sg.dimension = dimension;
    sg.epochs = 0;
    EmbeddingTable table = SkipGramTrainer(vocab, sg, 7).take_table();
    ModelConfig mc;
    mc.input_width = dimension;
    mc.hidden = hidden;
    mc.class_embed = class_embed;
    mc.lyric_vocab = table.vocab().size();
    mc.pitch_classes = pitch_class_set(corpus);
    Model model(mc, 11);
    model.set_manifest(compose_manifest(EncodingScheme::se, mc, table, nullptr, corpus, ""));
    std::vector<SentenceExample> examples =
        build_examples(corpus, EncodingScheme::se, table, nullptr, mc.pitch_classes);
    return Workbench{std::move(corpus), std::move(table), std::move(model), std::move(examples)};
}

void BM_MidiExport(benchmark::State& state) {
    const SongRecord rec = make_song(0, 4, 16);
    for (auto _ : state) {
        std::string bytes = export_midi(rec);
        benchmark::DoNotOptimize(bytes.data());
    }
}
BENCHMARK(BM_MidiExport);

void BM_MidiParse(benchmark::State& state) {
    const std::string bytes = export_midi(make_song(0, 4, 16));
    for (auto _ : state) {
        ParseOutcome out = parse_midi_song(bytes, "bench");
        benchmark::DoNotOptimize(out.record);
    }
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_MidiParse);

void BM_ComputeStats(benchmark::State& state) {
    const std::vector<SongRecord> corpus = make_corpus(64, 4, 16);
    for (auto _ : state) {
        CorpusStats stats = compute_stats(corpus);
        benchmark::DoNotOptimize(stats.note_count);
    }
    state.SetItemsProcessed(state.iterations() * 64 * 4 * 16);
}
BENCHMARK(BM_ComputeStats);

void BM_MelodyBleu(benchmark::State& state) {
    const std::vector<SongRecord> candidates = make_corpus(32, 4, 16);
    const std::vector<SongRecord> references = make_corpus(32, 4, 16, 100);
    for (auto _ : state) {
        BleuReport report = melody_bleu(candidates, references);
        benchmark::DoNotOptimize(report);
    }
}
BENCHMARK(BM_MelodyBleu);

// One positive pair with freshly drawn negatives, the unit of work the
// embedding trainer repeats for every context pair in the corpus.
void BM_SkipGramStep(benchmark::State& state) {
    const std::vector<SongRecord> corpus = make_corpus(16, 2, 24);
    const Vocabulary vocab = build_vocabulary(corpus, 1, TokenLevel::syllable);
    SkipGramConfig cfg;
    SkipGramTrainer trainer(vocab, cfg, 19);
    const int span = vocab.size() - Vocabulary::kReserved;
    int center = 0;
    int context = span / 2;
    for (auto _ : state) {
        const std::vector<int> negatives = trainer.draw_negatives(Vocabulary::kReserved + context);
        trainer.sgd_pair(Vocabulary::kReserved + center, Vocabulary::kReserved + context,
                         negatives, cfg.initial_lr);
        center = (center + 1) % span;
        context = (context + 3) % span;
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SkipGramStep);

void BM_SentenceForward(benchmark::State& state) {
    const Workbench wb = make_workbench(8, static_cast<int>(state.range(0)), 50, 64, 16);
    const SentenceExample& ex = wb.examples.front();
    for (auto _ : state) {
        Graph g;
        SentenceForward out = wb.model.forward(g, ex);
        benchmark::DoNotOptimize(out.total);
    }
}
BENCHMARK(BM_SentenceForward)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_SentenceForwardBackward(benchmark::State& state) {
    const Workbench wb = make_workbench(8, static_cast<int>(state.range(0)), 50, 64, 16);
    const SentenceExample& ex = wb.examples.front();
    for (auto _ : state) {
        Graph g;
        SentenceForward out = wb.model.forward(g, ex);
        g.backward(out.total);
        benchmark::DoNotOptimize(g.grad(out.total));
    }
}
BENCHMARK(BM_SentenceForwardBackward)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_GenerateSong(benchmark::State& state) {
    const Workbench wb = make_workbench(8, 16, 32, 32, 8);
    GenerationConfig cfg;
    cfg.target_syllables = 100;
    cfg.seed = 23;
    const std::vector<std::string> seed{wb.corpus.front().syllables.front().text};
    std::int64_t syllables = 0;
    for (auto _ : state) {
        GenerationSession session(wb.model, wb.table, nullptr, cfg);
        GeneratedSong song = session.generate_song(seed);
        syllables += static_cast<std::int64_t>(song.syllable_count());
        benchmark::DoNotOptimize(song.sentences.data());
    }
    state.SetItemsProcessed(syllables);
}
BENCHMARK(BM_GenerateSong)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
