#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "songgen/corpus.hpp"

namespace songgen {

struct ToneReport {
    int unique_tones = 0;
    int max_tone = 0;
    int min_tone = 0;
    int tone_span = 0;  // max - min
};

// Pooled over every supplied note; throws on empty input.
ToneReport tone_stats(std::span<const MelodyTriple> notes);
ToneReport tone_stats(std::span<const SongRecord> records);

// Corpus-level BLEU-n: brevity penalty times the geometric mean of clipped
// m-gram precisions for m = 1..n. Candidates pair with references 1:1.
// Any zero precision yields 0; sequences shorter than m add no m-grams.
double bleu_n(std::span<const std::vector<int>> candidates,
              std::span<const std::vector<int>> references, int n);

struct BleuReport {
    std::array<double, 5> pitch{};     // index m-1 holds BLEU-m
    std::array<double, 5> duration{};
    std::array<double, 5> rest{};
};

// Per-attribute BLEU over paired songs; duration and rest compare class
// indices, pitch compares MIDI numbers.
BleuReport melody_bleu(std::span<const SongRecord> candidates,
                       std::span<const SongRecord> references);

struct HistogramDivergence {
    double pitch = 0.0;
    double interval = 0.0;
    double range = 0.0;
    double duration = 0.0;
    double rest = 0.0;
};

// L1 distance between normalized histograms over the union of bins, in [0, 2].
HistogramDivergence histogram_divergence(const CorpusStats& generated, const CorpusStats& reference);

struct EvalReport {
    ToneReport tones;
    BleuReport bleu;
    bool has_bleu = false;
    HistogramDivergence divergence;
    bool has_divergence = false;
};

std::string render_text(const EvalReport& report);  // key: value blocks
// Comma-separated tone table; one row per labelled run.
std::string tone_csv_header();
std::string tone_csv_row(const std::string& label, const ToneReport& tones);

}  // namespace songgen
