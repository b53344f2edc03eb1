#include "songgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace songgen {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

ToneReport from_pitches(const std::set<int>& pitches) {
    ToneReport r;
    r.unique_tones = static_cast<int>(pitches.size());
    r.min_tone = *pitches.begin();
    r.max_tone = *pitches.rbegin();
    r.tone_span = r.max_tone - r.min_tone;
    return r;
}

// clipped m-gram matches and candidate m-gram count for one pair
void accumulate_ngrams(const std::vector<int>& cand, const std::vector<int>& ref, int m,
                       std::int64_t& matches, std::int64_t& total) {
    if (static_cast<int>(cand.size()) < m) return;
    std::map<std::vector<int>, std::int64_t> cand_counts;
    for (std::size_t i = 0; i + m <= cand.size(); ++i)
        ++cand_counts[std::vector<int>(cand.begin() + static_cast<std::ptrdiff_t>(i),
                                       cand.begin() + static_cast<std::ptrdiff_t>(i) + m)];
    std::map<std::vector<int>, std::int64_t> ref_counts;
    for (std::size_t i = 0; i + m <= ref.size(); ++i)
        ++ref_counts[std::vector<int>(ref.begin() + static_cast<std::ptrdiff_t>(i),
                                      ref.begin() + static_cast<std::ptrdiff_t>(i) + m)];
    for (const auto& [gram, count] : cand_counts) {
        total += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches += std::min(count, it->second);
    }
}

double normalized_l1(const auto& a, const auto& b, const char* what) {
    if (a.empty() || b.empty()) fail(std::string("empty ") + what + " histogram");
    double ta = 0.0, tb = 0.0;
    for (const auto& [bin, count] : a) ta += static_cast<double>(count);
    for (const auto& [bin, count] : b) tb += static_cast<double>(count);
    if (ta <= 0.0 || tb <= 0.0) fail(std::string("empty ") + what + " histogram");
    double l1 = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() || ib != b.end()) {
        if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
            l1 += static_cast<double>(ia->second) / ta;
            ++ia;
        } else if (ia == a.end() || ib->first < ia->first) {
            l1 += static_cast<double>(ib->second) / tb;
            ++ib;
        } else {
            l1 += std::abs(static_cast<double>(ia->second) / ta - static_cast<double>(ib->second) / tb);
            ++ia;
            ++ib;
        }
    }
    return l1;
}

}  // namespace

ToneReport tone_stats(std::span<const MelodyTriple> notes) {
    if (notes.empty()) fail("tone_stats needs at least one note");
    std::set<int> pitches;
    for (const MelodyTriple& m : notes) pitches.insert(m.pitch);
    return from_pitches(pitches);
}

ToneReport tone_stats(std::span<const SongRecord> records) {
    std::set<int> pitches;
    for (const SongRecord& rec : records)
        for (const MelodyTriple& m : rec.melody) pitches.insert(m.pitch);
    if (pitches.empty()) fail("tone_stats needs at least one note");
    return from_pitches(pitches);
}

double bleu_n(std::span<const std::vector<int>> candidates,
              std::span<const std::vector<int>> references, int n) {
    if (n < 1 || n > 5) fail("BLEU order must lie in 1..5");
    if (candidates.size() != references.size())
        fail("BLEU needs exactly one reference per candidate");
    if (candidates.empty()) fail("BLEU needs at least one candidate");

    std::int64_t cand_len = 0, ref_len = 0;
    for (const auto& c : candidates) cand_len += static_cast<std::int64_t>(c.size());
    for (const auto& r : references) ref_len += static_cast<std::int64_t>(r.size());
    if (cand_len == 0) return 0.0;

    double log_sum = 0.0;
    for (int m = 1; m <= n; ++m) {
        std::int64_t matches = 0, total = 0;
        for (std::size_t i = 0; i < candidates.size(); ++i)
            accumulate_ngrams(candidates[i], references[i], m, matches, total);
        if (matches == 0 || total == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matches) / static_cast<double>(total));
    }
    const double bp =
        cand_len >= ref_len ? 1.0
                            : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return bp * std::exp(log_sum / static_cast<double>(n));
}

BleuReport melody_bleu(std::span<const SongRecord> candidates,
                       std::span<const SongRecord> references) {
    if (candidates.size() != references.size())
        fail("melody BLEU needs exactly one reference song per candidate");
    auto sequences = [](std::span<const SongRecord> recs, auto&& token) {
        std::vector<std::vector<int>> out;
        for (const SongRecord& rec : recs) {
            std::vector<int> seq;
            seq.reserve(rec.melody.size());
            for (const MelodyTriple& m : rec.melody) seq.push_back(token(m));
            out.push_back(std::move(seq));
        }
        return out;
    };
    const auto cp = sequences(candidates, [](const MelodyTriple& m) { return m.pitch; });
    const auto rp = sequences(references, [](const MelodyTriple& m) { return m.pitch; });
    const auto cd = sequences(candidates, [](const MelodyTriple& m) { return duration_class_index(m.duration); });
    const auto rd = sequences(references, [](const MelodyTriple& m) { return duration_class_index(m.duration); });
    const auto cr = sequences(candidates, [](const MelodyTriple& m) { return rest_class_index(m.rest); });
    const auto rr = sequences(references, [](const MelodyTriple& m) { return rest_class_index(m.rest); });

    BleuReport report;
    for (int n = 1; n <= 5; ++n) {
        report.pitch[static_cast<std::size_t>(n - 1)] = bleu_n(cp, rp, n);
        report.duration[static_cast<std::size_t>(n - 1)] = bleu_n(cd, rd, n);
        report.rest[static_cast<std::size_t>(n - 1)] = bleu_n(cr, rr, n);
    }
    return report;
}

HistogramDivergence histogram_divergence(const CorpusStats& generated, const CorpusStats& reference) {
    HistogramDivergence d;
    d.pitch = normalized_l1(generated.pitch_histogram, reference.pitch_histogram, "pitch");
    d.interval = normalized_l1(generated.interval_histogram, reference.interval_histogram, "interval");
    d.range = normalized_l1(generated.range_histogram, reference.range_histogram, "range");
    d.duration = normalized_l1(generated.duration_histogram, reference.duration_histogram, "duration");
    d.rest = normalized_l1(generated.rest_histogram, reference.rest_histogram, "rest");
    return d;
}

std::string render_text(const EvalReport& report) {
    std::ostringstream out;
    out << "tones:\n";
    out << "  unique: " << report.tones.unique_tones << '\n';
    out << "  max: " << report.tones.max_tone << '\n';
    out << "  min: " << report.tones.min_tone << '\n';
    out << "  span: " << report.tones.tone_span << '\n';
    if (report.has_bleu) {
        auto block = [&](const char* name, const std::array<double, 5>& scores) {
            out << name << ":\n";
            for (int n = 1; n <= 5; ++n)
                out << "  bleu-" << n << ": " << scores[static_cast<std::size_t>(n - 1)] << '\n';
        };
        block("pitch", report.bleu.pitch);
        block("duration", report.bleu.duration);
        block("rest", report.bleu.rest);
    }
    if (report.has_divergence) {
        out << "histogram_l1:\n";
        out << "  pitch: " << report.divergence.pitch << '\n';
        out << "  interval: " << report.divergence.interval << '\n';
        out << "  range: " << report.divergence.range << '\n';
        out << "  duration: " << report.divergence.duration << '\n';
        out << "  rest: " << report.divergence.rest << '\n';
    }
    return out.str();
}

std::string tone_csv_header() { return "label,unique_tones,max_tone,min_tone,tone_span"; }

std::string tone_csv_row(const std::string& label, const ToneReport& tones) {
    std::ostringstream out;
    out << label << ',' << tones.unique_tones << ',' << tones.max_tone << ',' << tones.min_tone << ','
        << tones.tone_span;
    return out.str();
}

}  // namespace songgen
