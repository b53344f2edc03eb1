#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "songgen/midi.hpp"

namespace songgen {

// Note lengths in beats a triple may carry; rests may additionally be zero.
inline constexpr std::array<double, 11> kDurationClasses{0.125, 0.25, 0.5, 0.75, 1.0, 1.5,
                                                         2.0,   4.0,  8.0, 16.0, 32.0};
inline constexpr std::array<double, 12> kRestClasses{0.0, 0.125, 0.25, 0.5, 0.75, 1.0,
                                                     1.5, 2.0,   4.0,  8.0, 16.0, 32.0};
inline constexpr int kPitchCount = 128;

struct MelodyTriple {
    int pitch = 0;       // MIDI note number, 0..127
    double duration = 0;  // member of kDurationClasses
    double rest = 0;      // member of kRestClasses; gap before the note
};

struct SyllableToken {
    std::string text;        // normalized, non-empty
    int word_index = 0;      // into SongRecord::words
    int sentence_index = 0;  // into SongRecord::sentences
};

struct SongRecord {
    std::string id;
    std::vector<SyllableToken> syllables;
    std::vector<MelodyTriple> melody;           // parallel to syllables
    std::vector<std::vector<int>> words;        // syllable indices per word
    std::vector<std::vector<int>> sentences;    // word indices per sentence

    std::size_t size() const noexcept { return syllables.size(); }
};

// Throws std::logic_error when the parallel-array/grouping invariants are broken.
void validate_record(const SongRecord& rec);

// Nearest member of the class set; exact midpoints round toward the smaller value.
double quantize_duration(double beats);
double quantize_rest(double beats);
int duration_class_index(double value);  // exact member lookup, throws otherwise
int rest_class_index(double value);

// Lowercases and strips punctuation, keeping apostrophes between letters.
std::string normalize_syllable(std::string_view raw);

struct ParseOptions {
    int min_syllables = 20;
    bool allow_text_meta = true;  // fall back to meta 0x01 when no 0x05 events exist
};

struct ParseOutcome {
    std::optional<SongRecord> record;
    std::string skip_reason;  // set iff record is empty

    bool ok() const noexcept { return record.has_value(); }
};

// Aligns the lyric stream against the note track whose opening notes share the
// first lyric's timestamp, then walks both streams in tandem emitting a triple
// whenever note and lyric coincide within a sixteenth-note tolerance.
ParseOutcome parse_midi_song(const midi::File& file, std::string id, const ParseOptions& opt = {});
ParseOutcome parse_midi_song(std::string_view bytes, std::string id, const ParseOptions& opt = {});

// Renders the record as a single-track MIDI file; parsing the result yields
// the very same syllables, groupings and triples.
std::string export_midi(const SongRecord& rec);

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;
    static constexpr int kReserved = 4;

    Vocabulary();
    explicit Vocabulary(const std::vector<std::pair<std::string, std::int64_t>>& token_freqs);

    int id_of(std::string_view token) const noexcept;  // kUnk when absent
    const std::string& token_of(int id) const;
    std::int64_t frequency(int id) const;  // 0 for reserved ids
    int size() const noexcept { return static_cast<int>(tokens_.size()); }

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    std::uint64_t content_hash() const;  // stable digest over tokens and frequencies

private:
    std::vector<std::string> tokens_;
    std::vector<std::int64_t> freqs_;
    std::unordered_map<std::string, int> ids_;
};

enum class TokenLevel { syllable, word };

// The text of a word is its syllables joined in order.
std::string word_text(const SongRecord& rec, int word);

// Tokens below min_count collapse to UNK; ids run by descending frequency,
// ties broken lexicographically.
Vocabulary build_vocabulary(std::span<const SongRecord> records, int min_count, TokenLevel level);

struct CorpusStats {
    std::int64_t song_count = 0;
    std::int64_t note_count = 0;
    std::int64_t word_count = 0;
    std::int64_t sentence_count = 0;
    std::map<int, std::int64_t> pitch_histogram;
    std::map<int, std::int64_t> interval_histogram;  // consecutive pitch deltas within a song
    std::map<int, std::int64_t> range_histogram;     // per-song max pitch minus min pitch
    std::map<double, std::int64_t> duration_histogram;
    std::map<double, std::int64_t> rest_histogram;

    bool operator==(const CorpusStats&) const = default;
};

CorpusStats compute_stats(std::span<const SongRecord> records);
void save_stats(const std::string& path, const CorpusStats& stats);
CorpusStats load_stats(const std::string& path);

// Beats rendered with the fewest digits that survive a round trip.
std::string format_beats(double beats);

// One tab-separated line per song: id, syllables, pitch:duration:rest triples,
// per-syllable word index, per-word sentence index.
std::string to_corpus_line(const SongRecord& rec);
SongRecord from_corpus_line(std::string_view line);
void save_corpus(const std::string& path, std::span<const SongRecord> records);
std::vector<SongRecord> load_corpus(const std::string& path);

}  // namespace songgen
