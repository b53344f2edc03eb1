#include "songgen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "songgen/rng.hpp"

namespace songgen {

namespace {

template <std::size_t N>
double nearest_class(const std::array<double, N>& classes, double beats) {
    double best = classes[0];
    double best_dist = std::abs(beats - classes[0]);
    for (std::size_t i = 1; i < N; ++i) {
        double d = std::abs(beats - classes[i]);
        if (d < best_dist) {  // ties keep the earlier, i.e. smaller, class
            best = classes[i];
            best_dist = d;
        }
    }
    return best;
}

template <std::size_t N>
int exact_class_index(const std::array<double, N>& classes, double value, const char* what) {
    for (std::size_t i = 0; i < N; ++i)
        if (classes[i] == value) return static_cast<int>(i);
    throw std::invalid_argument(std::string(what) + " " + format_beats(value) + " is not a class member");
}

}  // namespace

double quantize_duration(double beats) {
    if (!std::isfinite(beats)) throw std::invalid_argument("non-finite duration");
    return nearest_class(kDurationClasses, beats);
}

double quantize_rest(double beats) {
    if (!std::isfinite(beats)) throw std::invalid_argument("non-finite rest");
    return nearest_class(kRestClasses, beats);
}

int duration_class_index(double value) {
    return exact_class_index(kDurationClasses, value, "duration");
}

int rest_class_index(double value) {
    return exact_class_index(kRestClasses, value, "rest");
}

std::string normalize_syllable(std::string_view raw) {
    std::string out;
    for (char ch : raw) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            out.push_back(static_cast<char>(std::tolower(c)));
        } else if (c == '\'' && !out.empty()) {
            out.push_back('\'');
        }
    }
    while (!out.empty() && out.back() == '\'') out.pop_back();
    return out;
}

void validate_record(const SongRecord& rec) {
    if (rec.syllables.size() != rec.melody.size())
        throw std::logic_error("record '" + rec.id + "': syllable and melody lengths differ");
    std::vector<int> word_of(rec.syllables.size(), -1);
    for (std::size_t w = 0; w < rec.words.size(); ++w) {
        if (rec.words[w].empty()) throw std::logic_error("record '" + rec.id + "': empty word group");
        for (int s : rec.words[w]) {
            if (s < 0 || s >= static_cast<int>(rec.syllables.size()) || word_of[s] != -1)
                throw std::logic_error("record '" + rec.id + "': bad word grouping");
            word_of[s] = static_cast<int>(w);
        }
    }
    std::vector<int> sentence_of(rec.words.size(), -1);
    for (std::size_t t = 0; t < rec.sentences.size(); ++t) {
        if (rec.sentences[t].empty()) throw std::logic_error("record '" + rec.id + "': empty sentence group");
        for (int w : rec.sentences[t]) {
            if (w < 0 || w >= static_cast<int>(rec.words.size()) || sentence_of[w] != -1)
                throw std::logic_error("record '" + rec.id + "': bad sentence grouping");
            sentence_of[w] = static_cast<int>(t);
        }
    }
    int prev_word = 0, prev_sentence = 0;
    for (std::size_t i = 0; i < rec.syllables.size(); ++i) {
        const SyllableToken& s = rec.syllables[i];
        if (s.text.empty()) throw std::logic_error("record '" + rec.id + "': empty syllable text");
        if (word_of[i] != s.word_index || sentence_of[s.word_index] != s.sentence_index)
            throw std::logic_error("record '" + rec.id + "': grouping and indices disagree");
        if (s.word_index < prev_word || s.sentence_index < prev_sentence)
            throw std::logic_error("record '" + rec.id + "': indices decrease along the song");
        prev_word = s.word_index;
        prev_sentence = s.sentence_index;

        const MelodyTriple& m = rec.melody[i];
        if (m.pitch < 0 || m.pitch >= kPitchCount)
            throw std::logic_error("record '" + rec.id + "': pitch out of range");
        if (std::find(kDurationClasses.begin(), kDurationClasses.end(), m.duration) == kDurationClasses.end())
            throw std::logic_error("record '" + rec.id + "': duration is not a class member");
        if (std::find(kRestClasses.begin(), kRestClasses.end(), m.rest) == kRestClasses.end())
            throw std::logic_error("record '" + rec.id + "': rest is not a class member");
    }
    for (int w : word_of)
        if (w == -1) throw std::logic_error("record '" + rec.id + "': syllable missing from word grouping");
    for (int t : sentence_of)
        if (t == -1) throw std::logic_error("record '" + rec.id + "': word missing from sentence grouping");
}

namespace {

struct Markers {
    bool new_word = false;
    bool new_sentence = false;

    void merge(const Markers& other) {
        new_word |= other.new_word;
        new_sentence |= other.new_sentence;
    }
};

Markers scan_markers(std::string_view raw) {
    Markers m;
    for (char ch : raw) {
        if (ch == '\n' || ch == '\r') {
            m.new_sentence = true;
            m.new_word = true;
        } else if (ch == ' ' || ch == '\t') {
            m.new_word = true;
        } else {
            break;
        }
    }
    return m;
}

struct RecordBuilder {
    SongRecord rec;

    void add(std::string text, Markers m, MelodyTriple triple) {
        if (rec.syllables.empty()) {
            m.new_word = true;
            m.new_sentence = true;
        }
        if (m.new_sentence) {
            rec.sentences.emplace_back();
            m.new_word = true;
        }
        if (m.new_word) {
            rec.sentences.back().push_back(static_cast<int>(rec.words.size()));
            rec.words.emplace_back();
        }
        int syl = static_cast<int>(rec.syllables.size());
        rec.words.back().push_back(syl);
        rec.syllables.push_back({std::move(text), static_cast<int>(rec.words.size()) - 1,
                                 static_cast<int>(rec.sentences.size()) - 1});
        rec.melody.push_back(triple);
    }
};

// Same-start chords collapse to their top note; zero-length notes vanish.
std::vector<midi::NoteEvent> melodic_line(const std::vector<midi::NoteEvent>& notes) {
    std::vector<midi::NoteEvent> out;
    for (const midi::NoteEvent& n : notes) {
        if (n.length <= 0) continue;
        if (!out.empty() && out.back().tick == n.tick) {
            if (n.pitch > out.back().pitch) out.back() = n;
        } else {
            out.push_back(n);
        }
    }
    return out;
}

std::string sanitize_id(std::string id) {
    for (char& c : id)
        if (c == '\t' || c == '\n' || c == '\r') c = '_';
    return id;
}

}  // namespace

ParseOutcome parse_midi_song(const midi::File& file, std::string id, const ParseOptions& opt) {
    const std::vector<midi::TextEvent>* lyrics = &file.lyrics;
    if (lyrics->empty() && opt.allow_text_meta) lyrics = &file.texts;
    if (lyrics->empty()) return {std::nullopt, "no aligned track"};

    std::int64_t first_lyric_tick = -1;
    for (const midi::TextEvent& e : *lyrics) {
        if (!normalize_syllable(e.text).empty()) {
            first_lyric_tick = e.tick;
            break;
        }
    }
    if (first_lyric_tick < 0) return {std::nullopt, "no aligned track"};

    const double tolerance = file.division / 4.0;
    std::vector<midi::NoteEvent> notes;
    std::size_t start_note = 0;
    bool found = false;
    for (const auto& track : file.tracks) {
        std::vector<midi::NoteEvent> line = melodic_line(track);
        std::size_t probe = std::min<std::size_t>(5, line.size());
        for (std::size_t i = 0; i < probe; ++i) {
            if (std::abs(static_cast<double>(line[i].tick - first_lyric_tick)) <= tolerance) {
                notes = std::move(line);
                start_note = i;
                found = true;
                break;
            }
        }
        if (found) break;
    }
    if (!found) return {std::nullopt, "no aligned track"};

    RecordBuilder builder;
    builder.rec.id = sanitize_id(std::move(id));
    Markers pending;
    std::size_t ni = start_note;
    std::size_t li = 0;
    std::int64_t prev_end = -1;
    while (ni < notes.size() && li < lyrics->size()) {
        const midi::TextEvent& lyric = (*lyrics)[li];
        Markers m = scan_markers(lyric.text);
        m.merge(pending);
        std::string text = normalize_syllable(lyric.text);
        if (text.empty()) {  // marker-only event: keep its markers, consume no note
            pending = m;
            ++li;
            continue;
        }
        const midi::NoteEvent& note = notes[ni];
        const double gap = static_cast<double>(note.tick - lyric.tick);
        if (std::abs(gap) <= tolerance) {
            double rest_beats = 0.0;
            if (prev_end >= 0 && note.tick > prev_end)
                rest_beats = static_cast<double>(note.tick - prev_end) / file.division;
            MelodyTriple triple{note.pitch, quantize_duration(static_cast<double>(note.length) / file.division),
                                quantize_rest(rest_beats)};
            builder.add(std::move(text), m, triple);
            prev_end = note.tick + note.length;
            pending = Markers{};
            ++ni;
            ++li;
        } else if (gap < -tolerance) {
            ++ni;  // note well before the lyric: melody-only note
        } else {
            pending = m;  // lyric has no note; keep its boundary markers
            ++li;
        }
    }

    if (static_cast<int>(builder.rec.size()) < opt.min_syllables)
        return {std::nullopt, "insufficient lyrics"};
    validate_record(builder.rec);
    return {std::move(builder.rec), ""};
}

ParseOutcome parse_midi_song(std::string_view bytes, std::string id, const ParseOptions& opt) {
    return parse_midi_song(midi::parse_bytes(bytes), std::move(id), opt);
}

std::string export_midi(const SongRecord& rec) {
    validate_record(rec);
    constexpr int kDivision = 480;
    std::vector<midi::TrackEvent> events;
    events.push_back({0, midi::TrackEvent::Kind::tempo, 0, 500000, ""});
    std::int64_t cursor = 0;
    for (std::size_t i = 0; i < rec.size(); ++i) {
        const SyllableToken& s = rec.syllables[i];
        const MelodyTriple& m = rec.melody[i];
        std::int64_t start = cursor + std::llround(m.rest * kDivision);
        std::int64_t length = std::llround(m.duration * kDivision);
        std::string text = s.text;
        if (i > 0) {
            if (s.sentence_index != rec.syllables[i - 1].sentence_index)
                text.insert(0, "\n");
            else if (s.word_index != rec.syllables[i - 1].word_index)
                text.insert(0, " ");
        }
        events.push_back({start, midi::TrackEvent::Kind::lyric, 0, 0, std::move(text)});
        events.push_back({start, midi::TrackEvent::Kind::note_on, m.pitch, 0, ""});
        events.push_back({start + length, midi::TrackEvent::Kind::note_off, m.pitch, 0, ""});
        cursor = start + length;
    }
    return midi::write_format0(kDivision, std::move(events));
}

Vocabulary::Vocabulary() {
    tokens_ = {"<pad>", "<unk>", "<bos>", "<eos>"};
    freqs_ = {0, 0, 0, 0};
    for (int i = 0; i < kReserved; ++i) ids_.emplace(tokens_[i], i);
}

Vocabulary::Vocabulary(const std::vector<std::pair<std::string, std::int64_t>>& token_freqs) : Vocabulary() {
    auto sorted = token_freqs;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (auto& [token, freq] : sorted) {
        if (freq <= 0) throw std::invalid_argument("token '" + token + "' has non-positive frequency");
        if (ids_.contains(token)) throw std::invalid_argument("duplicate token '" + token + "'");
        ids_.emplace(token, static_cast<int>(tokens_.size()));
        tokens_.push_back(token);
        freqs_.push_back(freq);
    }
}

int Vocabulary::id_of(std::string_view token) const noexcept {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::int64_t Vocabulary::frequency(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
    return freqs_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::content_hash() const {
    std::string blob;
    for (int i = 0; i < size(); ++i) {
        blob += tokens_[static_cast<std::size_t>(i)];
        blob += '\n';
        blob += std::to_string(freqs_[static_cast<std::size_t>(i)]);
        blob += '\n';
    }
    return fnv1a64(blob);
}

std::string word_text(const SongRecord& rec, int word) {
    std::string out;
    for (int s : rec.words.at(static_cast<std::size_t>(word))) out += rec.syllables[static_cast<std::size_t>(s)].text;
    return out;
}

Vocabulary build_vocabulary(std::span<const SongRecord> records, int min_count, TokenLevel level) {
    if (min_count < 1) throw std::invalid_argument("min_count must be at least 1");
    std::unordered_map<std::string, std::int64_t> counts;
    for (const SongRecord& rec : records) {
        if (level == TokenLevel::syllable) {
            for (const SyllableToken& s : rec.syllables) ++counts[s.text];
        } else {
            for (std::size_t w = 0; w < rec.words.size(); ++w) ++counts[word_text(rec, static_cast<int>(w))];
        }
    }
    if (counts.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
    std::vector<std::pair<std::string, std::int64_t>> kept;
    for (auto& [token, freq] : counts)
        if (freq >= min_count) kept.emplace_back(token, freq);
    return Vocabulary(kept);
}

CorpusStats compute_stats(std::span<const SongRecord> records) {
    CorpusStats st;
    for (const SongRecord& rec : records) {
        ++st.song_count;
        st.note_count += static_cast<std::int64_t>(rec.size());
        st.word_count += static_cast<std::int64_t>(rec.words.size());
        st.sentence_count += static_cast<std::int64_t>(rec.sentences.size());
        int lo = kPitchCount, hi = -1;
        for (std::size_t i = 0; i < rec.melody.size(); ++i) {
            const MelodyTriple& m = rec.melody[i];
            ++st.pitch_histogram[m.pitch];
            ++st.duration_histogram[m.duration];
            ++st.rest_histogram[m.rest];
            lo = std::min(lo, m.pitch);
            hi = std::max(hi, m.pitch);
            if (i > 0) ++st.interval_histogram[m.pitch - rec.melody[i - 1].pitch];
        }
        if (hi >= 0) ++st.range_histogram[hi - lo];
    }
    return st;
}

std::string format_beats(double beats) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", beats);
    std::string s = buf;
    while (s.find('.') != std::string::npos && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t p = s.find(sep, start);
        if (p == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, p - start));
        start = p + 1;
    }
}

int parse_int(std::string_view s, const char* what) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::runtime_error(std::string("bad ") + what + " field: '" + std::string(s) + "'");
    return v;
}

double parse_beats(std::string_view s, const char* what) {
    std::string buf(s);
    char* end = nullptr;
    double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size() || buf.empty())
        throw std::runtime_error(std::string("bad ") + what + " field: '" + buf + "'");
    return v;
}

}  // namespace

std::string to_corpus_line(const SongRecord& rec) {
    validate_record(rec);
    std::string out = rec.id;
    out += '\t';
    for (std::size_t i = 0; i < rec.syllables.size(); ++i) {
        if (i) out += ' ';
        out += rec.syllables[i].text;
    }
    out += '\t';
    for (std::size_t i = 0; i < rec.melody.size(); ++i) {
        const MelodyTriple& m = rec.melody[i];
        if (i) out += ' ';
        out += std::to_string(m.pitch);
        out += ':';
        out += format_beats(m.duration);
        out += ':';
        out += format_beats(m.rest);
    }
    out += '\t';
    for (std::size_t i = 0; i < rec.syllables.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(rec.syllables[i].word_index);
    }
    out += '\t';
    for (std::size_t w = 0; w < rec.words.size(); ++w) {
        if (w) out += ' ';
        int first_syl = rec.words[w].front();
        out += std::to_string(rec.syllables[static_cast<std::size_t>(first_syl)].sentence_index);
    }
    return out;
}

SongRecord from_corpus_line(std::string_view line) {
    auto fields = split(line, '\t');
    if (fields.size() != 5) throw std::runtime_error("corpus line does not have 5 tab-separated fields");
    SongRecord rec;
    rec.id = std::string(fields[0]);

    auto tokens_of = [](std::string_view f) {
        return f.empty() ? std::vector<std::string_view>{} : split(f, ' ');
    };
    auto syllables = tokens_of(fields[1]);
    auto triples = tokens_of(fields[2]);
    auto word_ids = tokens_of(fields[3]);
    auto sentence_ids = tokens_of(fields[4]);
    if (syllables.size() != triples.size() || syllables.size() != word_ids.size())
        throw std::runtime_error("corpus line field lengths disagree");

    for (std::size_t i = 0; i < syllables.size(); ++i) {
        auto parts = split(triples[i], ':');
        if (parts.size() != 3) throw std::runtime_error("melody triple must be pitch:duration:rest");
        MelodyTriple m{parse_int(parts[0], "pitch"), parse_beats(parts[1], "duration"),
                       parse_beats(parts[2], "rest")};
        int w = parse_int(word_ids[i], "word index");
        if (w == static_cast<int>(rec.words.size())) rec.words.emplace_back();
        if (w != static_cast<int>(rec.words.size()) - 1)
            throw std::runtime_error("word indices must be contiguous and non-decreasing");
        rec.words.back().push_back(static_cast<int>(i));
        rec.syllables.push_back({std::string(syllables[i]), w, 0});
        rec.melody.push_back(m);
    }
    for (std::size_t w = 0; w < sentence_ids.size(); ++w) {
        int t = parse_int(sentence_ids[w], "sentence index");
        if (t == static_cast<int>(rec.sentences.size())) rec.sentences.emplace_back();
        if (t != static_cast<int>(rec.sentences.size()) - 1)
            throw std::runtime_error("sentence indices must be contiguous and non-decreasing");
        rec.sentences.back().push_back(static_cast<int>(w));
        for (int s : rec.words.at(w)) rec.syllables[static_cast<std::size_t>(s)].sentence_index = t;
    }
    if (sentence_ids.size() != rec.words.size())
        throw std::runtime_error("corpus line sentence field length disagrees with word count");
    validate_record(rec);
    return rec;
}

void save_corpus(const std::string& path, std::span<const SongRecord> records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open corpus file for writing: " + path);
    for (const SongRecord& rec : records) out << to_corpus_line(rec) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<SongRecord> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    std::vector<SongRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(from_corpus_line(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

void save_stats(const std::string& path, const CorpusStats& st) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open stats file for writing: " + path);
    out << "songs\t" << st.song_count << '\n';
    out << "notes\t" << st.note_count << '\n';
    out << "words\t" << st.word_count << '\n';
    out << "sentences\t" << st.sentence_count << '\n';
    auto dump_int = [&out](const char* name, const std::map<int, std::int64_t>& h) {
        out << '[' << name << "]\n";
        for (auto& [k, v] : h) out << k << '\t' << v << '\n';
    };
    auto dump_beats = [&out](const char* name, const std::map<double, std::int64_t>& h) {
        out << '[' << name << "]\n";
        for (auto& [k, v] : h) out << format_beats(k) << '\t' << v << '\n';
    };
    dump_int("pitch", st.pitch_histogram);
    dump_int("interval", st.interval_histogram);
    dump_int("range", st.range_histogram);
    dump_beats("duration", st.duration_histogram);
    dump_beats("rest", st.rest_histogram);
    if (!out) throw std::runtime_error("write failed: " + path);
}

CorpusStats load_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stats file: " + path);
    CorpusStats st;
    std::string line;
    std::string section;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        auto fields = split(line, '\t');
        if (fields.size() != 2) throw std::runtime_error("bad stats line: '" + line + "'");
        std::int64_t count = parse_int(fields[1], "count");
        if (section.empty()) {
            if (fields[0] == "songs") st.song_count = count;
            else if (fields[0] == "notes") st.note_count = count;
            else if (fields[0] == "words") st.word_count = count;
            else if (fields[0] == "sentences") st.sentence_count = count;
            else throw std::runtime_error("unknown stats field: '" + std::string(fields[0]) + "'");
        } else if (section == "pitch") {
            st.pitch_histogram[parse_int(fields[0], "pitch")] = count;
        } else if (section == "interval") {
            st.interval_histogram[parse_int(fields[0], "interval")] = count;
        } else if (section == "range") {
            st.range_histogram[parse_int(fields[0], "range")] = count;
        } else if (section == "duration") {
            st.duration_histogram[parse_beats(fields[0], "duration")] = count;
        } else if (section == "rest") {
            st.rest_histogram[parse_beats(fields[0], "rest")] = count;
        } else {
            throw std::runtime_error("unknown stats section: '" + section + "'");
        }
    }
    return st;
}

}  // namespace songgen
