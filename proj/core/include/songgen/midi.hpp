#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Standard MIDI File codec: enough of the format to read note/lyric streams
// and to write single-track files whose parse reproduces the input exactly.
namespace songgen::midi {

struct NoteEvent {
    std::int64_t tick = 0;
    std::int64_t length = 0;  // ticks until the matching note-off
    int channel = 0;
    int pitch = 0;
    int velocity = 0;
};

struct TextEvent {
    std::int64_t tick = 0;
    std::string text;  // raw bytes, markers preserved
};

struct File {
    int format = 0;
    int division = 480;  // ticks per quarter note
    std::vector<std::vector<NoteEvent>> tracks;  // per-track notes in start order
    std::vector<TextEvent> lyrics;               // meta 0x05 across all tracks, tick-sorted
    std::vector<TextEvent> texts;                // meta 0x01 across all tracks, tick-sorted
};

// Throws std::runtime_error on malformed or unsupported input
// (bad chunk magic, SMPTE division, format 2, truncated data).
File parse_bytes(std::string_view bytes);
File parse_file(const std::string& path);

struct TrackEvent {
    // Kind order doubles as the tie-break for events sharing a tick.
    enum class Kind : int { tempo = 0, lyric = 1, note_off = 2, note_on = 3 };
    std::int64_t tick = 0;
    Kind kind = Kind::note_on;
    int pitch = 0;
    int tempo_us_per_quarter = 0;
    std::string text;
};

// Emits a format-0 file containing the given events on a single track.
std::string write_format0(int division, std::vector<TrackEvent> events);

}  // namespace songgen::midi
