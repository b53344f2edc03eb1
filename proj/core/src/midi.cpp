#include "songgen/midi.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace songgen::midi {

namespace {

struct Cursor {
    std::string_view data;
    std::size_t pos = 0;

    bool at_end() const { return pos >= data.size(); }
    std::size_t remaining() const { return data.size() - pos; }

    std::uint8_t u8() {
        if (at_end()) throw std::runtime_error("truncated MIDI data");
        return static_cast<std::uint8_t>(data[pos++]);
    }

    std::uint16_t u16be() {
        std::uint16_t hi = u8();
        return static_cast<std::uint16_t>((hi << 8) | u8());
    }

    std::uint32_t u32be() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
        return v;
    }

    std::string_view take(std::size_t n) {
        if (remaining() < n) throw std::runtime_error("truncated MIDI data");
        std::string_view s = data.substr(pos, n);
        pos += n;
        return s;
    }

    std::uint32_t vlq() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            std::uint8_t b = u8();
            v = (v << 7) | (b & 0x7F);
            if ((b & 0x80) == 0) return v;
        }
        throw std::runtime_error("variable-length quantity longer than 4 bytes");
    }
};

void parse_track(Cursor track, std::int64_t* out_end_tick, std::vector<NoteEvent>* notes,
                 std::vector<TextEvent>* lyrics, std::vector<TextEvent>* texts) {
    std::int64_t tick = 0;
    std::uint8_t running = 0;
    // Open notes keyed by channel+pitch; duplicate note-ons close first-in-first-out.
    std::map<int, std::deque<std::size_t>> open;
    const std::size_t first_note = notes->size();

    while (!track.at_end()) {
        tick += track.vlq();
        std::uint8_t status = track.u8();
        if (status < 0x80) {
            if (running == 0) throw std::runtime_error("data byte without running status");
            --track.pos;
            status = running;
        }
        if (status >= 0x80 && status < 0xF0) running = status;

        const int kind = status >> 4;
        const int channel = status & 0x0F;
        switch (kind) {
            case 0x8:    // note off
            case 0x9: {  // note on (velocity 0 acts as note off)
                int pitch = track.u8() & 0x7F;
                int velocity = track.u8() & 0x7F;
                int key = (channel << 8) | pitch;
                if (kind == 0x9 && velocity > 0) {
                    open[key].push_back(notes->size());
                    notes->push_back({tick, -1, channel, pitch, velocity});
                } else {
                    auto it = open.find(key);
                    if (it != open.end() && !it->second.empty()) {
                        std::size_t idx = it->second.front();
                        it->second.pop_front();
                        (*notes)[idx].length = tick - (*notes)[idx].tick;
                    }
                    // Unmatched note-off: ignored.
                }
                break;
            }
            case 0xA:  // polyphonic aftertouch
            case 0xB:  // controller
            case 0xE:  // pitch bend
                track.take(2);
                break;
            case 0xC:  // program change
            case 0xD:  // channel aftertouch
                track.take(1);
                break;
            case 0xF: {
                running = 0;
                if (status == 0xF0 || status == 0xF7) {
                    track.take(track.vlq());
                } else if (status == 0xFF) {
                    std::uint8_t type = track.u8();
                    std::uint32_t len = track.vlq();
                    std::string_view payload = track.take(len);
                    if (type == 0x2F) {
                        *out_end_tick = std::max(*out_end_tick, tick);
                        goto done;
                    }
                    if (type == 0x05) lyrics->push_back({tick, std::string(payload)});
                    if (type == 0x01) texts->push_back({tick, std::string(payload)});
                } else {
                    throw std::runtime_error("unsupported status byte in track");
                }
                break;
            }
            default:
                throw std::runtime_error("unsupported status byte in track");
        }
    }
done:
    *out_end_tick = std::max(*out_end_tick, tick);
    // Notes left open run to the end of the track; zero-length ones are culled later.
    for (std::size_t i = first_note; i < notes->size(); ++i)
        if ((*notes)[i].length < 0) (*notes)[i].length = *out_end_tick - (*notes)[i].tick;
}

}  // namespace

File parse_bytes(std::string_view bytes) {
    Cursor c{bytes};
    if (c.take(4) != "MThd") throw std::runtime_error("missing MThd header");
    std::uint32_t header_len = c.u32be();
    if (header_len < 6) throw std::runtime_error("MThd too short");
    Cursor header{c.take(header_len)};
    File f;
    f.format = header.u16be();
    int ntrks = header.u16be();
    std::uint16_t division = header.u16be();
    if (division & 0x8000) throw std::runtime_error("SMPTE time division is not supported");
    if (division == 0) throw std::runtime_error("zero time division");
    f.division = division;
    if (f.format != 0 && f.format != 1) throw std::runtime_error("unsupported MIDI format " + std::to_string(f.format));

    for (int t = 0; t < ntrks; ++t) {
        if (c.take(4) != "MTrk") throw std::runtime_error("missing MTrk chunk");
        std::uint32_t len = c.u32be();
        Cursor track{c.take(len)};
        std::int64_t end_tick = 0;
        std::vector<NoteEvent> notes;
        parse_track(track, &end_tick, &notes, &f.lyrics, &f.texts);
        std::stable_sort(notes.begin(), notes.end(),
                         [](const NoteEvent& a, const NoteEvent& b) { return a.tick < b.tick; });
        f.tracks.push_back(std::move(notes));
    }
    auto by_tick = [](const TextEvent& a, const TextEvent& b) { return a.tick < b.tick; };
    std::stable_sort(f.lyrics.begin(), f.lyrics.end(), by_tick);
    std::stable_sort(f.texts.begin(), f.texts.end(), by_tick);
    return f;
}

File parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open MIDI file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_bytes(buf.str());
}

namespace {

void append_vlq(std::string& out, std::uint32_t v) {
    char bytes[4];
    int n = 0;
    do {
        bytes[n++] = static_cast<char>(v & 0x7F);
        v >>= 7;
    } while (v != 0);
    for (int i = n - 1; i >= 0; --i) out.push_back(i == 0 ? bytes[i] : static_cast<char>(bytes[i] | 0x80));
}

void append_u32be(std::string& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void append_u16be(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v));
}

}  // namespace

std::string write_format0(int division, std::vector<TrackEvent> events) {
    std::stable_sort(events.begin(), events.end(), [](const TrackEvent& a, const TrackEvent& b) {
        if (a.tick != b.tick) return a.tick < b.tick;
        return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });

    std::string track;
    std::int64_t cursor = 0;
    for (const TrackEvent& e : events) {
        if (e.tick < cursor) throw std::invalid_argument("negative event tick");
        append_vlq(track, static_cast<std::uint32_t>(e.tick - cursor));
        cursor = e.tick;
        switch (e.kind) {
            case TrackEvent::Kind::tempo:
                track += '\xFF';
                track += '\x51';
                track += '\x03';
                for (int i = 2; i >= 0; --i)
                    track.push_back(static_cast<char>(e.tempo_us_per_quarter >> (8 * i)));
                break;
            case TrackEvent::Kind::lyric:
                track += '\xFF';
                track += '\x05';
                append_vlq(track, static_cast<std::uint32_t>(e.text.size()));
                track += e.text;
                break;
            case TrackEvent::Kind::note_off:
                track += '\x80';
                track.push_back(static_cast<char>(e.pitch & 0x7F));
                track += '\x40';
                break;
            case TrackEvent::Kind::note_on:
                track += '\x90';
                track.push_back(static_cast<char>(e.pitch & 0x7F));
                track += '\x60';
                break;
        }
    }
    append_vlq(track, 0);
    track += '\xFF';
    track += '\x2F';
    track += '\x00';

    std::string out = "MThd";
    append_u32be(out, 6);
    append_u16be(out, 0);  // format
    append_u16be(out, 1);  // one track
    append_u16be(out, static_cast<std::uint16_t>(division));
    out += "MTrk";
    append_u32be(out, static_cast<std::uint32_t>(track.size()));
    out += track;
    return out;
}

}  // namespace songgen::midi
