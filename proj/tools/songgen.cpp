#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "songgen/checkpoint.hpp"
#include "songgen/corpus.hpp"
#include "songgen/embedding.hpp"
#include "songgen/eval.hpp"
#include "songgen/inference.hpp"
#include "songgen/log.hpp"
#include "songgen/model.hpp"
#include "songgen/train.hpp"

namespace fs = std::filesystem;
using namespace songgen;

namespace {

// distinguishes bad flags/configuration (exit 2) from a failed run (exit 1)
struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("failed while writing " + path);
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::string word;
    std::istringstream in{std::string(text)};
    while (in >> word) out.push_back(word);
    return out;
}

std::string default_path(const std::string& explicit_path, const std::string& base,
                         const char* suffix) {
    return explicit_path.empty() ? base + suffix : explicit_path;
}

// The first line names the sub-command so a manifest alone can replay the
// run; the section header routes every key back to that sub-command when the
// file is read with --config.  Empty values mean "not given" and are dropped.
void write_manifest(const CLI::App& cmd, const std::string& path) {
    std::string body = "# command: " + cmd.get_name() + "\n[" + cmd.get_name() + "]\n";
    std::istringstream lines{cmd.config_to_str(true, false)};
    for (std::string line; std::getline(lines, line);) {
        if (line.size() < 3 || line.compare(line.size() - 3, 3, "=\"\"") != 0) {
            body += line;
            body += '\n';
        }
    }
    write_file(path, body);
}

const CLI::Validator TauRange(
    [](std::string& s) -> std::string {
        try {
            const double v = std::stod(s);
            if (v > 0.0 && v <= 1.0) return {};
        } catch (...) {
        }
        return std::string("temperature must lie in (0, 1], got ") + s;
    },
    "FLOAT in (0, 1]");

// ---------------------------------------------------------------- parse ----

struct ParseArgs {
    std::string dir;
    std::string output = "corpus.txt";
    std::string skip_report;
    std::string manifest;
    int min_syllables = 20;
    int jobs = 1;
    bool lyric_meta_only = false;
};

bool midi_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".mid" || ext == ".midi" || ext == ".kar";
}

void run_parse(const CLI::App& cmd, const ParseArgs& a) {
    std::vector<fs::path> files;
    try {
        for (const fs::directory_entry& e : fs::recursive_directory_iterator(a.dir))
            if (e.is_regular_file() && midi_extension(e.path())) files.push_back(e.path());
    } catch (const fs::filesystem_error& err) {
        throw usage_error(std::string("cannot read directory: ") + err.what());
    }
    std::sort(files.begin(), files.end());

    ParseOptions opt;
    opt.min_syllables = a.min_syllables;
    opt.allow_text_meta = !a.lyric_meta_only;

    struct Row {
        std::optional<SongRecord> record;
        std::string skip;
    };
    std::vector<Row> rows(files.size());
    std::vector<std::string> ids(files.size());
    for (std::size_t i = 0; i < files.size(); ++i)
        ids[i] = files[i].lexically_relative(a.dir).generic_string();

    const int jobs =
        a.jobs > 0 ? a.jobs : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
        for (std::size_t i = cursor.fetch_add(1); i < files.size(); i = cursor.fetch_add(1)) {
            try {
                ParseOutcome out = parse_midi_song(read_file(files[i].string()), ids[i], opt);
                if (out.ok())
                    rows[i].record = std::move(out.record);
                else
                    rows[i].skip = out.skip_reason;
            } catch (const std::exception& e) {
                rows[i].skip = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();

    std::vector<SongRecord> records;
    std::string skips;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (rows[i].record)
            records.push_back(std::move(*rows[i].record));
        else
            skips += ids[i] + "\t" + rows[i].skip + "\n";
    }
    save_corpus(a.output, records);
    write_file(default_path(a.skip_report, a.output, ".skips"), skips);
    log_info("accepted ", records.size(), " of ", files.size(), " MIDI files");
    write_manifest(cmd, default_path(a.manifest, a.output, ".manifest"));
}

// ---------------------------------------------------------------- stats ----

struct StatsArgs {
    std::string corpus;
    std::string output = "stats.txt";
    std::string histograms;
    std::string manifest;
};

void run_stats(const CLI::App& cmd, const StatsArgs& a) {
    const std::vector<SongRecord> records = load_corpus(a.corpus);
    const CorpusStats stats = compute_stats(records);

    std::ostringstream text;
    text << "songs: " << stats.song_count << '\n';
    text << "notes: " << stats.note_count << '\n';
    text << "words: " << stats.word_count << '\n';
    text << "sentences: " << stats.sentence_count << '\n';
    text << "pitch_bins: " << stats.pitch_histogram.size() << '\n';
    text << "interval_bins: " << stats.interval_histogram.size() << '\n';
    text << "range_bins: " << stats.range_histogram.size() << '\n';
    text << "duration_bins: " << stats.duration_histogram.size() << '\n';
    text << "rest_bins: " << stats.rest_histogram.size() << '\n';
    write_file(a.output, text.str());
    std::cout << text.str();

    save_stats(default_path(a.histograms, a.output, ".hist"), stats);
    write_manifest(cmd, default_path(a.manifest, a.output, ".manifest"));
}

// ----------------------------------------------------- train-embeddings ----

struct EmbedArgs {
    std::string corpus;
    std::string level = "syllable";
    std::string output = "embeddings.txt";
    std::string manifest;
    int min_count = 1;
    SkipGramConfig sg;
    std::uint64_t seed = 1;
};

void run_train_embeddings(const CLI::App& cmd, const EmbedArgs& a) {
    const std::vector<SongRecord> records = load_corpus(a.corpus);
    const TokenLevel level = a.level == "word" ? TokenLevel::word : TokenLevel::syllable;
    const Vocabulary vocab = build_vocabulary(records, a.min_count, level);

    SkipGramTrainer trainer(vocab, a.sg, a.seed);
    trainer.train(token_sentences(records, vocab, level));
    save_embedding_text(a.output, trainer.table());
    log_info("trained ", a.level, " embeddings: ", vocab.size(), " tokens x ", a.sg.dimension,
             " dims over ", a.sg.epochs, " epochs");
    write_manifest(cmd, default_path(a.manifest, a.output, ".manifest"));
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
    std::string corpus;
    std::string scheme = "se";
    std::string syllables;
    std::string words;
    std::string output = "model.ck";
    std::string curve;
    std::string manifest;
    int hidden = 128;
    int class_embed = 32;
    TrainConfig cfg;
};

void run_train(const CLI::App& cmd, const TrainArgs& a) {
    const std::vector<SongRecord> records = load_corpus(a.corpus);
    const EncodingScheme scheme = scheme_from_name(a.scheme);
    const EmbeddingTable syllables = load_embedding_text(a.syllables);
    std::optional<EmbeddingTable> words;
    if (!a.words.empty()) words.emplace(load_embedding_text(a.words));
    if (scheme != EncodingScheme::se && !words)
        throw usage_error("scheme '" + a.scheme + "' needs --words");

    ModelConfig mc;
    mc.input_width = encoding_width(scheme, syllables.dimension());
    mc.hidden = a.hidden;
    mc.class_embed = a.class_embed;
    mc.lyric_vocab = syllables.vocab().size();
    mc.pitch_classes = pitch_class_set(records);
    mc.tie_generator_encoder = a.cfg.tie_generator_encoder;

    Model model(mc, a.cfg.seed, a.cfg.init_variance);
    const TrainOutcome outcome =
        train_song_model(model, records, scheme, syllables, words ? &*words : nullptr, a.cfg);

    save_checkpoint(a.output, outcome.result.best);

    std::string csv = "epoch,lr,train_loss,val_loss\n";
    char buf[128];
    for (const EpochStats& e : outcome.result.curve) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.lr, e.train_loss,
                      e.val_loss);
        csv += buf;
    }
    write_file(default_path(a.curve, a.output, ".curve.csv"), csv);

    log_info("best epoch ", outcome.result.best_epoch, " with monitored loss ",
             outcome.result.best_loss);
    if (!std::isnan(outcome.test_loss)) log_info("held-out test loss ", outcome.test_loss);
    write_manifest(cmd, default_path(a.manifest, a.output, ".manifest"));
    if (outcome.result.diverged)
        throw std::runtime_error(
            "training diverged; the checkpoint holds the last healthy weights");
}

// --------------------------------------------------- generate/harmonize ----

struct GenArgs {
    std::string checkpoint;
    std::string syllables;
    std::string words;
    std::string seed_lyrics;
    std::string seed_file;
    std::string lyrics_file;
    std::string output = "song";
    std::string manifest;
    std::string strategy = "greedy";
    GenerationConfig cfg;
};

void run_generate(const CLI::App& cmd, const GenArgs& a) {
    Model model(load_checkpoint(a.checkpoint));
    const EmbeddingTable syllables = load_embedding_text(a.syllables);
    std::optional<EmbeddingTable> words;
    if (!a.words.empty()) words.emplace(load_embedding_text(a.words));

    GenerationConfig cfg = a.cfg;
    cfg.strategy = a.strategy == "temperature" ? Strategy::temperature : Strategy::greedy;
    GenerationSession session(model, syllables, words ? &*words : nullptr, cfg);

    GeneratedSong song;
    if (!a.lyrics_file.empty()) {
        std::vector<std::vector<std::string>> sentences;
        std::istringstream lines(read_file(a.lyrics_file));
        std::string line;
        while (std::getline(lines, line)) sentences.push_back(split_whitespace(line));
        song = session.harmonize(sentences);
    } else {
        const std::string seed_text =
            a.seed_file.empty() ? a.seed_lyrics : read_file(a.seed_file);
        const std::vector<std::string> seed = split_whitespace(seed_text);
        if (seed.empty())
            throw usage_error("need seed lyrics (--seed-lyrics or --seed-file) or --lyrics-file");
        song = session.generate_song(seed);
    }

    std::string id = fs::path(a.output).filename().string();
    if (id.empty()) id = "song";
    const SongRecord rec = to_record(song, id);
    save_corpus(a.output + ".txt", {&rec, 1});
    write_file(a.output + ".mid", export_midi(rec));
    write_file(a.output + ".score.txt", render_score(song));

    std::cout << "syllables: " << song.syllable_count() << '\n'
              << "sentences: " << song.sentences.size() << '\n'
              << "checkpoint: " << song.checkpoint_id << '\n';
    write_manifest(cmd, default_path(a.manifest, a.output, ".manifest"));
}

// ------------------------------------------------------------- evaluate ----

struct EvalArgs {
    std::string generated;
    std::string reference;
    std::string reference_stats;
    std::string output = "eval.txt";
    std::string csv;
    std::string manifest;
};

void run_evaluate(const CLI::App& cmd, const EvalArgs& a) {
    const std::vector<SongRecord> generated = load_corpus(a.generated);

    EvalReport report;
    report.tones = tone_stats(generated);
    std::optional<std::vector<SongRecord>> reference;
    if (!a.reference.empty()) {
        reference = load_corpus(a.reference);
        if (reference->size() == generated.size()) {
            report.bleu = melody_bleu(generated, *reference);
            report.has_bleu = true;
        } else {
            log_warn("BLEU skipped: ", generated.size(), " generated songs vs ",
                     reference->size(), " reference songs");
        }
        report.divergence = histogram_divergence(compute_stats(generated), compute_stats(*reference));
        report.has_divergence = true;
    } else if (!a.reference_stats.empty()) {
        report.divergence =
            histogram_divergence(compute_stats(generated), load_stats(a.reference_stats));
        report.has_divergence = true;
    }

    const std::string text = render_text(report);
    write_file(a.output, text);
    std::cout << text;
    if (!a.csv.empty()) {
        std::string csv = tone_csv_header() + "\n" + tone_csv_row("generated", report.tones) + "\n";
        if (reference && !reference->empty())
            csv += tone_csv_row("reference", tone_stats(*reference)) + "\n";
        write_file(a.csv, csv);
    }
    write_manifest(cmd, default_path(a.manifest, a.output, ".manifest"));
}

// ----------------------------------------------------------- export-midi ----

struct ExportArgs {
    std::string corpus;
    std::string outdir = "midi-out";
    std::string manifest;
};

std::string sanitize_filename(const std::string& id) {
    std::string base = fs::path(id).replace_extension("").generic_string();
    for (char& c : base) {
        const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ||
                          c == '_';
        if (!keep) c = '_';
    }
    return base.empty() ? "song" : base;
}

void run_export_midi(const CLI::App& cmd, const ExportArgs& a) {
    const std::vector<SongRecord> records = load_corpus(a.corpus);
    fs::create_directories(a.outdir);

    std::set<std::string> taken;
    for (const SongRecord& rec : records) {
        const std::string base = sanitize_filename(rec.id);
        std::string name = base;
        for (int k = 2; !taken.insert(name).second; ++k) name = base + "-" + std::to_string(k);
        write_file(a.outdir + "/" + name + ".mid", export_midi(rec));
    }
    log_info("wrote ", records.size(), " MIDI files to ", a.outdir);
    write_manifest(cmd, a.manifest.empty() ? a.outdir + "/run.manifest" : a.manifest);
}

// ------------------------------------------------------------------ app ----

void add_generation_options(CLI::App* sub, GenArgs& a, bool lyrics_required) {
    sub->add_option("--checkpoint", a.checkpoint, "Trained model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--syllables", a.syllables, "Syllable embedding table")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--words", a.words, "Word embedding table (schemes other than se)")
        ->check(CLI::ExistingFile);
    CLI::Option* lyrics = sub->add_option("--lyrics-file", a.lyrics_file,
                                          "Full lyrics, one sentence per line; melody only")
                              ->check(CLI::ExistingFile);
    if (lyrics_required) {
        lyrics->required();
    } else {
        CLI::Option* seed =
            sub->add_option("--seed-lyrics", a.seed_lyrics, "Whitespace-separated seed syllables");
        CLI::Option* seed_file = sub->add_option("--seed-file", a.seed_file, "Seed syllable file")
                                     ->check(CLI::ExistingFile);
        seed->excludes(seed_file)->excludes(lyrics);
        seed_file->excludes(lyrics);
    }
    sub->add_option("--strategy", a.strategy, "Next-syllable selection rule")
        ->check(CLI::IsMember({"greedy", "temperature"}))
        ->capture_default_str();
    sub->add_option("--tau", a.cfg.tau, "Temperature for the temperature strategy")
        ->check(TauRange)
        ->capture_default_str();
    sub->add_option("--length", a.cfg.target_syllables, "Target syllable count")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--max-sentence", a.cfg.max_sentence, "Sentence length cap")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--seed", a.cfg.seed, "Run seed; every component derives from it")
        ->capture_default_str();
    sub->add_option("-o,--output", a.output, "Output prefix (.txt, .mid, .score.txt)")
        ->capture_default_str();
    sub->add_option("--manifest", a.manifest, "Run manifest path (default <output>.manifest)");
}

int run_cli(std::vector<std::string> args) {
    CLI::App app{"songgen: a songwriting toolkit that learns syllable-level\n"
                 "lyric and melody structure from MIDI corpora",
                 "songgen"};
    app.require_subcommand(1);
    // Sub-commands inherit fallthrough, so --config may follow the command name.
    app.fallthrough();
    app.set_config("--config", "", "Read options from a key = value file");
    app.footer("songgen rerun <manifest> replays a finished run from its manifest file.\n"
               "SONGGEN_LOG=quiet|warn|info|debug controls logging.");

    ParseArgs parse_args;
    CLI::App* parse = app.add_subcommand("parse", "Build a corpus file from a MIDI directory");
    parse->add_option("dir", parse_args.dir, "Directory scanned recursively for .mid/.midi/.kar")
        ->required()
        ->check(CLI::ExistingDirectory);
    parse->add_option("-o,--output", parse_args.output, "Corpus file")->capture_default_str();
    parse->add_option("--skip-report", parse_args.skip_report,
                      "Skipped-file report (default <output>.skips)");
    parse->add_option("--min-syllables", parse_args.min_syllables, "Minimum aligned syllables")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    parse->add_option("--jobs", parse_args.jobs, "Parser threads; 0 uses every core")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    parse->add_flag("--lyric-meta-only", parse_args.lyric_meta_only,
                    "Ignore text meta events when no lyric events exist");
    parse->add_option("--manifest", parse_args.manifest,
                      "Run manifest path (default <output>.manifest)");
    parse->callback([&] { run_parse(*parse, parse_args); });

    StatsArgs stats_args;
    CLI::App* stats = app.add_subcommand("stats", "Corpus statistics and histogram tables");
    stats->add_option("corpus", stats_args.corpus, "Corpus file")
        ->required()
        ->check(CLI::ExistingFile);
    stats->add_option("-o,--output", stats_args.output, "Report file")->capture_default_str();
    stats->add_option("--histograms", stats_args.histograms,
                      "Histogram table file (default <output>.hist)");
    stats->add_option("--manifest", stats_args.manifest,
                      "Run manifest path (default <output>.manifest)");
    stats->callback([&] { run_stats(*stats, stats_args); });

    EmbedArgs embed_args;
    CLI::App* embed =
        app.add_subcommand("train-embeddings", "Train skip-gram lyric embeddings");
    embed->add_option("corpus", embed_args.corpus, "Corpus file")
        ->required()
        ->check(CLI::ExistingFile);
    embed->add_option("--level", embed_args.level, "Token level")
        ->check(CLI::IsMember({"syllable", "word"}))
        ->capture_default_str();
    embed->add_option("-o,--output", embed_args.output, "Embedding table file")
        ->capture_default_str();
    embed->add_option("--dimension", embed_args.sg.dimension, "Vector width")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    embed->add_option("--window", embed_args.sg.window, "Context window")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    embed->add_option("--negatives", embed_args.sg.negatives, "Negative samples per pair")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    embed->add_option("--alpha", embed_args.sg.alpha, "Noise distribution smoothing")
        ->capture_default_str();
    embed->add_option("--epochs", embed_args.sg.epochs, "Training epochs; 0 keeps the init")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    embed->add_option("--lr", embed_args.sg.initial_lr, "Initial learning rate")
        ->capture_default_str();
    embed->add_option("--lr-final", embed_args.sg.final_lr, "Final learning rate")
        ->capture_default_str();
    embed->add_option("--min-count", embed_args.min_count, "Tokens rarer than this become UNK")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    embed->add_option("--seed", embed_args.seed, "Run seed")->capture_default_str();
    embed->add_option("--manifest", embed_args.manifest,
                      "Run manifest path (default <output>.manifest)");
    embed->callback([&] { run_train_embeddings(*embed, embed_args); });

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "Train the song model on a corpus");
    train->add_option("corpus", train_args.corpus, "Corpus file")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--scheme", train_args.scheme, "Lyric encoding scheme")
        ->check(CLI::IsMember({"se", "swc", "asw", "cswp"}))
        ->capture_default_str();
    train->add_option("--syllables", train_args.syllables, "Syllable embedding table")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--words", train_args.words, "Word embedding table")
        ->check(CLI::ExistingFile);
    train->add_option("-o,--output", train_args.output, "Checkpoint file")->capture_default_str();
    train->add_option("--curve", train_args.curve, "Loss curve CSV (default <output>.curve.csv)");
    train->add_option("--hidden", train_args.hidden, "Recurrent state width")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--class-embed", train_args.class_embed, "Melody class embedding width")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--epochs", train_args.cfg.epochs, "Training epochs")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--batch", train_args.cfg.batch_size, "Sentences per update")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--lr", train_args.cfg.lr, "Initial learning rate")->capture_default_str();
    train->add_option("--decay-every", train_args.cfg.lr_decay_every,
                      "Epochs per linear decay stage")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--lr-floor", train_args.cfg.lr_floor, "Learning rate floor")
        ->capture_default_str();
    train->add_option("--init-variance", train_args.cfg.init_variance,
                      "Gaussian init variance")
        ->capture_default_str();
    train->add_option("--clip", train_args.cfg.clip_norm, "Gradient norm clip; <= 0 disables")
        ->capture_default_str();
    train->add_option("--val", train_args.cfg.val_fraction, "Validation fraction by song")
        ->capture_default_str();
    train->add_option("--test", train_args.cfg.test_fraction, "Test fraction by song")
        ->capture_default_str();
    train->add_flag("--tie", train_args.cfg.tie_generator_encoder,
                    "Share generator and encoder weights");
    train->add_option("--seed", train_args.cfg.seed, "Run seed")->capture_default_str();
    train->add_option("--manifest", train_args.manifest,
                      "Run manifest path (default <output>.manifest)");
    train->callback([&] { run_train(*train, train_args); });

    GenArgs gen_args;
    CLI::App* generate =
        app.add_subcommand("generate", "Generate a song from seed lyrics or full lyrics");
    add_generation_options(generate, gen_args, false);
    generate->callback([&] { run_generate(*generate, gen_args); });

    GenArgs harm_args;
    CLI::App* harmonize =
        app.add_subcommand("harmonize", "Compose a melody for existing lyrics");
    add_generation_options(harmonize, harm_args, true);
    harmonize->callback([&] { run_generate(*harmonize, harm_args); });

    EvalArgs eval_args;
    CLI::App* evaluate = app.add_subcommand("evaluate", "Tone, BLEU and histogram reports");
    evaluate->add_option("generated", eval_args.generated, "Generated corpus file")
        ->required()
        ->check(CLI::ExistingFile);
    CLI::Option* ref = evaluate
                           ->add_option("--reference", eval_args.reference,
                                        "Reference corpus for BLEU and histograms")
                           ->check(CLI::ExistingFile);
    evaluate
        ->add_option("--reference-stats", eval_args.reference_stats,
                     "Precomputed reference statistics for histograms")
        ->check(CLI::ExistingFile)
        ->excludes(ref);
    evaluate->add_option("-o,--output", eval_args.output, "Report file")->capture_default_str();
    evaluate->add_option("--csv", eval_args.csv, "Tone table CSV");
    evaluate->add_option("--manifest", eval_args.manifest,
                         "Run manifest path (default <output>.manifest)");
    evaluate->callback([&] { run_evaluate(*evaluate, eval_args); });

    ExportArgs export_args;
    CLI::App* exporter = app.add_subcommand("export-midi", "Write one MIDI file per corpus song");
    exporter->add_option("corpus", export_args.corpus, "Corpus file")
        ->required()
        ->check(CLI::ExistingFile);
    exporter->add_option("-o,--outdir", export_args.outdir, "Output directory")
        ->capture_default_str();
    exporter->add_option("--manifest", export_args.manifest,
                         "Run manifest path (default <outdir>/run.manifest)");
    exporter->callback([&] { run_export_midi(*exporter, export_args); });

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        (void)app.exit(e);
        return 2;
    } catch (const usage_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (!args.empty() && args[0] == "rerun") {
        if (args.size() != 2 || args[1] == "-h" || args[1] == "--help") {
            std::cerr << "usage: songgen rerun <manifest>\n";
            return args.size() == 2 ? 0 : 2;
        }
        std::string head;
        std::ifstream in(args[1]);
        if (!in || !std::getline(in, head)) {
            std::cerr << "error: cannot read manifest " << args[1] << '\n';
            return 2;
        }
        const std::string prefix = "# command: ";
        if (head.rfind(prefix, 0) != 0) {
            std::cerr << "error: " << args[1] << " is not a songgen run manifest\n";
            return 2;
        }
        args = {"--config", args[1], head.substr(prefix.size())};
    }
    return run_cli(std::move(args));
}
