#include "songgen/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "songgen/binio.hpp"
#include "songgen/log.hpp"

namespace songgen {

void SkipGramConfig::validate() const {
    if (dimension <= 0) throw std::invalid_argument("embedding dimension must be positive");
    if (window < 1) throw std::invalid_argument("context window must be at least 1");
    if (negatives < 1) throw std::invalid_argument("negative count must be at least 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("smoothing exponent must lie in (0, 1]");
    if (!(final_lr > 0.0) || initial_lr < final_lr)
        throw std::invalid_argument("learning rates must be positive with initial >= final");
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
}

std::vector<double> noise_distribution(std::span<const std::int64_t> frequencies, double alpha) {
    if (frequencies.empty()) throw std::invalid_argument("noise distribution needs a non-empty vocabulary");
    std::vector<double> p(frequencies.size());
    double total = 0.0;
    for (std::size_t i = 0; i < frequencies.size(); ++i) {
        if (frequencies[i] <= 0) throw std::invalid_argument("noise distribution frequencies must be positive");
        p[i] = std::pow(static_cast<double>(frequencies[i]), alpha);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

std::vector<TokenPair> context_pairs(std::span<const int> sentence, int window) {
    std::vector<TokenPair> pairs;
    const int n = static_cast<int>(sentence.size());
    for (int t = 0; t < n; ++t)
        for (int i = -window; i <= window; ++i) {
            if (i == 0) continue;
            int j = t + i;
            if (j < 0 || j >= n) continue;
            pairs.push_back({sentence[t], sentence[j]});
        }
    return pairs;
}

std::vector<double> project(std::span<const double> s, std::span<const double> w) {
    if (s.size() != w.size()) throw std::invalid_argument("projection requires equal dimensions");
    double dot = 0.0, norm_sq = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        dot += s[i] * w[i];
        norm_sq += w[i] * w[i];
    }
    std::vector<double> out(s.size(), 0.0);
    if (norm_sq == 0.0) {
        log_warn("projection onto a zero vector; returning zeros");
        return out;
    }
    double factor = dot / norm_sq;
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = factor * w[i];
    return out;
}

EmbeddingTable::EmbeddingTable(Vocabulary vocab, int dimension)
    : vocab_(std::move(vocab)),
      dimension_(dimension),
      input_(vocab_.size(), dimension),
      output_(vocab_.size(), dimension) {
    if (dimension <= 0) throw std::invalid_argument("embedding dimension must be positive");
}

SkipGramTrainer::SkipGramTrainer(const Vocabulary& vocab, SkipGramConfig config, std::uint64_t seed)
    : config_(config), table_(vocab, config.dimension), rng_(Rng::for_component(seed, "skipgram")) {
    config_.validate();
    const double half = 0.5 / config_.dimension;
    for (std::size_t i = 0; i < table_.input().size(); ++i) table_.input()[i] = rng_.uniform(-half, half);
    for (std::size_t i = 0; i < table_.output().size(); ++i) table_.output()[i] = rng_.uniform(-half, half);

    std::vector<std::int64_t> freqs;
    for (int id = 0; id < vocab.size(); ++id) {
        if (vocab.frequency(id) > 0) {
            noise_support_.push_back(id);
            freqs.push_back(vocab.frequency(id));
        }
    }
    if (!noise_support_.empty()) {
        std::vector<double> p = noise_distribution(freqs, config_.alpha);
        noise_cdf_.resize(p.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            noise_cdf_[i] = acc;
        }
        noise_cdf_.back() = 1.0;
    }
}

namespace {

double log_sigmoid(double x) {
    return x > 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

double dot_rows(const Tensor& a, int ra, const Tensor& b, int rb) {
    double d = 0.0;
    const double* pa = a.data() + static_cast<std::size_t>(ra) * a.cols();
    const double* pb = b.data() + static_cast<std::size_t>(rb) * b.cols();
    for (int i = 0; i < a.cols(); ++i) d += pa[i] * pb[i];
    return d;
}

}  // namespace

double SkipGramTrainer::pair_objective(int center, int context, std::span<const int> negatives) const {
    const Tensor& in = table_.input();
    const Tensor& out = table_.output();
    double obj = log_sigmoid(dot_rows(out, context, in, center));
    for (int j : negatives) obj += log_sigmoid(-dot_rows(out, j, in, center));
    return obj;
}

void SkipGramTrainer::sgd_pair(int center, int context, std::span<const int> negatives, double lr) {
    Tensor& in = table_.input();
    Tensor& out = table_.output();
    const int d = table_.dimension();
    double* v_in = in.data() + static_cast<std::size_t>(center) * d;

    std::vector<double> d_in(static_cast<std::size_t>(d), 0.0);
    // (token, coefficient) pairs; coefficient scales v_in in the output-row update
    std::vector<std::pair<int, double>> out_updates;
    out_updates.reserve(negatives.size() + 1);

    double dot = dot_rows(out, context, in, center);
    if (!std::isfinite(dot)) throw std::runtime_error("non-finite score during skip-gram update");
    double g = 1.0 - sigmoid(dot);
    out_updates.emplace_back(context, g);
    const double* v_ctx = out.data() + static_cast<std::size_t>(context) * d;
    for (int i = 0; i < d; ++i) d_in[static_cast<std::size_t>(i)] += g * v_ctx[i];

    for (int j : negatives) {
        double dj = dot_rows(out, j, in, center);
        if (!std::isfinite(dj)) throw std::runtime_error("non-finite score during skip-gram update");
        double gj = -sigmoid(dj);
        out_updates.emplace_back(j, gj);
        const double* v_j = out.data() + static_cast<std::size_t>(j) * d;
        for (int i = 0; i < d; ++i) d_in[static_cast<std::size_t>(i)] += gj * v_j[i];
    }

    // Apply output updates after all reads so every vector steps simultaneously.
    for (auto& [token, coeff] : out_updates) {
        double* v_out = out.data() + static_cast<std::size_t>(token) * d;
        for (int i = 0; i < d; ++i) v_out[i] += lr * coeff * v_in[i];
    }
    for (int i = 0; i < d; ++i) v_in[i] += lr * d_in[static_cast<std::size_t>(i)];
}

std::vector<int> SkipGramTrainer::draw_negatives(int context) {
    std::vector<int> negatives;
    if (noise_support_.empty() || (noise_support_.size() == 1 && noise_support_[0] == context))
        return negatives;
    negatives.reserve(static_cast<std::size_t>(config_.negatives));
    for (int k = 0; k < config_.negatives; ++k) {
        int pick = -1;
        for (int attempt = 0; attempt < 16; ++attempt) {
            double u = rng_.uniform();
            std::size_t idx =
                std::lower_bound(noise_cdf_.begin(), noise_cdf_.end(), u) - noise_cdf_.begin();
            if (idx >= noise_support_.size()) idx = noise_support_.size() - 1;
            int candidate = noise_support_[idx];
            if (candidate != context) {
                pick = candidate;
                break;
            }
        }
        if (pick < 0) {  // pathological distribution: fall back to the first non-context token
            for (int candidate : noise_support_)
                if (candidate != context) {
                    pick = candidate;
                    break;
                }
        }
        negatives.push_back(pick);
    }
    return negatives;
}

double SkipGramTrainer::epoch_lr(int epoch) const {
    if (config_.epochs <= 1) return config_.initial_lr;
    double frac = static_cast<double>(epoch) / (config_.epochs - 1);
    return config_.initial_lr + (config_.final_lr - config_.initial_lr) * frac;
}

void SkipGramTrainer::train(std::span<const std::vector<int>> sentences) {
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
        const double lr = epoch_lr(epoch);
        std::size_t pair_count = 0;
        for (const std::vector<int>& sentence : sentences) {
            for (const TokenPair& p : context_pairs(sentence, config_.window)) {
                std::vector<int> negatives = draw_negatives(p.context);
                sgd_pair(p.center, p.context, negatives, lr);
                ++pair_count;
            }
        }
        if (!table_.input().all_finite() || !table_.output().all_finite())
            throw std::runtime_error("non-finite embedding values after epoch " + std::to_string(epoch));
        log_debug("skip-gram epoch ", epoch + 1, "/", config_.epochs, ": lr=", lr, " pairs=", pair_count);
    }
}

std::vector<std::vector<int>> token_sentences(std::span<const SongRecord> records,
                                              const Vocabulary& vocab, TokenLevel level) {
    std::vector<std::vector<int>> out;
    for (const SongRecord& rec : records) {
        for (const std::vector<int>& sentence : rec.sentences) {
            std::vector<int> ids;
            for (int w : sentence) {
                if (level == TokenLevel::word) {
                    const int id = vocab.id_of(word_text(rec, w));
                    if (id >= Vocabulary::kReserved) ids.push_back(id);
                } else {
                    for (int s : rec.words[static_cast<std::size_t>(w)]) {
                        const int id =
                            vocab.id_of(rec.syllables[static_cast<std::size_t>(s)].text);
                        if (id >= Vocabulary::kReserved) ids.push_back(id);
                    }
                }
            }
            if (!ids.empty()) out.push_back(std::move(ids));
        }
    }
    return out;
}

EncodingScheme scheme_from_name(std::string_view name) {
    if (name == "se") return EncodingScheme::se;
    if (name == "swc") return EncodingScheme::swc;
    if (name == "asw") return EncodingScheme::asw;
    if (name == "cswp") return EncodingScheme::cswp;
    throw std::invalid_argument("unknown encoding scheme '" + std::string(name) +
                                "' (expected se, swc, asw or cswp)");
}

std::string_view scheme_name(EncodingScheme scheme) {
    switch (scheme) {
        case EncodingScheme::se: return "se";
        case EncodingScheme::swc: return "swc";
        case EncodingScheme::asw: return "asw";
        case EncodingScheme::cswp: return "cswp";
    }
    throw std::invalid_argument("invalid encoding scheme");
}

int encoding_width(EncodingScheme scheme, int dimension) {
    switch (scheme) {
        case EncodingScheme::se:
        case EncodingScheme::asw: return dimension;
        case EncodingScheme::swc: return 2 * dimension;
        case EncodingScheme::cswp: return 3 * dimension;
    }
    throw std::invalid_argument("invalid encoding scheme");
}

void encode_token(EncodingScheme scheme, std::span<const double> v_syllable, std::span<const double> v_word,
                  std::span<double> out) {
    const std::size_t d = v_syllable.size();
    switch (scheme) {
        case EncodingScheme::se:
            std::copy(v_syllable.begin(), v_syllable.end(), out.begin());
            return;
        case EncodingScheme::asw:
            for (std::size_t i = 0; i < d; ++i) out[i] = v_syllable[i] + v_word[i];
            return;
        case EncodingScheme::swc:
            std::copy(v_syllable.begin(), v_syllable.end(), out.begin());
            std::copy(v_word.begin(), v_word.end(), out.begin() + static_cast<std::ptrdiff_t>(d));
            return;
        case EncodingScheme::cswp: {
            std::copy(v_syllable.begin(), v_syllable.end(), out.begin());
            std::copy(v_word.begin(), v_word.end(), out.begin() + static_cast<std::ptrdiff_t>(d));
            std::vector<double> proj = project(v_syllable, v_word);
            std::copy(proj.begin(), proj.end(), out.begin() + static_cast<std::ptrdiff_t>(2 * d));
            return;
        }
    }
    throw std::invalid_argument("invalid encoding scheme");
}

LyricEncoding encode_lyrics(const SongRecord& rec, EncodingScheme scheme, const EmbeddingTable& syllable_table,
                            const EmbeddingTable* word_table) {
    if (scheme != EncodingScheme::se && word_table == nullptr)
        throw std::invalid_argument("scheme requires a word embedding table");
    if (word_table && word_table->dimension() != syllable_table.dimension())
        throw std::invalid_argument("syllable and word embedding dimensions differ");

    LyricEncoding enc;
    enc.scheme = scheme;
    const int width = encoding_width(scheme, syllable_table.dimension());
    enc.vectors = Tensor(static_cast<int>(rec.size()), width);
    const std::vector<double> zero(static_cast<std::size_t>(syllable_table.dimension()), 0.0);

    for (std::size_t i = 0; i < rec.size(); ++i) {
        const SyllableToken& s = rec.syllables[i];
        int sid = syllable_table.vocab().id_of(s.text);
        if (sid == Vocabulary::kUnk && s.text != syllable_table.vocab().token_of(Vocabulary::kUnk))
            ++enc.oov_syllables;
        std::span<const double> v_s = syllable_table.vector_of(sid);
        std::span<const double> v_w(zero.data(), zero.size());
        if (word_table) {
            std::string w = word_text(rec, s.word_index);
            int wid = word_table->vocab().id_of(w);
            if (wid == Vocabulary::kUnk && w != word_table->vocab().token_of(Vocabulary::kUnk))
                ++enc.oov_words;
            v_w = word_table->vector_of(wid);
        }
        std::span<double> out(enc.vectors.data() + static_cast<std::size_t>(i) * width,
                              static_cast<std::size_t>(width));
        encode_token(scheme, v_s, v_w, out);
    }
    if (enc.oov_syllables || enc.oov_words)
        log_info("encoding '", rec.id, "': ", enc.oov_syllables, " OOV syllables, ", enc.oov_words,
                 " OOV words mapped to UNK");
    return enc;
}

namespace {
constexpr char kTextHeader[] = "songgen-embedding 1";
constexpr char kBinaryMagic[8] = {'S', 'O', 'N', 'G', 'E', 'M', 'B', '1'};
}  // namespace

void save_embedding_text(const std::string& path, const EmbeddingTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open embedding file for writing: " + path);
    out << kTextHeader << '\n';
    out << table.vocab().size() << ' ' << table.dimension() << '\n';
    char buf[32];
    for (int id = 0; id < table.vocab().size(); ++id) {
        out << table.vocab().token_of(id) << ' ' << table.vocab().frequency(id);
        for (double v : table.vector_of(id)) {
            std::snprintf(buf, sizeof buf, " %.9g", v);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

EmbeddingTable load_embedding_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kTextHeader)
        throw std::runtime_error("not a songgen embedding file: " + path);
    int vocab_size = 0, dimension = 0;
    if (!(in >> vocab_size >> dimension) || vocab_size < Vocabulary::kReserved || dimension <= 0)
        throw std::runtime_error("bad embedding header: " + path);

    std::vector<std::string> tokens(static_cast<std::size_t>(vocab_size));
    std::vector<std::int64_t> freqs(static_cast<std::size_t>(vocab_size));
    Tensor input(vocab_size, dimension);
    for (int id = 0; id < vocab_size; ++id) {
        if (!(in >> tokens[static_cast<std::size_t>(id)] >> freqs[static_cast<std::size_t>(id)]))
            throw std::runtime_error("truncated embedding file: " + path);
        for (int c = 0; c < dimension; ++c)
            if (!(in >> input.at(id, c))) throw std::runtime_error("truncated embedding file: " + path);
    }

    std::vector<std::pair<std::string, std::int64_t>> token_freqs;
    for (int id = Vocabulary::kReserved; id < vocab_size; ++id)
        token_freqs.emplace_back(tokens[static_cast<std::size_t>(id)], freqs[static_cast<std::size_t>(id)]);
    Vocabulary vocab(token_freqs);
    for (int id = 0; id < vocab_size; ++id)
        if (vocab.token_of(id) != tokens[static_cast<std::size_t>(id)])
            throw std::runtime_error("embedding file token order is not canonical: " + path);
    EmbeddingTable table(std::move(vocab), dimension);
    table.input() = std::move(input);
    return table;
}

void save_embedding_binary(const std::string& path, const EmbeddingTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open embedding file for writing: " + path);
    binio::write_bytes(out, kBinaryMagic, sizeof kBinaryMagic);
    binio::write_u64le(out, static_cast<std::uint64_t>(table.vocab().size()));
    binio::write_u32le(out, static_cast<std::uint32_t>(table.dimension()));
    for (int id = 0; id < table.vocab().size(); ++id) {
        binio::write_string(out, table.vocab().token_of(id));
        binio::write_u64le(out, static_cast<std::uint64_t>(table.vocab().frequency(id)));
    }
    for (std::size_t i = 0; i < table.input().size(); ++i) binio::write_f64le(out, table.input()[i]);
    for (std::size_t i = 0; i < table.output().size(); ++i) binio::write_f64le(out, table.output()[i]);
    if (!out) throw std::runtime_error("write failed: " + path);
}

EmbeddingTable load_embedding_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path);
    char magic[8];
    binio::read_bytes(in, magic, sizeof magic);
    if (!std::equal(magic, magic + 8, kBinaryMagic))
        throw std::runtime_error("not a songgen embedding file: " + path);
    auto vocab_size = static_cast<int>(binio::read_u64le(in));
    auto dimension = static_cast<int>(binio::read_u32le(in));
    if (vocab_size < Vocabulary::kReserved || dimension <= 0)
        throw std::runtime_error("bad embedding header: " + path);

    std::vector<std::string> tokens;
    std::vector<std::pair<std::string, std::int64_t>> token_freqs;
    for (int id = 0; id < vocab_size; ++id) {
        std::string token = binio::read_string(in, 1u << 20);
        auto freq = static_cast<std::int64_t>(binio::read_u64le(in));
        if (id >= Vocabulary::kReserved) token_freqs.emplace_back(token, freq);
        tokens.push_back(std::move(token));
    }
    Vocabulary vocab(token_freqs);
    for (int id = 0; id < vocab_size; ++id)
        if (vocab.token_of(id) != tokens[static_cast<std::size_t>(id)])
            throw std::runtime_error("embedding file token order is not canonical: " + path);
    EmbeddingTable table(std::move(vocab), dimension);
    for (std::size_t i = 0; i < table.input().size(); ++i) table.input()[i] = binio::read_f64le(in);
    for (std::size_t i = 0; i < table.output().size(); ++i) table.output()[i] = binio::read_f64le(in);
    return table;
}

}  // namespace songgen
