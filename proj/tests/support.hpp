#pragma once

// Test-side reference implementations and fixtures. The oracles here are
// deliberately naive (quadratic counting, full path enumeration) and share no
// code with the library beyond its public types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "s2seval/corpus.hpp"
#include "s2seval/normalize.hpp"
#include "s2seval/speechmetrics.hpp"
#include "s2seval/utf8.hpp"

namespace testing {

using Tokens = std::vector<std::string>;

// ---- BLEU / chrF by direct counting ----------------------------------------

inline bool same_span(const Tokens& a, std::size_t i, const Tokens& b, std::size_t j, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        if (a[i + k] != b[j + k]) return false;
    }
    return true;
}

// Occurrences of a[i, i+n) in b.
inline std::size_t occurrences(const Tokens& a, std::size_t i, std::size_t n, const Tokens& b) {
    std::size_t count = 0;
    for (std::size_t j = 0; j + n <= b.size(); ++j) count += same_span(a, i, b, j, n) ? 1 : 0;
    return count;
}

// Clipped matches of order n: every distinct hypothesis n-gram counts
// min(count in hyp, max count in any reference).
inline std::size_t clipped_matches(const Tokens& hyp, const std::vector<Tokens>& refs, std::size_t n) {
    std::size_t total = 0;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
        bool first = true;
        for (std::size_t p = 0; p < i; ++p) {
            if (same_span(hyp, p, hyp, i, n)) {
                first = false;
                break;
            }
        }
        if (!first) continue;
        const std::size_t in_hyp = occurrences(hyp, i, n, hyp);
        std::size_t in_ref = 0;
        for (const auto& r : refs) in_ref = std::max(in_ref, occurrences(hyp, i, n, r));
        total += std::min(in_hyp, in_ref);
    }
    return total;
}

// Unsmoothed corpus BLEU on the 0..100 scale.
inline double brute_force_bleu(const std::vector<Tokens>& hyps, const std::vector<std::vector<Tokens>>& refs,
                               std::size_t max_n = 4) {
    std::vector<double> matches(max_n, 0.0);
    std::vector<double> totals(max_n, 0.0);
    double hyp_len = 0.0;
    double ref_len = 0.0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        const auto& h = hyps[s];
        hyp_len += static_cast<double>(h.size());
        std::size_t closest = refs[s].front().size();
        for (const auto& r : refs[s]) {
            const auto diff = [&](std::size_t len) {
                return len > h.size() ? len - h.size() : h.size() - len;
            };
            if (diff(r.size()) < diff(closest) || (diff(r.size()) == diff(closest) && r.size() < closest)) {
                closest = r.size();
            }
        }
        ref_len += static_cast<double>(closest);
        for (std::size_t n = 1; n <= max_n; ++n) {
            matches[n - 1] += static_cast<double>(clipped_matches(h, refs[s], n));
            if (h.size() >= n) totals[n - 1] += static_cast<double>(h.size() - n + 1);
        }
    }
    double log_sum = 0.0;
    for (std::size_t n = 0; n < max_n; ++n) {
        if (matches[n] == 0.0 || totals[n] == 0.0) return 0.0;
        log_sum += std::log(matches[n] / totals[n]);
    }
    const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
    return 100.0 * bp * std::exp(log_sum / static_cast<double>(max_n));
}

inline Tokens chars_without_space(const std::string& s) {
    Tokens out;
    for (const auto& c : s2seval::utf8::split_scalars(s)) {
        if (c != " " && c != "\t" && c != "\n") out.push_back(c);
    }
    return out;
}

// Single-reference chrF: per-order P and R averaged over orders present on
// both sides, then the F-beta combination.
inline double brute_force_chrf(const std::string& hyp, const std::string& ref, std::size_t max_n = 6,
                               double beta = 2.0) {
    const Tokens h = chars_without_space(hyp);
    const Tokens r = chars_without_space(ref);
    double p_sum = 0.0;
    double r_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        if (h.size() < n || r.size() < n) continue;
        const double m = static_cast<double>(clipped_matches(h, {r}, n));
        p_sum += m / static_cast<double>(h.size() - n + 1);
        r_sum += m / static_cast<double>(r.size() - n + 1);
        ++orders;
    }
    if (orders == 0) return 0.0;
    const double p = p_sum / static_cast<double>(orders);
    const double rc = r_sum / static_cast<double>(orders);
    const double b2 = beta * beta;
    const double denom = b2 * p + rc;
    return denom > 0.0 ? (1.0 + b2) * p * rc / denom : 0.0;
}

// ---- DTW by enumeration ------------------------------------------------------

inline double frame_distance(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t d = 1; d < a.size(); ++d) sum += (a[d] - b[d]) * (a[d] - b[d]);
    return std::sqrt(sum);
}

struct PathSearch {
    double best = std::numeric_limits<double>::infinity();
    std::size_t paths = 0;
};

// Walks every monotone path from (0,0) to (n-1,m-1), accumulating costs from
// the start so the summation order matches a forward recursion.
inline void enumerate_paths(const s2seval::speech::MelCepstrum& a, const s2seval::speech::MelCepstrum& b,
                            std::size_t i, std::size_t j, double acc, PathSearch& search) {
    acc += frame_distance(a.frame(i), b.frame(j));
    if (i + 1 == a.num_frames() && j + 1 == b.num_frames()) {
        search.best = std::min(search.best, acc);
        ++search.paths;
        return;
    }
    if (i + 1 < a.num_frames() && j + 1 < b.num_frames()) enumerate_paths(a, b, i + 1, j + 1, acc, search);
    if (i + 1 < a.num_frames()) enumerate_paths(a, b, i + 1, j, acc, search);
    if (j + 1 < b.num_frames()) enumerate_paths(a, b, i, j + 1, acc, search);
}

inline PathSearch exhaustive_dtw(const s2seval::speech::MelCepstrum& a, const s2seval::speech::MelCepstrum& b) {
    PathSearch search;
    enumerate_paths(a, b, 0, 0, 0.0, search);
    return search;
}

inline s2seval::speech::MelCepstrum random_cepstrum(std::mt19937_64& gen, std::size_t frames, std::size_t coeffs) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> values(frames * coeffs);
    for (auto& v : values) v = dist(gen);
    return s2seval::speech::MelCepstrum(std::move(values), coeffs);
}

// ---- G2P by enumeration ------------------------------------------------------

struct DecodeResult {
    double logprob = -std::numeric_limits<double>::infinity();
    s2seval::g2p::Phonemes phonemes;
    bool found = false;
};

// Scores every token path whose grapheme chunks spell `word`, under the same
// search space as the decoder (no two insertion links in a row), scanning the
// whole vocabulary rather than using the model's candidate index.
inline DecodeResult exhaustive_decode(const s2seval::g2p::Graphemes& word, const s2seval::g2p::PairNgramModel& model) {
    using s2seval::g2p::PairNgramModel;
    DecodeResult best;
    std::vector<int> tokens;
    std::function<void(std::size_t, double, bool)> walk = [&](std::size_t pos, double score, bool last_ins) {
        std::vector<int> history{PairNgramModel::kBegin};
        history.insert(history.end(), tokens.begin(), tokens.end());
        if (pos == word.size()) {
            const double total = score + model.logprob(PairNgramModel::kEnd, history);
            if (!best.found || total > best.logprob) {
                best.found = true;
                best.logprob = total;
                best.phonemes.clear();
                for (int t : tokens) {
                    const auto& p = model.link(t).phonemes;
                    best.phonemes.insert(best.phonemes.end(), p.begin(), p.end());
                }
            }
        }
        for (std::size_t t = 2; t < model.vocabulary_size(); ++t) {
            const auto& link = model.link(static_cast<int>(t));
            const bool insertion = link.graphemes.empty();
            if (insertion && last_ins) continue;
            if (pos + link.graphemes.size() > word.size()) continue;
            if (!std::equal(link.graphemes.begin(), link.graphemes.end(), word.begin() + static_cast<long>(pos))) {
                continue;
            }
            const double step = model.logprob(static_cast<int>(t), history);
            tokens.push_back(static_cast<int>(t));
            walk(pos + link.graphemes.size(), score + step, insertion);
            tokens.pop_back();
        }
    };
    walk(0, 0.0, false);
    return best;
}

// Deterministic toy orthography: every letter has one phoneme, "ch" is a
// single phoneme and "x" is two.
inline s2seval::g2p::Phonemes toy_pronunciation(const std::string& word) {
    s2seval::g2p::Phonemes out;
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (word[i] == 'c' && i + 1 < word.size() && word[i + 1] == 'h') {
            out.push_back("X");
            ++i;
        } else if (word[i] == 'x') {
            out.push_back("K");
            out.push_back("S");
        } else {
            out.push_back(std::string(1, static_cast<char>(word[i] - 'a' + 'A')));
        }
    }
    return out;
}

inline const std::vector<std::string>& toy_training_words() {
    static const std::vector<std::string> words{
        "bad",  "dab",   "ban",  "nab",  "mit",  "tim",   "lot",  "tol",  "rum",  "mur",
        "bach", "chin",  "mach", "chor", "axe",  "box",   "sue",  "ewe",  "pig",  "kid",
    };
    return words;
}

inline const std::vector<std::string>& toy_heldout_words() {
    static const std::vector<std::string> words{"bun", "tin", "rot", "much", "mix", "dig", "pub", "sit", "chop", "lab"};
    return words;
}

inline s2seval::g2p::Lexicon toy_lexicon(const std::vector<std::string>& words) {
    s2seval::g2p::Lexicon lex;
    for (const auto& w : words) lex.add(w, toy_pronunciation(w));
    return lex;
}

inline s2seval::g2p::PairNgramModel toy_model(std::size_t order = 3) {
    const auto aligned = s2seval::g2p::train_alignment(toy_lexicon(toy_training_words()));
    return s2seval::g2p::train_pair_ngram(aligned.alignments, order);
}

// ---- Dialect spelling fixture ----------------------------------------------

// Two spellings of the same sentences: writer B doubles long vowels where
// writer A uses single letters. Both spellings are pronounced identically.
struct DialectFixture {
    std::vector<std::string> spelling_a;
    std::vector<std::string> spelling_b;
    s2seval::g2p::Lexicon training;
};

inline s2seval::g2p::Phonemes dialect_pronunciation(const std::string& word) {
    s2seval::g2p::Phonemes out;
    const auto g = s2seval::g2p::graphemes_of(word);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i + 1 < g.size() && g[i] == g[i + 1] && std::string("aeiouäöü").find(g[i]) != std::string::npos) ++i;
        out.push_back(g[i] == "ü" ? "Y" : s2seval::utf8::to_lower(g[i]));
    }
    return out;
}

inline DialectFixture dialect_fixture() {
    DialectFixture f;
    f.spelling_a = {"schitüre sind gross", "mir gö hei", "di tür isch zue", "er git mer s brot",
                    "si sitzt im gartä"};
    f.spelling_b = {"schiitüüre siind grooss", "miir göö heei", "dii tüür iisch zuee", "eer giit meer s broot",
                    "sii siitzt iim gaartää"};
    const std::vector<std::string> vocabulary{
        "schitüre", "schiitüüre", "sind",  "siind", "gross", "grooss", "mir",  "miir", "gö",   "göö",
        "hei",      "heei",       "di",    "dii",   "tür",   "tüür",   "isch", "iisch", "zue", "zuee",
        "er",       "eer",        "git",   "giit",  "mer",   "meer",   "s",    "brot",  "broot", "si",
        "sii",      "sitzt",      "siitzt", "im",   "iim",   "gartä",  "gaartää", "tag", "taag", "huus"};
    for (const auto& w : vocabulary) f.training.add(w, dialect_pronunciation(w));
    return f;
}

// ---- Audio fixtures ----------------------------------------------------------

inline s2seval::speech::AudioBuffer tone(double freq, double seconds, int rate, double noise, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, noise);
    s2seval::speech::AudioBuffer buf;
    buf.sample_rate = rate;
    const auto count = static_cast<std::size_t>(seconds * rate);
    for (std::size_t t = 0; t < count; ++t) {
        const double x = 0.4 * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / rate) +
                         (noise > 0.0 ? n(gen) : 0.0);
        buf.samples.push_back(std::clamp(x, -1.0, 1.0));
    }
    return buf;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("s2seval-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Smallest number of sets whose union is `universe`, by trying every subset
// in order of size. Returns 0 when no subset covers.
inline std::size_t minimum_cover_size(const std::vector<std::set<std::string>>& sets,
                                      const std::set<std::string>& universe, std::size_t max_k) {
    const std::size_t n = sets.size();
    std::vector<std::size_t> pick;
    std::function<bool(std::size_t, std::size_t)> search = [&](std::size_t start, std::size_t left) {
        if (left == 0) {
            std::set<std::string> u;
            for (auto i : pick) u.insert(sets[i].begin(), sets[i].end());
            return std::includes(u.begin(), u.end(), universe.begin(), universe.end());
        }
        for (std::size_t i = start; i < n; ++i) {
            pick.push_back(i);
            if (search(i + 1, left - 1)) return true;
            pick.pop_back();
        }
        return false;
    };
    for (std::size_t k = 1; k <= std::min(max_k, n); ++k) {
        pick.clear();
        if (search(0, k)) return k;
    }
    return 0;
}

// A 24-segment corpus over "abcdefghi" whose smallest cover has three
// segments: "abc", "def", "ghi".
inline s2seval::EvalCorpus cover3_corpus() {
    const std::vector<std::string> texts{
        "ab", "bc", "de", "ef", "gh", "hi", "abc", "def", "ghi", "ad",  "be",  "cf",
        "dg", "eh", "fi", "ag", "bh", "ci", "a b", "d e", "g h", "aa", "dd", "gg",
    };
    std::vector<s2seval::EvalSegment> segs;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        s2seval::EvalSegment s;
        s.id = "s" + std::to_string(i + 1);
        s.reference_texts = {texts[i]};
        s.hypothesis_text = texts[i];
        segs.push_back(std::move(s));
    }
    return s2seval::EvalCorpus(std::move(segs), "cover3");
}

} // namespace testing
