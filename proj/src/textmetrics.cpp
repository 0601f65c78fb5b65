#include "s2seval/textmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>

#include <fmt/format.h>

#include "s2seval/utf8.hpp"

namespace s2seval::text {

namespace {

// mteval-v13a rules, applied in order.
const std::regex& punctuation_re() {
    static const std::regex re(R"(([\{-~\[-`\x20-&\(-\+:-@/]))");
    return re;
}
const std::regex& period_comma_after_re() {
    static const std::regex re(R"(([^0-9])([\.,]))");
    return re;
}
const std::regex& period_comma_before_re() {
    static const std::regex re(R"(([\.,])([^0-9]))");
    return re;
}
const std::regex& dash_after_digit_re() {
    static const std::regex re(R"(([0-9])(-))");
    return re;
}

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

template <class T, class U>
void check_parallel(std::span<const T> hyps, std::span<const U> refs) {
    if (hyps.size() != refs.size()) {
        throw ValidationError(
            fmt::format("{} hypotheses but {} reference sets", hyps.size(), refs.size()));
    }
    if (hyps.empty()) throw ValidationError("at least one segment is required");
}

double chrf_fscore(double precision, double recall, double beta) {
    const double b2 = beta * beta;
    const double denom = b2 * precision + recall;
    return denom > 0.0 ? (1.0 + b2) * precision * recall / denom : 0.0;
}

} // namespace

TokenSequence tokenize(std::string_view text, Granularity granularity) {
    TokenSequence seq;
    seq.granularity = granularity;
    if (granularity == Granularity::Char) {
        seq.tokens = utf8::split_scalars(text);
        return seq;
    }
    std::string line(text);
    line = replace_all(std::move(line), "<skipped>", "");
    line = replace_all(std::move(line), "-\n", "");
    line = replace_all(std::move(line), "\n", " ");
    if (line.find('&') != std::string::npos) {
        line = replace_all(std::move(line), "&quot;", "\"");
        line = replace_all(std::move(line), "&amp;", "&");
        line = replace_all(std::move(line), "&lt;", "<");
        line = replace_all(std::move(line), "&gt;", ">");
    }
    line = " " + line + " ";
    line = std::regex_replace(line, punctuation_re(), " $1 ");
    line = std::regex_replace(line, period_comma_after_re(), "$1 $2 ");
    line = std::regex_replace(line, period_comma_before_re(), " $1 $2");
    line = std::regex_replace(line, dash_after_digit_re(), "$1 $2 ");
    seq.tokens = split_whitespace(line);
    return seq;
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
    if (other.matches.size() != matches.size()) throw ValidationError("cannot pool BLEU statistics of different orders");
    hyp_len += other.hyp_len;
    ref_len += other.ref_len;
    for (std::size_t n = 0; n < matches.size(); ++n) {
        matches[n] += other.matches[n];
        totals[n] += other.totals[n];
    }
    return *this;
}

BleuStats bleu_stats(const TokenSequence& hyp, std::span<const TokenSequence> refs, std::size_t max_n) {
    if (max_n == 0) throw ValidationError("BLEU order must be at least 1");
    if (refs.empty()) throw ValidationError("BLEU needs at least one reference per segment");
    BleuStats stats(max_n);
    stats.hyp_len = hyp.tokens.size();

    std::size_t best_len = refs.front().tokens.size();
    std::size_t best_diff = std::numeric_limits<std::size_t>::max();
    for (const auto& ref : refs) {
        const std::size_t len = ref.tokens.size();
        const std::size_t diff = len > stats.hyp_len ? len - stats.hyp_len : stats.hyp_len - len;
        if (diff < best_diff || (diff == best_diff && len < best_len)) {
            best_diff = diff;
            best_len = len;
        }
    }
    stats.ref_len = best_len;

    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto hyp_counts = count_ngrams(hyp.tokens, n);
        NgramCounts max_ref;
        for (const auto& ref : refs) {
            for (const auto& [gram, c] : count_ngrams(ref.tokens, n)) {
                auto& slot = max_ref[gram];
                slot = std::max(slot, c);
            }
        }
        std::size_t matched = 0;
        for (const auto& [gram, c] : hyp_counts) {
            if (const auto it = max_ref.find(gram); it != max_ref.end()) matched += std::min(c, it->second);
        }
        stats.matches[n - 1] = matched;
        stats.totals[n - 1] = hyp.tokens.size() >= n ? hyp.tokens.size() - n + 1 : 0;
    }
    return stats;
}

BleuScore bleu_from_stats(const BleuStats& stats, Smoothing smoothing) {
    const std::size_t max_n = stats.matches.size();
    BleuScore out;
    out.hyp_len = stats.hyp_len;
    out.ref_len = stats.ref_len;
    out.precisions.assign(max_n, 0.0);
    for (std::size_t n = 0; n < max_n; ++n) {
        if (stats.totals[n] > 0) {
            out.precisions[n] = static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]);
        }
    }
    if (stats.hyp_len == 0) {
        out.brevity_penalty = 0.0;
        return out;
    }
    out.brevity_penalty = stats.hyp_len < stats.ref_len
                              ? std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len))
                              : 1.0;

    double log_sum = 0.0;
    std::size_t effective_order = 0;
    for (std::size_t n = 0; n < max_n; ++n) {
        if (smoothing == Smoothing::None) {
            if (stats.matches[n] == 0) return out;
            log_sum += std::log(out.precisions[n]);
            ++effective_order;
        } else {
            if (stats.totals[n] == 0) break;
            const double numerator = std::max(static_cast<double>(stats.matches[n]), 1e-16);
            log_sum += std::log(numerator / static_cast<double>(stats.totals[n]));
            ++effective_order;
        }
    }
    if (effective_order == 0) return out;
    out.score = 100.0 * out.brevity_penalty * std::exp(log_sum / static_cast<double>(effective_order));
    out.score = std::clamp(out.score, 0.0, 100.0);
    return out;
}

BleuScore corpus_bleu(std::span<const TokenSequence> hyps, std::span<const std::vector<TokenSequence>> refs,
                      std::size_t max_n, Smoothing smoothing) {
    check_parallel(hyps, refs);
    BleuStats total(max_n);
    for (std::size_t i = 0; i < hyps.size(); ++i) total += bleu_stats(hyps[i], refs[i], max_n);
    return bleu_from_stats(total, smoothing);
}

namespace {

BleuScore tokenized_bleu(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                         std::size_t max_n, Smoothing smoothing, Granularity granularity) {
    check_parallel(hyps, refs);
    std::vector<TokenSequence> hyp_tokens;
    std::vector<std::vector<TokenSequence>> ref_tokens;
    hyp_tokens.reserve(hyps.size());
    ref_tokens.reserve(refs.size());
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        hyp_tokens.push_back(tokenize(hyps[i], granularity));
        auto& set = ref_tokens.emplace_back();
        for (const auto& r : refs[i]) set.push_back(tokenize(r, granularity));
    }
    return corpus_bleu(hyp_tokens, ref_tokens, max_n, smoothing);
}

} // namespace

BleuScore word_bleu(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                    std::size_t max_n, Smoothing smoothing) {
    return tokenized_bleu(hyps, refs, max_n, smoothing, Granularity::Word);
}

BleuScore char_bleu(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                    std::size_t max_n, Smoothing smoothing) {
    return tokenized_bleu(hyps, refs, max_n, smoothing, Granularity::Char);
}

ChrfStats& ChrfStats::operator+=(const ChrfStats& other) {
    if (other.matches.size() != matches.size()) throw ValidationError("cannot pool chrF statistics of different orders");
    for (std::size_t n = 0; n < matches.size(); ++n) {
        hyp_counts[n] += other.hyp_counts[n];
        ref_counts[n] += other.ref_counts[n];
        matches[n] += other.matches[n];
    }
    return *this;
}

ChrfScore chrf_from_stats(const ChrfStats& stats, double beta) {
    if (!(beta > 0.0)) throw ValidationError("chrF beta must be positive");
    ChrfScore out;
    out.beta = beta;
    out.max_n = stats.matches.size();
    double precision = 0.0;
    double recall = 0.0;
    std::size_t effective_order = 0;
    for (std::size_t n = 0; n < stats.matches.size(); ++n) {
        if (stats.hyp_counts[n] == 0 || stats.ref_counts[n] == 0) continue;
        precision += static_cast<double>(stats.matches[n]) / static_cast<double>(stats.hyp_counts[n]);
        recall += static_cast<double>(stats.matches[n]) / static_cast<double>(stats.ref_counts[n]);
        ++effective_order;
    }
    if (effective_order == 0) return out;
    out.precision = precision / static_cast<double>(effective_order);
    out.recall = recall / static_cast<double>(effective_order);
    out.fscore = chrf_fscore(out.precision, out.recall, beta);
    return out;
}

ChrfStats chrf_stats(std::string_view hyp, std::span<const std::string> refs, std::size_t max_n, double beta) {
    if (max_n == 0) throw ValidationError("chrF order must be at least 1");
    if (refs.empty()) throw ValidationError("chrF needs at least one reference per segment");
    const auto hyp_chars = utf8::split_scalars(utf8::strip_whitespace(hyp));
    std::vector<NgramCounts> hyp_grams;
    for (std::size_t n = 1; n <= max_n; ++n) hyp_grams.push_back(count_ngrams(hyp_chars, n));

    std::optional<ChrfStats> best;
    double best_f = -1.0;
    for (const auto& ref : refs) {
        const auto ref_chars = utf8::split_scalars(utf8::strip_whitespace(ref));
        ChrfStats stats(max_n);
        for (std::size_t n = 1; n <= max_n; ++n) {
            const auto ref_grams = count_ngrams(ref_chars, n);
            std::size_t matched = 0;
            for (const auto& [gram, c] : hyp_grams[n - 1]) {
                if (const auto it = ref_grams.find(gram); it != ref_grams.end()) matched += std::min(c, it->second);
            }
            stats.hyp_counts[n - 1] = hyp_chars.size() >= n ? hyp_chars.size() - n + 1 : 0;
            stats.ref_counts[n - 1] = ref_chars.size() >= n ? ref_chars.size() - n + 1 : 0;
            stats.matches[n - 1] = matched;
        }
        const double f = chrf_from_stats(stats, beta).fscore;
        if (f > best_f) {
            best_f = f;
            best = std::move(stats);
        }
    }
    return *best;
}

ChrfScore chrf(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs, std::size_t max_n,
               double beta) {
    check_parallel(hyps, refs);
    ChrfStats total(max_n);
    for (std::size_t i = 0; i < hyps.size(); ++i) total += chrf_stats(hyps[i], refs[i], max_n, beta);
    return chrf_from_stats(total, beta);
}

std::string_view to_string(Metric metric) {
    switch (metric) {
    case Metric::Bleu: return "bleu";
    case Metric::CharBleu: return "charbleu";
    case Metric::Chrf: return "chrf";
    }
    return "?";
}

Metric parse_metric(std::string_view name) {
    if (name == "bleu") return Metric::Bleu;
    if (name == "charbleu" || name == "char_bleu" || name == "charBLEU") return Metric::CharBleu;
    if (name == "chrf" || name == "chrF") return Metric::Chrf;
    throw ValidationError(fmt::format("unknown text metric '{}'", name));
}

double corpus_score(Metric metric, std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs) {
    switch (metric) {
    case Metric::Bleu: return word_bleu(hyps, refs).score;
    case Metric::CharBleu: return char_bleu(hyps, refs).score;
    case Metric::Chrf: return chrf(hyps, refs).fscore;
    }
    return 0.0;
}

std::vector<std::pair<std::string, double>> segment_scores(Metric metric, const EvalCorpus& corpus) {
    corpus.require({.text_metrics = true});
    std::vector<std::pair<std::string, double>> out;
    out.reserve(corpus.size());
    for (const auto& seg : corpus.segments()) {
        const std::span<const std::string> hyp(&*seg.hypothesis_text, 1);
        const std::span<const std::vector<std::string>> refs(&seg.reference_texts, 1);
        double score = 0.0;
        switch (metric) {
        case Metric::Bleu: score = word_bleu(hyp, refs, 4, Smoothing::Epsilon).score; break;
        case Metric::CharBleu: score = char_bleu(hyp, refs, 4, Smoothing::Epsilon).score; break;
        case Metric::Chrf: score = chrf(hyp, refs).fscore; break;
        }
        out.emplace_back(seg.id, score);
    }
    return out;
}

BleuScore dialect_distance(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.size() != b.size()) {
        throw ValidationError(fmt::format("dialect texts are not parallel: {} vs {} lines", a.size(), b.size()));
    }
    std::vector<TokenSequence> hyps;
    std::vector<std::vector<TokenSequence>> refs;
    std::size_t longest = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        hyps.push_back(tokenize(a[i], Granularity::Word));
        refs.push_back({tokenize(b[i], Granularity::Word)});
        longest = std::max(longest, hyps.back().tokens.size());
    }
    // Orders that no line is long enough to contain are left out, so short
    // identical texts still score 100.
    return corpus_bleu(hyps, refs, std::clamp<std::size_t>(longest, 1, 4));
}

} // namespace s2seval::text
