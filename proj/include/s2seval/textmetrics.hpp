#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "s2seval/corpus.hpp"

namespace s2seval::text {

enum class Granularity { Word, Char };

struct TokenSequence {
    std::vector<std::string> tokens;
    Granularity granularity = Granularity::Word;
};

// Word granularity applies the mteval-13a punctuation rules and splits on
// whitespace. Char granularity yields one token per Unicode scalar,
// whitespace included.
TokenSequence tokenize(std::string_view text, Granularity granularity);

enum class Smoothing {
    // Plain BLEU: any order with zero matches (or no n-grams at all) gives 0.
    None,
    // Sentence-level variant: zero match counts are floored at 1e-16 and
    // orders longer than the hypothesis are left out of the geometric mean.
    Epsilon,
};

// Sufficient statistics for BLEU. Adding two of these pools two corpora.
struct BleuStats {
    std::size_t hyp_len = 0;
    std::size_t ref_len = 0;
    std::vector<std::size_t> matches;
    std::vector<std::size_t> totals;

    explicit BleuStats(std::size_t max_n = 4) : matches(max_n, 0), totals(max_n, 0) {}
    BleuStats& operator+=(const BleuStats& other);
};

struct BleuScore {
    double score = 0.0;                 // 0..100
    std::vector<double> precisions;     // unsmoothed matches/totals per order
    double brevity_penalty = 0.0;
    std::size_t hyp_len = 0;
    std::size_t ref_len = 0;
};

// Statistics for one segment; ref_len is the length of the closest reference
// (shorter wins on ties).
BleuStats bleu_stats(const TokenSequence& hyp, std::span<const TokenSequence> refs, std::size_t max_n = 4);
BleuScore bleu_from_stats(const BleuStats& stats, Smoothing smoothing = Smoothing::None);

BleuScore corpus_bleu(std::span<const TokenSequence> hyps, std::span<const std::vector<TokenSequence>> refs,
                      std::size_t max_n = 4, Smoothing smoothing = Smoothing::None);

// Word-level BLEU over raw strings using the 13a tokenizer.
BleuScore word_bleu(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                    std::size_t max_n = 4, Smoothing smoothing = Smoothing::None);

// BLEU over character sequences; spaces count as characters.
BleuScore char_bleu(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
                    std::size_t max_n = 4, Smoothing smoothing = Smoothing::None);

// Per-order character n-gram counts with whitespace removed.
struct ChrfStats {
    std::vector<std::size_t> hyp_counts;
    std::vector<std::size_t> ref_counts;
    std::vector<std::size_t> matches;

    explicit ChrfStats(std::size_t max_n = 6) : hyp_counts(max_n, 0), ref_counts(max_n, 0), matches(max_n, 0) {}
    ChrfStats& operator+=(const ChrfStats& other);
};

struct ChrfScore {
    double fscore = 0.0;   // 0..1
    double precision = 0.0;
    double recall = 0.0;
    double beta = 2.0;
    std::size_t max_n = 6;
};

// With several references the one giving the highest segment chrF is kept.
ChrfStats chrf_stats(std::string_view hyp, std::span<const std::string> refs, std::size_t max_n = 6,
                     double beta = 2.0);
ChrfScore chrf_from_stats(const ChrfStats& stats, double beta = 2.0);

ChrfScore chrf(std::span<const std::string> hyps, std::span<const std::vector<std::string>> refs,
               std::size_t max_n = 6, double beta = 2.0);

enum class Metric { Bleu, CharBleu, Chrf };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);

// Corpus-level score of `metric` on the 0..100 (BLEU family) or 0..1 (chrF)
// scale.
double corpus_score(Metric metric, std::span<const std::string> hyps,
                    std::span<const std::vector<std::string>> refs);

// One score per segment. BLEU and charBLEU use epsilon smoothing here.
std::vector<std::pair<std::string, double>> segment_scores(Metric metric, const EvalCorpus& corpus);

// BLEU with `a` as hypotheses and `b` as the single reference for each line.
// The maximum order drops below 4 when no line of `a` has that many words.
BleuScore dialect_distance(std::span<const std::string> a, std::span<const std::string> b);

} // namespace s2seval::text
