#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s2seval/errors.hpp"

namespace s2seval::g2p {

// One string per Unicode scalar of the written word.
using Graphemes = std::vector<std::string>;
using Phonemes = std::vector<std::string>;

Graphemes graphemes_of(std::string_view word);
std::string join(const Phonemes& phonemes, std::string_view sep = " ");

class Lexicon {
public:
    void add(const std::string& word, Phonemes pron);

    // Pronunciations of `word`, in insertion order, or nullptr.
    const std::vector<Phonemes>* find(std::string_view word) const;

    const std::map<std::string, std::vector<Phonemes>, std::less<>>& entries() const { return entries_; }
    const std::set<std::string>& inventory() const { return inventory_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

private:
    std::map<std::string, std::vector<Phonemes>, std::less<>> entries_;
    std::set<std::string> inventory_;
};

// "word<TAB>ph ph ph" per line; blank lines and lines starting with ';;' are
// skipped. A word may appear on several lines.
Lexicon parse_lexicon(std::string_view content);
Lexicon load_lexicon(const std::filesystem::path& path);

// A grapheme chunk paired with a phoneme chunk. Either side may be empty,
// never both.
struct Link {
    Graphemes graphemes;
    Phonemes phonemes;

    friend auto operator<=>(const Link&, const Link&) = default;
};

// "g1|g2:p1|p2", with "_" for an empty side.
std::string to_string(const Link& link);

struct AlignedPair {
    Graphemes word;
    Phonemes pron;
    std::vector<Link> links;
};

struct AlignmentConfig {
    std::size_t max_chunk = 2;
    std::size_t em_iterations = 10;
    // Multiplier applied to 2:1 and 1:2 links, both during EM and when
    // picking the best alignment. Deletions and insertions (one side empty)
    // get it twice. Many-to-many links (both sides longer than one symbol)
    // are not allowed.
    double non_unit_penalty = 0.5;
};

struct SkippedEntry {
    std::string word;
    Phonemes pron;
    std::string reason;
};

struct AlignmentResult {
    std::vector<AlignedPair> alignments;
    std::vector<SkippedEntry> skipped;
};

// Many-to-many EM alignment. Each iteration runs forward-backward over every
// entry's alignment lattice to collect expected link counts, then
// renormalizes the joint link distribution. A link covering a graphemes and
// b phonemes contributes p^max(a,b) to a path. Entries whose lengths differ by
// more than a factor of max_chunk are skipped and reported.
AlignmentResult train_alignment(const Lexicon& lexicon, const AlignmentConfig& config = {});

// Interpolated Witten-Bell n-gram model over pair tokens. Token 0 is the
// sentence start, token 1 the sentence end, the rest are links.
class PairNgramModel {
public:
    static constexpr int kBegin = 0;
    static constexpr int kEnd = 1;

    PairNgramModel() = default;

    std::size_t order() const { return order_; }
    std::size_t vocabulary_size() const { return links_.size(); }
    const Link& link(int token) const { return links_.at(static_cast<std::size_t>(token)); }
    int token_of(const Link& link) const;  // -1 when unknown

    // P(token | history), using at most order-1 trailing history tokens.
    // token -1 stands for any out-of-vocabulary token.
    double prob(int token, std::span<const int> history) const;
    double logprob(int token, std::span<const int> history) const;

    // Tokens whose grapheme chunk equals word[pos, pos + len) for some len
    // (including the empty chunk), in ascending token order.
    std::vector<int> candidates(const Graphemes& word, std::size_t pos) const;

    const std::map<std::vector<int>, std::size_t>& ngram_counts() const { return counts_; }

    std::string to_json() const;
    static PairNgramModel from_json(std::string_view json);
    void save(const std::filesystem::path& path) const;
    static PairNgramModel load(const std::filesystem::path& path);

    friend PairNgramModel train_pair_ngram(std::span<const AlignedPair> alignments, std::size_t order);

private:
    struct HistoryStats {
        std::size_t count = 0;
        std::size_t types = 0;
    };

    void index();

    std::size_t order_ = 3;
    std::vector<Link> links_;
    std::map<Link, int> token_ids_;
    std::map<std::vector<int>, std::size_t> counts_;
    std::map<std::vector<int>, HistoryStats> histories_;
    std::map<Graphemes, std::vector<int>> by_graphemes_;
    std::size_t max_grapheme_chunk_ = 0;
};

PairNgramModel train_pair_ngram(std::span<const AlignedPair> alignments, std::size_t order = 3);

// Raised when a word cannot be decoded; `graphemes` lists the symbols the
// model has never seen (empty when they are known but no path exists).
class NoPronunciationError : public ValidationError {
public:
    NoPronunciationError(std::string word, std::vector<std::string> graphemes);

    const std::string& word() const { return word_; }
    const std::vector<std::string>& graphemes() const { return graphemes_; }

private:
    std::string word_;
    std::vector<std::string> graphemes_;
};

inline constexpr std::size_t kUnboundedBeam = std::numeric_limits<std::size_t>::max();

struct Pronunciation {
    Phonemes phonemes;
    std::vector<int> tokens;  // empty for lexicon hits
    double logprob = 0.0;
};

// Beam search over pair-token paths whose grapheme chunks spell `word`.
// Paths ending in the same model state are merged, so an unbounded beam is
// exact Viterbi decoding. Two insertion links (empty grapheme chunk) may not
// follow each other. An exact lexicon hit takes precedence.
Pronunciation decode(const Graphemes& word, const PairNgramModel& model, std::size_t beam = 32,
                     const Lexicon* lexicon = nullptr);

Phonemes g2p(const Graphemes& word, const PairNgramModel& model, std::size_t beam = 32,
             const Lexicon* lexicon = nullptr);

inline constexpr std::string_view kWordBoundary = "#";

// Splits on whitespace, lowercases, drops punctuation, maps every word to
// phonemes and joins phonemes with spaces and words with " # ".
std::string normalize_text(std::string_view text, const PairNgramModel& model, const Lexicon* lexicon = nullptr,
                           std::size_t beam = 32);

} // namespace s2seval::g2p
