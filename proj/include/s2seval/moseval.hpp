#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "s2seval/corpus.hpp"
#include "s2seval/stats.hpp"

namespace s2seval::mos {

enum class Category { Overall, Adequacy, Fluency, Naturalness };

inline constexpr Category kAllCategories[] = {Category::Overall, Category::Adequacy, Category::Fluency,
                                              Category::Naturalness};

std::string_view to_string(Category category);
Category parse_category(std::string_view text);

struct RatingRecord {
    std::string sample_id;
    std::string rater_id;
    Category category = Category::Overall;
    int score = 0;               // 1..5
    std::int64_t timestamp = 0;  // milliseconds since the Unix epoch

    friend bool operator==(const RatingRecord&, const RatingRecord&) = default;
};

std::string to_json_line(const RatingRecord& record);
RatingRecord rating_from_json(std::string_view line);

class CoverageInfeasible : public ValidationError {
public:
    CoverageInfeasible(std::string message, std::vector<std::string> uncovered, std::size_t minimum_k);

    // Characters no selection of the requested size could cover.
    const std::vector<std::string>& uncovered() const { return uncovered_; }
    // Size of the smallest covering set found (0 if none exists).
    std::size_t minimum_k() const { return minimum_k_; }

private:
    std::vector<std::string> uncovered_;
    std::size_t minimum_k_;
};

// Characters (whitespace excluded) of every reference text in the corpus.
std::set<std::string> character_vocabulary(const EvalCorpus& corpus);

// Picks exactly k segment ids whose reference texts jointly contain every
// character of the corpus vocabulary: randomized greedy cover (rarest
// character first), then random fill up to k. Returned in corpus order.
std::vector<std::string> select_mos_samples(const EvalCorpus& corpus, std::size_t k = 20, std::uint64_t seed = 0);

struct StudySample {
    std::string id;
    std::filesystem::path audio;
};

// The active study: which samples are rated, by whom, and the seed for the
// per-rater presentation order.
struct Study {
    std::vector<StudySample> samples;
    std::vector<std::string> raters;
    std::uint64_t seed = 0;

    const StudySample* find(std::string_view id) const;
    bool has_rater(std::string_view id) const;

    std::string to_json() const;
    static Study from_json(std::string_view json, const std::filesystem::path& base_dir = {});
    static Study load(const std::filesystem::path& path);
};

struct Acknowledgment {
    std::size_t sequence = 0;  // 1-based position in the log
};

// Append-only JSONL rating log. Appends are serialized by a mutex and flushed
// per record; readers get a snapshot copy.
class RatingStore {
public:
    // Opens (and replays) the log at `log_path`; an empty path keeps ratings
    // in memory only.
    RatingStore(Study study, std::filesystem::path log_path = {});

    Acknowledgment record(RatingRecord record);
    std::vector<RatingRecord> snapshot() const;
    const Study& study() const { return study_; }

private:
    Study study_;
    std::filesystem::path log_path_;
    mutable std::mutex mutex_;
    std::vector<RatingRecord> log_;
    std::int64_t last_assigned_ = 0;
};

// Validates and appends. Unknown samples, unregistered raters (when the study
// lists raters) and scores outside 1..5 are rejected with ValidationError.
Acknowledgment record_rating(RatingStore& store, const RatingRecord& record);

// Last-write-wins view: per (sample, rater, category) the record with the
// latest timestamp; ties go to the higher score so the view does not depend
// on log order.
std::vector<RatingRecord> latest_ratings(const std::vector<RatingRecord>& log);

struct CategorySummary {
    stats::IntervalEstimate estimate;
    std::size_t rater_count = 0;
    std::size_t sample_count = 0;
};

struct MosSummary {
    std::map<Category, CategorySummary> categories;
    std::size_t sample_count = 0;

    std::string to_json() const;
    std::string to_tsv() const;
};

// Per category: mean over raters for each sample, then a bootstrap interval
// over the per-sample means.
MosSummary aggregate_mos(const std::vector<RatingRecord>& ratings, const stats::BootstrapConfig& bootstrap = {});

struct Assignment {
    std::string sample_id;
    std::string audio_url;
    std::vector<Category> pending;
};

// Samples the rater still has categories to rate for, in a per-rater order
// that is a seeded shuffle keyed by the rater id. A study without a rater
// list accepts any non-empty id.
std::vector<Assignment> assignment_view(const RatingStore& store, std::string_view rater_id);

std::string assignments_to_json(const std::vector<Assignment>& assignments);

} // namespace s2seval::mos
