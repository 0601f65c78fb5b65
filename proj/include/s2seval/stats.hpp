#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "s2seval/errors.hpp"

namespace s2seval::stats {

// Segment ids by named score series. Absent cells are std::nullopt.
class ScoreTable {
public:
    ScoreTable() = default;
    explicit ScoreTable(std::vector<std::string> row_ids);

    const std::vector<std::string>& rows() const { return rows_; }
    const std::vector<std::string>& column_names() const { return names_; }
    const std::vector<std::optional<double>>& column(std::string_view name) const;
    std::optional<std::size_t> row_index(std::string_view id) const;

    // Adds a column aligned to rows(). Throws on a duplicate name or a length
    // mismatch.
    void add_column(std::string name, std::vector<std::optional<double>> values);
    // Adds a column from (id, value) pairs; ids not in the table are an error,
    // rows without a value stay absent.
    void add_column(std::string name, std::span<const std::pair<std::string, double>> values);

    // Outer join on row id: rows of `this` first, then new ids from `other`
    // in their order.
    ScoreTable merged(const ScoreTable& other) const;

    std::string to_tsv() const;
    static ScoreTable from_tsv(std::string_view content);
    static ScoreTable load(const std::filesystem::path& path);

private:
    std::vector<std::string> rows_;
    std::map<std::string, std::size_t, std::less<>> row_index_;
    std::vector<std::string> names_;
    std::vector<std::vector<std::optional<double>>> columns_;
};

struct BootstrapConfig {
    std::size_t resamples = 1000;
    double confidence = 0.95;
    std::uint64_t seed = 0;
    unsigned jobs = 1;

    void validate() const;
};

enum class IntervalMethod { Percentile };

struct IntervalEstimate {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    IntervalMethod method = IntervalMethod::Percentile;

    double half_width() const { return (hi - lo) / 2.0; }
};

// "3.8 ± 0.1"-style rendering using the interval half-width.
std::string format_pm(const IntervalEstimate& estimate, int decimals = 1);

// Receives the sample indices of one resample (with repetition) and returns
// the statistic. Lets corpus-level metrics be recomputed from pooled
// per-segment statistics.
using IndexStatistic = std::function<double(std::span<const std::size_t>)>;

// Mean that is exact for constant input.
double mean(std::span<const double> values);

// Percentile bootstrap. Resample r draws its indices from a generator seeded
// by (seed, r), so results do not depend on config.jobs.
IntervalEstimate bootstrap_ci(std::size_t sample_count, const IndexStatistic& statistic,
                              const BootstrapConfig& config);
IntervalEstimate bootstrap_ci(std::span<const double> values, const BootstrapConfig& config);

// Product-moment correlation. Throws ValidationError for fewer than two
// points, unequal lengths or a constant series. The value does not depend
// on the order of the points.
double pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationCell {
    std::optional<double> r;
    std::size_t support = 0;
};

struct CorrelationMatrix {
    std::vector<std::string> names;
    std::vector<std::vector<CorrelationCell>> cells;

    const CorrelationCell& at(std::size_t i, std::size_t j) const { return cells[i][j]; }

    std::string to_tsv(int decimals = 6) const;
    std::string to_json(int decimals = 6) const;
};

// Pairwise-complete correlations between all columns. Pairs with fewer than
// two overlapping rows, or a constant series, are left absent.
CorrelationMatrix correlation_matrix(const ScoreTable& table);

struct PrePostReport {
    double r = 0.0;
    std::vector<std::tuple<std::string, double, double>> pairs;  // sorted by id
};

PrePostReport prepost_report(const std::map<std::string, double>& pre, const std::map<std::string, double>& post);

} // namespace s2seval::stats
