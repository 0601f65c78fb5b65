#include "s2seval/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "s2seval/parallel.hpp"
#include "s2seval/random.hpp"

namespace s2seval::stats {

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            return out;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::optional<double> parse_cell(std::string_view cell, std::size_t line_no) {
    if (cell.empty() || cell == "NA" || cell == "nan" || cell == "NaN") return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ValidationError(fmt::format("line {}: '{}' is not a number", line_no, cell));
    }
    return v;
}

double quantile(const std::vector<double>& sorted, double q) {
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto below = static_cast<std::size_t>(std::floor(h));
    const std::size_t above = std::min(below + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(below);
    if (frac == 0.0 || sorted[below] == sorted[above]) return sorted[below];
    return sorted[below] + frac * (sorted[above] - sorted[below]);
}

std::string format_value(const std::optional<double>& v, int decimals) {
    return v ? fmt::format("{:.{}f}", *v, decimals) : std::string{};
}

} // namespace

ScoreTable::ScoreTable(std::vector<std::string> row_ids) : rows_(std::move(row_ids)) {
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (rows_[i].empty()) throw ValidationError("score table row id must not be empty");
        if (!row_index_.emplace(rows_[i], i).second) {
            throw ValidationError(fmt::format("duplicate row id '{}'", rows_[i]));
        }
    }
}

const std::vector<std::optional<double>>& ScoreTable::column(std::string_view name) const {
    for (std::size_t c = 0; c < names_.size(); ++c) {
        if (names_[c] == name) return columns_[c];
    }
    throw ValidationError(fmt::format("no column named '{}'", name));
}

std::optional<std::size_t> ScoreTable::row_index(std::string_view id) const {
    const auto it = row_index_.find(id);
    if (it == row_index_.end()) return std::nullopt;
    return it->second;
}

void ScoreTable::add_column(std::string name, std::vector<std::optional<double>> values) {
    if (name.empty() || name == "id") throw ValidationError(fmt::format("invalid column name '{}'", name));
    if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
        throw ValidationError(fmt::format("duplicate column '{}'", name));
    }
    if (values.size() != rows_.size()) {
        throw ValidationError(fmt::format("column '{}' has {} cells for {} rows", name, values.size(), rows_.size()));
    }
    names_.push_back(std::move(name));
    columns_.push_back(std::move(values));
}

void ScoreTable::add_column(std::string name, std::span<const std::pair<std::string, double>> values) {
    std::vector<std::optional<double>> cells(rows_.size());
    for (const auto& [id, v] : values) {
        const auto row = row_index(id);
        if (!row) throw ValidationError(fmt::format("column '{}' refers to unknown row '{}'", name, id));
        cells[*row] = v;
    }
    add_column(std::move(name), std::move(cells));
}

ScoreTable ScoreTable::merged(const ScoreTable& other) const {
    std::vector<std::string> ids = rows_;
    for (const auto& id : other.rows_) {
        if (!row_index_.contains(id)) ids.push_back(id);
    }
    ScoreTable out(ids);
    auto extend = [&](const ScoreTable& src) {
        for (std::size_t c = 0; c < src.names_.size(); ++c) {
            std::vector<std::optional<double>> cells(ids.size());
            for (std::size_t r = 0; r < src.rows_.size(); ++r) cells[*out.row_index(src.rows_[r])] = src.columns_[c][r];
            out.add_column(src.names_[c], std::move(cells));
        }
    };
    extend(*this);
    extend(other);
    return out;
}

std::string ScoreTable::to_tsv() const {
    std::string out = "id";
    for (const auto& n : names_) out += "\t" + n;
    out += '\n';
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        out += rows_[r];
        for (const auto& col : columns_) out += "\t" + format_value(col[r], 6);
        out += '\n';
    }
    return out;
}

ScoreTable ScoreTable::from_tsv(std::string_view content) {
    std::vector<std::string> header;
    std::vector<std::string> ids;
    std::vector<std::vector<std::optional<double>>> cols;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        auto cells = split_tabs(line);
        if (header.empty()) {
            if (cells.front() != "id") throw ValidationError(fmt::format("line {}: first column must be 'id'", line_no));
            header = std::move(cells);
            cols.resize(header.size() - 1);
            continue;
        }
        if (cells.size() != header.size()) {
            throw ValidationError(
                fmt::format("line {}: {} cells but the header has {}", line_no, cells.size(), header.size()));
        }
        ids.push_back(cells.front());
        for (std::size_t c = 1; c < cells.size(); ++c) cols[c - 1].push_back(parse_cell(cells[c], line_no));
    }
    if (header.empty()) throw ValidationError("score table has no header row");
    ScoreTable table(std::move(ids));
    for (std::size_t c = 0; c < cols.size(); ++c) table.add_column(header[c + 1], std::move(cols[c]));
    return table;
}

ScoreTable ScoreTable::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open score table '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return from_tsv(buf.str());
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void BootstrapConfig::validate() const {
    if (resamples < 1) throw ValidationError("bootstrap needs at least one resample");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("confidence must lie in (0, 1)");
}

std::string format_pm(const IntervalEstimate& estimate, int decimals) {
    return fmt::format("{:.{}f} ± {:.{}f}", estimate.point, decimals, estimate.half_width(), decimals);
}

double mean(std::span<const double> values) {
    if (values.empty()) throw ValidationError("mean of an empty series");
    const double anchor = values.front();
    double offset = 0.0;
    for (double v : values) offset += v - anchor;
    return anchor + offset / static_cast<double>(values.size());
}

IntervalEstimate bootstrap_ci(std::size_t sample_count, const IndexStatistic& statistic,
                              const BootstrapConfig& config) {
    config.validate();
    if (sample_count == 0) throw ValidationError("bootstrap needs at least one value");

    std::vector<std::size_t> identity(sample_count);
    for (std::size_t i = 0; i < sample_count; ++i) identity[i] = i;

    IntervalEstimate out;
    out.point = statistic(identity);

    std::vector<double> replicates(config.resamples);
    parallel_for(config.resamples, config.jobs, [&](std::size_t r) {
        auto gen = rng::stream(config.seed, r);
        std::vector<std::size_t> indices(sample_count);
        for (auto& idx : indices) idx = rng::index(gen, sample_count);
        replicates[r] = statistic(indices);
    });
    std::sort(replicates.begin(), replicates.end());
    out.lo = quantile(replicates, (1.0 - config.confidence) / 2.0);
    out.hi = quantile(replicates, (1.0 + config.confidence) / 2.0);
    return out;
}

IntervalEstimate bootstrap_ci(std::span<const double> values, const BootstrapConfig& config) {
    if (values.empty()) throw ValidationError("bootstrap needs at least one value");
    return bootstrap_ci(
        values.size(),
        [values](std::span<const std::size_t> idx) {
            std::vector<double> picked;
            picked.reserve(idx.size());
            for (std::size_t i : idx) picked.push_back(values[i]);
            return mean(picked);
        },
        config);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError(fmt::format("series lengths differ: {} vs {}", x.size(), y.size()));
    if (x.size() < 2) throw ValidationError("correlation needs at least two points");
    std::vector<std::pair<double, double>> points(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) points[i] = {x[i], y[i]};
    std::sort(points.begin(), points.end());

    const double n = static_cast<double>(points.size());
    double sx = 0.0;
    double sy = 0.0;
    for (const auto& [a, b] : points) {
        sx += a;
        sy += b;
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (const auto& [a, b] : points) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw ValidationError("correlation is undefined for a constant series");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationMatrix correlation_matrix(const ScoreTable& table) {
    const auto& names = table.column_names();
    if (names.size() < 2) throw ValidationError("correlation matrix needs at least two columns");
    CorrelationMatrix out;
    out.names = names;
    out.cells.assign(names.size(), std::vector<CorrelationCell>(names.size()));
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto& a = table.column(names[i]);
        for (std::size_t j = i; j < names.size(); ++j) {
            const auto& b = table.column(names[j]);
            std::vector<double> xs;
            std::vector<double> ys;
            for (std::size_t r = 0; r < a.size(); ++r) {
                if (a[r] && b[r]) {
                    xs.push_back(*a[r]);
                    ys.push_back(*b[r]);
                }
            }
            CorrelationCell cell{std::nullopt, xs.size()};
            if (xs.size() >= 2) {
                try {
                    cell.r = i == j ? (pearson(xs, ys), 1.0) : pearson(xs, ys);
                } catch (const ValidationError&) {
                    cell.r.reset();
                }
            }
            out.cells[i][j] = cell;
            out.cells[j][i] = cell;
        }
    }
    return out;
}

std::string CorrelationMatrix::to_tsv(int decimals) const {
    std::string out = "metric";
    for (const auto& n : names) out += "\t" + n;
    out += '\n';
    for (std::size_t i = 0; i < names.size(); ++i) {
        out += names[i];
        for (std::size_t j = 0; j < names.size(); ++j) out += "\t" + format_value(cells[i][j].r, decimals);
        out += '\n';
    }
    out += "support";
    for (const auto& n : names) out += "\t" + n;
    out += '\n';
    for (std::size_t i = 0; i < names.size(); ++i) {
        out += names[i];
        for (std::size_t j = 0; j < names.size(); ++j) out += fmt::format("\t{}", cells[i][j].support);
        out += '\n';
    }
    return out;
}

std::string CorrelationMatrix::to_json(int decimals) const {
    nlohmann::ordered_json j;
    j["names"] = names;
    auto r = nlohmann::ordered_json::array();
    auto support = nlohmann::ordered_json::array();
    for (const auto& row : cells) {
        auto jr = nlohmann::ordered_json::array();
        auto js = nlohmann::ordered_json::array();
        for (const auto& cell : row) {
            // Rounded through text so JSON and TSV agree digit for digit.
            if (cell.r) {
                jr.push_back(nlohmann::ordered_json::parse(fmt::format("{:.{}f}", *cell.r, decimals)));
            } else {
                jr.push_back(nullptr);
            }
            js.push_back(cell.support);
        }
        r.push_back(std::move(jr));
        support.push_back(std::move(js));
    }
    j["r"] = std::move(r);
    j["support"] = std::move(support);
    return j.dump(2) + "\n";
}

PrePostReport prepost_report(const std::map<std::string, double>& pre, const std::map<std::string, double>& post) {
    PrePostReport out;
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [id, v] : pre) {
        if (const auto it = post.find(id); it != post.end()) {
            out.pairs.emplace_back(id, v, it->second);
            xs.push_back(v);
            ys.push_back(it->second);
        }
    }
    if (xs.size() < 2) {
        throw ValidationError(fmt::format("pre/post comparison needs at least 2 shared ids, found {}", xs.size()));
    }
    out.r = pearson(xs, ys);
    return out;
}

} // namespace s2seval::stats
