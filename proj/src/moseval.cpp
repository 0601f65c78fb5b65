#include "s2seval/moseval.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "s2seval/random.hpp"
#include "s2seval/utf8.hpp"

namespace s2seval::mos {

namespace {

constexpr std::size_t kGreedyAttempts = 32;
constexpr std::size_t kExactSearchBudget = 2'000'000;

using CharSet = std::vector<int>;  // sorted character ids

struct CoverProblem {
    std::size_t vocab_size = 0;
    std::vector<CharSet> segment_chars;
    std::vector<std::vector<std::size_t>> segments_with;  // char id -> segments
};

std::vector<std::size_t> greedy_cover(const CoverProblem& p, std::mt19937_64& gen) {
    std::vector<bool> covered(p.vocab_size, false);
    std::size_t remaining = p.vocab_size;
    std::vector<std::size_t> chosen;
    while (remaining > 0) {
        // Rarest uncovered character, random among equally rare ones.
        std::vector<std::size_t> rarest;
        std::size_t rarity = std::numeric_limits<std::size_t>::max();
        for (std::size_t c = 0; c < p.vocab_size; ++c) {
            if (covered[c]) continue;
            const std::size_t n = p.segments_with[c].size();
            if (n < rarity) {
                rarity = n;
                rarest.clear();
            }
            if (n == rarity) rarest.push_back(c);
        }
        const std::size_t target = rarest[rng::index(gen, rarest.size())];

        // Among segments holding it, the one covering the most new characters.
        std::vector<std::size_t> best;
        std::size_t best_gain = 0;
        for (std::size_t s : p.segments_with[target]) {
            std::size_t gain = 0;
            for (int c : p.segment_chars[s]) gain += covered[static_cast<std::size_t>(c)] ? 0 : 1;
            if (gain > best_gain) {
                best_gain = gain;
                best.clear();
            }
            if (gain == best_gain) best.push_back(s);
        }
        const std::size_t pick = best[rng::index(gen, best.size())];
        chosen.push_back(pick);
        for (int c : p.segment_chars[pick]) {
            if (!covered[static_cast<std::size_t>(c)]) {
                covered[static_cast<std::size_t>(c)] = true;
                --remaining;
            }
        }
    }
    return chosen;
}

// Depth-limited exact search for a cover of at most `limit` segments,
// branching on the rarest uncovered character. Returns false when the budget
// runs out before the search completes.
struct ExactSearch {
    const CoverProblem& p;
    std::size_t budget;
    std::vector<int> cover_count;
    std::vector<std::size_t> chosen;
    std::optional<std::vector<std::size_t>> found;

    bool run(std::size_t limit) {
        cover_count.assign(p.vocab_size, 0);
        chosen.clear();
        found.reset();
        return dfs(limit);
    }

    bool dfs(std::size_t limit) {
        if (budget == 0) return false;
        --budget;
        std::optional<std::size_t> target;
        for (std::size_t c = 0; c < p.vocab_size; ++c) {
            if (cover_count[c] == 0 && (!target || p.segments_with[c].size() < p.segments_with[*target].size())) {
                target = c;
            }
        }
        if (!target) {
            found = chosen;
            return true;
        }
        if (chosen.size() == limit) return true;
        for (std::size_t s : p.segments_with[*target]) {
            chosen.push_back(s);
            for (int c : p.segment_chars[s]) ++cover_count[static_cast<std::size_t>(c)];
            const bool completed = dfs(limit);
            for (int c : p.segment_chars[s]) --cover_count[static_cast<std::size_t>(c)];
            chosen.pop_back();
            if (!completed) return false;
            if (found) return true;
        }
        return true;
    }
};

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void validate_record(const Study& study, const RatingRecord& record) {
    if (!study.find(record.sample_id)) {
        throw ValidationError(fmt::format("unknown sample '{}'", record.sample_id));
    }
    if (record.rater_id.empty()) throw ValidationError("rater_id must not be empty");
    if (!study.raters.empty() && !study.has_rater(record.rater_id)) {
        throw ValidationError(fmt::format("rater '{}' is not registered for this study", record.rater_id));
    }
    if (record.score < 1 || record.score > 5) {
        throw ValidationError(fmt::format("score {} is outside the 1..5 Likert range", record.score));
    }
}

} // namespace

std::string_view to_string(Category category) {
    switch (category) {
    case Category::Overall: return "overall";
    case Category::Adequacy: return "adequacy";
    case Category::Fluency: return "fluency";
    case Category::Naturalness: return "naturalness";
    }
    return "?";
}

Category parse_category(std::string_view text) {
    for (Category c : kAllCategories) {
        if (to_string(c) == text) return c;
    }
    throw ValidationError(fmt::format("unknown MOS category '{}'", text));
}

std::string to_json_line(const RatingRecord& record) {
    nlohmann::ordered_json j;
    j["sample_id"] = record.sample_id;
    j["rater_id"] = record.rater_id;
    j["category"] = to_string(record.category);
    j["score"] = record.score;
    j["timestamp"] = record.timestamp;
    return j.dump();
}

RatingRecord rating_from_json(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(fmt::format("rating is not valid JSON: {}", e.what()));
    }
    if (!j.is_object()) throw ValidationError("rating must be a JSON object");
    auto text = [&](const char* key) {
        const auto it = j.find(key);
        if (it == j.end() || !it->is_string()) throw ValidationError(fmt::format("rating field '{}' must be a string", key));
        return it->get<std::string>();
    };
    RatingRecord r;
    r.sample_id = text("sample_id");
    r.rater_id = text("rater_id");
    r.category = parse_category(text("category"));
    const auto score = j.find("score");
    if (score == j.end() || !score->is_number_integer()) throw ValidationError("rating field 'score' must be an integer");
    r.score = score->get<int>();
    if (const auto ts = j.find("timestamp"); ts != j.end() && !ts->is_null()) {
        if (!ts->is_number_integer()) throw ValidationError("rating field 'timestamp' must be an integer");
        r.timestamp = ts->get<std::int64_t>();
    }
    return r;
}

CoverageInfeasible::CoverageInfeasible(std::string message, std::vector<std::string> uncovered, std::size_t minimum_k)
    : ValidationError(std::move(message)), uncovered_(std::move(uncovered)), minimum_k_(minimum_k) {}

std::set<std::string> character_vocabulary(const EvalCorpus& corpus) {
    std::set<std::string> vocab;
    for (const auto& seg : corpus.segments()) {
        for (const auto& ref : seg.reference_texts) {
            for (char32_t cp : utf8::decode(ref)) {
                if (!utf8::is_space(cp)) vocab.insert(utf8::encode(cp));
            }
        }
    }
    return vocab;
}

std::vector<std::string> select_mos_samples(const EvalCorpus& corpus, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ValidationError("k must be at least 1");
    const auto vocab = character_vocabulary(corpus);
    if (vocab.empty()) {
        throw CoverageInfeasible("corpus reference texts contain no characters to cover", {}, 0);
    }

    std::map<std::string, int> char_ids;
    for (const auto& ch : vocab) char_ids.emplace(ch, static_cast<int>(char_ids.size()));
    CoverProblem problem;
    problem.vocab_size = vocab.size();
    problem.segments_with.resize(vocab.size());
    for (std::size_t s = 0; s < corpus.size(); ++s) {
        std::set<int> chars;
        for (const auto& ref : corpus[s].reference_texts) {
            for (char32_t cp : utf8::decode(ref)) {
                if (!utf8::is_space(cp)) chars.insert(char_ids.at(utf8::encode(cp)));
            }
        }
        problem.segment_chars.emplace_back(chars.begin(), chars.end());
        for (int c : chars) problem.segments_with[static_cast<std::size_t>(c)].push_back(s);
    }

    std::vector<std::size_t> best;
    for (std::size_t attempt = 0; attempt < kGreedyAttempts; ++attempt) {
        auto gen = rng::stream(seed, attempt);
        auto cover = greedy_cover(problem, gen);
        if (best.empty() || cover.size() < best.size()) best = std::move(cover);
    }
    std::size_t minimum = best.size();
    if (best.size() > k) {
        ExactSearch search{problem, kExactSearchBudget, {}, {}, {}};
        for (std::size_t limit = 1; limit < best.size(); ++limit) {
            if (!search.run(limit)) break;
            if (search.found) {
                best = *search.found;
                minimum = best.size();
                break;
            }
        }
    }
    if (best.size() > k || k > corpus.size()) {
        std::vector<bool> covered(vocab.size(), false);
        for (std::size_t i = 0; i < std::min(k, best.size()); ++i) {
            for (int c : problem.segment_chars[best[i]]) covered[static_cast<std::size_t>(c)] = true;
        }
        std::vector<std::string> uncovered;
        for (const auto& [ch, id] : char_ids) {
            if (!covered[static_cast<std::size_t>(id)]) uncovered.push_back(ch);
        }
        const std::string why = k > corpus.size()
                                    ? fmt::format("k={} exceeds the corpus size {}", k, corpus.size())
                                    : fmt::format("no {} segments cover the character vocabulary; smallest cover "
                                                  "found has {} segments; uncovered with {}: \"{}\"",
                                                  k, minimum, k, fmt::join(uncovered, "\", \""));
        throw CoverageInfeasible(why, std::move(uncovered), minimum);
    }

    std::vector<bool> picked(corpus.size(), false);
    for (std::size_t s : best) picked[s] = true;
    std::vector<std::size_t> rest;
    for (std::size_t s = 0; s < corpus.size(); ++s) {
        if (!picked[s]) rest.push_back(s);
    }
    auto gen = rng::stream(seed, kGreedyAttempts);
    rng::shuffle(rest, gen);
    for (std::size_t i = 0; best.size() < k; ++i) {
        picked[rest[i]] = true;
        best.push_back(rest[i]);
    }

    std::vector<std::string> ids;
    for (std::size_t s = 0; s < corpus.size(); ++s) {
        if (picked[s]) ids.push_back(corpus[s].id);
    }
    return ids;
}

const StudySample* Study::find(std::string_view id) const {
    for (const auto& s : samples) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

bool Study::has_rater(std::string_view id) const {
    return std::find(raters.begin(), raters.end(), id) != raters.end();
}

std::string Study::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["raters"] = raters;
    auto& arr = j["samples"] = nlohmann::ordered_json::array();
    for (const auto& s : samples) arr.push_back({{"id", s.id}, {"audio", s.audio.string()}});
    return j.dump(2) + "\n";
}

Study Study::from_json(std::string_view json, const std::filesystem::path& base_dir) {
    try {
        const auto j = nlohmann::json::parse(json);
        Study study;
        study.seed = j.value("seed", std::uint64_t{0});
        study.raters = j.value("raters", std::vector<std::string>{});
        for (const auto& s : j.at("samples")) {
            StudySample sample{s.at("id").get<std::string>(), s.value("audio", std::string{})};
            if (sample.id.empty()) throw ValidationError("study sample id must not be empty");
            if (!sample.audio.empty() && sample.audio.is_relative() && !base_dir.empty()) {
                sample.audio = base_dir / sample.audio;
            }
            if (study.find(sample.id)) throw ValidationError(fmt::format("duplicate study sample '{}'", sample.id));
            study.samples.push_back(std::move(sample));
        }
        if (study.samples.empty()) throw ValidationError("study has no samples");
        return study;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("malformed study: {}", e.what()));
    }
}

Study Study::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open study '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str(), path.parent_path());
}

RatingStore::RatingStore(Study study, std::filesystem::path log_path)
    : study_(std::move(study)), log_path_(std::move(log_path)) {
    if (log_path_.empty() || !std::filesystem::exists(log_path_)) return;
    std::ifstream in(log_path_, std::ios::binary);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            log_.push_back(rating_from_json(line));
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("{}:{}: {}", log_path_.string(), line_no, e.what()));
        }
        last_assigned_ = std::max(last_assigned_, log_.back().timestamp);
    }
}

Acknowledgment RatingStore::record(RatingRecord record) {
    validate_record(study_, record);
    std::lock_guard lock(mutex_);
    if (record.timestamp == 0) {
        // Strictly increasing, so two submissions within one millisecond
        // still resolve to the later one.
        record.timestamp = std::max(now_ms(), last_assigned_ + 1);
        last_assigned_ = record.timestamp;
    }
    if (!log_path_.empty()) {
        std::ofstream out(log_path_, std::ios::binary | std::ios::app);
        out << to_json_line(record) << '\n';
        out.flush();
        if (!out) throw ComputationError(fmt::format("cannot append to rating log '{}'", log_path_.string()));
    }
    log_.push_back(std::move(record));
    return {log_.size()};
}

std::vector<RatingRecord> RatingStore::snapshot() const {
    std::lock_guard lock(mutex_);
    return log_;
}

Acknowledgment record_rating(RatingStore& store, const RatingRecord& record) { return store.record(record); }

std::vector<RatingRecord> latest_ratings(const std::vector<RatingRecord>& log) {
    std::map<std::tuple<std::string, std::string, Category>, RatingRecord> view;
    for (const auto& r : log) {
        auto [it, inserted] = view.try_emplace({r.sample_id, r.rater_id, r.category}, r);
        if (inserted) continue;
        const auto& cur = it->second;
        if (r.timestamp > cur.timestamp || (r.timestamp == cur.timestamp && r.score > cur.score)) it->second = r;
    }
    std::vector<RatingRecord> out;
    out.reserve(view.size());
    for (auto& [key, r] : view) out.push_back(std::move(r));
    return out;
}

MosSummary aggregate_mos(const std::vector<RatingRecord>& ratings, const stats::BootstrapConfig& bootstrap) {
    if (ratings.empty()) throw ValidationError("no ratings to aggregate");
    const auto view = latest_ratings(ratings);

    MosSummary summary;
    std::set<std::string> all_samples;
    for (Category category : kAllCategories) {
        std::map<std::string, std::vector<int>> by_sample;
        std::set<std::string> raters;
        for (const auto& r : view) {
            if (r.category != category) continue;
            by_sample[r.sample_id].push_back(r.score);
            raters.insert(r.rater_id);
            all_samples.insert(r.sample_id);
        }
        if (by_sample.empty()) continue;
        std::vector<double> means;
        means.reserve(by_sample.size());
        for (const auto& [id, scores] : by_sample) {
            std::vector<double> values(scores.begin(), scores.end());
            means.push_back(stats::mean(values));
        }
        summary.categories[category] = {stats::bootstrap_ci(means, bootstrap), raters.size(), by_sample.size()};
    }
    summary.sample_count = all_samples.size();
    return summary;
}

std::string MosSummary::to_json() const {
    nlohmann::ordered_json j;
    j["samples"] = sample_count;
    auto& cats = j["categories"] = nlohmann::ordered_json::object();
    for (const auto& [category, s] : categories) {
        cats[std::string(to_string(category))] = {
            {"mean", s.estimate.point}, {"lo", s.estimate.lo},         {"hi", s.estimate.hi},
            {"half_width", s.estimate.half_width()}, {"display", stats::format_pm(s.estimate)},
            {"raters", s.rater_count},  {"samples", s.sample_count}};
    }
    return j.dump(2) + "\n";
}

std::string MosSummary::to_tsv() const {
    std::string out = "category\tmean\tlo\thi\thalf_width\traters\tsamples\tdisplay\n";
    for (const auto& [category, s] : categories) {
        out += fmt::format("{}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\t{}\t{}\t{}\n", to_string(category), s.estimate.point,
                           s.estimate.lo, s.estimate.hi, s.estimate.half_width(), s.rater_count, s.sample_count,
                           stats::format_pm(s.estimate));
    }
    return out;
}

std::vector<Assignment> assignment_view(const RatingStore& store, std::string_view rater_id) {
    const Study& study = store.study();
    if (rater_id.empty() || (!study.raters.empty() && !study.has_rater(rater_id))) {
        throw ValidationError(fmt::format("unknown rater '{}'", rater_id));
    }
    std::set<std::pair<std::string, Category>> done;
    for (const auto& r : latest_ratings(store.snapshot())) {
        if (r.rater_id == rater_id) done.emplace(r.sample_id, r.category);
    }

    std::vector<std::size_t> order(study.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto gen = rng::stream(study.seed, rng::fnv1a(rater_id));
    rng::shuffle(order, gen);

    std::vector<Assignment> out;
    for (std::size_t i : order) {
        const auto& sample = study.samples[i];
        Assignment a{sample.id, "/api/audio/" + sample.id, {}};
        for (Category c : kAllCategories) {
            if (!done.contains({sample.id, c})) a.pending.push_back(c);
        }
        if (!a.pending.empty()) out.push_back(std::move(a));
    }
    return out;
}

std::string assignments_to_json(const std::vector<Assignment>& assignments) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& a : assignments) {
        auto pending = nlohmann::ordered_json::array();
        for (Category c : a.pending) pending.push_back(to_string(c));
        arr.push_back({{"sample_id", a.sample_id}, {"audio_url", a.audio_url}, {"pending", pending}});
    }
    return arr.dump();
}

} // namespace s2seval::mos
