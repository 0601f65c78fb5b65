#include "s2seval/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <tuple>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "s2seval/utf8.hpp"

namespace s2seval::g2p {

namespace {

constexpr std::string_view kModelFormat = "s2seval-pair-ngram";
constexpr int kModelVersion = 1;

std::vector<std::string> split_ws(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

std::string concat(const Graphemes& g) {
    std::string out;
    for (const auto& s : g) out += s;
    return out;
}

std::string chunk_string(const std::vector<std::string>& chunk) {
    if (chunk.empty()) return "_";
    std::string out;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
        if (i) out += '|';
        out += chunk[i];
    }
    return out;
}

bool is_punctuation(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
               (cp >= 0x7B && cp <= 0x7E);
    }
    switch (cp) {
    case 0xA1: case 0xAB: case 0xBB: case 0xBF: case 0xB7:
    case 0x2013: case 0x2014: case 0x2018: case 0x2019: case 0x201A:
    case 0x201C: case 0x201D: case 0x201E: case 0x2026: case 0x2039: case 0x203A:
        return true;
    default:
        return false;
    }
}

// An arc of the alignment lattice: consume `a` graphemes and `b` phonemes.
struct Arc {
    std::size_t i, j, a, b;
    int link;
};

struct Item {
    Graphemes word;
    Phonemes pron;
    std::vector<Arc> arcs;  // ordered by source (i, j), then preference
};

// Step shapes in preference order: 1:1 first, then shorter links, then links
// that consume more graphemes.
std::vector<std::pair<std::size_t, std::size_t>> step_shapes(std::size_t max_chunk) {
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    for (std::size_t a = 0; a <= max_chunk; ++a) {
        for (std::size_t b = 0; b <= max_chunk; ++b) {
            if (a + b == 0 || (a > 1 && b > 1)) continue;
            shapes.emplace_back(a, b);
        }
    }
    std::stable_sort(shapes.begin(), shapes.end(), [](const auto& x, const auto& y) {
        const bool xu = x.first == 1 && x.second == 1;
        const bool yu = y.first == 1 && y.second == 1;
        if (xu != yu) return xu;
        if (x.first + x.second != y.first + y.second) return x.first + x.second < y.first + y.second;
        return x.first > y.first;
    });
    return shapes;
}

} // namespace

Graphemes graphemes_of(std::string_view word) { return utf8::split_scalars(word); }

std::string join(const Phonemes& phonemes, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < phonemes.size(); ++i) {
        if (i) out += sep;
        out += phonemes[i];
    }
    return out;
}

void Lexicon::add(const std::string& word, Phonemes pron) {
    if (word.empty()) throw ValidationError("lexicon word must not be empty");
    if (pron.empty()) throw ValidationError(fmt::format("lexicon entry '{}' has no phonemes", word));
    for (const auto& p : pron) inventory_.insert(p);
    auto& prons = entries_[utf8::to_lower(word)];
    if (std::find(prons.begin(), prons.end(), pron) == prons.end()) prons.push_back(std::move(pron));
}

const std::vector<Phonemes>* Lexicon::find(std::string_view word) const {
    const auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
}

Lexicon parse_lexicon(std::string_view content) {
    Lexicon lex;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos || line.starts_with(";;")) continue;

        std::string word;
        std::string_view rest;
        if (const auto tab = line.find('\t'); tab != std::string_view::npos) {
            const auto w = split_ws(line.substr(0, tab));
            if (w.size() != 1) throw ValidationError(fmt::format("lexicon line {}: expected one word before TAB", line_no));
            word = w.front();
            rest = line.substr(tab + 1);
        } else {
            const auto first = line.find_first_not_of(' ');
            const auto space = line.find(' ', first);
            if (space == std::string_view::npos) {
                throw ValidationError(fmt::format("lexicon line {}: missing pronunciation", line_no));
            }
            word = std::string(line.substr(first, space - first));
            rest = line.substr(space + 1);
        }
        auto pron = split_ws(rest);
        if (pron.empty()) throw ValidationError(fmt::format("lexicon line {}: missing pronunciation", line_no));
        lex.add(word, std::move(pron));
    }
    return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open lexicon '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_lexicon(buf.str());
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string to_string(const Link& link) {
    return chunk_string(link.graphemes) + ":" + chunk_string(link.phonemes);
}

AlignmentResult train_alignment(const Lexicon& lexicon, const AlignmentConfig& config) {
    if (lexicon.empty()) throw ValidationError("cannot align an empty lexicon");
    if (config.max_chunk == 0) throw ValidationError("max_chunk must be at least 1");
    if (!(config.non_unit_penalty > 0.0 && config.non_unit_penalty <= 1.0)) {
        throw ValidationError("non_unit_penalty must lie in (0, 1]");
    }

    AlignmentResult result;
    std::map<Link, int> link_ids;
    std::vector<Link> links;
    std::vector<Item> items;
    const auto shapes = step_shapes(config.max_chunk);

    for (const auto& [word, prons] : lexicon.entries()) {
        for (const auto& pron : prons) {
            Item item{graphemes_of(word), pron, {}};
            const std::size_t g = item.word.size();
            const std::size_t p = item.pron.size();
            if (p > config.max_chunk * g || g > config.max_chunk * p) {
                result.skipped.push_back(
                    {word, pron, fmt::format("{} graphemes vs {} phonemes exceeds the {}:1 chunk limit", g, p,
                                             config.max_chunk)});
                continue;
            }
            for (std::size_t i = 0; i <= g; ++i) {
                for (std::size_t j = 0; j <= p; ++j) {
                    for (const auto& [a, b] : shapes) {
                        if (i + a > g || j + b > p) continue;
                        Link link{Graphemes(item.word.begin() + static_cast<std::ptrdiff_t>(i),
                                            item.word.begin() + static_cast<std::ptrdiff_t>(i + a)),
                                  Phonemes(item.pron.begin() + static_cast<std::ptrdiff_t>(j),
                                           item.pron.begin() + static_cast<std::ptrdiff_t>(j + b))};
                        auto [it, inserted] = link_ids.emplace(std::move(link), static_cast<int>(links.size()));
                        if (inserted) links.push_back(it->first);
                        item.arcs.push_back({i, j, a, b, it->second});
                    }
                }
            }
            items.push_back(std::move(item));
        }
    }

    std::vector<double> penalty(links.size());
    for (std::size_t l = 0; l < links.size(); ++l) {
        const bool unit = links[l].graphemes.size() == 1 && links[l].phonemes.size() == 1;
        const bool one_sided = links[l].graphemes.empty() || links[l].phonemes.empty();
        penalty[l] = unit ? 1.0 : one_sided ? config.non_unit_penalty * config.non_unit_penalty : config.non_unit_penalty;
    }
    std::vector<double> prob(links.size(), links.empty() ? 0.0 : 1.0 / static_cast<double>(links.size()));

    // Arc weight p^max(a,b) times the penalty: an a:b link is charged like
    // the max(a,b) unit links it replaces, so a path cannot win merely by
    // using fewer, longer links.
    std::vector<double> weight(links.size());
    auto reweight = [&] {
        for (std::size_t l = 0; l < links.size(); ++l) {
            const auto span = std::max(links[l].graphemes.size(), links[l].phonemes.size());
            weight[l] = prob[l] > 0.0 ? penalty[l] * std::pow(prob[l], static_cast<double>(span)) : 0.0;
        }
    };
    reweight();

    for (std::size_t iter = 0; iter < config.em_iterations; ++iter) {
        std::vector<double> counts(links.size(), 0.0);
        for (const auto& item : items) {
            const std::size_t rows = item.word.size() + 1;
            const std::size_t cols = item.pron.size() + 1;
            std::vector<double> alpha(rows * cols, 0.0);
            std::vector<double> beta(rows * cols, 0.0);
            alpha[0] = 1.0;
            for (const auto& arc : item.arcs) {
                alpha[(arc.i + arc.a) * cols + arc.j + arc.b] +=
                    alpha[arc.i * cols + arc.j] * weight[static_cast<std::size_t>(arc.link)];
            }
            beta[rows * cols - 1] = 1.0;
            for (auto it = item.arcs.rbegin(); it != item.arcs.rend(); ++it) {
                beta[it->i * cols + it->j] +=
                    weight[static_cast<std::size_t>(it->link)] * beta[(it->i + it->a) * cols + it->j + it->b];
            }
            const double total = alpha[rows * cols - 1];
            if (!(total > 0.0)) continue;
            for (const auto& arc : item.arcs) {
                const auto l = static_cast<std::size_t>(arc.link);
                counts[l] += alpha[arc.i * cols + arc.j] * weight[l] * beta[(arc.i + arc.a) * cols + arc.j + arc.b] / total;
            }
        }
        double sum = 0.0;
        for (double c : counts) sum += c;
        if (!(sum > 0.0)) break;
        for (std::size_t l = 0; l < links.size(); ++l) prob[l] = counts[l] / sum;
        reweight();
    }

    for (const auto& item : items) {
        const std::size_t rows = item.word.size() + 1;
        const std::size_t cols = item.pron.size() + 1;
        const double neg_inf = -std::numeric_limits<double>::infinity();
        std::vector<double> best(rows * cols, neg_inf);
        std::vector<const Arc*> back(rows * cols, nullptr);
        best[0] = 0.0;
        for (const auto& arc : item.arcs) {
            const double from = best[arc.i * cols + arc.j];
            const auto l = static_cast<std::size_t>(arc.link);
            if (from == neg_inf || weight[l] <= 0.0) continue;
            const double score = from + std::log(weight[l]);
            const std::size_t to = (arc.i + arc.a) * cols + arc.j + arc.b;
            if (score > best[to]) {
                best[to] = score;
                back[to] = &arc;
            }
        }
        if (!back[rows * cols - 1]) {
            result.skipped.push_back({concat(item.word), item.pron, "no alignment with nonzero probability"});
            continue;
        }
        AlignedPair pair{item.word, item.pron, {}};
        std::size_t at = rows * cols - 1;
        while (at != 0) {
            const Arc* arc = back[at];
            pair.links.push_back(links[static_cast<std::size_t>(arc->link)]);
            at = arc->i * cols + arc->j;
        }
        std::reverse(pair.links.begin(), pair.links.end());
        result.alignments.push_back(std::move(pair));
    }
    return result;
}

int PairNgramModel::token_of(const Link& link) const {
    const auto it = token_ids_.find(link);
    return it == token_ids_.end() ? -1 : it->second;
}

void PairNgramModel::index() {
    token_ids_.clear();
    by_graphemes_.clear();
    histories_.clear();
    max_grapheme_chunk_ = 0;
    for (std::size_t t = 2; t < links_.size(); ++t) {
        token_ids_.emplace(links_[t], static_cast<int>(t));
        by_graphemes_[links_[t].graphemes].push_back(static_cast<int>(t));
        max_grapheme_chunk_ = std::max(max_grapheme_chunk_, links_[t].graphemes.size());
    }
    for (const auto& [gram, count] : counts_) {
        auto& stats = histories_[std::vector<int>(gram.begin(), gram.end() - 1)];
        stats.count += count;
        stats.types += 1;
    }
}

double PairNgramModel::prob(int token, std::span<const int> history) const {
    if (token == kBegin) return 0.0;
    const std::size_t keep = std::min(history.size(), order_ > 0 ? order_ - 1 : 0);
    history = history.subspan(history.size() - keep);

    // Base case: unigram interpolated with a uniform distribution over every
    // predictable token plus one out-of-vocabulary slot.
    const double uniform = 1.0 / static_cast<double>(links_.size());
    double p = uniform;
    if (const auto it = histories_.find(std::vector<int>{}); it != histories_.end() && it->second.count > 0) {
        std::size_t c = 0;
        if (token >= 0) {
            if (const auto ct = counts_.find(std::vector<int>{token}); ct != counts_.end()) c = ct->second;
        }
        p = (static_cast<double>(c) + static_cast<double>(it->second.types) * uniform) /
            static_cast<double>(it->second.count + it->second.types);
    }
    // Extend the history one token at a time, shortest first.
    for (std::size_t len = 1; len <= history.size(); ++len) {
        std::vector<int> h(history.end() - static_cast<std::ptrdiff_t>(len), history.end());
        const auto it = histories_.find(h);
        if (it == histories_.end() || it->second.count == 0) continue;
        std::size_t c = 0;
        if (token >= 0) {
            h.push_back(token);
            if (const auto ct = counts_.find(h); ct != counts_.end()) c = ct->second;
        }
        p = (static_cast<double>(c) + static_cast<double>(it->second.types) * p) /
            static_cast<double>(it->second.count + it->second.types);
    }
    return p;
}

double PairNgramModel::logprob(int token, std::span<const int> history) const {
    return std::log(prob(token, history));
}

std::vector<int> PairNgramModel::candidates(const Graphemes& word, std::size_t pos) const {
    std::vector<int> out;
    for (std::size_t len = 0; len <= max_grapheme_chunk_ && pos + len <= word.size(); ++len) {
        const Graphemes key(word.begin() + static_cast<std::ptrdiff_t>(pos),
                            word.begin() + static_cast<std::ptrdiff_t>(pos + len));
        if (const auto it = by_graphemes_.find(key); it != by_graphemes_.end()) {
            out.insert(out.end(), it->second.begin(), it->second.end());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string PairNgramModel::to_json() const {
    nlohmann::ordered_json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["order"] = order_;
    auto& tokens = j["tokens"] = nlohmann::ordered_json::array();
    for (std::size_t t = 2; t < links_.size(); ++t) {
        tokens.push_back({{"g", links_[t].graphemes}, {"p", links_[t].phonemes}});
    }
    auto& ngrams = j["ngrams"] = nlohmann::ordered_json::array();
    for (const auto& [gram, count] : counts_) ngrams.push_back({gram, count});
    return j.dump() + "\n";
}

PairNgramModel PairNgramModel::from_json(std::string_view json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(fmt::format("model is not valid JSON: {}", e.what()));
    }
    try {
        if (j.at("format").get<std::string>() != kModelFormat) throw ValidationError("not a pair n-gram model");
        if (j.at("version").get<int>() != kModelVersion) {
            throw ValidationError(fmt::format("unsupported model version {}", j.at("version").get<int>()));
        }
        PairNgramModel model;
        model.order_ = j.at("order").get<std::size_t>();
        if (model.order_ == 0) throw ValidationError("model order must be at least 1");
        model.links_.assign(2, Link{});
        for (const auto& t : j.at("tokens")) {
            Link link{t.at("g").get<Graphemes>(), t.at("p").get<Phonemes>()};
            if (link.graphemes.empty() && link.phonemes.empty()) throw ValidationError("model contains an empty link");
            model.links_.push_back(std::move(link));
        }
        const auto vocab = static_cast<int>(model.links_.size());
        for (const auto& entry : j.at("ngrams")) {
            auto gram = entry.at(0).get<std::vector<int>>();
            const auto count = entry.at(1).get<std::size_t>();
            if (gram.empty() || gram.size() > model.order_) throw ValidationError("model n-gram has a bad length");
            for (int t : gram) {
                if (t < 0 || t >= vocab) throw ValidationError("model n-gram references an unknown token");
            }
            model.counts_[std::move(gram)] = count;
        }
        model.index();
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("malformed model: {}", e.what()));
    }
}

void PairNgramModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ComputationError(fmt::format("cannot write model '{}'", path.string()));
    out << to_json();
}

PairNgramModel PairNgramModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open model '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

PairNgramModel train_pair_ngram(std::span<const AlignedPair> alignments, std::size_t order) {
    if (alignments.empty()) throw ValidationError("cannot train a pair n-gram model without alignments");
    if (order == 0) throw ValidationError("n-gram order must be at least 1");
    PairNgramModel model;
    model.order_ = order;
    model.links_.assign(2, Link{});

    std::map<Link, int> ids;
    for (const auto& pair : alignments) {
        for (const auto& link : pair.links) {
            ids.emplace(link, 0);
        }
    }
    // Token ids follow the sorted link order so training is independent of
    // the input order of the alignments.
    for (auto& [link, id] : ids) {
        id = static_cast<int>(model.links_.size());
        model.links_.push_back(link);
    }

    for (const auto& pair : alignments) {
        std::vector<int> sentence{PairNgramModel::kBegin};
        for (const auto& link : pair.links) sentence.push_back(ids.at(link));
        sentence.push_back(PairNgramModel::kEnd);
        for (std::size_t p = 1; p < sentence.size(); ++p) {
            for (std::size_t k = 1; k <= order && k <= p + 1; ++k) {
                std::vector<int> gram(sentence.begin() + static_cast<std::ptrdiff_t>(p + 1 - k),
                                      sentence.begin() + static_cast<std::ptrdiff_t>(p + 1));
                ++model.counts_[std::move(gram)];
            }
        }
    }
    model.index();
    return model;
}

NoPronunciationError::NoPronunciationError(std::string word, std::vector<std::string> graphemes)
    : ValidationError(graphemes.empty()
                          ? fmt::format("no pronunciation path for '{}'", word)
                          : fmt::format("no pronunciation for '{}': unseen graphemes {}", word,
                                        fmt::format("\"{}\"", fmt::join(graphemes, "\", \"")))),
      word_(std::move(word)),
      graphemes_(std::move(graphemes)) {}

namespace {

struct Hypothesis {
    double score = 0.0;
    std::vector<int> tokens;
    std::size_t pos = 0;
    bool last_insertion = false;
};

using StateKey = std::tuple<std::size_t, std::vector<int>, bool>;

// Deterministic ranking: higher score first, then lexicographically smaller
// token sequence.
bool better(const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
}

std::vector<int> history_of(const Hypothesis& h, std::size_t order) {
    std::vector<int> hist{PairNgramModel::kBegin};
    hist.insert(hist.end(), h.tokens.begin(), h.tokens.end());
    const std::size_t keep = std::min(hist.size(), order > 0 ? order - 1 : 0);
    return {hist.end() - static_cast<std::ptrdiff_t>(keep), hist.end()};
}

Phonemes phonemes_of(const std::vector<int>& tokens, const PairNgramModel& model) {
    Phonemes out;
    for (int t : tokens) {
        const auto& p = model.link(t).phonemes;
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

} // namespace

Pronunciation decode(const Graphemes& word, const PairNgramModel& model, std::size_t beam, const Lexicon* lexicon) {
    if (beam == 0) throw ValidationError("beam must be at least 1");
    const std::string spelled = concat(word);
    if (lexicon) {
        if (const auto* prons = lexicon->find(utf8::to_lower(spelled))) return {prons->front(), {}, 0.0};
    }
    if (word.empty()) return {};

    std::vector<Hypothesis> active{Hypothesis{}};
    std::optional<Hypothesis> best_final;
    while (!active.empty()) {
        std::map<StateKey, Hypothesis> next;
        for (const auto& hyp : active) {
            const auto hist = history_of(hyp, model.order());
            if (hyp.pos == word.size()) {
                Hypothesis done = hyp;
                done.score += model.logprob(PairNgramModel::kEnd, hist);
                if (!best_final || better(done, *best_final)) best_final = std::move(done);
            }
            for (int tok : model.candidates(word, hyp.pos)) {
                const Link& link = model.link(tok);
                const bool insertion = link.graphemes.empty();
                if (insertion && hyp.last_insertion) continue;
                Hypothesis ext = hyp;
                ext.score += model.logprob(tok, hist);
                ext.tokens.push_back(tok);
                ext.pos += link.graphemes.size();
                ext.last_insertion = insertion;
                StateKey key{ext.pos, history_of(ext, model.order()), insertion};
                auto [it, inserted] = next.try_emplace(std::move(key), ext);
                if (!inserted && better(ext, it->second)) it->second = std::move(ext);
            }
        }
        active.clear();
        active.reserve(next.size());
        for (auto& [key, hyp] : next) active.push_back(std::move(hyp));
        std::sort(active.begin(), active.end(), better);
        if (active.size() > beam) active.resize(beam);
    }

    if (!best_final) {
        std::set<std::string> known;
        for (std::size_t t = 2; t < model.vocabulary_size(); ++t) {
            for (const auto& g : model.link(static_cast<int>(t)).graphemes) known.insert(g);
        }
        std::vector<std::string> unseen;
        for (const auto& g : word) {
            if (!known.contains(g) && std::find(unseen.begin(), unseen.end(), g) == unseen.end()) unseen.push_back(g);
        }
        throw NoPronunciationError(spelled, std::move(unseen));
    }
    return {phonemes_of(best_final->tokens, model), best_final->tokens, best_final->score};
}

Phonemes g2p(const Graphemes& word, const PairNgramModel& model, std::size_t beam, const Lexicon* lexicon) {
    return decode(word, model, beam, lexicon).phonemes;
}

std::string normalize_text(std::string_view text, const PairNgramModel& model, const Lexicon* lexicon,
                           std::size_t beam) {
    std::vector<std::string> words;
    for (const auto& raw : split_ws(text)) {
        std::string cleaned;
        for (char32_t cp : utf8::decode(utf8::to_lower(raw))) {
            if (!is_punctuation(cp)) cleaned += utf8::encode(cp);
        }
        if (!cleaned.empty()) words.push_back(std::move(cleaned));
    }
    std::string out;
    for (std::size_t w = 0; w < words.size(); ++w) {
        Phonemes pron;
        try {
            pron = g2p(graphemes_of(words[w]), model, beam, lexicon);
        } catch (const NoPronunciationError& e) {
            throw ValidationError(fmt::format("word {} ('{}'): {}", w + 1, words[w], e.what()));
        }
        if (w) out += fmt::format(" {} ", kWordBoundary);
        out += join(pron);
    }
    return out;
}

} // namespace s2seval::g2p
