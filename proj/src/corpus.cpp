#include "s2seval/corpus.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include <fmt/format.h>
#include <json.hpp>

#include "s2seval/parallel.hpp"

namespace s2seval {

namespace {

constexpr std::array<std::string_view, 8> kColumns = {
    "id", "language", "condition", "source_text", "reference_text", "hypothesis_text", "reference_audio",
    "hypothesis_audio"};

constexpr std::string_view kReferenceSeparator = "||";
// A TSV cell holding exactly this token is a present-but-empty string; a
// truly empty cell means the field is absent.
constexpr std::string_view kEmptyStringCell = "\"\"";

std::vector<std::string> split(std::string_view text, std::string_view sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(text.substr(start));
            return out;
        }
        out.emplace_back(text.substr(start, pos - start));
        start = pos + sep.size();
    }
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string unescape_cell(std::string_view cell, std::size_t line_no) {
    std::string out;
    out.reserve(cell.size());
    for (std::size_t i = 0; i < cell.size(); ++i) {
        if (cell[i] != '\\') {
            out += cell[i];
            continue;
        }
        if (i + 1 == cell.size()) throw ValidationError(fmt::format("line {}: dangling escape", line_no));
        switch (cell[++i]) {
        case 't': out += '\t'; break;
        case 'n': out += '\n'; break;
        case 'r': out += '\r'; break;
        case '\\': out += '\\'; break;
        default: throw ValidationError(fmt::format("line {}: unknown escape '\\{}'", line_no, cell[i]));
        }
    }
    return out;
}

std::string escape_cell(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
        case '\t': out += "\\t"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\\': out += "\\\\"; break;
        default: out += c;
        }
    }
    return out;
}

std::optional<std::string> optional_cell(std::string_view cell, std::size_t line_no) {
    if (cell.empty()) return std::nullopt;
    if (cell == kEmptyStringCell) return std::string{};
    return unescape_cell(cell, line_no);
}

std::string optional_to_cell(const std::optional<std::string>& value) {
    if (!value) return {};
    if (value->empty()) return std::string(kEmptyStringCell);
    return escape_cell(*value);
}

std::filesystem::path resolve(const std::filesystem::path& base_dir, std::string_view raw) {
    std::filesystem::path p{std::string(raw)};
    if (base_dir.empty() || p.is_absolute()) return p;
    return (std::filesystem::absolute(base_dir) / p).lexically_normal();
}

void validate_segment(const EvalSegment& seg, std::string_view where) {
    if (seg.id.empty()) throw ValidationError(fmt::format("{}: missing required field 'id'", where));
    if (seg.reference_texts.empty() && !seg.reference_audio) {
        throw ValidationError(fmt::format("{}: segment '{}' has neither reference_text nor reference_audio",
                                          where, seg.id));
    }
}

struct Header {
    std::string system_name;
    std::map<std::string, std::string> metadata;
};

std::set<std::string> declared_languages(const std::map<std::string, std::string>& metadata) {
    std::set<std::string> out;
    const auto it = metadata.find("languages");
    if (it == metadata.end()) return out;
    for (const auto& part : split(it->second, ",")) {
        const auto code = trim(part);
        if (!code.empty()) out.emplace(code);
    }
    return out;
}

EvalCorpus finish(std::vector<EvalSegment> segments, const std::vector<std::size_t>& line_numbers, Header header,
                  const MetricRequirements& requirements) {
    std::set<std::string> seen;
    const auto languages = declared_languages(header.metadata);
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& seg = segments[i];
        const auto where = fmt::format("line {}", line_numbers[i]);
        validate_segment(seg, where);
        if (!seen.insert(seg.id).second) {
            throw ValidationError(fmt::format("{}: duplicate id '{}'", where, seg.id));
        }
        if (!languages.empty() && !languages.contains(seg.language.code())) {
            throw ValidationError(fmt::format("{}: language '{}' is not in the declared set", where,
                                              seg.language.code()));
        }
    }
    EvalCorpus corpus(std::move(segments), std::move(header.system_name), std::move(header.metadata));
    corpus.require(requirements);
    return corpus;
}

EvalCorpus parse_tsv(std::string_view content, const std::filesystem::path& base_dir,
                     const MetricRequirements& requirements) {
    Header header;
    std::vector<EvalSegment> segments;
    std::vector<std::size_t> line_numbers;
    std::vector<int> column_index(kColumns.size(), -1);
    bool have_header = false;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        if (line.front() == '#') {
            // "# key: value" metadata, only before the header row.
            if (have_header) continue;
            const auto body = trim(line.substr(1));
            const auto colon = body.find(':');
            if (colon == std::string_view::npos) continue;
            const std::string key(trim(body.substr(0, colon)));
            std::string value(trim(body.substr(colon + 1)));
            if (key == "system") {
                header.system_name = std::move(value);
            } else {
                header.metadata[key] = std::move(value);
            }
            continue;
        }

        const auto cells = split(line, "\t");
        if (!have_header) {
            for (std::size_t c = 0; c < cells.size(); ++c) {
                const auto name = trim(cells[c]);
                bool known = false;
                for (std::size_t k = 0; k < kColumns.size(); ++k) {
                    if (name == kColumns[k]) {
                        if (column_index[k] >= 0) {
                            throw ValidationError(fmt::format("line {}: duplicate column '{}'", line_no, name));
                        }
                        column_index[k] = static_cast<int>(c);
                        known = true;
                    }
                }
                if (!known) throw ValidationError(fmt::format("line {}: unknown column '{}'", line_no, name));
            }
            for (std::size_t k = 0; k < 3; ++k) {
                if (column_index[k] < 0) {
                    throw ValidationError(
                        fmt::format("line {}: header lacks required column '{}'", line_no, kColumns[k]));
                }
            }
            have_header = true;
            continue;
        }

        auto cell = [&](std::size_t k) -> std::string_view {
            const int c = column_index[k];
            if (c < 0 || static_cast<std::size_t>(c) >= cells.size()) return {};
            return cells[static_cast<std::size_t>(c)];
        };
        std::size_t width = 0;
        for (int c : column_index) width = std::max<std::size_t>(width, static_cast<std::size_t>(c + 1));
        if (cells.size() > width) {
            throw ValidationError(fmt::format("line {}: {} cells, header has {}", line_no, cells.size(), width));
        }

        EvalSegment seg;
        seg.id = unescape_cell(cell(0), line_no);
        try {
            seg.language = LanguageTag(std::string(cell(1)));
            seg.condition = parse_condition(cell(2));
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("line {}: {}", line_no, e.what()));
        }
        seg.source_text = optional_cell(cell(3), line_no);
        if (!cell(4).empty()) {
            for (const auto& ref : split(cell(4), kReferenceSeparator)) {
                seg.reference_texts.push_back(ref == kEmptyStringCell ? std::string{} : unescape_cell(ref, line_no));
            }
        }
        seg.hypothesis_text = optional_cell(cell(5), line_no);
        if (!cell(6).empty()) seg.reference_audio = resolve(base_dir, unescape_cell(cell(6), line_no));
        if (!cell(7).empty()) seg.hypothesis_audio = resolve(base_dir, unescape_cell(cell(7), line_no));
        segments.push_back(std::move(seg));
        line_numbers.push_back(line_no);
    }
    if (!have_header) throw ValidationError("manifest has no header row");
    if (segments.empty()) throw ValidationError("manifest has no segments");
    return finish(std::move(segments), line_numbers, std::move(header), requirements);
}

std::optional<std::string> json_string(const nlohmann::json& obj, const char* key, std::size_t line_no) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ValidationError(fmt::format("line {}: field '{}' must be a string", line_no, key));
    return it->get<std::string>();
}

EvalCorpus parse_jsonl(std::string_view content, const std::filesystem::path& base_dir,
                       const MetricRequirements& requirements) {
    Header header;
    std::vector<EvalSegment> segments;
    std::vector<std::size_t> line_numbers;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        const auto line = trim(content.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;

        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError(fmt::format("line {}: {}", line_no, e.what()));
        }
        if (!obj.is_object()) throw ValidationError(fmt::format("line {}: expected a JSON object", line_no));

        // A leading object without an id carries corpus-level metadata.
        if (!obj.contains("id") && segments.empty()) {
            if (auto name = json_string(obj, "system_name", line_no)) header.system_name = *name;
            if (const auto it = obj.find("metadata"); it != obj.end()) {
                if (!it->is_object()) throw ValidationError(fmt::format("line {}: metadata must be an object", line_no));
                for (const auto& [k, v] : it->items()) {
                    if (!v.is_string()) {
                        throw ValidationError(fmt::format("line {}: metadata value '{}' must be a string", line_no, k));
                    }
                    header.metadata[k] = v.get<std::string>();
                }
            }
            continue;
        }

        EvalSegment seg;
        try {
            seg.id = json_string(obj, "id", line_no).value_or("");
            seg.language = LanguageTag(json_string(obj, "language", line_no).value_or(""));
            seg.condition = parse_condition(json_string(obj, "condition", line_no).value_or(""));
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("line {}: {}", line_no, e.what()));
        }
        seg.source_text = json_string(obj, "source_text", line_no);
        if (const auto it = obj.find("reference_text"); it != obj.end() && !it->is_null()) {
            if (it->is_string()) {
                seg.reference_texts.push_back(it->get<std::string>());
            } else if (it->is_array()) {
                for (const auto& r : *it) {
                    if (!r.is_string()) {
                        throw ValidationError(fmt::format("line {}: reference_text entries must be strings", line_no));
                    }
                    seg.reference_texts.push_back(r.get<std::string>());
                }
            } else {
                throw ValidationError(fmt::format("line {}: reference_text must be a string or array", line_no));
            }
        }
        seg.hypothesis_text = json_string(obj, "hypothesis_text", line_no);
        if (auto p = json_string(obj, "reference_audio", line_no)) seg.reference_audio = resolve(base_dir, *p);
        if (auto p = json_string(obj, "hypothesis_audio", line_no)) seg.hypothesis_audio = resolve(base_dir, *p);
        segments.push_back(std::move(seg));
        line_numbers.push_back(line_no);
    }
    if (segments.empty()) throw ValidationError("manifest has no segments");
    return finish(std::move(segments), line_numbers, std::move(header), requirements);
}

std::string shell_quote(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    out += '\'';
    return out;
}

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

} // namespace

std::string_view to_string(Condition condition) {
    switch (condition) {
    case Condition::MT: return "MT";
    case Condition::TTS: return "TTS";
    case Condition::T2S: return "T2S";
    }
    return "?";
}

Condition parse_condition(std::string_view text) {
    std::string upper;
    for (char c : trim(text)) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper == "MT") return Condition::MT;
    if (upper == "TTS") return Condition::TTS;
    if (upper == "T2S") return Condition::T2S;
    if (upper.empty()) throw ValidationError("missing required field 'condition'");
    throw ValidationError(fmt::format("unknown condition '{}' (expected MT, TTS or T2S)", text));
}

LanguageTag::LanguageTag(std::string code) : code_(std::move(code)) {
    if (code_.empty()) throw ValidationError("missing required field 'language'");
    for (char c : code_) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
        if (!ok) throw ValidationError(fmt::format("language tag '{}' must be lowercase", code_));
    }
}

EvalCorpus::EvalCorpus(std::vector<EvalSegment> segments, std::string system_name,
                       std::map<std::string, std::string> metadata)
    : segments_(std::move(segments)), system_name_(std::move(system_name)), metadata_(std::move(metadata)) {
    if (segments_.empty()) throw ValidationError("corpus must contain at least one segment");
    std::set<std::string_view> ids;
    for (const auto& seg : segments_) {
        validate_segment(seg, "corpus");
        if (!ids.insert(seg.id).second) throw ValidationError(fmt::format("duplicate id '{}'", seg.id));
        if (seg.condition != segments_.front().condition) {
            throw ValidationError(fmt::format("segment '{}' has condition {} but the corpus is {}", seg.id,
                                              to_string(seg.condition), to_string(segments_.front().condition)));
        }
        if (seg.language != segments_.front().language) {
            throw ValidationError(fmt::format("segment '{}' has language '{}' but the corpus is '{}'", seg.id,
                                              seg.language.code(), segments_.front().language.code()));
        }
    }
}

const EvalSegment* EvalCorpus::find(std::string_view id) const {
    for (const auto& seg : segments_) {
        if (seg.id == id) return &seg;
    }
    return nullptr;
}

void EvalCorpus::require(const MetricRequirements& requirements) const {
    for (const auto& seg : segments_) {
        if (requirements.text_metrics) {
            if (seg.reference_texts.empty()) {
                throw ValidationError(fmt::format("segment '{}': missing required field 'reference_text'", seg.id));
            }
            if (!seg.hypothesis_text) {
                throw ValidationError(fmt::format("segment '{}': missing required field 'hypothesis_text'", seg.id));
            }
        }
        if (requirements.mcd) {
            if (!seg.hypothesis_audio) {
                throw ValidationError(fmt::format("segment '{}': missing required field 'hypothesis_audio'", seg.id));
            }
            if (!seg.reference_audio) {
                throw ValidationError(fmt::format("segment '{}': missing required field 'reference_audio'", seg.id));
            }
        }
    }
}

EvalCorpus parse_manifest(std::string_view content, ManifestFormat format, const std::filesystem::path& base_dir,
                          const MetricRequirements& requirements) {
    return format == ManifestFormat::Tsv ? parse_tsv(content, base_dir, requirements)
                                         : parse_jsonl(content, base_dir, requirements);
}

EvalCorpus load_manifest(const std::filesystem::path& path, const MetricRequirements& requirements) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open manifest '{}'", path.string()));
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string content = buffer.str();

    ManifestFormat format = ManifestFormat::Tsv;
    const auto ext = path.extension().string();
    if (ext == ".jsonl" || ext == ".json") {
        format = ManifestFormat::JsonLines;
    } else if (ext != ".tsv") {
        const auto first = content.find_first_not_of(" \t\r\n");
        if (first != std::string::npos && content[first] == '{') format = ManifestFormat::JsonLines;
    }
    try {
        return parse_manifest(content, format, path.parent_path().empty() ? "." : path.parent_path(), requirements);
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string serialize_manifest(const EvalCorpus& corpus, ManifestFormat format) {
    std::string out;
    if (format == ManifestFormat::JsonLines) {
        if (!corpus.system_name().empty() || !corpus.metadata().empty()) {
            nlohmann::json head;
            head["system_name"] = corpus.system_name();
            head["metadata"] = corpus.metadata();
            out += head.dump() + "\n";
        }
        for (const auto& seg : corpus.segments()) {
            nlohmann::ordered_json obj;
            obj["id"] = seg.id;
            obj["language"] = seg.language.code();
            obj["condition"] = to_string(seg.condition);
            if (seg.source_text) obj["source_text"] = *seg.source_text;
            if (!seg.reference_texts.empty()) obj["reference_text"] = seg.reference_texts;
            if (seg.hypothesis_text) obj["hypothesis_text"] = *seg.hypothesis_text;
            if (seg.reference_audio) obj["reference_audio"] = seg.reference_audio->string();
            if (seg.hypothesis_audio) obj["hypothesis_audio"] = seg.hypothesis_audio->string();
            out += obj.dump() + "\n";
        }
        return out;
    }

    if (!corpus.system_name().empty()) out += fmt::format("# system: {}\n", corpus.system_name());
    for (const auto& [k, v] : corpus.metadata()) out += fmt::format("# {}: {}\n", k, v);
    for (std::size_t k = 0; k < kColumns.size(); ++k) {
        out += kColumns[k];
        out += k + 1 < kColumns.size() ? '\t' : '\n';
    }
    for (const auto& seg : corpus.segments()) {
        std::string refs;
        for (std::size_t r = 0; r < seg.reference_texts.size(); ++r) {
            if (r) refs += kReferenceSeparator;
            refs += seg.reference_texts[r].empty() ? std::string(kEmptyStringCell) : escape_cell(seg.reference_texts[r]);
        }
        out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n", escape_cell(seg.id), seg.language.code(),
                           to_string(seg.condition), optional_to_cell(seg.source_text), refs,
                           optional_to_cell(seg.hypothesis_text),
                           seg.reference_audio ? escape_cell(seg.reference_audio->string()) : "",
                           seg.hypothesis_audio ? escape_cell(seg.hypothesis_audio->string()) : "");
    }
    return out;
}

EvalCorpus attach_transcripts(const EvalCorpus& corpus, const std::map<std::string, std::string>& transcripts) {
    for (const auto& [id, text] : transcripts) {
        if (!corpus.find(id)) throw ValidationError(fmt::format("transcript for unknown segment id '{}'", id));
    }
    std::vector<EvalSegment> segments = corpus.segments();
    for (auto& seg : segments) {
        if (const auto it = transcripts.find(seg.id); it != transcripts.end()) seg.hypothesis_text = it->second;
    }
    return EvalCorpus(std::move(segments), corpus.system_name(), corpus.metadata());
}

TranscriptionReport run_external_transcriber(const EvalCorpus& corpus, std::string_view command_template,
                                             unsigned jobs) {
    if (command_template.find("{audio}") == std::string_view::npos) {
        throw ValidationError("transcriber command template must contain the {audio} placeholder");
    }
    for (const auto& seg : corpus.segments()) {
        if (!seg.hypothesis_audio) {
            throw ValidationError(fmt::format("segment '{}': missing required field 'hypothesis_audio'", seg.id));
        }
        if (!std::filesystem::exists(*seg.hypothesis_audio)) {
            throw ValidationError(
                fmt::format("segment '{}': audio file '{}' does not exist", seg.id, seg.hypothesis_audio->string()));
        }
    }

    struct Outcome {
        bool ok = false;
        std::string text;
    };
    std::vector<Outcome> outcomes(corpus.size());
    parallel_for(corpus.size(), jobs, [&](std::size_t i) {
        const auto& seg = corpus[i];
        std::string command = replace_all(std::string(command_template), "{audio}",
                                          shell_quote(seg.hypothesis_audio->string()));
        command = replace_all(std::move(command), "{id}", shell_quote(seg.id));
        FILE* pipe = ::popen(command.c_str(), "r");
        if (!pipe) {
            outcomes[i] = {false, "failed to start command"};
            return;
        }
        std::string output;
        std::array<char, 4096> buf{};
        std::size_t n = 0;
        while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), n);
        const int status = ::pclose(pipe);
        if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
            const int code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
            outcomes[i] = {false, fmt::format("command exited with status {}", code)};
            return;
        }
        const auto last = output.find_last_not_of(" \t\r\n\v\f");
        output.erase(last == std::string::npos ? 0 : last + 1);
        outcomes[i] = {true, std::move(output)};
    });

    TranscriptionReport report;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (outcomes[i].ok) {
            report.transcripts.emplace(corpus[i].id, std::move(outcomes[i].text));
        } else {
            report.failures.push_back({corpus[i].id, std::move(outcomes[i].text)});
        }
    }
    return report;
}

} // namespace s2seval
