#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "s2seval/errors.hpp"

namespace s2seval {

enum class Condition { MT, TTS, T2S };

std::string_view to_string(Condition condition);
Condition parse_condition(std::string_view text);

// Short lowercase language identifier such as "de", "ch-be" or "ch-zh".
class LanguageTag {
public:
    explicit LanguageTag(std::string code);

    const std::string& code() const { return code_; }

    friend bool operator==(const LanguageTag&, const LanguageTag&) = default;

private:
    std::string code_;
};

struct EvalSegment {
    std::string id;
    std::optional<std::string> source_text;
    std::vector<std::string> reference_texts;
    // MT output or ASR transcript. An empty string is a valid transcript.
    std::optional<std::string> hypothesis_text;
    std::optional<std::filesystem::path> reference_audio;
    std::optional<std::filesystem::path> hypothesis_audio;
    LanguageTag language{"und"};
    Condition condition = Condition::MT;

    friend bool operator==(const EvalSegment&, const EvalSegment&) = default;
};

// What the caller is about to compute; used to check that every segment
// carries the inputs those metrics need.
struct MetricRequirements {
    bool text_metrics = false;
    bool mcd = false;
};

// An ordered, validated, immutable collection of segments sharing one
// condition and one language.
class EvalCorpus {
public:
    EvalCorpus(std::vector<EvalSegment> segments, std::string system_name,
               std::map<std::string, std::string> metadata = {});

    const std::vector<EvalSegment>& segments() const { return segments_; }
    const std::string& system_name() const { return system_name_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }

    std::size_t size() const { return segments_.size(); }
    const EvalSegment& operator[](std::size_t i) const { return segments_[i]; }
    const EvalSegment* find(std::string_view id) const;

    Condition condition() const { return segments_.front().condition; }
    const LanguageTag& language() const { return segments_.front().language; }

    // Throws ValidationError naming the first segment and field that the
    // requested metrics cannot be computed without.
    void require(const MetricRequirements& requirements) const;

    friend bool operator==(const EvalCorpus&, const EvalCorpus&) = default;

private:
    std::vector<EvalSegment> segments_;
    std::string system_name_;
    std::map<std::string, std::string> metadata_;
};

enum class ManifestFormat { Tsv, JsonLines };

// Reads a TSV or JSON-lines manifest; the format is taken from the file
// extension (.jsonl/.json) or, failing that, sniffed from the first
// non-comment character. Relative audio paths resolve against the manifest's
// directory.
EvalCorpus load_manifest(const std::filesystem::path& path, const MetricRequirements& requirements = {});
EvalCorpus parse_manifest(std::string_view content, ManifestFormat format,
                          const std::filesystem::path& base_dir = {},
                          const MetricRequirements& requirements = {});

std::string serialize_manifest(const EvalCorpus& corpus, ManifestFormat format);

EvalCorpus attach_transcripts(const EvalCorpus& corpus, const std::map<std::string, std::string>& transcripts);

struct TranscriptionFailure {
    std::string id;
    std::string message;
};

struct TranscriptionReport {
    std::map<std::string, std::string> transcripts;
    std::vector<TranscriptionFailure> failures;

    bool ok() const { return failures.empty(); }
};

// Runs `command_template` once per segment through the shell, with every
// "{audio}" replaced by the quoted hypothesis audio path and "{id}" by the
// quoted segment id. Standard output minus trailing whitespace becomes the
// transcript. Precondition failures throw before anything is executed;
// per-segment failures land in the report.
TranscriptionReport run_external_transcriber(const EvalCorpus& corpus, std::string_view command_template,
                                             unsigned jobs = 1);

} // namespace s2seval
