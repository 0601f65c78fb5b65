#include "s2seval/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "s2seval/corpus.hpp"
#include "s2seval/mos_service.hpp"
#include "s2seval/moseval.hpp"
#include "s2seval/normalize.hpp"
#include "s2seval/parallel.hpp"
#include "s2seval/speechmetrics.hpp"
#include "s2seval/stats.hpp"
#include "s2seval/textmetrics.hpp"

namespace s2seval::cli {

namespace {

struct BootstrapFlags {
    std::size_t resamples = 1000;
    double confidence = 0.95;
    std::uint64_t seed = 0;
    unsigned jobs = default_jobs();

    stats::BootstrapConfig config() const {
        stats::BootstrapConfig c{resamples, confidence, seed, jobs};
        c.validate();
        return c;
    }
};

void add_bootstrap_flags(CLI::App* cmd, BootstrapFlags& flags) {
    cmd->add_option("--resamples", flags.resamples, "Bootstrap resamples")->check(CLI::PositiveNumber);
    cmd->add_option("--confidence", flags.confidence, "Confidence level of the interval")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--seed", flags.seed, "Random seed");
    cmd->add_option("--jobs", flags.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

void emit(const std::string& text, const std::string& output, std::ostream& out) {
    if (output.empty() || output == "-") {
        out << text;
        return;
    }
    std::ofstream file(output, std::ios::binary);
    if (!file) throw ComputationError(fmt::format("cannot write '{}'", output));
    file << text;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// ---- score ----------------------------------------------------------------

struct ScoreOptions {
    std::string manifest;
    std::string metrics = "bleu,charbleu,chrf";
    std::string output;
    bool json = false;
    std::string transcriber;
    std::string g2p_model;
    std::string lexicon;
    std::size_t beam = 32;
    BootstrapFlags bootstrap;
    speech::SpectralConfig spectral;
};

struct CorpusRow {
    std::string metric;
    stats::IntervalEstimate estimate;
};

stats::IntervalEstimate text_metric_ci(text::Metric metric, const std::vector<std::string>& hyps,
                                       const std::vector<std::vector<std::string>>& refs,
                                       const stats::BootstrapConfig& config) {
    // Pool per-segment sufficient statistics so each resample recomputes the
    // corpus-level metric rather than averaging segment scores.
    if (metric == text::Metric::Chrf) {
        std::vector<text::ChrfStats> seg;
        for (std::size_t i = 0; i < hyps.size(); ++i) seg.push_back(text::chrf_stats(hyps[i], refs[i]));
        return stats::bootstrap_ci(
            seg.size(),
            [&seg](std::span<const std::size_t> idx) {
                text::ChrfStats total;
                for (std::size_t i : idx) total += seg[i];
                return text::chrf_from_stats(total).fscore;
            },
            config);
    }
    const auto granularity = metric == text::Metric::Bleu ? text::Granularity::Word : text::Granularity::Char;
    std::vector<text::BleuStats> seg;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        std::vector<text::TokenSequence> r;
        for (const auto& ref : refs[i]) r.push_back(text::tokenize(ref, granularity));
        seg.push_back(text::bleu_stats(text::tokenize(hyps[i], granularity), r));
    }
    return stats::bootstrap_ci(
        seg.size(),
        [&seg](std::span<const std::size_t> idx) {
            text::BleuStats total;
            for (std::size_t i : idx) total += seg[i];
            return text::bleu_from_stats(total).score;
        },
        config);
}

int cmd_score(const ScoreOptions& opt, std::ostream& out) {
    const auto metric_names = split_list(opt.metrics);
    if (metric_names.empty()) throw ValidationError("--metrics selects no metric");
    std::vector<text::Metric> text_metrics;
    bool want_mcd = false;
    for (const auto& name : metric_names) {
        if (name == "mcd") {
            want_mcd = true;
        } else {
            const auto m = text::parse_metric(name);
            if (std::find(text_metrics.begin(), text_metrics.end(), m) == text_metrics.end()) text_metrics.push_back(m);
        }
    }
    if (!opt.g2p_model.empty() && text_metrics.empty()) {
        throw ValidationError("--g2p-model needs at least one text metric");
    }
    if (!opt.lexicon.empty() && opt.g2p_model.empty()) throw ValidationError("--lexicon requires --g2p-model");
    opt.spectral.validate();
    const auto boot = opt.bootstrap.config();

    EvalCorpus corpus = load_manifest(opt.manifest, {.mcd = want_mcd});
    if (!opt.transcriber.empty()) {
        const auto report = run_external_transcriber(corpus, opt.transcriber, boot.jobs);
        if (!report.ok()) {
            std::string msg = "transcriber failed:";
            for (const auto& f : report.failures) msg += fmt::format("\n  segment '{}': {}", f.id, f.message);
            throw ComputationError(msg);
        }
        corpus = attach_transcripts(corpus, report.transcripts);
    }
    corpus.require({.text_metrics = !text_metrics.empty()});

    std::vector<std::string> ids;
    for (const auto& seg : corpus.segments()) ids.push_back(seg.id);
    stats::ScoreTable table(ids);
    std::vector<CorpusRow> corpus_rows;

    std::vector<std::string> hyps;
    std::vector<std::vector<std::string>> refs;
    for (const auto& seg : corpus.segments()) {
        if (!text_metrics.empty()) {
            hyps.push_back(*seg.hypothesis_text);
            refs.push_back(seg.reference_texts);
        }
    }

    auto score_text = [&](const std::string& prefix, const EvalCorpus& c, const std::vector<std::string>& h,
                          const std::vector<std::vector<std::string>>& r) {
        for (auto metric : text_metrics) {
            const std::string name = prefix + std::string(text::to_string(metric));
            const auto seg_scores = text::segment_scores(metric, c);
            table.add_column(name, std::span<const std::pair<std::string, double>>(seg_scores));
            corpus_rows.push_back({name, text_metric_ci(metric, h, r, boot)});
        }
    };
    if (!text_metrics.empty()) score_text("", corpus, hyps, refs);

    if (!opt.g2p_model.empty()) {
        const auto model = g2p::PairNgramModel::load(opt.g2p_model);
        std::optional<g2p::Lexicon> lexicon;
        if (!opt.lexicon.empty()) lexicon = g2p::load_lexicon(opt.lexicon);
        const g2p::Lexicon* lex = lexicon ? &*lexicon : nullptr;
        std::vector<EvalSegment> segments = corpus.segments();
        std::vector<std::string> norm_hyps;
        std::vector<std::vector<std::string>> norm_refs;
        for (auto& seg : segments) {
            try {
                seg.hypothesis_text = g2p::normalize_text(*seg.hypothesis_text, model, lex, opt.beam);
                for (auto& ref : seg.reference_texts) ref = g2p::normalize_text(ref, model, lex, opt.beam);
            } catch (const ValidationError& e) {
                throw ComputationError(fmt::format("segment '{}': normalization failed: {}", seg.id, e.what()));
            }
            norm_hyps.push_back(*seg.hypothesis_text);
            norm_refs.push_back(seg.reference_texts);
        }
        const EvalCorpus normalized(std::move(segments), corpus.system_name(), corpus.metadata());
        score_text("norm_", normalized, norm_hyps, norm_refs);
    }

    if (want_mcd) {
        const auto result = speech::corpus_mcd(corpus, opt.spectral, boot.jobs);
        std::vector<std::pair<std::string, double>> values;
        std::vector<double> raw;
        for (const auto& s : result.segments) {
            values.emplace_back(s.id, s.mcd_db);
            raw.push_back(s.mcd_db);
        }
        table.add_column("mcd", std::span<const std::pair<std::string, double>>(values));
        auto est = stats::bootstrap_ci(raw, boot);
        est.point = result.mean;
        corpus_rows.push_back({"mcd", est});
    }

    if (opt.json) {
        nlohmann::ordered_json j;
        j["system"] = corpus.system_name();
        j["condition"] = to_string(corpus.condition());
        j["language"] = corpus.language().code();
        auto& c = j["corpus"] = nlohmann::ordered_json::object();
        for (const auto& row : corpus_rows) {
            c[row.metric] = {{"score", row.estimate.point},
                             {"lo", row.estimate.lo},
                             {"hi", row.estimate.hi},
                             {"half_width", row.estimate.half_width()}};
        }
        auto& segs = j["segments"] = nlohmann::ordered_json::array();
        for (std::size_t r = 0; r < table.rows().size(); ++r) {
            nlohmann::ordered_json s;
            s["id"] = table.rows()[r];
            for (const auto& name : table.column_names()) {
                const auto& v = table.column(name)[r];
                s[name] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
            }
            segs.push_back(std::move(s));
        }
        emit(j.dump(2) + "\n", opt.output, out);
        return kOk;
    }

    std::string text = fmt::format("# system: {}\n# condition: {}\n# language: {}\n", corpus.system_name(),
                                   to_string(corpus.condition()), corpus.language().code());
    for (const auto& row : corpus_rows) {
        text += fmt::format("# corpus\t{}\t{:.6f}\t{:.6f}\t{:.6f}\n", row.metric, row.estimate.point, row.estimate.lo,
                            row.estimate.hi);
    }
    text += table.to_tsv();
    emit(text, opt.output, out);
    return kOk;
}

// ---- correlate / bootstrap ---------------------------------------------------

stats::ScoreTable load_tables(const std::vector<std::string>& paths) {
    if (paths.empty()) throw ValidationError("at least one --table is required");
    stats::ScoreTable table = stats::ScoreTable::load(paths.front());
    for (std::size_t i = 1; i < paths.size(); ++i) table = table.merged(stats::ScoreTable::load(paths[i]));
    return table;
}

struct CorrelateOptions {
    std::vector<std::string> tables;
    std::vector<std::string> columns;
    std::string pre;
    std::string post;
    std::string output;
    bool json = false;
};

int cmd_correlate(const CorrelateOptions& opt, std::ostream& out) {
    stats::ScoreTable table = load_tables(opt.tables);

    if (!opt.pre.empty() || !opt.post.empty()) {
        if (opt.pre.empty() || opt.post.empty()) throw ValidationError("--pre and --post must be given together");
        auto as_map = [&](const std::string& name) {
            std::map<std::string, double> m;
            const auto& col = table.column(name);
            for (std::size_t r = 0; r < col.size(); ++r) {
                if (col[r]) m.emplace(table.rows()[r], *col[r]);
            }
            return m;
        };
        const auto report = stats::prepost_report(as_map(opt.pre), as_map(opt.post));
        if (opt.json) {
            nlohmann::ordered_json j;
            j["pre"] = opt.pre;
            j["post"] = opt.post;
            j["r"] = report.r;
            auto& pairs = j["pairs"] = nlohmann::ordered_json::array();
            for (const auto& [id, a, b] : report.pairs) pairs.push_back({{"id", id}, {"pre", a}, {"post", b}});
            emit(j.dump(2) + "\n", opt.output, out);
        } else {
            std::string text = fmt::format("# r\t{:.6f}\nid\t{}\t{}\n", report.r, opt.pre, opt.post);
            for (const auto& [id, a, b] : report.pairs) text += fmt::format("{}\t{:.6f}\t{:.6f}\n", id, a, b);
            emit(text, opt.output, out);
        }
        return kOk;
    }

    if (!opt.columns.empty()) {
        stats::ScoreTable subset(table.rows());
        for (const auto& name : opt.columns) subset.add_column(name, table.column(name));
        table = std::move(subset);
    }
    const auto matrix = stats::correlation_matrix(table);
    emit(opt.json ? matrix.to_json() : matrix.to_tsv(), opt.output, out);
    return kOk;
}

struct BootstrapOptions {
    std::vector<std::string> tables;
    std::vector<std::string> columns;
    std::string output;
    bool json = false;
    BootstrapFlags bootstrap;
};

int cmd_bootstrap(const BootstrapOptions& opt, std::ostream& out) {
    const auto table = load_tables(opt.tables);
    const auto config = opt.bootstrap.config();
    const auto names = opt.columns.empty() ? table.column_names() : opt.columns;
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    std::string text = "column\tmean\tlo\thi\thalf_width\tn\n";
    for (const auto& name : names) {
        std::vector<double> values;
        for (const auto& v : table.column(name)) {
            if (v) values.push_back(*v);
        }
        if (values.empty()) throw ValidationError(fmt::format("column '{}' has no values", name));
        const auto est = stats::bootstrap_ci(values, config);
        text += fmt::format("{}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\t{}\n", name, est.point, est.lo, est.hi,
                            est.half_width(), values.size());
        j[name] = {{"mean", est.point}, {"lo", est.lo}, {"hi", est.hi}, {"half_width", est.half_width()},
                   {"n", values.size()}};
    }
    emit(opt.json ? j.dump(2) + "\n" : text, opt.output, out);
    return kOk;
}

// ---- normalization ---------------------------------------------------------

struct G2pTrainOptions {
    std::string lexicon;
    std::size_t order = 3;
    std::size_t iterations = 10;
    std::string output;
};

int cmd_g2p_train(const G2pTrainOptions& opt, std::ostream& out, std::ostream& err) {
    const auto lexicon = g2p::load_lexicon(opt.lexicon);
    const auto aligned = g2p::train_alignment(lexicon, {.max_chunk = 2, .em_iterations = opt.iterations});
    for (const auto& s : aligned.skipped) {
        err << fmt::format("skipped '{}' [{}]: {}\n", s.word, g2p::join(s.pron), s.reason);
    }
    if (aligned.alignments.empty()) throw ValidationError("no lexicon entry could be aligned");
    const auto model = g2p::train_pair_ngram(aligned.alignments, opt.order);
    emit(model.to_json(), opt.output, out);
    return kOk;
}

struct NormalizeOptions {
    std::string model;
    std::string lexicon;
    std::string input;
    std::string text;
    std::string output;
    std::size_t beam = 32;
};

int cmd_normalize(const NormalizeOptions& opt, std::ostream& out) {
    const auto model = g2p::PairNgramModel::load(opt.model);
    std::optional<g2p::Lexicon> lexicon;
    if (!opt.lexicon.empty()) lexicon = g2p::load_lexicon(opt.lexicon);
    const g2p::Lexicon* lex = lexicon ? &*lexicon : nullptr;

    std::vector<std::string> lines;
    if (!opt.input.empty()) {
        std::stringstream in(read_file(opt.input));
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
    } else {
        lines.push_back(opt.text);
    }
    std::string result;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            result += g2p::normalize_text(lines[i], model, lex, opt.beam) + "\n";
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("line {}: {}", i + 1, e.what()));
        }
    }
    emit(result, opt.output, out);
    return kOk;
}

// ---- MOS -------------------------------------------------------------------

struct SelectOptions {
    std::string manifest;
    std::size_t k = 20;
    std::uint64_t seed = 0;
    bool json = false;
    std::string output;
    std::string study_out;
    std::string raters;
};

int cmd_select_mos(const SelectOptions& opt, std::ostream& out) {
    const auto corpus = load_manifest(opt.manifest);
    const auto ids = mos::select_mos_samples(corpus, opt.k, opt.seed);
    const auto vocab = mos::character_vocabulary(corpus);

    if (!opt.study_out.empty()) {
        mos::Study study;
        study.seed = opt.seed;
        study.raters = split_list(opt.raters);
        for (const auto& id : ids) {
            const auto* seg = corpus.find(id);
            study.samples.push_back({id, seg->hypothesis_audio.value_or(seg->reference_audio.value_or(""))});
        }
        emit(study.to_json(), opt.study_out, out);
    }
    if (opt.json) {
        nlohmann::ordered_json j;
        j["ids"] = ids;
        j["k"] = ids.size();
        j["vocabulary_size"] = vocab.size();
        emit(j.dump(2) + "\n", opt.output, out);
    } else {
        std::string text;
        for (const auto& id : ids) text += id + "\n";
        emit(text, opt.output, out);
    }
    return kOk;
}

struct AggregateOptions {
    std::string log;
    bool json = false;
    std::string output;
    BootstrapFlags bootstrap;
};

int cmd_aggregate_mos(const AggregateOptions& opt, std::ostream& out) {
    std::vector<mos::RatingRecord> ratings;
    std::stringstream in(read_file(opt.log));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto r = mos::rating_from_json(line);
            if (r.score < 1 || r.score > 5) throw ValidationError(fmt::format("score {} outside 1..5", r.score));
            ratings.push_back(std::move(r));
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("{}:{}: {}", opt.log, line_no, e.what()));
        }
    }
    const auto summary = mos::aggregate_mos(ratings, opt.bootstrap.config());
    emit(opt.json ? summary.to_json() : summary.to_tsv(), opt.output, out);
    return kOk;
}

struct ServeOptions {
    std::string study;
    std::string log;
    std::string host = "0.0.0.0";
    int port = 8080;
    std::string static_dir;
    BootstrapFlags bootstrap;
};

int cmd_serve(const ServeOptions& opt, std::ostream& err) {
    auto study = mos::Study::load(opt.study);
    const std::filesystem::path study_path(opt.study);
    const auto log = opt.log.empty() ? study_path.parent_path() / "ratings.jsonl" : std::filesystem::path(opt.log);
    auto static_dir = opt.static_dir.empty() ? study_path.parent_path() / "ui" : std::filesystem::path(opt.static_dir);
    mos::RatingStore store(std::move(study), log);
    mos::MosService service(store, opt.bootstrap.config(), static_dir);
    err << fmt::format("serving study '{}' on {}:{} (log: {})\n", opt.study, opt.host, opt.port, log.string());
    if (!service.listen(opt.host, opt.port)) {
        throw ComputationError(fmt::format("cannot listen on {}:{}", opt.host, opt.port));
    }
    return kOk;
}

void add_spectral_flags(CLI::App* cmd, speech::SpectralConfig& c) {
    cmd->add_option("--sample-rate", c.sample_rate, "Expected audio sample rate (Hz)");
    cmd->add_option("--pre-emphasis", c.pre_emphasis, "Pre-emphasis coefficient");
    cmd->add_option("--frame-shift", c.frame_shift, "Frame shift in seconds");
    cmd->add_option("--frame-length", c.frame_length, "Frame length in samples");
    cmd->add_option("--mel-bands", c.mel_bands, "Number of mel filters");
    cmd->add_option("--cepstral-order", c.cepstral_order, "Highest cepstral coefficient kept");
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Speech and text translation evaluation toolkit", "s2seval"};
    app.require_subcommand(1);

    ScoreOptions score;
    auto* score_cmd = app.add_subcommand("score", "Corpus- and segment-level metrics for a manifest");
    score_cmd->add_option("--manifest", score.manifest, "Manifest (TSV or JSONL)")->required();
    score_cmd->add_option("--metrics", score.metrics, "Comma-separated: bleu,charbleu,chrf,mcd");
    score_cmd->add_option("--output", score.output, "Output file (default: stdout)");
    score_cmd->add_flag("--json", score.json, "Write JSON instead of TSV");
    score_cmd->add_option("--transcriber", score.transcriber,
                          "Shell command producing a transcript; {audio} and {id} are substituted");
    auto* model_opt = score_cmd->add_option("--g2p-model", score.g2p_model,
                                            "Also score phonetically normalized text with this model");
    score_cmd->add_option("--lexicon", score.lexicon, "Lexicon consulted before the G2P model")->needs(model_opt);
    score_cmd->add_option("--beam", score.beam, "G2P beam width")->check(CLI::PositiveNumber);
    add_bootstrap_flags(score_cmd, score.bootstrap);
    add_spectral_flags(score_cmd, score.spectral);

    CorrelateOptions correlate;
    auto* corr_cmd = app.add_subcommand("correlate", "Pearson correlation matrix over score tables");
    corr_cmd->add_option("--table,--manifest", correlate.tables, "Score table TSV (repeatable; joined on id)")
        ->required();
    corr_cmd->add_option("--columns", correlate.columns, "Restrict to these columns")->delimiter(',');
    corr_cmd->add_option("--pre", correlate.pre, "Pre-ASR column for a pre/post report");
    corr_cmd->add_option("--post", correlate.post, "Post-ASR column for a pre/post report");
    corr_cmd->add_option("--output", correlate.output, "Output file (default: stdout)");
    corr_cmd->add_flag("--json", correlate.json, "Write JSON instead of TSV");

    BootstrapOptions boot;
    auto* boot_cmd = app.add_subcommand("bootstrap", "Bootstrap confidence intervals of column means");
    boot_cmd->add_option("--table", boot.tables, "Score table TSV (repeatable; joined on id)")->required();
    boot_cmd->add_option("--columns", boot.columns, "Columns to summarize (default: all)")->delimiter(',');
    boot_cmd->add_option("--output", boot.output, "Output file (default: stdout)");
    boot_cmd->add_flag("--json", boot.json, "Write JSON instead of TSV");
    add_bootstrap_flags(boot_cmd, boot.bootstrap);

    G2pTrainOptions train;
    auto* train_cmd = app.add_subcommand("g2p-train", "Train a pair n-gram G2P model from a lexicon");
    train_cmd->add_option("--lexicon", train.lexicon, "Lexicon: word<TAB>phonemes")->required();
    train_cmd->add_option("--order", train.order, "n-gram order")->check(CLI::PositiveNumber);
    train_cmd->add_option("--iterations", train.iterations, "EM alignment iterations");
    train_cmd->add_option("--output", train.output, "Model file (default: stdout)");

    NormalizeOptions norm;
    auto* norm_cmd = app.add_subcommand("normalize", "Map text to its normalized phonetic form");
    norm_cmd->add_option("--model", norm.model, "Pair n-gram model")->required();
    norm_cmd->add_option("--lexicon", norm.lexicon, "Lexicon consulted before the model");
    auto* input_opt = norm_cmd->add_option("--input", norm.input, "Input text file, one segment per line");
    auto* text_opt = norm_cmd->add_option("text", norm.text, "Text to normalize");
    input_opt->excludes(text_opt);
    norm_cmd->add_option("--output", norm.output, "Output file (default: stdout)");
    norm_cmd->add_option("--beam", norm.beam, "Beam width")->check(CLI::PositiveNumber);

    SelectOptions select;
    auto* select_cmd = app.add_subcommand("select-mos", "Pick MOS samples covering the character vocabulary");
    select_cmd->add_option("--manifest", select.manifest, "Manifest (TSV or JSONL)")->required();
    select_cmd->add_option("--k", select.k, "Number of samples")->check(CLI::PositiveNumber);
    select_cmd->add_option("--seed", select.seed, "Random seed");
    select_cmd->add_option("--output", select.output, "Output file (default: stdout)");
    select_cmd->add_flag("--json", select.json, "Write JSON instead of one id per line");
    auto* study_opt = select_cmd->add_option("--study-out", select.study_out, "Also write a study.json here");
    select_cmd->add_option("--raters", select.raters, "Comma-separated rater ids for --study-out")->needs(study_opt);

    AggregateOptions aggregate;
    auto* agg_cmd = app.add_subcommand("aggregate-mos", "Summarize a rating log per MOS category");
    agg_cmd->add_option("--log", aggregate.log, "Rating log (JSONL)")->required();
    agg_cmd->add_option("--output", aggregate.output, "Output file (default: stdout)");
    agg_cmd->add_flag("--json", aggregate.json, "Write JSON instead of TSV");
    add_bootstrap_flags(agg_cmd, aggregate.bootstrap);

    ServeOptions serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the MOS rating service");
    serve_cmd->add_option("--study", serve.study, "study.json")->required();
    serve_cmd->add_option("--log", serve.log, "Rating log (default: ratings.jsonl next to the study)");
    serve_cmd->add_option("--host", serve.host, "Bind address");
    serve_cmd->add_option("--port", serve.port, "Port")->check(CLI::Range(1, 65535));
    serve_cmd->add_option("--static", serve.static_dir, "Annotation UI directory (default: ui/ next to the study)");
    add_bootstrap_flags(serve_cmd, serve.bootstrap);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    try {
        if (score_cmd->parsed()) return cmd_score(score, out);
        if (corr_cmd->parsed()) return cmd_correlate(correlate, out);
        if (boot_cmd->parsed()) return cmd_bootstrap(boot, out);
        if (train_cmd->parsed()) return cmd_g2p_train(train, out, err);
        if (norm_cmd->parsed()) return cmd_normalize(norm, out);
        if (select_cmd->parsed()) return cmd_select_mos(select, out);
        if (agg_cmd->parsed()) return cmd_aggregate_mos(aggregate, out);
        if (serve_cmd->parsed()) return cmd_serve(serve, err);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}

} // namespace s2seval::cli
