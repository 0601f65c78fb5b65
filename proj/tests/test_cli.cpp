#include <doctest.h>

#include <json.hpp>

#include <sstream>

#include "s2seval/cli.hpp"
#include "s2seval/speechmetrics.hpp"
#include "s2seval/stats.hpp"
#include "support.hpp"

using namespace s2seval;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

const char* kTextManifest =
    "# system: mt-a\n"
    "id\tlanguage\tcondition\treference_text\thypothesis_text\n"
    "s1\tch-be\tMT\tmir gö hei\tmir gö hei\n"
    "s2\tch-be\tMT\tdi tür isch zue\tdi tür isch offe\n"
    "s3\tch-be\tMT\ter git mer s brot\ter git mir brot\n"
    "s4\tch-be\tMT\tsi sitzt im garte\tsi sitzt dusse\n";

} // namespace

TEST_SUITE("cli") {

TEST_CASE("score writes corpus rows and the segment table") {
    testing::TempDir dir("cli-score");
    testing::write_text(dir / "m.tsv", kTextManifest);
    const auto r = run({"score", "--manifest", (dir / "m.tsv").string(), "--metrics", "bleu,chrf", "--seed", "3",
                        "--resamples", "200"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("# corpus\tbleu\t") != std::string::npos);
    CHECK(r.out.find("# corpus\tchrf\t") != std::string::npos);
    const auto table = stats::ScoreTable::from_tsv(r.out);
    CHECK(table.column_names() == std::vector<std::string>{"bleu", "chrf"});
    CHECK(table.rows().size() == 4);
    CHECK(*table.column("chrf")[0] == doctest::Approx(1.0));

    const auto again = run({"score", "--manifest", (dir / "m.tsv").string(), "--metrics", "bleu,chrf", "--seed", "3",
                            "--resamples", "200", "--jobs", "4"});
    CHECK(again.out == r.out);

    const auto js = run({"score", "--manifest", (dir / "m.tsv").string(), "--json", "--resamples", "50"});
    REQUIRE(js.code == 0);
    const auto j = nlohmann::json::parse(js.out);
    CHECK(j["system"] == "mt-a");
    CHECK(j["segments"].size() == 4);
    CHECK(j["corpus"].contains("charbleu"));
}

TEST_CASE("score exit codes") {
    testing::TempDir dir("cli-codes");
    testing::write_text(dir / "m.tsv", kTextManifest);
    SUBCASE("mcd without audio is a validation error naming the field") {
        const auto r = run({"score", "--manifest", (dir / "m.tsv").string(), "--metrics", "mcd"});
        CHECK(r.code == 1);
        CHECK(r.err.find("hypothesis_audio") != std::string::npos);
    }
    SUBCASE("unknown metric") {
        CHECK(run({"score", "--manifest", (dir / "m.tsv").string(), "--metrics", "ter"}).code == 1);
    }
    SUBCASE("unknown flag or missing subcommand") {
        CHECK(run({"score", "--bogus"}).code == 1);
        CHECK(run({}).code == 1);
        CHECK(run({"--help"}).code == 0);
    }
    SUBCASE("conflicting flags") {
        CHECK(run({"score", "--manifest", (dir / "m.tsv").string(), "--lexicon", "x.lex"}).code == 1);
        CHECK(run({"score", "--manifest", (dir / "m.tsv").string(), "--confidence", "1.5"}).code == 1);
    }
    SUBCASE("unreadable audio is a runtime error naming the segment") {
        testing::write_text(dir / "a.tsv",
                            "id\tlanguage\tcondition\treference_audio\thypothesis_audio\n"
                            "u1\tde\tTTS\tnope_ref.wav\tnope_hyp.wav\n");
        const auto r = run({"score", "--manifest", (dir / "a.tsv").string(), "--metrics", "mcd"});
        CHECK(r.code == 2);
        CHECK(r.err.find("u1") != std::string::npos);
    }
}

TEST_CASE("score with an external transcriber") {
    testing::TempDir dir("cli-asr");
    speech::write_wav(dir / "h.wav", testing::tone(200.0, 0.1, 22050, 0.0, 1));
    testing::write_text(dir / "m.tsv",
                        "id\tlanguage\tcondition\treference_text\thypothesis_audio\n"
                        "s1\tde\tT2S\thallo welt\th.wav\n"
                        "s2\tde\tT2S\tguten tag\th.wav\n");
    const auto r = run({"score", "--manifest", (dir / "m.tsv").string(), "--metrics", "chrf", "--transcriber",
                        "echo hallo welt # {audio} {id}", "--resamples", "20"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto t = stats::ScoreTable::from_tsv(r.out);
    CHECK(*t.column("chrf")[0] == 1.0);
    CHECK(*t.column("chrf")[1] < 1.0);
    const auto fail = run({"score", "--manifest", (dir / "m.tsv").string(), "--metrics", "chrf", "--transcriber",
                           "false {audio}"});
    CHECK(fail.code == 2);
    CHECK(fail.err.find("s1") != std::string::npos);
}

TEST_CASE("correlate and bootstrap") {
    testing::TempDir dir("cli-corr");
    testing::write_text(dir / "t.tsv", "id\ta\tb\ts1\n");
    testing::write_text(dir / "t.tsv",
                        "id\tx\tx_copy\ty\n"
                        "r1\t1\t1\t3\n"
                        "r2\t2\t2\t1\n"
                        "r3\t3\t3\t2\n"
                        "r4\t5\t5\t\n");
    const auto r = run({"correlate", "--table", (dir / "t.tsv").string(), "--json"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["r"][0][1] == 1.0);
    CHECK(j["r"][0][0] == 1.0);
    CHECK(j["support"][0][2] == 3);

    const auto pp = run({"correlate", "--table", (dir / "t.tsv").string(), "--pre", "x", "--post", "y"});
    REQUIRE(pp.code == 0);
    CHECK(pp.out.rfind("# r\t", 0) == 0);
    CHECK(run({"correlate", "--table", (dir / "t.tsv").string(), "--pre", "x"}).code == 1);

    const auto b1 = run({"bootstrap", "--table", (dir / "t.tsv").string(), "--seed", "4", "--jobs", "1"});
    const auto b2 = run({"bootstrap", "--table", (dir / "t.tsv").string(), "--seed", "4", "--jobs", "3"});
    REQUIRE(b1.code == 0);
    CHECK(b1.out == b2.out);
    CHECK(b1.out.find("x_copy\t") != std::string::npos);
    CHECK(run({"bootstrap", "--table", (dir / "missing.tsv").string()}).code == 1);
}

TEST_CASE("g2p-train then normalize") {
    testing::TempDir dir("cli-g2p");
    testing::write_text(dir / "toy.lex", "a\tA\nb\tB\nab\tA B\nba\tB A\n");
    const auto model = (dir / "toy.model.json").string();
    const auto t = run({"g2p-train", "--lexicon", (dir / "toy.lex").string(), "--order", "2", "--output", model});
    REQUIRE_MESSAGE(t.code == 0, t.err);
    const auto n = run({"normalize", "--model", model, "ab"});
    REQUIRE_MESSAGE(n.code == 0, n.err);
    CHECK(n.out == "A B\n");

    testing::write_text(dir / "in.txt", "ab ab\nba\n");
    const auto f = run({"normalize", "--model", model, "--input", (dir / "in.txt").string()});
    CHECK(f.out == "A B # A B\nB A\n");
    CHECK(run({"normalize", "--model", model, "--input", (dir / "in.txt").string(), "ab"}).code == 1);
    const auto bad = run({"normalize", "--model", model, "aø"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("ø") != std::string::npos);
}

TEST_CASE("select-mos and aggregate-mos") {
    testing::TempDir dir("cli-mos");
    std::string manifest = "id\tlanguage\tcondition\treference_text\n";
    const auto corpus = testing::cover3_corpus();
    for (const auto& s : corpus.segments()) manifest += s.id + "\tde\tMT\t" + s.reference_texts[0] + "\n";
    testing::write_text(dir / "m.tsv", manifest);
    const auto r = run({"select-mos", "--manifest", (dir / "m.tsv").string(), "--k", "20", "--seed", "2",
                        "--study-out", (dir / "study.json").string(), "--raters", "r1,r2"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::istringstream lines(r.out);
    std::vector<std::string> ids;
    for (std::string l; std::getline(lines, l);) ids.push_back(l);
    CHECK(ids.size() == 20);
    CHECK(std::filesystem::exists(dir / "study.json"));
    const auto infeasible = run({"select-mos", "--manifest", (dir / "m.tsv").string(), "--k", "2"});
    CHECK(infeasible.code == 1);
    CHECK(infeasible.err.find("smallest cover") != std::string::npos);

    testing::write_text(dir / "log.jsonl",
                        R"({"sample_id":"s1","rater_id":"a","category":"overall","score":3,"timestamp":1})"
                        "\n"
                        R"({"sample_id":"s1","rater_id":"b","category":"overall","score":5,"timestamp":1})"
                        "\n");
    const auto agg = run({"aggregate-mos", "--log", (dir / "log.jsonl").string(), "--json"});
    REQUIRE(agg.code == 0);
    CHECK(nlohmann::json::parse(agg.out)["categories"]["overall"]["mean"] == 4.0);
    testing::write_text(dir / "bad.jsonl",
                        R"({"sample_id":"s1","rater_id":"a","category":"overall","score":9,"timestamp":1})"
                        "\n");
    CHECK(run({"aggregate-mos", "--log", (dir / "bad.jsonl").string()}).code == 1);
}

TEST_CASE("inputs are not modified") {
    testing::TempDir dir("cli-ro");
    testing::write_text(dir / "m.tsv", kTextManifest);
    run({"score", "--manifest", (dir / "m.tsv").string(), "--resamples", "10"});
    CHECK(testing::read_text(dir / "m.tsv") == kTextManifest);
}

} // TEST_SUITE
