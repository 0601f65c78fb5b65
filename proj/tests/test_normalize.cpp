#include <doctest.h>

#include <random>

#include "s2seval/normalize.hpp"
#include "s2seval/textmetrics.hpp"
#include "support.hpp"

using namespace s2seval;
using namespace s2seval::g2p;

namespace {

// Every way to cut (word, pron) into links of at most two symbols per side,
// never 0:0 and never 2:2.
void chunkings(const Graphemes& g, const Phonemes& p, std::size_t i, std::size_t j, std::vector<Link>& current,
               std::vector<std::vector<Link>>& out) {
    if (i == g.size() && j == p.size()) {
        out.push_back(current);
        return;
    }
    for (std::size_t a = 0; a <= 2; ++a) {
        for (std::size_t b = 0; b <= 2; ++b) {
            if ((a == 0 && b == 0) || (a == 2 && b == 2)) continue;
            if (i + a > g.size() || j + b > p.size()) continue;
            current.push_back({Graphemes(g.begin() + static_cast<long>(i), g.begin() + static_cast<long>(i + a)),
                               Phonemes(p.begin() + static_cast<long>(j), p.begin() + static_cast<long>(j + b))});
            chunkings(g, p, i + a, j + b, current, out);
            current.pop_back();
        }
    }
}

bool reproduces(const AlignedPair& pair) {
    Graphemes g;
    Phonemes p;
    for (const auto& l : pair.links) {
        CHECK_FALSE((l.graphemes.empty() && l.phonemes.empty()));
        g.insert(g.end(), l.graphemes.begin(), l.graphemes.end());
        p.insert(p.end(), l.phonemes.begin(), l.phonemes.end());
    }
    return g == pair.word && p == pair.pron;
}

double history_mass(const PairNgramModel& m, const std::vector<int>& history) {
    double sum = m.prob(-1, history);
    for (std::size_t t = 1; t < m.vocabulary_size(); ++t) sum += m.prob(static_cast<int>(t), history);
    return sum;
}

} // namespace

TEST_SUITE("normalize") {

TEST_CASE("lexicon parsing") {
    const auto lex = parse_lexicon(";; comment\nBach\tb a x\n\nbach\tb a x\nab a b\n");
    CHECK(lex.size() == 2);
    REQUIRE(lex.find("bach"));
    CHECK(lex.find("bach")->size() == 1);
    CHECK(lex.find("ab")->front() == Phonemes{"a", "b"});
    CHECK(lex.inventory() == std::set<std::string>{"a", "b", "x"});
    CHECK_THROWS_AS(parse_lexicon("lonely\n"), ValidationError);
}

TEST_CASE("alignment of 'ab' is the unique maximum over all chunkings") {
    Lexicon lex;
    lex.add("ab", {"A", "B"});
    const auto result = train_alignment(lex);
    REQUIRE(result.alignments.size() == 1);
    const std::vector<Link> expected{{{"a"}, {"A"}}, {{"b"}, {"B"}}};
    CHECK(result.alignments[0].links == expected);

    // Under uniform parameters a chunking's weight depends only on how many
    // unit-link equivalents it spends and on the non-1:1 penalty.
    std::vector<std::vector<Link>> all;
    std::vector<Link> cur;
    chunkings({"a", "b"}, {"A", "B"}, 0, 0, cur, all);
    CHECK(all.size() > 5);
    double best = -1.0;
    std::size_t best_count = 0;
    std::vector<Link> argmax;
    for (const auto& c : all) {
        double w = 1.0;
        for (const auto& l : c) {
            if (l.graphemes.empty() || l.phonemes.empty()) {
                w *= 0.25;
            } else if (l.graphemes.size() > 1 || l.phonemes.size() > 1) {
                w *= 0.5;
            }
            w *= std::pow(1.0 / 7.0, static_cast<double>(std::max(l.graphemes.size(), l.phonemes.size())));
        }
        if (w > best) {
            best = w;
            best_count = 1;
            argmax = c;
        } else if (w == best) {
            ++best_count;
        }
    }
    CHECK(best_count == 1);
    CHECK(argmax == expected);
}

TEST_CASE("alignment invariants") {
    SUBCASE("single symbol entry is one 1:1 link") {
        Lexicon lex;
        lex.add("a", {"A"});
        const auto r = train_alignment(lex);
        REQUIRE(r.alignments[0].links.size() == 1);
        CHECK(r.alignments[0].links[0] == Link{{"a"}, {"A"}});
    }
    SUBCASE("every trained alignment spells both sides, with and without EM") {
        const auto lex = testing::toy_lexicon(testing::toy_training_words());
        for (std::size_t iters : {0u, 1u, 10u}) {
            const auto r = train_alignment(lex, {.em_iterations = iters});
            CHECK(r.skipped.empty());
            CHECK(r.alignments.size() == lex.size());
            for (const auto& a : r.alignments) CHECK(reproduces(a));
        }
        const auto d = testing::dialect_fixture();
        for (const auto& a : train_alignment(d.training).alignments) CHECK(reproduces(a));
    }
    SUBCASE("entries with unalignable lengths are skipped and reported") {
        Lexicon lex;
        lex.add("ab", {"A", "B"});
        lex.add("x", {"P", "Q", "R"});
        const auto r = train_alignment(lex);
        CHECK(r.alignments.size() == 1);
        REQUIRE(r.skipped.size() == 1);
        CHECK(r.skipped[0].word == "x");
    }
    SUBCASE("empty lexicon") { CHECK_THROWS_AS(train_alignment(Lexicon{}), ValidationError); }
}

TEST_CASE("pair n-gram model") {
    const auto model = testing::toy_model();
    SUBCASE("probabilities over a history sum to one") {
        std::mt19937_64 gen(4);
        std::uniform_int_distribution<int> tok(1, static_cast<int>(model.vocabulary_size()) - 1);
        CHECK(history_mass(model, {}) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(history_mass(model, {PairNgramModel::kBegin}) == doctest::Approx(1.0).epsilon(1e-9));
        for (int trial = 0; trial < 50; ++trial) {
            const std::vector<int> h{PairNgramModel::kBegin, tok(gen)};
            CHECK(std::abs(history_mass(model, h) - 1.0) <= 1e-9);
        }
    }
    SUBCASE("unseen tokens keep nonzero mass") {
        CHECK(model.prob(-1, std::vector<int>{PairNgramModel::kBegin}) > 0.0);
        const int a = model.token_of({{"a"}, {"A"}});
        const int x = model.token_of({{"x"}, {"K", "S"}}) >= 0 ? model.token_of({{"x"}, {"K", "S"}}) : 2;
        REQUIRE(a >= 0);
        CHECK(model.prob(x, std::vector<int>{a, a}) > 0.0);
    }
    SUBCASE("single pair, order 1: its tokens are the most likely") {
        Lexicon lex;
        lex.add("ab", {"A", "B"});
        const auto m = train_pair_ngram(train_alignment(lex).alignments, 1);
        const int a = m.token_of({{"a"}, {"A"}});
        const int b = m.token_of({{"b"}, {"B"}});
        CHECK(m.prob(a, {}) > m.prob(-1, {}));
        CHECK(m.prob(b, {}) > m.prob(-1, {}));
    }
    SUBCASE("JSON persistence is exact") {
        const auto back = PairNgramModel::from_json(model.to_json());
        CHECK(back.to_json() == model.to_json());
        CHECK(back.ngram_counts() == model.ngram_counts());
        for (std::size_t t = 1; t < model.vocabulary_size(); ++t) {
            CHECK(back.prob(static_cast<int>(t), std::vector<int>{0}) ==
                  model.prob(static_cast<int>(t), std::vector<int>{0}));
        }
        CHECK_THROWS_AS(PairNgramModel::from_json("{\"format\": \"other\"}"), ValidationError);
        CHECK_THROWS_AS(PairNgramModel::from_json("not json"), ValidationError);
    }
    SUBCASE("training does not depend on lexicon insertion order") {
        auto words = testing::toy_training_words();
        std::reverse(words.begin(), words.end());
        const auto other = train_pair_ngram(train_alignment(testing::toy_lexicon(words)).alignments, 3);
        CHECK(other.to_json() == model.to_json());
    }
}

TEST_CASE("g2p decoding") {
    const auto model = testing::toy_model();
    SUBCASE("toy model spells 'ab' as A B") {
        Lexicon lex;
        lex.add("a", {"A"});
        lex.add("b", {"B"});
        lex.add("ab", {"A", "B"});
        lex.add("ba", {"B", "A"});
        const auto m = train_pair_ngram(train_alignment(lex).alignments, 2);
        CHECK(g2p::g2p({"a", "b"}, m) == Phonemes{"A", "B"});
        const auto oracle = testing::exhaustive_decode({"a", "b"}, m);
        CHECK(oracle.phonemes == Phonemes{"A", "B"});
    }
    SUBCASE("held-out words of the toy orthography") {
        for (const auto& w : testing::toy_heldout_words()) {
            CHECK_MESSAGE(g2p::g2p(graphemes_of(w), model) == testing::toy_pronunciation(w), w);
        }
    }
    SUBCASE("lexicon takes precedence") {
        Lexicon lex;
        lex.add("bad", {"Z", "Z"});
        CHECK(g2p::g2p(graphemes_of("bad"), model, 32, &lex) == Phonemes{"Z", "Z"});
        CHECK(g2p::g2p(graphemes_of("Bad"), model, 32, &lex) == Phonemes{"Z", "Z"});
    }
    SUBCASE("unseen grapheme is named") {
        try {
            g2p::g2p(graphemes_of("bøb"), model);
            FAIL("expected NoPronunciationError");
        } catch (const NoPronunciationError& e) {
            CHECK(e.graphemes() == std::vector<std::string>{"ø"});
            CHECK(std::string(e.what()).find("ø") != std::string::npos);
        }
    }
    SUBCASE("beam search matches exhaustive decoding") {
        std::mt19937_64 gen(8);
        const std::string letters = "abdeikmnoprstux";
        std::uniform_int_distribution<std::size_t> pick(0, letters.size() - 1);
        std::uniform_int_distribution<std::size_t> len(1, 6);
        for (int trial = 0; trial < 60; ++trial) {
            std::string w;
            const auto n = len(gen);
            for (std::size_t i = 0; i < n; ++i) w += letters[pick(gen)];
            const auto oracle = testing::exhaustive_decode(graphemes_of(w), model);
            REQUIRE(oracle.found);
            const auto beam = decode(graphemes_of(w), model, 8);
            CHECK_MESSAGE(beam.phonemes == oracle.phonemes, w);
            CHECK(beam.logprob == oracle.logprob);
            CHECK(decode(graphemes_of(w), model, kUnboundedBeam).logprob == oracle.logprob);
        }
    }
    SUBCASE("beam must be positive") { CHECK_THROWS_AS(decode({"a"}, model, 0), ValidationError); }
}

TEST_CASE("normalize_text") {
    Lexicon lex;
    lex.add("a", {"A"});
    lex.add("b", {"B"});
    lex.add("ab", {"A", "B"});
    lex.add("ba", {"B", "A"});
    const auto m = train_pair_ngram(train_alignment(lex).alignments, 2);
    CHECK(normalize_text("ab ab", m) == "A B # A B");
    CHECK(normalize_text("", m).empty());
    CHECK(normalize_text("Ab, ba!", m) == "A B # B A");
    CHECK(normalize_text("ab ab", m) == normalize_text("ab ab", m));
    CHECK_THROWS_WITH_AS(normalize_text("ab aø", m), doctest::Contains("word 2"), ValidationError);
}

TEST_CASE("divergent spellings converge after normalization") {
    const auto fixture = testing::dialect_fixture();
    const auto model = train_pair_ngram(train_alignment(fixture.training).alignments, 3);
    CHECK(normalize_text("Schiitüüre", model) == normalize_text("schitüre", model));
    std::vector<std::string> a;
    std::vector<std::vector<std::string>> b;
    for (std::size_t i = 0; i < fixture.spelling_a.size(); ++i) {
        a.push_back(normalize_text(fixture.spelling_a[i], model));
        b.push_back({normalize_text(fixture.spelling_b[i], model)});
        CHECK(a.back() == b.back().front());
    }
    std::vector<std::vector<std::string>> raw_refs;
    for (const auto& s : fixture.spelling_b) raw_refs.push_back({s});
    CHECK(text::chrf(a, b).fscore >= text::chrf(fixture.spelling_a, raw_refs).fscore);
}

} // TEST_SUITE
