#include <gtest/gtest.h>

#include <cctype>

#include "ehrq/errors.hpp"
#include "ehrq/lexicon.hpp"
#include "ehrq/util.hpp"
#include "support.hpp"

namespace ehrq {
namespace {

bool word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Oracle: at each word start try every substring length, longest first,
// looking each candidate up directly.
std::vector<Annotation> brute_annotate(std::string_view q, const Lexicon& lex) {
    const std::string lower = to_lower(q);
    std::vector<Annotation> out;
    for (std::size_t i = 0; i < lower.size();) {
        if (!word(lower[i]) || (i > 0 && word(lower[i - 1]))) {
            ++i;
            continue;
        }
        std::size_t best = 0;
        for (std::size_t end = lower.size(); end > i && !best; --end) {
            if (end < lower.size() && word(lower[end]) && word(lower[end - 1])) continue;
            if (lex.find(lower.substr(i, end - i))) best = end;
        }
        if (!best) {
            ++i;
            continue;
        }
        const auto* e = lex.find(lower.substr(i, best - i));
        out.push_back({i, best, std::string(q.substr(i, best - i)), e->canonical, e->domain});
        i = best;
    }
    return out;
}

TEST(Normalize, EverySynonymMapsToItsCanonical) {
    for (const auto& e : testing::lexicon().entries()) {
        EXPECT_EQ(normalize(e.canonical, testing::lexicon()), e.canonical);
        for (const auto& s : e.synonyms) EXPECT_EQ(normalize(s, testing::lexicon()), e.canonical) << s;
    }
}

TEST(Normalize, RbcIsRedBloodCell) {
    EXPECT_EQ(normalize("rbc", testing::lexicon()), "red blood cell");
    EXPECT_EQ(normalize("  RBC ", testing::lexicon()), "red blood cell");
    EXPECT_EQ(normalize("Red   Blood\tCells", testing::lexicon()), "red blood cell");
}

TEST(Normalize, UnknownTermsAreLowercased) {
    EXPECT_EQ(normalize("Zebra Count", testing::lexicon()), "zebra count");
}

TEST(Normalize, IdempotentOnRandomStrings) {
    Rng rng(1);
    const std::string alphabet = "abcdefghijklmnopqrstuvwxyzABC  -'0123";
    std::vector<std::string> pool;
    for (const auto& e : testing::lexicon().entries()) {
        pool.push_back(e.canonical);
        for (const auto& s : e.synonyms) pool.push_back(s);
    }
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        if (rng.chance(0.3)) s = rng.pick(pool);
        const auto n = rng.uniform_int(0, 12);
        for (std::int64_t j = 0; j < n; ++j) s += alphabet[rng.index(alphabet.size())];
        const std::string once = normalize(s, testing::lexicon());
        EXPECT_EQ(normalize(once, testing::lexicon()), once) << s;
    }
}

TEST(Lexicon, RejectsUppercaseCanonical) {
    EXPECT_THROW(Lexicon({{"Red Cell", {}, TermDomain::labtest}}), ValidationError);
}

TEST(Lexicon, RejectsSharedSurfaceForm) {
    EXPECT_THROW(Lexicon({{"a", {"x"}, TermDomain::labtest}, {"b", {"x"}, TermDomain::drug}}), ValidationError);
}

TEST(Annotate, PrefersLongestMatchOnWordBoundaries) {
    const Lexicon lex({{"red blood cell", {"rbc", "red blood cells"}, TermDomain::labtest},
                       {"blood culture", {}, TermDomain::microbiology}});
    const auto a = annotate("Were RBCs or red blood cells drawn? rbc, then blood culture.", lex);
    ASSERT_EQ(a.size(), 3u);
    EXPECT_EQ(a[0].surface, "red blood cells");
    EXPECT_EQ(a[1].surface, "rbc");
    EXPECT_EQ(a[1].canonical, "red blood cell");
    EXPECT_EQ(a[2].canonical, "blood culture");
    EXPECT_EQ(a[2].domain, TermDomain::microbiology);
}

TEST(Annotate, OffsetsPointIntoTheQuestion) {
    const std::string q = "What was the last RBC of patient 1?";
    for (const auto& a : annotate(q, testing::lexicon())) EXPECT_EQ(q.substr(a.start, a.end - a.start), a.surface);
}

TEST(Annotate, MatchesBruteForceOnRandomQuestions) {
    std::vector<std::string> pool = {"what", "was", "the", "of", "patient", "10001", "in", "level", "blood", "x-ray", ","};
    for (const auto& e : testing::lexicon().entries()) {
        pool.push_back(e.canonical);
        for (const auto& s : e.synonyms) pool.push_back(s);
    }
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        std::string q;
        const auto n = rng.uniform_int(1, 10);
        for (std::int64_t j = 0; j < n; ++j) {
            std::string w = rng.pick(pool);
            if (rng.chance(0.2)) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
            q += (j && rng.chance(0.9) ? " " : "") + w;
        }
        EXPECT_EQ(annotate(q, testing::lexicon()), brute_annotate(q, testing::lexicon())) << q;
    }
}

TEST(MapToValue, FindsLabLabels) {
    const auto refs = map_to_value("red blood cell", TermDomain::labtest, testing::fixture_db());
    ASSERT_FALSE(refs.empty());
    EXPECT_EQ(refs[0].table, "d_labitems");
    EXPECT_EQ(to_lower(refs[0].value), "red blood cell");
}

TEST(MapToValue, FindingsUseTheVocabulary) {
    const auto refs = map_to_value("effusion", TermDomain::finding, testing::fixture_db());
    ASSERT_FALSE(refs.empty());
    EXPECT_EQ(refs[0], (ValueRef{"findings_vocabulary", "term", "effusion"}));
}

TEST(MapToValue, EveryCanonicalResolvesOnTheFixture) {
    for (const auto& e : testing::lexicon().entries())
        EXPECT_FALSE(map_to_value(e.canonical, e.domain, testing::fixture_db()).empty()) << e.canonical;
}

}  // namespace
}  // namespace ehrq
