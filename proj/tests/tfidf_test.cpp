#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "qclass/random.hpp"
#include "qclass/tfidf.hpp"

using namespace qclass;

namespace {

using Doc = std::vector<std::string>;

}  // namespace

TEST(Bigrams, Examples) {
  const Doc abc{"a", "b", "c"};
  EXPECT_EQ(extract_bigrams(abc), (std::vector<Bigram>{{"a", "b"}, {"b", "c"}}));
  const Doc a{"a"};
  EXPECT_TRUE(extract_bigrams(a).empty());
  const Doc aaa{"a", "a", "a"};
  EXPECT_EQ(extract_bigrams(aaa), (std::vector<Bigram>{{"a", "a"}, {"a", "a"}}));
  EXPECT_TRUE(extract_bigrams(Doc{}).empty());
}

TEST(Tfidf, SmoothedIdf) {
  const std::vector<Doc> docs{{"a", "b"}, {"c", "d"}, {"c", "d"}};
  const auto v = fit_tfidf(docs);
  EXPECT_EQ(v.doc_count(), 3u);
  EXPECT_NEAR(v.idf()[*v.column({"a", "b"})], std::log(4.0 / 2.0) + 1.0, 1e-15);
  EXPECT_NEAR(v.idf()[*v.column({"c", "d"})], std::log(4.0 / 3.0) + 1.0, 1e-15);
}

TEST(Tfidf, BigramInEveryDocHasUnitIdf) {
  const std::vector<Doc> docs{{"x", "y"}, {"x", "y", "z"}, {"q", "x", "y"}};
  const auto v = fit_tfidf(docs);
  EXPECT_DOUBLE_EQ(v.idf()[*v.column({"x", "y"})], 1.0);
}

TEST(Tfidf, ColumnsAreLexicographic) {
  const std::vector<Doc> docs{{"b", "a", "c"}, {"a", "b"}};
  const auto v = fit_tfidf(docs);
  EXPECT_EQ(v.dimension(), 3u);
  EXPECT_EQ(*v.column({"a", "b"}), 0u);
  EXPECT_EQ(*v.column({"a", "c"}), 1u);
  EXPECT_EQ(*v.column({"b", "a"}), 2u);
  EXPECT_FALSE(v.column({"c", "a"}).has_value());
}

TEST(Tfidf, HandComputedThreeDocs) {
  // docs: "a b b", "a b", "b c"
  const std::vector<Doc> docs{{"a", "b", "b"}, {"a", "b"}, {"b", "c"}};
  const auto v = fit_tfidf(docs);
  const double idf_ab = std::log(4.0 / 3.0) + 1.0;
  const double idf_bb = std::log(4.0 / 2.0) + 1.0;
  const double norm = std::sqrt(idf_ab * idf_ab + idf_bb * idf_bb);
  const auto x = v.transform(docs[0]);
  EXPECT_NEAR(x.at(*v.column({"a", "b"})), idf_ab / norm, 1e-12);
  EXPECT_NEAR(x.at(*v.column({"b", "b"})), idf_bb / norm, 1e-12);
  EXPECT_EQ(x.at(*v.column({"b", "c"})), 0.0);
  EXPECT_NEAR(x.norm(), 1.0, 1e-12);
}

TEST(Tfidf, RepeatedBigramCountsTwice) {
  const std::vector<Doc> docs{{"a", "b", "a", "b", "c", "d"}, {"c", "d"}};
  const auto v = fit_tfidf(docs);
  const auto x = v.transform(docs[0]);
  const double ab = 2.0 * (std::log(3.0 / 2.0) + 1.0);
  const double ba = std::log(3.0 / 2.0) + 1.0;
  const double bc = std::log(3.0 / 2.0) + 1.0;
  const double cd = 1.0;
  const double norm = std::sqrt(ab * ab + ba * ba + bc * bc + cd * cd);
  EXPECT_NEAR(x.at(*v.column({"a", "b"})), ab / norm, 1e-12);
  EXPECT_NEAR(x.at(*v.column({"c", "d"})), cd / norm, 1e-12);
}

TEST(Tfidf, UnknownBigramsAndZeroVector) {
  const std::vector<Doc> docs{{"a", "b"}, {"c", "d"}};
  const auto v = fit_tfidf(docs);
  const auto zero = v.transform(Doc{"x", "y", "z"});
  EXPECT_TRUE(zero.indices.empty());
  EXPECT_EQ(zero.dim, 2u);
  EXPECT_EQ(zero.norm(), 0.0);
  const auto single = v.transform(Doc{"q", "a", "b"});
  ASSERT_EQ(single.indices.size(), 1u);
  EXPECT_DOUBLE_EQ(single.values[0], 1.0);
}

TEST(Tfidf, EmptyFitIsError) { EXPECT_THROW(fit_tfidf(std::vector<Doc>{}), DataError); }

TEST(Tfidf, SaveParseRoundTrip) {
  const std::vector<Doc> docs{{"কে", "তুমি", "?"}, {"তুমি", "কোথায়"}, {"a", "b", "a", "b"}};
  const auto v = fit_tfidf(docs);
  std::stringstream s;
  v.save(s);
  const auto back = TfidfVectorizer::parse(s);
  EXPECT_TRUE(back == v);
  for (const auto& d : docs) EXPECT_EQ(back.transform(d), v.transform(d));
}

TEST(Tfidf, ParseRejectsCorruption) {
  std::istringstream none("");
  EXPECT_THROW(TfidfVectorizer::parse(none), DataError);
  std::istringstream bad_header("docs\t3\n");
  EXPECT_THROW(TfidfVectorizer::parse(bad_header), DataError);
  std::istringstream gap("doc_count\t2\na\x1f" "b\t0\t1.5\nc\x1f" "d\t2\t1.0\n");
  EXPECT_THROW(TfidfVectorizer::parse(gap), DataError);
  std::istringstream dup("doc_count\t2\na\x1f" "b\t0\t1.5\na\x1f" "b\t1\t1.0\n");
  EXPECT_THROW(TfidfVectorizer::parse(dup), DataError);
  std::istringstream no_sep("doc_count\t2\nab\t0\t1.5\n");
  EXPECT_THROW(TfidfVectorizer::parse(no_sep), DataError);
}

TEST(TfidfProperty, NormsAndDimension) {
  Rng rng(6);
  const std::vector<std::string> alphabet{"a", "b", "c", "d", "e", "f"};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Doc> docs(1 + rng.below(10));
    for (auto& d : docs) {
      d.resize(rng.below(8));
      for (auto& t : d) t = alphabet[rng.below(alphabet.size())];
    }
    const auto v = fit_tfidf(docs);
    std::set<Bigram> unique;
    for (const auto& d : docs) {
      for (const auto& g : extract_bigrams(d)) unique.insert(g);
    }
    EXPECT_EQ(v.dimension(), unique.size());
    for (const auto& d : docs) {
      const auto x = v.transform(d);
      EXPECT_EQ(x.dim, v.dimension());
      EXPECT_TRUE(std::is_sorted(x.indices.begin(), x.indices.end()));
      if (d.size() >= 2) {
        EXPECT_NEAR(x.norm(), 1.0, 1e-12);
      } else {
        EXPECT_EQ(x.norm(), 0.0);
      }
      for (double w : x.values) EXPECT_GT(w, 0.0);
    }
    for (double w : v.idf()) EXPECT_GE(w, 1.0);
  }
}
