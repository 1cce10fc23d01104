#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "anmt/evaluation.hpp"

using namespace anmt;

namespace {

TokenLines lines_of(std::initializer_list<const char*> raw) {
  TokenLines out;
  for (const char* l : raw) {
    std::istringstream iss(l);
    std::vector<std::string> toks;
    std::string t;
    while (iss >> t) toks.push_back(t);
    out.push_back(std::move(toks));
  }
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "anmt_eval_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("format_fixed renders rounded decimals") {
  CHECK(format_fixed(100.0, 2) == "100.00");
  CHECK(format_fixed(19.946, 2) == "19.95");
  CHECK(format_fixed(0.0, 4) == "0.0000");
}

TEST_CASE("lowercase_tokens folds ASCII only") {
  TokenLines lines = lines_of({"The CAT", "mixedCase"});
  lines[0].push_back("\xc3\x9c");  // a non-ASCII byte pair stays untouched
  lowercase_tokens(lines);
  CHECK(lines[0][0] == "the");
  CHECK(lines[0][1] == "cat");
  CHECK(lines[0][2] == "\xc3\x9c");
  CHECK(lines[1][0] == "mixedcase");
}

TEST_CASE("identical corpora score BLEU 100") {
  const TokenLines text = lines_of({"the cat sat on the mat", "a b c d e"});
  CHECK(bleu_corpus(text, text) == Catch::Approx(100.0));
  // short sentences skip the impossible orders instead of zeroing out
  const TokenLines tiny = lines_of({"a b"});
  CHECK(bleu_corpus(tiny, tiny) == Catch::Approx(100.0));
}

TEST_CASE("disjoint corpora score BLEU 0") {
  CHECK(bleu_corpus(lines_of({"x y z"}), lines_of({"a b c"})) == 0.0);
}

TEST_CASE("the classic clipping case gives unigram precision 2/7") {
  const BleuStats s = sentence_bleu_stats({"the", "the", "the", "the", "the", "the", "the"},
                                          {"the", "cat", "is", "on", "the", "mat"});
  CHECK(s.correct[0] == 2);
  CHECK(s.total[0] == 7);
  CHECK(s.correct[1] == 0);
  // a populated order with zero matches zeroes the whole score
  CHECK(bleu_from_stats(s) == 0.0);
}

TEST_CASE("brevity penalty fires only when the hypothesis is short") {
  // hyp 3 tokens vs ref 4: precisions are perfect prefixes, bp = e^(1 - 4/3)
  const TokenLines hyp = lines_of({"a b c"});
  const TokenLines ref = lines_of({"a b c d"});
  const BleuStats s = corpus_bleu_stats(hyp, ref);
  const double precision =
      std::exp((std::log(3.0 / 3.0) + std::log(2.0 / 2.0) + std::log(1.0 / 1.0)) / 3.0);
  const double expected = 100.0 * std::exp(1.0 - 4.0 / 3.0) * precision;
  CHECK(bleu_from_stats(s) == Catch::Approx(expected));

  // longer hypotheses pay through precision, not bp: 5 tokens vs 4 keeps a
  // match at every order, so nothing zeroes out
  const BleuStats l = corpus_bleu_stats(lines_of({"a b c d e"}), lines_of({"a b c d"}));
  CHECK(bleu_from_stats(l) < 100.0);
  CHECK(bleu_from_stats(l) ==
        Catch::Approx(100.0 * std::exp((std::log(4.0 / 5.0) + std::log(3.0 / 4.0) +
                                        std::log(2.0 / 3.0) + std::log(1.0 / 2.0)) / 4.0)));
}

TEST_CASE("corpus BLEU pools counts instead of averaging sentences") {
  const TokenLines hyp = lines_of({"a b c d e", "x x"});
  const TokenLines ref = lines_of({"a b c d e", "y y"});
  BleuStats pooled;
  pooled += sentence_bleu_stats(hyp[0], ref[0]);
  pooled += sentence_bleu_stats(hyp[1], ref[1]);
  CHECK(bleu_corpus(hyp, ref) == Catch::Approx(bleu_from_stats(pooled)));
  CHECK_THROWS_AS(bleu_corpus(hyp, lines_of({"a"})), std::invalid_argument);
  CHECK_THROWS_AS(bleu_corpus({}, {}), std::invalid_argument);
}

TEST_CASE("word-level levenshtein distance") {
  CHECK(levenshtein({"a", "b"}, {"a", "b"}) == 0);
  CHECK(levenshtein({"a", "x", "c"}, {"a", "b", "c"}) == 1);
  CHECK(levenshtein({}, {"a", "b"}) == 2);
  CHECK(levenshtein({"a", "b"}, {}) == 2);
  CHECK(levenshtein({"k", "i", "t", "t", "e", "n"}, {"s", "i", "t", "t", "i", "n", "g"}) == 3);
}

TEST_CASE("TER basics") {
  const TokenLines ref5 = lines_of({"a b c d e"});
  CHECK(ter_corpus(ref5, ref5) == 0.0);
  CHECK(ter_corpus(lines_of({"a b x d e"}), ref5) == Catch::Approx(20.0));
  // a pure insertion and a pure deletion each cost one edit
  CHECK(ter_corpus(lines_of({"a b c d"}), ref5) == Catch::Approx(20.0));
  CHECK(ter_corpus(lines_of({"a b c d e f"}), ref5) == Catch::Approx(20.0));
}

TEST_CASE("a block shift costs one edit instead of many") {
  // without shifts "b a c d" vs "a b c d" needs 2 substitutions; one shift fixes it
  CHECK(sentence_ter_edits({"b", "a", "c", "d"}, {"a", "b", "c", "d"}) == 1);
  CHECK(ter_corpus(lines_of({"b a c d"}), lines_of({"a b c d"})) == Catch::Approx(25.0));

  // moving a two-word block is still a single edit
  CHECK(sentence_ter_edits({"c", "d", "a", "b"}, {"a", "b", "c", "d"}) == 1);

  // shifts only fire when they reduce the remaining edit distance
  CHECK(sentence_ter_edits({"x", "y"}, {"a", "b"}) == 2);
}

TEST_CASE("TER scales edits by the reference length") {
  // 1 edit over refs totalling 8 tokens
  const double ter =
      ter_corpus(lines_of({"b a c d", "e f g h"}), lines_of({"a b c d", "e f g h"}));
  CHECK(ter == Catch::Approx(100.0 * 1.0 / 8.0));
  CHECK_THROWS_AS(ter_corpus(lines_of({"a"}), lines_of({""})), std::invalid_argument);
  CHECK_THROWS_AS(ter_corpus(lines_of({"a", "b"}), lines_of({"a"})), std::invalid_argument);
}

TEST_CASE("bootstrap on identical systems reports p 1.0") {
  const TokenLines hyp = lines_of({"a b c", "d e f", "g h"});
  const TokenLines ref = lines_of({"a b c", "d x f", "g h"});
  const BootstrapResult r = bootstrap_significance(hyp, hyp, ref, 200, 5);
  CHECK(r.bleu_a == r.bleu_b);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("bootstrap on a dominated system reports p 0.0") {
  TokenLines refs, perfect, disjoint;
  for (int i = 0; i < 100; ++i) {
    std::vector<std::string> sentence = {"tok" + std::to_string(i), "a", "b", "c"};
    refs.push_back(sentence);
    perfect.push_back(sentence);
    disjoint.push_back({"zzz", "qqq", "rrr", "sss"});
  }
  const BootstrapResult r = bootstrap_significance(perfect, disjoint, refs, 1000, 7);
  CHECK(r.bleu_a == Catch::Approx(100.0));
  CHECK(r.bleu_b == 0.0);
  CHECK(r.p_value == 0.0);
}

TEST_CASE("bootstrap is deterministic per seed and matches a direct resampler") {
  const TokenLines refs = lines_of({"the cat sat on the mat", "a stitch in time saves nine",
                                    "many hands make light work", "actions speak louder than words",
                                    "the early bird catches the worm"});
  const TokenLines sys_a = lines_of({"the cat sat on the mat", "a stitch in time saves time",
                                     "many hands make heavy work", "actions speak louder than words",
                                     "an early bird catches the worm"});
  const TokenLines sys_b = lines_of({"a cat sat on a mat", "a stitch in time saves nine",
                                     "few hands make light work", "actions speak quieter than words",
                                     "the early bird eats the worm"});
  const long samples = 300;
  const uint64_t seed = 11;
  const BootstrapResult r1 = bootstrap_significance(sys_a, sys_b, refs, samples, seed);
  const BootstrapResult r2 = bootstrap_significance(sys_a, sys_b, refs, samples, seed);
  CHECK(r1.p_value == r2.p_value);
  CHECK(r1.p_value >= 0.0);
  CHECK(r1.p_value <= 1.0);

  // brute-force twin consuming the identical seed stream
  const size_t n = refs.size();
  std::vector<BleuStats> stats_a(n), stats_b(n);
  BleuStats all_a, all_b;
  for (size_t i = 0; i < n; ++i) {
    stats_a[i] = sentence_bleu_stats(sys_a[i], refs[i]);
    stats_b[i] = sentence_bleu_stats(sys_b[i], refs[i]);
    all_a += stats_a[i];
    all_b += stats_b[i];
  }
  REQUIRE(bleu_from_stats(all_a) != bleu_from_stats(all_b));
  const bool a_wins = bleu_from_stats(all_a) > bleu_from_stats(all_b);
  std::mt19937_64 rng(seed);
  long misses = 0;
  for (long s = 0; s < samples; ++s) {
    BleuStats w, l;
    for (size_t k = 0; k < n; ++k) {
      const size_t idx = static_cast<size_t>(rng() % n);
      w += a_wins ? stats_a[idx] : stats_b[idx];
      l += a_wins ? stats_b[idx] : stats_a[idx];
    }
    if (bleu_from_stats(w) <= bleu_from_stats(l)) ++misses;
  }
  CHECK(r1.p_value == Catch::Approx(static_cast<double>(misses) / samples));
}

TEST_CASE("single-width corpora land in one bucket scored like the corpus") {
  const TokenLines src = lines_of({"s s s s s", "t t t t t"});
  const TokenLines hyp = lines_of({"a b c d", "a b x d"});
  const TokenLines ref = lines_of({"a b c d", "a b c d"});
  const auto buckets = length_bucket_report(hyp, ref, src, 10);
  REQUIRE(buckets.size() == 1);
  CHECK(buckets[0].lo == 1);
  CHECK(buckets[0].hi == 10);
  CHECK(buckets[0].count == 2);
  CHECK(buckets[0].bleu == Catch::Approx(bleu_corpus(hyp, ref)));
}

TEST_CASE("buckets are split by source length and empty ones are omitted") {
  TokenLines src, hyp, ref;
  src.push_back(std::vector<std::string>(5, "s"));
  src.push_back(std::vector<std::string>(25, "s"));
  src.push_back(std::vector<std::string>(23, "s"));
  hyp = lines_of({"a b c d", "e f g h", "e f x h"});
  ref = lines_of({"a b c d", "e f g h", "e f g h"});
  const auto buckets = length_bucket_report(hyp, ref, src, 10);
  REQUIRE(buckets.size() == 2);
  CHECK(buckets[0].lo == 1);
  CHECK(buckets[0].count == 1);
  CHECK(buckets[1].lo == 21);
  CHECK(buckets[1].hi == 30);
  CHECK(buckets[1].count == 2);

  // each bucket scores exactly like its own little corpus
  CHECK(buckets[0].bleu == Catch::Approx(bleu_corpus({hyp[0]}, {ref[0]})));
  CHECK(buckets[1].bleu == Catch::Approx(bleu_corpus({hyp[1], hyp[2]}, {ref[1], ref[2]})));
}

TEST_CASE("bucket CSV is well formed") {
  const TokenLines src = lines_of({"s s s"});
  const TokenLines text = lines_of({"a b c"});
  const auto buckets = length_bucket_report(text, text, src, 10);
  const std::string path = temp_path("buckets.csv");
  write_bucket_csv(buckets, path);
  const std::string csv = slurp(path);
  CHECK(csv == "bucket_lo,bucket_hi,count,bleu\n1,10,1,100.00\n");
}

TEST_CASE("bucket SVG is well formed") {
  TokenLines src, text;
  src.push_back(std::vector<std::string>(3, "s"));
  src.push_back(std::vector<std::string>(14, "s"));
  text = lines_of({"a b c", "d e f"});
  const auto buckets = length_bucket_report(text, text, src, 10);
  const std::string path = temp_path("buckets.svg");
  write_bucket_svg(buckets, path);
  const std::string svg = slurp(path);
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("BLEU by source length") != std::string::npos);
  CHECK(svg.find("1-10") != std::string::npos);
  CHECK(svg.find("11-20") != std::string::npos);
}
