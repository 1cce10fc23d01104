#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace anmt {

using TokenLines = std::vector<std::vector<std::string>>;

inline std::string format_fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

inline void lowercase_tokens(TokenLines& lines) {
  for (auto& line : lines)
    for (auto& tok : line)
      for (char& c : tok)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
}

/// Pooled modified n-gram counts for orders 1..4 plus the length totals;
/// additive across sentences, which is what makes bootstrap resampling cheap.
struct BleuStats {
  std::array<long, 4> correct{};
  std::array<long, 4> total{};
  long hyp_len = 0;
  long ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int i = 0; i < 4; ++i) {
      correct[static_cast<size_t>(i)] += o.correct[static_cast<size_t>(i)];
      total[static_cast<size_t>(i)] += o.total[static_cast<size_t>(i)];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

namespace detail {

inline std::string ngram_key(const std::vector<std::string>& toks, size_t start, size_t n) {
  std::string key;
  for (size_t k = 0; k < n; ++k) {
    if (k) key += '\x1f';
    key += toks[start + k];
  }
  return key;
}

}  // namespace detail

inline BleuStats sentence_bleu_stats(const std::vector<std::string>& hyp,
                                     const std::vector<std::string>& ref) {
  BleuStats s;
  s.hyp_len = static_cast<long>(hyp.size());
  s.ref_len = static_cast<long>(ref.size());
  for (size_t n = 1; n <= 4; ++n) {
    if (hyp.size() < n) break;
    std::unordered_map<std::string, long> ref_counts;
    if (ref.size() >= n)
      for (size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[detail::ngram_key(ref, i, n)];
    std::unordered_map<std::string, long> hyp_counts;
    for (size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[detail::ngram_key(hyp, i, n)];
    long correct = 0;
    for (const auto& [key, count] : hyp_counts) {
      auto it = ref_counts.find(key);
      if (it != ref_counts.end()) correct += std::min(count, it->second);
    }
    s.correct[n - 1] = correct;
    s.total[n - 1] = static_cast<long>(hyp.size() - n + 1);
  }
  return s;
}

/// Corpus BLEU in [0, 100]: geometric mean of the modified precisions times
/// the brevity penalty. Orders with no n-grams at all (short corpora) drop
/// out of the mean; a zero precision on a populated order gives 0.
inline double bleu_from_stats(const BleuStats& s) {
  double log_sum = 0;
  int orders = 0;
  for (int n = 0; n < 4; ++n) {
    if (s.total[static_cast<size_t>(n)] == 0) continue;
    if (s.correct[static_cast<size_t>(n)] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(s.correct[static_cast<size_t>(n)]) /
                        static_cast<double>(s.total[static_cast<size_t>(n)]));
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double precision = std::exp(log_sum / orders);
  const double bp = s.hyp_len >= s.ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len));
  return 100.0 * bp * precision;
}

inline BleuStats corpus_bleu_stats(const TokenLines& hyps, const TokenLines& refs) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("hypothesis/reference line counts differ: " +
                                std::to_string(hyps.size()) + " vs " + std::to_string(refs.size()));
  if (hyps.empty()) throw std::invalid_argument("empty evaluation corpus");
  BleuStats s;
  for (size_t i = 0; i < hyps.size(); ++i) s += sentence_bleu_stats(hyps[i], refs[i]);
  return s;
}

inline double bleu_corpus(const TokenLines& hyps, const TokenLines& refs) {
  return bleu_from_stats(corpus_bleu_stats(hyps, refs));
}

inline long levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<long> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<long>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<long>(i);
    for (size_t j = 1; j <= m; ++j) {
      const long sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

constexpr long kMaxShiftLen = 10;
constexpr long kMaxShiftRounds = 10;

/// Translation-edit-rate edit count for one sentence: greedy block shifts
/// (each costing one edit) while they reduce the remaining word-level
/// edit distance, then the residual distance itself. A block is only
/// shiftable if it appears contiguously in the reference.
inline long sentence_ter_edits(std::vector<std::string> hyp, const std::vector<std::string>& ref) {
  long shifts = 0;
  for (long round = 0; round < kMaxShiftRounds; ++round) {
    const long base = levenshtein(hyp, ref);
    if (base == 0) break;
    long best_gain = 0;
    std::vector<std::string> best;
    const long n = static_cast<long>(hyp.size());
    for (long i = 0; i < n; ++i) {
      for (long len = 1; len <= std::min(kMaxShiftLen, n - i); ++len) {
        const auto span_begin = hyp.begin() + i;
        const auto span_end = span_begin + len;
        // A block absent from the reference cannot help; neither can any
        // longer block extending it.
        if (std::search(ref.begin(), ref.end(), span_begin, span_end) == ref.end()) break;
        std::vector<std::string> rest;
        rest.reserve(hyp.size() - static_cast<size_t>(len));
        rest.insert(rest.end(), hyp.begin(), span_begin);
        rest.insert(rest.end(), span_end, hyp.end());
        for (long j = 0; j <= static_cast<long>(rest.size()); ++j) {
          if (j == i) continue;
          std::vector<std::string> moved;
          moved.reserve(hyp.size());
          moved.insert(moved.end(), rest.begin(), rest.begin() + j);
          moved.insert(moved.end(), span_begin, span_end);
          moved.insert(moved.end(), rest.begin() + j, rest.end());
          const long gain = base - levenshtein(moved, ref);
          if (gain > best_gain) {
            best_gain = gain;
            best = std::move(moved);
          }
        }
      }
    }
    if (best_gain < 1) break;
    hyp = std::move(best);
    ++shifts;
  }
  return shifts + levenshtein(hyp, ref);
}

/// Corpus TER in percent: total edits over total reference length.
inline double ter_corpus(const TokenLines& hyps, const TokenLines& refs) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("hypothesis/reference line counts differ: " +
                                std::to_string(hyps.size()) + " vs " + std::to_string(refs.size()));
  if (hyps.empty()) throw std::invalid_argument("empty evaluation corpus");
  long edits = 0;
  long ref_tokens = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty())
      throw std::invalid_argument("reference sentence " + std::to_string(i + 1) + " is empty");
    edits += sentence_ter_edits(hyps[i], refs[i]);
    ref_tokens += static_cast<long>(refs[i].size());
  }
  return 100.0 * static_cast<double>(edits) / static_cast<double>(ref_tokens);
}

struct BootstrapResult {
  double bleu_a = 0;
  double bleu_b = 0;
  double p_value = 1.0;  // probability the observed winner fails to win a resample
};

/// Paired bootstrap over sentences: both systems are rescored on the same
/// resampled index multiset; the p-value is the fraction of resamples where
/// the full-corpus winner does not strictly beat the loser. Equal corpus
/// scores short-circuit to p = 1.
inline BootstrapResult bootstrap_significance(const TokenLines& hyp_a, const TokenLines& hyp_b,
                                              const TokenLines& refs, long samples, uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("bootstrap needs at least one sample");
  if (hyp_a.size() != refs.size() || hyp_b.size() != refs.size())
    throw std::invalid_argument("bootstrap inputs must have equal line counts");
  if (refs.empty()) throw std::invalid_argument("empty evaluation corpus");
  const size_t n = refs.size();
  std::vector<BleuStats> stats_a(n), stats_b(n);
  BleuStats all_a, all_b;
  for (size_t i = 0; i < n; ++i) {
    stats_a[i] = sentence_bleu_stats(hyp_a[i], refs[i]);
    stats_b[i] = sentence_bleu_stats(hyp_b[i], refs[i]);
    all_a += stats_a[i];
    all_b += stats_b[i];
  }
  BootstrapResult out;
  out.bleu_a = bleu_from_stats(all_a);
  out.bleu_b = bleu_from_stats(all_b);
  if (out.bleu_a == out.bleu_b) {
    out.p_value = 1.0;
    return out;
  }
  const std::vector<BleuStats>& winner = out.bleu_a > out.bleu_b ? stats_a : stats_b;
  const std::vector<BleuStats>& loser = out.bleu_a > out.bleu_b ? stats_b : stats_a;
  std::mt19937_64 rng(seed);
  long misses = 0;
  for (long s = 0; s < samples; ++s) {
    BleuStats w, l;
    for (size_t k = 0; k < n; ++k) {
      const size_t idx = static_cast<size_t>(rng() % n);
      w += winner[idx];
      l += loser[idx];
    }
    if (bleu_from_stats(w) <= bleu_from_stats(l)) ++misses;
  }
  out.p_value = static_cast<double>(misses) / static_cast<double>(samples);
  return out;
}

struct LengthBucket {
  long lo = 0;
  long hi = 0;
  long count = 0;
  double bleu = 0;
};

/// Groups sentences by source length into [1,w], [w+1,2w], ... and scores
/// each bucket as its own corpus. Empty buckets are omitted.
inline std::vector<LengthBucket> length_bucket_report(const TokenLines& hyps, const TokenLines& refs,
                                                      const TokenLines& sources,
                                                      long bucket_width = 10) {
  if (bucket_width < 1) throw std::invalid_argument("bucket width must be positive");
  if (hyps.size() != refs.size() || sources.size() != refs.size())
    throw std::invalid_argument("hypothesis/reference/source line counts differ");
  std::map<long, std::pair<long, BleuStats>> grouped;
  for (size_t i = 0; i < hyps.size(); ++i) {
    const long len = static_cast<long>(sources[i].size());
    const long idx = len <= 0 ? 0 : (len - 1) / bucket_width;
    auto& slot = grouped[idx];
    slot.first += 1;
    slot.second += sentence_bleu_stats(hyps[i], refs[i]);
  }
  std::vector<LengthBucket> out;
  for (const auto& [idx, slot] : grouped) {
    LengthBucket b;
    b.lo = idx * bucket_width + 1;
    b.hi = (idx + 1) * bucket_width;
    b.count = slot.first;
    b.bleu = bleu_from_stats(slot.second);
    out.push_back(b);
  }
  return out;
}

inline void write_bucket_csv(const std::vector<LengthBucket>& buckets, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << "bucket_lo,bucket_hi,count,bleu\n";
  for (const LengthBucket& b : buckets)
    out << b.lo << ',' << b.hi << ',' << b.count << ',' << format_fixed(b.bleu, 2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Standalone SVG line chart of BLEU against source-length bucket.
inline void write_bucket_svg(const std::vector<LengthBucket>& buckets, const std::string& path) {
  const int width = 640, height = 400;
  const int ml = 60, mr = 20, mt = 30, mb = 50;
  const int pw = width - ml - mr, ph = height - mt - mb;
  const size_t n = buckets.size();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  out << "  <text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"14\">BLEU by source length</text>\n";
  // Axes.
  out << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";
  for (int v = 0; v <= 100; v += 20) {
    const double y = mt + ph - ph * v / 100.0;
    out << "  <line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n";
    out << "  <text x=\"" << ml - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << v << "</text>\n";
  }
  auto x_at = [&](size_t i) {
    return n == 1 ? ml + pw / 2.0 : ml + pw * (static_cast<double>(i) / static_cast<double>(n - 1));
  };
  auto y_at = [&](double bleu) { return mt + ph - ph * bleu / 100.0; };
  for (size_t i = 0; i < n; ++i) {
    const double x = x_at(i);
    out << "  <line x1=\"" << x << "\" y1=\"" << mt + ph << "\" x2=\"" << x << "\" y2=\""
        << mt + ph + 4 << "\" stroke=\"black\"/>\n";
    out << "  <text x=\"" << x << "\" y=\"" << mt + ph + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << buckets[i].lo
        << "-" << buckets[i].hi << "</text>\n";
  }
  out << "  <text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">source length</text>\n";
  if (n > 1) {
    out << "  <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < n; ++i) {
      if (i) out << ' ';
      out << format_fixed(x_at(i), 1) << ',' << format_fixed(y_at(buckets[i].bleu), 1);
    }
    out << "\"/>\n";
  }
  for (size_t i = 0; i < n; ++i)
    out << "  <circle cx=\"" << format_fixed(x_at(i), 1) << "\" cy=\""
        << format_fixed(y_at(buckets[i].bleu), 1) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace anmt
