#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace anmt {

// Reserved ids shared by every vocabulary.
constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kBosId = 2;
constexpr int kEosId = 3;
constexpr int kNumSpecials = 4;

constexpr long kDefaultVocabCap = 50000;
constexpr long kDefaultMaxLen = 50;

inline const char* special_token(int id) {
  static const char* names[kNumSpecials] = {"<pad>", "<unk>", "<s>", "</s>"};
  return names[id];
}

/// Token <-> id map with four reserved specials at ids 0..3. Non-special
/// entries are the most frequent training tokens, capped (50,000 by
/// default), ranked by descending frequency with lexicographic tie-break.
class Vocabulary {
 public:
  Vocabulary() {
    for (int i = 0; i < kNumSpecials; ++i) {
      token_to_id_[special_token(i)] = i;
      id_to_token_.push_back(special_token(i));
    }
  }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<size_t>(id)];
  }

  int size() const { return static_cast<int>(id_to_token_.size()); }

  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }

  /// Appends a non-special entry; used by the builder and the file loader.
  void add(const std::string& token) {
    if (token_to_id_.count(token)) throw std::invalid_argument("duplicate vocabulary token: " + token);
    token_to_id_[token] = size();
    id_to_token_.push_back(token);
  }

  /// One token per line, line number = id - 4; specials are implicit.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
    for (int i = kNumSpecials; i < size(); ++i) out << id_to_token_[static_cast<size_t>(i)] << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      v.add(line);
    }
    return v;
  }

  uint64_t hash() const {
    // FNV-1a over entries, used as the checkpoint's vocab fingerprint.
    uint64_t h = 1469598103934665603ull;
    for (const std::string& t : id_to_token_) {
      for (char c : t) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
      }
      h ^= 0xff;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

inline std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

namespace detail {

inline bool valid_utf8(const std::string& s) {
  size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    int extra;
    if (c < 0x80) extra = 0;
    else if ((c >> 5) == 0x6) extra = 1;
    else if ((c >> 4) == 0xe) extra = 2;
    else if ((c >> 3) == 0x1e) extra = 3;
    else return false;
    if (i + static_cast<size_t>(extra) >= s.size() && extra > 0) return false;
    for (int k = 1; k <= extra; ++k)
      if ((static_cast<unsigned char>(s[i + static_cast<size_t>(k)]) >> 6) != 0x2) return false;
    i += static_cast<size_t>(extra) + 1;
  }
  return true;
}

}  // namespace detail

/// Reads a corpus file: one sentence per line, whitespace-separated tokens,
/// UTF-8. Undecodable bytes are reported with their line number.
inline std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<std::vector<std::string>> lines;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!detail::valid_utf8(line))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": invalid UTF-8");
    lines.push_back(tokenize(line));
  }
  return lines;
}

/// Most frequent `cap` tokens plus the four specials. Frequency ties break
/// lexicographically so builds are deterministic.
template <typename Sentences>
Vocabulary build_vocab(const Sentences& corpus, long cap = kDefaultVocabCap) {
  std::unordered_map<std::string, long> freq;
  bool any = false;
  for (const auto& sentence : corpus) {
    any = true;
    for (const std::string& tok : sentence) {
      bool reserved = false;
      for (int i = 0; i < kNumSpecials; ++i)
        if (tok == special_token(i)) reserved = true;
      if (!reserved) ++freq[tok];
    }
  }
  if (!any) throw std::runtime_error("empty training corpus");
  std::vector<std::pair<std::string, long>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<long>(ranked.size()) > cap) ranked.resize(static_cast<size_t>(cap));
  Vocabulary v;
  for (const auto& [tok, count] : ranked) v.add(tok);
  return v;
}

/// Unknown tokens map to UNK; a terminal EOS is always appended.
inline std::vector<int> encode_sentence(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const std::string& t : tokens) ids.push_back(vocab.id(t));
  ids.push_back(kEosId);
  return ids;
}

inline std::vector<std::string> decode_ids(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

/// One aligned sentence pair. Both sides carry their terminal EOS; trailing
/// PADs fill the row up to max_len once filter_and_pad has run.
struct SentencePair {
  std::vector<int> source_ids;
  std::vector<int> target_ids;

  long source_len() const { return true_len(source_ids); }
  long target_len() const { return true_len(target_ids); }

  static long true_len(const std::vector<int>& ids) {
    long n = 0;
    for (int id : ids)
      if (id != kPadId) ++n;
    return n;
  }
};

/// Pairs source line i with target line i and numericalizes both sides.
inline std::vector<SentencePair> load_parallel(const std::string& source_path,
                                               const std::string& target_path,
                                               const Vocabulary& source_vocab,
                                               const Vocabulary& target_vocab) {
  const auto src = read_token_lines(source_path);
  const auto tgt = read_token_lines(target_path);
  if (src.size() != tgt.size())
    throw std::runtime_error("line count mismatch: " + source_path + " has " +
                             std::to_string(src.size()) + " lines, " + target_path + " has " +
                             std::to_string(tgt.size()));
  std::vector<SentencePair> pairs;
  pairs.reserve(src.size());
  for (size_t i = 0; i < src.size(); ++i)
    pairs.push_back({encode_sentence(src[i], source_vocab), encode_sentence(tgt[i], target_vocab)});
  return pairs;
}

/// Training mode drops pairs whose stored length (tokens + EOS) exceeds
/// max_len; translation mode truncates over-length sources instead, keeping
/// the terminal EOS, and warns on stderr. Survivors get trailing PADs up to
/// exactly max_len.
inline std::vector<SentencePair> filter_and_pad(const std::vector<SentencePair>& pairs,
                                                long max_len = kDefaultMaxLen, bool training = true) {
  std::vector<SentencePair> out;
  out.reserve(pairs.size());
  for (const SentencePair& p : pairs) {
    SentencePair q = p;
    const long ls = static_cast<long>(q.source_ids.size());
    const long lt = static_cast<long>(q.target_ids.size());
    if (training) {
      if (ls > max_len || lt > max_len) continue;
    } else {
      if (ls > max_len) {
        std::cerr << "warning: truncating source sentence of length " << ls << " to " << max_len
                  << " tokens\n";
        q.source_ids.resize(static_cast<size_t>(max_len));
        q.source_ids.back() = kEosId;
      }
      if (lt > max_len) {
        q.target_ids.resize(static_cast<size_t>(max_len));
        q.target_ids.back() = kEosId;
      }
    }
    q.source_ids.resize(static_cast<size_t>(max_len), kPadId);
    q.target_ids.resize(static_cast<size_t>(max_len), kPadId);
    out.push_back(std::move(q));
  }
  return out;
}

/// Seeded uniform sample without replacement: `test_n` items become the test
/// set, the remainder the extra training data. Original order is preserved
/// within each part.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_idiom_dataset(const std::vector<T>& items,
                                                              long test_n, uint64_t seed) {
  const long n = static_cast<long>(items.size());
  if (n < test_n)
    throw std::runtime_error("cannot draw " + std::to_string(test_n) + " test sentences from " +
                             std::to_string(n));
  std::vector<long> idx(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (long i = n - 1; i > 0; --i) {
    const long j = static_cast<long>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  std::vector<bool> in_test(static_cast<size_t>(n), false);
  for (long i = 0; i < test_n; ++i) in_test[static_cast<size_t>(idx[static_cast<size_t>(i)])] = true;
  std::pair<std::vector<T>, std::vector<T>> result;
  for (long i = 0; i < n; ++i) {
    if (in_test[static_cast<size_t>(i)])
      result.first.push_back(items[static_cast<size_t>(i)]);
    else
      result.second.push_back(items[static_cast<size_t>(i)]);
  }
  return result;
}

/// A padded id block. Source rows are max_len wide; target rows carry a BOS
/// prefix for teacher forcing and are max_len + 1 wide. Masks mark non-PAD
/// positions.
struct Batch {
  long rows = 0;
  long source_width = 0;
  long target_width = 0;
  std::vector<int> source;        // rows x source_width
  std::vector<int> target;        // rows x target_width, BOS-prefixed
  std::vector<uint8_t> source_mask;
  std::vector<uint8_t> target_mask;

  int src(long r, long c) const { return source[static_cast<size_t>(r * source_width + c)]; }
  int tgt(long r, long c) const { return target[static_cast<size_t>(r * target_width + c)]; }
  bool src_live(long r, long c) const { return source_mask[static_cast<size_t>(r * source_width + c)] != 0; }
  bool tgt_live(long r, long c) const { return target_mask[static_cast<size_t>(r * target_width + c)] != 0; }

  std::vector<int> source_row(long r) const {
    return {source.begin() + r * source_width, source.begin() + (r + 1) * source_width};
  }
};

inline Batch make_batch(const std::vector<SentencePair>& pairs, const std::vector<long>& idx,
                        long lo, long hi) {
  Batch b;
  b.rows = hi - lo;
  b.source_width = static_cast<long>(pairs[static_cast<size_t>(idx[static_cast<size_t>(lo)])].source_ids.size());
  b.target_width = b.source_width + 1;
  b.source.resize(static_cast<size_t>(b.rows * b.source_width), kPadId);
  b.target.resize(static_cast<size_t>(b.rows * b.target_width), kPadId);
  b.source_mask.assign(static_cast<size_t>(b.rows * b.source_width), 0);
  b.target_mask.assign(static_cast<size_t>(b.rows * b.target_width), 0);
  for (long r = 0; r < b.rows; ++r) {
    const SentencePair& p = pairs[static_cast<size_t>(idx[static_cast<size_t>(lo + r)])];
    for (long c = 0; c < b.source_width; ++c) {
      const int id = p.source_ids[static_cast<size_t>(c)];
      b.source[static_cast<size_t>(r * b.source_width + c)] = id;
      b.source_mask[static_cast<size_t>(r * b.source_width + c)] = id != kPadId;
    }
    b.target[static_cast<size_t>(r * b.target_width)] = kBosId;
    b.target_mask[static_cast<size_t>(r * b.target_width)] = 1;
    for (long c = 0; c < b.source_width; ++c) {
      const int id = p.target_ids[static_cast<size_t>(c)];
      b.target[static_cast<size_t>(r * b.target_width + c + 1)] = id;
      b.target_mask[static_cast<size_t>(r * b.target_width + c + 1)] = id != kPadId;
    }
  }
  return b;
}

/// Seeded shuffle, then fixed-size blocks; the final partial batch is kept.
inline std::vector<Batch> batches(const std::vector<SentencePair>& pairs, long batch_size,
                                  uint64_t shuffle_seed) {
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  const long n = static_cast<long>(pairs.size());
  std::vector<long> idx(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  std::mt19937_64 rng(shuffle_seed);
  for (long i = n - 1; i > 0; --i) {
    const long j = static_cast<long>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  std::vector<Batch> out;
  for (long lo = 0; lo < n; lo += batch_size)
    out.push_back(make_batch(pairs, idx, lo, std::min(n, lo + batch_size)));
  return out;
}

}  // namespace anmt
