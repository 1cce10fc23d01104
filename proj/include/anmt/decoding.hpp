#pragma once

#include <cmath>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "anmt/corpus.hpp"
#include "anmt/model.hpp"

namespace anmt {

constexpr long kDefaultMaxOutLen = 100;

struct TranslationHypothesis {
  std::vector<int> token_ids;  // without BOS/EOS
  double score = 0;            // sum of log probabilities, terminal EOS included
  bool truncated = false;      // hit the output cap before emitting EOS
};

/// Greedy decode of one encoded source sentence (EOS-terminated ids, padded
/// or not). PAD and BOS are never emitted; argmax ties go to the lowest id.
template <typename Real>
TranslationHypothesis greedy_decode(const Model<Real>& m, const std::vector<int>& source_ids,
                                    long max_out_len = kDefaultMaxOutLen) {
  if (max_out_len < 1) throw std::invalid_argument("max_out_len must be positive");
  Graph<Real> g;
  const EncoderMemory memory = m.encode(g, source_ids, /*training=*/false, nullptr);
  LstmStateVars state = memory.final_state;
  DecoderTrace trace;

  TranslationHypothesis hyp;
  int prev = kBosId;
  for (long t = 0; t < max_out_len; ++t) {
    const StepOutput step =
        decoder_timestep(g, m, prev, state, memory, trace, /*training=*/false, nullptr);
    const Tensor<Real>& dist = g.value(step.dist);
    long best = -1;
    for (long i = 0; i < dist.size(); ++i) {
      if (i == kPadId || i == kBosId) continue;
      if (best < 0 || dist[i] > dist[best]) best = i;
    }
    hyp.score += std::log(static_cast<double>(dist[best]));
    if (best == kEosId) return hyp;
    hyp.token_ids.push_back(static_cast<int>(best));
    prev = static_cast<int>(best);
  }
  hyp.truncated = true;
  return hyp;
}

/// Translates a tokenized file line by line, preserving line count. Sources
/// longer than the model's window are truncated with a warning. Returns the
/// number of lines written.
template <typename Real>
long translate_corpus(const Model<Real>& m, const std::string& input_path,
                      const std::string& output_path, long max_out_len = kDefaultMaxOutLen) {
  const auto lines = read_token_lines(input_path);
  std::ofstream out(output_path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write translations: " + output_path);
  long lineno = 0;
  for (const auto& tokens : lines) {
    ++lineno;
    std::vector<int> ids = encode_sentence(tokens, m.source_vocab);
    if (static_cast<long>(ids.size()) > m.config.max_len) {
      std::cerr << "warning: " << input_path << ":" << lineno << ": source length " << ids.size()
                << " exceeds window, truncating to " << m.config.max_len << "\n";
      ids.resize(static_cast<size_t>(m.config.max_len));
      ids.back() = kEosId;
    }
    const TranslationHypothesis hyp = greedy_decode(m, ids, max_out_len);
    const std::vector<std::string> words = decode_ids(hyp.token_ids, m.target_vocab);
    for (size_t i = 0; i < words.size(); ++i) {
      if (i) out << ' ';
      out << words[i];
    }
    out << '\n';
    if (!out)
      throw std::runtime_error(output_path + ":" + std::to_string(lineno) + ": write failed");
  }
  return lineno;
}

}  // namespace anmt
