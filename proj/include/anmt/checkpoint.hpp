#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "anmt/model.hpp"

namespace anmt {

// Checkpoint layout, version 1:
//   magic "ANMT" | u32 LE version | u64 LE header length | JSON header |
//   raw LE float32 tensor payloads in header order.
// The header is {config, vocab_hash, tensors:[{name, shape, offset}]} with
// offsets in bytes from the start of the payload section. Vocabularies are
// embedded in the config so a model file is self-contained; the tied
// embedding/projection matrix is stored once.
constexpr char kCheckpointMagic[4] = {'A', 'N', 'M', 'T'};
constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32_le(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void write_u64_le(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated checkpoint");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

inline uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("truncated checkpoint");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f32_le(std::ostream& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32_le(out, bits);
}

inline float read_f32_le(std::istream& in) {
  const uint32_t bits = read_u32_le(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json vocab_to_json(const Vocabulary& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = kNumSpecials; i < v.size(); ++i) arr.push_back(v.token(i));
  return arr;
}

inline Vocabulary vocab_from_json(const nlohmann::json& arr) {
  Vocabulary v;
  for (const auto& t : arr) v.add(t.get<std::string>());
  return v;
}

}  // namespace detail

template <typename Real>
void save_checkpoint(const Model<Real>& m, std::ostream& out) {
  nlohmann::json config;
  config["layers"] = m.config.layers;
  config["units"] = m.config.units;
  config["embedding_dim"] = m.config.embedding_dim;
  config["score"] = score_kind_name(m.config.score);
  config["dropout"] = m.config.dropout;
  config["max_len"] = m.config.max_len;
  config["strict_zero_bias"] = m.config.strict_zero_bias;
  config["init_range"] = m.config.init_range;
  config["source_vocab"] = detail::vocab_to_json(m.source_vocab);
  config["target_vocab"] = detail::vocab_to_json(m.target_vocab);

  nlohmann::json tensors = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& p : m.params) {
    nlohmann::json t;
    t["name"] = p->name;
    t["shape"] = p->value.shape();
    t["offset"] = offset;
    tensors.push_back(t);
    offset += static_cast<uint64_t>(p->value.size()) * 4;
  }

  nlohmann::json header;
  header["config"] = config;
  header["vocab_hash"] = detail::hex64(m.source_vocab.hash()) + detail::hex64(m.target_vocab.hash());
  header["tensors"] = tensors;
  const std::string header_str = header.dump();

  out.write(kCheckpointMagic, 4);
  detail::write_u32_le(out, kCheckpointVersion);
  detail::write_u64_le(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& p : m.params)
    for (long i = 0; i < p->value.size(); ++i)
      detail::write_f32_le(out, static_cast<float>(p->value[i]));
  if (!out) throw std::runtime_error("checkpoint write failed");
}

/// Writes to a temp file in the same directory, then renames into place.
template <typename Real>
void save_checkpoint(const Model<Real>& m, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp);
    save_checkpoint(m, out);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move checkpoint into place: " + path);
}

template <typename Real>
std::vector<char> checkpoint_bytes(const Model<Real>& m) {
  std::ostringstream os(std::ios::binary);
  save_checkpoint(m, os);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

template <typename Real>
Model<Real> load_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw std::runtime_error("truncated checkpoint");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("not a model checkpoint (bad magic)");
  const uint32_t version = detail::read_u32_le(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const uint64_t header_len = detail::read_u64_le(in);
  if (header_len > (1ull << 31)) throw std::runtime_error("corrupt checkpoint header length");
  std::string header_str(header_len, '\0');
  if (!in.read(header_str.data(), static_cast<std::streamsize>(header_len)))
    throw std::runtime_error("truncated checkpoint");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("corrupt checkpoint header: ") + e.what());
  }

  ModelConfig cfg;
  const nlohmann::json& jc = header.at("config");
  cfg.layers = jc.at("layers").get<long>();
  cfg.units = jc.at("units").get<long>();
  cfg.embedding_dim = jc.at("embedding_dim").get<long>();
  cfg.score = parse_score_kind(jc.at("score").get<std::string>());
  cfg.dropout = jc.at("dropout").get<double>();
  cfg.max_len = jc.at("max_len").get<long>();
  cfg.strict_zero_bias = jc.at("strict_zero_bias").get<bool>();
  cfg.init_range = jc.at("init_range").get<double>();
  Vocabulary src = detail::vocab_from_json(jc.at("source_vocab"));
  Vocabulary tgt = detail::vocab_from_json(jc.at("target_vocab"));

  Model<Real> m(cfg, std::move(src), std::move(tgt));
  const std::string expect_hash =
      detail::hex64(m.source_vocab.hash()) + detail::hex64(m.target_vocab.hash());
  if (header.at("vocab_hash").get<std::string>() != expect_hash)
    throw std::runtime_error("checkpoint vocab_hash does not match embedded vocabulary");

  const nlohmann::json& tensors = header.at("tensors");
  if (tensors.size() != m.params.size())
    throw std::runtime_error("checkpoint tensor count " + std::to_string(tensors.size()) +
                             " does not match model (" + std::to_string(m.params.size()) + ")");
  for (size_t i = 0; i < m.params.size(); ++i) {
    Parameter<Real>* p = m.params[i];
    const nlohmann::json& t = tensors[i];
    if (t.at("name").get<std::string>() != p->name)
      throw std::runtime_error("checkpoint tensor '" + t.at("name").get<std::string>() +
                               "' does not match expected '" + p->name + "'");
    const Shape shape = t.at("shape").get<Shape>();
    if (shape != p->value.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + p->name + ": " +
                               shape_to_string(shape) + " vs " + shape_to_string(p->value.shape()));
    for (long k = 0; k < p->value.size(); ++k)
      p->value[k] = static_cast<Real>(detail::read_f32_le(in));
  }
  return m;
}

template <typename Real>
Model<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return load_checkpoint<Real>(in);
}

/// Overwrites an existing model's parameter values from checkpoint bytes
/// (used by the patience rollback). Config and vocabularies must match.
template <typename Real>
void restore_checkpoint_values(Model<Real>& m, const std::vector<char>& bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  Model<Real> loaded = load_checkpoint<Real>(in);
  if (loaded.params.size() != m.params.size())
    throw std::runtime_error("snapshot does not match model");
  for (size_t i = 0; i < m.params.size(); ++i) m.params[i]->value = loaded.params[i]->value;
}

}  // namespace anmt
