#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "anmt/checkpoint.hpp"
#include "anmt/corpus.hpp"
#include "anmt/decoding.hpp"
#include "anmt/evaluation.hpp"
#include "anmt/model.hpp"
#include "anmt/training.hpp"

namespace {

// Raw-line reader for passthrough commands that must preserve sentences
// verbatim (modulo trailing CR).
std::vector<std::string> read_raw_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!anmt::detail::valid_utf8(line))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": invalid UTF-8");
    lines.push_back(line);
  }
  return lines;
}

void write_raw_lines(const std::vector<std::string>& lines, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const std::string& l : lines) out << l << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

void configure(CLI::App* cmd) {
  cmd->set_config("--config", "", "Optional config file with `key = value` lines; flags override it");
  cmd->allow_config_extras(false);
}

struct BuildVocabArgs {
  std::string corpus, out;
  long cap = anmt::kDefaultVocabCap;
};

struct SplitArgs {
  std::string src, tgt, out_dir;
  long test_n = 2200;
  uint64_t seed = 1;
};

struct TrainArgs {
  std::string train_src, train_tgt, dev_src, dev_tgt, vocab_src, vocab_tgt, out;
  std::string score = "dot";
  anmt::TrainConfig cfg;
  long layers = 4;
  long units = 1000;
  double dropout = 0.5;
  long max_len = anmt::kDefaultMaxLen;
  bool strict_zero_bias = false;
  double init_range = 0.05;
};

struct TranslateArgs {
  std::string model, input, output;
  long max_len = anmt::kDefaultMaxOutLen;
};

struct EvaluateArgs {
  std::string hyp, ref, rival;
  long bootstrap = 1000;
  uint64_t seed = 1;
  bool lowercase = false;
};

struct AnalyzeArgs {
  std::string hyp, ref, src, csv, svg;
  long bucket_width = 10;
  bool lowercase = false;
};

void run_build_vocab(const BuildVocabArgs& a) {
  const auto lines = anmt::read_token_lines(a.corpus);
  const anmt::Vocabulary v = anmt::build_vocab(lines, a.cap);
  v.save(a.out);
  std::cout << "vocabulary: " << v.size() << " entries (4 reserved) -> " << a.out << "\n";
}

void run_split(const SplitArgs& a) {
  const auto src = read_raw_lines(a.src);
  const auto tgt = read_raw_lines(a.tgt);
  if (src.size() != tgt.size())
    throw std::runtime_error("line count mismatch: " + a.src + " has " + std::to_string(src.size()) +
                             " lines, " + a.tgt + " has " + std::to_string(tgt.size()));
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(src.size());
  for (size_t i = 0; i < src.size(); ++i) pairs.emplace_back(src[i], tgt[i]);
  const auto [test, train] = anmt::split_idiom_dataset(pairs, a.test_n, a.seed);

  std::filesystem::create_directories(a.out_dir);
  const auto side = [](const auto& ps, bool first) {
    std::vector<std::string> out;
    out.reserve(ps.size());
    for (const auto& p : ps) out.push_back(first ? p.first : p.second);
    return out;
  };
  write_raw_lines(side(test, true), a.out_dir + "/test.src");
  write_raw_lines(side(test, false), a.out_dir + "/test.tgt");
  write_raw_lines(side(train, true), a.out_dir + "/train.src");
  write_raw_lines(side(train, false), a.out_dir + "/train.tgt");
  std::cout << "split: " << test.size() << " test pairs, " << train.size()
            << " training pairs -> " << a.out_dir << "\n";
}

void run_train(const TrainArgs& a) {
  const anmt::Vocabulary src_vocab = anmt::Vocabulary::load(a.vocab_src);
  const anmt::Vocabulary tgt_vocab = anmt::Vocabulary::load(a.vocab_tgt);

  const auto raw_train = anmt::load_parallel(a.train_src, a.train_tgt, src_vocab, tgt_vocab);
  const auto raw_dev = anmt::load_parallel(a.dev_src, a.dev_tgt, src_vocab, tgt_vocab);
  const auto train = anmt::filter_and_pad(raw_train, a.max_len, /*training=*/true);
  const auto dev = anmt::filter_and_pad(raw_dev, a.max_len, /*training=*/true);
  std::cerr << "train: kept " << train.size() << " of " << raw_train.size() << " pairs, dev "
            << dev.size() << " of " << raw_dev.size() << " (window " << a.max_len << ")\n";

  anmt::ModelConfig mc;
  mc.layers = a.layers;
  mc.units = a.units;
  mc.embedding_dim = a.units;
  mc.score = anmt::parse_score_kind(a.score);
  mc.dropout = a.dropout;
  mc.max_len = a.max_len;
  mc.strict_zero_bias = a.strict_zero_bias;
  mc.init_range = a.init_range;

  anmt::Model<float> model(mc, src_vocab, tgt_vocab);
  std::mt19937_64 rng(a.cfg.seed);
  model.init_params(rng);
  std::cerr << "model: " << anmt::count_parameters(model.config) << " parameters\n";

  const anmt::TrainLog log = anmt::fit_with_patience(
      model, train, dev, a.cfg, a.out, [](const anmt::EpochLog& e) {
        std::cerr << "epoch " << e.epoch << ": train " << anmt::format_fixed(e.train_loss, 4)
                  << " dev " << anmt::format_fixed(e.dev_nll, 4) << (e.improved ? " *" : "")
                  << " (" << anmt::format_fixed(e.seconds, 1) << "s)\n";
      });
  anmt::save_checkpoint(model, a.out);

  double best = log.front().dev_nll;
  long best_epoch = log.front().epoch;
  for (const anmt::EpochLog& e : log)
    if (e.dev_nll < best) {
      best = e.dev_nll;
      best_epoch = e.epoch;
    }
  std::cout << "trained " << log.size() << " epochs, best dev NLL " << anmt::format_fixed(best, 4)
            << " at epoch " << best_epoch << " -> " << a.out << "\n";
}

void run_translate(const TranslateArgs& a) {
  const anmt::Model<float> model = anmt::load_checkpoint<float>(a.model);
  const long n = anmt::translate_corpus(model, a.input, a.output, a.max_len);
  std::cout << "translated " << n << " lines -> " << a.output << "\n";
}

void run_evaluate(const EvaluateArgs& a) {
  anmt::TokenLines hyp = anmt::read_token_lines(a.hyp);
  anmt::TokenLines ref = anmt::read_token_lines(a.ref);
  if (a.lowercase) {
    anmt::lowercase_tokens(hyp);
    anmt::lowercase_tokens(ref);
  }
  const double bleu = anmt::bleu_corpus(hyp, ref);
  const double ter = anmt::ter_corpus(hyp, ref);
  std::cout << "BLEU " << anmt::format_fixed(bleu, 2) << " / TER " << anmt::format_fixed(ter, 2)
            << "\n";
  if (a.rival.empty()) return;

  anmt::TokenLines rival = anmt::read_token_lines(a.rival);
  if (a.lowercase) anmt::lowercase_tokens(rival);
  const double rival_ter = anmt::ter_corpus(rival, ref);
  const anmt::BootstrapResult r = anmt::bootstrap_significance(hyp, rival, ref, a.bootstrap, a.seed);
  std::cout << "rival BLEU " << anmt::format_fixed(r.bleu_b, 2) << " / TER "
            << anmt::format_fixed(rival_ter, 2) << "\n";
  const char* winner = r.bleu_a > r.bleu_b ? "hyp" : (r.bleu_b > r.bleu_a ? "rival" : "tie");
  std::cout << "bootstrap: winner " << winner << ", p = " << anmt::format_fixed(r.p_value, 4)
            << " (" << a.bootstrap << " resamples, seed " << a.seed << ")\n";
}

void run_analyze(const AnalyzeArgs& a) {
  anmt::TokenLines hyp = anmt::read_token_lines(a.hyp);
  anmt::TokenLines ref = anmt::read_token_lines(a.ref);
  const anmt::TokenLines src = anmt::read_token_lines(a.src);
  if (a.lowercase) {
    anmt::lowercase_tokens(hyp);
    anmt::lowercase_tokens(ref);
  }
  const auto buckets = anmt::length_bucket_report(hyp, ref, src, a.bucket_width);
  for (const anmt::LengthBucket& b : buckets)
    std::cout << "length " << b.lo << "-" << b.hi << ": " << b.count << " sentences, BLEU "
              << anmt::format_fixed(b.bleu, 2) << "\n";
  if (!a.csv.empty()) anmt::write_bucket_csv(buckets, a.csv);
  if (!a.svg.empty()) anmt::write_bucket_svg(buckets, a.svg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attentive LSTM translation toolkit"};
  app.require_subcommand(1);

  BuildVocabArgs bv;
  CLI::App* build_vocab = app.add_subcommand("build-vocab", "Build a frequency-capped vocabulary");
  configure(build_vocab);
  build_vocab->add_option("--corpus", bv.corpus, "Tokenized training text, one sentence per line")
      ->required();
  build_vocab->add_option("--out", bv.out, "Output vocabulary file")->required();
  build_vocab->add_option("--cap", bv.cap, "Maximum non-reserved entries")
      ->capture_default_str();
  build_vocab->callback([&] { run_build_vocab(bv); });

  SplitArgs sp;
  CLI::App* split = app.add_subcommand("split-idioms", "Split a parallel corpus into test/train");
  configure(split);
  split->add_option("--src", sp.src, "Source side")->required();
  split->add_option("--tgt", sp.tgt, "Target side")->required();
  split->add_option("--test-n", sp.test_n, "Sentences drawn for the test set")
      ->capture_default_str();
  split->add_option("--seed", sp.seed, "Sampling seed")->capture_default_str();
  split->add_option("--out-dir", sp.out_dir, "Output directory")->required();
  split->callback([&] { run_split(sp); });

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "Train a model with early stopping");
  configure(train);
  train->add_option("--train-src", tr.train_src, "Training source file")->required();
  train->add_option("--train-tgt", tr.train_tgt, "Training target file")->required();
  train->add_option("--dev-src", tr.dev_src, "Validation source file")->required();
  train->add_option("--dev-tgt", tr.dev_tgt, "Validation target file")->required();
  train->add_option("--vocab-src", tr.vocab_src, "Source vocabulary file")->required();
  train->add_option("--vocab-tgt", tr.vocab_tgt, "Target vocabulary file")->required();
  train->add_option("--score", tr.score, "Attention score function")
      ->check(CLI::IsMember({"dot", "general", "concat"}))
      ->capture_default_str();
  train->add_option("--out", tr.out, "Output checkpoint path")->required();
  train->add_option("--lr", tr.cfg.lr, "ADAM learning rate")->capture_default_str();
  train->add_option("--batch", tr.cfg.batch_size, "Mini-batch size")->capture_default_str();
  train->add_option("--clip", tr.cfg.clip, "Global gradient-norm threshold")->capture_default_str();
  train->add_option("--patience", tr.cfg.patience, "Epochs without dev improvement before stopping")
      ->capture_default_str();
  train->add_option("--layers", tr.layers, "LSTM layers per stack")->capture_default_str();
  train->add_option("--units", tr.units, "Hidden units (= embedding width)")->capture_default_str();
  train->add_option("--dropout", tr.dropout, "Dropout on non-recurrent connections")
      ->capture_default_str();
  train->add_option("--seed", tr.cfg.seed, "Master seed")->capture_default_str();
  train->add_option("--max-epochs", tr.cfg.max_epochs, "Hard epoch cap")->capture_default_str();
  train->add_option("--max-len", tr.max_len, "Sentence window (tokens incl. the end marker)")
      ->capture_default_str();
  train->add_option("--init-range", tr.init_range, "Uniform init half-width for the weights")
      ->capture_default_str();
  train->add_flag("--strict-zero-bias", tr.strict_zero_bias,
                  "Zero the LSTM forget-gate bias too (default initializes it to 1)");
  train->callback([&] { run_train(tr); });

  TranslateArgs ts;
  CLI::App* translate = app.add_subcommand("translate", "Greedy-decode a tokenized file");
  configure(translate);
  translate->add_option("--model", ts.model, "Checkpoint path")->required();
  translate->add_option("--input", ts.input, "Tokenized source file")->required();
  translate->add_option("--output", ts.output, "Where to write translations")->required();
  translate->add_option("--max-len", ts.max_len, "Output length cap")->capture_default_str();
  translate->callback([&] { run_translate(ts); });

  EvaluateArgs ev;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score hypotheses with BLEU and TER");
  configure(evaluate);
  evaluate->add_option("--hyp", ev.hyp, "Hypothesis file")->required();
  evaluate->add_option("--ref", ev.ref, "Reference file")->required();
  evaluate->add_option("--rival", ev.rival, "Second system to compare against");
  evaluate->add_option("--bootstrap", ev.bootstrap, "Paired bootstrap resamples")
      ->capture_default_str();
  evaluate->add_option("--seed", ev.seed, "Bootstrap seed")->capture_default_str();
  evaluate->add_flag("--lowercase", ev.lowercase, "Case-insensitive scoring");
  evaluate->callback([&] { run_evaluate(ev); });

  AnalyzeArgs an;
  CLI::App* analyze = app.add_subcommand("analyze", "BLEU by source-length bucket");
  configure(analyze);
  analyze->add_option("--hyp", an.hyp, "Hypothesis file")->required();
  analyze->add_option("--ref", an.ref, "Reference file")->required();
  analyze->add_option("--src", an.src, "Source file (bucket lengths)")->required();
  analyze->add_option("--bucket-width", an.bucket_width, "Bucket width in tokens")
      ->capture_default_str();
  analyze->add_option("--csv", an.csv, "Write the bucket table as CSV");
  analyze->add_option("--svg", an.svg, "Write the bucket chart as SVG");
  analyze->add_flag("--lowercase", an.lowercase, "Case-insensitive scoring");
  analyze->callback([&] { run_analyze(an); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
