#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "minnow/checkpoint.hpp"
#include "minnow/config.hpp"
#include "minnow/dataset.hpp"
#include "minnow/episode.hpp"
#include "minnow/error.hpp"
#include "minnow/evaluator.hpp"
#include "minnow/generator.hpp"
#include "minnow/model.hpp"
#include "minnow/optim.hpp"
#include "minnow/text.hpp"
#include "minnow/trainer.hpp"

namespace minnow {
namespace cli {

namespace detail {

template <typename V>
V convert_value(const std::string& key, const std::string& raw);

template <>
inline std::string convert_value<std::string>(const std::string&,
                                              const std::string& raw) {
  return raw;
}

template <>
inline bool convert_value<bool>(const std::string& key, const std::string& raw) {
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
  raise(errc::bad_config, "config key '" + key + "': invalid boolean '" + raw + "'");
}

template <typename V>
V convert_value(const std::string& key, const std::string& raw) {
  try {
    if constexpr (std::is_same_v<V, double>) {
      return std::stod(raw);
    } else if constexpr (std::is_same_v<V, uint64_t>) {
      return std::stoull(raw);
    } else if constexpr (std::is_same_v<V, long>) {
      return std::stol(raw);
    } else {
      static_assert(std::is_same_v<V, int>, "unsupported config type");
      return std::stoi(raw);
    }
  } catch (const std::exception&) {
    raise(errc::bad_config, "config key '" + key + "': invalid value '" + raw + "'");
  }
}

/// Command-line flags paired with their config-file keys. File values apply
/// only where the flag was not given on the command line.
class KeyedOptions {
 public:
  template <typename V>
  CLI::Option* add(CLI::App* cmd, const std::string& flag, V& var,
                   const std::string& key, const std::string& desc) {
    CLI::Option* opt = cmd->add_option(flag, var, desc);
    bindings_.push_back({opt, key, [&var, key](const std::string& raw) {
                           var = convert_value<V>(key, raw);
                         }});
    return opt;
  }

  CLI::Option* add_flag(CLI::App* cmd, const std::string& flag, bool& var,
                        const std::string& key, const std::string& desc) {
    CLI::Option* opt = cmd->add_flag(flag, var, desc);
    bindings_.push_back({opt, key, [&var, key](const std::string& raw) {
                           var = convert_value<bool>(key, raw);
                         }});
    return opt;
  }

  void apply_file(const ConfigValues& file) {
    for (const auto& b : bindings_) {
      if (b.opt->count() == 0 && file.has(b.key)) {
        b.apply(file.get(b.key));
      }
    }
  }

 private:
  struct Binding {
    CLI::Option* opt;
    std::string key;
    std::function<void(const std::string&)> apply;
  };
  std::vector<Binding> bindings_;
};

struct Workspace {
  Corpus corpus;
  MetaWordDataset ds;
};

inline Workspace load_workspace(const std::string& corpus_path,
                                const std::string& manifest_path) {
  Workspace w;
  w.corpus = normalize_corpus(read_lines(corpus_path));
  w.ds = read_manifest(read_file(manifest_path));
  if (w.ds.n_sentences != static_cast<int>(w.corpus.sentences.size())) {
    raise(errc::bad_config,
          "manifest was built from a corpus with " +
              std::to_string(w.ds.n_sentences) + " sentences, but " +
              corpus_path + " normalizes to " +
              std::to_string(w.corpus.sentences.size()));
  }
  return w;
}

inline Split parse_split(const std::string& name) {
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  raise(errc::bad_config, "split must be 'valid' or 'test', got '" + name + "'");
}

inline std::vector<const MetaWordEntry*> entries_of(const MetaWordDataset& ds,
                                                    Split split) {
  std::vector<const MetaWordEntry*> entries;
  for (const int widx : ds.words_of(split)) {
    entries.push_back(&ds.meta[static_cast<size_t>(widx)]);
  }
  return entries;
}

inline void require(bool ok, const std::string& what) {
  if (!ok) raise(errc::bad_config, what);
}

}  // namespace detail

/// Entry point behind the `minnow` executable. `args` excludes argv[0].
inline int run(std::vector<std::string> args) {
  CLI::App app{"minnow: meta-training for in-context word learning"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  std::string config_path;
  if (const char* env = std::getenv("MINNOW_CONFIG")) config_path = env;
  app.add_option("--config", config_path,
                 "run configuration file (component.key = value); flags "
                 "override file keys (env: MINNOW_CONFIG)");
  bool sequential = false;
  app.add_flag("--sequential", sequential,
               "force bit-reproducible sequential execution (this build is "
               "always sequential; accepted for compatibility)");

  // Pull the config file out of args before the real parse so file values can
  // back-fill options.
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    }
  }
  ConfigValues file;
  if (!config_path.empty()) file = load_config_file(config_path);

  detail::KeyedOptions keyed;

  // ---- build-dataset ------------------------------------------------------
  auto* build = app.add_subcommand(
      "build-dataset", "compile a corpus into a word-learning dataset manifest");
  std::string b_corpus, b_out, b_lexicon, b_dump;
  BuildConfig b_cfg;
  keyed.add(build, "--corpus", b_corpus, "paths.corpus", "input corpus, one sentence per line");
  keyed.add(build, "--out", b_out, "paths.manifest", "manifest output path");
  keyed.add(build, "--pos-lexicon", b_lexicon, "paths.pos_lexicon",
            "optional token<TAB>tag lexicon");
  keyed.add(build, "--dump-corpus", b_dump, "paths.corpus_dump",
            "write the normalized corpus next to the manifest");
  keyed.add(build, "--max-freq", b_cfg.max_freq, "build.max_freq",
            "maximum corpus frequency of a meta-learned word");
  keyed.add(build, "--min-uses", b_cfg.min_uses, "build.min_uses",
            "minimum number of examples per meta-learned word");
  keyed.add(build, "--min-freq", b_cfg.min_freq, "build.min_freq",
            "minimum training-portion frequency for vocabulary tokens");
  keyed.add(build, "--ratio-train", b_cfg.ratio_train, "build.ratio_train", "");
  keyed.add(build, "--ratio-valid", b_cfg.ratio_valid, "build.ratio_valid", "");
  keyed.add(build, "--ratio-test", b_cfg.ratio_test, "build.ratio_test", "");
  keyed.add(build, "--seed", b_cfg.seed, "seed", "global seed");
  build->callback([&] {
    keyed.apply_file(file);
    detail::require(!b_corpus.empty(), "build-dataset needs --corpus");
    detail::require(!b_out.empty(), "build-dataset needs --out");
    Corpus corpus = normalize_corpus(read_lines(b_corpus));
    std::optional<std::unordered_map<std::string, PosTag>> lexicon;
    if (!b_lexicon.empty()) {
      std::ifstream in(b_lexicon, std::ios::binary);
      if (!in) raise(errc::io_error, "cannot open " + b_lexicon);
      lexicon = parse_pos_lexicon(in, b_lexicon);
    }
    corpus = tag_categories(std::move(corpus), std::move(lexicon));
    const MetaWordDataset ds = build_dataset(corpus, b_cfg);
    write_file(b_out, write_manifest(ds));
    if (!b_dump.empty()) write_file(b_dump, render_corpus(corpus));
    std::cout << "built dataset: " << ds.meta.size() << " meta words, "
              << ds.lm_pool.size() << " lm sentences, vocabulary "
              << ds.vocab.size() << "\n"
              << "manifest written to " << b_out << "\n";
  });

  // ---- stats --------------------------------------------------------------
  auto* stats = app.add_subcommand("stats", "dataset statistics table");
  std::string s_corpus, s_manifest, s_out;
  keyed.add(stats, "--corpus", s_corpus, "paths.corpus", "input corpus");
  keyed.add(stats, "--manifest", s_manifest, "paths.manifest", "dataset manifest");
  keyed.add(stats, "--out", s_out, "paths.stats_out", "also write the table here");
  stats->callback([&] {
    keyed.apply_file(file);
    detail::require(!s_corpus.empty(), "stats needs --corpus");
    detail::require(!s_manifest.empty(), "stats needs --manifest");
    const auto w = detail::load_workspace(s_corpus, s_manifest);
    const StatsReport report = compute_statistics(w.corpus, w.ds);
    const std::string table = render_statistics(report, w.ds);
    std::cout << table;
    if (!s_out.empty()) write_file(s_out, table);
  });

  // ---- train --------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train the from-scratch model");
  std::string t_corpus, t_manifest, t_out_dir, t_resume;
  ModelConfig t_model;
  TrainConfig t_train;
  keyed.add(tr, "--corpus", t_corpus, "paths.corpus", "input corpus");
  keyed.add(tr, "--manifest", t_manifest, "paths.manifest", "dataset manifest");
  keyed.add(tr, "--out-dir", t_out_dir, "paths.run_dir",
            "directory for checkpoints and the train log");
  keyed.add(tr, "--resume", t_resume, "paths.resume",
            "checkpoint to resume from");
  keyed.add(tr, "--n-layers", t_model.n_layers, "model.n_layers", "");
  keyed.add(tr, "--d-model", t_model.d_model, "model.d_model", "");
  keyed.add(tr, "--n-heads", t_model.n_heads, "model.n_heads", "");
  keyed.add(tr, "--d-ff", t_model.d_ff, "model.d_ff", "");
  keyed.add(tr, "--max-seq-len", t_model.max_seq_len, "model.max_seq_len", "");
  keyed.add(tr, "--K", t_train.K, "train.K", "examples per episode");
  keyed.add(tr, "--batch-size", t_train.batch_size, "train.batch_size",
            "episodes per batch");
  keyed.add(tr, "--max-epochs", t_train.max_epochs, "train.max_epochs", "");
  keyed.add(tr, "--lm-ratio", t_train.lm_ratio, "train.lm_ratio",
            "LM batches per meta batch");
  keyed.add(tr, "--lr", t_train.lr, "train.lr", "initial learning rate");
  keyed.add(tr, "--weight-decay", t_train.weight_decay, "train.weight_decay", "");
  keyed.add(tr, "--seed", t_train.seed, "seed", "global seed");
  tr->callback([&] {
    keyed.apply_file(file);
    detail::require(!t_corpus.empty(), "train needs --corpus");
    detail::require(!t_manifest.empty(), "train needs --manifest");
    detail::require(!t_out_dir.empty(), "train needs --out-dir");
    const auto w = detail::load_workspace(t_corpus, t_manifest);
    t_train.max_seq_len = t_model.max_seq_len;
    const TrainResult res =
        train(w.corpus, w.ds, t_model, t_train, t_out_dir, t_resume);
    std::cout << "selected checkpoint " << res.out_dir << "/"
              << res.selected_ckpt << "\n";
  });

  // ---- eval-words ---------------------------------------------------------
  auto* ew = app.add_subcommand("eval-words",
                                "held-out C-way word classification");
  std::string e_corpus, e_manifest, e_ckpt, e_split = "test";
  std::string e_report, e_records;
  int e_K = 5, e_C = 4;
  uint64_t e_seed = 0;
  bool e_ablation = false;
  keyed.add(ew, "--corpus", e_corpus, "paths.corpus", "input corpus");
  keyed.add(ew, "--manifest", e_manifest, "paths.manifest", "dataset manifest");
  keyed.add(ew, "--checkpoint", e_ckpt, "paths.checkpoint", "model checkpoint");
  keyed.add(ew, "--split", e_split, "eval.split", "valid or test");
  keyed.add(ew, "--K", e_K, "eval.K", "examples per episode (K-1 study + 1 query)");
  keyed.add(ew, "--C", e_C, "eval.C", "candidates per task");
  keyed.add(ew, "--seed", e_seed, "seed", "global seed");
  keyed.add_flag(ew, "--ablation", e_ablation, "eval.ablation",
                 "coherence ablation: delete the word instead of masking");
  keyed.add(ew, "--report", e_report, "paths.report", "write the report here");
  keyed.add(ew, "--records", e_records, "paths.records",
            "write per-query records here");
  ew->callback([&] {
    keyed.apply_file(file);
    detail::require(!e_corpus.empty(), "eval-words needs --corpus");
    detail::require(!e_manifest.empty(), "eval-words needs --manifest");
    detail::require(!e_ckpt.empty(), "eval-words needs --checkpoint");
    const auto w = detail::load_workspace(e_corpus, e_manifest);
    const Checkpoint ckpt = load_checkpoint(e_ckpt);
    detail::require(ckpt.cfg.vocab_size == w.ds.vocab.size(),
                    "checkpoint vocabulary does not match the manifest");
    const auto entries = detail::entries_of(w.ds, detail::parse_split(e_split));
    const auto tasks = build_word_tasks(entries, e_K, e_C, e_seed);
    const MaskMode mode =
        e_ablation ? MaskMode::empty_string : MaskMode::placeholder;
    const WordEvalReport report =
        evaluate_words(model_scorer(ckpt.params), tasks, w.corpus, w.ds.vocab, mode);
    std::cout << render_word_report(report);
    if (!e_report.empty()) write_file(e_report, render_word_report(report));
    if (!e_records.empty()) write_file(e_records, report.records);
  });

  // ---- eval-syntax --------------------------------------------------------
  auto* es = app.add_subcommand("eval-syntax",
                                "syntactic category classification");
  std::string y_corpus, y_manifest, y_ckpt, y_syntax, y_report, y_records;
  keyed.add(es, "--corpus", y_corpus, "paths.corpus", "input corpus");
  keyed.add(es, "--manifest", y_manifest, "paths.manifest", "dataset manifest");
  keyed.add(es, "--checkpoint", y_ckpt, "paths.checkpoint", "model checkpoint");
  keyed.add(es, "--syntax", y_syntax, "paths.syntax", "syntax dataset file");
  keyed.add(es, "--report", y_report, "paths.report", "write the report here");
  keyed.add(es, "--records", y_records, "paths.records",
            "write per-query records here");
  es->callback([&] {
    keyed.apply_file(file);
    detail::require(!y_corpus.empty(), "eval-syntax needs --corpus");
    detail::require(!y_manifest.empty(), "eval-syntax needs --manifest");
    detail::require(!y_ckpt.empty(), "eval-syntax needs --checkpoint");
    detail::require(!y_syntax.empty(), "eval-syntax needs --syntax");
    const auto w = detail::load_workspace(y_corpus, y_manifest);
    const Checkpoint ckpt = load_checkpoint(y_ckpt);
    detail::require(ckpt.cfg.vocab_size == w.ds.vocab.size(),
                    "checkpoint vocabulary does not match the manifest");
    const auto pairs = parse_syntax_file(read_file(y_syntax), y_syntax);
    const SyntaxEvalReport report =
        evaluate_syntax(model_scorer(ckpt.params), pairs, w.ds.vocab);
    std::cout << render_syntax_report(report);
    if (!y_report.empty()) write_file(y_report, render_syntax_report(report));
    if (!y_records.empty()) write_file(y_records, report.records);
  });

  // ---- generate -----------------------------------------------------------
  auto* gen = app.add_subcommand("generate",
                                 "generate a new usage example for a word");
  std::string g_corpus, g_manifest, g_ckpt, g_word, g_mode = "greedy";
  DecodeConfig g_cfg;
  int g_K = 5, g_num = 1;
  keyed.add(gen, "--corpus", g_corpus, "paths.corpus", "input corpus");
  keyed.add(gen, "--manifest", g_manifest, "paths.manifest", "dataset manifest");
  keyed.add(gen, "--checkpoint", g_ckpt, "paths.checkpoint", "model checkpoint");
  keyed.add(gen, "--word", g_word, "generate.word", "meta-learned word to prompt with");
  keyed.add(gen, "--K", g_K, "eval.K", "study examples + 1 (context uses K-1)");
  keyed.add(gen, "--mode", g_mode, "decode.mode", "greedy or top-p");
  keyed.add(gen, "--p", g_cfg.p, "decode.p", "nucleus mass");
  keyed.add(gen, "--max-new-tokens", g_cfg.max_new_tokens,
            "decode.max_new_tokens", "");
  keyed.add(gen, "--num", g_num, "decode.num", "number of generations");
  keyed.add(gen, "--seed", g_cfg.seed, "seed", "global seed");
  gen->callback([&] {
    keyed.apply_file(file);
    detail::require(!g_corpus.empty(), "generate needs --corpus");
    detail::require(!g_manifest.empty(), "generate needs --manifest");
    detail::require(!g_ckpt.empty(), "generate needs --checkpoint");
    detail::require(!g_word.empty(), "generate needs --word");
    if (g_mode == "greedy") {
      g_cfg.mode = DecodeMode::greedy;
    } else if (g_mode == "top-p") {
      g_cfg.mode = DecodeMode::top_p;
    } else {
      raise(errc::bad_config, "mode must be 'greedy' or 'top-p'");
    }
    const auto w = detail::load_workspace(g_corpus, g_manifest);
    const Checkpoint ckpt = load_checkpoint(g_ckpt);
    detail::require(ckpt.cfg.vocab_size == w.ds.vocab.size(),
                    "checkpoint vocabulary does not match the manifest");
    const MetaWordEntry* entry = nullptr;
    for (const auto& e : w.ds.meta) {
      if (e.word == g_word) entry = &e;
    }
    if (entry == nullptr) {
      raise(errc::insufficient_words, "'" + g_word + "' is not a meta-learned word");
    }
    if (entry->n_uses() < static_cast<size_t>(g_K - 1)) {
      raise(errc::insufficient_words,
            "'" + g_word + "' has only " + std::to_string(entry->n_uses()) +
                " examples, need " + std::to_string(g_K - 1));
    }
    std::vector<int> ids = entry->examples;
    Pcg32 rng = derive_stream(g_cfg.seed, "gen.context." + g_word);
    rng.shuffle(ids);
    const std::vector<int> study(ids.begin(), ids.begin() + (g_K - 1));
    const auto context = serialize_context(study, g_word, w.corpus, w.ds.vocab);
    std::cout << "word " << g_word << " mode " << g_mode;
    if (g_cfg.mode == DecodeMode::top_p) std::cout << " p " << g_cfg.p;
    std::cout << " max_new_tokens " << g_cfg.max_new_tokens << " seed "
              << g_cfg.seed << "\n";
    for (int i = 0; i < g_num; ++i) {
      const auto out = generate(ckpt.params, context, g_cfg, i);
      std::string text = render(out, w.ds.vocab);
      if (text.empty() || text.back() != '\n') text += '\n';
      std::cout << text;
    }
  });

  std::reverse(args.begin(), args.end());  // CLI11 parses right to left
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  return 0;
}

}  // namespace cli
}  // namespace minnow
