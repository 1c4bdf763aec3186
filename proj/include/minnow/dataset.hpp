#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "minnow/error.hpp"
#include "minnow/rng.hpp"
#include "minnow/text.hpp"

namespace minnow {

struct BuildConfig {
  long max_freq = 15;
  long min_uses = 5;
  long min_freq = 5;
  double ratio_train = 0.8;
  double ratio_valid = 0.1;
  double ratio_test = 0.1;
  uint64_t seed = 0;
};

struct MetaWordEntry {
  std::string word;
  std::vector<int> examples;  // sentence ids, ascending

  size_t n_uses() const { return examples.size(); }
};

enum class Split { train = 0, valid = 1, test = 2 };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

constexpr std::array<Split, 3> all_splits = {Split::train, Split::valid,
                                             Split::test};

/// Closed vocabulary with fixed special ids. Meta-learned words never get an
/// id; they encode as UNK outside their own episodes.
struct Vocabulary {
  static constexpr int placeholder_id = 0;
  static constexpr int sep_id = 1;
  static constexpr int unk_id = 2;

  static constexpr const char* placeholder_surface = "[new-token]";
  static constexpr const char* sep_surface = "<sep>";
  static constexpr const char* unk_surface = "<unk>";

  std::vector<std::string> token_of = {placeholder_surface, sep_surface,
                                       unk_surface};
  std::unordered_map<std::string, int> id_of;
  long min_freq = 5;

  // Special surfaces are resolvable by name. Corpus tokens can never collide
  // with them: the tokenizer splits brackets and angle brackets apart.
  Vocabulary() {
    id_of.emplace(placeholder_surface, placeholder_id);
    id_of.emplace(sep_surface, sep_id);
    id_of.emplace(unk_surface, unk_id);
  }

  int size() const { return static_cast<int>(token_of.size()); }

  bool contains(const std::string& token) const {
    return id_of.find(token) != id_of.end();
  }

  int lookup(const std::string& token) const {
    const auto it = id_of.find(token);
    return it == id_of.end() ? unk_id : it->second;
  }

  void add(const std::string& token) {
    const int id = size();
    token_of.push_back(token);
    id_of.emplace(token, id);
  }
};

struct MetaWordDataset {
  std::vector<MetaWordEntry> meta;  // assignment order
  std::vector<int> lm_pool;         // sentence ids, ascending
  std::array<std::vector<int>, 3> split_words;  // indices into meta
  std::array<std::vector<int>, 3> split_lm;     // sentence ids
  Vocabulary vocab;
  BuildConfig config;
  int n_sentences = 0;  // corpus size at build time, for consistency checks

  const std::vector<int>& words_of(Split s) const {
    return split_words[static_cast<size_t>(s)];
  }
  const std::vector<int>& lm_of(Split s) const {
    return split_lm[static_cast<size_t>(s)];
  }

  std::unordered_set<std::string> all_meta_words() const {
    std::unordered_set<std::string> words;
    for (const auto& entry : meta) words.insert(entry.word);
    return words;
  }
};

/// Meta-learning candidates: open-class (or ANY-tagged) non-punctuation words
/// with min_uses <= frequency <= max_freq. Returned sorted for determinism.
inline std::vector<std::string> select_candidates(const FrequencyTable& freqs,
                                                  const Corpus& corpus,
                                                  long max_freq,
                                                  long min_uses) {
  if (!(max_freq >= min_uses && min_uses >= 1)) {
    raise(errc::bad_config, "require max_freq >= min_uses >= 1");
  }
  std::vector<std::string> candidates;
  for (const auto& [token, count] : freqs.counts) {
    if (count > max_freq || count < min_uses) continue;
    if (is_punctuation(token)) continue;
    const PosTag tag = pos_of(corpus, token);
    if (tag == PosTag::other) continue;
    candidates.push_back(token);
  }
  return candidates;
}

/// Greedy, deterministic sentence assignment. Candidates are processed in
/// ascending corpus frequency (ties lexicographic); each claims every
/// still-unassigned sentence containing it, in sentence-id order. A candidate
/// that cannot reach min_uses is dropped and its claims are released before
/// the next candidate runs.
inline std::pair<std::vector<MetaWordEntry>, std::vector<int>> assign_sentences(
    const Corpus& corpus, const std::vector<std::string>& candidates,
    long min_uses) {
  const FrequencyTable freqs = count_frequencies(corpus);

  std::vector<std::string> order = candidates;
  std::sort(order.begin(), order.end(),
            [&](const std::string& a, const std::string& b) {
              const long fa = freqs.of(a);
              const long fb = freqs.of(b);
              if (fa != fb) return fa < fb;
              return a < b;
            });

  // token -> sentence ids containing it (ascending, unique)
  std::unordered_map<std::string, std::vector<int>> occurrences;
  for (const auto& sentence : corpus.sentences) {
    std::unordered_set<std::string> seen;
    for (const auto& token : sentence.tokens) {
      if (seen.insert(token).second) {
        occurrences[token].push_back(sentence.id);
      }
    }
  }

  std::unordered_set<int> assigned;
  std::vector<MetaWordEntry> entries;
  for (const auto& word : order) {
    const auto it = occurrences.find(word);
    if (it == occurrences.end()) continue;
    std::vector<int> claim;
    for (const int sid : it->second) {
      if (assigned.find(sid) == assigned.end()) claim.push_back(sid);
    }
    if (static_cast<long>(claim.size()) < min_uses) continue;
    for (const int sid : claim) assigned.insert(sid);
    entries.push_back(MetaWordEntry{word, std::move(claim)});
  }

  std::vector<int> lm_pool;
  for (const auto& sentence : corpus.sentences) {
    if (assigned.find(sentence.id) == assigned.end()) {
      lm_pool.push_back(sentence.id);
    }
  }
  return {std::move(entries), std::move(lm_pool)};
}

namespace detail {

// floor sizes per ratio, remainder to train
inline std::array<size_t, 3> split_sizes(size_t n, const BuildConfig& cfg) {
  std::array<size_t, 3> sizes{};
  sizes[1] = static_cast<size_t>(std::floor(static_cast<double>(n) * cfg.ratio_valid));
  sizes[2] = static_cast<size_t>(std::floor(static_cast<double>(n) * cfg.ratio_test));
  sizes[0] = n - sizes[1] - sizes[2];
  return sizes;
}

}  // namespace detail

/// Seeded 80/10/10-style partition: meta words shuffled and split by ratio
/// (floors, remainder to train); the lm pool is split the same way by
/// sentence. Streams: (seed, "split.words") and (seed, "split.lm").
inline void split_dataset(MetaWordDataset& ds) {
  const auto& cfg = ds.config;
  const double ratio_sum = cfg.ratio_train + cfg.ratio_valid + cfg.ratio_test;
  if (std::abs(ratio_sum - 1.0) > 1e-9) {
    raise(errc::bad_config, "split ratios must sum to 1");
  }

  const size_t n_words = ds.meta.size();
  const auto word_sizes = detail::split_sizes(n_words, cfg);
  if (n_words > 0) {
    for (const auto size : word_sizes) {
      if (size == 0) {
        raise(errc::insufficient_words,
              "a split would receive 0 of " + std::to_string(n_words) +
                  " meta words");
      }
    }
  }

  std::vector<int> word_idx(n_words);
  for (size_t i = 0; i < n_words; ++i) word_idx[i] = static_cast<int>(i);
  Pcg32 word_rng = derive_stream(cfg.seed, "split.words");
  word_rng.shuffle(word_idx);
  size_t cursor = 0;
  for (size_t s = 0; s < 3; ++s) {
    ds.split_words[s].assign(word_idx.begin() + cursor,
                             word_idx.begin() + cursor + word_sizes[s]);
    cursor += word_sizes[s];
  }

  std::vector<int> lm_ids = ds.lm_pool;
  Pcg32 lm_rng = derive_stream(cfg.seed, "split.lm");
  lm_rng.shuffle(lm_ids);
  const auto lm_sizes = detail::split_sizes(lm_ids.size(), cfg);
  cursor = 0;
  for (size_t s = 0; s < 3; ++s) {
    ds.split_lm[s].assign(lm_ids.begin() + cursor,
                          lm_ids.begin() + cursor + lm_sizes[s]);
    cursor += lm_sizes[s];
  }
}

/// Vocabulary over the training portion (train lm sentences plus train meta
/// example sentences): tokens with frequency >= min_freq, minus every
/// meta-learned word of any split, plus the three specials. Ids are assigned
/// by descending frequency, ties lexicographic.
inline Vocabulary build_vocabulary(const Corpus& corpus,
                                   const MetaWordDataset& ds, long min_freq) {
  if (min_freq < 1) raise(errc::bad_config, "min_freq must be >= 1");

  std::map<std::string, long> freq;
  auto count_sentence = [&](int sid) {
    for (const auto& token : corpus.sentences[static_cast<size_t>(sid)].tokens) {
      ++freq[token];
    }
  };
  for (const int widx : ds.words_of(Split::train)) {
    for (const int sid : ds.meta[static_cast<size_t>(widx)].examples) {
      count_sentence(sid);
    }
  }
  for (const int sid : ds.lm_of(Split::train)) count_sentence(sid);

  const auto meta_words = ds.all_meta_words();
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [token, count] : freq) {
    if (count < min_freq) continue;
    if (meta_words.find(token) != meta_words.end()) continue;
    kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  vocab.min_freq = min_freq;
  for (const auto& [token, count] : kept) vocab.add(token);
  return vocab;
}

/// Deterministic end-to-end dataset build for one corpus + config.
inline MetaWordDataset build_dataset(const Corpus& corpus,
                                     const BuildConfig& cfg) {
  MetaWordDataset ds;
  ds.config = cfg;
  ds.n_sentences = static_cast<int>(corpus.sentences.size());
  const FrequencyTable freqs = count_frequencies(corpus);
  const auto candidates =
      select_candidates(freqs, corpus, cfg.max_freq, cfg.min_uses);
  auto [entries, lm_pool] = assign_sentences(corpus, candidates, cfg.min_uses);
  ds.meta = std::move(entries);
  ds.lm_pool = std::move(lm_pool);
  split_dataset(ds);
  ds.vocab = build_vocabulary(corpus, ds, cfg.min_freq);
  return ds;
}

// ---------------------------------------------------------------------------
// statistics

struct ComponentStats {
  long n_words = 0;       // meta only
  long total_uses = 0;    // meta only
  long n_sentences = 0;
  long total_tokens = 0;
  long unk_tokens = 0;

  double mean_uses() const {
    return n_words == 0 ? 0.0
                        : static_cast<double>(total_uses) / static_cast<double>(n_words);
  }
  double mean_sentence_length() const {
    return n_sentences == 0 ? 0.0
                            : static_cast<double>(total_tokens) /
                                  static_cast<double>(n_sentences);
  }
  double unk_rate() const {
    return total_tokens == 0 ? 0.0
                             : static_cast<double>(unk_tokens) /
                                   static_cast<double>(total_tokens);
  }
};

struct StatsReport {
  std::array<ComponentStats, 3> meta;  // per split
  std::array<ComponentStats, 3> lm;

  long total_tokens(Split s) const {
    const auto i = static_cast<size_t>(s);
    return meta[i].total_tokens + lm[i].total_tokens;
  }
};

/// Token-level statistics per split and component. A token counts as unk when
/// it has no vocabulary id, except occurrences of a meta sentence's own word,
/// which serialize to the placeholder rather than UNK.
inline StatsReport compute_statistics(const Corpus& corpus,
                                      const MetaWordDataset& ds) {
  StatsReport report;
  for (const Split split : all_splits) {
    const auto si = static_cast<size_t>(split);
    auto& meta_stats = report.meta[si];
    for (const int widx : ds.words_of(split)) {
      const auto& entry = ds.meta[static_cast<size_t>(widx)];
      meta_stats.n_words += 1;
      meta_stats.total_uses += static_cast<long>(entry.n_uses());
      for (const int sid : entry.examples) {
        const auto& tokens = corpus.sentences[static_cast<size_t>(sid)].tokens;
        meta_stats.n_sentences += 1;
        meta_stats.total_tokens += static_cast<long>(tokens.size());
        for (const auto& token : tokens) {
          if (token != entry.word && !ds.vocab.contains(token)) {
            meta_stats.unk_tokens += 1;
          }
        }
      }
    }
    auto& lm_stats = report.lm[si];
    for (const int sid : ds.lm_of(split)) {
      const auto& tokens = corpus.sentences[static_cast<size_t>(sid)].tokens;
      lm_stats.n_sentences += 1;
      lm_stats.total_tokens += static_cast<long>(tokens.size());
      for (const auto& token : tokens) {
        if (!ds.vocab.contains(token)) lm_stats.unk_tokens += 1;
      }
    }
  }
  return report;
}

/// Aligned plain-text table, one column per split.
inline std::string render_statistics(const StatsReport& report,
                                     const MetaWordDataset& ds) {
  std::string out;
  char buf[160];
  auto row = [&](const char* label, auto format_cell) {
    std::snprintf(buf, sizeof(buf), "%-34s", label);
    out += buf;
    for (const Split split : all_splits) {
      format_cell(split);
      out += buf;
    }
    out += '\n';
  };
  auto long_cell = [&](long v) { std::snprintf(buf, sizeof(buf), "%12ld", v); };
  auto mean_cell = [&](double v) { std::snprintf(buf, sizeof(buf), "%12.2f", v); };
  auto rate_cell = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%11.2f%%", v * 100.0);
  };

  out += "dataset statistics\n";
  std::snprintf(buf, sizeof(buf), "vocabulary size %d\n", ds.vocab.size());
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-34s%12s%12s%12s\n", "portion", "train",
                "valid", "test");
  out += buf;
  auto meta_of = [&](Split s) -> const ComponentStats& {
    return report.meta[static_cast<size_t>(s)];
  };
  auto lm_of = [&](Split s) -> const ComponentStats& {
    return report.lm[static_cast<size_t>(s)];
  };
  row("meta  #meta-learned words", [&](Split s) { long_cell(meta_of(s).n_words); });
  row("meta  total #uses", [&](Split s) { long_cell(meta_of(s).total_uses); });
  row("meta  mean #uses", [&](Split s) { mean_cell(meta_of(s).mean_uses()); });
  row("meta  total #tokens", [&](Split s) { long_cell(meta_of(s).total_tokens); });
  row("meta  mean sentence length",
      [&](Split s) { mean_cell(meta_of(s).mean_sentence_length()); });
  row("meta  unk rate", [&](Split s) { rate_cell(meta_of(s).unk_rate()); });
  row("lm    #sentences", [&](Split s) { long_cell(lm_of(s).n_sentences); });
  row("lm    total #tokens", [&](Split s) { long_cell(lm_of(s).total_tokens); });
  row("lm    mean sentence length",
      [&](Split s) { mean_cell(lm_of(s).mean_sentence_length()); });
  row("lm    unk rate", [&](Split s) { rate_cell(lm_of(s).unk_rate()); });
  row("total #tokens", [&](Split s) { long_cell(report.total_tokens(s)); });
  return out;
}

// ---------------------------------------------------------------------------
// manifest

/// Canonical plain-text manifest. write_manifest(read_manifest(text)) == text
/// and read_manifest(write_manifest(ds)) == ds.
inline std::string write_manifest(const MetaWordDataset& ds) {
  std::string out;
  char buf[96];
  out += "# minnow dataset manifest v1\n";
  out += "[config]\n";
  const auto& cfg = ds.config;
  std::snprintf(buf, sizeof(buf), "max_freq = %ld\n", cfg.max_freq);
  out += buf;
  std::snprintf(buf, sizeof(buf), "min_uses = %ld\n", cfg.min_uses);
  out += buf;
  std::snprintf(buf, sizeof(buf), "min_freq = %ld\n", cfg.min_freq);
  out += buf;
  auto ratio_line = [&](const char* key, double v) {
    char num[32];
    const auto res = std::to_chars(num, num + sizeof(num), v);  // shortest round-trip
    out += key;
    out += " = ";
    out.append(num, res.ptr);
    out += '\n';
  };
  ratio_line("ratio_train", cfg.ratio_train);
  ratio_line("ratio_valid", cfg.ratio_valid);
  ratio_line("ratio_test", cfg.ratio_test);
  std::snprintf(buf, sizeof(buf), "seed = %" PRIu64 "\n", cfg.seed);
  out += buf;
  std::snprintf(buf, sizeof(buf), "n_sentences = %d\n", ds.n_sentences);
  out += buf;

  out += "[vocab]\n";
  for (int id = 3; id < ds.vocab.size(); ++id) {
    std::snprintf(buf, sizeof(buf), "%d ", id);
    out += buf;
    out += ds.vocab.token_of[static_cast<size_t>(id)];
    out += '\n';
  }

  out += "[meta]\n";
  for (const auto& entry : ds.meta) {
    out += entry.word;
    out += " :";
    for (const int sid : entry.examples) {
      std::snprintf(buf, sizeof(buf), " %d", sid);
      out += buf;
    }
    out += '\n';
  }

  out += "[lm-pool]\n";
  for (const int sid : ds.lm_pool) {
    std::snprintf(buf, sizeof(buf), "%d\n", sid);
    out += buf;
  }

  out += "[splits]\n";
  for (const Split split : all_splits) {
    out += split_name(split);
    out += " words :";
    for (const int widx : ds.words_of(split)) {
      out += ' ';
      out += ds.meta[static_cast<size_t>(widx)].word;
    }
    out += '\n';
  }
  for (const Split split : all_splits) {
    out += split_name(split);
    out += " lm :";
    for (const int sid : ds.lm_of(split)) {
      std::snprintf(buf, sizeof(buf), " %d", sid);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> fields;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

}  // namespace detail

inline MetaWordDataset read_manifest(const std::string& text) {
  MetaWordDataset ds;
  ds.vocab = Vocabulary{};
  std::unordered_map<std::string, int> word_index;
  std::string section;
  size_t pos = 0;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    raise(errc::bad_config,
          "manifest line " + std::to_string(line_no) + ": " + why);
  };
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      section = line;
      continue;
    }
    if (section == "[config]") {
      const size_t eq = line.find(" = ");
      if (eq == std::string::npos) fail("expected 'key = value'");
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 3);
      if (key == "max_freq") ds.config.max_freq = std::stol(value);
      else if (key == "min_uses") ds.config.min_uses = std::stol(value);
      else if (key == "min_freq") ds.config.min_freq = std::stol(value);
      else if (key == "ratio_train") ds.config.ratio_train = std::stod(value);
      else if (key == "ratio_valid") ds.config.ratio_valid = std::stod(value);
      else if (key == "ratio_test") ds.config.ratio_test = std::stod(value);
      else if (key == "seed") ds.config.seed = std::stoull(value);
      else if (key == "n_sentences") ds.n_sentences = std::stoi(value);
      else fail("unknown config key '" + key + "'");
    } else if (section == "[vocab]") {
      const size_t sp = line.find(' ');
      if (sp == std::string::npos) fail("expected 'id token'");
      const int id = std::stoi(line.substr(0, sp));
      if (id != ds.vocab.size()) fail("vocab ids must be dense and ordered");
      ds.vocab.add(line.substr(sp + 1));
    } else if (section == "[meta]") {
      const size_t colon = line.find(" :");
      if (colon == std::string::npos) fail("expected 'word : ids'");
      MetaWordEntry entry;
      entry.word = line.substr(0, colon);
      for (const auto& field : detail::split_ws(line.substr(colon + 2))) {
        entry.examples.push_back(std::stoi(field));
      }
      word_index.emplace(entry.word, static_cast<int>(ds.meta.size()));
      ds.meta.push_back(std::move(entry));
    } else if (section == "[lm-pool]") {
      ds.lm_pool.push_back(std::stoi(line));
    } else if (section == "[splits]") {
      const size_t colon = line.find(" :");
      if (colon == std::string::npos) fail("expected 'split kind : items'");
      const auto head = detail::split_ws(line.substr(0, colon));
      if (head.size() != 2) fail("expected '<split> words|lm : items'");
      size_t si = 3;
      for (const Split split : all_splits) {
        if (head[0] == split_name(split)) si = static_cast<size_t>(split);
      }
      if (si == 3) fail("unknown split '" + head[0] + "'");
      const auto items = detail::split_ws(line.substr(colon + 2));
      if (head[1] == "words") {
        for (const auto& word : items) {
          const auto it = word_index.find(word);
          if (it == word_index.end()) fail("unknown meta word '" + word + "'");
          ds.split_words[si].push_back(it->second);
        }
      } else if (head[1] == "lm") {
        for (const auto& item : items) {
          ds.split_lm[si].push_back(std::stoi(item));
        }
      } else {
        fail("expected 'words' or 'lm'");
      }
    } else {
      fail("content outside any known section");
    }
  }
  ds.vocab.min_freq = ds.config.min_freq;
  return ds;
}

}  // namespace minnow
