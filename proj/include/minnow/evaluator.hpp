#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "minnow/dataset.hpp"
#include "minnow/episode.hpp"
#include "minnow/error.hpp"
#include "minnow/model.hpp"
#include "minnow/rng.hpp"

namespace minnow {

/// log p(query | context) under some model; the evaluator only needs this
/// function, so tests can swap in oracle scorers.
using ScoreFn =
    std::function<double(const std::vector<int>&, const std::vector<int>&)>;

template <typename T>
ScoreFn model_scorer(const Parameters<T>& params) {
  return [&params](const std::vector<int>& context,
                   const std::vector<int>& query) {
    return sequence_logprob(params, context, query);
  };
}

struct TaskCandidate {
  std::string word;
  std::vector<int> study_ids;  // K-1 sentence ids
  int query_id = -1;
};

struct ClassificationTask {
  std::vector<TaskCandidate> candidates;  // C entries
  int K = 0;
};

/// C-way tasks over one held-out split: every eligible word contributes one
/// frozen sample of K examples (K-1 study + 1 query); words are shuffled once
/// with the fixed seed and grouped into consecutive blocks of C, discarding
/// the final partial block.
inline std::vector<ClassificationTask> build_word_tasks(
    const std::vector<const MetaWordEntry*>& split_entries, int K, int C,
    uint64_t seed) {
  if (K < 2) raise(errc::bad_config, "K must be >= 2");
  if (C < 2) raise(errc::bad_config, "C must be >= 2");
  std::vector<const MetaWordEntry*> eligible;
  for (const auto* entry : split_entries) {
    if (entry->n_uses() >= static_cast<size_t>(K)) eligible.push_back(entry);
  }
  if (eligible.size() < static_cast<size_t>(C)) {
    raise(errc::insufficient_words,
          std::to_string(eligible.size()) + " eligible words, need >= " +
              std::to_string(C));
  }
  Pcg32 order_rng = derive_stream(seed, "eval.order");
  order_rng.shuffle(eligible);

  std::vector<ClassificationTask> tasks;
  const size_t n_tasks = eligible.size() / static_cast<size_t>(C);
  for (size_t t = 0; t < n_tasks; ++t) {
    ClassificationTask task;
    task.K = K;
    for (int c = 0; c < C; ++c) {
      const auto* entry = eligible[t * static_cast<size_t>(C) + static_cast<size_t>(c)];
      std::vector<int> ids = entry->examples;
      Pcg32 rng = derive_stream(seed, "eval.task." + entry->word);
      rng.shuffle(ids);
      TaskCandidate cand;
      cand.word = entry->word;
      cand.study_ids.assign(ids.begin(), ids.begin() + (K - 1));
      cand.query_id = ids[static_cast<size_t>(K) - 1];
      task.candidates.push_back(std::move(cand));
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

struct ClassifyResult {
  bool skipped = false;
  std::vector<int> predictions;        // per query
  std::vector<std::vector<double>> scores;  // [query][candidate]
};

/// Scores every query of the task against every candidate context and
/// predicts the argmax; exact ties break toward the lowest candidate index.
/// A task whose sequences exceed the model's limit is skipped, not truncated.
inline ClassifyResult classify(const ScoreFn& score,
                               const ClassificationTask& task,
                               const Corpus& corpus, const Vocabulary& vocab,
                               MaskMode mode = MaskMode::placeholder) {
  const size_t C = task.candidates.size();
  std::vector<std::vector<int>> contexts(C), queries(C);
  ClassifyResult result;
  try {
    for (size_t c = 0; c < C; ++c) {
      const auto& cand = task.candidates[c];
      auto [ctx, query] = serialize_context_query(
          cand.study_ids, cand.query_id, cand.word, corpus, vocab, mode);
      contexts[c] = std::move(ctx);
      queries[c] = std::move(query);
    }
    result.scores.assign(C, std::vector<double>(C, 0.0));
    for (size_t q = 0; q < C; ++q) {
      for (size_t c = 0; c < C; ++c) {
        result.scores[q][c] = score(contexts[c], queries[q]);
      }
      size_t best = 0;
      for (size_t c = 1; c < C; ++c) {
        if (result.scores[q][c] > result.scores[q][best]) best = c;
      }
      result.predictions.push_back(static_cast<int>(best));
    }
  } catch (const Error& err) {
    if (err.code() == errc::sequence_too_long) {
      result.skipped = true;
      result.predictions.clear();
      result.scores.clear();
      return result;
    }
    throw;
  }
  return result;
}

struct WordEvalReport {
  int n_tasks = 0;
  int n_skipped = 0;
  long n_queries = 0;
  long n_correct = 0;
  std::string records;

  double accuracy() const {
    return n_queries == 0
               ? 0.0
               : static_cast<double>(n_correct) / static_cast<double>(n_queries);
  }
};

/// Aggregate classification over all tasks. The empty-string ablation
/// re-serializes every example with the target word deleted instead of
/// masked.
inline WordEvalReport evaluate_words(const ScoreFn& score,
                                     const std::vector<ClassificationTask>& tasks,
                                     const Corpus& corpus,
                                     const Vocabulary& vocab,
                                     MaskMode mode = MaskMode::placeholder) {
  WordEvalReport report;
  char buf[64];
  for (size_t t = 0; t < tasks.size(); ++t) {
    const auto res = classify(score, tasks[t], corpus, vocab, mode);
    report.n_tasks += 1;
    if (res.skipped) {
      report.n_skipped += 1;
      std::snprintf(buf, sizeof(buf), "task %zu skipped\n", t);
      report.records += buf;
      continue;
    }
    for (size_t q = 0; q < res.predictions.size(); ++q) {
      const bool correct = res.predictions[q] == static_cast<int>(q);
      report.n_queries += 1;
      report.n_correct += correct ? 1 : 0;
      std::snprintf(buf, sizeof(buf), "task %zu query %zu label %zu pred %d correct %d scores",
                    t, q, q, res.predictions[q], correct ? 1 : 0);
      report.records += buf;
      for (const double s : res.scores[q]) {
        std::snprintf(buf, sizeof(buf), " %.6f", s);
        report.records += buf;
      }
      report.records += '\n';
    }
  }
  return report;
}

inline std::string render_word_report(const WordEvalReport& report) {
  char buf[160];
  std::string out = "held-out word classification\n";
  std::snprintf(buf, sizeof(buf), "tasks %d  skipped %d\n", report.n_tasks,
                report.n_skipped);
  out += buf;
  std::snprintf(buf, sizeof(buf), "queries %ld  correct %ld\n",
                report.n_queries, report.n_correct);
  out += buf;
  std::snprintf(buf, sizeof(buf), "accuracy %.4f\n", report.accuracy());
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------
// syntactic category classification

struct SyntaxQuery {
  std::vector<std::string> tokens;
  int expected = 0;  // 1 or 2
};

struct SyntaxPair {
  std::string cat1, cat2;
  std::vector<std::string> signal1, signal2;  // pre-tokenized study sentences
  std::vector<SyntaxQuery> queries;
};

/// Parses the plain-text syntax dataset: per block, a "pair:" header naming
/// the two categories, one "signal 1:"/"signal 2:" sentence each, and
/// "query 1:"/"query 2:" lines labeled with the expected category. Sentences
/// are pre-tokenized; the placeholder is the literal token [new-token].
inline std::vector<SyntaxPair> parse_syntax_file(const std::string& text,
                                                 const std::string& origin =
                                                     "<syntax>") {
  std::vector<SyntaxPair> pairs;
  size_t pos = 0;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    raise(errc::malformed_syntax_file,
          origin + ":" + std::to_string(line_no) + ": " + why);
  };
  auto has_placeholder = [](const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) {
      if (t == Vocabulary::placeholder_surface) return true;
    }
    return false;
  };
  auto finish = [&](SyntaxPair& pair) {
    if (pair.signal1.empty() || pair.signal2.empty()) {
      fail("pair " + pair.cat1 + ":" + pair.cat2 + " is missing a signal");
    }
    if (pair.queries.empty()) {
      fail("pair " + pair.cat1 + ":" + pair.cat2 + " has no queries");
    }
  };
  bool in_pair = false;
  SyntaxPair current;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const size_t colon = line.find(": ");
    if (colon == std::string::npos) fail("expected 'key: value'");
    const std::string key = line.substr(0, colon);
    const std::string value = line.substr(colon + 2);
    if (key == "pair") {
      if (in_pair) {
        finish(current);
        pairs.push_back(std::move(current));
        current = SyntaxPair{};
      }
      const auto cats = detail::split_ws(value);
      if (cats.size() != 2) fail("pair header needs two categories");
      if (cats[0] == cats[1]) fail("pair categories must differ");
      current.cat1 = cats[0];
      current.cat2 = cats[1];
      in_pair = true;
    } else if (key == "signal 1" || key == "signal 2") {
      if (!in_pair) fail("signal before any pair header");
      auto tokens = detail::split_ws(value);
      if (!has_placeholder(tokens)) fail("signal lacks the placeholder token");
      auto& slot = key == "signal 1" ? current.signal1 : current.signal2;
      if (!slot.empty()) fail("duplicate " + key);
      slot = std::move(tokens);
    } else if (key == "query 1" || key == "query 2") {
      if (!in_pair) fail("query before any pair header");
      SyntaxQuery q;
      q.tokens = detail::split_ws(value);
      if (!has_placeholder(q.tokens)) fail("query lacks the placeholder token");
      q.expected = key == "query 1" ? 1 : 2;
      current.queries.push_back(std::move(q));
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (in_pair) {
    finish(current);
    pairs.push_back(std::move(current));
  }
  if (pairs.empty()) {
    raise(errc::malformed_syntax_file, origin + ": no pairs found");
  }
  return pairs;
}

inline std::vector<int> encode_pretokenized(const std::vector<std::string>& tokens,
                                            const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.lookup(t));
  return ids;
}

struct SyntaxPairResult {
  std::string cat1, cat2;
  long n1 = 0, correct1 = 0;  // queries expecting category 1
  long n2 = 0, correct2 = 0;

  long total() const { return n1 + n2; }
  long correct() const { return correct1 + correct2; }
  double accuracy() const {
    return total() == 0 ? 0.0
                        : static_cast<double>(correct()) /
                              static_cast<double>(total());
  }
  double acc_1_over_2() const {
    return n1 == 0 ? 0.0 : static_cast<double>(correct1) / static_cast<double>(n1);
  }
  double acc_2_over_1() const {
    return n2 == 0 ? 0.0 : static_cast<double>(correct2) / static_cast<double>(n2);
  }
};

struct SyntaxEvalReport {
  std::vector<SyntaxPairResult> pairs;
  std::string records;

  double mean_accuracy() const {
    if (pairs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& p : pairs) sum += p.accuracy();
    return sum / static_cast<double>(pairs.size());
  }
};

/// One-shot syntactic category discrimination: each query is scored against
/// the two single-example signal contexts (K-1 = 1) and the higher likelihood
/// wins; exact ties go to category 1. Reports per-pair aggregate and
/// directional accuracies.
inline SyntaxEvalReport evaluate_syntax(const ScoreFn& score,
                                        const std::vector<SyntaxPair>& pairs,
                                        const Vocabulary& vocab) {
  SyntaxEvalReport report;
  char buf[128];
  for (const auto& pair : pairs) {
    SyntaxPairResult res;
    res.cat1 = pair.cat1;
    res.cat2 = pair.cat2;
    auto make_context = [&](const std::vector<std::string>& signal) {
      std::vector<int> ctx;
      ctx.push_back(Vocabulary::sep_id);
      const auto body = encode_pretokenized(signal, vocab);
      ctx.insert(ctx.end(), body.begin(), body.end());
      ctx.push_back(Vocabulary::sep_id);
      return ctx;
    };
    const auto ctx1 = make_context(pair.signal1);
    const auto ctx2 = make_context(pair.signal2);
    for (size_t qi = 0; qi < pair.queries.size(); ++qi) {
      const auto& q = pair.queries[qi];
      std::vector<int> query = encode_pretokenized(q.tokens, vocab);
      query.push_back(Vocabulary::sep_id);
      const double s1 = score(ctx1, query);
      const double s2 = score(ctx2, query);
      const int pred = s1 >= s2 ? 1 : 2;
      const bool correct = pred == q.expected;
      if (q.expected == 1) {
        res.n1 += 1;
        res.correct1 += correct ? 1 : 0;
      } else {
        res.n2 += 1;
        res.correct2 += correct ? 1 : 0;
      }
      std::snprintf(buf, sizeof(buf),
                    "pair %s:%s query %zu expected %d pred %d correct %d "
                    "score1 %.6f score2 %.6f\n",
                    pair.cat1.c_str(), pair.cat2.c_str(), qi, q.expected, pred,
                    correct ? 1 : 0, s1, s2);
      report.records += buf;
    }
    report.pairs.push_back(std::move(res));
  }
  return report;
}

inline std::string render_syntax_report(const SyntaxEvalReport& report) {
  char buf[192];
  std::string out = "syntactic category classification\n";
  for (const auto& p : report.pairs) {
    std::snprintf(buf, sizeof(buf),
                  "pair %-12s %-12s total %4ld acc %.4f acc(1>2) %.4f (%ld/%ld) "
                  "acc(2>1) %.4f (%ld/%ld)\n",
                  p.cat1.c_str(), p.cat2.c_str(), p.total(), p.accuracy(),
                  p.acc_1_over_2(), p.correct1, p.n1, p.acc_2_over_1(),
                  p.correct2, p.n2);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "mean accuracy %.4f\n",
                report.mean_accuracy());
  out += buf;
  return out;
}

}  // namespace minnow
