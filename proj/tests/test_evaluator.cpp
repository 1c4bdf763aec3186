#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "minnow/evaluator.hpp"
#include "support/toy.hpp"

using namespace minnow;
using minnow_tests::make_vocab;

namespace {

// 9 words, each with 4 private sentences built from word-specific tokens, so
// candidate groups never share content words.
struct SeparableFixture {
  Corpus corpus;
  Vocabulary vocab;
  std::vector<MetaWordEntry> entries;

  std::vector<const MetaWordEntry*> entry_ptrs() const {
    std::vector<const MetaWordEntry*> out;
    for (const auto& e : entries) out.push_back(&e);
    return out;
  }
};

SeparableFixture separable_fixture(int n_words = 9, int uses = 4) {
  SeparableFixture f;
  std::vector<std::string> lines;
  std::vector<std::string> vocab_tokens;
  for (int w = 0; w < n_words; ++w) {
    const std::string word = "word" + std::to_string(w);
    const std::string a = "toka" + std::to_string(w);
    const std::string b = "tokb" + std::to_string(w);
    const std::string c = "tokc" + std::to_string(w);
    vocab_tokens.insert(vocab_tokens.end(), {a, b, c});
    for (int u = 0; u < uses; ++u) {
      const std::string first = u % 2 == 0 ? a : b;
      const std::string second = u % 3 == 0 ? c : (u % 3 == 1 ? a : b);
      lines.push_back(word + " " + first + " " + second + " u" +
                      std::to_string(u));
    }
  }
  f.corpus = normalize_corpus(lines);
  f.vocab = make_vocab(vocab_tokens);
  for (int w = 0; w < n_words; ++w) {
    MetaWordEntry e;
    e.word = "word" + std::to_string(w);
    for (const auto& s : f.corpus.sentences) {
      if (s.tokens[0] == e.word) e.examples.push_back(s.id);
    }
    f.entries.push_back(std::move(e));
  }
  return f;
}

ScoreFn constant_scorer(double value) {
  return [value](const std::vector<int>&, const std::vector<int>&) {
    return value;
  };
}

// deterministic pseudo-random scorer keyed on (context, query) content
ScoreFn hash_scorer(uint64_t salt) {
  return [salt](const std::vector<int>& ctx, const std::vector<int>& query) {
    uint64_t h = salt * 1099511628211ULL + 14695981039346656037ULL;
    for (const int id : ctx) h = (h ^ static_cast<uint64_t>(id)) * 1099511628211ULL;
    for (const int id : query) h = (h ^ static_cast<uint64_t>(id + 7)) * 1099511628211ULL;
    return static_cast<double>(h % 100000) / 1000.0;
  };
}

// logprob 0 for a query that repeats any content token of the context,
// -inf-like otherwise
ScoreFn memorizing_oracle() {
  return [](const std::vector<int>& ctx, const std::vector<int>& query) {
    std::set<int> ctx_ids;
    for (const int id : ctx) {
      if (id > Vocabulary::unk_id) ctx_ids.insert(id);
    }
    for (const int id : query) {
      if (id > Vocabulary::unk_id && ctx_ids.count(id)) return 0.0;
    }
    return -1e30;
  };
}

}  // namespace

TEST_CASE("build_word_tasks: discard rule, eligibility, determinism") {
  SeparableFixture f = separable_fixture(9, 4);

  SECTION("9 eligible words at C=4 -> 2 tasks, 1 word discarded") {
    const auto tasks = build_word_tasks(f.entry_ptrs(), 3, 4, 17);
    REQUIRE(tasks.size() == 2);
    std::set<std::string> used;
    for (const auto& task : tasks) {
      REQUIRE(task.candidates.size() == 4);
      for (const auto& cand : task.candidates) {
        CHECK(used.insert(cand.word).second);  // distinct across tasks too
        CHECK(cand.study_ids.size() == 2);
        CHECK(std::find(cand.study_ids.begin(), cand.study_ids.end(),
                        cand.query_id) == cand.study_ids.end());
      }
    }
    CHECK(used.size() == 8);
  }

  SECTION("words below K uses are ineligible") {
    MetaWordEntry small;
    small.word = "tiny";
    small.examples = {0, 1};  // 2 uses < K = 3
    auto entries = f.entry_ptrs();
    entries.push_back(&small);
    const auto tasks = build_word_tasks(entries, 3, 4, 17);
    for (const auto& task : tasks) {
      for (const auto& cand : task.candidates) {
        CHECK(cand.word != "tiny");
      }
    }
  }

  SECTION("insufficient eligible words") {
    auto entries = f.entry_ptrs();
    CHECK_THROWS_MATCHES(build_word_tasks(entries, 5, 4, 17), Error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::StartsWith("InsufficientWords")));
  }

  SECTION("fixed seed fixes the tasks") {
    const auto a = build_word_tasks(f.entry_ptrs(), 3, 4, 17);
    const auto b = build_word_tasks(f.entry_ptrs(), 3, 4, 17);
    REQUIRE(a.size() == b.size());
    for (size_t t = 0; t < a.size(); ++t) {
      for (size_t c = 0; c < a[t].candidates.size(); ++c) {
        CHECK(a[t].candidates[c].word == b[t].candidates[c].word);
        CHECK(a[t].candidates[c].study_ids == b[t].candidates[c].study_ids);
        CHECK(a[t].candidates[c].query_id == b[t].candidates[c].query_id);
      }
    }
    const auto other = build_word_tasks(f.entry_ptrs(), 3, 4, 18);
    bool same = true;
    for (size_t t = 0; t < a.size() && same; ++t) {
      for (size_t c = 0; c < 4; ++c) {
        if (a[t].candidates[c].word != other[t].candidates[c].word) same = false;
      }
    }
    CHECK_FALSE(same);
  }
}

TEST_CASE("classify: tie rule and score properties") {
  SeparableFixture f = separable_fixture(8, 4);
  const auto tasks = build_word_tasks(f.entry_ptrs(), 3, 4, 5);
  REQUIRE(tasks.size() == 2);

  SECTION("uniform scores predict index 0 everywhere") {
    const auto res = classify(constant_scorer(1.25), tasks[0], f.corpus, f.vocab);
    REQUIRE_FALSE(res.skipped);
    for (const int pred : res.predictions) CHECK(pred == 0);
  }

  SECTION("adding a per-query constant never changes predictions") {
    const auto base = hash_scorer(3);
    const auto res1 = classify(base, tasks[0], f.corpus, f.vocab);
    ScoreFn shifted = [&base](const std::vector<int>& ctx,
                              const std::vector<int>& query) {
      double bias = 0.0;
      for (const int id : query) bias += static_cast<double>(id) * 11.5;
      return base(ctx, query) + bias;
    };
    const auto res2 = classify(shifted, tasks[0], f.corpus, f.vocab);
    CHECK(res1.predictions == res2.predictions);
  }

  SECTION("scores under candidate c ignore other candidates' studies") {
    ClassificationTask edited = tasks[0];
    // swap candidate 0's study examples for different ones of the same word
    const auto* entry = [&]() -> const MetaWordEntry* {
      for (const auto& e : f.entries) {
        if (e.word == edited.candidates[0].word) return &e;
      }
      return nullptr;
    }();
    REQUIRE(entry != nullptr);
    std::vector<int> alt;
    for (const int sid : entry->examples) {
      if (sid != edited.candidates[0].query_id) alt.push_back(sid);
    }
    std::reverse(alt.begin(), alt.end());
    edited.candidates[0].study_ids = {alt[0], alt[1]};

    const auto base = hash_scorer(7);
    const auto res1 = classify(base, tasks[0], f.corpus, f.vocab);
    const auto res2 = classify(base, edited, f.corpus, f.vocab);
    for (size_t q = 0; q < res1.scores.size(); ++q) {
      for (size_t c = 1; c < 4; ++c) {
        CHECK(res1.scores[q][c] == res2.scores[q][c]);
      }
    }
  }
}

TEST_CASE("evaluate_words: oracle accuracy, ablation, determinism") {
  SeparableFixture f = separable_fixture(8, 4);
  const auto tasks = build_word_tasks(f.entry_ptrs(), 3, 4, 5);

  SECTION("memorizing oracle is perfect on separable tasks") {
    const auto report =
        evaluate_words(memorizing_oracle(), tasks, f.corpus, f.vocab);
    CHECK(report.n_queries == 8);
    CHECK(report.n_correct == 8);
    CHECK(report.accuracy() == 1.0);
  }

  SECTION("constant scores land on the tie rule: exactly 1/C") {
    const auto report =
        evaluate_words(constant_scorer(0.0), tasks, f.corpus, f.vocab);
    CHECK(report.accuracy() == Catch::Approx(0.25));
  }

  SECTION("ablation serializes without placeholders") {
    bool saw_placeholder = false;
    ScoreFn probe = [&](const std::vector<int>& ctx,
                        const std::vector<int>& query) {
      for (const int id : ctx) {
        if (id == Vocabulary::placeholder_id) saw_placeholder = true;
      }
      for (const int id : query) {
        if (id == Vocabulary::placeholder_id) saw_placeholder = true;
      }
      return 0.0;
    };
    evaluate_words(probe, tasks, f.corpus, f.vocab, MaskMode::empty_string);
    CHECK_FALSE(saw_placeholder);
    evaluate_words(probe, tasks, f.corpus, f.vocab, MaskMode::placeholder);
    CHECK(saw_placeholder);
  }

  SECTION("records are deterministic") {
    const auto a = evaluate_words(hash_scorer(2), tasks, f.corpus, f.vocab);
    const auto b = evaluate_words(hash_scorer(2), tasks, f.corpus, f.vocab);
    CHECK(a.records == b.records);
    CHECK_FALSE(a.records.empty());
  }
}

TEST_CASE("evaluate_words: oversized sequences are skipped and counted") {
  SeparableFixture f = separable_fixture(4, 4);
  const auto tasks = build_word_tasks(f.entry_ptrs(), 3, 4, 5);
  REQUIRE(tasks.size() == 1);
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.vocab_size = f.vocab.size();
  cfg.max_seq_len = 4;  // far below any context+query
  const auto params = init_model<float>(cfg, 1);
  const auto report =
      evaluate_words(model_scorer(params), tasks, f.corpus, f.vocab);
  CHECK(report.n_tasks == 1);
  CHECK(report.n_skipped == 1);
  CHECK(report.n_queries == 0);
}

TEST_CASE("syntax file parsing") {
  const std::string good =
      "pair: noun verb\n"
      "signal 1: a [new-token] here\n"
      "signal 2: we [new-token] daily\n"
      "query 1: the [new-token] fell\n"
      "query 2: they [new-token] fast\n";

  SECTION("well-formed") {
    const auto pairs = parse_syntax_file(good);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].cat1 == "noun");
    CHECK(pairs[0].cat2 == "verb");
    CHECK(pairs[0].signal1 ==
          std::vector<std::string>{"a", "[new-token]", "here"});
    REQUIRE(pairs[0].queries.size() == 2);
    CHECK(pairs[0].queries[1].expected == 2);
  }

  SECTION("malformed variants") {
    const auto starts_with_malformed = Catch::Matchers::MessageMatches(
        Catch::Matchers::StartsWith("MalformedSyntaxFile"));
    CHECK_THROWS_MATCHES(parse_syntax_file(""), Error, starts_with_malformed);
    CHECK_THROWS_MATCHES(
        parse_syntax_file("pair: noun noun\nsignal 1: a [new-token]\n"), Error,
        starts_with_malformed);
    CHECK_THROWS_MATCHES(
        parse_syntax_file("signal 1: a [new-token] here\n"), Error,
        starts_with_malformed);
    CHECK_THROWS_MATCHES(
        parse_syntax_file("pair: noun verb\nsignal 1: no placeholder\n"),
        Error, starts_with_malformed);
    CHECK_THROWS_MATCHES(
        parse_syntax_file(good + "mystery: line\n"), Error,
        starts_with_malformed);
    // missing a signal
    CHECK_THROWS_MATCHES(
        parse_syntax_file("pair: noun verb\nsignal 1: a [new-token] x\n"
                          "query 1: a [new-token] y\n"),
        Error, starts_with_malformed);
  }
}

TEST_CASE("evaluate_syntax: directional accounting and the tie rule") {
  const auto pairs = parse_syntax_file(
      read_file(std::string(MINNOW_SOURCE_DIR) + "/data/syntax_fixture.txt"));
  REQUIRE(pairs.size() == 3);
  const Vocabulary vocab = make_vocab({"a", "the", "we", "she"});

  SECTION("symmetric scores on the balanced fixture give exactly 50%") {
    const auto report = evaluate_syntax(constant_scorer(-1.0), pairs, vocab);
    for (const auto& p : report.pairs) {
      CHECK(p.n1 == p.n2);  // the fixture is balanced
      CHECK(p.acc_1_over_2() == 1.0);  // ties predict category 1
      CHECK(p.acc_2_over_1() == 0.0);
      CHECK(p.accuracy() == Catch::Approx(0.5));
    }
    CHECK(report.mean_accuracy() == Catch::Approx(0.5));
  }

  SECTION("directional counts sum to the pair total; aggregate is weighted") {
    const auto report = evaluate_syntax(hash_scorer(11), pairs, vocab);
    for (const auto& p : report.pairs) {
      CHECK(p.n1 + p.n2 == p.total());
      CHECK(p.correct1 + p.correct2 == p.correct());
      const double weighted = (p.acc_1_over_2() * static_cast<double>(p.n1) +
                               p.acc_2_over_1() * static_cast<double>(p.n2)) /
                              static_cast<double>(p.total());
      CHECK(p.accuracy() == Catch::Approx(weighted));
    }
  }

  SECTION("reports render") {
    const auto report = evaluate_syntax(constant_scorer(0.0), pairs, vocab);
    const std::string table = render_syntax_report(report);
    CHECK(table.find("mean accuracy") != std::string::npos);
    CHECK_FALSE(report.records.empty());
  }
}
