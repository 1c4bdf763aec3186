#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "minnow/text.hpp"

using namespace minnow;

TEST_CASE("tokenize: clitics and punctuation") {
  CHECK(tokenize_sentence("Susie's dog ran.") ==
        std::vector<std::string>{"susie", "'s", "dog", "ran", "."});
  CHECK(tokenize_sentence("") == std::vector<std::string>{});
  CHECK(tokenize_sentence("DON'T stop!") ==
        std::vector<std::string>{"do", "n't", "stop", "!"});
  CHECK(tokenize_sentence("we're, we've, we'll") ==
        std::vector<std::string>{"we", "'re", ",", "we", "'ve", ",", "we",
                                 "'ll"});
  CHECK(tokenize_sentence("I'd o'clock I'm") ==
        std::vector<std::string>{"i", "'d", "o'clock", "i", "'m"});
  CHECK(tokenize_sentence("(hello)") ==
        std::vector<std::string>{"(", "hello", ")"});
  CHECK(tokenize_sentence("!!") == std::vector<std::string>{"!", "!"});
}

TEST_CASE("tokenize: determinism") {
  const std::string line = "The Cat, who wasn't THERE, said: \"hi!\"";
  CHECK(tokenize_sentence(line) == tokenize_sentence(line));
}

TEST_CASE("punctuation predicate") {
  CHECK(is_punctuation("."));
  CHECK(is_punctuation("?!"));
  CHECK_FALSE(is_punctuation("a"));
  CHECK_FALSE(is_punctuation("n't"));
  CHECK_FALSE(is_punctuation("3"));
}

TEST_CASE("normalize: dedup and minimum length") {
  const Corpus c = normalize_corpus({"A dog.", "a dog .", "!!"});
  REQUIRE(c.sentences.size() == 1);
  CHECK(c.sentences[0].tokens == std::vector<std::string>{"a", "dog", "."});
  CHECK(c.sentences[0].id == 0);

  const Corpus single = normalize_corpus({"x"});
  REQUIRE(single.sentences.size() == 1);
  CHECK(single.sentences[0].tokens == std::vector<std::string>{"x"});

  CHECK_THROWS_MATCHES(normalize_corpus({".", ",", "?"}), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::StartsWith("EmptyCorpus")));
}

TEST_CASE("normalize: ids assigned in retained order, provenance kept") {
  const Corpus c = normalize_corpus({"!!", "one two", "one two", "three"});
  REQUIRE(c.sentences.size() == 2);
  CHECK(c.sentences[0].id == 0);
  CHECK(c.sentences[0].source_line == 1);
  CHECK(c.sentences[1].id == 1);
  CHECK(c.sentences[1].source_line == 3);
}

TEST_CASE("normalize: idempotence over the rendered dump") {
  const auto lines = read_lines(std::string(MINNOW_SOURCE_DIR) +
                                "/data/fixture_corpus.txt");
  const Corpus once = normalize_corpus(lines);
  std::vector<std::string> dump_lines;
  {
    std::istringstream dump(render_corpus(once));
    std::string line;
    while (std::getline(dump, line)) dump_lines.push_back(line);
  }
  const Corpus twice = normalize_corpus(dump_lines);
  REQUIRE(once.sentences.size() == twice.sentences.size());
  for (size_t i = 0; i < once.sentences.size(); ++i) {
    CHECK(once.sentences[i].tokens == twice.sentences[i].tokens);
  }
}

TEST_CASE("normalize: dedup soundness and lowercase closure") {
  const auto lines = read_lines(std::string(MINNOW_SOURCE_DIR) +
                                "/data/fixture_corpus.txt");
  const Corpus c = normalize_corpus(lines);
  std::set<std::vector<std::string>> seen;
  for (const auto& s : c.sentences) {
    CHECK(seen.insert(s.tokens).second);
    REQUIRE_FALSE(s.tokens.empty());
    for (const auto& t : s.tokens) {
      CHECK(lowercase_ascii(t) == t);
      CHECK(t.find(' ') == std::string::npos);
    }
  }
}

TEST_CASE("pos lexicon: attach, fallback, and errors") {
  Corpus c = normalize_corpus({"the dog ran ."});

  SECTION("lexicon attached verbatim") {
    std::unordered_map<std::string, PosTag> lex{{"dog", PosTag::noun}};
    const Corpus tagged = tag_categories(c, lex);
    CHECK(pos_of(tagged, "dog") == PosTag::noun);
    CHECK(pos_of(tagged, "ran") == PosTag::other);  // absent from the lexicon
  }

  SECTION("no lexicon: every word is ANY, punctuation OTHER") {
    const Corpus tagged = tag_categories(c, std::nullopt);
    CHECK(pos_of(tagged, "dog") == PosTag::any);
    CHECK(pos_of(tagged, ".") == PosTag::other);
  }

  SECTION("unknown tag") {
    std::istringstream in("dog\tX\n");
    CHECK_THROWS_MATCHES(parse_pos_lexicon(in), Error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::StartsWith("MalformedLexicon")));
  }

  SECTION("duplicate token") {
    std::istringstream in("dog\tN\ndog\tV\n");
    CHECK_THROWS_MATCHES(parse_pos_lexicon(in), Error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::StartsWith("MalformedLexicon")));
  }

  SECTION("well-formed file") {
    std::istringstream in("dog\tN\nran\tV\nquick\tADJ\nvery\tADV\nthe\tOTHER\n");
    const auto lex = parse_pos_lexicon(in);
    CHECK(lex.at("quick") == PosTag::adj);
    CHECK(lex.at("very") == PosTag::adv);
  }
}

TEST_CASE("frequency table counts every token") {
  const Corpus c = normalize_corpus({"a b a", "b a ."});
  const FrequencyTable t = count_frequencies(c);
  CHECK(t.of("a") == 3);
  CHECK(t.of("b") == 2);
  CHECK(t.of(".") == 1);
  CHECK(t.of("zzz") == 0);
  long total = 0;
  for (const auto& [tok, n] : t.counts) total += n;
  CHECK(total == 6);
}
