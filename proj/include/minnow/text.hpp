#pragma once

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "minnow/error.hpp"

namespace minnow {

enum class PosTag { noun, verb, adj, adv, other, any };

inline const char* pos_tag_name(PosTag t) {
  switch (t) {
    case PosTag::noun: return "N";
    case PosTag::verb: return "V";
    case PosTag::adj: return "ADJ";
    case PosTag::adv: return "ADV";
    case PosTag::other: return "OTHER";
    case PosTag::any: return "ANY";
  }
  return "?";
}

inline std::optional<PosTag> pos_tag_from_name(std::string_view s) {
  if (s == "N") return PosTag::noun;
  if (s == "V") return PosTag::verb;
  if (s == "ADJ") return PosTag::adj;
  if (s == "ADV") return PosTag::adv;
  if (s == "OTHER") return PosTag::other;
  return std::nullopt;
}

struct Sentence {
  int id = -1;
  std::vector<std::string> tokens;
  int source_line = -1;
};

/// Normalized, deduplicated corpus. `pos_lexicon`, when present, maps a token
/// to its (upstream-reduced) most frequent tag; when absent every
/// non-punctuation token is treated as the synthetic tag ANY.
struct Corpus {
  std::vector<Sentence> sentences;
  std::optional<std::unordered_map<std::string, PosTag>> pos_lexicon;
};

struct FrequencyTable {
  std::map<std::string, long> counts;

  long of(const std::string& token) const {
    const auto it = counts.find(token);
    return it == counts.end() ? 0 : it->second;
  }
};

// Byte classes are fixed and locale-free so tokenization is identical across
// platforms. Bytes >= 0x80 (UTF-8 continuations and lead bytes) count as word
// characters; only ASCII non-alphanumerics are punctuation.
inline bool is_word_byte(unsigned char c) {
  if (c >= 0x80) return true;
  if (c >= 'a' && c <= 'z') return true;
  if (c >= 'A' && c <= 'Z') return true;
  return c >= '0' && c <= '9';
}

inline char lower_byte(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string lowercase_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = lower_byte(c);
  return out;
}

/// True iff every byte of the token is ASCII punctuation.
inline bool is_punctuation(std::string_view token) {
  if (token.empty()) return false;
  for (const char c : token) {
    if (is_word_byte(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

namespace detail {

inline const std::array<std::string_view, 7>& clitic_suffixes() {
  static const std::array<std::string_view, 7> suffixes = {
      "n't", "'s", "'re", "'ve", "'ll", "'d", "'m"};
  return suffixes;
}

inline bool is_clitic(std::string_view s) {
  for (const auto suffix : clitic_suffixes()) {
    if (s == suffix) return true;
  }
  return false;
}

// Splits one whitespace-delimited chunk: leading/trailing punctuation bytes
// become single-character tokens, then the remaining core is split once on a
// trailing clitic. A chunk that is exactly a clitic stays whole, so a
// rendered corpus re-tokenizes to itself.
inline void split_chunk(std::string_view chunk, std::vector<std::string>& out) {
  size_t end = chunk.size();
  std::vector<std::string> trailing;
  while (end > 0 && !is_word_byte(static_cast<unsigned char>(chunk[end - 1])) &&
         !is_clitic(chunk.substr(0, end))) {
    trailing.emplace_back(1, chunk[end - 1]);
    --end;
  }
  std::string_view rest = chunk.substr(0, end);
  while (!rest.empty() && !is_word_byte(static_cast<unsigned char>(rest[0])) &&
         !is_clitic(rest)) {
    out.emplace_back(1, rest[0]);
    rest = rest.substr(1);
  }
  if (!rest.empty()) {
    bool split = false;
    if (!is_clitic(rest)) {
      for (const auto suffix : clitic_suffixes()) {
        if (rest.size() > suffix.size() &&
            rest.substr(rest.size() - suffix.size()) == suffix) {
          out.emplace_back(rest.substr(0, rest.size() - suffix.size()));
          out.emplace_back(suffix);
          split = true;
          break;
        }
      }
    }
    if (!split) out.emplace_back(rest);
  }
  for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) {
    out.push_back(std::move(*it));
  }
}

}  // namespace detail

/// Deterministic word-level tokenization: lowercase, split on whitespace,
/// detach leading/trailing punctuation bytes one per token, and split the
/// clitics 's, n't, 're, 've, 'll, 'd, 'm off the end of a word. An empty
/// result is permitted; callers filter.
inline std::vector<std::string> tokenize_sentence(std::string_view raw) {
  const std::string lowered = lowercase_ascii(raw);
  std::vector<std::string> tokens;
  size_t i = 0;
  const size_t n = lowered.size();
  while (i < n) {
    while (i < n && (lowered[i] == ' ' || lowered[i] == '\t' ||
                     lowered[i] == '\r' || lowered[i] == '\n' ||
                     lowered[i] == '\f' || lowered[i] == '\v')) {
      ++i;
    }
    size_t j = i;
    while (j < n && lowered[j] != ' ' && lowered[j] != '\t' &&
           lowered[j] != '\r' && lowered[j] != '\n' && lowered[j] != '\f' &&
           lowered[j] != '\v') {
      ++j;
    }
    if (j > i) {
      detail::split_chunk(std::string_view(lowered).substr(i, j - i), tokens);
    }
    i = j;
  }
  return tokens;
}

/// Tokenizes every line, drops sentences without at least one
/// non-punctuation token, and drops exact duplicate token lists (first
/// occurrence wins). Ids are assigned in retained order.
inline Corpus normalize_corpus(const std::vector<std::string>& lines) {
  Corpus corpus;
  std::set<std::vector<std::string>> seen;
  int next_id = 0;
  for (size_t line_no = 0; line_no < lines.size(); ++line_no) {
    std::vector<std::string> tokens = tokenize_sentence(lines[line_no]);
    bool has_word = false;
    for (const auto& t : tokens) {
      if (!is_punctuation(t)) {
        has_word = true;
        break;
      }
    }
    if (!has_word) continue;
    if (!seen.insert(tokens).second) continue;
    Sentence s;
    s.id = next_id++;
    s.tokens = std::move(tokens);
    s.source_line = static_cast<int>(line_no);
    corpus.sentences.push_back(std::move(s));
  }
  if (corpus.sentences.empty()) {
    raise(errc::empty_corpus, "no sentences survived normalization");
  }
  return corpus;
}

/// Parses a "token<TAB>tag" lexicon. Duplicate tokens and unknown tags are
/// rejected.
inline std::unordered_map<std::string, PosTag> parse_pos_lexicon(
    std::istream& in, const std::string& origin = "<lexicon>") {
  std::unordered_map<std::string, PosTag> lexicon;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      raise(errc::malformed_lexicon,
            origin + ":" + std::to_string(line_no) + ": expected token<TAB>tag");
    }
    const std::string token = line.substr(0, tab);
    const std::string tag_name = line.substr(tab + 1);
    const auto tag = pos_tag_from_name(tag_name);
    if (!tag) {
      raise(errc::malformed_lexicon, origin + ":" + std::to_string(line_no) +
                                         ": unknown tag '" + tag_name + "'");
    }
    if (!lexicon.emplace(token, *tag).second) {
      raise(errc::malformed_lexicon, origin + ":" + std::to_string(line_no) +
                                         ": duplicate token '" + token + "'");
    }
  }
  return lexicon;
}

/// Attaches a lexicon verbatim; absent lexicon means every non-punctuation
/// token passes the category filter as ANY.
inline Corpus tag_categories(
    Corpus corpus,
    std::optional<std::unordered_map<std::string, PosTag>> lexicon) {
  corpus.pos_lexicon = std::move(lexicon);
  return corpus;
}

/// Category of a token under the corpus lexicon rules. Punctuation is always
/// OTHER. With a lexicon, tokens missing from it are OTHER.
inline PosTag pos_of(const Corpus& corpus, const std::string& token) {
  if (is_punctuation(token)) return PosTag::other;
  if (!corpus.pos_lexicon) return PosTag::any;
  const auto it = corpus.pos_lexicon->find(token);
  return it == corpus.pos_lexicon->end() ? PosTag::other : it->second;
}

inline FrequencyTable count_frequencies(const Corpus& corpus) {
  FrequencyTable table;
  for (const auto& sentence : corpus.sentences) {
    for (const auto& token : sentence.tokens) {
      ++table.counts[token];
    }
  }
  return table;
}

/// One sentence per line, tokens joined by single spaces. Feeding the dump
/// back through normalize_corpus reproduces the same corpus.
inline std::string render_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& sentence : corpus.sentences) {
    for (size_t i = 0; i < sentence.tokens.size(); ++i) {
      if (i > 0) out += ' ';
      out += sentence.tokens[i];
    }
    out += '\n';
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::io_error, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::io_error, "cannot open " + path + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) raise(errc::io_error, "short write to " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::io_error, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace minnow
