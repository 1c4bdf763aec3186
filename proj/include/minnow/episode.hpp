#pragma once

#include <limits>
#include <string>
#include <vector>

#include "minnow/dataset.hpp"
#include "minnow/error.hpp"
#include "minnow/rng.hpp"
#include "minnow/text.hpp"

namespace minnow {

enum class EpisodeKind { meta, lm };

struct Episode {
  EpisodeKind kind = EpisodeKind::meta;
  std::string word;              // meta only
  std::vector<int> example_ids;  // exactly K sentence ids
  int epoch = 0;
};

/// Token-id serialization of one episode: SEP x1 SEP x2 ... SEP xK SEP.
struct EncodedSequence {
  std::vector<int> ids;
  std::vector<int> boundaries;  // indices of SEP tokens
  EpisodeKind kind = EpisodeKind::meta;
};

enum class MaskMode {
  placeholder,   // target word -> PLACEHOLDER
  empty_string,  // target word deleted (coherence ablation)
};

/// One epoch's episodes for one word: the example list is shuffled with
/// epoch_rng and cut into floor(n_w / K) consecutive groups of K; the
/// leftover n_w mod K examples sit out this epoch.
inline std::vector<Episode> epoch_meta_episodes(const MetaWordEntry& entry,
                                                int K, int epoch,
                                                Pcg32& epoch_rng) {
  if (K < 2) raise(errc::bad_config, "K must be >= 2");
  std::vector<int> ids = entry.examples;
  epoch_rng.shuffle(ids);
  const size_t n_episodes = ids.size() / static_cast<size_t>(K);
  std::vector<Episode> episodes;
  episodes.reserve(n_episodes);
  for (size_t e = 0; e < n_episodes; ++e) {
    Episode ep;
    ep.kind = EpisodeKind::meta;
    ep.word = entry.word;
    ep.epoch = epoch;
    ep.example_ids.assign(ids.begin() + static_cast<long>(e) * K,
                          ids.begin() + static_cast<long>(e + 1) * K);
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

/// `count` language-modeling episodes of K distinct sentences each, drawn
/// uniformly without replacement within an episode (with replacement across
/// episodes).
inline std::vector<Episode> epoch_lm_episodes(const std::vector<int>& lm_sentences,
                                              int K, int count, int epoch,
                                              Pcg32& epoch_rng) {
  if (K < 2) raise(errc::bad_config, "K must be >= 2");
  if (lm_sentences.size() < static_cast<size_t>(K)) {
    raise(errc::insufficient_pool,
          "lm pool has " + std::to_string(lm_sentences.size()) +
              " sentences, need at least " + std::to_string(K));
  }
  std::vector<Episode> episodes;
  episodes.reserve(static_cast<size_t>(count));
  std::vector<int> pool = lm_sentences;
  for (int e = 0; e < count; ++e) {
    // partial Fisher-Yates: draw K distinct indices into the front
    Episode ep;
    ep.kind = EpisodeKind::lm;
    ep.epoch = epoch;
    for (int k = 0; k < K; ++k) {
      const uint32_t span = static_cast<uint32_t>(pool.size() - static_cast<size_t>(k));
      const size_t j = static_cast<size_t>(k) + epoch_rng.below(span);
      std::swap(pool[static_cast<size_t>(k)], pool[j]);
      ep.example_ids.push_back(pool[static_cast<size_t>(k)]);
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

namespace detail {

inline void encode_sentence(const Sentence& sentence, const std::string& word,
                            const Vocabulary& vocab, MaskMode mode, bool mask,
                            std::vector<int>& out) {
  for (const auto& token : sentence.tokens) {
    if (mask && token == word) {
      if (mode == MaskMode::placeholder) {
        out.push_back(Vocabulary::placeholder_id);
      }
      continue;  // empty_string mode: token deleted
    }
    out.push_back(vocab.lookup(token));
  }
}

inline void check_word_present(const Sentence& sentence,
                               const std::string& word) {
  for (const auto& token : sentence.tokens) {
    if (token == word) return;
  }
  raise(errc::target_missing, "sentence " + std::to_string(sentence.id) +
                                  " does not contain target word '" + word +
                                  "'");
}

}  // namespace detail

/// Serializes an episode to token ids. Meta episodes mask every occurrence of
/// the target word (placeholder by default, deletion in the coherence
/// ablation); all other out-of-vocabulary tokens become UNK. Sequences longer
/// than max_len are truncated from the right; the leading SEP always stays.
inline EncodedSequence serialize_episode(
    const Episode& ep, const Corpus& corpus, const Vocabulary& vocab,
    int max_len = std::numeric_limits<int>::max(),
    MaskMode mode = MaskMode::placeholder) {
  const bool is_meta = ep.kind == EpisodeKind::meta;
  EncodedSequence seq;
  seq.kind = ep.kind;
  seq.ids.push_back(Vocabulary::sep_id);
  for (const int sid : ep.example_ids) {
    const auto& sentence = corpus.sentences[static_cast<size_t>(sid)];
    if (is_meta) detail::check_word_present(sentence, ep.word);
    detail::encode_sentence(sentence, ep.word, vocab, mode, is_meta, seq.ids);
    seq.ids.push_back(Vocabulary::sep_id);
  }
  if (max_len < 1) max_len = 1;
  if (static_cast<int>(seq.ids.size()) > max_len) {
    seq.ids.resize(static_cast<size_t>(max_len));
  }
  for (size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.ids[i] == Vocabulary::sep_id) {
      seq.boundaries.push_back(static_cast<int>(i));
    }
  }
  return seq;
}

/// Study-example context alone: SEP x1 SEP ... SEP x_n SEP.
inline std::vector<int> serialize_context(const std::vector<int>& study_ids,
                                          const std::string& word,
                                          const Corpus& corpus,
                                          const Vocabulary& vocab,
                                          MaskMode mode = MaskMode::placeholder) {
  std::vector<int> context;
  context.push_back(Vocabulary::sep_id);
  for (const int sid : study_ids) {
    const auto& sentence = corpus.sentences[static_cast<size_t>(sid)];
    detail::check_word_present(sentence, word);
    detail::encode_sentence(sentence, word, vocab, mode, true, context);
    context.push_back(Vocabulary::sep_id);
  }
  return context;
}

/// Context/query formatting for likelihood scoring. The context is
/// SEP x1 SEP ... SEP x_{K-1} SEP and the query is q SEP; concatenating the
/// two equals serialize_episode over the K examples token for token.
inline std::pair<std::vector<int>, std::vector<int>> serialize_context_query(
    const std::vector<int>& study_ids, int query_id, const std::string& word,
    const Corpus& corpus, const Vocabulary& vocab,
    MaskMode mode = MaskMode::placeholder) {
  std::vector<int> context = serialize_context(study_ids, word, corpus, vocab, mode);
  std::vector<int> query;
  const auto& sentence = corpus.sentences[static_cast<size_t>(query_id)];
  detail::check_word_present(sentence, word);
  detail::encode_sentence(sentence, word, vocab, mode, true, query);
  query.push_back(Vocabulary::sep_id);
  return {std::move(context), std::move(query)};
}

/// Debug dump: one line per episode (kind, word, sentence ids).
inline std::string render_episode(const Episode& ep) {
  std::string out = ep.kind == EpisodeKind::meta ? "meta" : "lm";
  out += ' ';
  out += ep.kind == EpisodeKind::meta ? ep.word : "-";
  out += " :";
  for (const int sid : ep.example_ids) {
    out += ' ';
    out += std::to_string(sid);
  }
  return out;
}

/// Debug dump: space-separated token ids.
inline std::string render_encoded(const EncodedSequence& seq) {
  std::string out;
  for (size_t i = 0; i < seq.ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(seq.ids[i]);
  }
  return out;
}

}  // namespace minnow
