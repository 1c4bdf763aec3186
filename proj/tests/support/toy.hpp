#pragma once

// Small shared helpers for model-level tests.

#include <string>
#include <vector>

#include "minnow/dataset.hpp"
#include "minnow/model.hpp"
#include "minnow/text.hpp"

namespace minnow_tests {

inline minnow::Vocabulary make_vocab(const std::vector<std::string>& tokens) {
  minnow::Vocabulary vocab;
  for (const auto& t : tokens) vocab.add(t);
  return vocab;
}

inline minnow::Corpus corpus_from_lines(const std::vector<std::string>& lines) {
  return minnow::normalize_corpus(lines);
}

/// Mean NLL of a batch, forward only. Must agree with backward()'s loss.
template <typename T>
double batch_loss(const minnow::Parameters<T>& params,
                  const std::vector<minnow::SeqExample>& batch) {
  double sum = 0.0;
  long count = 0;
  for (const auto& ex : batch) {
    minnow::ForwardCache<T> cache;
    minnow::forward(params, ex.inputs, cache);
    for (size_t t = 0; t < ex.inputs.size(); ++t) {
      if (!ex.mask[t]) continue;
      sum -= minnow::log_softmax_at(cache.logits.row(static_cast<int>(t)),
                                    params.cfg.vocab_size, ex.targets[t]);
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

/// Random token sequences for probing (ids in [0, vocab)).
inline std::vector<int> random_ids(minnow::Pcg32& rng, int len, int vocab) {
  std::vector<int> ids(static_cast<size_t>(len));
  for (auto& id : ids) id = static_cast<int>(rng.below(static_cast<uint32_t>(vocab)));
  return ids;
}

}  // namespace minnow_tests
