#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "minnow/dataset.hpp"
#include "minnow/error.hpp"
#include "minnow/model.hpp"
#include "minnow/rng.hpp"

namespace minnow {

enum class DecodeMode { greedy, top_p };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::greedy;
  double p = 0.92;  // nucleus mass, top_p only
  int max_new_tokens = 64;
  uint64_t seed = 0;

  void validate() const {
    if (!(p > 0.0 && p <= 1.0)) raise(errc::bad_config, "p must be in (0, 1]");
    if (max_new_tokens < 1) raise(errc::bad_config, "max_new_tokens must be >= 1");
  }
};

/// Token ids of the nucleus: probabilities sorted descending (ties by lower
/// id first), keeping the smallest prefix whose cumulative mass reaches p.
/// The boundary token that crosses p is included.
inline std::vector<int> nucleus_retained(const std::vector<double>& probs,
                                         double p) {
  std::vector<int> order(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)]) {
      return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
    }
    return a < b;
  });
  std::vector<int> retained;
  double mass = 0.0;
  for (const int id : order) {
    retained.push_back(id);
    mass += probs[static_cast<size_t>(id)];
    if (mass >= p) break;
  }
  return retained;
}

/// Continues a study-example context until the model emits SEP (included in
/// the output) or max_new_tokens is reached. Greedy picks the argmax each
/// step (ties to the lowest id); top_p renormalizes over the nucleus and
/// samples from the stream (seed, "gen.<generation_index>").
template <typename T>
std::vector<int> generate(const Parameters<T>& params,
                          const std::vector<int>& context,
                          const DecodeConfig& cfg, int generation_index = 0) {
  cfg.validate();
  if (context.empty() || context.back() != Vocabulary::sep_id) {
    raise(errc::bad_config, "context must end with the separator token");
  }
  if (static_cast<int>(context.size()) + cfg.max_new_tokens >
      params.cfg.max_seq_len) {
    raise(errc::context_too_long,
          "context length " + std::to_string(context.size()) +
              " + max_new_tokens " + std::to_string(cfg.max_new_tokens) +
              " exceeds max_seq_len " + std::to_string(params.cfg.max_seq_len));
  }

  Pcg32 rng = derive_stream(cfg.seed, "gen." + std::to_string(generation_index));
  std::vector<int> sequence = context;
  std::vector<int> out;
  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    const Mat<T> logits = forward_logits(params, sequence);
    const T* row = logits.row(logits.rows - 1);
    int next = 0;
    if (cfg.mode == DecodeMode::greedy) {
      for (int j = 1; j < params.cfg.vocab_size; ++j) {
        if (row[j] > row[next]) next = j;
      }
    } else {
      const auto probs_t = softmax_row(row, params.cfg.vocab_size);
      std::vector<double> probs(probs_t.begin(), probs_t.end());
      const auto retained = nucleus_retained(probs, cfg.p);
      double mass = 0.0;
      for (const int id : retained) mass += probs[static_cast<size_t>(id)];
      const double u = rng.uniform01() * mass;
      double cum = 0.0;
      next = retained.back();
      for (const int id : retained) {
        cum += probs[static_cast<size_t>(id)];
        if (u < cum) {
          next = id;
          break;
        }
      }
    }
    out.push_back(next);
    sequence.push_back(next);
    if (next == Vocabulary::sep_id) break;
  }
  return out;
}

/// Detokenization for inspection: tokens joined by spaces, the placeholder
/// rendered as its surface (or the provided word), SEP as a line terminator.
inline std::string render(const std::vector<int>& ids, const Vocabulary& vocab,
                          const std::string& surface_form = "") {
  std::string out;
  bool at_line_start = true;
  for (const int id : ids) {
    if (id < 0 || id >= vocab.size()) {
      raise(errc::unknown_id, "token id " + std::to_string(id) +
                                  " outside vocabulary of size " +
                                  std::to_string(vocab.size()));
    }
    if (id == Vocabulary::sep_id) {
      out += '\n';
      at_line_start = true;
      continue;
    }
    if (!at_line_start) out += ' ';
    if (id == Vocabulary::placeholder_id && !surface_form.empty()) {
      out += surface_form;
    } else {
      out += vocab.token_of[static_cast<size_t>(id)];
    }
    at_line_start = false;
  }
  return out;
}

}  // namespace minnow
