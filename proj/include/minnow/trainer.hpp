#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "minnow/checkpoint.hpp"
#include "minnow/dataset.hpp"
#include "minnow/episode.hpp"
#include "minnow/error.hpp"
#include "minnow/model.hpp"
#include "minnow/optim.hpp"
#include "minnow/rng.hpp"

namespace minnow {

struct TrainConfig {
  int K = 5;
  int batch_size = 8;
  int max_epochs = 10;
  int lm_ratio = 1;  // LM batches inserted after each meta batch
  double lr = 3e-4;
  double weight_decay = 0.07;
  uint64_t seed = 0;
  int max_seq_len = 256;

  void validate() const {
    if (K < 2) raise(errc::bad_config, "K must be >= 2");
    if (batch_size < 1) raise(errc::bad_config, "batch_size must be >= 1");
    if (lm_ratio < 0) raise(errc::bad_config, "lm_ratio must be >= 0");
    if (max_epochs < 1) raise(errc::bad_config, "max_epochs must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double meta_loss = 0.0;
  double lm_loss = 0.0;
  double val_meta = 0.0;
  double val_lm = 0.0;
  double lr = 0.0;
  std::string ckpt;  // file name relative to the run directory
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

inline std::string render_log_line(const EpochRecord& r) {
  char buf[256];
  auto num = [](double v) {
    char b[48];
    if (std::isnan(v)) {
      std::snprintf(b, sizeof(b), "nan");
    } else {
      std::snprintf(b, sizeof(b), "%.6f", v);
    }
    return std::string(b);
  };
  std::snprintf(buf, sizeof(buf),
                "epoch %d meta_loss %s lm_loss %s val_meta %s val_lm %s lr %.8g ckpt %s",
                r.epoch, num(r.meta_loss).c_str(), num(r.lm_loss).c_str(),
                num(r.val_meta).c_str(), num(r.val_lm).c_str(), r.lr,
                r.ckpt.c_str());
  return buf;
}

inline TrainLog parse_train_log(const std::string& text) {
  TrainLog log;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const auto f = detail::split_ws(line);
    if (f.size() != 14 || f[0] != "epoch") {
      raise(errc::bad_config, "malformed train log line: " + line);
    }
    EpochRecord r;
    r.epoch = std::stoi(f[1]);
    r.meta_loss = std::stod(f[3]);
    r.lm_loss = std::stod(f[5]);
    r.val_meta = std::stod(f[7]);
    r.val_lm = std::stod(f[9]);
    r.lr = std::stod(f[11]);
    r.ckpt = f[13];
    log.epochs.push_back(std::move(r));
  }
  return log;
}

/// Checkpoint of the epoch with the lowest validation meta loss; the earliest
/// epoch wins ties.
inline std::string select_checkpoint(const TrainLog& log) {
  if (log.epochs.empty()) raise(errc::empty_log, "no completed epochs");
  size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < log.epochs.size(); ++i) {
    const double v = std::isnan(log.epochs[i].val_meta)
                         ? std::numeric_limits<double>::infinity()
                         : log.epochs[i].val_meta;
    if (v < best_loss) {
      best_loss = v;
      best = i;
    }
  }
  return log.epochs[best].ckpt;
}

/// Pads serialized episodes to the batch maximum. Pad positions use SEP as a
/// dummy input and are excluded from the loss by the mask; the leading SEP is
/// never a target.
inline std::vector<SeqExample> make_batch(
    const std::vector<EncodedSequence>& sequences) {
  size_t max_len = 0;
  for (const auto& seq : sequences) {
    max_len = std::max(max_len, seq.ids.size());
  }
  std::vector<SeqExample> batch;
  batch.reserve(sequences.size());
  for (const auto& seq : sequences) {
    SeqExample ex;
    const size_t n = seq.ids.size();
    const size_t width = max_len - 1;
    ex.inputs.assign(width, Vocabulary::sep_id);
    ex.targets.assign(width, Vocabulary::sep_id);
    ex.mask.assign(width, 0);
    for (size_t t = 0; t + 1 < n; ++t) {
      ex.inputs[t] = seq.ids[t];
      ex.targets[t] = seq.ids[t + 1];
      ex.mask[t] = 1;
    }
    batch.push_back(std::move(ex));
  }
  return batch;
}

struct BatchInfo {
  int epoch = 0;  // 1-based
  EpisodeKind kind = EpisodeKind::meta;
  const std::vector<Episode>* episodes = nullptr;
};

struct TrainResult {
  TrainLog log;
  std::string selected_ckpt;
  std::string out_dir;
};

namespace detail {

inline std::string epoch_label(int epoch0, const std::string& tail) {
  return "epoch." + std::to_string(epoch0) + "." + tail;
}

template <typename T>
double mean_nll_over(const Parameters<T>& params,
                     const std::vector<std::vector<EncodedSequence>>& batches) {
  double sum = 0.0;
  long count = 0;
  for (const auto& seqs : batches) {
    const auto batch = make_batch(seqs);
    for (const auto& ex : batch) {
      ForwardCache<T> cache;
      forward(params, ex.inputs, cache);
      for (size_t t = 0; t < ex.inputs.size(); ++t) {
        if (!ex.mask[t]) continue;
        sum -= log_softmax_at(cache.logits.row(static_cast<int>(t)),
                              params.cfg.vocab_size, ex.targets[t]);
        ++count;
      }
    }
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN()
                    : sum / static_cast<double>(count);
}

}  // namespace detail

/// Runs interleaved meta/LM epochs: meta episodes are resampled per epoch
/// per word, grouped into batches, and lm_ratio LM batches follow each meta
/// batch. Validation losses come from a fixed episode set sampled once from
/// frozen streams; each epoch ends with a plateau-scheduler step and a
/// checkpoint.
inline TrainResult train(
    const Corpus& corpus, const MetaWordDataset& ds, ModelConfig model_cfg,
    const TrainConfig& train_cfg, const std::string& out_dir,
    const std::string& resume_path = "",
    const std::function<void(const BatchInfo&)>& on_batch = nullptr) {
  train_cfg.validate();
  if (model_cfg.vocab_size == 0) model_cfg.vocab_size = ds.vocab.size();
  if (model_cfg.vocab_size != ds.vocab.size()) {
    raise(errc::bad_config, "model vocab_size does not match the dataset");
  }
  if (train_cfg.max_seq_len > model_cfg.max_seq_len) {
    raise(errc::bad_config, "train max_seq_len exceeds the model's");
  }
  model_cfg.validate();
  if (ds.words_of(Split::train).empty()) {
    raise(errc::insufficient_words, "train split has no meta words");
  }
  const auto& train_lm = ds.lm_of(Split::train);
  if (train_cfg.lm_ratio > 0 &&
      train_lm.size() < static_cast<size_t>(train_cfg.K)) {
    raise(errc::insufficient_pool, "train lm pool smaller than K");
  }

  std::filesystem::create_directories(out_dir);
  const uint64_t seed = train_cfg.seed;

  Parameters<float> params;
  OptimizerState<float> opt;
  int start_epoch = 0;  // 0-based
  TrainLog log;
  const std::string log_path = out_dir + "/train_log.txt";
  if (resume_path.empty()) {
    params = init_model<float>(model_cfg, seed);
    opt = make_optimizer<float>(model_cfg, train_cfg.lr, train_cfg.weight_decay);
    write_file(log_path, "");
  } else {
    Checkpoint ckpt = load_checkpoint(resume_path);
    if (!ckpt.has_optimizer) {
      raise(errc::bad_checkpoint, "checkpoint has no optimizer state; cannot resume");
    }
    params = std::move(ckpt.params);
    opt = std::move(ckpt.opt);
    start_epoch = static_cast<int>(ckpt.next_epoch);
    if (std::filesystem::exists(log_path)) {
      log = parse_train_log(read_file(log_path));
    }
  }

  // Fixed validation episodes, one frozen stream per word plus one for LM.
  std::vector<std::vector<EncodedSequence>> val_meta_batches;
  {
    std::vector<EncodedSequence> seqs;
    for (const int widx : ds.words_of(Split::valid)) {
      const auto& entry = ds.meta[static_cast<size_t>(widx)];
      Pcg32 rng = derive_stream(seed, "valid.meta." + entry.word);
      for (const auto& ep :
           epoch_meta_episodes(entry, train_cfg.K, 0, rng)) {
        seqs.push_back(serialize_episode(ep, corpus, ds.vocab,
                                         train_cfg.max_seq_len));
        if (static_cast<int>(seqs.size()) == train_cfg.batch_size) {
          val_meta_batches.push_back(std::move(seqs));
          seqs.clear();
        }
      }
    }
    if (!seqs.empty()) val_meta_batches.push_back(std::move(seqs));
  }
  std::vector<std::vector<EncodedSequence>> val_lm_batches;
  {
    const auto& valid_lm = ds.lm_of(Split::valid);
    size_t n_val_meta = 0;
    for (const auto& b : val_meta_batches) n_val_meta += b.size();
    const int want = std::max<int>(1, static_cast<int>(n_val_meta));
    if (valid_lm.size() >= static_cast<size_t>(train_cfg.K)) {
      Pcg32 rng = derive_stream(seed, "valid.lm");
      const auto episodes =
          epoch_lm_episodes(valid_lm, train_cfg.K, want, 0, rng);
      std::vector<EncodedSequence> seqs;
      for (const auto& ep : episodes) {
        seqs.push_back(serialize_episode(ep, corpus, ds.vocab,
                                         train_cfg.max_seq_len));
        if (static_cast<int>(seqs.size()) == train_cfg.batch_size) {
          val_lm_batches.push_back(std::move(seqs));
          seqs.clear();
        }
      }
      if (!seqs.empty()) val_lm_batches.push_back(std::move(seqs));
    }
  }

  TrainResult result;
  result.out_dir = out_dir;
  result.log = std::move(log);

  for (int e = start_epoch; e < train_cfg.max_epochs; ++e) {
    const auto wall_start = std::chrono::steady_clock::now();

    // per-word meta episodes for this epoch
    std::vector<Episode> meta_episodes;
    for (const int widx : ds.words_of(Split::train)) {
      const auto& entry = ds.meta[static_cast<size_t>(widx)];
      Pcg32 rng = derive_stream(seed, detail::epoch_label(e, "meta." + entry.word));
      auto eps = epoch_meta_episodes(entry, train_cfg.K, e, rng);
      for (auto& ep : eps) meta_episodes.push_back(std::move(ep));
    }
    Pcg32 order_rng = derive_stream(seed, detail::epoch_label(e, "order"));
    order_rng.shuffle(meta_episodes);

    Pcg32 lm_rng = derive_stream(seed, detail::epoch_label(e, "lm"));

    double meta_sum = 0.0, lm_sum = 0.0;
    long meta_count = 0, lm_count = 0;
    size_t cursor = 0;
    try {
      while (cursor < meta_episodes.size()) {
        const size_t take = std::min<size_t>(
            static_cast<size_t>(train_cfg.batch_size),
            meta_episodes.size() - cursor);
        std::vector<Episode> group(meta_episodes.begin() + static_cast<long>(cursor),
                                   meta_episodes.begin() + static_cast<long>(cursor + take));
        cursor += take;
        std::vector<EncodedSequence> seqs;
        seqs.reserve(group.size());
        for (const auto& ep : group) {
          seqs.push_back(serialize_episode(ep, corpus, ds.vocab,
                                           train_cfg.max_seq_len));
        }
        if (on_batch) {
          BatchInfo info{e + 1, EpisodeKind::meta, &group};
          on_batch(info);
        }
        auto res = backward(params, make_batch(seqs));
        meta_sum += res.loss * static_cast<double>(res.n_positions);
        meta_count += res.n_positions;
        adamw_step(opt, params, res.grads);

        for (int r = 0; r < train_cfg.lm_ratio; ++r) {
          const auto lm_eps = epoch_lm_episodes(train_lm, train_cfg.K,
                                                train_cfg.batch_size, e, lm_rng);
          std::vector<EncodedSequence> lm_seqs;
          lm_seqs.reserve(lm_eps.size());
          for (const auto& ep : lm_eps) {
            lm_seqs.push_back(serialize_episode(ep, corpus, ds.vocab,
                                                train_cfg.max_seq_len));
          }
          if (on_batch) {
            BatchInfo info{e + 1, EpisodeKind::lm, &lm_eps};
            on_batch(info);
          }
          auto lm_res = backward(params, make_batch(lm_seqs));
          lm_sum += lm_res.loss * static_cast<double>(lm_res.n_positions);
          lm_count += lm_res.n_positions;
          adamw_step(opt, params, lm_res.grads);
        }
      }
    } catch (const Error& err) {
      if (err.code() == errc::non_finite_gradient) {
        raise(errc::non_finite_gradient,
              "epoch " + std::to_string(e + 1) + ": " + err.what());
      }
      throw;
    }

    EpochRecord rec;
    rec.epoch = e + 1;
    rec.meta_loss = meta_count == 0 ? std::numeric_limits<double>::quiet_NaN()
                                    : meta_sum / static_cast<double>(meta_count);
    rec.lm_loss = lm_count == 0 ? std::numeric_limits<double>::quiet_NaN()
                               : lm_sum / static_cast<double>(lm_count);
    rec.val_meta = detail::mean_nll_over(params, val_meta_batches);
    rec.val_lm = detail::mean_nll_over(params, val_lm_batches);
    if (!std::isnan(rec.val_meta)) plateau_step(opt, rec.val_meta);
    rec.lr = opt.lr;

    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", e + 1);
    rec.ckpt = name;
    Checkpoint ckpt;
    ckpt.cfg = model_cfg;
    ckpt.params = params;
    ckpt.has_optimizer = true;
    ckpt.opt = opt;
    ckpt.seed = seed;
    ckpt.next_epoch = static_cast<uint32_t>(e + 1);
    save_checkpoint(out_dir + "/" + rec.ckpt, ckpt);

    // the log file carries only run-deterministic fields; wall time goes to
    // the console
    std::string line = render_log_line(rec);
    {
      std::ofstream log_out(log_path, std::ios::binary | std::ios::app);
      log_out << line << '\n';
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      wall_start)
            .count();
    std::cout << line << " wall " << wall << "s\n";
    result.log.epochs.push_back(std::move(rec));
  }

  result.selected_ckpt = select_checkpoint(result.log);
  return result;
}

}  // namespace minnow
