#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "minnow/error.hpp"
#include "minnow/model.hpp"
#include "minnow/optim.hpp"
#include "minnow/text.hpp"

namespace minnow {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

/// Everything needed to resume training: parameters, optimizer/scheduler
/// state, and the run's PRNG state (global seed + next epoch; all streams are
/// derived from these).
struct Checkpoint {
  ModelConfig cfg;
  Parameters<float> params;
  bool has_optimizer = false;
  OptimizerState<float> opt;
  uint64_t seed = 0;
  uint32_t next_epoch = 0;
};

namespace detail {

constexpr char checkpoint_magic[8] = {'M', 'I', 'N', 'N', 'O', 'W', 'C', 'K'};
constexpr uint32_t checkpoint_version = 1;

template <typename V>
void put(std::string& out, V value) {
  char buf[sizeof(V)];
  std::memcpy(buf, &value, sizeof(V));
  out.append(buf, sizeof(V));
}

template <typename V>
V take(const std::string& in, size_t& pos) {
  if (pos + sizeof(V) > in.size()) {
    raise(errc::bad_checkpoint, "truncated checkpoint");
  }
  V value;
  std::memcpy(&value, in.data() + pos, sizeof(V));
  pos += sizeof(V);
  return value;
}

inline void put_tensor(std::string& out, const Mat<float>& m) {
  put<uint32_t>(out, static_cast<uint32_t>(m.rows));
  put<uint32_t>(out, static_cast<uint32_t>(m.cols));
  const size_t bytes = m.a.size() * sizeof(float);
  const size_t base = out.size();
  out.resize(base + bytes);
  std::memcpy(out.data() + base, m.a.data(), bytes);
}

inline void take_tensor(const std::string& in, size_t& pos, Mat<float>& m) {
  const uint32_t rows = take<uint32_t>(in, pos);
  const uint32_t cols = take<uint32_t>(in, pos);
  if (static_cast<int>(rows) != m.rows || static_cast<int>(cols) != m.cols) {
    raise(errc::bad_checkpoint, "tensor shape does not match the config");
  }
  const size_t bytes = m.a.size() * sizeof(float);
  if (pos + bytes > in.size()) raise(errc::bad_checkpoint, "truncated tensor");
  std::memcpy(m.a.data(), in.data() + pos, bytes);
  pos += bytes;
}

inline void put_params(std::string& out, Parameters<float>& p) {
  auto mats = tensor_list(p);
  put<uint32_t>(out, static_cast<uint32_t>(mats.size()));
  for (const auto* m : mats) put_tensor(out, *m);
}

inline void take_params(const std::string& in, size_t& pos,
                        Parameters<float>& p) {
  auto mats = tensor_list(p);
  const uint32_t n = take<uint32_t>(in, pos);
  if (n != mats.size()) {
    raise(errc::bad_checkpoint, "tensor count does not match the config");
  }
  for (auto* m : mats) take_tensor(in, pos, *m);
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  using namespace detail;
  std::string out;
  out.append(checkpoint_magic, sizeof(checkpoint_magic));
  put<uint32_t>(out, checkpoint_version);
  const auto& cfg = ckpt.cfg;
  put<int32_t>(out, cfg.n_layers);
  put<int32_t>(out, cfg.d_model);
  put<int32_t>(out, cfg.n_heads);
  put<int32_t>(out, cfg.d_ff);
  put<int32_t>(out, cfg.vocab_size);
  put<int32_t>(out, cfg.max_seq_len);
  put<uint8_t>(out, cfg.tie_embeddings ? 1 : 0);
  put<double>(out, cfg.rope_base);
  put<double>(out, cfg.ln_eps);

  auto params = ckpt.params;  // tensor_list needs mutable access
  put_params(out, params);

  put<uint8_t>(out, ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    auto opt = ckpt.opt;
    put<int64_t>(out, opt.step);
    put<double>(out, opt.lr);
    put<double>(out, opt.weight_decay);
    put<double>(out, opt.beta1);
    put<double>(out, opt.beta2);
    put<double>(out, opt.eps);
    put<int32_t>(out, opt.plateau_counter);
    put<int32_t>(out, opt.plateau_patience);
    put<double>(out, opt.plateau_eps);
    put<double>(out, opt.lr_factor);
    put<double>(out, opt.best_val);
    put_params(out, opt.m);
    put_params(out, opt.v);
  }

  put<uint64_t>(out, ckpt.seed);
  put<uint32_t>(out, ckpt.next_epoch);
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& in) {
  using namespace detail;
  size_t pos = 0;
  if (in.size() < sizeof(checkpoint_magic) ||
      std::memcmp(in.data(), checkpoint_magic, sizeof(checkpoint_magic)) != 0) {
    raise(errc::bad_checkpoint, "bad magic");
  }
  pos = sizeof(checkpoint_magic);
  const uint32_t version = take<uint32_t>(in, pos);
  if (version != checkpoint_version) {
    raise(errc::bad_checkpoint,
          "unsupported format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.cfg.n_layers = take<int32_t>(in, pos);
  ckpt.cfg.d_model = take<int32_t>(in, pos);
  ckpt.cfg.n_heads = take<int32_t>(in, pos);
  ckpt.cfg.d_ff = take<int32_t>(in, pos);
  ckpt.cfg.vocab_size = take<int32_t>(in, pos);
  ckpt.cfg.max_seq_len = take<int32_t>(in, pos);
  ckpt.cfg.tie_embeddings = take<uint8_t>(in, pos) != 0;
  ckpt.cfg.rope_base = take<double>(in, pos);
  ckpt.cfg.ln_eps = take<double>(in, pos);
  ckpt.cfg.validate();

  ckpt.params = zeros_like_params<float>(ckpt.cfg);
  take_params(in, pos, ckpt.params);

  ckpt.has_optimizer = take<uint8_t>(in, pos) != 0;
  if (ckpt.has_optimizer) {
    ckpt.opt = make_optimizer<float>(ckpt.cfg, 0.0, 0.0);
    ckpt.opt.step = take<int64_t>(in, pos);
    ckpt.opt.lr = take<double>(in, pos);
    ckpt.opt.weight_decay = take<double>(in, pos);
    ckpt.opt.beta1 = take<double>(in, pos);
    ckpt.opt.beta2 = take<double>(in, pos);
    ckpt.opt.eps = take<double>(in, pos);
    ckpt.opt.plateau_counter = take<int32_t>(in, pos);
    ckpt.opt.plateau_patience = take<int32_t>(in, pos);
    ckpt.opt.plateau_eps = take<double>(in, pos);
    ckpt.opt.lr_factor = take<double>(in, pos);
    ckpt.opt.best_val = take<double>(in, pos);
    take_params(in, pos, ckpt.opt.m);
    take_params(in, pos, ckpt.opt.v);
  }

  ckpt.seed = take<uint64_t>(in, pos);
  ckpt.next_epoch = take<uint32_t>(in, pos);
  if (pos != in.size()) {
    raise(errc::bad_checkpoint, "trailing bytes after checkpoint payload");
  }
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace minnow
