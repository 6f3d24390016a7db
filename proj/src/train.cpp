// SPDX-License-Identifier: Apache-2.0
#include "vdt/train.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace vdt {

// ---- Adam ---------------------------------------------------------------------

void AdamState::reset() {
  m_.clear();
  v_.clear();
  step_ = 0;
}

void AdamState::step(const ParameterList &params, double lr) {
  if (m_.empty()) {
    for (const Parameter *p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("adam_step: parameter count changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter &p = *params[k];
    if (!p.grad.same_shape(p.value) || !m_[k].same_shape(p.value)) {
      throw std::invalid_argument("adam_step: shape mismatch for " + p.name + " " +
                                  p.value.shape_string() + " vs " + p.grad.shape_string());
    }
  }
  ++step_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter &p = *params[k];
    Tensor2 &m = m_[k], &v = v_[k];
    const bool decay = p.decays() && cfg_.weight_decay != 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      if (decay) p.value[i] *= 1.0 - lr * cfg_.weight_decay;
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void adam_step(AdamState &state, const ParameterList &params, double lr) { state.step(params, lr); }

// ---- loop -----------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (beta < 0.0) throw std::invalid_argument("TrainConfig: beta must be non-negative");
  if (!(prior_sigma > 0.0)) throw std::invalid_argument("TrainConfig: prior_sigma must be positive");
}

double effective_lr(const TrainConfig &cfg, std::size_t epoch) {
  double lr = cfg.lr;
  for (const auto &[e, mult] : cfg.lr_schedule)
    if (e <= epoch) lr *= mult;
  return lr;
}

double clip_global_norm(const ParameterList &params, double max_norm) {
  double sq = 0.0;
  for (const Parameter *p : params)
    for (double g : p->grad.data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter *p : params)
      for (double &g : p->grad.data()) g *= s;
  }
  return norm;
}

FitResult fit(const ParameterList &params, std::size_t n_items, const BatchLoss &loss,
              const TrainConfig &cfg, AdamState *state) {
  cfg.validate();
  if (n_items == 0) throw std::invalid_argument("fit: empty dataset");
  AdamState local(AdamConfig{.weight_decay = cfg.weight_decay});
  AdamState &opt = state ? *state : local;
  opt.config().weight_decay = cfg.weight_decay;

  const auto t0 = std::chrono::steady_clock::now();
  FitResult result;
  std::vector<std::size_t> order(n_items);
  const RngStream shuffle_root(cfg.seed, kShuffleStream);
  const RngStream noise_root(cfg.seed, kNoiseStream);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
      RngStream s = shuffle_root.derive(epoch);
      shuffle_indices(order, s);
    }
    const double lr = effective_lr(cfg, epoch);
    const RngStream epoch_noise = noise_root.derive(epoch);
    double total = 0.0;
    for (std::size_t start = 0, b = 0; start < n_items; start += cfg.batch_size, ++b) {
      const std::size_t end = std::min(n_items, start + cfg.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      for (Parameter *p : params) p->zero_grad();
      Tape tape(true);
      Var l = loss(tape, batch, epoch_noise.derive(b));
      const double lv = tape.value(l)[0];
      if (!std::isfinite(lv)) throw std::runtime_error("fit: non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(l);
      if (cfg.clip_norm > 0.0) clip_global_norm(params, cfg.clip_norm);
      opt.step(params, lr);
      total += lv * static_cast<double>(batch.size());
      ++result.steps;
    }
    result.epoch_loss.push_back(total / static_cast<double>(n_items));
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---- checkpoint encoding --------------------------------------------------------------

namespace {

constexpr unsigned char kMagic[4] = {'V', 'D', 'T', 'C'};

template <typename T> void put(std::vector<unsigned char> &out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::vector<unsigned char> &out, double d) { put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}
  template <typename T> T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError(CheckpointError::Kind::truncated, "truncated file");
  }
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(std::span<const unsigned char> bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

} // namespace

std::vector<unsigned char> encode_checkpoint(std::span<const NamedTensor> tensors) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto &t : tensors) {
    if (t.name.size() > 0xFFFF) throw std::invalid_argument("checkpoint: tensor name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint8_t>(out, 2);
    put<std::uint64_t>(out, t.value.rows());
    put<std::uint64_t>(out, t.value.cols());
    for (double d : t.value.data()) put_f64(out, d);
  }
  put<std::uint32_t>(out, crc(out));
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::span<const unsigned char> bytes) {
  using K = CheckpointError::Kind;
  if (bytes.size() < 4) throw CheckpointError(K::truncated, "truncated file");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw CheckpointError(K::bad_magic, "bad magic");
  Reader r(bytes.subspan(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(K::version_mismatch, "version mismatch: file has " + std::to_string(version) +
                                                   ", expected " + std::to_string(kCheckpointVersion));
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto len = r.get<std::uint16_t>();
    t.name = r.get_string(len);
    const auto rank = r.get<std::uint8_t>();
    if (rank > 2) throw CheckpointError(K::shape_mismatch, "shape mismatch for " + t.name + ": rank " + std::to_string(rank));
    std::uint64_t dims[2] = {1, 1};
    for (std::uint8_t d = 0; d < rank; ++d) dims[2 - rank + d] = r.get<std::uint64_t>();
    const std::uint64_t n = dims[0] * dims[1];
    if (n > r.remaining() / 8) throw CheckpointError(K::truncated, "truncated file");
    std::vector<double> data(n);
    for (auto &d : data) d = r.get_f64();
    t.value = Tensor2(dims[0], dims[1], std::move(data));
    out.push_back(std::move(t));
  }
  const std::size_t body = 4 + r.pos();
  const auto stored = r.get<std::uint32_t>();
  if (r.remaining() != 0) throw CheckpointError(K::checksum, "checksum mismatch: trailing bytes");
  if (stored != crc(bytes.first(body))) throw CheckpointError(K::checksum, "checksum mismatch");
  return out;
}

void write_file_atomic(const std::filesystem::path &path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + tmp.string() + " for writing");
    os.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError(CheckpointError::Kind::io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path &path, const std::string &text) {
  write_file_atomic(path, std::span(reinterpret_cast<const unsigned char *>(text.data()), text.size()));
}

void save_checkpoint(const std::filesystem::path &path, const ParameterList &params,
                     const AdamState *optimizer) {
  std::vector<NamedTensor> tensors;
  for (const Parameter *p : params) tensors.push_back({p->name, p->value});
  if (optimizer && optimizer->steps() > 0) {
    const AdamState &opt = *optimizer;
    for (std::size_t k = 0; k < params.size() && k < opt.first_moments().size(); ++k) {
      tensors.push_back({"adam.m/" + params[k]->name, opt.first_moments()[k]});
      tensors.push_back({"adam.v/" + params[k]->name, opt.second_moments()[k]});
    }
    tensors.push_back({"adam.step", Tensor2(1, 1, static_cast<double>(opt.steps()))});
  }
  write_file_atomic(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void load_checkpoint(const std::filesystem::path &path, const ParameterList &params,
                     AdamState *optimizer) {
  const auto tensors = read_checkpoint(path);
  auto find = [&tensors](const std::string &name) -> const NamedTensor * {
    for (const auto &t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  };
  // Validate everything before mutating any parameter.
  for (const Parameter *p : params) {
    const NamedTensor *t = find(p->name);
    if (!t) throw CheckpointError(CheckpointError::Kind::missing_tensor, "missing tensor " + p->name);
    if (!t->value.same_shape(p->value))
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            "shape mismatch for " + p->name + ": file " + t->value.shape_string() +
                                ", model " + p->value.shape_string());
  }
  for (Parameter *p : params) {
    p->value = find(p->name)->value;
    p->zero_grad();
  }
  if (optimizer) {
    optimizer->reset();
    const NamedTensor *step = find("adam.step");
    if (!step) return;
    // Moments cover a leading run of the parameter list.
    bool ended = false;
    for (const Parameter *p : params) {
      const NamedTensor *m = find("adam.m/" + p->name);
      const NamedTensor *v = find("adam.v/" + p->name);
      if (!m || !v || ended) {
        if ((m || v) && (ended || !m || !v)) {
          optimizer->reset();
          return;
        }
        ended = true;
        continue;
      }
      if (!m->value.same_shape(p->value) || !v->value.same_shape(p->value)) {
        optimizer->reset();
        return;
      }
      optimizer->first_moments().push_back(m->value);
      optimizer->second_moments().push_back(v->value);
    }
    if (optimizer->first_moments().empty()) return optimizer->reset();
    optimizer->set_steps(static_cast<std::size_t>(step->value[0]));
  }
}

} // namespace vdt
