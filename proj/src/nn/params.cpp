#include "touchadd/nn/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace touchadd::nn {

namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError("truncated checkpoint");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& in) {
  const auto n = take<std::uint64_t>(in);
  if (n > (1ULL << 28)) throw CheckpointError("corrupt checkpoint string length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("truncated checkpoint");
  return s;
}

}  // namespace

Tensor ParamStore::add(std::string name, Mat init) {
  for (const auto& p : params_)
    if (p.name == name) throw std::invalid_argument("duplicate parameter " + name);
  Tensor t(std::move(init), true);
  params_.push_back({std::move(name), t});
  return t;
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor.value().size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void ParamStore::write(std::ostream& out) const {
  put<std::uint64_t>(out, params_.size());
  for (const auto& p : params_) {
    put_string(out, p.name);
    const Mat& m = p.tensor.value();
    put<std::int64_t>(out, m.rows());
    put<std::int64_t>(out, m.cols());
    for (Index i = 0; i < m.size(); ++i) put<double>(out, static_cast<double>(m.data()[i]));
  }
}

void ParamStore::read(std::istream& in) {
  const auto n = take<std::uint64_t>(in);
  if (n != params_.size()) throw CheckpointError("checkpoint parameter count mismatch");
  for (auto& p : params_) {
    const std::string name = take_string(in);
    if (name != p.name) throw CheckpointError("checkpoint parameter order mismatch at " + p.name);
    const auto rows = take<std::int64_t>(in);
    const auto cols = take<std::int64_t>(in);
    Mat& m = p.tensor.mutable_value();
    if (rows != m.rows() || cols != m.cols()) throw CheckpointError("checkpoint shape mismatch at " + name);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(take<double>(in));
  }
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& p : params_) out.params_.push_back({p.name, Tensor(p.tensor.value(), p.tensor.requires_grad())});
  return out;
}

Mat normal_init(Index rows, Index cols, Real stddev, Rng& rng) {
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(rng.normal(0.0, stddev));
  return m;
}

Adam::Adam(ParamStore& params, AdamConfig config) : params_(params), config_(config) {
  for (const auto& p : params_.entries()) {
    m_.push_back(Mat::Zero(p.tensor.rows(), p.tensor.cols()));
    v_.push_back(Mat::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

void Adam::step(Real lr_scale, Real batch) {
  auto& entries = params_.entries();
  const Real inv_batch = 1.0 / batch;
  Real norm2 = 0.0;
  for (auto& p : entries)
    if (p.tensor.grad().size() != 0) norm2 += p.tensor.grad().squaredNorm() * inv_batch * inv_batch;
  Real clip = 1.0;
  if (config_.clip_norm > 0.0 && norm2 > config_.clip_norm * config_.clip_norm)
    clip = config_.clip_norm / std::sqrt(norm2);

  ++t_;
  const Real lr = config_.lr * lr_scale;
  const Real bc1 = 1.0 - std::pow(config_.beta1, static_cast<Real>(t_));
  const Real bc2 = 1.0 - std::pow(config_.beta2, static_cast<Real>(t_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& t = entries[i].tensor;
    if (t.grad().size() == 0) continue;
    const Mat gr = t.grad() * (inv_batch * clip);
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * gr;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * gr.cwiseProduct(gr);
    if (lr != 0.0) {
      Mat& w = t.mutable_value();
      if (config_.weight_decay > 0.0) w *= (1.0 - lr * config_.weight_decay);
      w.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
    }
  }
  params_.zero_grad();
}

std::uint64_t fnv1a64(const std::string& text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_checkpoint(const std::filesystem::path& path, const std::string& magic,
                      std::uint32_t version, const std::string& config_json,
                      const ParamStore& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  put<std::uint32_t>(out, version);
  put_string(out, config_json);
  put<std::uint64_t>(out, fnv1a64(config_json));
  params.write(out);
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

CheckpointHeader read_checkpoint_header(std::istream& in, const std::string& magic,
                                        std::uint32_t expected_version) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
    throw CheckpointError("not a " + magic + " checkpoint");
  CheckpointHeader h;
  h.version = take<std::uint32_t>(in);
  if (h.version != expected_version)
    throw CheckpointError("checkpoint version " + std::to_string(h.version) + ", expected " +
                          std::to_string(expected_version));
  h.config_json = take_string(in);
  h.config_hash = take<std::uint64_t>(in);
  if (h.config_hash != fnv1a64(h.config_json)) throw CheckpointError("checkpoint config hash mismatch");
  return h;
}

}  // namespace touchadd::nn
