#include "cimage/param_set.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "cimage/errors.hpp"

namespace cimage::nn {

DenseMatrix& ParamSet::create(const std::string& name, std::size_t rows,
                              std::size_t cols) {
  return create(name, DenseMatrix::zeros(rows, cols));
}

DenseMatrix& ParamSet::create(const std::string& name, DenseMatrix init) {
  if (entries_.count(name))
    throw ConfigError("param '" + name + "' already exists");
  ParamEntry entry;
  const std::size_t r = init.rows(), c = init.cols();
  entry.value = std::move(init);
  entry.grad = DenseMatrix::zeros(r, c);
  entry.adam_m = DenseMatrix::zeros(r, c);
  entry.adam_v = DenseMatrix::zeros(r, c);
  order_.push_back(name);
  return entries_.emplace(name, std::move(entry)).first->second.value;
}

ParamEntry& ParamSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown param '" + name + "'");
  return it->second;
}

const ParamEntry& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown param '" + name + "'");
  return it->second;
}

std::size_t ParamSet::num_coords() const {
  std::size_t n = 0;
  for (const auto& name : order_) n += entries_.at(name).value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (const auto& name : order_) entries_.at(name).grad.fill(0.0);
}

void adam_step(ParamSet& params, double lr, double beta1, double beta2, double eps) {
  params.step_ += 1;
  const double t = static_cast<double>(params.step_);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (const auto& name : params.order_) {
    ParamEntry& e = params.entries_.at(name);
    if (!e.grad.all_finite())
      throw NonFiniteError("adam_step: non-finite gradient for '" + name + "'");
    auto& val = e.value.values();
    auto& g = e.grad.values();
    auto& m = e.adam_m.values();
    auto& v = e.adam_v.values();
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      g[i] = 0.0;
    }
  }
}

namespace {

constexpr char kMagic[4] = {'C', 'P', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ofstream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(out, bits);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::ifstream& in) {
  std::uint64_t bits = read_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void ParamSet::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileMissingError("cannot open for write: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(order_.size()));
  for (const auto& name : order_) {
    const ParamEntry& e = entries_.at(name);
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, e.value.rows());
    write_u64(out, e.value.cols());
  }
  for (const auto& name : order_) {
    const ParamEntry& e = entries_.at(name);
    for (double d : e.value.values()) write_f64(out, d);
  }
  if (!out) throw FileMissingError("write failed: " + path);
}

ParamSet ParamSet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileMissingError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("bad magic in param file: " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw ParseError("unsupported param file version " + std::to_string(version));
  const std::uint32_t count = read_u32(in);
  ParamSet ps;
  std::vector<std::pair<std::string, std::pair<std::uint64_t, std::uint64_t>>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = read_u32(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const std::uint64_t rows = read_u64(in);
    const std::uint64_t cols = read_u64(in);
    table.emplace_back(std::move(name), std::make_pair(rows, cols));
  }
  for (auto& [name, shape] : table) {
    DenseMatrix m(shape.first, shape.second);
    for (double& d : m.values()) d = read_f64(in);
    if (!in) throw ParseError("truncated param file: " + path);
    ps.create(name, std::move(m));
  }
  return ps;
}

}  // namespace cimage::nn
