#include "metanav/param_store.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace metanav {

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::alpha: return "alpha";
    case ParamGroup::beta: return "beta";
    case ParamGroup::psi: return "psi";
  }
  return "psi";
}

ParamGroup param_group_from_string(std::string_view s) {
  if (s == "alpha") return ParamGroup::alpha;
  if (s == "beta") return ParamGroup::beta;
  if (s == "psi") return ParamGroup::psi;
  throw std::invalid_argument("unknown parameter group '" + std::string(s) + "'");
}

Matrix& ParamStore::add(std::string name, ParamGroup group, Matrix init) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  if (!init.all_finite()) throw std::invalid_argument("non-finite init for '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(Param{std::move(name), group, std::move(init)});
  return params_.back().value;
}

Matrix& ParamStore::add_uniform(std::string name, ParamGroup group, std::size_t rows,
                                std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return add(std::move(name), group, std::move(m));
}

const Matrix& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return params_[it->second].value;
}

Matrix& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return params_[it->second].value;
}

ParamGroup ParamStore::group_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return params_[it->second].group;
}

void ParamStore::set(const std::string& name, const Matrix& value) {
  Matrix& dst = get(name);
  require_same_shape(dst, value, ("ParamStore::set " + name).c_str());
  dst = value;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

ParamStore ParamStore::extract(ParamGroup group) const {
  ParamStore out;
  for (const auto& p : params_)
    if (p.group == group) out.add(p.name, p.group, p.value);
  return out;
}

void ParamStore::assign_from(const ParamStore& other) {
  for (const auto& p : other.params_) set(p.name, p.value);
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t hash_param(std::uint64_t h, const Param& p) {
  h = fnv1a(h, p.name.data(), p.name.size());
  const std::uint64_t shape[2] = {p.value.rows(), p.value.cols()};
  h = fnv1a(h, shape, sizeof(shape));
  return fnv1a(h, p.value.values().data(), p.value.size() * sizeof(double));
}

}  // namespace

std::uint64_t ParamStore::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : params_) h = hash_param(h, p);
  return h;
}

std::uint64_t ParamStore::fingerprint(ParamGroup group) const {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : params_)
    if (p.group == group) h = hash_param(h, p);
  return h;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.params_.size() != b.params_.size()) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    const auto& pa = a.params_[i];
    const auto& pb = b.params_[i];
    if (pa.name != pb.name || pa.group != pb.group || !pa.value.same_shape(pb.value)) return false;
    if (std::memcmp(pa.value.values().data(), pb.value.values().data(),
                    pa.value.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

void sgd_step(ParamStore& store, const GradMap& grads, double lr) {
  for (const auto& p : store.params()) {
    auto it = grads.find(p.name);
    if (it == grads.end()) throw std::invalid_argument("sgd_step: missing gradient for '" + p.name + "'");
    require_same_shape(p.value, it->second, "sgd_step");
  }
  for (const auto& [name, g] : grads) {
    if (!store.contains(name)) continue;
    Matrix& v = store.get(name);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

void Adam::step(ParamStore& store, const GradMap& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Matrix& v = store.get(name);
    require_same_shape(v, g, "Adam::step");
    auto [it, inserted] = moments_.try_emplace(name);
    if (inserted) {
      it->second.m = Matrix(g.rows(), g.cols());
      it->second.v = Matrix(g.rows(), g.cols());
    }
    Matrix& m = it->second.m;
    Matrix& s = it->second.v;
    for (std::size_t i = 0; i < v.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      s[i] = beta2_ * s[i] + (1.0 - beta2_) * g[i] * g[i];
      v[i] -= lr_ * (m[i] / bc1) / (std::sqrt(s[i] / bc2) + eps_);
    }
  }
}

void accumulate(GradMap& into, const GradMap& from) {
  for (const auto& [name, g] : from) {
    auto it = into.find(name);
    if (it == into.end()) {
      into.emplace(name, g);
    } else {
      it->second += g;
    }
  }
}

bool all_zero(const GradMap& grads) {
  for (const auto& [name, g] : grads)
    for (double v : g.values())
      if (v != 0.0) return false;
  return true;
}

double finite_diff_check(const DifferentiableLoss& loss, const ParamStore& store, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) {
    throw std::invalid_argument("finite_diff_check: eps must lie in [1e-6, 1e-4]");
  }
  const LossEval base = loss(store);
  const LossEval again = loss(store);
  if (std::memcmp(&base.value, &again.value, sizeof(double)) != 0) {
    throw std::runtime_error("finite_diff_check: loss function is not deterministic");
  }
  double worst = 0.0;
  ParamStore probe = store;
  for (const auto& p : store.params()) {
    auto it = base.grads.find(p.name);
    Matrix& v = probe.get(p.name);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + eps;
      const double up = loss(probe).value;
      v[i] = orig - eps;
      const double down = loss(probe).value;
      v[i] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double analytic = it == base.grads.end() ? 0.0 : it->second[i];
      worst = std::max(worst, std::abs(analytic - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace metanav
