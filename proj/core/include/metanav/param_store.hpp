#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metanav/matrix.hpp"
#include "metanav/rng.hpp"

namespace metanav {

/// Parameter groups of the meta-learner: alpha = feature modifier,
/// beta = object-graph learner, psi = everything else.
enum class ParamGroup { alpha, beta, psi };

std::string_view to_string(ParamGroup g);
ParamGroup param_group_from_string(std::string_view s);

using GradMap = std::map<std::string, Matrix>;

struct Param {
  std::string name;
  ParamGroup group;
  Matrix value;
};

/// Named parameters with fixed shapes. Copies are deep: a task-local copy
/// never aliases the store it came from.
class ParamStore {
 public:
  Matrix& add(std::string name, ParamGroup group, Matrix init);
  /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Matrix& add_uniform(std::string name, ParamGroup group, std::size_t rows, std::size_t cols,
                      std::size_t fan_in, Rng& rng);

  bool contains(const std::string& name) const { return index_.contains(name); }
  const Matrix& get(const std::string& name) const;
  Matrix& get(const std::string& name);
  ParamGroup group_of(const std::string& name) const;
  /// Replaces a value; the shape must not change.
  void set(const std::string& name, const Matrix& value);

  const std::vector<Param>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  /// Deep copy of the parameters belonging to one group.
  ParamStore extract(ParamGroup group) const;
  /// Overwrites values of every parameter present in `other`.
  void assign_from(const ParamStore& other);

  /// FNV-1a over names, shapes and the raw bits of every value.
  std::uint64_t fingerprint() const;
  std::uint64_t fingerprint(ParamGroup group) const;

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

/// p <- p - lr * g for every parameter; throws if a gradient is missing
/// or has the wrong shape.
void sgd_step(ParamStore& store, const GradMap& grads, double lr);

/// Adam with bias correction; moment state keyed by parameter name.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Updates only the parameters that have an entry in `grads`.
  void step(ParamStore& store, const GradMap& grads);

  double learning_rate() const { return lr_; }
  std::uint64_t steps() const { return t_; }

  struct Moments {
    Matrix m;
    Matrix v;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::uint64_t t, std::map<std::string, Moments> moments) {
    t_ = t;
    moments_ = std::move(moments);
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

void accumulate(GradMap& into, const GradMap& from);
bool all_zero(const GradMap& grads);

struct LossEval {
  double value = 0.0;
  GradMap grads;
};
using DifferentiableLoss = std::function<LossEval(const ParamStore&)>;

/// Central-difference check of every analytic gradient entry. Returns
/// max |g_analytic - g_fd| / max(1, |g_fd|). Throws std::invalid_argument for
/// eps outside [1e-6, 1e-4] and std::runtime_error when two evaluations at the
/// same point disagree.
double finite_diff_check(const DifferentiableLoss& loss, const ParamStore& store, double eps);

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n);
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

}  // namespace metanav
