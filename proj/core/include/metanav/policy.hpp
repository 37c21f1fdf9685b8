#pragma once

// Recurrent actor-critic policy: target indicator, input projections, LSTM
// state, actor and critic heads, done reminder and the A3C loss.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metanav/gridworld.hpp"
#include "metanav/matrix.hpp"
#include "metanav/param_store.hpp"
#include "metanav/perception.hpp"
#include "metanav/tape.hpp"

namespace metanav {

/// One-hot over the I known classes plus an unlabeled slot, followed by the
/// target's attribute embedding. Throws std::invalid_argument for a class id
/// outside the split or a labeled target that is not a known class.
Matrix build_ti(const ClassSplit& split, const Target& target);

/// 1 when the target is known and a detection of its class is in view, or
/// when the target is unlabeled and CLS = 1.
bool done_reminder(const std::vector<Detection>& detections, bool cls, const Target& target);

struct PolicyConfig {
  std::size_t f_o_dim = 512;   ///< flattened d_g x D observation map
  std::size_t ti_dim = 23;     ///< I + 1 + attribute count
  std::size_t graph_dim = 112; ///< flattened (I + 1) x d_out GCN output
  std::size_t d_z = 32;
  std::size_t hidden = 64;
  bool use_z_r = true;  ///< false for the plain baseline

  std::size_t input_dim() const { return (use_z_r ? 3 : 2) * d_z + kNumActions + 1; }
};

/// Recurrent state plus the inputs carried over from the previous step.
/// Input order: z_o, z_t, z_r, previous-action one-hot, reminder bit.
struct StepContext {
  Var h;
  Var c;
  int prev_action = -1;  ///< -1 at the first step
  bool reminder = false;
};

struct PolicyStep {
  Var log_probs;  ///< 1 x 6
  Var value;      ///< 1 x 1
  Var entropy;    ///< 1 x 1
  std::vector<double> probs;
};

/// Parameter layout and forward pass. Parameters live in the caller's store
/// (group psi) so that task copies and outer updates work on one object.
class PolicyNet {
 public:
  explicit PolicyNet(PolicyConfig config) : config_(config) {}

  const PolicyConfig& config() const { return config_; }
  void add_params(ParamStore& store, Rng& rng) const;

  StepContext initial_context(Tape& tape) const;

  Var project_o(const std::map<std::string, Var>& p, Var f_o_flat) const;
  Var project_t(const std::map<std::string, Var>& p, Var ti) const;
  Var project_r(const std::map<std::string, Var>& p, Var graph_flat) const;

  /// Advances ctx.h / ctx.c. z_r must be absent exactly when use_z_r is off.
  PolicyStep step(const std::map<std::string, Var>& p, Var z_o, Var z_t, std::optional<Var> z_r,
                  StepContext& ctx) const;

 private:
  PolicyConfig config_;
};

/// Inverse-CDF draw from a distribution.
int sample_action(const std::vector<double>& probs, Rng& rng);
/// Argmax; the lowest index wins ties.
int greedy_action(const std::vector<double>& probs);

struct A3cConfig {
  double gamma = 0.99;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
};

struct TrajectoryStep {
  Var log_prob;  ///< of the action taken, 1 x 1
  Var value;
  Var entropy;
  double reward = 0.0;
};

/// Discounted n-step returns R_t = r_t + gamma R_{t+1}, seeded with the
/// bootstrap value (0 at a terminal state).
std::vector<double> discounted_returns(const std::vector<double>& rewards, double bootstrap, double gamma);

/// -sum_t log pi(a_t) A_t + value_coef sum_t (R_t - V_t)^2 - entropy_coef sum_t H_t
/// with A_t = R_t - V_t treated as a constant in the policy term. Throws
/// std::invalid_argument on an empty trajectory.
Var loss_a3c(const std::vector<TrajectoryStep>& trajectory, double bootstrap, const A3cConfig& config);

/// Same loss with the returns and advantages supplied. Its gradient is the
/// gradient of loss_a3c at the point where the advantages were taken.
Var loss_a3c(const std::vector<TrajectoryStep>& trajectory, const std::vector<double>& returns,
             const std::vector<double>& advantages, const A3cConfig& config);

}  // namespace metanav
