#include "metanav/policy.hpp"

#include <algorithm>
#include <stdexcept>

namespace metanav {

Matrix build_ti(const ClassSplit& split, const Target& target) {
  if (target.class_id < 0 || static_cast<std::size_t>(target.class_id) >= split.classes().size()) {
    throw std::invalid_argument("target class id out of range");
  }
  if (target.labeled && !split.is_known(target.class_id)) {
    throw std::invalid_argument("labeled target must be a known class");
  }
  const std::size_t slots = split.known().size() + 1;
  const Matrix attrs = attribute_embed(split, target.class_id);
  Matrix ti(1, slots + attrs.cols());
  ti(0, target.labeled ? split.known_index(target.class_id) : slots - 1) = 1.0;
  std::copy(attrs.values().begin(), attrs.values().end(), ti.values().begin() + static_cast<std::ptrdiff_t>(slots));
  return ti;
}

bool done_reminder(const std::vector<Detection>& detections, bool cls, const Target& target) {
  if (!target.labeled) return cls;
  return std::any_of(detections.begin(), detections.end(),
                     [&](const Detection& d) { return d.class_id == target.class_id; });
}

void PolicyNet::add_params(ParamStore& s, Rng& rng) const {
  const auto& c = config_;
  s.add_uniform("policy.ffn_o.w", ParamGroup::psi, c.f_o_dim, c.d_z, c.f_o_dim, rng);
  s.add("policy.ffn_o.b", ParamGroup::psi, Matrix(1, c.d_z));
  s.add_uniform("policy.ffn_t.w", ParamGroup::psi, c.ti_dim, c.d_z, c.ti_dim, rng);
  s.add("policy.ffn_t.b", ParamGroup::psi, Matrix(1, c.d_z));
  if (c.use_z_r) {
    s.add_uniform("policy.ffn_r.w", ParamGroup::psi, c.graph_dim, c.d_z, c.graph_dim, rng);
    s.add("policy.ffn_r.b", ParamGroup::psi, Matrix(1, c.d_z));
  }
  const std::size_t in = c.input_dim() + c.hidden;
  s.add_uniform("policy.lstm.w", ParamGroup::psi, in, 4 * c.hidden, in, rng);
  Matrix bias(1, 4 * c.hidden);
  for (std::size_t k = c.hidden; k < 2 * c.hidden; ++k) bias[k] = 1.0;  // forget gate
  s.add("policy.lstm.b", ParamGroup::psi, bias);
  s.add_uniform("policy.actor.w", ParamGroup::psi, c.hidden, kNumActions, c.hidden, rng) *= 0.1;
  s.add("policy.actor.b", ParamGroup::psi, Matrix(1, kNumActions));
  s.add_uniform("policy.critic.w", ParamGroup::psi, c.hidden, 1, c.hidden, rng);
  s.add("policy.critic.b", ParamGroup::psi, Matrix(1, 1));
}

StepContext PolicyNet::initial_context(Tape& tape) const {
  return {tape.constant(Matrix(1, config_.hidden)), tape.constant(Matrix(1, config_.hidden)), -1, false};
}

namespace {

Var dense_relu(const std::map<std::string, Var>& p, const std::string& prefix, Var x) {
  return ad::relu(ad::add_row(ad::matmul(x, p.at(prefix + ".w")), p.at(prefix + ".b")));
}

}  // namespace

Var PolicyNet::project_o(const std::map<std::string, Var>& p, Var f_o_flat) const {
  return dense_relu(p, "policy.ffn_o", f_o_flat);
}

Var PolicyNet::project_t(const std::map<std::string, Var>& p, Var ti) const {
  return dense_relu(p, "policy.ffn_t", ti);
}

Var PolicyNet::project_r(const std::map<std::string, Var>& p, Var graph_flat) const {
  if (!config_.use_z_r) throw std::logic_error("policy built without relationship input");
  return dense_relu(p, "policy.ffn_r", graph_flat);
}

PolicyStep PolicyNet::step(const std::map<std::string, Var>& p, Var z_o, Var z_t, std::optional<Var> z_r,
                           StepContext& ctx) const {
  if (z_r.has_value() != config_.use_z_r) throw DimensionError("relationship input presence mismatch");
  Tape& tape = *z_o.tape();
  Matrix extra(1, kNumActions + 1);
  if (ctx.prev_action >= 0) extra(0, static_cast<std::size_t>(ctx.prev_action)) = 1.0;
  extra(0, kNumActions) = ctx.reminder ? 1.0 : 0.0;
  std::vector<Var> parts{z_o, z_t};
  if (z_r) parts.push_back(*z_r);
  parts.push_back(tape.constant(std::move(extra)));
  parts.push_back(ctx.h);
  Var x = ad::concat_cols(parts);
  if (x.cols() != config_.input_dim() + config_.hidden) throw DimensionError("policy input width");

  const std::size_t H = config_.hidden;
  Var gates = ad::add_row(ad::matmul(x, p.at("policy.lstm.w")), p.at("policy.lstm.b"));
  Var i = ad::sigmoid(ad::slice_cols(gates, 0, H));
  Var f = ad::sigmoid(ad::slice_cols(gates, H, H));
  Var g = ad::tanh(ad::slice_cols(gates, 2 * H, H));
  Var o = ad::sigmoid(ad::slice_cols(gates, 3 * H, H));
  ctx.c = ad::add(ad::mul(f, ctx.c), ad::mul(i, g));
  ctx.h = ad::mul(o, ad::tanh(ctx.c));

  Var logits = ad::add_row(ad::matmul(ctx.h, p.at("policy.actor.w")), p.at("policy.actor.b"));
  PolicyStep out;
  out.log_probs = ad::log_softmax_rows(logits);
  Var probs = ad::softmax_rows(logits);
  out.entropy = ad::scale(ad::sum(ad::mul(probs, out.log_probs)), -1.0);
  out.value = ad::add_row(ad::matmul(ctx.h, p.at("policy.critic.w")), p.at("policy.critic.b"));
  out.probs.assign(probs.value().values().begin(), probs.value().values().end());
  return out;
}

int sample_action(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size()) - 1;
}

int greedy_action(const std::vector<double>& probs) {
  if (probs.empty()) throw std::invalid_argument("empty distribution");
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<double> discounted_returns(const std::vector<double>& rewards, double bootstrap, double gamma) {
  std::vector<double> out(rewards.size());
  double r = bootstrap;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    r = rewards[t] + gamma * r;
    out[t] = r;
  }
  return out;
}

Var loss_a3c(const std::vector<TrajectoryStep>& traj, double bootstrap, const A3cConfig& cfg) {
  if (traj.empty()) throw std::invalid_argument("empty trajectory");
  std::vector<double> rewards;
  for (const auto& s : traj) rewards.push_back(s.reward);
  const auto returns = discounted_returns(rewards, bootstrap, cfg.gamma);
  std::vector<double> adv(traj.size());
  for (std::size_t t = 0; t < traj.size(); ++t) adv[t] = returns[t] - traj[t].value.scalar();
  return loss_a3c(traj, returns, adv, cfg);
}

Var loss_a3c(const std::vector<TrajectoryStep>& traj, const std::vector<double>& returns,
             const std::vector<double>& advantages, const A3cConfig& cfg) {
  if (traj.empty()) throw std::invalid_argument("empty trajectory");
  if (returns.size() != traj.size() || advantages.size() != traj.size()) {
    throw DimensionError("returns and advantages must match the trajectory");
  }
  Tape& tape = *traj.front().log_prob.tape();
  std::vector<Var> terms;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    Var policy = ad::scale(traj[t].log_prob, -advantages[t]);
    Var err = ad::sub(tape.constant(Matrix(1, 1, returns[t])), traj[t].value);
    Var value = ad::scale(ad::sum_squares(err), cfg.value_coef);
    Var entropy = ad::scale(traj[t].entropy, -cfg.entropy_coef);
    terms.push_back(ad::add(policy, ad::add(value, entropy)));
  }
  return ad::scale(ad::mean(terms), static_cast<double>(terms.size()));
}

}  // namespace metanav
