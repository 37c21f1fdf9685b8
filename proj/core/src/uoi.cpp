#include "metanav/uoi.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "metanav/rng.hpp"

namespace metanav {

namespace {

std::string layer_key(int l, const char* name) { return "uoi.l" + std::to_string(l) + "." + name; }

}  // namespace

UoiModel::UoiModel(UoiConfig config, std::uint64_t seed) : config_(config) {
  if (config_.layers < 1 || config_.bank_size < 1 || config_.D < 1 || config_.D_f < 1) {
    throw std::invalid_argument("invalid identifier configuration");
  }
  Rng rng(derive_seed(seed, {0x0015}));
  const std::size_t D = static_cast<std::size_t>(config_.D);
  const std::size_t H = static_cast<std::size_t>(config_.ffn_hidden);
  params_.add_uniform("uoi.pos", ParamGroup::psi, 2 * static_cast<std::size_t>(config_.d_g), D, D, rng);
  for (int l = 0; l < config_.layers; ++l) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      params_.add_uniform(layer_key(l, w), ParamGroup::psi, D, D, D, rng);
    }
    params_.add(layer_key(l, "ln1_g"), ParamGroup::psi, Matrix(1, D, 1.0));
    params_.add(layer_key(l, "ln1_b"), ParamGroup::psi, Matrix(1, D));
    params_.add_uniform(layer_key(l, "ff_w1"), ParamGroup::psi, D, H, D, rng);
    params_.add(layer_key(l, "ff_b1"), ParamGroup::psi, Matrix(1, H));
    params_.add_uniform(layer_key(l, "ff_w2"), ParamGroup::psi, H, D, H, rng);
    params_.add(layer_key(l, "ff_b2"), ParamGroup::psi, Matrix(1, D));
    params_.add(layer_key(l, "ln2_g"), ParamGroup::psi, Matrix(1, D, 1.0));
    params_.add(layer_key(l, "ln2_b"), ParamGroup::psi, Matrix(1, D));
  }
  params_.add_uniform("uoi.w_m1", ParamGroup::psi, D, static_cast<std::size_t>(config_.D_f), D, rng);
  params_.add_uniform("uoi.w_m2", ParamGroup::psi, static_cast<std::size_t>(config_.D_f), 1,
                      static_cast<std::size_t>(config_.D_f), rng);
}

void UoiModel::check_inputs(const Matrix& f_o, const std::vector<Matrix>& bank) const {
  if (static_cast<int>(bank.size()) != config_.bank_size) {
    throw DimensionError("identifier bank holds " + std::to_string(bank.size()) + " maps, expected " +
                         std::to_string(config_.bank_size));
  }
  const auto rows = static_cast<std::size_t>(config_.d_g), cols = static_cast<std::size_t>(config_.D);
  if (f_o.rows() != rows || f_o.cols() != cols) throw DimensionError("observation map shape " + f_o.shape_string());
  for (const auto& g : bank) {
    if (g.rows() != rows || g.cols() != cols) throw DimensionError("bank map shape " + g.shape_string());
  }
}

Var UoiModel::encode_pair(Tape& tape, const std::map<std::string, Var>& p, const Matrix& f_o,
                          const Matrix& g_t) const {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config_.D));
  Var x = ad::add(ad::concat_rows({tape.constant(f_o), tape.constant(g_t)}), p.at("uoi.pos"));
  for (int l = 0; l < config_.layers; ++l) {
    auto w = [&](const char* n) { return p.at(layer_key(l, n)); };
    Var q = ad::matmul(x, w("wq"));
    Var k = ad::matmul(x, w("wk"));
    Var v = ad::matmul(x, w("wv"));
    Var att = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_d));
    Var attended = ad::matmul(ad::matmul(att, v), w("wo"));
    x = ad::add_row(ad::mul_row(ad::layer_norm_rows(ad::add(x, attended)), w("ln1_g")), w("ln1_b"));
    Var h = ad::relu(ad::add_row(ad::matmul(x, w("ff_w1")), w("ff_b1")));
    Var ff = ad::add_row(ad::matmul(h, w("ff_w2")), w("ff_b2"));
    x = ad::add_row(ad::mul_row(ad::layer_norm_rows(ad::add(x, ff)), w("ln2_g")), w("ln2_b"));
  }
  return ad::slice_rows(x, 0, 1);
}

UoiVars UoiModel::forward(Tape& tape, const std::map<std::string, Var>& p, const Matrix& f_o,
                          const std::vector<Matrix>& bank) const {
  check_inputs(f_o, bank);
  std::vector<Var> tokens;
  tokens.reserve(bank.size());
  for (const auto& g : bank) tokens.push_back(encode_pair(tape, p, f_o, g));
  Var pooled = ad::mean(tokens);
  UoiVars out;
  out.f_t = ad::relu(ad::matmul(pooled, p.at("uoi.w_m1")));
  out.logit = ad::matmul(out.f_t, p.at("uoi.w_m2"));
  out.cls_prob = ad::sigmoid(out.logit);
  return out;
}

UoiOutput UoiModel::forward(const Matrix& f_o, const std::vector<Matrix>& bank) const {
  Tape tape;
  const auto p = tape.bind(params_);
  const UoiVars v = forward(tape, p, f_o, bank);
  UoiOutput out;
  out.f_t = v.f_t.value();
  out.cls_prob = v.cls_prob.scalar();
  out.cls = out.cls_prob >= config_.tau_cls;
  return out;
}

double uoi_loss(double cls_prob, bool gt) {
  const double p = std::clamp(cls_prob, 1e-12, 1.0 - 1e-12);
  return gt ? -std::log(p) : -std::log(1.0 - p);
}

Var uoi_loss(Var logit, bool gt) {
  // -ln sigmoid(z) for gt = 1, -ln sigmoid(-z) for gt = 0.
  return ad::scale(ad::sum(ad::log_sigmoid(gt ? logit : ad::scale(logit, -1.0))), -1.0);
}

FrameDataset build_frame_dataset(std::uint64_t seed, const std::vector<Scene>& scenes,
                                 const ClassFeatureOracle& oracle, std::size_t count,
                                 const WorldConfig& world) {
  if (scenes.empty()) throw std::invalid_argument("no scenes to sample frames from");
  FrameDataset data;
  data.seed = seed;
  Rng rng(derive_seed(seed, {0xda7a}));
  const std::size_t want_pos = count / 2, want_neg = count - count / 2;
  std::size_t pos = 0, neg = 0;
  for (std::size_t attempt = 0; pos + neg < count; ++attempt) {
    if (attempt > 1000 * (count + 1)) throw std::runtime_error("cannot balance the frame dataset");
    const Scene& s = scenes[rng.index(scenes.size())];
    AgentState st{static_cast<int>(rng.index(static_cast<std::size_t>(s.width()))),
                  static_cast<int>(rng.index(static_cast<std::size_t>(s.height()))),
                  static_cast<Heading>(rng.index(4)),
                  static_cast<Pitch>(static_cast<int>(rng.index(3)) - 1)};
    if (s.is_blocked(st.x, st.y)) continue;
    const ObservationFrame frame = observe(s, st, world);
    if (frame.gt_unlabeled ? pos >= want_pos : neg >= want_neg) continue;
    (frame.gt_unlabeled ? pos : neg)++;
    data.samples.push_back({observation_features(frame, oracle), frame.gt_unlabeled});
  }
  return data;
}

std::string dataset_to_text(const FrameDataset& data) {
  nlohmann::ordered_json j;
  j["seed"] = data.seed;
  auto samples = nlohmann::ordered_json::array();
  for (const auto& s : data.samples) {
    nlohmann::ordered_json e;
    e["gt"] = s.gt ? 1 : 0;
    e["rows"] = s.f_o.rows();
    e["cols"] = s.f_o.cols();
    e["f_o"] = std::vector<double>(s.f_o.values().begin(), s.f_o.values().end());
    samples.push_back(std::move(e));
  }
  j["samples"] = std::move(samples);
  return j.dump() + "\n";
}

FrameDataset dataset_from_text(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  FrameDataset data;
  data.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("samples")) {
    data.samples.push_back({Matrix(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>(),
                                   e.at("f_o").get<std::vector<double>>()),
                            e.at("gt").get<int>() != 0});
  }
  return data;
}

double identification_rate(const UoiModel& model, const std::vector<Matrix>& bank,
                           const FrameDataset& data) {
  if (data.samples.empty()) throw std::invalid_argument("empty dataset");
  std::size_t hits = 0;
  for (const auto& s : data.samples) hits += model.forward(s.f_o, bank).cls == s.gt;
  return static_cast<double>(hits) / static_cast<double>(data.samples.size());
}

std::size_t select_best_epoch(const std::vector<double>& isr) {
  if (isr.empty()) throw std::invalid_argument("no epochs to select from");
  std::size_t best = 0;
  for (std::size_t e = 1; e < isr.size(); ++e) {
    if (isr[e] > isr[best]) best = e;
  }
  return best;
}

UoiPretrainReport uoi_pretrain(UoiModel& model, const std::vector<Matrix>& bank,
                               const FrameDataset& train, const FrameDataset& heldout,
                               const UoiPretrainConfig& config, std::uint64_t seed) {
  if (train.samples.empty() || heldout.samples.empty()) {
    throw std::invalid_argument("identifier pretraining needs non-empty datasets");
  }
  if (config.epochs < 1 || config.batch < 1) throw std::invalid_argument("bad pretraining schedule");
  Adam adam(config.lr);
  Rng rng(derive_seed(seed, {0x9e7}));
  UoiPretrainReport report;
  std::vector<ParamStore> snapshots;
  std::vector<std::size_t> order(train.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int e = 0; e < config.epochs; ++e) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      GradMap grads;
      for (std::size_t k = start; k < end; ++k) {
        const FrameSample& s = train.samples[order[k]];
        Tape tape;
        const auto p = tape.bind(model.params());
        Var loss = uoi_loss(model.forward(tape, p, s.f_o, bank).logit, s.gt);
        tape.backward(loss);
        total += loss.scalar();
        accumulate(grads, tape.param_grads());
      }
      for (auto& [name, g] : grads) g *= 1.0 / static_cast<double>(end - start);
      adam.step(model.params(), grads);
    }
    report.train_loss.push_back(total / static_cast<double>(order.size()));
    report.heldout_isr.push_back(identification_rate(model, bank, heldout));
    snapshots.push_back(model.params());
  }
  report.best_epoch = select_best_epoch(report.heldout_isr);
  model.params().assign_from(snapshots[report.best_epoch]);
  return report;
}

}  // namespace metanav
