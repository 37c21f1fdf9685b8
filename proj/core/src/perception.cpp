#include "metanav/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>

#include "metanav/rng.hpp"
#include "metanav/tape.hpp"

namespace metanav {

Matrix attribute_embed(const ClassSplit& split, std::span<const std::string> attributes) {
  if (attributes.empty()) throw std::invalid_argument("empty attribute set");
  const auto& vocab = split.vocabulary();
  Matrix out(1, vocab.size());
  for (const auto& a : attributes) {
    auto it = std::find(vocab.begin(), vocab.end(), a);
    if (it == vocab.end()) throw std::invalid_argument("unknown attribute '" + a + "'");
    out(0, static_cast<std::size_t>(it - vocab.begin())) = 1.0;
  }
  return out;
}

Matrix attribute_embed(const ClassSplit& split, int class_id) {
  return attribute_embed(split, split.info(class_id).attributes);
}

namespace {

Matrix gaussian_row(Rng& rng, std::size_t n, double stddev) {
  Matrix m(1, n);
  for (double& v : m.values()) v = stddev * rng.normal();
  return m;
}

double row_norm(const Matrix& m) { return std::sqrt(sum_squares(m)); }

double min_distance(const std::vector<Matrix>& rows) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      best = std::min(best, frobenius_distance(rows[i], rows[j]));
  return best;
}

double mean_norm(const std::vector<Matrix>& rows) {
  double acc = 0.0;
  for (const auto& r : rows) acc += row_norm(r);
  return acc / static_cast<double>(rows.size());
}

}  // namespace

ClassFeatureOracle::ClassFeatureOracle(std::shared_ptr<const ClassSplit> split,
                                       PerceptionConfig config, std::uint64_t seed)
    : split_(std::move(split)), config_(config), seed_(seed) {
  if (!split_) throw std::invalid_argument("oracle needs a class split");
  if (config_.d_g < 1 || config_.D < 1 || config_.D_f < 1) {
    throw std::invalid_argument("perception dimensions must be positive");
  }
  const std::size_t D = static_cast<std::size_t>(config_.D);
  const std::size_t Df = static_cast<std::size_t>(config_.D_f);
  const std::size_t A = split_->vocabulary().size();
  // Redraw until the prototypes are well separated relative to the noise.
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng(derive_seed(seed_, {0x0fac1e, attempt}));
    Matrix w_attr(A, D);
    for (double& v : w_attr.values()) v = rng.normal();
    prototypes_.clear();
    for (std::size_t c = 0; c < split_->class_count(); ++c) {
      const Matrix attrs = attribute_embed(*split_, static_cast<int>(c));
      Matrix p = matmul(attrs, w_attr) * (1.0 / std::sqrt(sum(attrs)));
      p += gaussian_row(rng, D, config_.residual_scale);
      prototypes_.push_back(std::move(p));
    }
    background_ = gaussian_row(rng, D, 0.1);
    sigma_ = config_.noise_ratio * mean_norm(prototypes_);

    Matrix proj(D, Df);
    for (double& v : proj.values()) v = rng.normal() / std::sqrt(static_cast<double>(Df));
    detector_prototypes_.clear();
    for (const auto& p : prototypes_) detector_prototypes_.push_back(matmul(p, proj));
    detector_sigma_ = config_.noise_ratio * mean_norm(detector_prototypes_);

    if (min_distance(prototypes_) > 4.0 * sigma_ &&
        min_distance(detector_prototypes_) > 4.0 * detector_sigma_) {
      return;
    }
  }
  throw std::runtime_error("could not draw separated class prototypes");
}

const Matrix& ClassFeatureOracle::prototype(int class_id) const {
  split_->info(class_id);
  return prototypes_[static_cast<std::size_t>(class_id)];
}

const Matrix& ClassFeatureOracle::detector_prototype(int class_id) const {
  split_->info(class_id);
  return detector_prototypes_[static_cast<std::size_t>(class_id)];
}

double ClassFeatureOracle::min_pairwise_distance() const { return min_distance(prototypes_); }

Matrix ClassFeatureOracle::noisy_prototype(int class_id, Rng& rng) const {
  const Matrix& p = prototype(class_id);
  return p + gaussian_row(rng, p.cols(), sigma_ / std::sqrt(static_cast<double>(p.cols())));
}

int spatial_bin(const VisibleObject& o, int d_g) {
  const int f = std::clamp(o.forward, 1, 4) - 1;
  int l = 0;
  if (o.lateral <= -2) l = 0;
  else if (o.lateral == -1) l = 1;
  else if (o.lateral <= 1) l = 2;
  else l = 3;
  return (f * 4 + l) % d_g;
}

Matrix observation_features(const ObservationFrame& frame, const ClassFeatureOracle& oracle) {
  const auto& cfg = oracle.config();
  Matrix map(static_cast<std::size_t>(cfg.d_g), static_cast<std::size_t>(cfg.D));
  for (std::size_t r = 0; r < map.rows(); ++r) {
    std::copy(oracle.background().values().begin(), oracle.background().values().end(),
              map.row(r).begin());
  }
  // Winner per bin: nearest object, then lowest instance id.
  std::map<int, const VisibleObject*> winners;
  for (const auto& o : frame.objects) {
    const int bin = spatial_bin(o, cfg.d_g);
    auto [it, inserted] = winners.emplace(bin, &o);
    if (inserted) continue;
    const VisibleObject* cur = it->second;
    if (o.distance < cur->distance ||
        (o.distance == cur->distance && o.instance_id < cur->instance_id)) {
      it->second = &o;
    }
  }
  for (const auto& [bin, o] : winners) {
    Rng rng(derive_seed(frame.frame_id, {0xf0, static_cast<std::uint64_t>(o->instance_id)}));
    const Matrix row = oracle.noisy_prototype(o->class_id, rng);
    std::copy(row.values().begin(), row.values().end(), map.row(static_cast<std::size_t>(bin)).begin());
  }
  return map;
}

Matrix ego_transform(const ObservationFrame& frame, int instance_id) {
  const VisibleObject* o = frame.find_instance(instance_id);
  if (o == nullptr) throw std::invalid_argument("object is not visible in this frame");
  const double rad = o->bearing_deg * std::numbers::pi / 180.0;
  // Exact values on the axes keep the encoding free of rounding residue.
  double s = std::sin(rad), c = std::cos(rad);
  if (o->lateral == 0) {
    s = 0.0;
    c = 1.0;
  }
  return Matrix{{static_cast<double>(o->lateral), static_cast<double>(o->forward), o->distance, s, c,
                 static_cast<double>(static_cast<int>(frame.state.pitch))}};
}

std::vector<Detection> detect_known(const ObservationFrame& frame, const ClassFeatureOracle& oracle) {
  std::vector<Detection> out;
  const double per_entry =
      oracle.detector_sigma() / std::sqrt(static_cast<double>(oracle.config().D_f));
  for (const auto& o : frame.objects) {
    if (!oracle.split().is_known(o.class_id)) continue;
    Rng rng(derive_seed(frame.frame_id, {0xde7, static_cast<std::uint64_t>(o.instance_id)}));
    Matrix feature = oracle.detector_prototype(o.class_id);
    for (double& v : feature.values()) v += per_entry * rng.normal();
    out.push_back(Detection{o.class_id, o.instance_id, std::move(feature), ego_transform(frame, o.instance_id)});
  }
  return out;
}

// ---------------------------------------------------------------------- TFG

TargetFeatureGenerator::TargetFeatureGenerator(PerceptionConfig config, std::size_t attribute_count,
                                               int hidden, std::uint64_t seed)
    : config_(config), attribute_count_(attribute_count), hidden_(hidden) {
  if (hidden_ < 1 || attribute_count_ == 0) throw std::invalid_argument("bad generator shape");
  Rng rng(derive_seed(seed, {0x7f6}));
  const std::size_t out = static_cast<std::size_t>(config_.d_g * config_.D);
  const std::size_t h = static_cast<std::size_t>(hidden_);
  params_.add_uniform("tfg.w1", ParamGroup::psi, attribute_count_, h, attribute_count_, rng);
  params_.add("tfg.b1", ParamGroup::psi, Matrix(1, h));
  params_.add_uniform("tfg.w2", ParamGroup::psi, h, out, h, rng);
  params_.add("tfg.b2", ParamGroup::psi, Matrix(1, out));
}

namespace {

Var tfg_forward(Tape& tape, const std::map<std::string, Var>& p, const Matrix& attrs) {
  Var x = tape.constant(attrs);
  Var h = ad::relu(ad::add_row(ad::matmul(x, p.at("tfg.w1")), p.at("tfg.b1")));
  return ad::add_row(ad::matmul(h, p.at("tfg.w2")), p.at("tfg.b2"));
}

// Rows of `targets` are flattened d_g x D maps; mean squared error per entry.
Var mse(Tape& tape, Var pred, const Matrix& targets) {
  return ad::scale(ad::sum_squares(ad::sub(pred, tape.constant(targets))),
                   1.0 / static_cast<double>(targets.size()));
}

}  // namespace

TfgTrainReport TargetFeatureGenerator::train(const ClassFeatureOracle& oracle, int epochs, double lr) {
  const ClassSplit& split = oracle.split();
  const auto& known = split.known();
  if (known.empty()) throw std::invalid_argument("no known classes to train on");
  if (split.vocabulary().size() != attribute_count_) {
    throw std::invalid_argument("attribute vocabulary does not match the generator");
  }
  const std::size_t d_g = static_cast<std::size_t>(config_.d_g), D = static_cast<std::size_t>(config_.D);
  Matrix attrs(known.size(), attribute_count_);
  Matrix targets(known.size(), d_g * D);
  Matrix val_plus(known.size(), d_g * D), val_minus(known.size(), d_g * D);
  Rng rng(derive_seed(oracle.seed(), {0x7a1}));
  const double per_entry = oracle.sigma() / std::sqrt(static_cast<double>(D));
  for (std::size_t k = 0; k < known.size(); ++k) {
    const Matrix a = attribute_embed(split, known[k]);
    std::copy(a.values().begin(), a.values().end(), attrs.row(k).begin());
    const Matrix& p = oracle.prototype(known[k]);
    for (std::size_t r = 0; r < d_g; ++r)
      for (std::size_t j = 0; j < D; ++j) {
        const double n = per_entry * rng.normal();
        targets(k, r * D + j) = p(0, j);
        val_plus(k, r * D + j) = p(0, j) + n;
        val_minus(k, r * D + j) = p(0, j) - n;
      }
  }

  TfgTrainReport report;
  auto validation = [&]() {
    Tape tape;
    const auto p = tape.bind(params_);
    Var pred = tfg_forward(tape, p, attrs);
    return 0.5 * (mse(tape, pred, val_plus).scalar() + mse(tape, pred, val_minus).scalar());
  };
  for (int e = 0; e < epochs; ++e) {
    Tape tape;
    const auto p = tape.bind(params_);
    Var loss = mse(tape, tfg_forward(tape, p, attrs), targets);
    tape.backward(loss);
    sgd_step(params_, tape.param_grads(), lr);
    report.train_loss.push_back(loss.scalar());
    report.validation_loss.push_back(validation());
  }
  trained_ = true;
  return report;
}

Matrix TargetFeatureGenerator::generate(const Matrix& attributes) const {
  if (!trained_) throw std::logic_error("target feature generator used before training");
  if (attributes.rows() != 1 || attributes.cols() != attribute_count_) {
    throw DimensionError("generator input must be 1x" + std::to_string(attribute_count_));
  }
  Tape tape;
  const auto p = tape.bind(params_);
  const Matrix flat = tfg_forward(tape, p, attributes).value();
  return Matrix(static_cast<std::size_t>(config_.d_g), static_cast<std::size_t>(config_.D),
                std::vector<double>(flat.values().begin(), flat.values().end()));
}

Matrix TargetFeatureGenerator::generate_for_class(const ClassSplit& split, int class_id) const {
  return generate(attribute_embed(split, class_id));
}

double tfg_relative_error(const TargetFeatureGenerator& tfg, const ClassFeatureOracle& oracle,
                          int class_id) {
  const Matrix g = tfg.generate_for_class(oracle.split(), class_id);
  Matrix mean(1, g.cols());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t j = 0; j < g.cols(); ++j) mean(0, j) += g(r, j) / static_cast<double>(g.rows());
  const Matrix& p = oracle.prototype(class_id);
  const double d = frobenius_distance(mean, p);
  return d * d / sum_squares(p);
}

}  // namespace metanav
