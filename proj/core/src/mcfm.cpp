#include "metanav/mcfm.hpp"

#include <algorithm>
#include <stdexcept>

namespace metanav {

void add_mcfm_params(ParamStore& store, std::size_t d_f, Rng& rng) {
  store.add_uniform(kMcfmW1, ParamGroup::alpha, d_f, d_f, d_f, rng);
  store.add_uniform(kMcfmW2, ParamGroup::alpha, kEgoPoseDim, d_f, kEgoPoseDim, rng);
  store.add_uniform(kMcfmW3, ParamGroup::alpha, d_f, d_f, d_f, rng);
}

Var score_s(Var f_k, Var pose, Var f_t, Var w1, Var w2, Var w3) {
  Var translated = ad::add(ad::matmul(f_k, w1), ad::matmul(pose, w2));
  return ad::sum_squares(ad::sub(translated, ad::matmul(f_t, w3)));
}

double score_s(const Matrix& f_k, const Matrix& pose, const Matrix& f_t, const ParamStore& alpha) {
  const Matrix d = matmul(f_k, alpha.get(kMcfmW1)) + matmul(pose, alpha.get(kMcfmW2)) -
                   matmul(f_t, alpha.get(kMcfmW3));
  return sum_squares(d);
}

Matrix modify_ft(const Matrix& f_t, const ParamStore& alpha) {
  return f_t + matmul(f_t, alpha.get(kMcfmW3));
}

Var modify_ft(Var f_t, Var w3) { return ad::add(f_t, ad::matmul(f_t, w3)); }

ClassFeatureBuffer::ClassFeatureBuffer(std::size_t known_classes, std::size_t d_f)
    : d_f_(d_f),
      means_(known_classes, Matrix(1, d_f)),
      poses_(known_classes, Matrix(1, kEgoPoseDim)),
      counts_(known_classes, 0) {}

void ClassFeatureBuffer::observe(std::size_t i, const Matrix& feature, const Matrix& pose) {
  if (feature.rows() != 1 || feature.cols() != d_f_) throw DimensionError("buffer feature shape");
  if (pose.rows() != 1 || pose.cols() != static_cast<std::size_t>(kEgoPoseDim)) {
    throw DimensionError("buffer pose shape");
  }
  Matrix& m = means_.at(i);
  const double n = static_cast<double>(++counts_[i]);
  for (std::size_t j = 0; j < d_f_; ++j) m(0, j) += (feature(0, j) - m(0, j)) / n;
  poses_[i] = pose;
}

void ClassFeatureBuffer::reset() {
  for (auto& m : means_) m = Matrix(1, d_f_);
  for (auto& p : poses_) p = Matrix(1, kEgoPoseDim);
  std::fill(counts_.begin(), counts_.end(), 0);
}

const Matrix& ClassFeatureBuffer::mean(std::size_t i) const {
  if (!has(i)) throw std::logic_error("class never observed in this episode");
  return means_[i];
}

const Matrix& ClassFeatureBuffer::last_pose(std::size_t i) const {
  if (!has(i)) throw std::logic_error("class never observed in this episode");
  return poses_[i];
}

CooccurrenceSets cooccurrence(const std::vector<Detection>& detections, bool cls,
                              const ClassFeatureBuffer& buffer, const ClassSplit& split) {
  CooccurrenceSets sets;
  if (!cls) return sets;
  std::vector<char> in_view(buffer.size(), 0);
  for (const auto& d : detections) in_view[split.known_index(d.class_id)] = 1;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    if (in_view[i]) sets.present.push_back(i);
    else if (buffer.has(i)) sets.absent.push_back(i);
  }
  return sets;
}

std::optional<Var> loss_mcfm(Tape& tape, Var w1, Var w2, Var w3, const CooccurrenceSets& sets,
                             const ClassFeatureBuffer& buffer, const Matrix& f_t) {
  if (sets.present.empty() || sets.absent.empty()) return std::nullopt;
  Var ft = tape.constant(f_t);
  auto mean_score = [&](const std::vector<std::size_t>& ids) {
    std::vector<Var> scores;
    for (std::size_t i : ids) {
      scores.push_back(score_s(tape.constant(buffer.mean(i)), tape.constant(buffer.last_pose(i)), ft,
                               w1, w2, w3));
    }
    return ad::mean(scores);
  };
  Var margin = ad::sub(mean_score(sets.absent), mean_score(sets.present));
  return ad::scale(ad::log_sigmoid(margin), -1.0);
}

std::optional<double> loss_mcfm(const ParamStore& alpha, const CooccurrenceSets& sets,
                                const ClassFeatureBuffer& buffer, const Matrix& f_t) {
  Tape tape;
  auto l = loss_mcfm(tape, tape.constant(alpha.get(kMcfmW1)), tape.constant(alpha.get(kMcfmW2)),
                     tape.constant(alpha.get(kMcfmW3)), sets, buffer, f_t);
  if (!l) return std::nullopt;
  return l->scalar();
}

McfmUpdate mcfm_inner_update(ParamStore& alpha_i, const CooccurrenceSets& sets,
                             const ClassFeatureBuffer& buffer, const Matrix& f_t, bool cls,
                             double lr) {
  if (!cls) throw std::logic_error("feature modifier update requested on a CLS = 0 step");
  Tape tape;
  Var w1 = tape.param(kMcfmW1, alpha_i.get(kMcfmW1));
  Var w2 = tape.param(kMcfmW2, alpha_i.get(kMcfmW2));
  Var w3 = tape.param(kMcfmW3, alpha_i.get(kMcfmW3));
  auto loss = loss_mcfm(tape, w1, w2, w3, sets, buffer, f_t);
  if (!loss) return {};
  tape.backward(*loss);
  const GradMap grads = tape.param_grads();
  for (const auto& [name, g] : grads) {
    Matrix& w = alpha_i.get(name);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
  }
  return {true, loss->scalar()};
}

}  // namespace metanav
