#pragma once

// Contrastive feature modifier: pulls f_t towards known objects seen together
// with the unlabeled one and away from known objects that are not in view.

#include <optional>
#include <vector>

#include "metanav/matrix.hpp"
#include "metanav/param_store.hpp"
#include "metanav/perception.hpp"
#include "metanav/tape.hpp"

namespace metanav {

inline constexpr const char* kMcfmW1 = "mcfm.w_r1";
inline constexpr const char* kMcfmW2 = "mcfm.w_r2";
inline constexpr const char* kMcfmW3 = "mcfm.w_r3";

/// Adds W_R1 (D_f x D_f), W_R2 (6 x D_f) and W_R3 (D_f x D_f) to the alpha group.
void add_mcfm_params(ParamStore& store, std::size_t d_f, Rng& rng);

/// ||f_k W_R1 + p W_R2 - f_t W_R3||^2.
double score_s(const Matrix& f_k, const Matrix& pose, const Matrix& f_t, const ParamStore& alpha);
Var score_s(Var f_k, Var pose, Var f_t, Var w1, Var w2, Var w3);

/// f_t + f_t W_R3.
Matrix modify_ft(const Matrix& f_t, const ParamStore& alpha);
Var modify_ft(Var f_t, Var w3);

/// Per known class: running mean of detector features, count, last pose.
/// Indices are positions in ClassSplit::known().
class ClassFeatureBuffer {
 public:
  ClassFeatureBuffer(std::size_t known_classes, std::size_t d_f);

  void observe(std::size_t known_index, const Matrix& feature, const Matrix& pose);
  void reset();

  std::size_t size() const { return means_.size(); }
  std::size_t feature_dim() const { return d_f_; }
  bool has(std::size_t i) const { return counts_.at(i) > 0; }
  std::size_t count(std::size_t i) const { return counts_.at(i); }
  const Matrix& mean(std::size_t i) const;
  const Matrix& last_pose(std::size_t i) const;

 private:
  std::size_t d_f_;
  std::vector<Matrix> means_;
  std::vector<Matrix> poses_;
  std::vector<std::size_t> counts_;
};

/// O: known classes detected in the current view; O-hat: known classes seen
/// earlier in the episode but not in view. Both empty unless CLS = 1.
struct CooccurrenceSets {
  std::vector<std::size_t> present;
  std::vector<std::size_t> absent;
};

CooccurrenceSets cooccurrence(const std::vector<Detection>& detections, bool cls,
                              const ClassFeatureBuffer& buffer, const ClassSplit& split);

/// -ln sigmoid(mean_{O-hat} S - mean_O S). Each term uses the class buffer
/// mean and its most recent pose. std::nullopt when either set is empty.
std::optional<Var> loss_mcfm(Tape& tape, Var w1, Var w2, Var w3, const CooccurrenceSets& sets,
                             const ClassFeatureBuffer& buffer, const Matrix& f_t);
std::optional<double> loss_mcfm(const ParamStore& alpha, const CooccurrenceSets& sets,
                                const ClassFeatureBuffer& buffer, const Matrix& f_t);

struct McfmUpdate {
  bool applied = false;
  double loss = 0.0;  ///< before the step
};

/// One gradient step on the task-local alpha. Throws std::logic_error when
/// called on a step where CLS = 0. Skips (applied = false) when O or O-hat is
/// empty.
McfmUpdate mcfm_inner_update(ParamStore& alpha_i, const CooccurrenceSets& sets,
                             const ClassFeatureBuffer& buffer, const Matrix& f_t, bool cls,
                             double lr);

}  // namespace metanav
