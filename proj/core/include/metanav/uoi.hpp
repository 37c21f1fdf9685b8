#pragma once

// Unlabeled object identifier: decides whether an object outside the known
// classes is in view and emits the intermediate feature f_t.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "metanav/gridworld.hpp"
#include "metanav/matrix.hpp"
#include "metanav/param_store.hpp"
#include "metanav/perception.hpp"
#include "metanav/tape.hpp"

namespace metanav {

struct UoiConfig {
  int d_g = 16;
  int D = 32;  ///< model width; equals the feature width, so no input projection
  int D_f = 16;
  int layers = 2;
  int ffn_hidden = 64;
  int bank_size = 3;  ///< number of unknown classes
  double tau_cls = 0.5;
};

struct UoiOutput {
  Matrix f_t;  ///< 1 x D_f
  double cls_prob = 0.0;
  bool cls = false;
};

/// Tape-level outputs, for training.
struct UoiVars {
  Var f_t;
  Var logit;
  Var cls_prob;
};

class UoiModel {
 public:
  UoiModel(UoiConfig config, std::uint64_t seed);

  const UoiConfig& config() const { return config_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  /// Throws DimensionError when the bank size or map shapes are wrong.
  UoiOutput forward(const Matrix& f_o, const std::vector<Matrix>& bank) const;
  UoiVars forward(Tape& tape, const std::map<std::string, Var>& p, const Matrix& f_o,
                  const std::vector<Matrix>& bank) const;

  /// Descriptor of one bank entry: first token of the last layer, 1 x D.
  Var encode_pair(Tape& tape, const std::map<std::string, Var>& p, const Matrix& f_o,
                  const Matrix& g_t) const;

 private:
  void check_inputs(const Matrix& f_o, const std::vector<Matrix>& bank) const;

  UoiConfig config_;
  ParamStore params_;
};

/// Binary cross entropy with p clamped to [1e-12, 1 - 1e-12].
double uoi_loss(double cls_prob, bool gt);
/// Same loss on the tape, computed from the logit.
Var uoi_loss(Var logit, bool gt);

struct FrameSample {
  Matrix f_o;
  bool gt = false;
};

struct FrameDataset {
  std::uint64_t seed = 0;
  std::vector<FrameSample> samples;
};

/// Balanced frames (half with an unlabeled object in view) from random
/// states of the given scenes.
FrameDataset build_frame_dataset(std::uint64_t seed, const std::vector<Scene>& scenes,
                                 const ClassFeatureOracle& oracle, std::size_t count,
                                 const WorldConfig& world = {});

std::string dataset_to_text(const FrameDataset& data);
FrameDataset dataset_from_text(std::string_view text);

/// Fraction of samples whose CLS bit matches the label.
double identification_rate(const UoiModel& model, const std::vector<Matrix>& bank,
                           const FrameDataset& data);

/// Argmax with the lowest epoch winning ties. Throws on an empty list.
std::size_t select_best_epoch(const std::vector<double>& isr);

struct UoiPretrainConfig {
  int epochs = 10;
  double lr = 1e-3;
  std::size_t batch = 16;
};

struct UoiPretrainReport {
  std::vector<double> train_loss;
  std::vector<double> heldout_isr;
  std::size_t best_epoch = 0;  ///< zero-based
};

/// Adam on mean BCE; after training the model holds the parameters of the
/// best held-out epoch. Throws on an empty dataset.
UoiPretrainReport uoi_pretrain(UoiModel& model, const std::vector<Matrix>& bank,
                               const FrameDataset& train, const FrameDataset& heldout,
                               const UoiPretrainConfig& config, std::uint64_t seed);

}  // namespace metanav
