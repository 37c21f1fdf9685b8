#pragma once

// Synthetic perception: attribute embedding, per-class feature oracle,
// observation feature maps, a known-object detector and the attribute to
// feature generator (TFG).

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "metanav/gridworld.hpp"
#include "metanav/matrix.hpp"
#include "metanav/param_store.hpp"

namespace metanav {

struct PerceptionConfig {
  int d_g = 16;  ///< rows of a feature map
  int D = 32;    ///< feature width
  int D_f = 16;  ///< detector / identifier feature width
  double noise_ratio = 0.1;      ///< sigma_f relative to the mean prototype norm
  double residual_scale = 0.35;  ///< class-specific part of each prototype
};

/// Multi-hot 1 x A_v row. Throws for an empty set or an unknown attribute.
Matrix attribute_embed(const ClassSplit& split, std::span<const std::string> attributes);
Matrix attribute_embed(const ClassSplit& split, int class_id);

/// Ground-truth class prototypes and the noise model used to fake visual
/// features. Prototypes are a linear function of the attributes plus a small
/// class residual, so attribute descriptions carry visual information.
class ClassFeatureOracle {
 public:
  ClassFeatureOracle(std::shared_ptr<const ClassSplit> split, PerceptionConfig config,
                     std::uint64_t seed);

  const PerceptionConfig& config() const { return config_; }
  const ClassSplit& split() const { return *split_; }
  std::uint64_t seed() const { return seed_; }

  /// 1 x D.
  const Matrix& prototype(int class_id) const;
  const Matrix& background() const { return background_; }
  double sigma() const { return sigma_; }
  double min_pairwise_distance() const;

  /// 1 x D_f detector-space prototype.
  const Matrix& detector_prototype(int class_id) const;
  double detector_sigma() const { return detector_sigma_; }

  /// Prototype plus isotropic noise whose expected squared norm is sigma^2.
  Matrix noisy_prototype(int class_id, Rng& rng) const;

 private:
  std::shared_ptr<const ClassSplit> split_;
  PerceptionConfig config_;
  std::uint64_t seed_;
  std::vector<Matrix> prototypes_;
  std::vector<Matrix> detector_prototypes_;
  Matrix background_;
  double sigma_ = 0.0;
  double detector_sigma_ = 0.0;
};

/// Row of the feature map an object falls into: 4 forward bands times
/// 4 lateral bands.
int spatial_bin(const VisibleObject& object, int d_g);

/// d_g x D map. Each visible object writes its noisy prototype into its
/// spatial bin (nearest object, then lowest id, wins a shared bin); all
/// other rows hold the background vector.
Matrix observation_features(const ObservationFrame& frame, const ClassFeatureOracle& oracle);

/// (lateral, forward, distance, sin bearing, cos bearing, pitch notch), 1 x 6.
Matrix ego_transform(const ObservationFrame& frame, int instance_id);
inline constexpr int kEgoPoseDim = 6;

struct Detection {
  int class_id = 0;
  int instance_id = 0;
  Matrix feature;  ///< 1 x D_f
  Matrix pose;     ///< 1 x 6
};

/// One detection per visible known-class object, in frame order.
std::vector<Detection> detect_known(const ObservationFrame& frame, const ClassFeatureOracle& oracle);

struct TfgTrainReport {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
};

/// Two-layer attribute to feature-map regressor, trained on known classes.
class TargetFeatureGenerator {
 public:
  TargetFeatureGenerator(PerceptionConfig config, std::size_t attribute_count, int hidden,
                         std::uint64_t seed);

  /// Full-batch gradient descent on squared error against prototypes tiled
  /// over the map rows. Validation uses antithetic noisy targets.
  TfgTrainReport train(const ClassFeatureOracle& oracle, int epochs, double lr);

  bool trained() const { return trained_; }
  /// d_g x D. Throws std::logic_error before training.
  Matrix generate(const Matrix& attributes) const;
  Matrix generate_for_class(const ClassSplit& split, int class_id) const;

  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }
  void mark_trained() { trained_ = true; }
  const PerceptionConfig& config() const { return config_; }
  int hidden() const { return hidden_; }

 private:
  PerceptionConfig config_;
  std::size_t attribute_count_;
  int hidden_;
  ParamStore params_;
  bool trained_ = false;
};

/// Mean over rows, squared distance to the prototype, divided by the squared
/// prototype norm.
double tfg_relative_error(const TargetFeatureGenerator& tfg, const ClassFeatureOracle& oracle,
                          int class_id);

}  // namespace metanav
