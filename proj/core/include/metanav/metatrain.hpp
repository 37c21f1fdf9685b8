#pragma once

// Meta-training loop: task-local copies of alpha and beta adapted inside each
// episode, first-order outer updates of beta and psi, checkpoints.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "metanav/ablation.hpp"
#include "metanav/gridworld.hpp"
#include "metanav/mcfm.hpp"
#include "metanav/mogl.hpp"
#include "metanav/param_store.hpp"
#include "metanav/perception.hpp"
#include "metanav/policy.hpp"
#include "metanav/uoi.hpp"

namespace metanav {

struct MetaConfig {
  double lambda1 = 1e-4;  ///< inner MCFM step
  double lambda2 = 1e-4;  ///< inner MOGL step
  double mu = 1e-3;       ///< outer step
  std::string outer_optimizer = "adam";  ///< "adam" or "sgd"
  std::size_t batch = 4;
  int episodes = 40000;
  double eta = 1e-3;
  AugmentationSpec augmentation;
  A3cConfig a3c;
  int min_shortest_path = 3;
  bool greedy_inference = false;  ///< inference samples from the policy unless set
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  SceneGenParams scene;
  WorldConfig world;
  PerceptionConfig perception;
  UoiConfig uoi;
  int train_scenes = 24;
  int test_scenes = 12;
  int tfg_hidden = 64;
  int tfg_epochs = 600;
  double tfg_lr = 1.0;
  std::size_t uoi_train_frames = 800;
  std::size_t uoi_heldout_frames = 400;
  UoiPretrainConfig uoi_pretrain;
  std::size_t d_z = 32;
  std::size_t hidden = 64;
  std::size_t d_out = 16;
  MetaConfig meta;
  AblationFlags flags;
};

/// Throws std::invalid_argument for non-positive rates or sizes and for
/// invalid flag combinations.
void validate(const ExperimentConfig& config);

/// JSON with every field. Parsing starts from the defaults, so a partial
/// document only overrides what it names.
std::string config_to_text(const ExperimentConfig& config);
ExperimentConfig config_from_text(std::string_view text);

/// Weights to load instead of training. A missing entry is trained.
struct PretrainedWeights {
  std::optional<ParamStore> tfg;
  std::optional<ParamStore> uoi;
  bool skip_uoi = false;  ///< leave the identifier untrained
  bool skip_tfg = false;  ///< leave both untrained and the bank empty (scenes only)
};

/// Everything fixed before navigation training: split, feature oracle,
/// scenes, the trained generator and the pretrained (then frozen) identifier.
class Assets {
 public:
  /// Generates scenes, then loads or trains the generator and identifier.
  explicit Assets(const ExperimentConfig& config, const PretrainedWeights& weights = {});
  Assets(const ExperimentConfig& config, const ParamStore& uoi_params, const ParamStore& tfg_params);

  std::shared_ptr<const ClassSplit> split;
  ClassFeatureOracle oracle;
  std::vector<Scene> train_scenes;
  std::vector<Scene> test_scenes;
  TargetFeatureGenerator tfg;
  UoiModel uoi;
  std::vector<Matrix> bank;  ///< generated maps of the unknown classes
  std::optional<TfgTrainReport> tfg_report;  ///< set when the generator was trained here
  std::optional<UoiPretrainReport> uoi_report;
  FrameDataset uoi_train_data;  ///< empty unless the identifier was trained here
  FrameDataset uoi_heldout_data;

  const Scene& scene(std::uint64_t id) const;
};

PolicyConfig policy_config(const ExperimentConfig& config, const ClassSplit& split);

/// alpha (MCFM), beta (MOGL) and psi (policy) with their initial values.
ParamStore init_agent_params(const ExperimentConfig& config, const ClassSplit& split);

/// Identifier outputs keyed by frame id. Observation features are a pure
/// function of the frame, so a hit returns exactly what a recomputation would.
class FrameCache {
 public:
  const UoiOutput& lookup(const ObservationFrame& frame, const Matrix& f_o, const UoiModel& uoi,
                          const std::vector<Matrix>& bank);
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::uint64_t, UoiOutput> entries_;
};

enum class RunMode { train, inference };

struct StepLog {
  int step = 0;
  AgentState state;
  int action = 0;
  bool cls = false;
  bool reminder = false;
  double reward = 0.0;
  std::optional<double> l_mcfm;  ///< set when an MCFM step ran
  std::optional<double> l_cca;   ///< set when a MOGL step ran
  double density = 0.0;
};

struct TaskRun {
  EpisodeSpec spec;
  SplitKind target_kind = SplitKind::known;
  ParamStore alpha_i;
  ParamStore beta_i;
  std::vector<StepLog> steps;
  GradMap grads;  ///< d L_a3c at (alpha_i, beta_i, psi); empty in inference mode
  double l_a3c = 0.0;
  double total_loss = 0.0;
  bool success = false;
  int steps_taken = 0;
};

/// lambda1 L_mcfm + lambda2 L_cca + mu L_a3c.
double total_loss(double l_mcfm, double l_cca, double l_a3c, double lambda1, double lambda2, double mu);

/// One episode. Train mode records gradients; inference mode does not. Both
/// sample actions unless `greedy_inference` is set. Inner updates run in both modes on the task copies;
/// the globals are never written.
TaskRun run_episode(const ExperimentConfig& config, const Assets& assets, FrameCache& cache,
                    const ParamStore& globals, const Scene& scene, const EpisodeSpec& spec, RunMode mode);

/// Optimiser for the outer loop; plain SGD or Adam with learning rate mu.
class OuterOptimizer {
 public:
  OuterOptimizer(std::string kind, double mu);
  void step(ParamStore& store, const GradMap& grads);
  const std::string& kind() const { return kind_; }
  Adam& adam() { return adam_; }
  const Adam& adam() const { return adam_; }

 private:
  std::string kind_;
  double mu_;
  Adam adam_;
};

/// Sums the A3C gradients of the batch: beta over every task, psi over tasks
/// whose target is not unseen. Throws std::invalid_argument on an empty batch.
GradMap outer_gradients(const std::vector<TaskRun>& batch);
void outer_update(ParamStore& globals, const std::vector<TaskRun>& batch, OuterOptimizer& optimizer);

struct Checkpoint {
  int version = 1;
  ExperimentConfig config;
  ParamStore agent;
  ParamStore uoi;
  ParamStore tfg;
  std::string optimizer;
  std::uint64_t adam_steps = 0;
  std::map<std::string, Adam::Moments> adam_moments;
  std::string rng_state;
  int episodes_done = 0;
};

std::string checkpoint_to_text(const Checkpoint& checkpoint);
/// Throws std::invalid_argument on a version or shape mismatch.
Checkpoint checkpoint_from_text(std::string_view text);
std::string sha256_hex(std::string_view data);

std::string params_to_json(const ParamStore& store);
ParamStore params_from_json(std::string_view text);

using EpisodeHook = std::function<void(const TaskRun&, const ParamStore& globals_after)>;

class MetaTrainer {
 public:
  /// `shared_cache` may be passed to reuse identifier outputs across
  /// trainers built on the same assets.
  MetaTrainer(const ExperimentConfig& config, const Assets& assets, FrameCache* shared_cache = nullptr);
  MetaTrainer(const Checkpoint& checkpoint, const Assets& assets, FrameCache* shared_cache = nullptr);
  MetaTrainer(const MetaTrainer&) = delete;
  MetaTrainer& operator=(const MetaTrainer&) = delete;

  /// Runs whole batches until at least `episodes` more episodes are done.
  /// The hook sees every task after its batch's outer update.
  void train(int episodes, const EpisodeHook& hook = {});
  std::vector<TaskRun> train_batch();

  const ParamStore& globals() const { return globals_; }
  ParamStore& globals() { return globals_; }
  int episodes_done() const { return episodes_done_; }
  Checkpoint checkpoint() const;
  FrameCache& cache() { return *cache_; }

 private:
  ExperimentConfig config_;
  const Assets& assets_;
  ParamStore globals_;
  OuterOptimizer optimizer_;
  Rng rng_;
  FrameCache own_cache_;
  FrameCache* cache_;
  int episodes_done_ = 0;
};

}  // namespace metanav
