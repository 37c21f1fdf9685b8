#pragma once

// Metrics, split-wise evaluation, baselines and report emission.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "metanav/metatrain.hpp"

namespace metanav {

struct EpisodeResult {
  bool success = false;
  int steps = 0;                ///< L_i
  std::optional<int> shortest;  ///< L*_i
  SplitKind split = SplitKind::known;
  std::uint64_t seed = 0;
  std::uint64_t scene_id = 0;
};

/// Throws std::invalid_argument on an empty set.
double metric_sr(std::span<const EpisodeResult> results);
/// Throws std::invalid_argument on an empty set or a missing L*.
double metric_spl(std::span<const EpisodeResult> results);

struct Stratum {
  int min_shortest = 1;
  std::size_t count = 0;            ///< episodes with L* >= min_shortest
  std::size_t exclusive_count = 0;  ///< ... and below the next threshold
  std::optional<double> sr;         ///< absent for an empty stratum
  std::optional<double> spl;
};

/// One cumulative stratum per threshold (ascending). Exclusive counts sum to
/// the number of results with L* at or above the first threshold.
std::vector<Stratum> distance_stratified(std::span<const EpisodeResult> results,
                                         std::vector<int> thresholds = {1, 5});

inline constexpr std::array<SplitKind, 3> kSplits = {SplitKind::known, SplitKind::unknown, SplitKind::unseen};
using SplitResults = std::array<std::vector<EpisodeResult>, 3>;

enum class Agent { learned, random };

struct EvalOptions {
  int episodes_per_split = 200;
  Agent agent = Agent::learned;
  std::ostream* trace = nullptr;  ///< line-delimited step records when set
  std::string label;              ///< method name in trace records; defaults to the flag string
};

/// Test-scene episodes for one split. They depend only on the experiment seed
/// and world settings, so every variant of a seed sees the same episodes.
std::vector<EpisodeSpec> eval_episodes(const ExperimentConfig& config, const Assets& assets, SplitKind split,
                                       int count);

/// Uniform draw over the six actions.
int random_action(Rng& rng);
/// Random actions until Done or the step cap.
EpisodeResult random_policy_episode(const Scene& scene, const EpisodeSpec& spec, const WorldConfig& world);
std::vector<EpisodeResult> random_policy(const ExperimentConfig& config, const Assets& assets, SplitKind split,
                                         int episodes);

/// Inference-mode evaluation of `globals` on every split.
SplitResults evaluate(const ExperimentConfig& config, const Assets& assets, const ParamStore& globals,
                      FrameCache& cache, const EvalOptions& options = {});

/// Evaluates a checkpoint under `flags`. Throws std::invalid_argument when
/// the flags imply parameter shapes the checkpoint does not have.
SplitResults eval_checkpoint(const Checkpoint& checkpoint, const AblationFlags& flags, const Assets& assets,
                             FrameCache& cache, const EvalOptions& options = {});

struct Stat {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation; 0 for a single seed
};
Stat mean_std(std::span<const double> values);

struct MethodRow {
  std::string label;
  AblationFlags flags;
  std::array<std::vector<double>, 3> sr_per_seed;
  std::array<std::vector<double>, 3> spl_per_seed;
  std::array<Stat, 3> sr;
  std::array<Stat, 3> spl;
  std::vector<double> unlabeled_sr_per_seed;  ///< unknown and unseen episodes pooled
  Stat unlabeled_sr;
  std::array<std::vector<Stratum>, 3> strata;  ///< pooled over seeds
};

MethodRow aggregate(std::string label, const AblationFlags& flags, const std::vector<SplitResults>& per_seed);

/// Comma-separated tables. Rates are fractions printed with six decimals.
std::string splits_table_csv(std::span<const MethodRow> rows);
std::string component_table_csv(std::span<const MethodRow> rows);
std::string loss_meta_table_csv(std::span<const MethodRow> rows);
std::string distance_table_csv(std::span<const MethodRow> rows);

/// One JSON object per step.
void write_trace(std::ostream& out, const std::string& label, const TaskRun& run);

/// Per-episode results of one method and seed, one JSON object per line.
struct LabeledResults {
  std::string label;
  AblationFlags flags;
  std::uint64_t seed = 0;
  SplitResults results;
};
std::string results_to_jsonl(const LabeledResults& results);
/// Groups records by (label, seed) in order of first appearance.
std::vector<LabeledResults> results_from_jsonl(std::string_view text);
/// One row per label, seeds in order of appearance.
std::vector<MethodRow> aggregate_all(const std::vector<LabeledResults>& results);

struct VariantRun {
  LabeledResults eval;
  Checkpoint checkpoint;
  std::string checkpoint_sha256;
};

/// Trains `flags` from the initial parameters on `assets`, then evaluates.
VariantRun train_and_evaluate(ExperimentConfig config, const Assets& assets, const std::string& label,
                              const AblationFlags& flags, int train_episodes, int episodes_per_split,
                              FrameCache* shared_cache = nullptr);

struct AblationMatrix {
  std::vector<VariantRun> runs;
  std::vector<MethodRow> rows;
  std::string components_csv;
  std::string loss_meta_csv;
  std::string report_sha256;
};

/// Every named preset on every seed. Variants of one seed share the assets
/// and the identifier cache.
AblationMatrix run_ablation(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                            const std::vector<std::string>& variants, int train_episodes, int episodes_per_split,
                            const std::function<void(const VariantRun&)>& progress = {});

}  // namespace metanav
