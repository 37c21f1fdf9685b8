#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace metanav {

enum class Heading : int { north = 0, east = 1, south = 2, west = 3 };
/// Camera pitch in 30 degree notches.
enum class Pitch : int { down = -1, level = 0, up = 1 };
enum class Action : int { move_ahead = 0, rotate_left, rotate_right, look_up, look_down, done };
inline constexpr int kNumActions = 6;

/// Throws std::invalid_argument for ids outside [0, 6).
Action action_from_id(int id);
std::string_view to_string(Action a);

enum class SizeTag { small, big };
enum class SplitKind { known, unknown, unseen };
std::string_view to_string(SizeTag s);
std::string_view to_string(SplitKind k);

struct Cell {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct AgentState {
  int x = 0;
  int y = 0;
  Heading heading = Heading::north;
  Pitch pitch = Pitch::level;

  int heading_degrees() const { return 90 * static_cast<int>(heading); }
  int pitch_degrees() const { return 30 * static_cast<int>(pitch); }
  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct ClassInfo {
  std::string name;
  std::vector<std::string> attributes;
  SizeTag size = SizeTag::small;
};

/// Known / unknown / unseen class sets plus the attribute vocabulary.
/// Class ids index `classes`.
class ClassSplit {
 public:
  ClassSplit(std::vector<std::string> vocabulary, std::vector<ClassInfo> classes,
             std::vector<int> known, std::vector<int> unknown, std::vector<int> unseen);

  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const std::vector<ClassInfo>& classes() const { return classes_; }
  const ClassInfo& info(int class_id) const;
  const std::vector<int>& known() const { return known_; }
  const std::vector<int>& unknown() const { return unknown_; }
  const std::vector<int>& unseen() const { return unseen_; }
  std::size_t class_count() const { return classes_.size(); }

  SplitKind kind_of(int class_id) const;
  bool is_known(int class_id) const { return kind_of(class_id) == SplitKind::known; }
  bool is_unlabeled(int class_id) const { return !is_known(class_id); }
  /// Position of a known class within known(); throws for other classes.
  std::size_t known_index(int class_id) const;
  int class_id(std::string_view name) const;

 private:
  std::vector<std::string> vocabulary_;
  std::vector<ClassInfo> classes_;
  std::vector<int> known_, unknown_, unseen_;
  std::vector<SplitKind> kind_;
};

/// Default toy split: 6 known, 3 unknown, 2 unseen classes over a
/// 16-attribute vocabulary.
std::shared_ptr<const ClassSplit> make_toy_split();

struct SceneObject {
  int id = 0;
  int class_id = 0;
  Cell pos;
  SizeTag size = SizeTag::small;
};

struct WorldConfig {
  double success_distance = 2.0;
  int view_range = 5;
  int max_steps = 100;
  double success_reward = 5.0;
  double step_penalty = -0.01;
};

/// Immutable grid with walls and objects. Objects occupy their cell.
class Scene {
 public:
  Scene(std::uint64_t id, int width, int height, std::vector<Cell> walls,
        std::vector<SceneObject> objects, std::shared_ptr<const ClassSplit> split);

  std::uint64_t id() const { return id_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<Cell>& walls() const { return walls_; }
  const std::vector<SceneObject>& objects() const { return objects_; }
  const ClassSplit& split() const { return *split_; }
  const std::shared_ptr<const ClassSplit>& split_ptr() const { return split_; }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  bool is_wall(int x, int y) const;
  /// Walls, objects and out-of-bounds cells cannot be entered.
  bool is_blocked(int x, int y) const;
  bool valid_state(const AgentState& s) const;
  bool contains_class(int class_id) const;
  std::vector<int> classes_present() const;

 private:
  std::uint64_t id_;
  int width_, height_;
  std::vector<Cell> walls_;
  std::vector<SceneObject> objects_;
  std::shared_ptr<const ClassSplit> split_;
  std::vector<std::uint8_t> occupancy_;  // 0 free, 1 wall, 2 object
};

/// Episode goal. `labeled` is true for known classes; unlabeled targets are
/// presented to the agent by attributes only.
struct Target {
  int class_id = 0;
  bool labeled = true;

  static Target for_class(const ClassSplit& split, int class_id) {
    return Target{class_id, split.is_known(class_id)};
  }
  friend bool operator==(const Target&, const Target&) = default;
};

struct EpisodeSpec {
  std::uint64_t scene_id = 0;
  std::uint64_t seed = 0;
  AgentState start;
  Target target;
  int max_steps = 100;
  int shortest_path = 0;
};

struct VisibleObject {
  int instance_id = 0;
  int class_id = 0;
  SizeTag size = SizeTag::small;
  Cell pos;
  /// Egocentric offsets: forward along the heading, lateral positive to the right.
  int forward = 0;
  int lateral = 0;
  double distance = 0.0;
  /// Degrees, positive clockwise from the heading.
  double bearing_deg = 0.0;
};

struct ObservationFrame {
  std::uint64_t frame_id = 0;
  AgentState state;
  std::vector<VisibleObject> objects;
  /// 1 iff any visible object belongs to an unknown or unseen class.
  bool gt_unlabeled = false;

  const VisibleObject* find_instance(int instance_id) const;
};

struct StepOutcome {
  AgentState state;
  bool terminal = false;
  bool collision = false;
};

StepOutcome step(const Scene& scene, const AgentState& state, Action action);
/// Throws std::invalid_argument for unknown action ids.
StepOutcome step(const Scene& scene, const AgentState& state, int action_id);

std::uint64_t frame_identity(const Scene& scene, const AgentState& state);

/// Objects inside the forward cone (90 degree aperture, range in cells) with
/// unobstructed line of sight. Small objects are hidden while looking up.
ObservationFrame observe(const Scene& scene, const AgentState& state, const WorldConfig& config = {});

/// True when the centre-to-centre segment crosses the interior of a wall cell.
bool line_of_sight_blocked(const Scene& scene, Cell from, Cell to);

bool target_in_reach(const ObservationFrame& frame, const Target& target, const WorldConfig& config);

bool success(const Scene& scene, const AgentState& state, const Target& target, bool issued_done,
             int steps_used, const WorldConfig& config = {}, int max_steps = 100);

/// Minimum number of actions, including the final Done, that reach a
/// success-satisfying state. std::nullopt when unreachable.
std::optional<int> shortest_path_len(const Scene& scene, const AgentState& start,
                                     const Target& target, const WorldConfig& config = {});

enum class ScenePool { train, test };
enum class TargetPool { train, train_known_only, known, unknown, unseen };

struct SceneGenParams {
  int width = 8;
  int height = 8;
  double wall_density = 0.1;
  int objects_per_scene = 4;
};

/// Deterministic in seed. Training scenes contain only known and unknown
/// classes; test scenes contain at least one class from every split.
Scene generate_scene(std::uint64_t seed, const SceneGenParams& params,
                     std::shared_ptr<const ClassSplit> split, ScenePool pool);

/// Draws a target from the classes present in the scene that belong to the
/// pool, and a start state with shortest path at least `min_shortest_path`.
EpisodeSpec generate_episode(std::uint64_t seed, const Scene& scene, TargetPool pool,
                             const WorldConfig& config = {}, int min_shortest_path = 1);

bool free_cells_connected(const Scene& scene);

std::string split_to_text(const ClassSplit& split);
std::shared_ptr<const ClassSplit> split_from_text(std::string_view text);
std::string scene_to_text(const Scene& scene);
Scene scene_from_text(std::string_view text, std::shared_ptr<const ClassSplit> split);
std::string episode_to_text(const EpisodeSpec& spec);
EpisodeSpec episode_from_text(std::string_view text);

}  // namespace metanav
