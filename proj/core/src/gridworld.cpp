#include "metanav/gridworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numbers>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "metanav/rng.hpp"

namespace metanav {

using json = nlohmann::ordered_json;

Action action_from_id(int id) {
  if (id < 0 || id >= kNumActions) {
    throw std::invalid_argument("unknown action id " + std::to_string(id));
  }
  return static_cast<Action>(id);
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::move_ahead: return "MoveAhead";
    case Action::rotate_left: return "RotateLeft";
    case Action::rotate_right: return "RotateRight";
    case Action::look_up: return "LookUp";
    case Action::look_down: return "LookDown";
    case Action::done: return "Done";
  }
  return "?";
}

std::string_view to_string(SizeTag s) { return s == SizeTag::small ? "small" : "big"; }

std::string_view to_string(SplitKind k) {
  switch (k) {
    case SplitKind::known: return "known";
    case SplitKind::unknown: return "unknown";
    case SplitKind::unseen: return "unseen";
  }
  return "?";
}

namespace {

SizeTag size_from_string(std::string_view s) {
  if (s == "small") return SizeTag::small;
  if (s == "big") return SizeTag::big;
  throw std::invalid_argument("unknown size tag '" + std::string(s) + "'");
}

}  // namespace

// ---------------------------------------------------------------- ClassSplit

ClassSplit::ClassSplit(std::vector<std::string> vocabulary, std::vector<ClassInfo> classes,
                       std::vector<int> known, std::vector<int> unknown, std::vector<int> unseen)
    : vocabulary_(std::move(vocabulary)),
      classes_(std::move(classes)),
      known_(std::move(known)),
      unknown_(std::move(unknown)),
      unseen_(std::move(unseen)) {
  if (known_.empty() || unknown_.empty() || unseen_.empty()) {
    throw std::invalid_argument("class split needs at least one known, unknown and unseen class");
  }
  const std::set<std::string> vocab(vocabulary_.begin(), vocabulary_.end());
  if (vocab.size() != vocabulary_.size()) throw std::invalid_argument("duplicate attribute");
  std::set<std::string> names;
  for (const auto& c : classes_) {
    if (!names.insert(c.name).second) throw std::invalid_argument("duplicate class " + c.name);
    if (c.attributes.empty()) throw std::invalid_argument("class " + c.name + " has no attributes");
    for (const auto& a : c.attributes) {
      if (!vocab.contains(a)) {
        throw std::invalid_argument("class " + c.name + " uses unknown attribute " + a);
      }
    }
  }
  const int n = static_cast<int>(classes_.size());
  std::vector<int> seen(n, 0);
  kind_.assign(n, SplitKind::known);
  auto mark = [&](const std::vector<int>& ids, SplitKind k) {
    for (int id : ids) {
      if (id < 0 || id >= n) throw std::invalid_argument("class id out of range");
      if (seen[id]++) throw std::invalid_argument("class sets intersect at " + classes_[id].name);
      kind_[id] = k;
    }
  };
  mark(known_, SplitKind::known);
  mark(unknown_, SplitKind::unknown);
  mark(unseen_, SplitKind::unseen);
  for (int i = 0; i < n; ++i) {
    if (!seen[i]) throw std::invalid_argument("class " + classes_[i].name + " is in no set");
  }
}

const ClassInfo& ClassSplit::info(int class_id) const {
  if (class_id < 0 || class_id >= static_cast<int>(classes_.size())) {
    throw std::out_of_range("class id " + std::to_string(class_id));
  }
  return classes_[class_id];
}

SplitKind ClassSplit::kind_of(int class_id) const {
  info(class_id);
  return kind_[class_id];
}

std::size_t ClassSplit::known_index(int class_id) const {
  auto it = std::find(known_.begin(), known_.end(), class_id);
  if (it == known_.end()) throw std::invalid_argument("class is not known");
  return static_cast<std::size_t>(it - known_.begin());
}

int ClassSplit::class_id(std::string_view name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].name == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown class '" + std::string(name) + "'");
}

std::shared_ptr<const ClassSplit> make_toy_split() {
  std::vector<std::string> vocab = {"small",      "big",        "metal",     "plastic",
                                    "glass",      "ceramic",    "wood",      "fabric",
                                    "pickupable", "receptacle", "openable",  "toggleable",
                                    "electronic", "soft",       "kitchen",   "bathroom"};
  // Unseen classes reuse attributes of the unknown ones so that their
  // descriptions stay compositional.
  std::vector<ClassInfo> classes = {
      {"AlarmClock", {"small", "metal", "pickupable", "electronic", "toggleable"}, SizeTag::small},
      {"Bowl", {"small", "ceramic", "pickupable", "receptacle", "kitchen"}, SizeTag::small},
      {"Chair", {"big", "wood"}, SizeTag::big},
      {"Laptop", {"small", "plastic", "pickupable", "openable", "electronic"}, SizeTag::small},
      {"Pillow", {"small", "fabric", "soft", "pickupable"}, SizeTag::small},
      {"Kettle", {"small", "metal", "receptacle", "toggleable", "kitchen"}, SizeTag::small},
      {"Microwave", {"big", "metal", "openable", "toggleable", "electronic", "kitchen"}, SizeTag::big},
      {"Television", {"big", "glass", "toggleable", "electronic"}, SizeTag::big},
      {"Book", {"small", "wood", "pickupable", "openable"}, SizeTag::small},
      {"Cup", {"small", "glass", "pickupable", "receptacle", "kitchen"}, SizeTag::small},
      {"Bathtub", {"big", "ceramic", "receptacle", "bathroom"}, SizeTag::big},
  };
  return std::make_shared<const ClassSplit>(std::move(vocab), std::move(classes),
                                            std::vector<int>{0, 1, 2, 3, 4, 5},
                                            std::vector<int>{6, 7, 8}, std::vector<int>{9, 10});
}

// --------------------------------------------------------------------- Scene

Scene::Scene(std::uint64_t id, int width, int height, std::vector<Cell> walls,
             std::vector<SceneObject> objects, std::shared_ptr<const ClassSplit> split)
    : id_(id),
      width_(width),
      height_(height),
      walls_(std::move(walls)),
      objects_(std::move(objects)),
      split_(std::move(split)) {
  if (width_ <= 0 || height_ <= 0) throw std::invalid_argument("scene must be non-empty");
  if (!split_) throw std::invalid_argument("scene needs a class split");
  occupancy_.assign(static_cast<std::size_t>(width_) * height_, 0);
  for (const Cell& w : walls_) {
    if (!in_bounds(w.x, w.y)) throw std::invalid_argument("wall outside grid");
    occupancy_[w.y * width_ + w.x] = 1;
  }
  std::set<int> ids;
  for (const SceneObject& o : objects_) {
    if (!in_bounds(o.pos.x, o.pos.y)) throw std::invalid_argument("object outside grid");
    if (occupancy_[o.pos.y * width_ + o.pos.x] != 0) {
      throw std::invalid_argument("object overlaps a wall or another object");
    }
    if (!ids.insert(o.id).second) throw std::invalid_argument("duplicate object id");
    split_->info(o.class_id);
    occupancy_[o.pos.y * width_ + o.pos.x] = 2;
  }
}

bool Scene::is_wall(int x, int y) const {
  return in_bounds(x, y) && occupancy_[y * width_ + x] == 1;
}

bool Scene::is_blocked(int x, int y) const {
  return !in_bounds(x, y) || occupancy_[y * width_ + x] != 0;
}

bool Scene::valid_state(const AgentState& s) const {
  const int h = static_cast<int>(s.heading), p = static_cast<int>(s.pitch);
  return !is_blocked(s.x, s.y) && h >= 0 && h < 4 && p >= -1 && p <= 1;
}

bool Scene::contains_class(int class_id) const {
  return std::any_of(objects_.begin(), objects_.end(),
                     [&](const SceneObject& o) { return o.class_id == class_id; });
}

std::vector<int> Scene::classes_present() const {
  std::set<int> ids;
  for (const auto& o : objects_) ids.insert(o.class_id);
  return {ids.begin(), ids.end()};
}

const VisibleObject* ObservationFrame::find_instance(int instance_id) const {
  for (const auto& o : objects) {
    if (o.instance_id == instance_id) return &o;
  }
  return nullptr;
}

// ---------------------------------------------------------------- dynamics

namespace {

constexpr std::array<int, 4> kDx = {0, 1, 0, -1};
constexpr std::array<int, 4> kDy = {-1, 0, 1, 0};

}  // namespace

StepOutcome step(const Scene& scene, const AgentState& state, Action action) {
  if (!scene.valid_state(state)) throw std::invalid_argument("invalid agent state");
  StepOutcome out{state, false, false};
  const int h = static_cast<int>(state.heading);
  switch (action) {
    case Action::move_ahead: {
      const int nx = state.x + kDx[h], ny = state.y + kDy[h];
      if (scene.is_blocked(nx, ny)) {
        out.collision = true;
      } else {
        out.state.x = nx;
        out.state.y = ny;
      }
      break;
    }
    case Action::rotate_left: out.state.heading = static_cast<Heading>((h + 3) % 4); break;
    case Action::rotate_right: out.state.heading = static_cast<Heading>((h + 1) % 4); break;
    case Action::look_up:
      out.state.pitch = static_cast<Pitch>(std::min(1, static_cast<int>(state.pitch) + 1));
      break;
    case Action::look_down:
      out.state.pitch = static_cast<Pitch>(std::max(-1, static_cast<int>(state.pitch) - 1));
      break;
    case Action::done: out.terminal = true; break;
    default: throw std::invalid_argument("unknown action");
  }
  return out;
}

StepOutcome step(const Scene& scene, const AgentState& state, int action_id) {
  return step(scene, state, action_from_id(action_id));
}

std::uint64_t frame_identity(const Scene& scene, const AgentState& s) {
  return derive_seed(scene.id(),
                     {static_cast<std::uint64_t>(s.x), static_cast<std::uint64_t>(s.y),
                      static_cast<std::uint64_t>(static_cast<int>(s.heading)),
                      static_cast<std::uint64_t>(static_cast<int>(s.pitch) + 1)});
}

namespace {

// Exact rational t-values on a doubled grid so that corner touches compare
// exactly.
struct Frac {
  long num;
  long den;  // > 0
};

bool less(const Frac& a, const Frac& b) { return a.num * b.den < b.num * a.den; }

Frac make_frac(long num, long den) {
  return den < 0 ? Frac{-num, -den} : Frac{num, den};
}

// Does the open segment interval intersect the open square of cell (cx, cy)?
bool segment_hits_open_cell(long x0, long y0, long x1, long y1, int cx, int cy) {
  Frac lo{0, 1}, hi{1, 1};
  const long p0[2] = {x0, y0};
  const long d[2] = {x1 - x0, y1 - y0};
  const long bmin[2] = {2L * cx - 1, 2L * cy - 1};
  const long bmax[2] = {2L * cx + 1, 2L * cy + 1};
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0) {
      if (!(p0[k] > bmin[k] && p0[k] < bmax[k])) return false;
      continue;
    }
    Frac ta = make_frac(bmin[k] - p0[k], d[k]);
    Frac tb = make_frac(bmax[k] - p0[k], d[k]);
    if (less(tb, ta)) std::swap(ta, tb);
    if (less(lo, ta)) lo = ta;
    if (less(tb, hi)) hi = tb;
  }
  return less(lo, hi);
}

}  // namespace

bool line_of_sight_blocked(const Scene& scene, Cell from, Cell to) {
  const long x0 = 2L * from.x, y0 = 2L * from.y, x1 = 2L * to.x, y1 = 2L * to.y;
  for (const Cell& w : scene.walls()) {
    if (w == from || w == to) continue;
    if (w.x < std::min(from.x, to.x) - 1 || w.x > std::max(from.x, to.x) + 1) continue;
    if (w.y < std::min(from.y, to.y) - 1 || w.y > std::max(from.y, to.y) + 1) continue;
    if (segment_hits_open_cell(x0, y0, x1, y1, w.x, w.y)) return true;
  }
  return false;
}

ObservationFrame observe(const Scene& scene, const AgentState& state, const WorldConfig& config) {
  if (!scene.valid_state(state)) throw std::invalid_argument("invalid agent state");
  ObservationFrame frame;
  frame.frame_id = frame_identity(scene, state);
  frame.state = state;
  const int h = static_cast<int>(state.heading);
  const int r2 = config.view_range * config.view_range;
  for (const SceneObject& o : scene.objects()) {
    const int dx = o.pos.x - state.x, dy = o.pos.y - state.y;
    // Forward is the heading direction; lateral is 90 degrees clockwise.
    const int forward = dx * kDx[h] + dy * kDy[h];
    const int lateral = dx * kDx[(h + 1) % 4] + dy * kDy[(h + 1) % 4];
    if (forward <= 0 || std::abs(lateral) > forward) continue;
    if (forward * forward + lateral * lateral > r2) continue;
    if (state.pitch == Pitch::up && o.size == SizeTag::small) continue;
    if (line_of_sight_blocked(scene, Cell{state.x, state.y}, o.pos)) continue;
    VisibleObject v;
    v.instance_id = o.id;
    v.class_id = o.class_id;
    v.size = o.size;
    v.pos = o.pos;
    v.forward = forward;
    v.lateral = lateral;
    v.distance = std::sqrt(static_cast<double>(forward * forward + lateral * lateral));
    v.bearing_deg = std::atan2(static_cast<double>(lateral), static_cast<double>(forward)) * 180.0 /
                    std::numbers::pi;
    frame.objects.push_back(v);
    if (scene.split().is_unlabeled(o.class_id)) frame.gt_unlabeled = true;
  }
  return frame;
}

bool target_in_reach(const ObservationFrame& frame, const Target& target, const WorldConfig& config) {
  return std::any_of(frame.objects.begin(), frame.objects.end(), [&](const VisibleObject& v) {
    return v.class_id == target.class_id && v.distance <= config.success_distance + 1e-12;
  });
}

bool success(const Scene& scene, const AgentState& state, const Target& target, bool issued_done,
             int steps_used, const WorldConfig& config, int max_steps) {
  if (!issued_done || steps_used > max_steps) return false;
  return target_in_reach(observe(scene, state, config), target, config);
}

namespace {

int state_index(const Scene& scene, const AgentState& s) {
  return ((s.y * scene.width() + s.x) * 4 + static_cast<int>(s.heading)) * 3 +
         (static_cast<int>(s.pitch) + 1);
}

}  // namespace

std::optional<int> shortest_path_len(const Scene& scene, const AgentState& start,
                                     const Target& target, const WorldConfig& config) {
  if (!scene.valid_state(start)) throw std::invalid_argument("invalid start state");
  const int n = scene.width() * scene.height() * 12;
  std::vector<int> dist(n, -1);
  std::deque<AgentState> queue;
  dist[state_index(scene, start)] = 0;
  queue.push_back(start);
  while (!queue.empty()) {
    const AgentState s = queue.front();
    queue.pop_front();
    const int d = dist[state_index(scene, s)];
    if (target_in_reach(observe(scene, s, config), target, config)) return d + 1;
    for (int a = 0; a < kNumActions - 1; ++a) {
      const AgentState next = step(scene, s, static_cast<Action>(a)).state;
      int& nd = dist[state_index(scene, next)];
      if (nd < 0) {
        nd = d + 1;
        queue.push_back(next);
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- generation

bool free_cells_connected(const Scene& scene) {
  const int w = scene.width(), h = scene.height();
  std::vector<char> seen(static_cast<std::size_t>(w) * h, 0);
  int total = 0;
  Cell first{-1, -1};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!scene.is_blocked(x, y)) {
        if (total++ == 0) first = {x, y};
      }
  if (total == 0) return false;
  std::vector<Cell> stack = {first};
  seen[first.y * w + first.x] = 1;
  int reached = 0;
  while (!stack.empty()) {
    const Cell c = stack.back();
    stack.pop_back();
    ++reached;
    for (int k = 0; k < 4; ++k) {
      const int nx = c.x + kDx[k], ny = c.y + kDy[k];
      if (scene.is_blocked(nx, ny) || seen[ny * w + nx]) continue;
      seen[ny * w + nx] = 1;
      stack.push_back({nx, ny});
    }
  }
  return reached == total;
}

namespace {

constexpr int kMaxSceneAttempts = 200;

bool has_free_neighbour(const Scene& scene, Cell c) {
  for (int k = 0; k < 4; ++k) {
    if (!scene.is_blocked(c.x + kDx[k], c.y + kDy[k])) return true;
  }
  return false;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

int pick(const std::vector<int>& pool, Rng& rng) { return pool[rng.index(pool.size())]; }

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneGenParams& params,
                     std::shared_ptr<const ClassSplit> split, ScenePool pool) {
  if (!split) throw std::invalid_argument("generate_scene needs a class split");
  if (params.width < 2 || params.height < 2) throw std::invalid_argument("grid too small");
  if (params.wall_density < 0.0 || params.wall_density >= 1.0) {
    throw std::invalid_argument("wall density must be in [0, 1)");
  }

  // Class choice: one of each required split first, then the rest.
  std::vector<int> candidates = split->known();
  candidates.insert(candidates.end(), split->unknown().begin(), split->unknown().end());
  if (pool == ScenePool::test) {
    candidates.insert(candidates.end(), split->unseen().begin(), split->unseen().end());
  }
  if (params.objects_per_scene < (pool == ScenePool::test ? 3 : 2) ||
      params.objects_per_scene > static_cast<int>(candidates.size())) {
    throw std::invalid_argument("cannot place required classes: objects_per_scene = " +
                                std::to_string(params.objects_per_scene));
  }

  Rng rng(derive_seed(seed, {0x5ce7e}));
  const int cells = params.width * params.height;
  const int wall_count = static_cast<int>(std::lround(params.wall_density * cells));
  if (cells - wall_count < params.objects_per_scene + 2) {
    throw std::invalid_argument("cannot place required classes: grid too dense");
  }

  for (int attempt = 0; attempt < kMaxSceneAttempts; ++attempt) {
    std::vector<int> classes = {pick(split->known(), rng), pick(split->unknown(), rng)};
    if (pool == ScenePool::test) classes.push_back(pick(split->unseen(), rng));
    std::vector<int> rest;
    for (int c : candidates) {
      if (std::find(classes.begin(), classes.end(), c) == classes.end()) rest.push_back(c);
    }
    shuffle(rest, rng);
    while (static_cast<int>(classes.size()) < params.objects_per_scene) {
      classes.push_back(rest.back());
      rest.pop_back();
    }

    std::vector<Cell> all;
    for (int y = 0; y < params.height; ++y)
      for (int x = 0; x < params.width; ++x) all.push_back({x, y});
    shuffle(all, rng);
    std::vector<Cell> walls(all.begin(), all.begin() + wall_count);
    std::sort(walls.begin(), walls.end());
    Scene bare(seed, params.width, params.height, walls, {}, split);
    if (!free_cells_connected(bare)) continue;

    std::vector<SceneObject> objects;
    std::vector<Cell> spots(all.begin() + wall_count, all.end());
    bool ok = true;
    for (std::size_t i = 0; i < classes.size() && ok; ++i) {
      ok = false;
      for (std::size_t tries = 0; tries < spots.size(); ++tries) {
        const std::size_t k = rng.index(spots.size());
        std::vector<SceneObject> trial = objects;
        trial.push_back(SceneObject{static_cast<int>(i), classes[i], spots[k],
                                    split->info(classes[i]).size});
        Scene s(seed, params.width, params.height, walls, trial, split);
        if (!free_cells_connected(s)) continue;
        if (!std::all_of(trial.begin(), trial.end(),
                         [&](const SceneObject& o) { return has_free_neighbour(s, o.pos); })) {
          continue;
        }
        objects = std::move(trial);
        spots.erase(spots.begin() + static_cast<std::ptrdiff_t>(k));
        ok = true;
        break;
      }
    }
    if (!ok) continue;
    return Scene(seed, params.width, params.height, std::move(walls), std::move(objects), split);
  }
  throw std::runtime_error("cannot place required classes after " +
                           std::to_string(kMaxSceneAttempts) + " attempts");
}

EpisodeSpec generate_episode(std::uint64_t seed, const Scene& scene, TargetPool pool,
                             const WorldConfig& config, int min_shortest_path) {
  const ClassSplit& split = scene.split();
  std::vector<int> allowed;
  for (int c : scene.classes_present()) {
    const SplitKind k = split.kind_of(c);
    bool take = false;
    switch (pool) {
      case TargetPool::train: take = k != SplitKind::unseen; break;
      case TargetPool::train_known_only:
      case TargetPool::known: take = k == SplitKind::known; break;
      case TargetPool::unknown: take = k == SplitKind::unknown; break;
      case TargetPool::unseen: take = k == SplitKind::unseen; break;
    }
    if (take) allowed.push_back(c);
  }
  if (allowed.empty()) throw std::runtime_error("scene has no class from the requested pool");

  Rng rng(derive_seed(seed, {scene.id(), 0xe915}));
  std::vector<Cell> free;
  for (int y = 0; y < scene.height(); ++y)
    for (int x = 0; x < scene.width(); ++x)
      if (!scene.is_blocked(x, y)) free.push_back({x, y});

  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int cls = allowed[rng.index(allowed.size())];
    const Cell c = free[rng.index(free.size())];
    AgentState start{c.x, c.y, static_cast<Heading>(rng.index(4)), Pitch::level};
    const Target target = Target::for_class(split, cls);
    const auto len = shortest_path_len(scene, start, target, config);
    if (!len || *len < min_shortest_path) continue;
    EpisodeSpec spec;
    spec.scene_id = scene.id();
    spec.seed = seed;
    spec.start = start;
    spec.target = target;
    spec.max_steps = config.max_steps;
    spec.shortest_path = *len;
    return spec;
  }
  throw std::runtime_error("no start state satisfies the minimum shortest path");
}

// ------------------------------------------------------------- serialization

std::string split_to_text(const ClassSplit& split) {
  json j;
  j["vocabulary"] = split.vocabulary();
  json classes = json::array();
  for (const auto& c : split.classes()) {
    classes.push_back(json{{"name", c.name}, {"size", to_string(c.size)}, {"attributes", c.attributes}});
  }
  j["classes"] = classes;
  auto names = [&](const std::vector<int>& ids) {
    json a = json::array();
    for (int id : ids) a.push_back(split.info(id).name);
    return a;
  };
  j["known"] = names(split.known());
  j["unknown"] = names(split.unknown());
  j["unseen"] = names(split.unseen());
  return j.dump(2) + "\n";
}

std::shared_ptr<const ClassSplit> split_from_text(std::string_view text) {
  const json j = json::parse(text);
  std::vector<ClassInfo> classes;
  for (const auto& c : j.at("classes")) {
    classes.push_back(ClassInfo{c.at("name").get<std::string>(),
                                c.at("attributes").get<std::vector<std::string>>(),
                                size_from_string(c.at("size").get<std::string>())});
  }
  auto ids = [&](const char* key) {
    std::vector<int> out;
    for (const auto& n : j.at(key)) {
      const auto name = n.get<std::string>();
      auto it = std::find_if(classes.begin(), classes.end(),
                             [&](const ClassInfo& c) { return c.name == name; });
      if (it == classes.end()) throw std::invalid_argument("unknown class '" + name + "'");
      out.push_back(static_cast<int>(it - classes.begin()));
    }
    return out;
  };
  auto known = ids("known"), unknown = ids("unknown"), unseen = ids("unseen");
  return std::make_shared<const ClassSplit>(j.at("vocabulary").get<std::vector<std::string>>(),
                                            std::move(classes), std::move(known),
                                            std::move(unknown), std::move(unseen));
}

std::string scene_to_text(const Scene& scene) {
  const ClassSplit& split = scene.split();
  json j;
  j["id"] = scene.id();
  j["width"] = scene.width();
  j["height"] = scene.height();
  json walls = json::array();
  for (const Cell& w : scene.walls()) walls.push_back(json::array({w.x, w.y}));
  j["walls"] = walls;
  json objects = json::array();
  for (const SceneObject& o : scene.objects()) {
    objects.push_back(
        json::array({o.id, split.info(o.class_id).name, o.pos.x, o.pos.y, to_string(o.size)}));
  }
  j["objects"] = objects;
  auto names = [&](const std::vector<int>& ids) {
    json a = json::array();
    for (int id : ids) a.push_back(split.info(id).name);
    return a;
  };
  j["split"] = json{{"known", names(split.known())},
                    {"unknown", names(split.unknown())},
                    {"unseen", names(split.unseen())}};
  return j.dump(2) + "\n";
}

Scene scene_from_text(std::string_view text, std::shared_ptr<const ClassSplit> split) {
  if (!split) throw std::invalid_argument("scene_from_text needs a class split");
  const json j = json::parse(text);
  // The embedded split must agree with the one supplied.
  for (const char* key : {"known", "unknown", "unseen"}) {
    const auto& ids = std::string_view(key) == "known"     ? split->known()
                      : std::string_view(key) == "unknown" ? split->unknown()
                                                           : split->unseen();
    const auto names = j.at("split").at(key).get<std::vector<std::string>>();
    if (names.size() != ids.size()) throw std::invalid_argument("scene split mismatch");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (split->info(ids[i]).name != names[i]) throw std::invalid_argument("scene split mismatch");
    }
  }
  std::vector<Cell> walls;
  for (const auto& w : j.at("walls")) walls.push_back({w.at(0).get<int>(), w.at(1).get<int>()});
  std::vector<SceneObject> objects;
  for (const auto& o : j.at("objects")) {
    objects.push_back(SceneObject{o.at(0).get<int>(), split->class_id(o.at(1).get<std::string>()),
                                  Cell{o.at(2).get<int>(), o.at(3).get<int>()},
                                  size_from_string(o.at(4).get<std::string>())});
  }
  return Scene(j.at("id").get<std::uint64_t>(), j.at("width").get<int>(), j.at("height").get<int>(),
               std::move(walls), std::move(objects), std::move(split));
}

std::string episode_to_text(const EpisodeSpec& spec) {
  json j;
  j["scene_id"] = spec.scene_id;
  j["seed"] = spec.seed;
  j["start"] = json{{"x", spec.start.x},
                    {"y", spec.start.y},
                    {"heading", spec.start.heading_degrees()},
                    {"pitch", spec.start.pitch_degrees()}};
  j["target"] = json{{"class", spec.target.class_id}, {"labeled", spec.target.labeled}};
  j["max_steps"] = spec.max_steps;
  j["shortest_path"] = spec.shortest_path;
  return j.dump(2) + "\n";
}

EpisodeSpec episode_from_text(std::string_view text) {
  const json j = json::parse(text);
  EpisodeSpec spec;
  spec.scene_id = j.at("scene_id").get<std::uint64_t>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  const auto& s = j.at("start");
  const int heading = s.at("heading").get<int>(), pitch = s.at("pitch").get<int>();
  if (heading % 90 != 0 || heading < 0 || heading > 270 || pitch % 30 != 0 || std::abs(pitch) > 30) {
    throw std::invalid_argument("invalid start orientation");
  }
  spec.start = AgentState{s.at("x").get<int>(), s.at("y").get<int>(),
                          static_cast<Heading>(heading / 90), static_cast<Pitch>(pitch / 30)};
  spec.target = Target{j.at("target").at("class").get<int>(), j.at("target").at("labeled").get<bool>()};
  spec.max_steps = j.at("max_steps").get<int>();
  spec.shortest_path = j.at("shortest_path").get<int>();
  return spec;
}

}  // namespace metanav
