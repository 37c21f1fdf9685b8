#include <gtest/gtest.h>

#include <set>

#include "grid_oracles.hpp"
#include "metanav/gridworld.hpp"

namespace metanav {
namespace {

using testing::oracle_shortest;
using testing::oracle_visible;
using testing::random_grid_case;

std::shared_ptr<const ClassSplit> toy() {
  static const auto split = make_toy_split();
  return split;
}

// 5x5 room, no walls, one object of class `cls` at `at`.
Scene single_object_scene(Cell at, int cls = 0, std::vector<Cell> walls = {}) {
  return Scene(7, 5, 5, std::move(walls), {{0, cls, at, toy()->info(cls).size}}, toy());
}

TEST(ClassSplit, ToySplitIsDisjointAndComplete) {
  const auto s = toy();
  EXPECT_EQ(s->known().size(), 6u);
  EXPECT_EQ(s->unknown().size(), 3u);
  EXPECT_EQ(s->unseen().size(), 2u);
  EXPECT_EQ(s->vocabulary().size(), 16u);
  std::set<int> all;
  for (auto* v : {&s->known(), &s->unknown(), &s->unseen()}) all.insert(v->begin(), v->end());
  EXPECT_EQ(all.size(), s->class_count());
}

TEST(ClassSplit, RejectsIntersectingSets) {
  std::vector<ClassInfo> classes = {{"A", {"a"}, SizeTag::small}, {"B", {"a"}, SizeTag::big}};
  EXPECT_THROW(ClassSplit({"a"}, classes, {0}, {0}, {1}), std::invalid_argument);
  EXPECT_THROW(ClassSplit({"a"}, classes, {0}, {1}, {}), std::invalid_argument);
  std::vector<ClassInfo> bad = {{"A", {}, SizeTag::small}};
  EXPECT_THROW(ClassSplit({"a"}, bad, {0}, {}, {}), std::invalid_argument);
}

TEST(Step, MoveIntoWallCollides) {
  const Scene s = single_object_scene({4, 4}, 0, {{2, 1}});
  const AgentState start{2, 2, Heading::north, Pitch::level};
  const auto out = step(s, start, Action::move_ahead);
  EXPECT_TRUE(out.collision);
  EXPECT_EQ(out.state, start);
  const auto edge = step(s, AgentState{0, 0, Heading::west, Pitch::level}, Action::move_ahead);
  EXPECT_TRUE(edge.collision);
}

TEST(Step, MoveIntoObjectCollides) {
  const Scene s = single_object_scene({2, 1});
  EXPECT_TRUE(step(s, AgentState{2, 2, Heading::north, Pitch::level}, Action::move_ahead).collision);
}

TEST(Step, FourRotationsAreIdentity) {
  const Scene s = single_object_scene({4, 4});
  for (Action a : {Action::rotate_left, Action::rotate_right}) {
    AgentState st{1, 1, Heading::east, Pitch::down};
    for (int i = 0; i < 4; ++i) st = step(s, st, a).state;
    EXPECT_EQ(st, (AgentState{1, 1, Heading::east, Pitch::down}));
  }
  EXPECT_EQ(step(s, AgentState{1, 1, Heading::north, Pitch::level}, Action::rotate_left).state.heading,
            Heading::west);
}

TEST(Step, PitchClamps) {
  const Scene s = single_object_scene({4, 4});
  AgentState st{1, 1, Heading::north, Pitch::level};
  st = step(s, st, Action::look_up).state;
  st = step(s, st, Action::look_up).state;
  EXPECT_EQ(st.pitch, Pitch::up);
  for (int i = 0; i < 3; ++i) st = step(s, st, Action::look_down).state;
  EXPECT_EQ(st.pitch, Pitch::down);
}

TEST(Step, DoneTerminatesAnywhere) {
  const Scene s = single_object_scene({4, 4});
  const auto out = step(s, AgentState{0, 0, Heading::south, Pitch::level}, Action::done);
  EXPECT_TRUE(out.terminal);
  EXPECT_FALSE(out.collision);
}

TEST(Step, UnknownActionIdThrows) {
  const Scene s = single_object_scene({4, 4});
  EXPECT_THROW(step(s, AgentState{}, 6), std::invalid_argument);
  EXPECT_THROW(step(s, AgentState{}, -1), std::invalid_argument);
}

TEST(Step, IsPure) {
  const auto c = random_grid_case(5, 6, toy());
  for (int a = 0; a < kNumActions; ++a) {
    const auto x = step(c.scene, c.start, a), y = step(c.scene, c.start, a);
    EXPECT_EQ(x.state, y.state);
    EXPECT_EQ(x.terminal, y.terminal);
    EXPECT_EQ(x.collision, y.collision);
  }
}

TEST(Observe, HandcraftedNorthView) {
  const Scene s = single_object_scene({2, 0});
  const auto f = observe(s, AgentState{2, 2, Heading::north, Pitch::level});
  ASSERT_EQ(f.objects.size(), 1u);
  EXPECT_DOUBLE_EQ(f.objects[0].distance, 2.0);
  EXPECT_DOUBLE_EQ(f.objects[0].bearing_deg, 0.0);
  EXPECT_FALSE(f.gt_unlabeled);
}

TEST(Observe, ObjectBehindIsHidden) {
  const Scene s = single_object_scene({2, 4});
  EXPECT_TRUE(observe(s, AgentState{2, 2, Heading::north, Pitch::level}).objects.empty());
}

TEST(Observe, GroundTruthFlagsUnlabeled) {
  const int microwave = toy()->class_id("Microwave");
  const Scene s = single_object_scene({2, 0}, microwave);
  EXPECT_TRUE(observe(s, AgentState{2, 2, Heading::north, Pitch::level}).gt_unlabeled);
}

TEST(Observe, WallBlocksLineOfSight) {
  const Scene s = single_object_scene({2, 0}, 0, {{2, 1}});
  EXPECT_TRUE(observe(s, AgentState{2, 2, Heading::north, Pitch::level}).objects.empty());
}

TEST(Observe, CornerGrazeDoesNotBlock) {
  // The diagonal from (0,2) to (2,0) touches only corners of (1,2) and (0,1).
  const Scene s = single_object_scene({2, 0}, 2, {{0, 1}, {1, 2}});
  EXPECT_EQ(observe(s, AgentState{0, 2, Heading::east, Pitch::level}).objects.size(), 1u);
}

TEST(Observe, SmallObjectsHiddenWhenLookingUp) {
  const Scene s = single_object_scene({2, 0}, 0);  // AlarmClock, small
  EXPECT_TRUE(observe(s, AgentState{2, 2, Heading::north, Pitch::up}).objects.empty());
  const Scene big = single_object_scene({2, 0}, toy()->class_id("Chair"));
  EXPECT_EQ(observe(big, AgentState{2, 2, Heading::north, Pitch::up}).objects.size(), 1u);
}

TEST(Observe, MatchesAngleAndRaySamplingOracle) {
  const WorldConfig cfg;
  int visible = 0;
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const auto c = random_grid_case(1000 + seed, 8, toy());
    for (int y = 0; y < c.scene.height(); ++y)
      for (int x = 0; x < c.scene.width(); ++x) {
        if (c.scene.is_blocked(x, y)) continue;
        for (int h = 0; h < 4; ++h)
          for (int p = -1; p <= 1; ++p) {
            const AgentState st{x, y, static_cast<Heading>(h), static_cast<Pitch>(p)};
            const auto frame = observe(c.scene, st, cfg);
            for (const auto& o : c.scene.objects()) {
              const bool expect = oracle_visible(c.scene, st, o, cfg);
              ASSERT_EQ(frame.find_instance(o.id) != nullptr, expect)
                  << "seed " << seed << " at " << x << "," << y << " h" << h << " p" << p;
              visible += expect;
            }
          }
      }
  }
  EXPECT_GT(visible, 100);
}

TEST(Success, Examples) {
  const Scene s = single_object_scene({2, 1});
  const Target t = Target::for_class(*toy(), 0);
  const AgentState st{2, 2, Heading::north, Pitch::level};
  EXPECT_TRUE(success(s, st, t, true, 10));
  EXPECT_FALSE(success(s, st, t, false, 10));
  EXPECT_FALSE(success(s, st, t, true, 101));
  EXPECT_FALSE(success(s, AgentState{2, 2, Heading::south, Pitch::level}, t, true, 10));
}

TEST(ShortestPath, AlreadySatisfiedIsOne) {
  const Scene s = single_object_scene({2, 1});
  EXPECT_EQ(shortest_path_len(s, {2, 2, Heading::north, Pitch::level}, Target::for_class(*toy(), 0)), 1);
}

TEST(ShortestPath, StraightCorridor) {
  // 1-wide corridor along x; target three cells ahead.
  std::vector<Cell> walls;
  for (int x = 0; x < 5; ++x) {
    walls.push_back({x, 0});
    walls.push_back({x, 2});
  }
  const Scene s(1, 5, 3, walls, {{0, 0, {3, 1}, SizeTag::small}}, toy());
  WorldConfig cfg;
  cfg.success_distance = 1.0;
  EXPECT_EQ(shortest_path_len(s, {0, 1, Heading::east, Pitch::level}, Target::for_class(*toy(), 0), cfg), 3);
}

TEST(ShortestPath, WalledOffIsUnreachable) {
  const Scene s(1, 5, 5, {{3, 0}, {3, 1}, {3, 2}, {3, 3}, {3, 4}}, {{0, 0, {4, 2}, SizeTag::small}}, toy());
  EXPECT_FALSE(shortest_path_len(s, {0, 2, Heading::east, Pitch::level}, Target::for_class(*toy(), 0)));
}

TEST(ShortestPath, MatchesExhaustiveRelaxationOnRandomGrids) {
  const WorldConfig cfg;
  int unreachable = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto c = random_grid_case(seed, 6, toy());
    const auto got = shortest_path_len(c.scene, c.start, c.target, cfg);
    const auto want = oracle_shortest(c.scene, c.start, c.target, cfg);
    ASSERT_EQ(got, want) << "seed " << seed;
    unreachable += !want.has_value();
  }
  EXPECT_GT(unreachable, 0);
}

TEST(Generate, SameSeedSameScene) {
  const auto a = generate_scene(42, {}, toy(), ScenePool::train);
  const auto b = generate_scene(42, {}, toy(), ScenePool::train);
  EXPECT_EQ(scene_to_text(a), scene_to_text(b));
  EXPECT_NE(scene_to_text(a), scene_to_text(generate_scene(43, {}, toy(), ScenePool::train)));
}

TEST(Generate, ScenesAreConnectedByFloodFill) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = generate_scene(seed, {8, 8, 0.1, 6}, toy(), ScenePool::test);
    // Independent flood fill from every free cell must reach all others.
    std::vector<Cell> free;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        if (!s.is_blocked(x, y)) free.push_back({x, y});
    std::set<Cell> reached = {free.front()};
    std::vector<Cell> frontier = {free.front()};
    while (!frontier.empty()) {
      const Cell c = frontier.back();
      frontier.pop_back();
      for (Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
        if (!s.is_blocked(n.x, n.y) && reached.insert(n).second) frontier.push_back(n);
      }
    }
    EXPECT_EQ(reached.size(), free.size()) << "seed " << seed;
    EXPECT_TRUE(free_cells_connected(s));
  }
}

TEST(Generate, TrainingScenesHaveNoUnseenClasses) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = generate_scene(seed, {}, toy(), ScenePool::train);
    for (const auto& o : s.objects()) EXPECT_NE(toy()->kind_of(o.class_id), SplitKind::unseen);
    for (int k = 0; k < 5; ++k) {
      const auto ep = generate_episode(seed * 10 + k, s, TargetPool::train);
      EXPECT_NE(toy()->kind_of(ep.target.class_id), SplitKind::unseen);
      EXPECT_TRUE(s.contains_class(ep.target.class_id));
    }
  }
}

TEST(Generate, TestScenesCoverEverySplit) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = generate_scene(seed, {}, toy(), ScenePool::test);
    std::set<SplitKind> kinds;
    for (const auto& o : s.objects()) kinds.insert(toy()->kind_of(o.class_id));
    EXPECT_EQ(kinds.size(), 3u);
    for (TargetPool p : {TargetPool::known, TargetPool::unknown, TargetPool::unseen}) {
      const auto ep = generate_episode(seed, s, p, {}, 3);
      EXPECT_GE(ep.shortest_path, 3);
      EXPECT_EQ(shortest_path_len(s, ep.start, ep.target), ep.shortest_path);
      EXPECT_EQ(ep.target.labeled, p == TargetPool::known);
    }
  }
}

TEST(Generate, ImpossibleRequestsError) {
  EXPECT_THROW(generate_scene(1, {8, 8, 0.1, 40}, toy(), ScenePool::test), std::invalid_argument);
  EXPECT_THROW(generate_scene(1, {3, 3, 0.9, 6}, toy(), ScenePool::test), std::invalid_argument);
  const auto s = generate_scene(3, {}, toy(), ScenePool::train);
  EXPECT_THROW(generate_episode(1, s, TargetPool::unseen), std::runtime_error);
}

TEST(Serialization, GoldenSceneText) {
  const Scene s(9, 3, 2, {{1, 0}}, {{0, 2, {2, 1}, SizeTag::big}}, toy());
  const std::string expected = R"({
  "id": 9,
  "width": 3,
  "height": 2,
  "walls": [
    [
      1,
      0
    ]
  ],
  "objects": [
    [
      0,
      "Chair",
      2,
      1,
      "big"
    ]
  ],
  "split": {
    "known": [
      "AlarmClock",
      "Bowl",
      "Chair",
      "Laptop",
      "Pillow",
      "Kettle"
    ],
    "unknown": [
      "Microwave",
      "Television",
      "Book"
    ],
    "unseen": [
      "Cup",
      "Bathtub"
    ]
  }
}
)";
  EXPECT_EQ(scene_to_text(s), expected);
}

TEST(Serialization, RoundTrips) {
  const auto split_text = split_to_text(*toy());
  const auto split = split_from_text(split_text);
  EXPECT_EQ(split_to_text(*split), split_text);
  const auto s = generate_scene(11, {}, toy(), ScenePool::test);
  const auto text = scene_to_text(s);
  EXPECT_EQ(scene_to_text(scene_from_text(text, split)), text);
  const auto ep = generate_episode(4, s, TargetPool::unseen);
  EXPECT_EQ(episode_to_text(episode_from_text(episode_to_text(ep))), episode_to_text(ep));
}

}  // namespace
}  // namespace metanav
