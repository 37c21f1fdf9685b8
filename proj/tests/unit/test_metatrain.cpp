#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "metanav/metatrain.hpp"
#include "small_world.hpp"

namespace metanav {
namespace {

using testing::small_assets;
using testing::small_config;

EpisodeSpec episode_for(const Scene& scene, TargetPool pool, std::uint64_t seed) {
  return generate_episode(seed, scene, pool, small_config().world, 3);
}

/// First test scene episode whose target comes from `pool`.
EpisodeSpec test_episode(TargetPool pool, std::uint64_t seed = 5) {
  return episode_for(small_assets().test_scenes.front(), pool, seed);
}

TEST(TotalLoss, WeightedSum) {
  EXPECT_EQ(total_loss(0.0, 0.0, 0.0, 1e-4, 1e-4, 1e-4), 0.0);
  EXPECT_EQ(total_loss(1.0, 2.0, 3.0, 1.0, 1.0, 1.0), 6.0);
}

TEST(RunEpisode, LoggedTotalMatchesRecomputation) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  const ParamStore globals = init_agent_params(cfg, *a.split);
  FrameCache cache;
  const Scene& scene = a.test_scenes.front();
  const TaskRun run = run_episode(cfg, a, cache, globals, scene, test_episode(TargetPool::unknown), RunMode::train);
  double mcfm = 0.0, cca = 0.0;
  for (const auto& s : run.steps) {
    mcfm += s.l_mcfm.value_or(0.0);
    cca += s.l_cca.value_or(0.0);
  }
  const auto& m = cfg.meta;
  EXPECT_DOUBLE_EQ(run.total_loss, m.lambda1 * mcfm + m.lambda2 * cca + m.mu * run.l_a3c);
}

TEST(RunEpisode, InferenceLeavesGlobalsBitIdentical) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  const ParamStore globals = init_agent_params(cfg, *a.split);
  const ParamStore before = globals;
  FrameCache cache;
  for (auto pool : {TargetPool::known, TargetPool::unknown, TargetPool::unseen}) {
    const TaskRun run =
        run_episode(cfg, a, cache, globals, a.test_scenes.front(), test_episode(pool), RunMode::inference);
    EXPECT_TRUE(run.grads.empty());
  }
  EXPECT_TRUE(globals == before);
  EXPECT_EQ(globals.fingerprint(), before.fingerprint());
}

TEST(RunEpisode, LabeledTargetNeverAdaptsAlpha) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  const ParamStore globals = init_agent_params(cfg, *a.split);
  FrameCache cache;
  const TaskRun run =
      run_episode(cfg, a, cache, globals, a.test_scenes.front(), test_episode(TargetPool::known), RunMode::train);
  for (const auto& s : run.steps) EXPECT_FALSE(s.l_mcfm.has_value());
  EXPECT_TRUE(run.alpha_i == globals.extract(ParamGroup::alpha));
}

TEST(RunEpisode, McfmStepsOnlyOnClsStepsOfUnlabeledTargets) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  const ParamStore globals = init_agent_params(cfg, *a.split);
  FrameCache cache;
  int updates = 0;
  std::vector<std::pair<const Scene*, TargetPool>> cases;
  for (const auto& scene : a.train_scenes)
    for (auto pool : {TargetPool::known, TargetPool::unknown}) cases.emplace_back(&scene, pool);
  for (const auto& scene : a.test_scenes) cases.emplace_back(&scene, TargetPool::unseen);
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    for (const auto& [scene, pool] : cases) {
      EpisodeSpec spec;
      try {
        spec = episode_for(*scene, pool, seed);
      } catch (const std::runtime_error&) {
        continue;
      }
      const TaskRun run = run_episode(cfg, a, cache, globals, *scene, spec, RunMode::train);
      bool any = false;
      for (const auto& s : run.steps) {
        if (!s.l_mcfm) continue;
        any = true;
        ++updates;
        EXPECT_TRUE(s.cls);
        EXPECT_FALSE(run.spec.target.labeled);
      }
      if (!any) EXPECT_TRUE(run.alpha_i == globals.extract(ParamGroup::alpha));
    }
  }
  EXPECT_GT(updates, 0);
}

TEST(RunEpisode, BetaUpdatedOncePerStep) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  const ParamStore globals = init_agent_params(cfg, *a.split);
  FrameCache cache;
  for (auto mode : {RunMode::train, RunMode::inference}) {
    const TaskRun run =
        run_episode(cfg, a, cache, globals, a.test_scenes.front(), test_episode(TargetPool::unseen), mode);
    ASSERT_EQ(static_cast<int>(run.steps.size()), run.steps_taken);
    for (const auto& s : run.steps) EXPECT_TRUE(s.l_cca.has_value());
    EXPECT_FALSE(run.beta_i == globals.extract(ParamGroup::beta));
  }
}

TEST(RunEpisode, NoMetaSkipsInferenceAdaptation) {
  const auto& a = small_assets();
  auto cfg = small_config();
  cfg.flags = preset("no_mogl_meta");
  cfg.flags.mcfm_meta_on = false;
  const ParamStore globals = init_agent_params(cfg, *a.split);
  FrameCache cache;
  const TaskRun run = run_episode(cfg, a, cache, globals, a.test_scenes.front(), test_episode(TargetPool::unseen),
                                  RunMode::inference);
  for (const auto& s : run.steps) {
    EXPECT_FALSE(s.l_mcfm.has_value());
    EXPECT_FALSE(s.l_cca.has_value());
  }
  EXPECT_TRUE(run.beta_i == globals.extract(ParamGroup::beta));
}

TEST(RunEpisode, PlainBaselineHasNoRelationshipInput) {
  const auto& a = small_assets();
  auto cfg = small_config();
  cfg.flags = preset("baseline");
  const ParamStore globals = init_agent_params(cfg, *a.split);
  EXPECT_FALSE(globals.contains("policy.ffn_r.w"));
  FrameCache cache;
  const TaskRun run =
      run_episode(cfg, a, cache, globals, a.test_scenes.front(), test_episode(TargetPool::known), RunMode::train);
  for (const auto& s : run.steps) EXPECT_FALSE(s.cls);
  for (const auto& [name, g] : run.grads) EXPECT_EQ(globals.group_of(name), ParamGroup::psi) << name;
  EXPECT_EQ(cache.size(), 0u);
}

TEST(RunEpisode, ActorGradientMatchesRecomputation) {
  // The advantage does not depend on the actor weights, so a finite
  // difference of L_a3c over them recovers the recorded gradient as long as
  // the sampled actions stay the same.
  const auto& a = small_assets();
  const auto cfg = small_config();
  const ParamStore globals = init_agent_params(cfg, *a.split);
  FrameCache cache;
  const Scene& scene = a.test_scenes.front();
  const EpisodeSpec spec = test_episode(TargetPool::unknown, 9);
  const TaskRun base = run_episode(cfg, a, cache, globals, scene, spec, RunMode::train);
  const Matrix& g = base.grads.at("policy.actor.w");
  const double eps = 1e-6;
  double worst = 0.0;
  for (std::size_t k = 0; k < g.size(); k += 7) {
    ParamStore plus = globals, minus = globals;
    plus.get("policy.actor.w")[k] += eps;
    minus.get("policy.actor.w")[k] -= eps;
    const TaskRun rp = run_episode(cfg, a, cache, plus, scene, spec, RunMode::train);
    const TaskRun rm = run_episode(cfg, a, cache, minus, scene, spec, RunMode::train);
    ASSERT_EQ(rp.steps.size(), base.steps.size());
    ASSERT_EQ(rm.steps.size(), base.steps.size());
    const double fd = (rp.l_a3c - rm.l_a3c) / (2 * eps);
    worst = std::max(worst, std::abs(fd - g[k]) / std::max(1.0, std::abs(g[k])));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(RunEpisode, GradientsCoverBetaAndPsiOnly) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  const ParamStore globals = init_agent_params(cfg, *a.split);
  FrameCache cache;
  const TaskRun run =
      run_episode(cfg, a, cache, globals, a.test_scenes.front(), test_episode(TargetPool::unknown), RunMode::train);
  EXPECT_TRUE(run.grads.contains(kMoglW));
  for (const auto& [name, g] : run.grads) EXPECT_NE(globals.group_of(name), ParamGroup::alpha) << name;
}

TEST(OuterUpdate, EmptyBatchThrows) {
  EXPECT_THROW(outer_gradients({}), std::invalid_argument);
}

TEST(OuterUpdate, ZeroGradientsLeaveGlobals) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  for (const char* kind : {"sgd", "adam"}) {
    ParamStore globals = init_agent_params(cfg, *a.split);
    const ParamStore before = globals;
    TaskRun run;
    for (const auto& p : globals.params())
      if (p.group != ParamGroup::alpha) run.grads.emplace(p.name, Matrix(p.value.rows(), p.value.cols()));
    OuterOptimizer opt(kind, 0.1);
    outer_update(globals, {run}, opt);
    EXPECT_TRUE(globals == before) << kind;
  }
}

TEST(OuterUpdate, BatchOfOneIsPlainStep) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  ParamStore globals = init_agent_params(cfg, *a.split);
  FrameCache cache;
  const TaskRun run =
      run_episode(cfg, a, cache, globals, a.test_scenes.front(), test_episode(TargetPool::known), RunMode::train);
  ParamStore expect = globals;
  for (const auto& [name, g] : run.grads) {
    Matrix& w = expect.get(name);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= 0.01 * g[k];
  }
  OuterOptimizer opt("sgd", 0.01);
  outer_update(globals, {run}, opt);
  EXPECT_TRUE(globals == expect);
}

TEST(OuterUpdate, UnseenTargetTasksNeverTouchPsi) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  ParamStore globals = init_agent_params(cfg, *a.split);
  FrameCache cache;
  const TaskRun run =
      run_episode(cfg, a, cache, globals, a.test_scenes.front(), test_episode(TargetPool::unseen), RunMode::train);
  ASSERT_EQ(run.target_kind, SplitKind::unseen);
  const GradMap g = outer_gradients({run});
  ASSERT_EQ(g.size(), 1u);
  EXPECT_TRUE(g.contains(kMoglW));

  const auto psi = globals.fingerprint(ParamGroup::psi);
  const auto alpha = globals.fingerprint(ParamGroup::alpha);
  const auto beta = globals.fingerprint(ParamGroup::beta);
  OuterOptimizer opt("adam", 1e-3);
  outer_update(globals, {run}, opt);
  EXPECT_EQ(globals.fingerprint(ParamGroup::psi), psi);
  EXPECT_EQ(globals.fingerprint(ParamGroup::alpha), alpha);
  EXPECT_NE(globals.fingerprint(ParamGroup::beta), beta);
}

TEST(OuterUpdate, RejectsUnknownOptimizer) {
  EXPECT_THROW(OuterOptimizer("rmsprop", 1e-3), std::invalid_argument);
}

TEST(MetaTrainer, ScheduleHoldsAcrossTraining) {
  const auto& a = small_assets();
  auto cfg = small_config();
  const auto uoi = a.uoi.params().fingerprint();
  MetaTrainer trainer(cfg, a);
  const auto alpha = trainer.globals().fingerprint(ParamGroup::alpha);
  int episodes = 0;
  trainer.train(12, [&](const TaskRun& run, const ParamStore& globals) {
    ++episodes;
    EXPECT_NE(run.target_kind, SplitKind::unseen);
    EXPECT_EQ(globals.fingerprint(ParamGroup::alpha), alpha);
    for (const auto& s : run.steps)
      if (s.l_mcfm) EXPECT_TRUE(s.cls && !run.spec.target.labeled);
  });
  EXPECT_EQ(episodes, 12);
  EXPECT_EQ(trainer.episodes_done(), 12);
  EXPECT_EQ(a.uoi.params().fingerprint(), uoi);
}

TEST(MetaTrainer, NoMetaPersistsInnerUpdates) {
  const auto& a = small_assets();
  auto cfg = small_config();
  cfg.flags = preset("no_mogl_meta");
  MetaTrainer trainer(cfg, a);
  const auto beta = trainer.globals().fingerprint(ParamGroup::beta);
  trainer.train_batch();
  EXPECT_NE(trainer.globals().fingerprint(ParamGroup::beta), beta);
}

TEST(MetaTrainer, KnownOnlyPoolWithoutUot) {
  const auto& a = small_assets();
  auto cfg = small_config();
  cfg.flags = preset("baseline");
  MetaTrainer trainer(cfg, a);
  trainer.train(8, [](const TaskRun& run, const ParamStore&) { EXPECT_EQ(run.target_kind, SplitKind::known); });
}

TEST(MetaTrainer, SameSeedSameParameters) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  MetaTrainer t1(cfg, a), t2(cfg, a);
  t1.train(8);
  t2.train(8);
  EXPECT_TRUE(t1.globals() == t2.globals());
}

TEST(MetaTrainer, ResumeFromCheckpointMatchesUninterrupted) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  MetaTrainer straight(cfg, a);
  straight.train(8);

  MetaTrainer first(cfg, a);
  first.train(4);
  const std::string text = checkpoint_to_text(first.checkpoint());
  MetaTrainer resumed(checkpoint_from_text(text), a);
  resumed.train(4);
  EXPECT_TRUE(resumed.globals() == straight.globals());
  EXPECT_EQ(sha256_hex(checkpoint_to_text(resumed.checkpoint())), sha256_hex(checkpoint_to_text(straight.checkpoint())));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto& a = small_assets();
  MetaTrainer trainer(small_config(), a);
  trainer.train(4);
  const std::string text = checkpoint_to_text(trainer.checkpoint());
  const Checkpoint back = checkpoint_from_text(text);
  EXPECT_TRUE(back.agent == trainer.globals());
  EXPECT_TRUE(back.uoi == a.uoi.params());
  EXPECT_EQ(checkpoint_to_text(back), text);
}

TEST(Checkpoint, RejectsVersionAndShapeMismatch) {
  const auto& a = small_assets();
  MetaTrainer trainer(small_config(), a);
  Checkpoint c = trainer.checkpoint();
  c.version = 2;
  EXPECT_THROW(checkpoint_from_text(checkpoint_to_text(c)), std::invalid_argument);
  c = trainer.checkpoint();
  c.config.hidden += 1;
  EXPECT_THROW(checkpoint_from_text(checkpoint_to_text(c)), std::invalid_argument);
}

TEST(Sha256, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, RoundTrip) {
  ExperimentConfig c = small_config();
  c.meta.outer_optimizer = "sgd";
  c.flags = parse_flags("uot_tfg_uoi_mcfm");
  const std::string text = config_to_text(c);
  EXPECT_EQ(config_to_text(config_from_text(text)), text);
}

TEST(Config, PartialDocumentOverridesDefaults) {
  const ExperimentConfig c = config_from_text(R"({"seed": 7, "meta": {"batch": 2}})");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.meta.batch, 2u);
  EXPECT_EQ(c.meta.mu, ExperimentConfig{}.meta.mu);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_text(R"({"sed": 7})"), std::invalid_argument);
  EXPECT_THROW(config_from_text(R"({"meta": {"mu": 0}})"), std::invalid_argument);
  EXPECT_THROW(config_from_text(R"({"meta": {"outer_optimizer": "rmsprop"}})"), std::invalid_argument);
}

TEST(Ablation, PresetsAreValid) {
  for (const auto& name : preset_names()) EXPECT_NO_THROW(validate(preset(name))) << name;
  EXPECT_THROW(preset("nope"), std::invalid_argument);
  EXPECT_TRUE(preset("full") == AblationFlags{});
  EXPECT_TRUE(preset("gt_cls").use_gt_cls);
}

TEST(Ablation, DependencyOrderEnforced) {
  EXPECT_THROW(parse_flags("full,use_mcfm=0"), std::invalid_argument);
  EXPECT_THROW(parse_flags("full,use_tfg_uoi=0"), std::invalid_argument);
  EXPECT_THROW(parse_flags("baseline,use_gt_cls=1"), std::invalid_argument);
  EXPECT_NO_THROW(parse_flags("full,use_mogl=0"));
}

TEST(Ablation, ParseAndCanonicalForm) {
  const AblationFlags f = parse_flags("full,cca_loss_on=0");
  EXPECT_FALSE(f.cca_loss_on);
  EXPECT_TRUE(parse_flags(flags_to_string(f)) == f);
  EXPECT_THROW(parse_flags("full,bogus=1"), std::invalid_argument);
  EXPECT_THROW(parse_flags("full,use_mogl=2"), std::invalid_argument);
}

}  // namespace
}  // namespace metanav
