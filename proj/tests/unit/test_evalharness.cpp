#include <gtest/gtest.h>

#include <sstream>

#include "golden_trace.hpp"
#include "json.hpp"
#include "metanav/evalharness.hpp"
#include "small_world.hpp"

namespace metanav {
namespace {

using testing::small_assets;
using testing::small_config;

EpisodeResult ep(bool success, int steps, std::optional<int> shortest) {
  EpisodeResult r;
  r.success = success;
  r.steps = steps;
  r.shortest = shortest;
  return r;
}

TEST(MetricSr, Examples) {
  const std::vector<EpisodeResult> half = {ep(true, 3, 3), ep(false, 3, 3), ep(true, 3, 3), ep(false, 3, 3)};
  EXPECT_EQ(metric_sr(half), 0.5);
  const std::vector<EpisodeResult> none = {ep(false, 3, 3), ep(false, 9, 2)};
  EXPECT_EQ(metric_sr(none), 0.0);
  EXPECT_THROW(metric_sr({}), std::invalid_argument);
}

TEST(MetricSpl, Examples) {
  const std::vector<EpisodeResult> exact = {ep(true, 4, 4)};
  EXPECT_EQ(metric_spl(exact), 1.0);
  const std::vector<EpisodeResult> twice = {ep(true, 8, 4)};
  EXPECT_EQ(metric_spl(twice), 0.5);
  const std::vector<EpisodeResult> failed = {ep(false, 4, 4)};
  EXPECT_EQ(metric_spl(failed), 0.0);
  const std::vector<EpisodeResult> missing = {ep(true, 4, std::nullopt)};
  EXPECT_THROW(metric_spl(missing), std::invalid_argument);
  EXPECT_THROW(metric_spl({}), std::invalid_argument);
}

TEST(MetricSpl, GoldenTrace) {
  const auto trace = testing::golden_trace();
  EXPECT_NEAR(metric_sr(trace), testing::kGoldenSr, 1e-12);
  EXPECT_NEAR(metric_spl(trace), testing::kGoldenSpl, 1e-12);
}

TEST(MetricSpl, NeverExceedsSr) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EpisodeResult> rs;
    const int n = 1 + static_cast<int>(rng.index(20));
    for (int i = 0; i < n; ++i) {
      rs.push_back(ep(rng.bernoulli(0.5), 1 + static_cast<int>(rng.index(40)), 1 + static_cast<int>(rng.index(40))));
    }
    EXPECT_LE(metric_spl(rs), metric_sr(rs) + 1e-15);
  }
}

TEST(DistanceStratified, ShortEpisodesLeaveLongStratumAbsent) {
  const std::vector<EpisodeResult> rs = {ep(true, 3, 3), ep(false, 5, 3), ep(true, 6, 3)};
  const auto strata = distance_stratified(rs);
  ASSERT_EQ(strata.size(), 2u);
  EXPECT_EQ(strata[0].count, 3u);
  ASSERT_TRUE(strata[0].sr.has_value());
  EXPECT_DOUBLE_EQ(*strata[0].sr, 2.0 / 3.0);
  EXPECT_EQ(strata[1].count, 0u);
  EXPECT_FALSE(strata[1].sr.has_value());
  EXPECT_FALSE(strata[1].spl.has_value());
}

TEST(DistanceStratified, MatchesManualFilteringAndCountsSum) {
  const auto trace = testing::golden_trace();
  const auto strata = distance_stratified(trace, {5, 1});
  ASSERT_EQ(strata.size(), 2u);
  EXPECT_EQ(strata[0].min_shortest, 1);
  EXPECT_EQ(strata[0].exclusive_count + strata[1].exclusive_count, trace.size());
  std::vector<EpisodeResult> far;
  for (const auto& r : trace)
    if (*r.shortest >= 5) far.push_back(r);
  EXPECT_EQ(strata[1].count, far.size());
  EXPECT_DOUBLE_EQ(*strata[1].sr, metric_sr(far));
  EXPECT_DOUBLE_EQ(*strata[1].spl, metric_spl(far));
}

TEST(MeanStd, SampleDeviation) {
  const std::vector<double> v = {1.0, 2.0, 3.0};
  const Stat s = mean_std(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.std, 1.0);
  const std::vector<double> one = {0.25};
  EXPECT_EQ(mean_std(one).std, 0.0);
}

TEST(RandomPolicy, UniformActionFrequencies) {
  Rng rng(21);
  std::array<int, kNumActions> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(random_action(rng))];
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 6.0, 0.01);
}

TEST(RandomPolicy, NearZeroUnseenSuccess) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  const auto rs = random_policy(cfg, a, SplitKind::unseen, 200);
  ASSERT_EQ(rs.size(), 200u);
  for (const auto& r : rs) EXPECT_EQ(r.split, SplitKind::unseen);
  EXPECT_LE(metric_sr(rs), 0.05);
}

TEST(EvalEpisodes, FixedPerSeedAndSplit) {
  const auto& a = small_assets();
  auto cfg = small_config();
  const auto first = eval_episodes(cfg, a, SplitKind::unknown, 30);
  cfg.flags = preset("baseline");
  const auto again = eval_episodes(cfg, a, SplitKind::unknown, 30);
  ASSERT_EQ(first.size(), 30u);
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].seed, again[i].seed);
    EXPECT_EQ(first[i].start, again[i].start);
    EXPECT_GE(first[i].shortest_path, cfg.meta.min_shortest_path);
    EXPECT_EQ(a.split->kind_of(first[i].target.class_id), SplitKind::unknown);
  }
}

TEST(EvalCheckpoint, SameInputsSameTables) {
  const auto& a = small_assets();
  MetaTrainer trainer(small_config(), a);
  trainer.train(4);
  const Checkpoint ck = trainer.checkpoint();
  EvalOptions opt;
  opt.episodes_per_split = 10;
  auto table = [&] {
    FrameCache cache;
    const std::vector<MethodRow> rows = {aggregate("full", ck.config.flags, {eval_checkpoint(ck, ck.config.flags, a, cache, opt)})};
    return splits_table_csv(rows) + distance_table_csv(rows);
  };
  EXPECT_EQ(sha256_hex(table()), sha256_hex(table()));
}

TEST(EvalCheckpoint, RejectsIncompatibleFlags) {
  const auto& a = small_assets();
  MetaTrainer trainer(small_config(), a);
  const Checkpoint ck = trainer.checkpoint();
  FrameCache cache;
  EXPECT_THROW(eval_checkpoint(ck, preset("uot_tfg_uoi"), a, cache), std::invalid_argument);
  EXPECT_THROW(eval_checkpoint(ck, AblationFlags{.use_mcfm = false, .use_mogl = true}, a, cache), std::invalid_argument);
}

TEST(EvalCheckpoint, InferenceKeepsCheckpointUnchanged) {
  const auto& a = small_assets();
  MetaTrainer trainer(small_config(), a);
  const Checkpoint ck = trainer.checkpoint();
  const auto before = ck.agent.fingerprint();
  FrameCache cache;
  EvalOptions opt;
  opt.episodes_per_split = 5;
  eval_checkpoint(ck, preset("gt_cls"), a, cache, opt);
  EXPECT_EQ(ck.agent.fingerprint(), before);
}

TEST(Aggregate, PerSeedStatistics) {
  SplitResults s1, s2;
  s1[0] = {ep(true, 3, 3), ep(false, 3, 3)};
  s1[1] = {ep(true, 6, 3), ep(true, 3, 3)};
  s1[2] = {ep(false, 3, 3), ep(false, 3, 3)};
  s2 = s1;
  s2[2] = {ep(true, 3, 3), ep(false, 3, 3)};
  const MethodRow row = aggregate("m", AblationFlags{}, {s1, s2});
  EXPECT_DOUBLE_EQ(row.sr[0].mean, 0.5);
  EXPECT_DOUBLE_EQ(row.sr[0].std, 0.0);
  EXPECT_DOUBLE_EQ(row.sr[2].mean, 0.25);
  EXPECT_DOUBLE_EQ(row.spl[1].mean, 0.75);
  EXPECT_DOUBLE_EQ(row.unlabeled_sr_per_seed[0], 0.5);
  EXPECT_DOUBLE_EQ(row.unlabeled_sr_per_seed[1], 0.75);
  EXPECT_EQ(row.strata[0][0].count, 4u);
}

TEST(Tables, Shapes) {
  SplitResults s;
  for (auto& v : s) v = {ep(true, 3, 3)};
  const std::vector<MethodRow> rows = {aggregate("full", AblationFlags{}, {s}),
                                       aggregate("baseline", preset("baseline"), {s})};
  const std::string splits = splits_table_csv(rows);
  EXPECT_EQ(splits.substr(0, splits.find('\n')),
            "method,known_sr,known_sr_std,known_spl,known_spl_std,unknown_sr,unknown_sr_std,unknown_spl,"
            "unknown_spl_std,unseen_sr,unseen_sr_std,unseen_spl,unseen_spl_std,seeds");
  EXPECT_NE(splits.find("full,1.000000,0.000000,1.000000,0.000000"), std::string::npos);
  const std::string comp = component_table_csv(rows);
  EXPECT_NE(comp.find("baseline,0,0,0,0,"), std::string::npos);
  EXPECT_NE(comp.find("full,1,1,1,1,"), std::string::npos);
  EXPECT_NE(loss_meta_table_csv(rows).find("full,1,1,1,1,"), std::string::npos);
  const std::string dist = distance_table_csv(rows);
  EXPECT_NE(dist.find("full,unseen,5,0,,\n"), std::string::npos);
}

TEST(Trace, OneRecordPerStep) {
  const auto& a = small_assets();
  const auto cfg = small_config();
  const ParamStore globals = init_agent_params(cfg, *a.split);
  FrameCache cache;
  const auto specs = eval_episodes(cfg, a, SplitKind::unknown, 1);
  const TaskRun run = run_episode(cfg, a, cache, globals, a.scene(specs[0].scene_id), specs[0], RunMode::inference);
  std::ostringstream out;
  write_trace(out, "full", run);
  std::istringstream in(out.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<int>(), n);
    for (const char* key : {"state", "action", "cls", "reward", "l_mcfm", "l_cca"}) EXPECT_TRUE(j.contains(key));
    ++n;
  }
  EXPECT_EQ(n, run.steps_taken);
}

TEST(Results, JsonlRoundTrip) {
  SplitResults s;
  s[0] = {ep(true, 4, 3)};
  s[1] = {ep(false, 30, 5), ep(true, 7, 7)};
  s[2] = {ep(false, 2, 2)};
  for (std::size_t i = 0; i < 3; ++i)
    for (auto& e : s[i]) e.split = kSplits[i];
  const LabeledResults a{"full", AblationFlags{}, 1, s};
  const LabeledResults b{"gt", preset("gt_cls"), 2, s};
  const auto back = results_from_jsonl(results_to_jsonl(a) + results_to_jsonl(b));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].label, "gt");
  EXPECT_TRUE(back[1].flags == preset("gt_cls"));
  EXPECT_EQ(results_to_jsonl(back[0]), results_to_jsonl(a));
  const auto rows = aggregate_all(back);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].sr[1].mean, 0.5);

  SplitResults missing;
  missing[2] = {ep(false, 2, std::nullopt)};
  missing[2][0].split = SplitKind::unseen;
  const auto m = results_from_jsonl(results_to_jsonl({"x", AblationFlags{}, 3, missing}));
  ASSERT_EQ(m.size(), 1u);
  EXPECT_FALSE(m[0].results[2][0].shortest.has_value());
}

TEST(Ablation, TinyMatrixIsDeterministic) {
  const std::vector<std::string> variants = {"full", "no_cca_loss", "baseline"};
  const auto run = [&] { return run_ablation(small_config(), {11}, variants, 4, 4); };
  const AblationMatrix first = run();
  const AblationMatrix second = run();
  ASSERT_EQ(first.rows.size(), 3u);
  EXPECT_EQ(first.report_sha256, second.report_sha256);
  EXPECT_EQ(first.components_csv, second.components_csv);
  EXPECT_NE(first.components_csv.find("baseline,0,0,0,0,"), std::string::npos);
  EXPECT_NE(first.loss_meta_csv.find("no_cca_loss,1,0,1,1,"), std::string::npos);
}

}  // namespace
}  // namespace metanav
