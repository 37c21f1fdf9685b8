#include "metanav/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace metanav {

using json = nlohmann::ordered_json;

namespace {

std::size_t split_index(SplitKind k) { return static_cast<std::size_t>(k); }

TargetPool pool_for(SplitKind k) {
  switch (k) {
    case SplitKind::known: return TargetPool::known;
    case SplitKind::unknown: return TargetPool::unknown;
    case SplitKind::unseen: return TargetPool::unseen;
  }
  throw std::invalid_argument("bad split");
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string mark(bool on) { return on ? "1" : "0"; }

void append_stats(std::string& line, const MethodRow& row, std::initializer_list<SplitKind> splits) {
  for (SplitKind k : splits) {
    const std::size_t i = split_index(k);
    line += "," + fixed(row.sr[i].mean) + "," + fixed(row.sr[i].std) + "," + fixed(row.spl[i].mean) + "," +
            fixed(row.spl[i].std);
  }
}

std::string stats_header(std::initializer_list<SplitKind> splits) {
  std::string h;
  for (SplitKind k : splits) {
    const std::string s(to_string(k));
    h += "," + s + "_sr," + s + "_sr_std," + s + "_spl," + s + "_spl_std";
  }
  return h;
}

}  // namespace

double metric_sr(std::span<const EpisodeResult> results) {
  if (results.empty()) throw std::invalid_argument("success rate of an empty result set");
  double wins = 0.0;
  for (const auto& r : results) wins += r.success ? 1.0 : 0.0;
  return wins / static_cast<double>(results.size());
}

double metric_spl(std::span<const EpisodeResult> results) {
  if (results.empty()) throw std::invalid_argument("SPL of an empty result set");
  double acc = 0.0;
  for (const auto& r : results) {
    if (!r.shortest) throw std::invalid_argument("SPL needs the shortest path length of every episode");
    if (r.success) acc += static_cast<double>(*r.shortest) / std::max(r.steps, *r.shortest);
  }
  return acc / static_cast<double>(results.size());
}

std::vector<Stratum> distance_stratified(std::span<const EpisodeResult> results, std::vector<int> thresholds) {
  std::sort(thresholds.begin(), thresholds.end());
  std::vector<Stratum> out;
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    Stratum s;
    s.min_shortest = thresholds[t];
    const int upper = t + 1 < thresholds.size() ? thresholds[t + 1] : INT32_MAX;
    std::vector<EpisodeResult> in;
    for (const auto& r : results) {
      if (!r.shortest) throw std::invalid_argument("stratification needs the shortest path length");
      if (*r.shortest < s.min_shortest) continue;
      in.push_back(r);
      if (*r.shortest < upper) ++s.exclusive_count;
    }
    s.count = in.size();
    if (!in.empty()) {
      s.sr = metric_sr(in);
      s.spl = metric_spl(in);
    }
    out.push_back(s);
  }
  return out;
}

std::vector<EpisodeSpec> eval_episodes(const ExperimentConfig& config, const Assets& assets, SplitKind split,
                                       int count) {
  if (assets.test_scenes.empty()) throw std::invalid_argument("no test scenes");
  std::vector<EpisodeSpec> specs;
  for (int i = 0; i < count; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt > 1000) throw std::runtime_error("cannot draw an evaluation episode");
      const Scene& scene = assets.test_scenes[(i + attempt) % assets.test_scenes.size()];
      const std::uint64_t seed =
          derive_seed(config.seed, {0xe7a1, split_index(split), static_cast<std::uint64_t>(i), attempt});
      try {
        specs.push_back(generate_episode(seed, scene, pool_for(split), config.world, config.meta.min_shortest_path));
        break;
      } catch (const std::runtime_error&) {
      }
    }
  }
  return specs;
}

int random_action(Rng& rng) { return static_cast<int>(rng.index(kNumActions)); }

EpisodeResult random_policy_episode(const Scene& scene, const EpisodeSpec& spec, const WorldConfig& world) {
  Rng rng(derive_seed(spec.seed, {0x7a4d}));
  EpisodeResult r;
  r.shortest = spec.shortest_path;
  r.split = scene.split().kind_of(spec.target.class_id);
  r.seed = spec.seed;
  r.scene_id = spec.scene_id;
  AgentState state = spec.start;
  for (int t = 0; t < spec.max_steps; ++t) {
    const int action = random_action(rng);
    r.steps = t + 1;
    if (action == static_cast<int>(Action::done)) {
      r.success = success(scene, state, spec.target, true, t + 1, world, spec.max_steps);
      break;
    }
    state = step(scene, state, action).state;
  }
  return r;
}

std::vector<EpisodeResult> random_policy(const ExperimentConfig& config, const Assets& assets, SplitKind split,
                                         int episodes) {
  std::vector<EpisodeResult> out;
  for (const auto& spec : eval_episodes(config, assets, split, episodes)) {
    out.push_back(random_policy_episode(assets.scene(spec.scene_id), spec, config.world));
  }
  return out;
}

SplitResults evaluate(const ExperimentConfig& config, const Assets& assets, const ParamStore& globals,
                      FrameCache& cache, const EvalOptions& options) {
  SplitResults out;
  for (SplitKind k : kSplits) {
    for (const auto& spec : eval_episodes(config, assets, k, options.episodes_per_split)) {
      const Scene& scene = assets.scene(spec.scene_id);
      if (options.agent == Agent::random) {
        out[split_index(k)].push_back(random_policy_episode(scene, spec, config.world));
        continue;
      }
      const TaskRun run = run_episode(config, assets, cache, globals, scene, spec, RunMode::inference);
      if (options.trace) {
        write_trace(*options.trace, options.label.empty() ? flags_to_string(config.flags) : options.label, run);
      }
      EpisodeResult r;
      r.success = run.success;
      r.steps = run.steps_taken;
      r.shortest = spec.shortest_path;
      r.split = k;
      r.seed = spec.seed;
      r.scene_id = spec.scene_id;
      out[split_index(k)].push_back(r);
    }
  }
  return out;
}

SplitResults eval_checkpoint(const Checkpoint& checkpoint, const AblationFlags& flags, const Assets& assets,
                             FrameCache& cache, const EvalOptions& options) {
  ExperimentConfig config = checkpoint.config;
  config.flags = flags;
  validate(config);
  if (!(checkpoint.uoi == assets.uoi.params()) || !(checkpoint.tfg == assets.tfg.params())) {
    throw std::invalid_argument("checkpoint was trained with different pretrained weights");
  }
  const ParamStore expect = init_agent_params(config, *assets.split);
  if (expect.size() != checkpoint.agent.size()) throw std::invalid_argument("flags do not match the checkpoint");
  for (const auto& p : expect.params()) {
    if (!checkpoint.agent.contains(p.name) || !checkpoint.agent.get(p.name).same_shape(p.value)) {
      throw std::invalid_argument("flags do not match the checkpoint at '" + p.name + "'");
    }
  }
  return evaluate(config, assets, checkpoint.agent, cache, options);
}

Stat mean_std(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("statistics of an empty set");
  Stat s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

MethodRow aggregate(std::string label, const AblationFlags& flags, const std::vector<SplitResults>& per_seed) {
  if (per_seed.empty()) throw std::invalid_argument("no seeds to aggregate");
  MethodRow row;
  row.label = std::move(label);
  row.flags = flags;
  std::array<std::vector<EpisodeResult>, 3> pooled;
  for (const auto& seed : per_seed) {
    for (std::size_t i = 0; i < 3; ++i) {
      row.sr_per_seed[i].push_back(metric_sr(seed[i]));
      row.spl_per_seed[i].push_back(metric_spl(seed[i]));
      pooled[i].insert(pooled[i].end(), seed[i].begin(), seed[i].end());
    }
    std::vector<EpisodeResult> unlabeled = seed[1];
    unlabeled.insert(unlabeled.end(), seed[2].begin(), seed[2].end());
    row.unlabeled_sr_per_seed.push_back(metric_sr(unlabeled));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    row.sr[i] = mean_std(row.sr_per_seed[i]);
    row.spl[i] = mean_std(row.spl_per_seed[i]);
    row.strata[i] = distance_stratified(pooled[i]);
  }
  row.unlabeled_sr = mean_std(row.unlabeled_sr_per_seed);
  return row;
}

std::string splits_table_csv(std::span<const MethodRow> rows) {
  const auto splits = {SplitKind::known, SplitKind::unknown, SplitKind::unseen};
  std::string out = "method" + stats_header(splits) + ",seeds\n";
  for (const auto& row : rows) {
    std::string line = row.label;
    append_stats(line, row, splits);
    out += line + "," + std::to_string(row.sr_per_seed[0].size()) + "\n";
  }
  return out;
}

std::string component_table_csv(std::span<const MethodRow> rows) {
  const auto splits = {SplitKind::unknown, SplitKind::unseen};
  std::string out = "method,uot,tfg_uoi,mcfm,mogl" + stats_header(splits) + "\n";
  for (const auto& row : rows) {
    const AblationFlags& f = row.flags;
    std::string line = row.label + "," + mark(f.use_uot) + "," + mark(f.use_tfg_uoi) + "," + mark(f.use_mcfm) + "," +
                       mark(f.use_mogl);
    append_stats(line, row, splits);
    out += line + "\n";
  }
  return out;
}

std::string loss_meta_table_csv(std::span<const MethodRow> rows) {
  const auto splits = {SplitKind::unknown, SplitKind::unseen};
  std::string out = "method,mcfm_loss,cca_loss,mcfm_meta,mogl_meta" + stats_header(splits) + "\n";
  for (const auto& row : rows) {
    const AblationFlags& f = row.flags;
    std::string line = row.label + "," + mark(f.mcfm_loss_on) + "," + mark(f.cca_loss_on) + "," +
                       mark(f.mcfm_meta_on) + "," + mark(f.mogl_meta_on);
    append_stats(line, row, splits);
    out += line + "\n";
  }
  return out;
}

std::string distance_table_csv(std::span<const MethodRow> rows) {
  std::string out = "method,split,min_shortest,count,sr,spl\n";
  for (const auto& row : rows) {
    for (SplitKind k : kSplits) {
      for (const auto& s : row.strata[split_index(k)]) {
        out += row.label + "," + std::string(to_string(k)) + "," + std::to_string(s.min_shortest) + "," +
               std::to_string(s.count) + "," + (s.sr ? fixed(*s.sr) : "") + "," + (s.spl ? fixed(*s.spl) : "") +
               "\n";
      }
    }
  }
  return out;
}

void write_trace(std::ostream& out, const std::string& label, const TaskRun& run) {
  for (const auto& s : run.steps) {
    json j;
    j["method"] = label;
    j["scene"] = run.spec.scene_id;
    j["episode"] = run.spec.seed;
    j["target"] = run.spec.target.class_id;
    j["step"] = s.step;
    j["state"] = {{"x", s.state.x},
                  {"y", s.state.y},
                  {"heading", s.state.heading_degrees()},
                  {"pitch", s.state.pitch_degrees()}};
    j["action"] = std::string(to_string(action_from_id(s.action)));
    j["cls"] = s.cls;
    j["reminder"] = s.reminder;
    j["reward"] = s.reward;
    j["l_mcfm"] = s.l_mcfm ? json(*s.l_mcfm) : json(nullptr);
    j["l_cca"] = s.l_cca ? json(*s.l_cca) : json(nullptr);
    out << j.dump() << '\n';
  }
}

std::string results_to_jsonl(const LabeledResults& r) {
  std::string out;
  const std::string flags = flags_to_string(r.flags);
  for (SplitKind k : kSplits) {
    for (const auto& e : r.results[split_index(k)]) {
      json j;
      j["method"] = r.label;
      j["flags"] = flags;
      j["seed"] = r.seed;
      j["split"] = std::string(to_string(k));
      j["scene"] = e.scene_id;
      j["episode"] = e.seed;
      j["success"] = e.success;
      j["steps"] = e.steps;
      j["shortest"] = e.shortest ? json(*e.shortest) : json(nullptr);
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::vector<LabeledResults> results_from_jsonl(std::string_view text) {
  std::vector<LabeledResults> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string label = j.at("method").get<std::string>();
    const auto seed = j.at("seed").get<std::uint64_t>();
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& r) { return r.label == label && r.seed == seed; });
    if (it == out.end()) {
      out.push_back({label, parse_flags(j.at("flags").get<std::string>()), seed, {}});
      it = out.end() - 1;
    }
    EpisodeResult e;
    const std::string split = j.at("split").get<std::string>();
    std::size_t idx = 3;
    for (SplitKind k : kSplits)
      if (split == to_string(k)) idx = split_index(k);
    if (idx == 3) throw std::invalid_argument("unknown split '" + split + "'");
    e.split = kSplits[idx];
    e.scene_id = j.at("scene").get<std::uint64_t>();
    e.seed = j.at("episode").get<std::uint64_t>();
    e.success = j.at("success").get<bool>();
    e.steps = j.at("steps").get<int>();
    if (!j.at("shortest").is_null()) e.shortest = j.at("shortest").get<int>();
    it->results[idx].push_back(e);
  }
  return out;
}

std::vector<MethodRow> aggregate_all(const std::vector<LabeledResults>& results) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<AblationFlags, std::vector<SplitResults>>> by_label;
  for (const auto& r : results) {
    auto [it, fresh] = by_label.try_emplace(r.label, r.flags, std::vector<SplitResults>{});
    if (fresh) order.push_back(r.label);
    it->second.second.push_back(r.results);
  }
  std::vector<MethodRow> rows;
  for (const auto& label : order) {
    const auto& [flags, seeds] = by_label.at(label);
    rows.push_back(aggregate(label, flags, seeds));
  }
  return rows;
}

VariantRun train_and_evaluate(ExperimentConfig config, const Assets& assets, const std::string& label,
                              const AblationFlags& flags, int train_episodes, int episodes_per_split,
                              FrameCache* shared_cache) {
  config.flags = flags;
  MetaTrainer trainer(config, assets, shared_cache);
  trainer.train(train_episodes);
  VariantRun run;
  run.checkpoint = trainer.checkpoint();
  run.checkpoint_sha256 = sha256_hex(checkpoint_to_text(run.checkpoint));
  EvalOptions opt;
  opt.episodes_per_split = episodes_per_split;
  run.eval = {label, flags, config.seed, evaluate(config, assets, trainer.globals(), trainer.cache(), opt)};
  return run;
}

AblationMatrix run_ablation(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                            const std::vector<std::string>& variants, int train_episodes, int episodes_per_split,
                            const std::function<void(const VariantRun&)>& progress) {
  AblationMatrix m;
  std::vector<LabeledResults> all;
  for (std::uint64_t seed : seeds) {
    ExperimentConfig config = base;
    config.seed = seed;
    const Assets assets(config);
    FrameCache cache;
    for (const auto& name : variants) {
      VariantRun run = train_and_evaluate(config, assets, name, preset(name), train_episodes, episodes_per_split, &cache);
      if (progress) progress(run);
      all.push_back(run.eval);
      m.runs.push_back(std::move(run));
    }
  }
  m.rows = aggregate_all(all);
  auto pick = [&](const std::vector<std::string>& names) {
    std::vector<MethodRow> rows;
    for (const auto& n : names)
      for (const auto& r : m.rows)
        if (r.label == n) rows.push_back(r);
    return rows;
  };
  m.components_csv = component_table_csv(pick(component_rows()));
  m.loss_meta_csv = loss_meta_table_csv(pick(loss_meta_rows()));
  std::string hashed = m.components_csv + m.loss_meta_csv;
  for (const auto& r : m.runs) hashed += r.checkpoint_sha256 + "\n";
  m.report_sha256 = sha256_hex(hashed);
  return m;
}

}  // namespace metanav
