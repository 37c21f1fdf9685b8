// metanav: scene generation, pretraining, meta-training, evaluation and reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metanav/evalharness.hpp"

namespace fs = std::filesystem;
using namespace metanav;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string flags;
  std::string out = "run";
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  std::cout << "wrote " << p.string() << "\n";
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : config_from_text(read_file(c.config_path));
  if (c.seed) cfg.seed = *c.seed;
  if (!c.flags.empty()) cfg.flags = parse_flags(c.flags);
  validate(cfg);
  return cfg;
}

std::optional<ParamStore> load_params(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  return params_from_json(read_file(p));
}

PretrainedWeights saved_weights(const fs::path& out) {
  PretrainedWeights w;
  w.tfg = load_params(out / "tfg.json");
  w.uoi = load_params(out / "uoi.json");
  return w;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string uoi_csv(const UoiPretrainReport& r) {
  std::string s = "epoch,train_loss,heldout_isr\n";
  for (std::size_t e = 0; e < r.train_loss.size(); ++e)
    s += std::to_string(e + 1) + "," + fixed(r.train_loss[e]) + "," + fixed(r.heldout_isr[e]) + "\n";
  return s;
}

void cmd_gen_scenes(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  PretrainedWeights none;
  none.skip_tfg = true;
  Assets assets(cfg, none);
  const fs::path out = c.out;
  write_file(out / "split.json", split_to_text(*assets.split));
  std::string train, test;
  for (const auto& s : assets.train_scenes) train += scene_to_text(s) + "\n";
  for (const auto& s : assets.test_scenes) test += scene_to_text(s) + "\n";
  write_file(out / "scenes_train.jsonl", train);
  write_file(out / "scenes_test.jsonl", test);
  write_file(out / "config.json", config_to_text(cfg));
}

void cmd_pretrain_tfg(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  PretrainedWeights tfg_only;
  tfg_only.skip_uoi = true;
  Assets assets(cfg, tfg_only);
  const fs::path out = c.out;
  std::string log = "epoch,train_loss,validation_loss\n";
  for (std::size_t e = 0; e < assets.tfg_report->train_loss.size(); ++e) {
    log += std::to_string(e + 1) + "," + fixed(assets.tfg_report->train_loss[e]) + "," +
           fixed(assets.tfg_report->validation_loss[e]) + "\n";
  }
  write_file(out / "tfg_loss.csv", log);
  write_file(out / "tfg.json", params_to_json(assets.tfg.params()));
}

void cmd_pretrain_uoi(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  const fs::path out = c.out;
  PretrainedWeights w;
  w.tfg = load_params(out / "tfg.json");
  Assets assets(cfg, w);
  if (assets.tfg_report) write_file(out / "tfg.json", params_to_json(assets.tfg.params()));
  write_file(out / "uoi_isr.csv", uoi_csv(*assets.uoi_report));
  write_file(out / "uoi_frames_train.json", dataset_to_text(assets.uoi_train_data));
  write_file(out / "uoi_frames_heldout.json", dataset_to_text(assets.uoi_heldout_data));
  write_file(out / "uoi.json", params_to_json(assets.uoi.params()));
  std::cout << "best epoch " << assets.uoi_report->best_epoch + 1 << ", held-out ISR "
            << fixed(assets.uoi_report->heldout_isr[assets.uoi_report->best_epoch]) << "\n";
}

void cmd_train(const Common& c, int episodes, int log_every, bool resume) {
  const fs::path out = c.out;
  std::optional<Checkpoint> ck;
  if (resume) ck = checkpoint_from_text(read_file(out / "checkpoint.json"));
  const ExperimentConfig cfg = ck ? ck->config : load_config(c);
  const Assets assets = ck ? Assets(cfg, ck->uoi, ck->tfg) : Assets(cfg, saved_weights(out));
  if (!ck) {
    write_file(out / "tfg.json", params_to_json(assets.tfg.params()));
    write_file(out / "uoi.json", params_to_json(assets.uoi.params()));
  }
  MetaTrainer trainer = ck ? MetaTrainer(*ck, assets) : MetaTrainer(cfg, assets);
  if (episodes < 0) episodes = cfg.meta.episodes;

  std::string log = "episodes,success_rate,mean_steps,mean_l_a3c\n";
  int wins = 0, n = 0;
  double steps = 0.0, loss = 0.0;
  trainer.train(episodes, [&](const TaskRun& run, const ParamStore&) {
    wins += run.success;
    steps += run.steps_taken;
    loss += run.l_a3c;
    if (++n == log_every) {
      const int done = trainer.episodes_done();
      log += std::to_string(done) + "," + fixed(double(wins) / n) + "," + fixed(steps / n) + "," + fixed(loss / n) + "\n";
      std::cout << "episodes " << done << "  train SR " << fixed(double(wins) / n) << std::endl;
      wins = n = 0;
      steps = loss = 0.0;
    }
  });
  const std::string text = checkpoint_to_text(trainer.checkpoint());
  write_file(out / (resume ? "train_log_resumed.csv" : "train_log.csv"), log);
  write_file(out / "checkpoint.json", text);
  write_file(out / "checkpoint.sha256", sha256_hex(text) + "\n");
  write_file(out / "config.json", config_to_text(cfg));
}

void cmd_eval(const Common& c, const std::string& checkpoint_path, int episodes, const std::string& agent,
              std::string label) {
  const fs::path out = c.out;
  const Checkpoint ck = checkpoint_from_text(read_file(checkpoint_path.empty() ? out / "checkpoint.json"
                                                                                : fs::path(checkpoint_path)));
  const AblationFlags flags = c.flags.empty() ? ck.config.flags : parse_flags(c.flags);
  const Assets assets(ck.config, ck.uoi, ck.tfg);
  if (label.empty()) label = agent == "random" ? "random" : "learned";
  EvalOptions opt;
  opt.episodes_per_split = episodes;
  opt.agent = agent == "random" ? Agent::random : Agent::learned;
  opt.label = label;
  std::ostringstream trace;
  if (opt.agent == Agent::learned) opt.trace = &trace;
  FrameCache cache;
  const LabeledResults results{label, flags, ck.config.seed, eval_checkpoint(ck, flags, assets, cache, opt)};
  const std::vector<MethodRow> rows = {aggregate(label, flags, {results.results})};
  write_file(out / ("results_" + label + ".jsonl"), results_to_jsonl(results));
  if (opt.trace) write_file(out / ("trace_" + label + ".jsonl"), trace.str());
  write_file(out / ("metrics_" + label + ".csv"), splits_table_csv(rows));
  write_file(out / ("distance_" + label + ".csv"), distance_table_csv(rows));
  ExperimentConfig snapshot = ck.config;
  snapshot.flags = flags;
  write_file(out / ("config_" + label + ".json"), config_to_text(snapshot));
  std::cout << splits_table_csv(rows);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) seeds.push_back(std::stoull(item));
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  return seeds;
}

void cmd_ablate(const Common& c, const std::string& seeds, int episodes, int eval_episodes,
                std::vector<std::string> variants) {
  const ExperimentConfig cfg = load_config(c);
  if (variants.empty()) {
    for (const auto& n : component_rows()) variants.push_back(n);
    for (const auto& n : loss_meta_rows())
      if (n != "full") variants.push_back(n);
  }
  if (episodes < 0) episodes = cfg.meta.episodes;
  const AblationMatrix m = run_ablation(cfg, parse_seeds(seeds), variants, episodes, eval_episodes,
                                        [](const VariantRun& r) {
                                          std::cout << r.eval.label << " seed " << r.eval.seed << " done, "
                                                    << r.checkpoint_sha256.substr(0, 12) << std::endl;
                                        });
  const fs::path out = c.out;
  std::string results;
  for (const auto& r : m.runs) results += results_to_jsonl(r.eval);
  write_file(out / "ablation_results.jsonl", results);
  write_file(out / "table_components.csv", m.components_csv);
  write_file(out / "table_loss_meta.csv", m.loss_meta_csv);
  write_file(out / "ablation.sha256", m.report_sha256 + "\n");
  write_file(out / "config.json", config_to_text(cfg));
  std::cout << m.components_csv << m.loss_meta_csv;
}

void cmd_report(const Common& c, const std::vector<std::string>& inputs) {
  std::vector<LabeledResults> all;
  std::string hashed;
  for (const auto& p : inputs) {
    const std::string text = read_file(p);
    hashed += text;
    for (auto& r : results_from_jsonl(text)) all.push_back(std::move(r));
  }
  const auto rows = aggregate_all(all);
  const fs::path out = c.out;
  const std::string splits = splits_table_csv(rows), distance = distance_table_csv(rows);
  write_file(out / "table_splits.csv", splits);
  write_file(out / "table_distance.csv", distance);
  write_file(out / "report.sha256", sha256_hex(hashed) + "  inputs\n" + sha256_hex(splits + distance) + "  tables\n");
  std::cout << splits;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot object navigation on a toy grid world"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Experiment seed (overrides the config)");
    sub->add_option("--config", common.config_path, "JSON config; omitted fields keep their defaults");
    sub->add_option("--flags", common.flags, "Ablation spec, e.g. full,use_gt_cls=1");
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
  };

  auto* gen = app.add_subcommand("gen-scenes", "Write the class split and the generated scenes");
  auto* tfg = app.add_subcommand("pretrain-tfg", "Train the target feature generator");
  auto* uoi = app.add_subcommand("pretrain-uoi", "Pretrain the unlabeled object identifier");
  auto* train = app.add_subcommand("train", "Meta-train the navigation agent");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the three target splits");
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the ablation matrix");
  auto* report = app.add_subcommand("report", "Aggregate result files into tables");
  for (auto* sub : {gen, tfg, uoi, train, eval, ablate, report}) add_common(sub);

  int train_episodes = -1, log_every = 1000;
  bool resume = false;
  train->add_option("--episodes", train_episodes, "Training episodes (default: from the config)");
  train->add_option("--log-every", log_every, "Episodes per log line")->capture_default_str();
  train->add_flag("--resume", resume, "Continue from <out>/checkpoint.json");

  std::string checkpoint, agent = "learned", label;
  int eval_episodes = 200;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file (default: <out>/checkpoint.json)");
  eval->add_option("--episodes", eval_episodes, "Episodes per split")->capture_default_str();
  eval->add_option("--agent", agent, "learned or random")->check(CLI::IsMember({"learned", "random"}));
  eval->add_option("--label", label, "Method name used in outputs");

  std::string seeds = "1,2,3";
  int ablate_episodes = -1, ablate_eval = 200;
  std::vector<std::string> variants;
  ablate->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();
  ablate->add_option("--episodes", ablate_episodes, "Training episodes per variant (default: from the config)");
  ablate->add_option("--eval-episodes", ablate_eval, "Evaluation episodes per split")->capture_default_str();
  ablate->add_option("--variants", variants, "Preset names (default: every table row)");

  std::vector<std::string> inputs;
  report->add_option("inputs", inputs, "Result files written by eval or ablate")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) cmd_gen_scenes(common);
    if (*tfg) cmd_pretrain_tfg(common);
    if (*uoi) cmd_pretrain_uoi(common);
    if (*train) cmd_train(common, train_episodes, log_every, resume);
    if (*eval) cmd_eval(common, checkpoint, eval_episodes, agent, label);
    if (*ablate) cmd_ablate(common, seeds, ablate_episodes, ablate_eval, variants);
    if (*report) cmd_report(common, inputs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
