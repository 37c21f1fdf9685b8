#include "metanav/metatrain.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace metanav {

using json = nlohmann::ordered_json;

namespace {

/// Reads named fields of one JSON object and rejects names it does not know.
class FieldReader {
 public:
  FieldReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw std::invalid_argument(where_ + " must be an object");
  }
  ~FieldReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw std::invalid_argument("unknown config key '" + where_ + "." + key + "'");
    }
  }
  template <class T>
  void operator()(const char* key, T& out) {
    seen_.insert(key);
    if (j_.contains(key)) out = j_.at(key).get<T>();
  }
  const json* object(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json config_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["scene"] = {{"width", c.scene.width},
                {"height", c.scene.height},
                {"wall_density", c.scene.wall_density},
                {"objects_per_scene", c.scene.objects_per_scene}};
  j["world"] = {{"success_distance", c.world.success_distance},
                {"view_range", c.world.view_range},
                {"max_steps", c.world.max_steps},
                {"success_reward", c.world.success_reward},
                {"step_penalty", c.world.step_penalty}};
  j["perception"] = {{"d_g", c.perception.d_g},
                     {"D", c.perception.D},
                     {"D_f", c.perception.D_f},
                     {"noise_ratio", c.perception.noise_ratio},
                     {"residual_scale", c.perception.residual_scale}};
  j["uoi"] = {{"layers", c.uoi.layers}, {"ffn_hidden", c.uoi.ffn_hidden}, {"tau_cls", c.uoi.tau_cls}};
  j["train_scenes"] = c.train_scenes;
  j["test_scenes"] = c.test_scenes;
  j["tfg"] = {{"hidden", c.tfg_hidden}, {"epochs", c.tfg_epochs}, {"lr", c.tfg_lr}};
  j["uoi_pretrain"] = {{"train_frames", c.uoi_train_frames},
                       {"heldout_frames", c.uoi_heldout_frames},
                       {"epochs", c.uoi_pretrain.epochs},
                       {"lr", c.uoi_pretrain.lr},
                       {"batch", c.uoi_pretrain.batch}};
  j["policy"] = {{"d_z", c.d_z},
                 {"hidden", c.hidden},
                 {"d_out", c.d_out},
                 {"input_order", "z_o,z_t,z_r,prev_action,reminder"}};
  const MetaConfig& m = c.meta;
  j["meta"] = {{"lambda1", m.lambda1},
               {"lambda2", m.lambda2},
               {"mu", m.mu},
               {"outer_optimizer", m.outer_optimizer},
               {"batch", m.batch},
               {"episodes", m.episodes},
               {"eta", m.eta},
               {"edge_drop", m.augmentation.edge_drop},
               {"feature_mask", m.augmentation.feature_mask},
               {"gamma", m.a3c.gamma},
               {"value_coef", m.a3c.value_coef},
               {"entropy_coef", m.a3c.entropy_coef},
               {"min_shortest_path", m.min_shortest_path},
               {"greedy_inference", m.greedy_inference}};
  j["flags"] = flags_to_string(c.flags);
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  FieldReader top(j, "config");
  top("seed", c.seed);
  if (const json* s = top.object("scene")) {
    FieldReader r(*s, "scene");
    r("width", c.scene.width);
    r("height", c.scene.height);
    r("wall_density", c.scene.wall_density);
    r("objects_per_scene", c.scene.objects_per_scene);
  }
  if (const json* s = top.object("world")) {
    FieldReader r(*s, "world");
    r("success_distance", c.world.success_distance);
    r("view_range", c.world.view_range);
    r("max_steps", c.world.max_steps);
    r("success_reward", c.world.success_reward);
    r("step_penalty", c.world.step_penalty);
  }
  if (const json* s = top.object("perception")) {
    FieldReader r(*s, "perception");
    r("d_g", c.perception.d_g);
    r("D", c.perception.D);
    r("D_f", c.perception.D_f);
    r("noise_ratio", c.perception.noise_ratio);
    r("residual_scale", c.perception.residual_scale);
  }
  if (const json* s = top.object("uoi")) {
    FieldReader r(*s, "uoi");
    r("layers", c.uoi.layers);
    r("ffn_hidden", c.uoi.ffn_hidden);
    r("tau_cls", c.uoi.tau_cls);
  }
  top("train_scenes", c.train_scenes);
  top("test_scenes", c.test_scenes);
  if (const json* s = top.object("tfg")) {
    FieldReader r(*s, "tfg");
    r("hidden", c.tfg_hidden);
    r("epochs", c.tfg_epochs);
    r("lr", c.tfg_lr);
  }
  if (const json* s = top.object("uoi_pretrain")) {
    FieldReader r(*s, "uoi_pretrain");
    r("train_frames", c.uoi_train_frames);
    r("heldout_frames", c.uoi_heldout_frames);
    r("epochs", c.uoi_pretrain.epochs);
    r("lr", c.uoi_pretrain.lr);
    r("batch", c.uoi_pretrain.batch);
  }
  if (const json* s = top.object("policy")) {
    FieldReader r(*s, "policy");
    r("d_z", c.d_z);
    r("hidden", c.hidden);
    r("d_out", c.d_out);
    std::string order = "z_o,z_t,z_r,prev_action,reminder";
    r("input_order", order);
    if (order != "z_o,z_t,z_r,prev_action,reminder") throw std::invalid_argument("unsupported policy input order");
  }
  if (const json* s = top.object("meta")) {
    FieldReader r(*s, "meta");
    MetaConfig& m = c.meta;
    r("lambda1", m.lambda1);
    r("lambda2", m.lambda2);
    r("mu", m.mu);
    r("outer_optimizer", m.outer_optimizer);
    r("batch", m.batch);
    r("episodes", m.episodes);
    r("eta", m.eta);
    r("edge_drop", m.augmentation.edge_drop);
    r("feature_mask", m.augmentation.feature_mask);
    r("gamma", m.a3c.gamma);
    r("value_coef", m.a3c.value_coef);
    r("entropy_coef", m.a3c.entropy_coef);
    r("min_shortest_path", m.min_shortest_path);
    r("greedy_inference", m.greedy_inference);
  }
  std::string flags = flags_to_string(c.flags);
  top("flags", flags);
  c.flags = parse_flags(flags);
  return c;
}

void sync_uoi_config(ExperimentConfig& c, const ClassSplit& split) {
  c.uoi.d_g = c.perception.d_g;
  c.uoi.D = c.perception.D;
  c.uoi.D_f = c.perception.D_f;
  c.uoi.bank_size = static_cast<int>(split.unknown().size());
}

json matrix_json(const Matrix& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["values"] = std::vector<double>(m.values().begin(), m.values().end());
  return j;
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<std::size_t>(), cols = j.at("cols").get<std::size_t>();
  auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != rows * cols) throw std::invalid_argument("matrix value count does not match its shape");
  return Matrix(rows, cols, std::move(values));
}

json params_json(const ParamStore& store) {
  json arr = json::array();
  for (const auto& p : store.params()) {
    json e;
    e["name"] = p.name;
    e["group"] = std::string(to_string(p.group));
    e["value"] = matrix_json(p.value);
    arr.push_back(std::move(e));
  }
  return arr;
}

ParamStore params_from(const json& arr) {
  ParamStore s;
  for (const auto& e : arr) {
    s.add(e.at("name").get<std::string>(), param_group_from_string(e.at("group").get<std::string>()),
          matrix_from(e.at("value")));
  }
  return s;
}

std::vector<Scene> make_scenes(const ExperimentConfig& c, const std::shared_ptr<const ClassSplit>& split,
                               ScenePool pool, int count) {
  std::vector<Scene> out;
  const std::uint64_t tag = pool == ScenePool::train ? 0 : 1;
  for (int k = 0; k < count; ++k) {
    out.push_back(generate_scene(derive_seed(c.seed, {0x5ce, tag, static_cast<std::uint64_t>(k)}), c.scene, split, pool));
  }
  return out;
}

ExperimentConfig synced(ExperimentConfig c, const ClassSplit& split) {
  sync_uoi_config(c, split);
  return c;
}

}  // namespace

void validate(const ExperimentConfig& c) {
  const MetaConfig& m = c.meta;
  if (!(m.lambda1 > 0.0) || !(m.lambda2 > 0.0) || !(m.mu > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (m.batch == 0 || m.episodes < 0) throw std::invalid_argument("task batch must be non-empty");
  if (m.outer_optimizer != "adam" && m.outer_optimizer != "sgd") throw std::invalid_argument("outer optimizer must be adam or sgd");
  if (m.eta < 0.0) throw std::invalid_argument("eta must be non-negative");
  if (c.train_scenes < 1 || c.test_scenes < 1) throw std::invalid_argument("need at least one scene per pool");
  if (c.d_z == 0 || c.hidden == 0 || c.d_out == 0) throw std::invalid_argument("policy sizes must be positive");
  validate(c.flags);
}

std::string config_to_text(const ExperimentConfig& config) { return config_json(config).dump(2) + "\n"; }

ExperimentConfig config_from_text(std::string_view text) {
  ExperimentConfig c = config_from_json(json::parse(text));
  validate(c);
  return c;
}

Assets::Assets(const ExperimentConfig& config, const PretrainedWeights& weights)
    : split(make_toy_split()),
      oracle(split, config.perception, derive_seed(config.seed, {0x0a})),
      train_scenes(make_scenes(config, split, ScenePool::train, config.train_scenes)),
      test_scenes(make_scenes(config, split, ScenePool::test, config.test_scenes)),
      tfg(config.perception, split->vocabulary().size(), config.tfg_hidden, derive_seed(config.seed, {0x7f})),
      uoi(synced(config, *split).uoi, derive_seed(config.seed, {0x01})) {
  if (weights.skip_tfg) return;
  if (weights.tfg) {
    if (weights.tfg->size() != tfg.params().size()) throw std::invalid_argument("generator weights do not match");
    tfg.params().assign_from(*weights.tfg);
    tfg.mark_trained();
  } else {
    tfg_report = tfg.train(oracle, config.tfg_epochs, config.tfg_lr);
  }
  for (int c : split->unknown()) bank.push_back(tfg.generate_for_class(*split, c));
  if (weights.uoi) {
    if (weights.uoi->size() != uoi.params().size()) throw std::invalid_argument("identifier weights do not match");
    uoi.params().assign_from(*weights.uoi);
  } else if (!weights.skip_uoi) {
    uoi_train_data = build_frame_dataset(derive_seed(config.seed, {0xd1}), train_scenes, oracle,
                                         config.uoi_train_frames, config.world);
    uoi_heldout_data = build_frame_dataset(derive_seed(config.seed, {0xd2}), train_scenes, oracle,
                                           config.uoi_heldout_frames, config.world);
    uoi_report = uoi_pretrain(uoi, bank, uoi_train_data, uoi_heldout_data, config.uoi_pretrain,
                              derive_seed(config.seed, {0x0e}));
  }
}

Assets::Assets(const ExperimentConfig& config, const ParamStore& uoi_params, const ParamStore& tfg_params)
    : Assets(config, PretrainedWeights{tfg_params, uoi_params, false, false}) {}

const Scene& Assets::scene(std::uint64_t id) const {
  for (const auto* pool : {&train_scenes, &test_scenes})
    for (const auto& s : *pool)
      if (s.id() == id) return s;
  throw std::out_of_range("no scene with id " + std::to_string(id));
}

PolicyConfig policy_config(const ExperimentConfig& config, const ClassSplit& split) {
  PolicyConfig p;
  p.f_o_dim = static_cast<std::size_t>(config.perception.d_g * config.perception.D);
  p.ti_dim = split.known().size() + 1 + split.vocabulary().size();
  p.graph_dim = (split.known().size() + 1) * config.d_out;
  p.d_z = config.d_z;
  p.hidden = config.hidden;
  p.use_z_r = config.flags.use_mcfm;
  return p;
}

ParamStore init_agent_params(const ExperimentConfig& config, const ClassSplit& split) {
  ParamStore s;
  Rng rng(derive_seed(config.seed, {0xa9e7}));
  const auto d_f = static_cast<std::size_t>(config.perception.D_f);
  add_mcfm_params(s, d_f, rng);
  add_mogl_params(s, d_f, config.d_out, rng);
  PolicyNet(policy_config(config, split)).add_params(s, rng);
  return s;
}

const UoiOutput& FrameCache::lookup(const ObservationFrame& frame, const Matrix& f_o, const UoiModel& uoi,
                                    const std::vector<Matrix>& bank) {
  auto it = entries_.find(frame.frame_id);
  if (it != entries_.end()) return it->second;
  return entries_.emplace(frame.frame_id, uoi.forward(f_o, bank)).first->second;
}

double total_loss(double l_mcfm, double l_cca, double l_a3c, double lambda1, double lambda2, double mu) {
  return lambda1 * l_mcfm + lambda2 * l_cca + mu * l_a3c;
}

TaskRun run_episode(const ExperimentConfig& config, const Assets& assets, FrameCache& cache,
                    const ParamStore& globals, const Scene& scene, const EpisodeSpec& spec, RunMode mode) {
  const ClassSplit& split = scene.split();
  const AblationFlags& flags = config.flags;
  const MetaConfig& meta = config.meta;
  const bool train = mode == RunMode::train;
  const bool adapt_mcfm = flags.use_mcfm && flags.mcfm_loss_on && (train || flags.mcfm_meta_on);
  const bool adapt_mogl = flags.use_mogl && flags.cca_loss_on && (train || flags.mogl_meta_on);

  TaskRun run;
  run.spec = spec;
  run.target_kind = split.kind_of(spec.target.class_id);
  run.alpha_i = globals.extract(ParamGroup::alpha);
  run.beta_i = globals.extract(ParamGroup::beta);

  const PolicyNet net(policy_config(config, split));
  Tape tape;
  const auto p = tape.bind(globals.extract(ParamGroup::psi));
  const Var z_t = net.project_t(p, tape.constant(build_ti(split, spec.target)));
  StepContext ctx = net.initial_context(tape);
  ClassFeatureBuffer buffer(split.known().size(), static_cast<std::size_t>(config.perception.D_f));
  CovisibilityLog covis(split.known().size());
  Rng action_rng(derive_seed(spec.seed, {0xac7, spec.scene_id}));
  Rng aug_rng(derive_seed(spec.seed, {0xa06, spec.scene_id}));
  const UoiOutput no_uoi{Matrix(1, static_cast<std::size_t>(config.perception.D_f)), 0.0, false};

  std::vector<TrajectoryStep> trajectory;
  double sum_mcfm = 0.0, sum_cca = 0.0;
  AgentState state = spec.start;
  for (int t = 0; t < spec.max_steps; ++t) {
    const ObservationFrame frame = observe(scene, state, config.world);
    const Matrix f_o = observation_features(frame, assets.oracle);
    const UoiOutput& u = flags.use_tfg_uoi ? cache.lookup(frame, f_o, assets.uoi, assets.bank) : no_uoi;
    const bool cls = flags.use_gt_cls ? frame.gt_unlabeled : u.cls;
    const auto detections = detect_known(frame, assets.oracle);
    for (const auto& d : detections) buffer.observe(split.known_index(d.class_id), d.feature, d.pose);
    covis.record(frame, detections, cls, split);

    StepLog log;
    log.step = t;
    log.state = state;
    log.cls = cls;

    // Act with the current task parameters, then adapt them.
    std::optional<Var> z_r;
    std::optional<ObjectGraph> graph;
    if (flags.use_mcfm) {
      graph = build_graph(buffer, modify_ft(u.f_t, run.alpha_i), covis);
      Var f = flags.use_mogl ? gcn_forward(tape, *graph, tape.param(kMoglW, run.beta_i.get(kMoglW)))
                             : tape.constant(graph->V);
      z_r = net.project_r(p, ad::flatten(f));
    }
    ctx.reminder = done_reminder(detections, cls, spec.target);
    log.reminder = ctx.reminder;
    const Var z_o = net.project_o(p, tape.constant(flatten(f_o)));
    const PolicyStep out = net.step(p, z_o, z_t, z_r, ctx);
    const int action = train || !meta.greedy_inference ? sample_action(out.probs, action_rng) : greedy_action(out.probs);

    if (adapt_mcfm && cls && !spec.target.labeled) {
      const McfmUpdate up =
          mcfm_inner_update(run.alpha_i, cooccurrence(detections, cls, buffer, split), buffer, u.f_t, cls, meta.lambda1);
      if (up.applied) {
        log.l_mcfm = up.loss;
        sum_mcfm += up.loss;
        graph = build_graph(buffer, modify_ft(u.f_t, run.alpha_i), covis);
      }
    }
    if (adapt_mogl) {
      const MoglUpdate up = mogl_inner_update(run.beta_i, *graph, meta.augmentation, aug_rng, meta.eta, meta.lambda2);
      log.l_cca = up.loss;
      log.density = up.density;
      sum_cca += up.loss;
    }

    const bool done = action == static_cast<int>(Action::done);
    const bool won = done && success(scene, state, spec.target, true, t + 1, config.world, spec.max_steps);
    const double reward = won ? config.world.success_reward : config.world.step_penalty;
    trajectory.push_back({ad::pick(out.log_probs, 0, static_cast<std::size_t>(action)), out.value, out.entropy, reward});
    log.action = action;
    log.reward = reward;
    run.steps.push_back(log);
    ctx.prev_action = action;
    state = step(scene, state, action).state;
    run.steps_taken = t + 1;
    if (done) {
      run.success = won;
      break;
    }
  }

  Var loss = loss_a3c(trajectory, 0.0, meta.a3c);
  run.l_a3c = loss.scalar();
  if (train) {
    tape.backward(loss);
    run.grads = tape.param_grads();
  }
  run.total_loss = total_loss(sum_mcfm, sum_cca, run.l_a3c, meta.lambda1, meta.lambda2, meta.mu);
  return run;
}

OuterOptimizer::OuterOptimizer(std::string kind, double mu) : kind_(std::move(kind)), mu_(mu), adam_(mu) {
  if (kind_ != "adam" && kind_ != "sgd") throw std::invalid_argument("outer optimizer must be adam or sgd");
}

void OuterOptimizer::step(ParamStore& store, const GradMap& grads) {
  if (kind_ == "adam") {
    adam_.step(store, grads);
    return;
  }
  for (const auto& [name, g] : grads) {
    Matrix& w = store.get(name);
    if (!w.same_shape(g)) throw DimensionError("gradient shape for " + name);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= mu_ * g[k];
  }
}

GradMap outer_gradients(const std::vector<TaskRun>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty task batch");
  GradMap sum;
  for (const auto& run : batch) {
    GradMap g;
    for (const auto& [name, value] : run.grads) {
      const bool is_beta = name == kMoglW;
      if (is_beta || run.target_kind != SplitKind::unseen) g.emplace(name, value);
    }
    accumulate(sum, g);
  }
  return sum;
}

void outer_update(ParamStore& globals, const std::vector<TaskRun>& batch, OuterOptimizer& optimizer) {
  const GradMap grads = outer_gradients(batch);
  if (!grads.empty()) optimizer.step(globals, grads);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::string out;
  char hex[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(hex, sizeof hex, "%02x", digest[i]);
    out += hex;
  }
  return out;
}

std::string params_to_json(const ParamStore& store) { return params_json(store).dump() + "\n"; }
ParamStore params_from_json(std::string_view text) { return params_from(json::parse(text)); }

std::string checkpoint_to_text(const Checkpoint& c) {
  json j;
  j["version"] = c.version;
  j["config"] = config_json(c.config);
  j["agent"] = params_json(c.agent);
  j["uoi"] = params_json(c.uoi);
  j["tfg"] = params_json(c.tfg);
  json opt;
  opt["kind"] = c.optimizer;
  opt["steps"] = c.adam_steps;
  json moments = json::array();
  for (const auto& [name, m] : c.adam_moments) {
    moments.push_back({{"name", name}, {"m", matrix_json(m.m)}, {"v", matrix_json(m.v)}});
  }
  opt["moments"] = std::move(moments);
  j["optimizer"] = std::move(opt);
  j["rng"] = c.rng_state;
  j["episodes_done"] = c.episodes_done;
  return j.dump() + "\n";
}

Checkpoint checkpoint_from_text(std::string_view text) {
  const json j = json::parse(text);
  Checkpoint c;
  c.version = j.at("version").get<int>();
  if (c.version != 1) throw std::invalid_argument("unsupported checkpoint version " + std::to_string(c.version));
  c.config = config_from_json(j.at("config"));
  c.agent = params_from(j.at("agent"));
  c.uoi = params_from(j.at("uoi"));
  c.tfg = params_from(j.at("tfg"));
  const json& opt = j.at("optimizer");
  c.optimizer = opt.at("kind").get<std::string>();
  c.adam_steps = opt.at("steps").get<std::uint64_t>();
  for (const auto& m : opt.at("moments")) {
    c.adam_moments[m.at("name").get<std::string>()] = {matrix_from(m.at("m")), matrix_from(m.at("v"))};
  }
  c.rng_state = j.at("rng").get<std::string>();
  c.episodes_done = j.at("episodes_done").get<int>();
  const ParamStore expect = init_agent_params(c.config, *make_toy_split());
  if (expect.size() != c.agent.size()) throw std::invalid_argument("checkpoint does not match its configuration");
  for (const auto& p : expect.params()) {
    if (!c.agent.contains(p.name) || !c.agent.get(p.name).same_shape(p.value)) {
      throw std::invalid_argument("checkpoint parameter '" + p.name + "' does not match its configuration");
    }
  }
  return c;
}

MetaTrainer::MetaTrainer(const ExperimentConfig& config, const Assets& assets, FrameCache* shared_cache)
    : config_(config),
      assets_(assets),
      globals_(init_agent_params(config, *assets.split)),
      optimizer_(config.meta.outer_optimizer, config.meta.mu),
      rng_(derive_seed(config.seed, {0x7a1})),
      cache_(shared_cache ? shared_cache : &own_cache_) {
  validate(config_);
}

MetaTrainer::MetaTrainer(const Checkpoint& c, const Assets& assets, FrameCache* shared_cache)
    : config_(c.config),
      assets_(assets),
      globals_(c.agent),
      optimizer_(c.optimizer, c.config.meta.mu),
      cache_(shared_cache ? shared_cache : &own_cache_),
      episodes_done_(c.episodes_done) {
  validate(config_);
  optimizer_.adam().restore(c.adam_steps, c.adam_moments);
  rng_.set_state(c.rng_state);
}

std::vector<TaskRun> MetaTrainer::train_batch() {
  const TargetPool pool = config_.flags.use_uot ? TargetPool::train : TargetPool::train_known_only;
  std::vector<TaskRun> batch;
  while (batch.size() < config_.meta.batch) {
    const Scene& scene = assets_.train_scenes[rng_.index(assets_.train_scenes.size())];
    const std::uint64_t seed = rng_.next_u64();
    EpisodeSpec spec;
    try {
      spec = generate_episode(seed, scene, pool, config_.world, config_.meta.min_shortest_path);
    } catch (const std::runtime_error&) {
      continue;  // no valid start in this scene; draw again
    }
    TaskRun run = run_episode(config_, assets_, *cache_, globals_, scene, spec, RunMode::train);
    // Without meta-learning the inner updates persist in the globals.
    if (!config_.flags.mcfm_meta_on) globals_.assign_from(run.alpha_i);
    if (!config_.flags.mogl_meta_on) globals_.assign_from(run.beta_i);
    batch.push_back(std::move(run));
  }
  outer_update(globals_, batch, optimizer_);
  episodes_done_ += static_cast<int>(batch.size());
  return batch;
}

void MetaTrainer::train(int episodes, const EpisodeHook& hook) {
  const int target = episodes_done_ + episodes;
  while (episodes_done_ < target) {
    const auto batch = train_batch();
    if (hook)
      for (const auto& run : batch) hook(run, globals_);
  }
}

Checkpoint MetaTrainer::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.agent = globals_;
  c.uoi = assets_.uoi.params();
  c.tfg = assets_.tfg.params();
  c.optimizer = optimizer_.kind();
  c.adam_steps = optimizer_.adam().steps();
  c.adam_moments = optimizer_.adam().moments();
  c.rng_state = rng_.state();
  c.episodes_done = episodes_done_;
  return c;
}

}  // namespace metanav
