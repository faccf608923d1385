/*
 * Copyright 2026 The lcp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lcp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "json.hpp"
#include "lcp/common.hpp"

namespace lcp {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    out = j[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
  }
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    if (!ok) throw ConfigError(fmt::format("unknown config key '{}{}'", where, k));
  }
}

json metrics_json(const MetricBlock& m) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return json{{"count", m.count}, {"pearson", num(m.pearson)},  {"spearman", num(m.spearman)},
              {"mae", num(m.mae)},  {"mse", num(m.mse)},          {"r2", num(m.r2)}};
}

std::string subtask_task_name(Subtask s) { return std::string(to_string(s)); }

// Data, vocabulary and features shared by every training run of a config.
struct Loaded {
  Dataset train, dev;
  std::optional<Dataset> s1_train, s1_dev, aux_train, aux_dev;
  Vocabulary vocab;
  std::optional<FrequencyTable> freq;
  std::optional<Normalizer> norm;
  ExampleSet train_x, dev_x, s1_train_x, s1_dev_x, aux_train_x, aux_dev_x;
  EncoderConfig encoder;
  std::vector<std::string> tasks;
  std::map<std::string, std::string> input_digests;
};

Loaded load_inputs(const RunConfig& cfg) {
  Loaded L;
  auto load = [&](const std::string& path, Subtask st, Split split) {
    L.input_digests[path] = file_sha256(path);
    return load_dataset(path, st, split);
  };
  L.train = load(cfg.data.train, cfg.subtask, Split::train);
  L.dev = load(cfg.data.dev, cfg.subtask, Split::trial);
  if (cfg.method.msft) {
    L.s1_train = load(cfg.data.stage1_train, cfg.data.stage1_subtask, Split::train);
    L.s1_dev = load(cfg.data.stage1_dev, cfg.data.stage1_subtask, Split::trial);
  }
  const Subtask aux_st = cfg.data.aux_subtask.value_or(
      cfg.subtask == Subtask::single_word ? Subtask::mwe : Subtask::single_word);
  if (cfg.method.mtl) {
    L.aux_train = load(cfg.data.aux_train, aux_st, Split::train);
    L.aux_dev = load(cfg.data.aux_dev, aux_st, Split::trial);
  }

  std::vector<const Dataset*> train_sets = {&L.train};
  if (L.s1_train) train_sets.push_back(&*L.s1_train);
  if (L.aux_train) train_sets.push_back(&*L.aux_train);
  L.vocab = build_vocab(train_sets, cfg.min_count);

  FeatureContext ctx;
  ctx.vocab = &L.vocab;
  ctx.max_len = cfg.max_len;
  if (cfg.method.feat) {
    L.input_digests[cfg.data.frequency_table] = file_sha256(cfg.data.frequency_table);
    L.freq = FrequencyTable::load(cfg.data.frequency_table);
    L.norm = fit_feature_normalizer(train_sets, *L.freq);
    ctx.frequencies = &*L.freq;
    ctx.normalizer = L.norm;
  }
  L.train_x = prepare(L.train, ctx);
  L.dev_x = prepare(L.dev, ctx);
  if (L.s1_train) {
    L.s1_train_x = prepare(*L.s1_train, ctx);
    L.s1_dev_x = prepare(*L.s1_dev, ctx);
  }
  if (L.aux_train) {
    L.aux_train_x = prepare(*L.aux_train, ctx);
    L.aux_dev_x = prepare(*L.aux_dev, ctx);
  }

  L.encoder = encoder_preset(cfg.encoder_preset);
  L.encoder.vocab_size = static_cast<int>(L.vocab.size());
  L.encoder.max_len = static_cast<int>(cfg.max_len);
  if (cfg.method.mtl) {
    std::string primary = subtask_task_name(cfg.subtask);
    std::string aux = subtask_task_name(aux_st);
    if (aux == primary) aux = "aux";
    L.tasks = {primary, aux};
  } else {
    L.tasks = {std::string(kDefaultTask)};
  }
  return L;
}

struct Trained {
  CheckpointSet primary;
  std::optional<CheckpointSet> stage1;
  std::size_t stage1_best = 0;
  std::optional<CheckpointSet> aux;
};

Trained execute(const Loaded& L, const RunConfig& cfg, const TrainingConfig& opt, const TrainHooks& hooks) {
  Model model = Model::init(L.encoder, cfg.method.feat, L.tasks, opt.seed);
  const Method m = cfg.method.adv ? Method::adv : cfg.method.feat ? Method::feat : Method::standard;
  const AdversarialConfig* adv = cfg.method.adv ? &cfg.adv : nullptr;
  Trained out;
  if (cfg.method.msft) {
    MsftResult r = train_msft(model, {&L.s1_train_x, &L.s1_dev_x}, {&L.train_x, &L.dev_x}, opt, m, adv, hooks);
    out.primary = std::move(r.stage2);
    out.stage1 = std::move(r.stage1);
    out.stage1_best = r.stage1_best;
  } else if (cfg.method.mtl) {
    std::vector<TaskData> tasks = {{L.tasks[0], &L.train_x, &L.dev_x}, {L.tasks[1], &L.aux_train_x, &L.aux_dev_x}};
    auto sets = train_mtl(model, tasks, opt, adv, hooks);
    out.primary = std::move(sets.at(L.tasks[0]));
    out.aux = std::move(sets.at(L.tasks[1]));
  } else {
    out.primary = train(model, L.train_x, L.dev_x, opt, m, adv, hooks);
  }
  return out;
}

class Manifest {
 public:
  explicit Manifest(fs::path path) : path_(std::move(path)) {}
  void append(const json& record) {
    std::ofstream f(path_, std::ios::app | std::ios::binary);
    if (!f) throw DataError(fmt::format("cannot append to {}", path_.string()));
    f << record.dump() << '\n';
  }

 private:
  fs::path path_;
};

std::string epoch_line(const std::string& task, const EpochRecord& rec) {
  const auto& m = rec.dev_metrics;
  return fmt::format("task={} epoch={} train_loss={:.6f} dev_R={:.6f} dev_Rho={:.6f} dev_MAE={:.6f} "
                     "dev_MSE={:.6f} dev_R2={:.6f}",
                     task, rec.epoch, rec.train_loss, m.pearson, m.spearman, m.mae, m.mse, m.r2);
}

TrainHooks logging_hooks(const fs::path& log_path, Manifest& manifest, std::ostream* echo) {
  TrainHooks hooks;
  hooks.on_epoch = [log_path, &manifest, echo](const std::string& task, const EpochRecord& rec) {
    const std::string line = epoch_line(task, rec);
    std::ofstream f(log_path, std::ios::app | std::ios::binary);
    f << line << '\n';
    if (echo) *echo << line << '\n';
    json doms = json::object();
    for (const auto& [d, m] : rec.dev_domain_metrics) doms[std::string(to_string(d))] = metrics_json(m);
    manifest.append(json{{"event", "epoch"},
                         {"task", task},
                         {"epoch", rec.epoch},
                         {"train_loss", rec.train_loss},
                         {"dev", metrics_json(rec.dev_metrics)},
                         {"dev_per_domain", doms}});
  };
  return hooks;
}

fs::path output_dir_for(const RunConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  std::string method = cfg.method.str();
  for (auto& c : method) {
    if (c == '+') c = '_';
  }
  return default_output_root() / fmt::format("{}-{}-seed{}", to_string(cfg.subtask), method, cfg.optimizer.seed);
}

json optimizer_json(const TrainingConfig& o) {
  return json{{"lr", o.learning_rate},          {"batch_size", o.batch_size}, {"max_epochs", o.max_epochs},
              {"warmup_fraction", o.warmup_fraction}, {"clip_norm", o.clip_norm}};
}

RunResult write_outputs(const RunConfig& cfg, const Loaded& L, const Trained& t, const TrainingConfig& opt,
                        const fs::path& dir, Manifest& manifest) {
  RunResult res;
  res.output_dir = dir;
  res.optimizer = opt;
  const fs::path vocab_path = dir / "vocab.tsv";
  L.vocab.save(vocab_path);
  const std::string vocab_sha = file_sha256(vocab_path);
  const CheckpointRef ref{"../vocab.tsv", vocab_sha};

  json artifacts = json::array();
  std::vector<std::string> ckpt_names;
  for (const auto& rec : t.primary.epochs) {
    const std::string name = fmt::format("checkpoints/epoch_{:02d}.json", rec.epoch);
    save_checkpoint(*rec.snapshot, dir / name, ref);
    res.checkpoint_digests.push_back(file_sha256(dir / name));
    artifacts.push_back(json{{"path", name}, {"sha256", res.checkpoint_digests.back()}});
    ckpt_names.push_back(name);
  }
  if (t.stage1) {
    const std::string name = "checkpoints/stage1_best.json";
    save_checkpoint(*t.stage1->epochs[t.stage1_best].snapshot, dir / name, ref);
    artifacts.push_back(json{{"path", name}, {"sha256", file_sha256(dir / name)}});
  }

  res.selection = select_best(t.primary, L.dev_x, cfg.per_domain_selection);

  json bundle{{"format", "lcp-bundle"},
              {"version", 1},
              {"subtask", std::string(to_string(cfg.subtask))},
              {"task", t.primary.task},
              {"max_len", cfg.max_len},
              {"vocab", "vocab.tsv"},
              {"vocab_sha256", vocab_sha}};
  if (L.freq) {
    bundle["frequency_table"] = fs::absolute(cfg.data.frequency_table).lexically_normal().string();
    bundle["frequency_table_sha256"] = file_sha256(cfg.data.frequency_table);
    bundle["normalizer"] = json{{"min", L.norm->min}, {"max", L.norm->max}};
  }
  json selection{{"overall_epoch", t.primary.epochs[res.selection.overall].epoch}};
  if (res.selection.by_domain) {
    json routing = json::object();
    json epochs = json::object();
    for (Domain d : kDomains) {
      const std::size_t e = res.selection.per_domain.at(d);
      routing[std::string(to_string(d))] = ckpt_names[e];
      epochs[std::string(to_string(d))] = t.primary.epochs[e].epoch;
    }
    bundle["routing"] = routing;
    selection["per_domain_epoch"] = epochs;
  } else {
    bundle["checkpoint"] = ckpt_names[res.selection.overall];
  }
  bundle["selection"] = selection;
  res.bundle = dir / "bundle.json";
  write_file_atomic(res.bundle, bundle.dump(2) + "\n");

  // Dev predictions of the selected (possibly routed) model.
  PredictionSet dev_preds;
  for (std::size_t i = 0; i < L.dev_x.examples.size(); ++i) {
    const auto& ex = L.dev_x.examples[i];
    const std::size_t e = res.selection.for_domain(ex.domain);
    dev_preds.add(ex.id, t.primary.epochs[e].dev_predictions.scores()[i]);
  }
  write_predictions(dev_preds, dir / "dev_predictions.csv");

  manifest.append(json{{"event", "artifacts"},
                       {"optimizer", optimizer_json(opt)},
                       {"selection", selection},
                       {"checkpoints", artifacts},
                       {"bundle", "bundle.json"},
                       {"bundle_sha256", file_sha256(res.bundle)},
                       {"vocab_sha256", vocab_sha},
                       {"dev_predictions_sha256", file_sha256(dir / "dev_predictions.csv")}});
  return res;
}

Manifest start_run(const RunConfig& cfg, const Loaded& L, const fs::path& dir, std::string_view kind) {
  fs::create_directories(dir / "checkpoints");
  Manifest manifest(dir / "manifest.jsonl");
  json inputs = json::object();
  for (const auto& [p, d] : L.input_digests) inputs[p] = d;
  manifest.append(json{{"event", "start"},
                       {"kind", kind},
                       {"version", std::string(kVersion)},
                       {"config", json::parse(cfg.to_json())},
                       {"inputs", inputs}});
  write_file_atomic(dir / "config.json", cfg.to_json());
  return manifest;
}

}  // namespace

// ---------------------------------------------------------------------------

MethodSet MethodSet::parse(std::string_view text) {
  MethodSet m;
  bool standard = false;
  for (auto tok : split_char(text, '+')) {
    const std::string t = to_lower_ascii(tok);
    if (t == "standard") {
      standard = true;
    } else if (t == "feat") {
      m.feat = true;
    } else if (t == "adv") {
      m.adv = true;
    } else if (t == "msft") {
      m.msft = true;
    } else if (t == "mtl") {
      m.mtl = true;
    } else {
      throw ConfigError(fmt::format("unknown method component '{}' in '{}'", tok, text));
    }
  }
  if (standard && (m.feat || m.adv || m.msft || m.mtl)) {
    throw ConfigError(fmt::format("'standard' cannot be combined with other methods: '{}'", text));
  }
  if (m.msft && m.mtl) throw ConfigError("msft and mtl cannot be combined");
  return m;
}

std::string MethodSet::str() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += '+';
    s += name;
  };
  add(feat, "feat");
  add(adv, "adv");
  add(msft, "msft");
  add(mtl, "mtl");
  return s.empty() ? "standard" : s;
}

RunConfig RunConfig::from_json(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("run config is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  check_keys(j,
             {"subtask", "method", "encoder_preset", "feat", "adv", "optimizer", "seed", "per_domain_selection",
              "data", "vocab", "grid", "output_dir"},
             "");
  RunConfig c;
  std::string s;
  take(j, "subtask", s);
  if (!s.empty()) {
    try {
      c.subtask = parse_subtask(s);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  }
  std::string method = "standard";
  take(j, "method", method);
  c.method = MethodSet::parse(method);
  bool feat = false;
  take(j, "feat", feat);
  c.method.feat = c.method.feat || feat;
  take(j, "encoder_preset", c.encoder_preset);
  take(j, "per_domain_selection", c.per_domain_selection);
  take(j, "seed", c.optimizer.seed);
  take(j, "output_dir", c.output_dir);
  if (!c.output_dir.empty()) c.output_dir = resolve(c.output_dir, base_dir);
  if (j.contains("adv")) {
    const json& a = j["adv"];
    check_keys(a, {"epsilon", "step_size", "init_variance", "pgd_steps", "alpha"}, "adv.");
    take(a, "epsilon", c.adv.epsilon);
    take(a, "step_size", c.adv.step_size);
    take(a, "init_variance", c.adv.init_variance);
    take(a, "pgd_steps", c.adv.pgd_steps);
    take(a, "alpha", c.adv.alpha);
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    check_keys(o, {"lr", "batch_size", "max_epochs", "warmup_fraction", "clip_norm"}, "optimizer.");
    take(o, "lr", c.optimizer.learning_rate);
    take(o, "batch_size", c.optimizer.batch_size);
    take(o, "max_epochs", c.optimizer.max_epochs);
    take(o, "warmup_fraction", c.optimizer.warmup_fraction);
    take(o, "clip_norm", c.optimizer.clip_norm);
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d,
               {"train", "dev", "stage1_train", "stage1_dev", "stage1_subtask", "aux_train", "aux_dev",
                "aux_subtask", "frequency_table"},
               "data.");
    take(d, "train", c.data.train);
    take(d, "dev", c.data.dev);
    take(d, "stage1_train", c.data.stage1_train);
    take(d, "stage1_dev", c.data.stage1_dev);
    take(d, "aux_train", c.data.aux_train);
    take(d, "aux_dev", c.data.aux_dev);
    take(d, "frequency_table", c.data.frequency_table);
    std::string st;
    take(d, "stage1_subtask", st);
    if (!st.empty()) c.data.stage1_subtask = parse_subtask(st);
    st.clear();
    take(d, "aux_subtask", st);
    if (!st.empty()) c.data.aux_subtask = parse_subtask(st);
    for (auto* p : {&c.data.train, &c.data.dev, &c.data.stage1_train, &c.data.stage1_dev, &c.data.aux_train,
                    &c.data.aux_dev, &c.data.frequency_table}) {
      *p = resolve(*p, base_dir);
    }
  }
  if (j.contains("vocab")) {
    const json& v = j["vocab"];
    check_keys(v, {"min_count", "max_len"}, "vocab.");
    take(v, "min_count", c.min_count);
    take(v, "max_len", c.max_len);
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, {"lr", "batch_size"}, "grid.");
    take(g, "lr", c.grid_learning_rates);
    take(g, "batch_size", c.grid_batch_sizes);
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return from_json(text, path.parent_path());
}

std::string RunConfig::to_json() const {
  json dj{{"train", data.train},
            {"dev", data.dev},
            {"frequency_table", data.frequency_table},
            {"stage1_train", data.stage1_train},
            {"stage1_dev", data.stage1_dev},
            {"stage1_subtask", std::string(to_string(data.stage1_subtask))},
            {"aux_train", data.aux_train},
            {"aux_dev", data.aux_dev}};
  if (data.aux_subtask) dj["aux_subtask"] = std::string(to_string(*data.aux_subtask));
  json j{{"subtask", std::string(to_string(subtask))},
         {"method", method.str()},
         {"encoder_preset", encoder_preset},
         {"adv",
          {{"epsilon", adv.epsilon},
           {"step_size", adv.step_size},
           {"init_variance", adv.init_variance},
           {"pgd_steps", adv.pgd_steps},
           {"alpha", adv.alpha}}},
         {"optimizer", optimizer_json(optimizer)},
         {"seed", optimizer.seed},
         {"per_domain_selection", per_domain_selection},
         {"vocab", {{"min_count", min_count}, {"max_len", max_len}}},
         {"grid", {{"lr", grid_learning_rates}, {"batch_size", grid_batch_sizes}}},
         {"output_dir", output_dir}};
  j["data"] = dj;
  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  if (data.train.empty()) throw ConfigError("run config: data.train is required");
  if (data.dev.empty()) throw ConfigError("run config: data.dev is required");
  if (method.msft && (data.stage1_train.empty() || data.stage1_dev.empty())) {
    throw ConfigError("method msft needs data.stage1_train and data.stage1_dev");
  }
  if (method.mtl && (data.aux_train.empty() || data.aux_dev.empty())) {
    throw ConfigError("method mtl needs data.aux_train and data.aux_dev");
  }
  if (method.feat && data.frequency_table.empty()) throw ConfigError("method feat needs data.frequency_table");
  if (method.msft && method.mtl) throw ConfigError("msft and mtl cannot be combined");
  optimizer.validate();
  if (method.adv) adv.validate();
  if (min_count < 1) throw ConfigError("vocab.min_count must be >= 1");
  if (max_len < 4) throw ConfigError("vocab.max_len must be >= 4");
  (void)lcp::encoder_preset(encoder_preset);
  for (double lr : grid_learning_rates) {
    if (!(lr > 0.0)) throw ConfigError("grid learning rates must be positive");
  }
  for (int b : grid_batch_sizes) {
    if (b < 1) throw ConfigError("grid batch sizes must be >= 1");
  }
}

fs::path default_output_root() {
  const char* env = std::getenv("LCP_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

RunResult run_train(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const Loaded L = load_inputs(cfg);
  const fs::path dir = output_dir_for(cfg);
  Manifest manifest = start_run(cfg, L, dir, "train");
  write_file_atomic(dir / "train.log", "");
  const TrainHooks hooks = logging_hooks(dir / "train.log", manifest, log);
  const Trained t = execute(L, cfg, cfg.optimizer, hooks);
  return write_outputs(cfg, L, t, cfg.optimizer, dir, manifest);
}

RunResult run_grid_search(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const Loaded L = load_inputs(cfg);
  const fs::path dir = output_dir_for(cfg);
  Manifest manifest = start_run(cfg, L, dir, "grid-search");
  write_file_atomic(dir / "train.log", "");

  std::vector<double> lrs = cfg.grid_learning_rates;
  std::vector<int> batches = cfg.grid_batch_sizes;
  if (lrs.empty()) lrs.assign(kTargetLearningRates.begin(), kTargetLearningRates.end());
  if (batches.empty()) batches.assign(kTargetBatchSizes.begin(), kTargetBatchSizes.end());
  const auto grid = make_grid(cfg.optimizer, lrs, batches);

  std::vector<Trained> runs;
  const TrainHooks hooks = logging_hooks(dir / "train.log", manifest, log);
  auto train_fn = [&](const TrainingConfig& opt) {
    manifest.append(json{{"event", "grid_point"}, {"index", runs.size()}, {"optimizer", optimizer_json(opt)}});
    if (log) *log << fmt::format("grid point {}: lr={} batch_size={}\n", runs.size(), opt.learning_rate,
                                 opt.batch_size);
    runs.push_back(execute(L, cfg, opt, hooks));
    return runs.back().primary;
  };
  const GridResult g = grid_search(grid, train_fn, L.dev_x);
  manifest.append(json{{"event", "grid_result"}, {"best_index", g.best_index}, {"run_scores", g.run_scores}});
  return write_outputs(cfg, L, runs[g.best_index], g.config, dir, manifest);
}

// ---------------------------------------------------------------------------

namespace {

Vocabulary load_verified_vocab(const fs::path& path, const std::string& expected_sha) {
  const std::string sha = file_sha256(path);
  if (!expected_sha.empty() && sha != expected_sha) {
    throw DataError(fmt::format("vocabulary '{}' does not match the recorded digest", path.string()));
  }
  return Vocabulary::load(path);
}

template <typename T>
T field(const json& j, const char* key, const fs::path& where) {
  if (!j.contains(key)) throw DataError(fmt::format("{}: missing '{}'", where.string(), key));
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: bad '{}': {}", where.string(), key, e.what()));
  }
}

}  // namespace

Bundle load_bundle(const fs::path& path) {
  fs::path file = path;
  if (fs::is_directory(file)) file /= "bundle.json";
  const std::string text = read_file(file);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: not valid JSON: {}", file.string(), e.what()));
  }
  Bundle b;
  b.dir = file.parent_path();
  const std::string format = j.value("format", "");
  if (format == "lcp-checkpoint") {
    CheckpointRef ref;
    const Model model = parse_checkpoint(text, &ref);
    if (model.feat_enabled()) {
      throw ConfigError(fmt::format("{}: feature-enriched checkpoints must be used through their bundle",
                                    file.string()));
    }
    if (ref.vocab_path.empty()) throw DataError(fmt::format("{}: checkpoint has no vocabulary reference", file.string()));
    b.vocab = load_verified_vocab(b.dir / ref.vocab_path, ref.vocab_sha256);
    b.vocab_sha256 = ref.vocab_sha256;
    b.max_len = static_cast<std::size_t>(model.config().max_len);
    b.task = model.tasks()[0];
    b.checkpoint = file;
    return b;
  }
  if (format != "lcp-bundle") throw DataError(fmt::format("{}: neither a bundle nor a checkpoint", file.string()));
  b.subtask = parse_subtask(field<std::string>(j, "subtask", file));
  b.task = field<std::string>(j, "task", file);
  b.max_len = field<std::size_t>(j, "max_len", file);
  b.vocab_sha256 = field<std::string>(j, "vocab_sha256", file);
  b.vocab = load_verified_vocab(b.dir / field<std::string>(j, "vocab", file), b.vocab_sha256);
  if (j.contains("frequency_table")) {
    const fs::path table = field<std::string>(j, "frequency_table", file);
    if (file_sha256(table) != field<std::string>(j, "frequency_table_sha256", file)) {
      throw DataError(fmt::format("frequency table '{}' changed since training", table.string()));
    }
    b.frequencies = FrequencyTable::load(table);
    const json n = j.at("normalizer");
    b.normalizer = Normalizer{field<double>(n, "min", file), field<double>(n, "max", file)};
  }
  if (j.contains("routing")) {
    DomainRouting r;
    for (const auto& [k, v] : j["routing"].items()) r.variants[parse_domain(k)] = (b.dir / v.get<std::string>()).string();
    r.validate();
    b.routing = std::move(r);
  } else {
    b.checkpoint = b.dir / field<std::string>(j, "checkpoint", file);
  }
  return b;
}

PredictionSet predict_with_bundle(const Bundle& bundle, const Dataset& ds) {
  FeatureContext ctx;
  ctx.vocab = &bundle.vocab;
  ctx.max_len = bundle.max_len;
  if (bundle.frequencies) {
    ctx.frequencies = &*bundle.frequencies;
    ctx.normalizer = bundle.normalizer;
  }
  const ExampleSet examples = prepare(ds, ctx);

  std::map<std::string, std::pair<Model, std::size_t>> models;
  auto model_for = [&](const std::string& path) -> const std::pair<Model, std::size_t>& {
    auto it = models.find(path);
    if (it != models.end()) return it->second;
    CheckpointRef ref;
    Model m = load_checkpoint(path, &ref);
    if (!ref.vocab_sha256.empty() && ref.vocab_sha256 != bundle.vocab_sha256) {
      throw DataError(fmt::format("checkpoint '{}' was trained with a different vocabulary", path));
    }
    if (static_cast<std::size_t>(m.config().vocab_size) != bundle.vocab.size()) {
      throw DataError(fmt::format("checkpoint '{}' expects {} vocabulary entries, bundle has {}", path,
                                  m.config().vocab_size, bundle.vocab.size()));
    }
    if (m.feat_enabled() != bundle.frequencies.has_value()) {
      throw DataError(fmt::format("checkpoint '{}' and its bundle disagree on the frequency feature", path));
    }
    std::size_t task = 0;
    try {
      task = m.task_index(bundle.task);
    } catch (const std::out_of_range&) {
      throw DataError(fmt::format("checkpoint '{}' has no head '{}'", path, bundle.task));
    }
    return models.emplace(path, std::pair{std::move(m), task}).first->second;
  };

  PredictionSet out;
  for (std::size_t i = 0; i < examples.examples.size(); ++i) {
    const auto& ex = examples.examples[i];
    const std::string path =
        bundle.routing ? route_by_domain(*bundle.routing, ds.instances[i]) : bundle.checkpoint->string();
    const auto& [model, task] = model_for(path);
    out.add(ex.id, std::clamp(forward(model, task, ex.seq, ex.feat), 0.0, 1.0));
  }
  return out;
}

PredictionSet predict_member(const EnsembleMember& member, const Dataset& ds) {
  switch (member.kind) {
    case EnsembleMember::Kind::predictions:
      return predict_member_from_file(member, ds);
    case EnsembleMember::Kind::checkpoint:
      return predict_with_bundle(load_bundle(member.path), ds);
    case EnsembleMember::Kind::routed:
      break;
  }
  if (!member.routing) throw ConfigError(fmt::format("member '{}' has no routing", member.name));
  member.routing->validate();
  std::map<Domain, PredictionSet> parts;
  for (const auto& [domain, sub] : partition_by_domain(ds)) {
    if (sub.empty()) continue;
    parts[domain] = predict_with_bundle(load_bundle(member.routing->variants.at(domain)), sub);
  }
  PredictionSet out;
  for (const auto& inst : ds.instances) out.add(inst.id, parts.at(inst.domain).at(inst.id));
  return out;
}

}  // namespace lcp
