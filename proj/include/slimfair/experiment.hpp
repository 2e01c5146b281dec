#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "slimfair/allocator.hpp"
#include "slimfair/contribution.hpp"
#include "slimfair/fedcore.hpp"
#include "slimfair/metrics.hpp"
#include "slimfair/partition.hpp"

namespace slimfair {

using json = nlohmann::ordered_json;

enum class RunMode { PostTraining, TrainingTime, AllocateOnly };

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "idx"
  SyntheticSpec synthetic{5000, 5, 4, 0.1, 10, 1.0};
  double test_fraction = 0.2;
  std::string images;
  std::string labels;
  std::size_t max_samples = 0;  // idx only; 0 keeps everything
};

/// Everything a run needs. Loaded from a single JSON file; every field has a
/// default, so `{}` is a valid post-training config.
struct ExperimentConfig {
  RunMode mode = RunMode::PostTraining;
  std::size_t clients = 5;
  std::size_t rounds = 100;
  std::size_t local_iters = 5;
  double lr = 0.01;
  std::vector<double> lr_milestones{0.5, 0.75};
  double lr_decay = 0.1;
  double momentum = 0.9;
  std::size_t batch_size = kDefaultBatchSize;
  double gamma = 0.5;
  double epsilon = kDefaultEpsilon;
  double p_min = 0.25;
  double bucket_step = 0.05;
  PartitionSpec partition{PartitionKind::Homogeneous, 5, 0.5, 0.15, 1, 0};
  DataConfig data;
  std::vector<std::size_t> hidden{32, 32};
  bool switchable_norm = false;
  std::string contribution = "standalone";  // post-training: standalone | participation_rate
  std::string ca_method = "cgsv";            // training-time: cgsv | shapfed
  std::size_t shapfed_layers = 1;
  StandaloneOptions standalone{150, 0.05, 0.9, kDefaultBatchSize};
  double anneal_k0 = 2.0;
  std::size_t anneal_steps = 0;
  std::vector<std::size_t> noisy_clients;
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  std::vector<double> inline_contributions;
  std::vector<double> inline_menu;
  std::vector<double> inline_menu_widths;
};

inline std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::PostTraining: return "post_training";
    case RunMode::TrainingTime: return "training_time";
    case RunMode::AllocateOnly: return "allocate_only";
  }
  return "post_training";
}

inline std::string to_string(PartitionKind k) {
  switch (k) {
    case PartitionKind::Homogeneous: return "homogeneous";
    case PartitionKind::Dirichlet: return "dirichlet";
    case PartitionKind::QuantitySkew: return "quantity_skew";
    case PartitionKind::LabelSkew: return "label_skew";
  }
  return "homogeneous";
}

namespace detail {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Parses a config document. Structural problems (wrong types, unknown
/// enumerators) throw ConfigError; value constraints are left to validate().
inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    if (j.contains("mode")) {
      const auto m = j.at("mode").get<std::string>();
      if (m == "post_training") c.mode = RunMode::PostTraining;
      else if (m == "training_time") c.mode = RunMode::TrainingTime;
      else if (m == "allocate_only") c.mode = RunMode::AllocateOnly;
      else throw ConfigError("config: unknown mode '" + m + "'");
    }
    using detail::read_opt;
    read_opt(j, "clients", c.clients);
    read_opt(j, "rounds", c.rounds);
    read_opt(j, "local_iters", c.local_iters);
    read_opt(j, "lr", c.lr);
    read_opt(j, "lr_milestones", c.lr_milestones);
    read_opt(j, "lr_decay", c.lr_decay);
    read_opt(j, "momentum", c.momentum);
    read_opt(j, "batch_size", c.batch_size);
    read_opt(j, "gamma", c.gamma);
    read_opt(j, "epsilon", c.epsilon);
    read_opt(j, "p_min", c.p_min);
    read_opt(j, "bucket_step", c.bucket_step);
    read_opt(j, "hidden", c.hidden);
    read_opt(j, "switchable_norm", c.switchable_norm);
    read_opt(j, "contribution", c.contribution);
    read_opt(j, "ca_method", c.ca_method);
    read_opt(j, "shapfed_layers", c.shapfed_layers);
    read_opt(j, "noisy_clients", c.noisy_clients);
    read_opt(j, "seed", c.seed);
    read_opt(j, "output_dir", c.output_dir);
    read_opt(j, "contributions", c.inline_contributions);
    read_opt(j, "menu", c.inline_menu);
    read_opt(j, "menu_widths", c.inline_menu_widths);
    if (j.contains("partition")) {
      const auto& p = j.at("partition");
      std::string kind = "homogeneous";
      read_opt(p, "kind", kind);
      if (kind == "homogeneous") c.partition.kind = PartitionKind::Homogeneous;
      else if (kind == "dirichlet") c.partition.kind = PartitionKind::Dirichlet;
      else if (kind == "quantity_skew") c.partition.kind = PartitionKind::QuantitySkew;
      else if (kind == "label_skew") c.partition.kind = PartitionKind::LabelSkew;
      else throw ConfigError("config: unknown partition kind '" + kind + "'");
      read_opt(p, "alpha", c.partition.alpha);
      read_opt(p, "kappa", c.partition.kappa);
      read_opt(p, "m", c.partition.m);
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      read_opt(d, "source", c.data.source);
      read_opt(d, "samples", c.data.synthetic.samples);
      read_opt(d, "dim", c.data.synthetic.dim);
      read_opt(d, "classes", c.data.synthetic.classes);
      read_opt(d, "spread", c.data.synthetic.spread);
      read_opt(d, "modes_per_class", c.data.synthetic.modes_per_class);
      read_opt(d, "radius", c.data.synthetic.radius);
      read_opt(d, "test_fraction", c.data.test_fraction);
      read_opt(d, "images", c.data.images);
      read_opt(d, "labels", c.data.labels);
      read_opt(d, "max_samples", c.data.max_samples);
    }
    if (j.contains("standalone")) {
      const auto& s = j.at("standalone");
      read_opt(s, "iterations", c.standalone.iterations);
      read_opt(s, "lr", c.standalone.lr);
    }
    if (j.contains("anneal")) {
      const auto& a = j.at("anneal");
      read_opt(a, "k0", c.anneal_k0);
      read_opt(a, "steps", c.anneal_steps);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.partition.clients = c.clients;
  c.standalone.momentum = c.momentum;
  c.standalone.batch_size = c.batch_size;
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["clients"] = c.clients;
  j["rounds"] = c.rounds;
  j["local_iters"] = c.local_iters;
  j["lr"] = c.lr;
  j["lr_milestones"] = c.lr_milestones;
  j["lr_decay"] = c.lr_decay;
  j["momentum"] = c.momentum;
  j["batch_size"] = c.batch_size;
  j["gamma"] = c.gamma;
  j["epsilon"] = c.epsilon;
  j["p_min"] = c.p_min;
  j["bucket_step"] = c.bucket_step;
  j["partition"] = {{"kind", to_string(c.partition.kind)},
                    {"alpha", c.partition.alpha},
                    {"kappa", c.partition.kappa},
                    {"m", c.partition.m}};
  j["data"] = {{"source", c.data.source},
               {"samples", c.data.synthetic.samples},
               {"dim", c.data.synthetic.dim},
               {"classes", c.data.synthetic.classes},
               {"spread", c.data.synthetic.spread},
               {"modes_per_class", c.data.synthetic.modes_per_class},
               {"radius", c.data.synthetic.radius},
               {"test_fraction", c.data.test_fraction},
               {"images", c.data.images},
               {"labels", c.data.labels},
               {"max_samples", c.data.max_samples}};
  j["hidden"] = c.hidden;
  j["switchable_norm"] = c.switchable_norm;
  j["contribution"] = c.contribution;
  j["ca_method"] = c.ca_method;
  j["shapfed_layers"] = c.shapfed_layers;
  j["standalone"] = {{"iterations", c.standalone.iterations}, {"lr", c.standalone.lr}};
  j["anneal"] = {{"k0", c.anneal_k0}, {"steps", c.anneal_steps}};
  j["noisy_clients"] = c.noisy_clients;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  if (c.mode == RunMode::AllocateOnly) {
    j["contributions"] = c.inline_contributions;
    j["menu"] = c.inline_menu;
    j["menu_widths"] = c.inline_menu_widths;
  }
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return config_from_json(j);
}

/// Every violated precondition, without running anything.
inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> d;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) d.push_back(msg);
  };
  need(c.p_min > 0.0 && c.p_min <= 1.0, "p_min must lie in (0, 1]");
  need(c.bucket_step > 0.0 && c.bucket_step <= 1.0, "bucket_step must lie in (0, 1]");
  need(c.epsilon > 0.0, "epsilon must be positive");
  need(c.anneal_k0 > 1.0, "anneal.k0 must exceed 1");

  if (c.mode == RunMode::AllocateOnly) {
    need(!c.inline_contributions.empty(), "allocate_only needs a nonempty 'contributions' list");
    need(!c.inline_menu.empty(), "allocate_only needs a nonempty 'menu' list");
    need(c.inline_menu_widths.empty() || c.inline_menu_widths.size() == c.inline_menu.size(),
         "menu_widths must match menu length");
    return d;
  }

  need(c.clients >= 1, "clients must be >= 1");
  need(c.rounds >= 1, "rounds must be >= 1");
  need(c.lr > 0.0, "lr must be positive");
  need(c.lr_decay > 0.0, "lr_decay must be positive");
  need(c.momentum >= 0.0 && c.momentum < 1.0, "momentum must lie in [0, 1)");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.gamma >= 0.0 && c.gamma <= 1.0, "gamma must lie in [0, 1]");
  need(c.standalone.lr > 0.0, "standalone.lr must be positive");
  for (auto h : c.hidden) need(h >= 1, "hidden layer sizes must be >= 1");
  for (auto i : c.noisy_clients) need(i < c.clients, "noisy client index out of range");
  need(c.contribution == "standalone" || c.contribution == "participation_rate",
       "contribution must be 'standalone' or 'participation_rate'");
  need(c.ca_method == "cgsv" || c.ca_method == "shapfed", "ca_method must be 'cgsv' or 'shapfed'");
  if (c.ca_method == "shapfed") {
    need(c.shapfed_layers >= 1 && c.shapfed_layers <= c.hidden.size() + 1, "shapfed_layers exceeds layer count");
  }
  for (const auto& msg : partition_diagnostics(c.partition)) d.push_back(msg);

  if (c.data.source == "synthetic") {
    const auto& s = c.data.synthetic;
    need(s.classes >= 2, "data.classes must be >= 2");
    need(s.dim >= 1, "data.dim must be >= 1");
    need(s.samples >= s.classes, "data.samples must be >= data.classes");
    need(s.spread >= 0.0, "data.spread must be >= 0");
    need(s.modes_per_class >= 1, "data.modes_per_class must be >= 1");
    if (c.partition.kind == PartitionKind::LabelSkew) need(c.partition.m <= s.classes, "label skew m exceeds classes");
  } else if (c.data.source == "idx") {
    need(!c.data.images.empty() && !c.data.labels.empty(), "idx source needs data.images and data.labels");
  } else {
    d.push_back("data.source must be 'synthetic' or 'idx'");
  }
  need(c.data.test_fraction > 0.0 && c.data.test_fraction < 1.0, "data.test_fraction must lie in (0, 1)");
  return d;
}

inline json record_to_json(const RoundRecord& r) {
  json j;
  j["round"] = r.round;
  j["seed"] = r.seed;
  j["loss"] = r.loss;
  j["buckets"] = r.buckets;
  j["accuracy"] = r.accuracy;
  j["contributions"] = r.contributions;
  j["widths"] = r.widths;
  j["participants"] = r.participants;
  return j;
}

inline json report_to_json(const MetricReport& r, bool feasibility_warning) {
  json j;
  j["pearson"] = r.pearson ? json(*r.pearson) : json(nullptr);
  j["mcg"] = r.mcg;
  j["cgs"] = r.cgs;
  j["gain_spread"] = r.gain_spread;
  j["ir_rate"] = r.ir_rate;
  j["gains"] = r.gains;
  j["feasibility_warning"] = feasibility_warning;
  return j;
}

/// In-memory result of a pipeline run; run() also persists it.
struct RunResult {
  std::vector<RoundRecord> records;
  std::vector<AllocationRow> allocation;
  std::optional<MetricReport> report;
  std::vector<double> profile;  // final per-bucket accuracy
  bool feasibility_warning = false;
};

namespace detail {

struct Prepared {
  Dataset train;
  Dataset test;
  std::vector<ClientState> clients;
  SlimmableModel init;
};

inline Prepared prepare(const ExperimentConfig& c) {
  Prepared p;
  Dataset full;
  if (c.data.source == "idx") {
    full = load_idx(c.data.images, c.data.labels);
    if (c.data.max_samples > 0 && c.data.max_samples < full.size()) {
      std::vector<std::size_t> keep(c.data.max_samples);
      for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
      full = subset(full, keep);
    }
  } else {
    full = make_synthetic(c.data.synthetic, c.seed);
  }
  auto tt = train_test_split(full, c.data.test_fraction, c.seed);
  p.train = std::move(tt.train);
  p.test = std::move(tt.test);

  PartitionSpec spec = c.partition;
  spec.clients = c.clients;
  spec.seed = c.seed;
  auto shards = split(p.train, spec);
  p.clients = make_clients(p.train, shards, c.seed);
  for (auto i : c.noisy_clients) {
    Rng noise = derive_rng(c.seed, Stream::Noise, i);
    std::uniform_int_distribution<int> lab(0, static_cast<int>(p.train.classes) - 1);
    for (auto& y : p.clients[i].shard.labels) y = lab(noise);
  }

  Architecture arch;
  arch.input_dim = p.train.features.cols;
  arch.hidden = c.hidden;
  arch.classes = p.train.classes;
  arch.switchable_norm = c.switchable_norm;
  Rng init_rng = derive_rng(c.seed, Stream::Init);
  p.init = SlimmableModel(arch, WidthGrid(c.p_min, c.bucket_step), init_rng);
  return p;
}

inline FedOptions fed_options(const ExperimentConfig& c) {
  FedOptions o;
  o.rounds = c.rounds;
  o.local.iterations = c.local_iters;
  o.local.lr = c.lr;
  o.local.momentum = c.momentum;
  o.local.batch_size = c.batch_size;
  o.lr_milestones = c.lr_milestones;
  o.lr_decay = c.lr_decay;
  o.seed = c.seed;
  return o;
}

inline std::vector<double> standalone_all(const ExperimentConfig& c, const Prepared& p) {
  std::vector<double> acc;
  Rng init_rng = derive_rng(c.seed, Stream::Init, 1);
  SlimmableModel init(p.init.architecture(), p.init.grid(), init_rng);
  for (const auto& client : p.clients) {
    Rng rng = derive_rng(c.seed, Stream::Standalone, client.id);
    acc.push_back(standalone_accuracy(client.shard, p.test, init, c.standalone, rng));
  }
  return acc;
}

inline AnnealSchedule schedule(const ExperimentConfig& c) { return {c.anneal_k0, c.anneal_steps, c.seed}; }

inline RunResult allocate_only(const ExperimentConfig& c) {
  RunResult r;
  bool warn = false;
  auto idx = allocate_unsorted(c.inline_contributions, c.inline_menu, c.epsilon, schedule(c), &warn);
  r.feasibility_warning = warn;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double a = c.inline_menu[idx[i]];
    const double w = c.inline_menu_widths.empty() ? 1.0 : c.inline_menu_widths[idx[i]];
    r.allocation.push_back({i, c.inline_contributions[i], a, w, a - c.inline_contributions[i]});
  }
  return r;
}

inline RunResult post_training(const ExperimentConfig& c, const RecordSink& sink) {
  auto p = prepare(c);
  RunResult r;
  std::vector<double> contrib;
  if (c.contribution == "participation_rate") {
    contrib = participation_rate_contribution(c.clients);
    for (std::size_t i = 0; i < p.clients.size(); ++i) p.clients[i].participation = contrib[i];
  } else {
    contrib = standalone_all(c, p);
  }
  for (std::size_t i = 0; i < p.clients.size(); ++i) p.clients[i].contribution = contrib[i];

  auto fed = run_alg1(p.clients, p.init, fed_options(c), p.test, sink);
  r.records = std::move(fed.records);
  r.profile = bucket_profile(fed.model, p.test);

  if (c.contribution == "participation_rate") {
    // Rates are not on the accuracy scale, so allocate widths directly;
    // IR and gain are measured in width units against rate / max rate.
    auto widths = width_as_reward(contrib, fed.model.grid(), c.epsilon, schedule(c));
    const double top = *std::max_element(contrib.begin(), contrib.end());
    std::vector<double> normalized, acc;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      normalized.push_back(contrib[i] / top);
      acc.push_back(r.profile[fed.model.grid().nearest_index(widths[i])]);
      r.allocation.push_back({i, contrib[i], acc[i], widths[i], widths[i] - normalized[i]});
    }
    r.report = make_report(widths, normalized);
    r.report->pearson = pearson(acc, contrib);
    return r;
  }

  WidthProfile profile{fed.model.grid().buckets(), r.profile};
  auto menu = menu_from_profile(profile);
  bool warn = false;
  auto idx = allocate_unsorted(contrib, menu.accuracies, c.epsilon, schedule(c), &warn);
  r.feasibility_warning = warn;
  std::vector<double> targets(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) targets[i] = menu.accuracies[idx[i]];
  auto widths = accuracy_to_width(targets, profile);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    r.allocation.push_back({i, contrib[i], targets[i], widths[i], targets[i] - contrib[i]});
  }
  r.report = make_report(targets, contrib);
  return r;
}

inline RunResult training_time(const ExperimentConfig& c, const RecordSink& sink) {
  auto p = prepare(c);
  RunResult r;
  auto standalone = standalone_all(c, p);
  Alg2Options alg;
  alg.gamma = c.gamma;
  alg.assess = c.ca_method == "shapfed" ? shapfed_method(c.shapfed_layers) : cgsv_method();
  auto res = run_alg2(p.clients, p.init, fed_options(c), alg, p.test, sink);
  r.records = std::move(res.fed.records);
  r.profile = bucket_profile(res.fed.model, p.test);
  std::vector<double> final_acc;
  for (std::size_t i = 0; i < p.clients.size(); ++i) {
    const double a = evaluate(res.fed.model, p.test, res.widths[i]).accuracy;
    final_acc.push_back(a);
    r.allocation.push_back({i, standalone[i], a, res.widths[i], a - standalone[i]});
  }
  r.report = make_report(final_acc, standalone);
  return r;
}

}  // namespace detail

/// Runs the configured pipeline in memory. Throws ConfigError/SpecError on
/// invalid input and FeasibilityError when no IR allocation exists.
inline RunResult execute(const ExperimentConfig& c, const RecordSink& sink = {}) {
  auto diags = validate(c);
  if (!diags.empty()) throw ConfigError(diags.front());
  switch (c.mode) {
    case RunMode::AllocateOnly: return detail::allocate_only(c);
    case RunMode::TrainingTime: return detail::training_time(c, sink);
    case RunMode::PostTraining: break;
  }
  return detail::post_training(c, sink);
}

/// Runs and writes the run directory: config.json, rounds.jsonl (training
/// modes), allocation.csv and metrics.json (training modes).
inline RunResult run(const ExperimentConfig& c) {
  namespace fs = std::filesystem;
  auto diags = validate(c);
  if (!diags.empty()) throw ConfigError(diags.front());
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.json");
    cfg << config_to_json(c).dump(2) << '\n';
  }
  std::optional<std::ofstream> jsonl;
  if (c.mode != RunMode::AllocateOnly) jsonl.emplace(dir / "rounds.jsonl");
  RecordSink sink = [&](const RoundRecord& rec) {
    if (jsonl) *jsonl << record_to_json(rec).dump() << '\n';
  };
  auto result = execute(c, sink);
  {
    std::ofstream csv(dir / "allocation.csv");
    write_allocation_csv(csv, result.allocation);
  }
  if (result.report) {
    std::ofstream m(dir / "metrics.json");
    m << report_to_json(*result.report, result.feasibility_warning).dump(2) << '\n';
  }
  return result;
}

}  // namespace slimfair
