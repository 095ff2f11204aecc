#include "cli.hpp"

#include "etm/dataset.hpp"
#include "etm/errors.hpp"
#include "etm/evaluator.hpp"
#include "etm/experiment.hpp"
#include "etm/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>

namespace etm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Usage problems found after CLI11 parsing (bad values, missing inputs).
class UsageError : public Error {
public:
  using Error::Error;
};

using Emitters = std::vector<std::function<void(json&)>>;

// Registers --name bound to `var`; the emitter records the value only when
// the flag was given explicitly, so config-file values survive otherwise.
template <typename T>
CLI::Option* tracked(CLI::App* app, Emitters& em, const std::string& name, T& var,
                     const std::string& help) {
  CLI::Option* opt = app->add_option("--" + name, var, help)->capture_default_str();
  em.push_back([opt, &var, name](json& j) {
    if (opt->count() > 0) j[name] = var;
  });
  return opt;
}

fs::path require_dir(const std::string& dir) {
  fs::path p(dir);
  if (!fs::is_directory(p)) throw IoError("output directory '" + dir + "' does not exist");
  return p;
}

void validate_train(const TrainConfig& cfg) {
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

struct TrainFlags {
  int ns = 20, nq = 15, nc = 5, nr = 0, np = 3, nn = 5;
  int episodes = 10000, lr_period = 1000, warmup = 50, embed_dim = 128;
  int monitor_every = 500, monitor_episodes = 50;
  double margin = 0.3, lr = 1e-3, clip_norm = 0.0;
  std::string loss = "etm", unlabeled_mode = "none", hidden = "64,64";
  std::uint64_t seed = 0;

  void add(CLI::App* app, Emitters& em) {
    tracked(app, em, "ns", ns, "support samples per class");
    tracked(app, em, "nq", nq, "query samples per class");
    tracked(app, em, "nc", nc, "classes per episode");
    tracked(app, em, "nr", nr, "unlabeled samples per class slot, 0 = supervised");
    tracked(app, em, "unlabeled-mode", unlabeled_mode, "none | weak | full")
        ->check(CLI::IsMember({"none", "weak", "full"}));
    tracked(app, em, "margin", margin, "hinge margin z");
    tracked(app, em, "np", np, "farthest positives averaged");
    tracked(app, em, "nn", nn, "nearest negatives averaged");
    tracked(app, em, "episodes", episodes, "training episodes");
    tracked(app, em, "lr", lr, "initial Adam learning rate");
    tracked(app, em, "lr-period", lr_period, "episodes between lr halvings");
    tracked(app, em, "warmup", warmup, "supervised warm-up episodes");
    tracked(app, em, "loss", loss, "etm | proto")->check(CLI::IsMember({"etm", "proto", "prototypical"}));
    tracked(app, em, "hidden", hidden, "comma-separated hidden layer widths");
    tracked(app, em, "embed-dim", embed_dim, "embedding dimension M");
    tracked(app, em, "clip-norm", clip_norm, "global gradient-norm clip, 0 = off");
    tracked(app, em, "monitor-every", monitor_every, "episodes between validation checks, 0 = off");
    tracked(app, em, "monitor-episodes", monitor_episodes, "episodes per validation check");
    tracked(app, em, "seed", seed, "seed for initialization, sampling and splitting");
  }
};

// --- gen-data --------------------------------------------------------------

struct GenDataCmd {
  SyntheticSpec spec;
  std::string out_dir;

  void add(CLI::App& root, std::function<void()>& action) {
    CLI::App* app = root.add_subcommand("gen-data", "Generate a synthetic Gaussian-cluster dataset");
    app->add_option("--classes", spec.num_classes, "number of classes")->capture_default_str();
    app->add_option("--per-class", spec.samples_per_class, "samples per class")->capture_default_str();
    app->add_option("--dim", spec.feature_dim, "feature dimension")->capture_default_str();
    app->add_option("--sigma", spec.noise_sigma, "within-class standard deviation")->capture_default_str();
    app->add_option("--scale", spec.class_mean_scale, "scale of the class means")->capture_default_str();
    app->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    app->add_option("-o,--output", out_dir, "existing output directory")->required();
    app->callback([this, &action] { action = [this] { run(); }; });
  }

  void run() {
    try {
      spec.validate();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    const fs::path dir = require_dir(out_dir);
    const Dataset ds = generate_synthetic(spec);
    save_csv(ds, dir / "dataset.csv");
    json manifest = {{"source", "synthetic"},
                     {"synthetic", spec},
                     {"seed", spec.seed},
                     {"classes", ds.classes()},
                     {"num_samples", ds.size()},
                     {"feature_dim", ds.feature_dim()}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  }
};

// --- train -----------------------------------------------------------------

struct TrainCmd {
  TrainFlags flags;
  Emitters emitters;
  std::string config_path, data_path, out_dir, resume_path;
  double train_frac = 0.7, val_frac = 0.1, labeled_fraction = 1.0;
  std::uint64_t split_seed = 0;
  int checkpoint_every = 0;
  std::ostream* out = nullptr;

  void add(CLI::App& root, std::function<void()>& action, std::ostream& o) {
    out = &o;
    CLI::App* app = root.add_subcommand("train", "Train an embedding network on episodes");
    app->add_option("--config", config_path, "JSON file of flag values; flags override it");
    tracked(app, emitters, "data", data_path, "dataset CSV");
    tracked(app, emitters, "train-frac", train_frac, "fraction of classes used for training");
    tracked(app, emitters, "val-frac", val_frac, "fraction of classes used for validation");
    tracked(app, emitters, "labeled-fraction", labeled_fraction,
            "labeled share of each train class, e.g. 0.33 or 0.66");
    tracked(app, emitters, "split-seed", split_seed, "seed of the class split (default: --seed)");
    flags.add(app, emitters);
    app->add_option("--resume", resume_path, "continue from this checkpoint");
    app->add_option("--checkpoint-every", checkpoint_every, "also save checkpoint_<episode>.json every N episodes");
    app->add_option("-o,--output", out_dir, "existing output directory")->required();
    app->callback([this, &action] { action = [this] { run(); }; });
  }

  void run() {
    json opts = json::object();
    if (!config_path.empty()) {
      opts = read_json(config_path);
      if (!opts.is_object()) throw UsageError("config file must hold a JSON object");
    }
    json given = json::object();
    for (auto& emit : emitters) emit(given);
    opts.update(given);

    TrainConfig cfg;
    try {
      apply_train_options(opts, cfg);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    validate_train(cfg);
    const std::string data = opts.value("data", std::string());
    if (data.empty()) throw UsageError("--data is required (flag or config file)");
    const fs::path dir = require_dir(out_dir);

    const Dataset ds = load_csv(data);
    const std::uint64_t sseed = opts.value("split-seed", cfg.seed);
    const SplitSpec spec = split_classes(ds.classes(), opts.value("train-frac", train_frac),
                                         opts.value("val-frac", val_frac),
                                         opts.value("labeled-fraction", labeled_fraction), sseed);
    const SplitResult parts = split(ds, spec, sseed);

    json effective = train_options(cfg);
    effective["data"] = data;
    effective["train-frac"] = opts.value("train-frac", train_frac);
    effective["val-frac"] = opts.value("val-frac", val_frac);
    effective["labeled-fraction"] = spec.labeled_fraction;
    effective["split-seed"] = sseed;
    write_text(dir / "config.json", effective.dump(2) + "\n");
    write_text(dir / "split_manifest.json", split_manifest(spec, sseed, parts).dump(2) + "\n");

    Trainer trainer = resume_path.empty()
                          ? Trainer(parts.train_labeled, parts.train_unlabeled, cfg, &parts.val)
                          : Trainer::resume(parts.train_labeled, parts.train_unlabeled,
                                            read_json(resume_path), &parts.val);
    std::ofstream log(dir / "train_log.jsonl",
                      resume_path.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot write " + (dir / "train_log.jsonl").string());
    while (!trainer.done()) {
      const TrainLogEntry& e = trainer.step();
      log << to_json(e).dump() << '\n';
      if (checkpoint_every > 0 && trainer.episode() % checkpoint_every == 0) {
        write_text(dir / ("checkpoint_" + std::to_string(trainer.episode()) + ".json"),
                   trainer.checkpoint().dump() + "\n");
      }
      if (e.val_accuracy) {
        *out << "episode " << trainer.episode() << "  loss " << e.loss << "  val acc "
             << *e.val_accuracy << "\n";
      }
    }
    write_text(dir / "checkpoint.json", trainer.checkpoint().dump() + "\n");
    const auto& last = trainer.log();
    *out << "trained " << trainer.episode() << " episodes ("
         << to_string(cfg.loss_kind) << ")";
    if (!last.empty()) *out << ", final loss " << last.back().loss;
    *out << "\n";
  }
};

// --- eval ------------------------------------------------------------------

struct EvalCmd {
  std::string checkpoint_path, data_path, manifest_path, out_dir, rule = "auto";
  EvalConfig cfg;
  CLI::Option* np_opt = nullptr;
  std::ostream* out = nullptr;

  void add(CLI::App& root, std::function<void()>& action, std::ostream& o) {
    out = &o;
    CLI::App* app = root.add_subcommand("eval", "Evaluate a checkpoint on N-way K-shot episodes");
    app->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
    app->add_option("--data", data_path, "dataset CSV")->required();
    app->add_option("--manifest", manifest_path,
                    "split manifest; restricts evaluation to its test classes");
    app->add_option("--way", cfg.way, "classes per test episode")->capture_default_str();
    app->add_option("--shot", cfg.shot, "support samples per class")->capture_default_str();
    app->add_option("--episodes", cfg.episodes, "test episodes")->capture_default_str();
    app->add_option("--queries", cfg.queries_per_class, "queries per class")->capture_default_str();
    np_opt = app->add_option("--np", cfg.n_positive, "neighbours voting (default: training n_P)");
    app->add_option("--rule", rule, "auto | knn | proto")->check(CLI::IsMember({"auto", "knn", "proto"}))->capture_default_str();
    app->add_option("--seed", cfg.seed, "base seed; episode i uses seed + i")->capture_default_str();
    app->add_option("--threads", cfg.threads, "worker threads (affects wall time only)")->capture_default_str();
    app->add_option("-o,--output", out_dir, "existing output directory")->required();
    app->callback([this, &action] { action = [this] { run(); }; });
  }

  void run() {
    const fs::path dir = require_dir(out_dir);
    const json ck = read_json(checkpoint_path);
    EmbeddingNet net;
    TrainConfig tc;
    try {
      net = net_from_checkpoint(ck);
      tc = config_from_checkpoint(ck);
    } catch (const Error& e) {
      throw ConfigError("invalid checkpoint " + checkpoint_path + ": " + e.what());
    }
    if (np_opt->count() == 0) cfg.n_positive = tc.mining.n_positive;
    if (rule == "auto") {
      cfg.rule = tc.loss_kind == LossKind::prototypical ? InferenceRule::nearest_prototype
                                                        : InferenceRule::nearest_neighbors;
    } else {
      cfg.rule = inference_rule_from_string(rule);
    }
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }

    Dataset ds = load_csv(data_path);
    if (!manifest_path.empty()) {
      const SplitSpec spec = split_spec_from_manifest(read_json(manifest_path));
      ds = select_classes(ds, spec.test_classes);
    }
    const EvalReport report = evaluate(net, ds, cfg);
    const std::string stem =
        "eval_" + std::to_string(cfg.way) + "way_" + std::to_string(cfg.shot) + "shot";
    write_text(dir / (stem + ".json"), report_to_json(report).dump(2) + "\n");
    write_text(dir / (stem + "_episodes.csv"), report_episodes_csv(report));
    *out << cfg.way << "-way " << cfg.shot << "-shot over " << cfg.episodes
         << " episodes: mean accuracy " << std::fixed << std::setprecision(4) << report.mean
         << " +/- " << report.ci95 << " (" << (dir / (stem + ".json")).string() << ")\n";
  }
};

// --- run -------------------------------------------------------------------

struct RunCmd {
  std::string config_path, out_dir;
  std::ostream* out = nullptr;

  void add(CLI::App& root, std::function<void()>& action, std::ostream& o) {
    out = &o;
    CLI::App* app = root.add_subcommand("run", "Train and evaluate every variant of an experiment config");
    app->add_option("config,--config", config_path, "experiment JSON")->required();
    app->add_option("-o,--output", out_dir, "output directory (created if missing)")->required();
    app->callback([this, &action] { action = [this] { run(); }; });
  }

  void run() {
    const json raw = read_json(config_path);
    ExperimentConfig cfg;
    try {
      cfg = experiment_from_json(raw);
      for (const Variant& v : cfg.variants) {
        json opts = cfg.train;
        opts.update(v.options);
        TrainConfig tc;
        apply_train_options(opts, tc);
        tc.validate();
      }
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_text(dir / "config.json", raw.dump(2) + "\n");
    const auto rows = run_experiment(cfg, dir, out);
    *out << "\nvariant,seed,loss_kind,labeled_fraction,unlabeled_mode,way,shot,mean_acc,ci95\n";
    for (const auto& r : rows) {
      *out << r.variant << "," << r.seed << "," << r.loss_kind << "," << r.labeled_fraction << ","
           << r.unlabeled_mode << "," << r.way << "," << r.shot << "," << r.mean_acc << ","
           << r.ci95 << "\n";
    }
    *out << "summary written to " << (dir / "summary.json").string() << "\n";
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Episodic triplet mining for few-shot classification", "etm"};
  app.require_subcommand(1);
  std::function<void()> action;
  GenDataCmd gen;
  TrainCmd train_cmd;
  EvalCmd eval_cmd;
  RunCmd run_cmd;
  gen.add(app, action);
  train_cmd.add(app, action, out);
  eval_cmd.add(app, action, out);
  run_cmd.add(app, action, out);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (action) action();
    return kSuccess;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const TrainingError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace etm::cli
