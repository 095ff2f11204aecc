#include "etm/experiment.hpp"

#include "etm/errors.hpp"

#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace etm {

namespace {

std::vector<int> parse_int_list(const nlohmann::json& v) {
  if (v.is_array()) return v.get<std::vector<int>>();
  if (v.is_number_integer()) return {v.get<int>()};
  if (!v.is_string()) throw ConfigError("expected a list of integers");
  std::vector<int> out;
  std::stringstream ss(v.get<std::string>());
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("invalid integer '" + item + "' in list");
    }
  }
  return out;
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("option '") + key + "' has the wrong type");
  }
}

}  // namespace

void apply_train_options(const nlohmann::json& o, TrainConfig& cfg) {
  if (!o.is_object()) throw ConfigError("training options must be a JSON object");
  take(o, "ns", cfg.episode.n_support);
  take(o, "nq", cfg.episode.n_query);
  take(o, "nc", cfg.episode.n_classes);
  take(o, "nr", cfg.episode.n_unlabeled);
  if (o.contains("unlabeled-mode")) {
    cfg.episode.unlabeled_mode = unlabeled_mode_from_string(o.at("unlabeled-mode").get<std::string>());
  }
  take(o, "margin", cfg.mining.margin);
  take(o, "np", cfg.mining.n_positive);
  take(o, "nn", cfg.mining.n_negative);
  take(o, "episodes", cfg.episodes);
  take(o, "lr", cfg.lr0);
  take(o, "lr-period", cfg.lr_halving_period);
  take(o, "warmup", cfg.warmup_supervised_episodes);
  if (o.contains("loss")) cfg.loss_kind = loss_kind_from_string(o.at("loss").get<std::string>());
  if (o.contains("hidden")) cfg.hidden_dims = parse_int_list(o.at("hidden"));
  take(o, "embed-dim", cfg.embedding_dim);
  take(o, "clip-norm", cfg.clip_norm);
  take(o, "beta1", cfg.beta1);
  take(o, "beta2", cfg.beta2);
  take(o, "adam-eps", cfg.adam_eps);
  take(o, "monitor-every", cfg.monitor_every);
  take(o, "monitor-episodes", cfg.monitor_episodes);
  take(o, "seed", cfg.seed);
  take(o, "record-timing", cfg.record_timing);
}

nlohmann::json train_options(const TrainConfig& cfg) {
  return {{"ns", cfg.episode.n_support},
          {"nq", cfg.episode.n_query},
          {"nc", cfg.episode.n_classes},
          {"nr", cfg.episode.n_unlabeled},
          {"unlabeled-mode", to_string(cfg.episode.unlabeled_mode)},
          {"margin", cfg.mining.margin},
          {"np", cfg.mining.n_positive},
          {"nn", cfg.mining.n_negative},
          {"episodes", cfg.episodes},
          {"lr", cfg.lr0},
          {"lr-period", cfg.lr_halving_period},
          {"warmup", cfg.warmup_supervised_episodes},
          {"loss", to_string(cfg.loss_kind)},
          {"hidden", cfg.hidden_dims},
          {"embed-dim", cfg.embedding_dim},
          {"clip-norm", cfg.clip_norm},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"adam-eps", cfg.adam_eps},
          {"monitor-every", cfg.monitor_every},
          {"monitor-episodes", cfg.monitor_episodes},
          {"seed", cfg.seed}};
}

SplitSpec ClassSplit::resolve(const Dataset& ds, double labeled_fraction,
                              std::uint64_t seed) const {
  if (explicit_sets) {
    SplitSpec spec = *explicit_sets;
    spec.labeled_fraction = labeled_fraction;
    return spec;
  }
  const std::vector<ClassId> classes = ds.classes();
  if (!counts) return split_classes(classes, train_fraction, val_fraction, labeled_fraction, seed);

  const auto [n_train, n_val, n_test] = *counts;
  if (n_train < 0 || n_val < 0 || n_test < 0 ||
      static_cast<std::size_t>(n_train + n_val + n_test) > classes.size()) {
    throw ConfigError("split asks for " + std::to_string(n_train + n_val + n_test) +
                      " classes, dataset has " + std::to_string(classes.size()));
  }
  Rng rng(seed);
  const std::vector<ClassId> shuffled = sample_without_replacement(rng, classes, classes.size());
  SplitSpec spec;
  spec.labeled_fraction = labeled_fraction;
  for (int i = 0; i < n_train + n_val + n_test; ++i) {
    const ClassId c = shuffled[static_cast<std::size_t>(i)];
    if (i < n_train) {
      spec.train_classes.insert(c);
    } else if (i < n_train + n_val) {
      spec.val_classes.insert(c);
    } else {
      spec.test_classes.insert(c);
    }
  }
  return spec;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig cfg;
  try {
    const auto& data = j.at("dataset");
    if (data.contains("synthetic")) {
      cfg.data.synthetic = data.at("synthetic").get<SyntheticSpec>();
    } else if (data.contains("csv")) {
      cfg.data.csv = data.at("csv").get<std::string>();
    } else {
      throw ConfigError("dataset needs a 'synthetic' or 'csv' entry");
    }

    if (j.contains("split")) {
      const auto& s = j.at("split");
      if (s.contains("train_classes") && s.at("train_classes").is_array()) {
        cfg.split.explicit_sets = s.get<SplitSpec>();
      } else if (s.contains("train_classes")) {
        cfg.split.counts = std::array<int, 3>{s.at("train_classes").get<int>(),
                                              s.value("val_classes", 0),
                                              s.value("test_classes", 0)};
      } else {
        cfg.split.train_fraction = s.value("train_fraction", cfg.split.train_fraction);
        cfg.split.val_fraction = s.value("val_fraction", cfg.split.val_fraction);
      }
      cfg.labeled_fraction = s.value("labeled_fraction", cfg.labeled_fraction);
    }
    if (j.contains("train")) cfg.train = j.at("train");
    if (j.contains("variants")) {
      for (const auto& v : j.at("variants")) {
        Variant var;
        var.options = v;
        var.name = v.value("name", "variant" + std::to_string(cfg.variants.size()));
        cfg.variants.push_back(std::move(var));
      }
    }
    if (cfg.variants.empty()) cfg.variants.push_back({"default", nlohmann::json::object()});
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      if (e.contains("configs")) {
        cfg.evals.clear();
        for (const auto& c : e.at("configs")) {
          cfg.evals.push_back({c.at("way").get<int>(), c.at("shot").get<int>()});
        }
      }
      cfg.eval_episodes = e.value("episodes", cfg.eval_episodes);
      cfg.eval_queries = e.value("queries", cfg.eval_queries);
      cfg.eval_threads = e.value("threads", cfg.eval_threads);
    }
    if (j.contains("seeds")) {
      cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else if (j.contains("seed")) {
      cfg.seeds = {j.at("seed").get<std::uint64_t>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
  if (cfg.seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (cfg.evals.empty()) throw ConfigError("experiment needs at least one eval configuration");
  return cfg;
}

nlohmann::json to_json(const SummaryRow& r) {
  return {{"variant", r.variant},
          {"seed", r.seed},
          {"loss_kind", r.loss_kind},
          {"labeled_fraction", r.labeled_fraction},
          {"unlabeled_mode", r.unlabeled_mode},
          {"way", r.way},
          {"shot", r.shot},
          {"mean_acc", r.mean_acc},
          {"ci95", r.ci95}};
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out =
      "variant,seed,loss_kind,labeled_fraction,unlabeled_mode,way,shot,mean_acc,ci95\n";
  for (const auto& r : rows) {
    out += r.variant + "," + std::to_string(r.seed) + "," + r.loss_kind + "," +
           nlohmann::json(r.labeled_fraction).dump() + "," + r.unlabeled_mode + "," +
           std::to_string(r.way) + "," + std::to_string(r.shot) + "," +
           nlohmann::json(r.mean_acc).dump() + "," + nlohmann::json(r.ci95).dump() + "\n";
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Dataset load_experiment_data(const DataSource& source, std::uint64_t data_seed) {
  if (source.synthetic) {
    SyntheticSpec spec = *source.synthetic;
    spec.seed = data_seed;
    return generate_synthetic(spec);
  }
  return load_csv(source.csv);
}

std::vector<SummaryRow> run_experiment(const ExperimentConfig& cfg,
                                       const std::optional<std::filesystem::path>& out_dir,
                                       std::ostream* progress) {
  std::vector<SummaryRow> rows;
  for (std::uint64_t seed : cfg.seeds) {
    const StageSeeds seeds = StageSeeds::from(seed);
    const Dataset ds = load_experiment_data(cfg.data, seeds.data);
    for (const Variant& variant : cfg.variants) {
      nlohmann::json opts = cfg.train;
      opts.update(variant.options);
      TrainConfig tc;
      apply_train_options(opts, tc);
      tc.seed = seeds.train;
      const double labeled_fraction = opts.value("labeled-fraction", cfg.labeled_fraction);

      const SplitSpec spec = cfg.split.resolve(ds, labeled_fraction, seeds.split);
      const SplitResult parts = split(ds, spec, seeds.split);
      if (progress) {
        *progress << "[" << variant.name << " seed " << seed << "] training "
                  << tc.episodes << " episodes (" << to_string(tc.loss_kind) << ")\n";
      }
      Trainer trainer(parts.train_labeled, parts.train_unlabeled, tc, &parts.val);
      trainer.run_to_end();

      std::optional<std::filesystem::path> run_dir;
      if (out_dir) {
        run_dir = *out_dir / variant.name / ("seed" + std::to_string(seed));
        std::filesystem::create_directories(*run_dir);
        write_text(*run_dir / "split_manifest.json",
                   split_manifest(spec, seeds.split, parts).dump(2) + "\n");
        write_text(*run_dir / "checkpoint.json", trainer.checkpoint().dump() + "\n");
        write_text(*run_dir / "train_log.jsonl", log_to_jsonl(trainer.log()));
      }

      for (const EvalShape& shape : cfg.evals) {
        EvalConfig ec;
        ec.way = shape.way;
        ec.shot = shape.shot;
        ec.queries_per_class = cfg.eval_queries;
        ec.episodes = cfg.eval_episodes;
        ec.n_positive = tc.mining.n_positive;
        ec.seed = seeds.eval;
        ec.threads = cfg.eval_threads;
        ec.rule = tc.loss_kind == LossKind::prototypical ? InferenceRule::nearest_prototype
                                                         : InferenceRule::nearest_neighbors;
        const EvalReport report = evaluate(trainer.net(), parts.test, ec);
        SummaryRow row{variant.name,
                       seed,
                       to_string(tc.loss_kind),
                       labeled_fraction,
                       tc.episode.semi_supervised() ? to_string(tc.episode.unlabeled_mode) : "none",
                       shape.way,
                       shape.shot,
                       report.mean,
                       report.ci95};
        if (progress) {
          *progress << "[" << variant.name << " seed " << seed << "] " << shape.way << "-way "
                    << shape.shot << "-shot: " << report.mean << " +/- " << report.ci95 << "\n";
        }
        if (run_dir) {
          const std::string stem =
              "eval_" + std::to_string(shape.way) + "way_" + std::to_string(shape.shot) + "shot";
          write_text(*run_dir / (stem + ".json"), report_to_json(report).dump(2) + "\n");
          write_text(*run_dir / (stem + "_episodes.csv"), report_episodes_csv(report));
        }
        rows.push_back(std::move(row));
      }
    }
  }

  if (out_dir) {
    std::map<std::tuple<std::string, int, int>, std::vector<const SummaryRow*>> groups;
    for (const auto& r : rows) groups[{r.variant, r.way, r.shot}].push_back(&r);
    nlohmann::json aggregate = nlohmann::json::array();
    for (const auto& [key, members] : groups) {
      double sum = 0.0;
      for (const auto* r : members) sum += r->mean_acc;
      const SummaryRow& first = *members.front();
      aggregate.push_back({{"variant", first.variant},
                           {"loss_kind", first.loss_kind},
                           {"labeled_fraction", first.labeled_fraction},
                           {"unlabeled_mode", first.unlabeled_mode},
                           {"way", first.way},
                           {"shot", first.shot},
                           {"mean_acc", sum / static_cast<double>(members.size())},
                           {"seeds", members.size()}});
    }
    nlohmann::json js_rows = nlohmann::json::array();
    for (const auto& r : rows) js_rows.push_back(to_json(r));
    write_text(*out_dir / "summary.json",
               nlohmann::json{{"rows", js_rows}, {"aggregate", aggregate}}.dump(2) + "\n");
    write_text(*out_dir / "summary.csv", summary_csv(rows));
  }
  return rows;
}

}  // namespace etm
