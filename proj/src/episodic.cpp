#include "etm/episodic.hpp"

#include "etm/errors.hpp"

namespace etm {

std::string to_string(UnlabeledMode mode) {
  switch (mode) {
    case UnlabeledMode::none: return "none";
    case UnlabeledMode::weakly_labeled: return "weak";
    case UnlabeledMode::completely_unlabeled: return "full";
  }
  return "none";
}

UnlabeledMode unlabeled_mode_from_string(const std::string& name) {
  if (name == "none") return UnlabeledMode::none;
  if (name == "weak" || name == "weakly_labeled") return UnlabeledMode::weakly_labeled;
  if (name == "full" || name == "completely_unlabeled") {
    return UnlabeledMode::completely_unlabeled;
  }
  throw ConfigError("unknown unlabeled mode '" + name + "' (expected none, weak or full)");
}

void EpisodeConfig::validate() const {
  if (n_classes < 2) throw ConfigError("an episode needs at least 2 classes");
  if (n_support < 1) throw ConfigError("n_support must be >= 1");
  if (n_query < 1) throw ConfigError("n_query must be >= 1");
  if (n_unlabeled < 0) throw ConfigError("n_unlabeled must be >= 0");
}

void to_json(nlohmann::json& j, const EpisodeConfig& c) {
  j = {{"n_classes", c.n_classes},
       {"n_support", c.n_support},
       {"n_query", c.n_query},
       {"n_unlabeled", c.n_unlabeled},
       {"unlabeled_mode", to_string(c.unlabeled_mode)}};
}

void from_json(const nlohmann::json& j, EpisodeConfig& c) {
  c.n_classes = j.value("n_classes", c.n_classes);
  c.n_support = j.value("n_support", c.n_support);
  c.n_query = j.value("n_query", c.n_query);
  c.n_unlabeled = j.value("n_unlabeled", c.n_unlabeled);
  c.unlabeled_mode =
      unlabeled_mode_from_string(j.value("unlabeled_mode", to_string(c.unlabeled_mode)));
}

std::vector<SampleId> ids_of(const std::vector<LabeledRef>& refs) {
  std::vector<SampleId> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back(r.id);
  return out;
}

std::vector<ClassId> labels_of(const std::vector<LabeledRef>& refs) {
  std::vector<ClassId> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back(r.cls);
  return out;
}

void check_episode_feasible(const Dataset& labeled, const EpisodeConfig& cfg) {
  cfg.validate();
  const auto& index = labeled.class_index();
  if (index.size() < static_cast<std::size_t>(cfg.n_classes)) {
    throw SamplingError("dataset has " + std::to_string(index.size()) +
                        " classes, episode needs " + std::to_string(cfg.n_classes));
  }
  const auto needed = static_cast<std::size_t>(cfg.n_support + cfg.n_query);
  for (const auto& [cls, ids] : index) {
    if (ids.size() < needed) {
      throw SamplingError("class " + std::to_string(cls) + " has " +
                          std::to_string(ids.size()) + " samples, episode needs " +
                          std::to_string(needed));
    }
  }
}

Episode sample_episode(const Dataset& labeled, const Dataset& unlabeled,
                       const EpisodeConfig& cfg, Rng& rng) {
  check_episode_feasible(labeled, cfg);
  const auto n_s = static_cast<std::size_t>(cfg.n_support);
  const auto n_q = static_cast<std::size_t>(cfg.n_query);

  Episode ep;
  ep.classes = sample_without_replacement(rng, labeled.classes(),
                                          static_cast<std::size_t>(cfg.n_classes));
  for (ClassId cls : ep.classes) {
    const auto& ids = labeled.class_index().at(cls);
    // The first N_S draws form S_k, the next N_Q come from the remainder.
    std::vector<SampleId> drawn = sample_without_replacement(rng, ids, n_s + n_q);
    for (std::size_t i = 0; i < drawn.size(); ++i) {
      (i < n_s ? ep.support : ep.query).push_back({drawn[i], cls});
    }
  }

  if (!cfg.semi_supervised()) return ep;
  if (unlabeled.empty()) throw SamplingError("semi-supervised episode with an empty unlabeled pool");
  const auto n_r = static_cast<std::size_t>(cfg.n_unlabeled);
  if (cfg.unlabeled_mode == UnlabeledMode::weakly_labeled) {
    for (ClassId cls : ep.classes) {
      std::vector<SampleId> pool = unlabeled.unlabeled_of_class(cls);
      if (pool.size() < n_r) {
        throw SamplingError("class " + std::to_string(cls) + " has " +
                            std::to_string(pool.size()) + " unlabeled samples, episode needs " +
                            std::to_string(n_r));
      }
      for (SampleId id : sample_without_replacement(rng, pool, n_r)) ep.unlabeled.push_back(id);
    }
  } else {
    std::vector<SampleId> pool;
    pool.reserve(unlabeled.size());
    for (const Sample& s : unlabeled.samples()) {
      if (!s.label) pool.push_back(s.id);
    }
    const std::size_t want = n_r * ep.classes.size();
    if (pool.size() < want) {
      throw SamplingError("unlabeled pool has " + std::to_string(pool.size()) +
                          " samples, episode needs " + std::to_string(want));
    }
    ep.unlabeled = sample_without_replacement(rng, pool, want);
  }
  return ep;
}

}  // namespace etm
