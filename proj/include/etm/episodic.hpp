#pragma once

#include "etm/dataset.hpp"
#include "etm/rng.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace etm {

enum class UnlabeledMode { none, weakly_labeled, completely_unlabeled };

std::string to_string(UnlabeledMode mode);
UnlabeledMode unlabeled_mode_from_string(const std::string& name);

struct EpisodeConfig {
  int n_classes = 5;     // classes per episode
  int n_support = 20;    // support samples per class
  int n_query = 15;      // query samples per class
  int n_unlabeled = 0;   // unlabeled draws per class slot
  UnlabeledMode unlabeled_mode = UnlabeledMode::none;

  void validate() const;
  bool semi_supervised() const {
    return n_unlabeled > 0 && unlabeled_mode != UnlabeledMode::none;
  }
};

void to_json(nlohmann::json& j, const EpisodeConfig& c);
void from_json(const nlohmann::json& j, EpisodeConfig& c);

struct LabeledRef {
  SampleId id = 0;
  ClassId cls = 0;

  friend bool operator==(const LabeledRef&, const LabeledRef&) = default;
};

struct Episode {
  std::vector<ClassId> classes;       // V, in draw order
  std::vector<LabeledRef> support;    // grouped by class, in V order
  std::vector<LabeledRef> query;      // grouped by class, in V order
  std::vector<SampleId> unlabeled;    // R; true labels stay hidden

  friend bool operator==(const Episode&, const Episode&) = default;
};

std::vector<SampleId> ids_of(const std::vector<LabeledRef>& refs);
std::vector<ClassId> labels_of(const std::vector<LabeledRef>& refs);

/// Draws N_c classes, then per class N_S support and N_Q query samples without
/// replacement, and (when semi-supervised) the unlabeled set R. Consumes no
/// randomness for R when the config is supervised.
Episode sample_episode(const Dataset& labeled, const Dataset& unlabeled,
                       const EpisodeConfig& cfg, Rng& rng);

/// Throws SamplingError if `labeled` cannot supply episodes of this shape.
void check_episode_feasible(const Dataset& labeled, const EpisodeConfig& cfg);

}  // namespace etm
