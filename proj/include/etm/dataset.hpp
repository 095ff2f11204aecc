#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace etm {

using SampleId = std::int64_t;
using ClassId = int;

struct Sample {
  SampleId id = 0;
  Eigen::VectorXd features;
  std::optional<ClassId> label;  // absent = unlabeled
};

/// An immutable collection of samples sharing one feature dimension.
///
/// Unlabeled samples may carry a hidden true label in a side table. It is
/// never reachable through Sample::label; only the episodic sampler (weakly
/// labeled regime) and diagnostics consult it.
class Dataset {
public:
  Dataset() = default;

  /// Validates ids (unique, non-negative), labels (>= 1), feature dimension and
  /// finiteness. `hidden_labels` keys must name unlabeled samples.
  Dataset(std::vector<Sample> samples,
          std::map<SampleId, ClassId> hidden_labels = {},
          std::optional<int> feature_dim = std::nullopt);

  const std::vector<Sample>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  int feature_dim() const noexcept { return feature_dim_; }

  /// class id -> ids of the labeled samples of that class, in dataset order.
  const std::map<ClassId, std::vector<SampleId>>& class_index() const noexcept {
    return class_index_;
  }
  std::vector<ClassId> classes() const;

  bool contains(SampleId id) const { return row_of_.count(id) != 0; }
  const Sample& sample(SampleId id) const;
  std::size_t row_of(SampleId id) const;

  std::optional<ClassId> hidden_label(SampleId id) const;
  const std::map<SampleId, ClassId>& hidden_labels() const noexcept {
    return hidden_labels_;
  }
  /// Ids of unlabeled samples whose hidden label is `cls`, in dataset order.
  std::vector<SampleId> unlabeled_of_class(ClassId cls) const;

  /// Stacks the features of `ids` as rows.
  Eigen::MatrixXd gather(const std::vector<SampleId>& ids) const;

  friend bool operator==(const Dataset& a, const Dataset& b);

private:
  std::vector<Sample> samples_;
  std::map<ClassId, std::vector<SampleId>> class_index_;
  std::unordered_map<SampleId, std::size_t> row_of_;
  std::map<SampleId, ClassId> hidden_labels_;
  int feature_dim_ = 0;
};

struct SyntheticSpec {
  int num_classes = 20;
  int samples_per_class = 50;
  int feature_dim = 32;
  double class_mean_scale = 5.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

/// Gaussian class clusters: means ~ class_mean_scale * N(0, I), samples ~
/// N(mean, noise_sigma^2 I). Labels are 1..num_classes; ids are 0..n-1.
Dataset generate_synthetic(const SyntheticSpec& spec);

struct SplitSpec {
  std::set<ClassId> train_classes;
  std::set<ClassId> val_classes;
  std::set<ClassId> test_classes;
  double labeled_fraction = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SplitSpec& s);
void from_json(const nlohmann::json& j, SplitSpec& s);

/// Random class-level partition by fractions. Each non-zero fraction gets at
/// least one class when possible; the remainder after train and val is test.
SplitSpec split_classes(const std::vector<ClassId>& classes, double train_fraction,
                        double val_fraction, double labeled_fraction,
                        std::uint64_t seed);

struct SplitResult {
  Dataset train_labeled;
  Dataset train_unlabeled;  // labels stripped, kept as hidden labels
  Dataset val;
  Dataset test;
};

/// ceil(labeled_fraction * n) samples of every train class go to
/// train_labeled; the rest go to train_unlabeled.
SplitResult split(const Dataset& ds, const SplitSpec& spec, std::uint64_t seed);

/// Sidecar describing how a split was produced.
nlohmann::json split_manifest(const SplitSpec& spec, std::uint64_t seed,
                              const SplitResult& result);
SplitSpec split_spec_from_manifest(const nlohmann::json& manifest,
                                   std::uint64_t* seed = nullptr);

/// Restricts `ds` to the labeled samples of `classes`.
Dataset select_classes(const Dataset& ds, const std::set<ClassId>& classes);

/// Header `id,label,f0..f{F-1}`; an empty label field means unlabeled.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text);
void save_csv(const Dataset& ds, const std::filesystem::path& path);
std::string format_csv(const Dataset& ds);

}  // namespace etm
