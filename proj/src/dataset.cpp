#include "etm/dataset.hpp"

#include "etm/errors.hpp"
#include "etm/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace etm {

Dataset::Dataset(std::vector<Sample> samples, std::map<SampleId, ClassId> hidden_labels,
                 std::optional<int> feature_dim)
    : samples_(std::move(samples)), hidden_labels_(std::move(hidden_labels)) {
  if (feature_dim) {
    feature_dim_ = *feature_dim;
  } else if (!samples_.empty()) {
    feature_dim_ = static_cast<int>(samples_.front().features.size());
  }
  row_of_.reserve(samples_.size());
  for (std::size_t row = 0; row < samples_.size(); ++row) {
    const Sample& s = samples_[row];
    if (s.id < 0) throw ConfigError("negative sample id " + std::to_string(s.id));
    if (s.features.size() != feature_dim_) {
      throw ShapeError("sample " + std::to_string(s.id) + " has " +
                       std::to_string(s.features.size()) + " features, expected " +
                       std::to_string(feature_dim_));
    }
    if (!s.features.allFinite()) {
      throw ConfigError("sample " + std::to_string(s.id) + " has non-finite features");
    }
    if (!row_of_.emplace(s.id, row).second) {
      throw ConfigError("duplicate sample id " + std::to_string(s.id));
    }
    if (s.label) {
      if (*s.label < 1) {
        throw ConfigError("sample " + std::to_string(s.id) + " has class id " +
                          std::to_string(*s.label) + "; class ids start at 1");
      }
      class_index_[*s.label].push_back(s.id);
    }
  }
  for (const auto& [id, cls] : hidden_labels_) {
    auto it = row_of_.find(id);
    if (it == row_of_.end() || samples_[it->second].label) {
      throw ConfigError("hidden label given for sample " + std::to_string(id) +
                        " which is not an unlabeled member of the dataset");
    }
    if (cls < 1) throw ConfigError("hidden class id must be >= 1");
  }
}

std::vector<ClassId> Dataset::classes() const {
  std::vector<ClassId> out;
  out.reserve(class_index_.size());
  for (const auto& [cls, ids] : class_index_) out.push_back(cls);
  return out;
}

std::size_t Dataset::row_of(SampleId id) const {
  auto it = row_of_.find(id);
  if (it == row_of_.end()) throw ConfigError("unknown sample id " + std::to_string(id));
  return it->second;
}

const Sample& Dataset::sample(SampleId id) const { return samples_[row_of(id)]; }

std::optional<ClassId> Dataset::hidden_label(SampleId id) const {
  auto it = hidden_labels_.find(id);
  if (it == hidden_labels_.end()) return std::nullopt;
  return it->second;
}

std::vector<SampleId> Dataset::unlabeled_of_class(ClassId cls) const {
  std::vector<SampleId> out;
  for (const Sample& s : samples_) {
    if (s.label) continue;
    auto it = hidden_labels_.find(s.id);
    if (it != hidden_labels_.end() && it->second == cls) out.push_back(s.id);
  }
  return out;
}

Eigen::MatrixXd Dataset::gather(const std::vector<SampleId>& ids) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), feature_dim_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = sample(ids[i]).features.transpose();
  }
  return out;
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.feature_dim_ != b.feature_dim_ || a.samples_.size() != b.samples_.size() ||
      a.hidden_labels_ != b.hidden_labels_) {
    return false;
  }
  for (std::size_t i = 0; i < a.samples_.size(); ++i) {
    const Sample& x = a.samples_[i];
    const Sample& y = b.samples_[i];
    if (x.id != y.id || x.label != y.label || x.features != y.features) return false;
  }
  return true;
}

// --- synthetic -------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (num_classes < 1 || samples_per_class < 1 || feature_dim < 1) {
    throw ConfigError("synthetic spec counts must all be >= 1");
  }
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("noise_sigma must be positive and finite");
  }
  if (!(class_mean_scale >= 0.0) || !std::isfinite(class_mean_scale)) {
    throw ConfigError("class_mean_scale must be non-negative and finite");
  }
}

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"num_classes", s.num_classes},       {"samples_per_class", s.samples_per_class},
       {"feature_dim", s.feature_dim},       {"class_mean_scale", s.class_mean_scale},
       {"noise_sigma", s.noise_sigma},       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s.num_classes = j.value("num_classes", s.num_classes);
  s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
  s.feature_dim = j.value("feature_dim", s.feature_dim);
  s.class_mean_scale = j.value("class_mean_scale", s.class_mean_scale);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int f = spec.feature_dim;
  std::vector<Eigen::VectorXd> means(static_cast<std::size_t>(spec.num_classes));
  for (auto& mean : means) {
    mean.resize(f);
    for (int d = 0; d < f; ++d) mean[d] = spec.class_mean_scale * standard_normal(rng);
  }
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(spec.num_classes) *
                  static_cast<std::size_t>(spec.samples_per_class));
  SampleId next_id = 0;
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int n = 0; n < spec.samples_per_class; ++n) {
      Sample s;
      s.id = next_id++;
      s.label = k + 1;
      s.features.resize(f);
      for (int d = 0; d < f; ++d) {
        s.features[d] = means[static_cast<std::size_t>(k)][d] +
                        spec.noise_sigma * standard_normal(rng);
      }
      samples.push_back(std::move(s));
    }
  }
  return Dataset(std::move(samples), {}, f);
}

// --- splits ----------------------------------------------------------------

void SplitSpec::validate() const {
  auto overlap = [](const std::set<ClassId>& a, const std::set<ClassId>& b) {
    for (ClassId c : a) {
      if (b.count(c)) return std::optional<ClassId>(c);
    }
    return std::optional<ClassId>();
  };
  if (auto c = overlap(train_classes, val_classes)) {
    throw ConfigError("class " + std::to_string(*c) + " is in both train and val");
  }
  if (auto c = overlap(train_classes, test_classes)) {
    throw ConfigError("class " + std::to_string(*c) + " is in both train and test");
  }
  if (auto c = overlap(val_classes, test_classes)) {
    throw ConfigError("class " + std::to_string(*c) + " is in both val and test");
  }
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw ConfigError("labeled_fraction must lie in (0, 1]");
  }
}

void to_json(nlohmann::json& j, const SplitSpec& s) {
  j = {{"train_classes", s.train_classes},
       {"val_classes", s.val_classes},
       {"test_classes", s.test_classes},
       {"labeled_fraction", s.labeled_fraction}};
}

void from_json(const nlohmann::json& j, SplitSpec& s) {
  s.train_classes = j.value("train_classes", std::set<ClassId>{});
  s.val_classes = j.value("val_classes", std::set<ClassId>{});
  s.test_classes = j.value("test_classes", std::set<ClassId>{});
  s.labeled_fraction = j.value("labeled_fraction", 1.0);
}

SplitSpec split_classes(const std::vector<ClassId>& classes, double train_fraction,
                        double val_fraction, double labeled_fraction, std::uint64_t seed) {
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0 + 1e-12) {
    throw ConfigError("class fractions must be non-negative and sum to at most 1");
  }
  Rng rng(seed);
  const std::size_t n = classes.size();
  std::vector<ClassId> shuffled = sample_without_replacement(rng, classes, n);
  auto count = [n](double frac) {
    auto c = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
    if (frac > 0 && c == 0 && n > 0) c = 1;
    return c;
  };
  std::size_t n_train = std::min(count(train_fraction), n);
  std::size_t n_val = std::min(count(val_fraction), n - n_train);
  SplitSpec spec;
  spec.labeled_fraction = labeled_fraction;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      spec.train_classes.insert(shuffled[i]);
    } else if (i < n_train + n_val) {
      spec.val_classes.insert(shuffled[i]);
    } else {
      spec.test_classes.insert(shuffled[i]);
    }
  }
  return spec;
}

Dataset select_classes(const Dataset& ds, const std::set<ClassId>& classes) {
  std::vector<Sample> out;
  for (const Sample& s : ds.samples()) {
    if (s.label && classes.count(*s.label)) out.push_back(s);
  }
  return Dataset(std::move(out), {}, ds.feature_dim());
}

SplitResult split(const Dataset& ds, const SplitSpec& spec, std::uint64_t seed) {
  spec.validate();
  for (const auto* set : {&spec.train_classes, &spec.val_classes, &spec.test_classes}) {
    for (ClassId c : *set) {
      if (!ds.class_index().count(c)) {
        throw ConfigError("class " + std::to_string(c) + " does not occur in the dataset");
      }
    }
  }
  if (spec.train_classes.empty()) throw ConfigError("split has no train classes");

  Rng rng(seed);
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;
  std::map<SampleId, ClassId> hidden;
  for (ClassId cls : spec.train_classes) {
    const std::vector<SampleId>& ids = ds.class_index().at(cls);
    const std::size_t n = ids.size();
    auto n_labeled = static_cast<std::size_t>(
        std::ceil(spec.labeled_fraction * static_cast<double>(n) - 1e-9));
    n_labeled = std::clamp<std::size_t>(n_labeled, 1, n);
    std::vector<std::size_t> order = sample_indices(rng, n, n);
    for (std::size_t i = 0; i < n; ++i) {
      Sample s = ds.sample(ids[order[i]]);
      if (i < n_labeled) {
        labeled.push_back(std::move(s));
      } else {
        hidden.emplace(s.id, *s.label);
        s.label.reset();
        unlabeled.push_back(std::move(s));
      }
    }
  }
  SplitResult out;
  out.train_labeled = Dataset(std::move(labeled), {}, ds.feature_dim());
  out.train_unlabeled = Dataset(std::move(unlabeled), std::move(hidden), ds.feature_dim());
  out.val = select_classes(ds, spec.val_classes);
  out.test = select_classes(ds, spec.test_classes);
  return out;
}

nlohmann::json split_manifest(const SplitSpec& spec, std::uint64_t seed,
                              const SplitResult& result) {
  return {{"split_spec", spec},
          {"seed", seed},
          {"classes",
           {{"train", spec.train_classes},
            {"val", spec.val_classes},
            {"test", spec.test_classes}}},
          {"sizes",
           {{"train_labeled", result.train_labeled.size()},
            {"train_unlabeled", result.train_unlabeled.size()},
            {"val", result.val.size()},
            {"test", result.test.size()}}}};
}

SplitSpec split_spec_from_manifest(const nlohmann::json& manifest, std::uint64_t* seed) {
  if (!manifest.contains("split_spec")) throw ConfigError("manifest has no split_spec");
  if (seed) *seed = manifest.value("seed", std::uint64_t{0});
  SplitSpec spec = manifest.at("split_spec").get<SplitSpec>();
  spec.validate();
  return spec;
}

// --- CSV -------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && first != last;
}

}  // namespace

Dataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  int feature_dim = -1;
  std::vector<Sample> samples;
  std::unordered_map<SampleId, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (feature_dim < 0) {
      if (fields.size() < 2 || fields[0] != "id" || fields[1] != "label") {
        throw ParseError("expected header starting with 'id,label'", line_no);
      }
      feature_dim = static_cast<int>(fields.size()) - 2;
      continue;
    }
    if (static_cast<int>(fields.size()) != feature_dim + 2) {
      throw ParseError("expected " + std::to_string(feature_dim + 2) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    Sample s;
    if (!parse_number(fields[0], s.id) || s.id < 0) {
      throw ParseError("invalid sample id '" + std::string(fields[0]) + "'", line_no);
    }
    if (!seen.emplace(s.id, line_no).second) {
      throw ParseError("duplicate sample id " + std::to_string(s.id), line_no);
    }
    if (!fields[1].empty()) {
      ClassId label = 0;
      if (!parse_number(fields[1], label) || label < 1) {
        throw ParseError("invalid label '" + std::string(fields[1]) + "'", line_no);
      }
      s.label = label;
    }
    s.features.resize(feature_dim);
    for (int d = 0; d < feature_dim; ++d) {
      double v = 0.0;
      auto field = fields[static_cast<std::size_t>(d) + 2];
      if (!parse_number(field, v) || !std::isfinite(v)) {
        throw ParseError("non-numeric feature '" + std::string(field) + "' in column f" +
                             std::to_string(d),
                         line_no);
      }
      s.features[d] = v;
    }
    samples.push_back(std::move(s));
  }
  if (feature_dim < 0) throw ParseError("missing header", line_no);
  return Dataset(std::move(samples), {}, feature_dim);
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_csv(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + std::string(e.what()).substr(
                                                 std::string(e.what()).find(": ") + 2),
                     e.line());
  }
}

std::string format_csv(const Dataset& ds) {
  std::string out = "id,label";
  for (int d = 0; d < ds.feature_dim(); ++d) out += ",f" + std::to_string(d);
  out += '\n';
  char buf[64];
  for (const Sample& s : ds.samples()) {
    out += std::to_string(s.id);
    out += ',';
    if (s.label) out += std::to_string(*s.label);
    for (int d = 0; d < ds.feature_dim(); ++d) {
      auto res = std::to_chars(buf, buf + sizeof buf, s.features[d],
                               std::chars_format::general, 17);
      out += ',';
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_csv(ds);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace etm
