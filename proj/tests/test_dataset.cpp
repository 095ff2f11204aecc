#include "etm/dataset.hpp"
#include "etm/errors.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace etm;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "etm_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.num_classes = 2;
  s.samples_per_class = 3;
  s.feature_dim = 4;
  s.seed = 11;
  return s;
}

}  // namespace

TEST_CASE("generate_synthetic has the requested shape and labels") {
  const Dataset ds = generate_synthetic(small_spec());
  CHECK(ds.size() == 6);
  CHECK(ds.feature_dim() == 4);
  std::vector<int> labels;
  for (const auto& s : ds.samples()) labels.push_back(*s.label);
  CHECK(labels == std::vector<int>{1, 1, 1, 2, 2, 2});
  CHECK(ds.class_index().at(1).size() == 3);
}

TEST_CASE("generate_synthetic is deterministic in its seed") {
  CHECK(generate_synthetic(small_spec()) == generate_synthetic(small_spec()));
  SyntheticSpec other = small_spec();
  other.seed = 12;
  CHECK_FALSE(generate_synthetic(small_spec()) == generate_synthetic(other));
}

TEST_CASE("tiny noise separates classes by far more than their spread") {
  SyntheticSpec s;
  s.num_classes = 4;
  s.samples_per_class = 5;
  s.feature_dim = 3;
  s.noise_sigma = 1e-9;
  s.class_mean_scale = 100.0;
  const Dataset ds = generate_synthetic(s);
  double max_within = 0.0;
  double min_between = 1e300;
  for (const auto& a : ds.samples()) {
    for (const auto& b : ds.samples()) {
      if (a.id >= b.id) continue;
      const double d = (a.features - b.features).norm();
      if (a.label == b.label) {
        max_within = std::max(max_within, d);
      } else {
        min_between = std::min(min_between, d);
      }
    }
  }
  CHECK(max_within < 1e-6);
  CHECK(min_between > 1.0);
}

TEST_CASE("invalid synthetic specs are rejected") {
  SyntheticSpec s = small_spec();
  s.noise_sigma = 0.0;
  CHECK_THROWS_AS(generate_synthetic(s), ConfigError);
  s = small_spec();
  s.num_classes = 0;
  CHECK_THROWS_AS(generate_synthetic(s), ConfigError);
}

TEST_CASE("split partitions every train class into labeled and unlabeled") {
  SyntheticSpec spec;
  spec.num_classes = 6;
  spec.samples_per_class = 10;
  spec.feature_dim = 2;
  const Dataset ds = generate_synthetic(spec);
  SplitSpec sp{{1, 2, 3}, {4}, {5, 6}, 0.5};
  const SplitResult r = split(ds, sp, 3);

  for (ClassId c : sp.train_classes) {
    CHECK(r.train_labeled.class_index().at(c).size() == 5);
    std::set<SampleId> seen;
    for (SampleId id : r.train_labeled.class_index().at(c)) CHECK(seen.insert(id).second);
    for (SampleId id : r.train_unlabeled.unlabeled_of_class(c)) CHECK(seen.insert(id).second);
    const auto& orig = ds.class_index().at(c);
    CHECK(seen == std::set<SampleId>(orig.begin(), orig.end()));
  }
  for (const Sample& s : r.train_unlabeled.samples()) CHECK_FALSE(s.label.has_value());
  CHECK(r.train_unlabeled.size() == 15);
  CHECK(r.val.classes() == std::vector<ClassId>{4});
  CHECK(r.test.classes() == std::vector<ClassId>{5, 6});
  CHECK(r.train_labeled.classes() == std::vector<ClassId>{1, 2, 3});
}

TEST_CASE("labeled count uses the ceiling rule") {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 3;
  spec.feature_dim = 2;
  const Dataset ds = generate_synthetic(spec);
  const SplitResult r = split(ds, SplitSpec{{1, 2}, {}, {}, 0.33}, 1);
  CHECK(r.train_labeled.class_index().at(1).size() == 1);
  CHECK(r.train_unlabeled.unlabeled_of_class(1).size() == 2);

  const SplitResult full = split(ds, SplitSpec{{1, 2}, {}, {}, 1.0}, 1);
  CHECK(full.train_unlabeled.empty());
}

TEST_CASE("split rejects overlapping or unknown classes") {
  const Dataset ds = generate_synthetic(small_spec());
  CHECK_THROWS_AS(split(ds, SplitSpec{{1}, {1}, {2}, 1.0}, 0), ConfigError);
  CHECK_THROWS_AS(split(ds, SplitSpec{{1}, {}, {9}, 1.0}, 0), ConfigError);
  CHECK_THROWS_AS(split(ds, SplitSpec{{}, {}, {1}, 1.0}, 0), ConfigError);
  CHECK_THROWS_AS(split(ds, SplitSpec{{1}, {}, {2}, 0.0}, 0), ConfigError);
}

TEST_CASE("split_classes gives disjoint sets covering every class") {
  std::vector<ClassId> classes;
  for (int c = 1; c <= 30; ++c) classes.push_back(c);
  const SplitSpec s = split_classes(classes, 0.7, 0.1, 1.0, 5);
  CHECK(s.train_classes.size() == 21);
  CHECK(s.val_classes.size() == 3);
  CHECK(s.test_classes.size() == 6);
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("manifest round-trips the split spec") {
  const Dataset ds = generate_synthetic(small_spec());
  SplitSpec sp{{1}, {}, {2}, 1.0};
  const SplitResult r = split(ds, sp, 9);
  std::uint64_t seed = 0;
  const SplitSpec back = split_spec_from_manifest(split_manifest(sp, 9, r), &seed);
  CHECK(seed == 9);
  CHECK(back.train_classes == sp.train_classes);
  CHECK(back.test_classes == sp.test_classes);
}

TEST_CASE("CSV row with an empty label is unlabeled") {
  const Dataset ds = parse_csv("id,label,f0,f1\n7,,0.5,1.25\n");
  REQUIRE(ds.size() == 1);
  const Sample& s = ds.sample(7);
  CHECK_FALSE(s.label.has_value());
  CHECK(s.features[0] == 0.5);
  CHECK(s.features[1] == 1.25);
}

TEST_CASE("CSV save/load is exact") {
  SyntheticSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 25;
  spec.feature_dim = 6;
  spec.seed = 42;
  const Dataset ds = generate_synthetic(spec);
  const auto path = temp_path("roundtrip.csv");
  save_csv(ds, path);
  CHECK(load_csv(path) == ds);
}

TEST_CASE("CSV errors carry line numbers") {
  SUBCASE("duplicate id") {
    try {
      parse_csv("id,label,f0\n3,1,0.0\n3,2,1.0\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("duplicate sample id 3") != std::string::npos);
    }
  }
  SUBCASE("ragged row") {
    try {
      parse_csv("id,label,f0,f1\n1,1,0.0\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("non-numeric feature") {
    CHECK_THROWS_AS(parse_csv("id,label,f0\n1,1,abc\n"), ParseError);
  }
  SUBCASE("bad header") {
    CHECK_THROWS_AS(parse_csv("label,id,f0\n"), ParseError);
  }
}

TEST_CASE("load_csv reports missing files") {
  CHECK_THROWS_AS(load_csv("/nonexistent/etm.csv"), IoError);
}
