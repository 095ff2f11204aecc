#include "etm/dataset.hpp"
#include "etm/embedder.hpp"
#include "etm/errors.hpp"
#include "etm/evaluator.hpp"
#include "etm/experiment.hpp"
#include "etm/mining.hpp"
#include "etm/protobaseline.hpp"
#include "etm/semisup.hpp"
#include "etm/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <set>

namespace py = pybind11;
using nlohmann::json;

namespace {

using IntVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

// Label 0 marks an unlabeled row.
etm::Dataset make_dataset(const IntVector& ids, const std::vector<int>& labels,
                          const Eigen::MatrixXd& features) {
  if (ids.size() != features.rows() || static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw etm::ShapeError("ids, labels and features must have the same number of rows");
  }
  std::vector<etm::Sample> samples;
  samples.reserve(labels.size());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    etm::Sample s;
    s.id = ids(i);
    s.features = features.row(i).transpose();
    if (labels[static_cast<std::size_t>(i)] != 0) s.label = labels[static_cast<std::size_t>(i)];
    samples.push_back(std::move(s));
  }
  return etm::Dataset(std::move(samples), {}, static_cast<int>(features.cols()));
}

IntVector dataset_ids(const etm::Dataset& ds) {
  IntVector out(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) out(static_cast<Eigen::Index>(i)) = ds.samples()[i].id;
  return out;
}

std::vector<int> dataset_labels(const etm::Dataset& ds) {
  std::vector<int> out;
  for (const auto& s : ds.samples()) out.push_back(s.label.value_or(0));
  return out;
}

Eigen::MatrixXd dataset_features(const etm::Dataset& ds) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ds.size()), ds.feature_dim());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = ds.samples()[i].features.transpose();
  }
  return out;
}

etm::MiningConfig mining_config(int n_positive, int n_negative, double margin) {
  etm::MiningConfig cfg{n_positive, n_negative, margin};
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Episodic triplet mining for few-shot metric learning";

  static py::exception<etm::Error> base(m, "EtmError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const etm::Error& e) {
      py::set_error(base, e.what());
    } catch (const nlohmann::json::exception& e) {
      py::set_error(PyExc_ValueError, e.what());
    }
  });

  py::class_<etm::Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("ids"), py::arg("labels"), py::arg("features"))
      .def_property_readonly("ids", &dataset_ids)
      .def_property_readonly("labels", &dataset_labels)
      .def_property_readonly("features", &dataset_features)
      .def_property_readonly("feature_dim", &etm::Dataset::feature_dim)
      .def_property_readonly("classes", &etm::Dataset::classes)
      .def("hidden_label", &etm::Dataset::hidden_label)
      .def("__len__", &etm::Dataset::size);

  m.def(
      "generate_synthetic",
      [](int num_classes, int samples_per_class, int feature_dim, double class_mean_scale,
         double noise_sigma, std::uint64_t seed) {
        return etm::generate_synthetic(etm::SyntheticSpec{num_classes, samples_per_class, feature_dim,
                                                          class_mean_scale, noise_sigma, seed});
      },
      py::arg("num_classes") = 20, py::arg("samples_per_class") = 50, py::arg("feature_dim") = 32,
      py::arg("class_mean_scale") = 5.0, py::arg("noise_sigma") = 0.5, py::arg("seed") = 0);
  m.def("load_csv", [](const std::string& path) { return etm::load_csv(path); });
  m.def("save_csv", [](const etm::Dataset& ds, const std::string& path) { etm::save_csv(ds, path); });
  m.def(
      "split",
      [](const etm::Dataset& ds, const std::set<int>& train, const std::set<int>& val,
         const std::set<int>& test, double labeled_fraction, std::uint64_t seed) {
        const etm::SplitResult r =
            etm::split(ds, etm::SplitSpec{train, val, test, labeled_fraction}, seed);
        return py::make_tuple(r.train_labeled, r.train_unlabeled, r.val, r.test);
      },
      py::arg("ds"), py::arg("train_classes"), py::arg("val_classes"), py::arg("test_classes"),
      py::arg("labeled_fraction") = 1.0, py::arg("seed") = 0);

  py::class_<etm::EmbeddingNet>(m, "EmbeddingNet")
      .def_static("init", &etm::EmbeddingNet::init, py::arg("layer_dims"), py::arg("seed") = 0)
      .def_static("from_json", [](const std::string& text) {
        return etm::net_from_json(json::parse(text));
      })
      .def_static("from_checkpoint", [](const std::string& text) {
        return etm::net_from_checkpoint(json::parse(text));
      })
      .def_property_readonly("layer_dims", &etm::EmbeddingNet::layer_dims)
      .def_property_readonly("num_params", &etm::EmbeddingNet::num_params)
      .def("flat_params", &etm::EmbeddingNet::flat_params)
      .def("set_flat_params", &etm::EmbeddingNet::set_flat_params)
      .def("embed", [](const etm::EmbeddingNet& net, const Eigen::MatrixXd& x) {
        return etm::embed(net, x);
      })
      .def("param_gradient",
           [](const etm::EmbeddingNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& upstream) {
             return etm::backward(net, etm::forward(net, x).trace, upstream).flatten();
           },
           py::arg("x"), py::arg("grad_embeddings"))
      .def("to_json", [](const etm::EmbeddingNet& net) { return etm::net_to_json(net).dump(); })
      .def("__eq__", [](const etm::EmbeddingNet& a, const etm::EmbeddingNet& b) { return a == b; });

  m.def("distance_matrix", &etm::distance_matrix, py::arg("queries"), py::arg("support"));
  m.def(
      "mine",
      [](const Eigen::MatrixXd& d, const std::vector<int>& qlab, const std::vector<int>& slab,
         int n_positive, int n_negative, double margin) {
        const auto res = etm::mine(d, qlab, slab, mining_config(n_positive, n_negative, margin));
        Eigen::VectorXd dp(static_cast<Eigen::Index>(res.size())), dn(dp.size()), loss(dp.size());
        std::vector<std::vector<Eigen::Index>> pos, neg;
        for (std::size_t i = 0; i < res.size(); ++i) {
          const auto k = static_cast<Eigen::Index>(i);
          dp(k) = res[i].d_pos;
          dn(k) = res[i].d_neg;
          loss(k) = res[i].loss;
          pos.push_back(res[i].positives);
          neg.push_back(res[i].negatives);
        }
        py::dict out;
        out["d_pos"] = dp;
        out["d_neg"] = dn;
        out["loss"] = loss;
        out["positives"] = pos;
        out["negatives"] = neg;
        return out;
      },
      py::arg("distances"), py::arg("query_labels"), py::arg("support_labels"),
      py::arg("n_positive") = 3, py::arg("n_negative") = 5, py::arg("margin") = 0.3);
  m.def(
      "episode_loss",
      [](const Eigen::MatrixXd& q, const Eigen::MatrixXd& s, const std::vector<int>& qlab,
         const std::vector<int>& slab, int n_positive, int n_negative, double margin) {
        const etm::MiningConfig cfg = mining_config(n_positive, n_negative, margin);
        const auto res = etm::mine(etm::distance_matrix(q, s), qlab, slab, cfg);
        const etm::EmbeddingGrads g = etm::loss_grad_embeddings(q, s, res, cfg);
        return py::make_tuple(etm::episode_loss(res), g.queries, g.support);
      },
      py::arg("queries"), py::arg("support"), py::arg("query_labels"), py::arg("support_labels"),
      py::arg("n_positive") = 3, py::arg("n_negative") = 5, py::arg("margin") = 0.3,
      "Summed hinge loss and its gradients w.r.t. query and support embeddings.");

  m.def(
      "pseudo_label",
      [](const Eigen::MatrixXd& unlabeled, const Eigen::MatrixXd& support,
         const std::vector<int>& slab, int n_positive) {
        std::vector<etm::SampleId> ids(static_cast<std::size_t>(unlabeled.rows()));
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<etm::SampleId>(i);
        std::vector<int> labels;
        for (const auto& p : etm::pseudo_label(unlabeled, ids, support, slab, n_positive)) {
          labels.push_back(p.cls);
        }
        return labels;
      },
      py::arg("unlabeled"), py::arg("support"), py::arg("support_labels"), py::arg("n_positive") = 3);
  m.def("infer", &etm::infer_all, py::arg("queries"), py::arg("support"), py::arg("support_labels"),
        py::arg("n_positive") = 3);

  m.def(
      "prototypes",
      [](const Eigen::MatrixXd& s, const std::vector<int>& slab) {
        const etm::Prototypes p = etm::prototypes(s, slab);
        return py::make_tuple(p.classes, p.centers);
      },
      py::arg("support"), py::arg("support_labels"));
  m.def(
      "proto_loss",
      [](const Eigen::MatrixXd& q, const std::vector<int>& qlab, const Eigen::MatrixXd& s,
         const std::vector<int>& slab) {
        const etm::Prototypes p = etm::prototypes(s, slab);
        const etm::ProtoLoss l = etm::proto_loss(q, qlab, p);
        return py::make_tuple(l.loss, l.grad_queries,
                              etm::support_grad_from_centers(p, slab, l.grad_centers));
      },
      py::arg("queries"), py::arg("query_labels"), py::arg("support"), py::arg("support_labels"));
  m.def(
      "proto_infer",
      [](const Eigen::MatrixXd& q, const Eigen::MatrixXd& s, const std::vector<int>& slab) {
        return etm::proto_infer(q, etm::prototypes(s, slab));
      },
      py::arg("queries"), py::arg("support"), py::arg("support_labels"));

  m.def(
      "lr_at",
      [](int episode, double lr0, int period) {
        etm::TrainConfig cfg;
        cfg.lr0 = lr0;
        cfg.lr_halving_period = period;
        return etm::lr_at(episode, cfg);
      },
      py::arg("episode"), py::arg("lr0") = 1e-3, py::arg("period") = 1000);

  m.def(
      "train",
      [](const etm::Dataset& labeled, const std::optional<etm::Dataset>& unlabeled,
         const std::string& options, const std::optional<etm::Dataset>& validation) {
        etm::TrainConfig cfg;
        etm::apply_train_options(json::parse(options), cfg);
        const etm::Dataset none;
        etm::TrainResult r;
        {
          py::gil_scoped_release release;
          r = etm::train(labeled, unlabeled ? *unlabeled : none, cfg,
                         validation ? &*validation : nullptr);
        }
        return py::make_tuple(r.net, etm::log_to_jsonl(r.log), r.checkpoint.dump());
      },
      py::arg("labeled"), py::arg("unlabeled") = std::nullopt, py::arg("options") = "{}",
      py::arg("validation") = std::nullopt,
      "Trains a network. `options` is a JSON object of flag-named settings.");
  m.def(
      "evaluate",
      [](const etm::EmbeddingNet& net, const etm::Dataset& test, int way, int shot, int queries,
         int episodes, int n_positive, std::uint64_t seed, int threads, const std::string& rule) {
        etm::EvalConfig cfg;
        cfg.way = way;
        cfg.shot = shot;
        cfg.queries_per_class = queries;
        cfg.episodes = episodes;
        cfg.n_positive = n_positive;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.rule = etm::inference_rule_from_string(rule);
        etm::EvalReport r;
        {
          py::gil_scoped_release release;
          r = etm::evaluate(net, test, cfg);
        }
        py::dict out;
        out["accuracies"] = r.accuracies;
        out["mean"] = r.mean;
        out["ci95"] = r.ci95;
        return out;
      },
      py::arg("net"), py::arg("test"), py::arg("way") = 5, py::arg("shot") = 1,
      py::arg("queries") = 15, py::arg("episodes") = 1000, py::arg("n_positive") = 3,
      py::arg("seed") = 0, py::arg("threads") = 1, py::arg("rule") = "knn");
  m.def(
      "run_experiment",
      [](const std::string& config, const std::optional<std::string>& out_dir) {
        const etm::ExperimentConfig cfg = etm::experiment_from_json(json::parse(config));
        std::optional<std::filesystem::path> dir;
        if (out_dir) dir = *out_dir;
        std::vector<etm::SummaryRow> rows;
        {
          py::gil_scoped_release release;
          rows = etm::run_experiment(cfg, dir);
        }
        json out = json::array();
        for (const auto& r : rows) out.push_back(etm::to_json(r));
        return out.dump();
      },
      py::arg("config"), py::arg("out_dir") = std::nullopt);
}
