// Python bindings for the main operations: exact parity construction,
// dataset generation, training, invariance penalties and audits.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "permrnn/auditor.hpp"
#include "permrnn/exact.hpp"
#include "permrnn/models.hpp"
#include "permrnn/tasks.hpp"
#include "permrnn/training.hpp"

namespace py = pybind11;
using namespace permrnn;

namespace {

Model train_from_python(const std::string& kind, const SequenceDataset& train,
                        int hidden, int state_width, const std::string& activation,
                        const std::string& reg, double lambda, double lr, int epochs,
                        int batch, std::uint64_t seed, RunReport* report_out) {
  Model m;
  m.encoding.alphabet_max = train.alphabet_max;
  m.head_logits = (train.task == "parity");
  const std::size_t in_w = m.encoding.width();
  const std::size_t h = static_cast<std::size_t>(hidden);
  const std::size_t sw = state_width > 0 ? static_cast<std::size_t>(state_width) : h;
  Rng rng = Rng::stream(seed, "init/" + kind);
  m.kind = model_kind_from_name(kind);
  switch (m.kind) {
    case ModelKind::rnn:
      m.rnn = make_rnn(h, in_w, sw, activation_from_name(activation), rng);
      m.head = make_mlp({sw, 1}, Activation::linear, Activation::linear, rng);
      break;
    case ModelKind::gru:
      m.gru = make_gru(h, in_w, rng);
      m.head = make_mlp({h, 1}, Activation::linear, Activation::linear, rng);
      break;
    case ModelKind::deepsets:
      m.deepsets = make_deepsets(in_w, h, 1, h, 1, rng);
      break;
  }
  TrainingConfig cfg;
  cfg.learning_rate = lr;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.lambda = lambda;
  cfg.regularizer = reg_from_name(reg);
  cfg.loss = default_loss_for_task(train.task);
  cfg.seed = seed;
  RunReport report = train_model(m, train, nullptr, cfg);
  if (report_out) *report_out = std::move(report);
  return m;
}

py::dict report_to_dict(const AuditReport& r) {
  py::dict d;
  d["probe"] = r.probe;
  d["mean_sq_violation"] = r.mean_sq_violation;
  d["max_sq_violation"] = r.max_sq_violation;
  d["num_probes"] = r.num_probes;
  d["seed"] = r.seed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "permutation-invariance laboratory for recurrent sequence models";

  py::class_<SequenceDataset>(m, "SequenceDataset")
      .def_readonly("sequences", &SequenceDataset::sequences)
      .def_readonly("labels", &SequenceDataset::labels)
      .def_readonly("task", &SequenceDataset::task)
      .def_readonly("alphabet_max", &SequenceDataset::alphabet_max)
      .def_readonly("seed", &SequenceDataset::seed)
      .def("__len__", &SequenceDataset::size)
      .def("save", [](const SequenceDataset& ds, const std::string& path) {
        save_dataset(ds, path);
      }, py::arg("path"));

  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
  m.def("load_dataset", &load_dataset, py::arg("path"));

  py::class_<Model>(m, "Model")
      .def_property_readonly("kind", [](const Model& mm) { return model_kind_name(mm.kind); })
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def("predict",
           [](const Model& mm, const std::vector<int>& xs) {
             return predict_scalar(mm, xs);
           },
           py::arg("sequence"))
      .def("save", [](const Model& mm, const std::string& path) { save_model(mm, path); },
           py::arg("path"));

  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  m.def("parity_oracle",
        [](const std::vector<int>& bits) { return parity_oracle(bits); }, py::arg("bits"));

  m.def("construct_parity_model", []() {
    Model model;
    model.kind = ModelKind::rnn;
    model.rnn = build_parity_rnn();
    model.encoding.alphabet_max = 1;
    return model;
  });

  m.def("parity_exhaustive_max_error",
        [](const Model& model, int max_len) {
          if (model.kind != ModelKind::rnn) throw std::invalid_argument("need an rnn model");
          return parity_exhaustive_max_error(model.rnn, max_len);
        },
        py::arg("model"), py::arg("max_len") = 10);

  m.def("min_deepsets_units", &min_deepsets_units, py::arg("n"));

  m.def("gen_parity", &gen_parity, py::arg("count"), py::arg("len_lo"), py::arg("len_hi"),
        py::arg("seed"));
  m.def("gen_arithmetic", &gen_arithmetic, py::arg("task"), py::arg("count"),
        py::arg("seq_len"), py::arg("alphabet_max"), py::arg("seed"));

  m.def("local_perturb",
        [](const std::vector<double>& vec, const std::vector<int>& windows,
           std::uint64_t seed) {
          const Perturbation p = local_perturb(vec, windows, seed);
          return py::make_tuple(p.output, p.permutation);
        },
        py::arg("vec"), py::arg("window_sizes"), py::arg("seed"));

  m.def("swap_chain", &swap_chain, py::arg("perm"));
  m.def("swap_chain_adjacent", &swap_chain_adjacent, py::arg("perm"));

  m.def("train",
        [](const std::string& kind, const SequenceDataset& train, int hidden,
           int state_width, const std::string& activation, const std::string& reg,
           double lambda, double lr, int epochs, int batch, std::uint64_t seed) {
          RunReport report;
          Model model = train_from_python(kind, train, hidden, state_width, activation, reg,
                                          lambda, lr, epochs, batch, seed, &report);
          py::list rows;
          for (const EpochRow& r : report.rows) {
            py::dict d;
            d["epoch"] = r.epoch;
            d["task_loss"] = r.task_loss;
            d["reg_value"] = r.reg_value;
            d["train_metric"] = r.train_metric;
            d["holdout_metric"] = r.holdout_metric;
            rows.append(d);
          }
          return py::make_tuple(model, rows);
        },
        py::arg("kind"), py::arg("train"), py::arg("hidden") = 20,
        py::arg("state_width") = 0, py::arg("activation") = "tanh",
        py::arg("reg") = "none", py::arg("lam") = 0.0, py::arg("lr") = 1e-3,
        py::arg("epochs") = 100, py::arg("batch") = 32, py::arg("seed") = 0);

  m.def("evaluate_accuracy", &evaluate_accuracy, py::arg("model"), py::arg("dataset"));
  m.def("evaluate_rmse", &evaluate_rmse, py::arg("model"), py::arg("dataset"));

  m.def("audit_perm_invariance",
        [](const Model& model, const SequenceDataset& ds, int perms, std::uint64_t seed) {
          const EncodedDataset data = encode_sequences(ds.sequences, ds.labels, model.encoding);
          if (model.kind == ModelKind::deepsets) {
            const SetFunction eval = [&model](std::span<const Tensor> xs) {
              Tape tape;
              return deepsets_forward(tape, model.deepsets, xs).value();
            };
            return report_to_dict(audit_perm_invariance_fn(eval, data, perms, seed, 1));
          }
          auto cell = model.make_cell();
          return report_to_dict(audit_perm_invariance(*cell, data, perms, seed));
        },
        py::arg("model"), py::arg("dataset"), py::arg("perms") = 20, py::arg("seed") = 0);

  m.def("sire_penalty_value",
        [](const Model& model, const SequenceDataset& ds, int states, int pairs,
           std::uint64_t seed) {
          const EncodedDataset data = encode_sequences(ds.sequences, ds.labels, model.encoding);
          auto cell = model.make_cell();
          SamplerConfig cfg;
          cfg.states_per_batch = states;
          cfg.pairs_per_state = pairs;
          cfg.seed = seed;
          const StateBank bank = collect_states(*cell, data, cfg);
          Rng rng = Rng::stream(seed, "sire-pairs");
          Tape tape;
          return sire_penalty(tape, *cell, data, bank, pairs, rng).item();
        },
        py::arg("model"), py::arg("dataset"), py::arg("states") = 64, py::arg("pairs") = 1,
        py::arg("seed") = 0);

  m.def("sub_penalty_value",
        [](const Model& model, const SequenceDataset& ds, int samples, std::uint64_t seed) {
          const EncodedDataset data = encode_sequences(ds.sequences, ds.labels, model.encoding);
          auto cell = model.make_cell();
          Rng rng = Rng::stream(seed, "sub-samples");
          Tape tape;
          return sub_penalty(tape, *cell, data, samples, rng).item();
        },
        py::arg("model"), py::arg("dataset"), py::arg("samples") = 64, py::arg("seed") = 0);
}
