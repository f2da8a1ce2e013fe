#include "permrnn/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace permrnn {

std::string optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer: " + name);
}

std::string reg_name(RegKind k) {
  switch (k) {
    case RegKind::none: return "none";
    case RegKind::sire: return "sire";
    case RegKind::sub: return "sub";
  }
  return "?";
}

RegKind reg_from_name(const std::string& name) {
  if (name == "none") return RegKind::none;
  if (name == "sire") return RegKind::sire;
  if (name == "sub") return RegKind::sub;
  throw std::invalid_argument("unknown regularizer: " + name);
}

std::string loss_name(LossKind k) {
  switch (k) {
    case LossKind::l1: return "l1";
    case LossKind::cross_entropy: return "cross-entropy";
    case LossKind::mse: return "mse";
  }
  return "?";
}

LossKind loss_from_name(const std::string& name) {
  if (name == "l1") return LossKind::l1;
  if (name == "cross-entropy") return LossKind::cross_entropy;
  if (name == "mse") return LossKind::mse;
  throw std::invalid_argument("unknown loss: " + name);
}

LossKind default_loss_for_task(const std::string& task) {
  if (task == "parity") return LossKind::cross_entropy;
  if (task == "variance") return LossKind::mse;
  return LossKind::l1;
}

// ---------------------------------------------------------------------------

void AdamState::init(const std::vector<Tensor*>& params) {
  t = 0;
  m.clear();
  v.clear();
  for (const Tensor* p : params) {
    m.emplace_back(p->size(), 0.0);
    v.emplace_back(p->size(), 0.0);
  }
}

void AdamState::step(const std::vector<Tensor*>& params, double lr) {
  if (m.size() != params.size()) init(params);
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor* p = params[pi];
    if (p->grad.size() != p->size()) p->zero_grad();
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = p->grad[i];
      m[pi][i] = beta1 * m[pi][i] + (1.0 - beta1) * g;
      v[pi][i] = beta2 * v[pi][i] + (1.0 - beta2) * g * g;
      const double mhat = m[pi][i] / bc1;
      const double vhat = v[pi][i] / bc2;
      p->data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void sgd_step(const std::vector<Tensor*>& params, double lr) {
  for (Tensor* p : params) {
    if (p->grad.size() != p->size()) continue;
    for (std::size_t i = 0; i < p->size(); ++i) p->data[i] -= lr * p->grad[i];
  }
}

double clip_gradients(const std::vector<Tensor*>& params, double max_norm) {
  double sq = 0.0;
  for (const Tensor* p : params) {
    for (double g : p->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (const Tensor* p : params) {
      for (double& g : p->grad) g *= k;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------

namespace {

Var example_loss(Tape& tape, Var out, double label, LossKind loss) {
  switch (loss) {
    case LossKind::l1:
      return tape.sum(tape.abs(tape.sub(out, tape.constant(label))));
    case LossKind::mse:
      return tape.sum(tape.square(tape.sub(out, tape.constant(label))));
    case LossKind::cross_entropy:
      // binary cross-entropy with a logit output: softplus((1-2y) * logit)
      return tape.sum(tape.softplus(tape.scale(out, 1.0 - 2.0 * label)));
  }
  throw std::logic_error("unreachable loss kind");
}

}  // namespace

LossParts total_loss(Tape& tape, Model& model, const EncodedDataset& data,
                     std::span<const std::size_t> batch, const TrainingConfig& cfg,
                     int epoch, int batch_index) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  if (cfg.loss == LossKind::cross_entropy && !model.head_logits) {
    throw std::invalid_argument("total_loss: cross-entropy needs a logit head");
  }

  Var acc;
  for (std::size_t idx : batch) {
    Var out = model_output(tape, model, data.sequences[idx]);
    Var li = example_loss(tape, out, data.labels[idx], cfg.loss);
    acc = acc.valid() ? tape.add(acc, li) : li;
  }
  Var task = tape.scale(acc, 1.0 / static_cast<double>(batch.size()));

  LossParts parts;
  parts.task_value = task.item();

  if (cfg.regularizer == RegKind::none || cfg.lambda == 0.0) {
    parts.total = task;
    return parts;
  }
  if (model.kind == ModelKind::deepsets) {
    throw std::invalid_argument("total_loss: regularizers apply to recurrent models only");
  }

  auto cell = model.make_cell();
  const int budget = cfg.sampler.states_per_batch > 0 ? cfg.sampler.states_per_batch
                                                      : static_cast<int>(batch.size());
  Var penalty;
  if (cfg.regularizer == RegKind::sire) {
    SamplerConfig scfg = cfg.sampler;
    scfg.states_per_batch = budget;
    if (scfg.pairs_per_state < 1) scfg.pairs_per_state = 1;
    scfg.seed = Rng::derive(cfg.seed, "sire-bank", static_cast<std::uint64_t>(epoch),
                            static_cast<std::uint64_t>(batch_index));
    const StateBank bank = collect_states(*cell, data, scfg);
    Rng pair_rng = Rng::stream(cfg.seed, "sire-pairs", static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(batch_index));
    penalty = sire_penalty(tape, *cell, data, bank, scfg.pairs_per_state, pair_rng,
                           cfg.detach_bank);
  } else {
    Rng sub_rng = Rng::stream(cfg.seed, "sub-samples", static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(batch_index));
    penalty = sub_penalty(tape, *cell, data, budget, sub_rng);
  }
  parts.reg_value = penalty.item();
  parts.total = tape.add(task, tape.scale(penalty, cfg.lambda));
  return parts;
}

// ---------------------------------------------------------------------------

namespace {

double predict_encoded(const Model& model, const std::vector<Tensor>& seq) {
  Tape tape;
  return model_output(tape, model, seq).item();
}

double accuracy_indices(const Model& model, const EncodedDataset& data,
                        const std::string& task, std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  long hits = 0;
  const bool parity = task == "parity";
  const double cutoff = model.head_logits ? 0.0 : 0.5;
  for (std::size_t i : idx) {
    const double raw = predict_encoded(model, data.sequences[i]);
    if (parity) {
      const int pred = raw > cutoff ? 1 : 0;
      hits += pred == static_cast<int>(data.labels[i]);
    } else {
      hits += std::round(raw) == data.labels[i];
    }
  }
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

double rmse_indices(const Model& model, const EncodedDataset& data,
                    std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i : idx) {
    const double d = predict_encoded(model, data.sequences[i]) - data.labels[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(idx.size()));
}

double metric_indices(const Model& model, const EncodedDataset& data, const std::string& task,
                      std::span<const std::size_t> idx) {
  return task_uses_accuracy(task) ? accuracy_indices(model, data, task, idx)
                                  : rmse_indices(model, data, idx);
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

double evaluate_accuracy(const Model& model, const SequenceDataset& ds) {
  const EncodedDataset data = encode_sequences(ds.sequences, ds.labels, model.encoding);
  return accuracy_indices(model, data, ds.task, all_indices(ds.size()));
}

double evaluate_rmse(const Model& model, const SequenceDataset& ds) {
  const EncodedDataset data = encode_sequences(ds.sequences, ds.labels, model.encoding);
  return rmse_indices(model, data, all_indices(ds.size()));
}

double evaluate_metric(const Model& model, const SequenceDataset& ds) {
  return task_uses_accuracy(ds.task) ? evaluate_accuracy(model, ds) : evaluate_rmse(model, ds);
}

bool metric_higher_is_better(const std::string& task) { return task_uses_accuracy(task); }

// ---------------------------------------------------------------------------

RunReport train_model(Model& model, const SequenceDataset& ds, const SequenceDataset* test,
                      const TrainingConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw std::invalid_argument("train_model: epochs and batch size must be >= 1");
  }
  if (cfg.learning_rate <= 0.0) throw std::invalid_argument("train_model: learning rate must be > 0");
  if (ds.size() == 0) throw std::invalid_argument("train_model: empty dataset");

  const auto t0 = std::chrono::steady_clock::now();
  const EncodedDataset data = encode_sequences(ds.sequences, ds.labels, model.encoding);

  std::vector<std::size_t> order = all_indices(ds.size());
  {
    Rng split_rng = Rng::stream(cfg.seed, "holdout-split");
    split_rng.shuffle(order);
  }
  const std::size_t holdout_n =
      static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(ds.size()));
  std::vector<std::size_t> holdout_idx(order.begin(), order.begin() + static_cast<long>(holdout_n));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(holdout_n), order.end());
  if (train_idx.empty()) throw std::invalid_argument("train_model: holdout leaves no train data");

  const std::vector<Tensor*> params = model.parameters();
  AdamState adam;
  adam.init(params);
  Rng shuffle_rng = Rng::stream(cfg.seed, "batch-shuffle");

  RunReport report;
  report.rows.reserve(static_cast<std::size_t>(cfg.epochs));
  Tape tape;

  const bool higher_better = metric_higher_is_better(ds.task);
  std::vector<std::vector<double>> best_params;
  double best_holdout = higher_better ? -1.0 : std::numeric_limits<double>::infinity();
  auto snapshot = [&]() {
    best_params.clear();
    for (const Tensor* p : params) best_params.push_back(p->data);
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    double task_sum = 0.0;
    double reg_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(train_idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
      tape.reset();
      LossParts parts = total_loss(
          tape, model, data, std::span<const std::size_t>(train_idx).subspan(start, stop - start),
          cfg, epoch, batches);
      if (!std::isfinite(parts.task_value) || !std::isfinite(parts.reg_value)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch + 1) + " batch " + std::to_string(batches));
      }
      for (Tensor* p : params) p->zero_grad();
      tape.backward(parts.total);
      clip_gradients(params, cfg.clip_norm);
      if (cfg.optimizer == OptimizerKind::adam) {
        adam.step(params, cfg.learning_rate);
      } else {
        sgd_step(params, cfg.learning_rate);
      }
      task_sum += parts.task_value;
      reg_sum += parts.reg_value;
      ++batches;
    }
    EpochRow row;
    row.epoch = epoch + 1;
    row.task_loss = task_sum / static_cast<double>(batches);
    row.reg_value = reg_sum / static_cast<double>(batches);
    row.train_metric = metric_indices(model, data, ds.task, train_idx);
    row.holdout_metric = holdout_idx.empty() ? row.train_metric
                                             : metric_indices(model, data, ds.task, holdout_idx);
    report.rows.push_back(row);
    if (cfg.keep_best_holdout &&
        (higher_better ? row.holdout_metric > best_holdout
                       : row.holdout_metric < best_holdout)) {
      best_holdout = row.holdout_metric;
      snapshot();
    }
  }

  if (cfg.keep_best_holdout && !best_params.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->data = best_params[i];
    report.selected_holdout_metric = best_holdout;
  } else {
    report.selected_holdout_metric = report.rows.back().holdout_metric;
  }

  if (test) {
    report.has_test_metric = true;
    report.final_test_metric = evaluate_metric(model, *test);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string run_report_csv(const RunReport& report) {
  std::ostringstream os;
  os << "epoch,task_loss,reg_value,train_metric,holdout_metric\n";
  char buf[32];
  for (const EpochRow& r : report.rows) {
    os << r.epoch;
    for (double v : {r.task_loss, r.reg_value, r.train_metric, r.holdout_metric}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

void save_run_report_csv(const RunReport& report, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << run_report_csv(report);
  if (!os) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------

SelectionResult holdout_select(const std::vector<TrainingConfig>& configs,
                               const SequenceDataset& ds, const SequenceDataset* test,
                               const std::function<Model(const TrainingConfig&)>& make_model,
                               int jobs) {
  if (configs.empty()) throw std::invalid_argument("holdout_select: no configs");
  SelectionResult result;
  result.reports.resize(configs.size());
  result.models.resize(configs.size());

  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      try {
        Model model = make_model(configs[i]);
        result.reports[i] = train_model(model, ds, test, configs[i]);
        result.models[i] = std::move(model);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  const bool higher = metric_higher_is_better(ds.task);
  int best = 0;
  auto final_holdout = [&](int i) {
    return result.reports[static_cast<std::size_t>(i)].selected_holdout_metric;
  };
  for (int i = 1; i < static_cast<int>(configs.size()); ++i) {
    const double a = final_holdout(i);
    const double b = final_holdout(best);
    const bool better = higher ? a > b : a < b;
    const bool tie = a == b;
    if (better || (tie && configs[static_cast<std::size_t>(i)].lambda <
                              configs[static_cast<std::size_t>(best)].lambda)) {
      best = i;
    }
  }
  result.best_index = best;
  return result;
}

}  // namespace permrnn
