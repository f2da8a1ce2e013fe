#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "permrnn/models.hpp"
#include "permrnn/regularizers.hpp"
#include "permrnn/tasks.hpp"

namespace permrnn {

enum class OptimizerKind { adam, sgd };
enum class RegKind { none, sire, sub };
enum class LossKind { l1, cross_entropy, mse };

std::string optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_name(const std::string& name);
std::string reg_name(RegKind k);
RegKind reg_from_name(const std::string& name);
std::string loss_name(LossKind k);
LossKind loss_from_name(const std::string& name);

// Default loss for a task: cross-entropy for parity, mse for variance,
// l1 otherwise.
LossKind default_loss_for_task(const std::string& task);

struct TrainingConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  int epochs = 1000;
  int batch_size = 32;
  double lambda = 0.0;
  RegKind regularizer = RegKind::none;
  LossKind loss = LossKind::l1;
  SamplerConfig sampler;  // states_per_batch <= 0 means "match batch size"
  std::uint64_t seed = 0;
  double clip_norm = 5.0;  // 0 disables gradient clipping
  bool detach_bank = false;
  double holdout_fraction = 0.2;
  // Return the parameter snapshot with the best holdout metric rather than
  // the last epoch's parameters; late training under Adam jitters around
  // the optimum, which whipsaws exact-match metrics.
  bool keep_best_holdout = true;
};

struct EpochRow {
  int epoch = 0;
  double task_loss = 0.0;
  double reg_value = 0.0;
  double train_metric = 0.0;
  double holdout_metric = 0.0;
};

struct RunReport {
  std::vector<EpochRow> rows;
  // holdout metric of the parameters actually returned (best epoch when
  // keep_best_holdout is set, last epoch otherwise)
  double selected_holdout_metric = 0.0;
  bool has_test_metric = false;
  double final_test_metric = 0.0;
  double wall_seconds = 0.0;
};

// ---------------------------------------------------------------------------
// Optimizers

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v;

  void init(const std::vector<Tensor*>& params);
  void step(const std::vector<Tensor*>& params, double lr);
};

void sgd_step(const std::vector<Tensor*>& params, double lr);

// Scales all gradients so the global L2 norm is at most max_norm; returns
// the pre-clip norm. max_norm <= 0 is a no-op.
double clip_gradients(const std::vector<Tensor*>& params, double max_norm);

// ---------------------------------------------------------------------------
// Loss assembly and evaluation

struct LossParts {
  Var total;
  double task_value = 0.0;
  double reg_value = 0.0;
};

// Task loss over the batch plus lambda * penalty. The penalty is skipped
// entirely when lambda == 0 or the regularizer tag is none.
LossParts total_loss(Tape& tape, Model& model, const EncodedDataset& data,
                     std::span<const std::size_t> batch, const TrainingConfig& cfg,
                     int epoch, int batch_index);

// Zero-one accuracy: parity thresholds the output (at 0 for logit heads,
// 0.5 for raw state outputs); regression rounds half away from zero and
// compares exactly.
double evaluate_accuracy(const Model& model, const SequenceDataset& ds);
double evaluate_rmse(const Model& model, const SequenceDataset& ds);

// The task's headline metric: rmse for variance, accuracy otherwise.
double evaluate_metric(const Model& model, const SequenceDataset& ds);
bool metric_higher_is_better(const std::string& task);

// ---------------------------------------------------------------------------
// Training loop

// Splits ds into train/holdout per cfg.holdout_fraction, runs cfg.epochs of
// minibatch training, and reports per-epoch task loss, penalty value and
// metrics. test, when given, supplies the final test metric.
RunReport train_model(Model& model, const SequenceDataset& ds, const SequenceDataset* test,
                      const TrainingConfig& cfg);

std::string run_report_csv(const RunReport& report);
void save_run_report_csv(const RunReport& report, const std::string& path);

// ---------------------------------------------------------------------------
// Hyperparameter selection

struct SelectionResult {
  int best_index = 0;
  std::vector<RunReport> reports;
  std::vector<Model> models;
};

// Trains one model per config and ranks by final holdout metric. Ties break
// toward smaller lambda, then config order. Runs up to `jobs` configs
// concurrently; results are independent of scheduling.
SelectionResult holdout_select(const std::vector<TrainingConfig>& configs,
                               const SequenceDataset& ds, const SequenceDataset* test,
                               const std::function<Model(const TrainingConfig&)>& make_model,
                               int jobs = 1);

}  // namespace permrnn
