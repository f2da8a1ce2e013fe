#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "permrnn/exact.hpp"
#include "permrnn/training.hpp"

using namespace permrnn;

namespace {

// Exact running-sum cell over nonnegative inputs: s' = relu(s + x) = s + x.
Model exact_sum_model() {
  Model m;
  m.kind = ModelKind::rnn;
  m.rnn.w_out = Tensor::matrix(1, 1, {1.0});
  m.rnn.w_in = Tensor::matrix(1, 1, {1.0});
  m.rnn.w_state = Tensor::matrix(1, 1, {1.0});
  m.rnn.bias = Tensor::vector({0.0});
  m.rnn.s0 = Tensor::vector({0.0});
  m.rnn.act = Activation::relu;
  for (Tensor* t : m.parameters()) t->requires_grad = true;
  m.encoding.alphabet_max = 1;  // encode bits exactly
  return m;
}

Model parity_model() {
  Model m;
  m.kind = ModelKind::rnn;
  m.rnn = build_parity_rnn();
  m.encoding.alphabet_max = 1;
  return m;
}

Model small_rnn_model(std::uint64_t seed) {
  Model m;
  m.kind = ModelKind::rnn;
  Rng rng = Rng::stream(seed, "init/rnn");
  m.rnn = make_rnn(4, 1, 2, Activation::tanh, rng);
  m.head = make_mlp({2, 1}, Activation::linear, Activation::linear, rng);
  m.head_logits = true;
  m.encoding.alphabet_max = 1;
  return m;
}

}  // namespace

TEST_CASE("total_loss") {
  const SequenceDataset ds = gen_arithmetic("sum", 20, 5, 1, 3);

  SUBCASE("lambda zero equals the task loss exactly") {
    Model m = small_rnn_model(1);
    m.head_logits = false;
    const EncodedDataset data = encode_sequences(ds.sequences, ds.labels, m.encoding);
    std::vector<std::size_t> batch{0, 1, 2, 3};
    TrainingConfig cfg;
    cfg.loss = LossKind::l1;
    cfg.lambda = 0.0;
    cfg.regularizer = RegKind::sire;
    Tape tape;
    const LossParts parts = total_loss(tape, m, data, batch, cfg, 0, 0);
    CHECK(parts.total.item() == parts.task_value);
    CHECK(parts.reg_value == 0.0);
  }

  SUBCASE("a perfect sum model has zero l1 loss") {
    Model m = exact_sum_model();
    const EncodedDataset data = encode_sequences(ds.sequences, ds.labels, m.encoding);
    std::vector<std::size_t> batch;
    for (std::size_t i = 0; i < ds.size(); ++i) batch.push_back(i);
    TrainingConfig cfg;
    cfg.loss = LossKind::l1;
    Tape tape;
    CHECK(total_loss(tape, m, data, batch, cfg, 0, 0).total.item() == 0.0);
  }

  SUBCASE("exact parity cell with sire pays no penalty at any lambda") {
    Model m = parity_model();
    const SequenceDataset pd = gen_parity(24, 2, 6, 5);
    const EncodedDataset data = encode_sequences(pd.sequences, pd.labels, m.encoding);
    std::vector<std::size_t> batch;
    for (std::size_t i = 0; i < pd.size(); ++i) batch.push_back(i);
    TrainingConfig cfg;
    cfg.loss = LossKind::l1;  // raw parity states match labels exactly
    cfg.regularizer = RegKind::sire;
    cfg.lambda = 0.7;
    Tape tape;
    const LossParts parts = total_loss(tape, m, data, batch, cfg, 0, 0);
    CHECK(parts.reg_value <= 1e-12);
    CHECK(parts.total.item() == parts.task_value + 0.7 * parts.reg_value);
    CHECK(parts.task_value == 0.0);
  }

  SUBCASE("cross-entropy without a logit head is a config error") {
    Model m = parity_model();  // identity head, head_logits = false
    const SequenceDataset pd = gen_parity(8, 2, 4, 6);
    const EncodedDataset data = encode_sequences(pd.sequences, pd.labels, m.encoding);
    std::vector<std::size_t> batch{0, 1};
    TrainingConfig cfg;
    cfg.loss = LossKind::cross_entropy;
    Tape tape;
    CHECK_THROWS_AS(total_loss(tape, m, data, batch, cfg, 0, 0), std::invalid_argument);
  }
}

TEST_CASE("optimizers") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::vector({1.0, -2.0});
    p.requires_grad = true;
    p.zero_grad();
    const std::vector<double> before = p.data;
    AdamState adam;
    adam.init({&p});
    adam.step({&p}, 1e-3);
    CHECK(p.data == before);
    sgd_step({&p}, 1e-3);
    CHECK(p.data == before);
  }

  SUBCASE("sgd on a quadratic descends monotonically") {
    Tensor p = Tensor::vector({2.0});
    p.requires_grad = true;
    double prev = p.data[0];
    for (int i = 0; i < 25; ++i) {
      Tape tape;
      Var loss = tape.sum(tape.square(tape.leaf(p)));
      p.zero_grad();
      tape.backward(loss);
      sgd_step({&p}, 0.1);
      CHECK(p.data[0] < prev);
      CHECK(p.data[0] > 0.0);
      prev = p.data[0];
    }
  }

  SUBCASE("adam's first step has magnitude ~lr regardless of gradient scale") {
    for (double g : {0.001, 3.7, 2500.0}) {
      Tensor p = Tensor::vector({1.0});
      p.requires_grad = true;
      p.zero_grad();
      p.grad[0] = g;
      AdamState adam;
      adam.init({&p});
      adam.step({&p}, 0.01);
      const double expected = 0.01 * g / (g + 1e-8);  // closed-form first step
      CHECK(std::fabs((1.0 - p.data[0]) - expected) <= 1e-12);
    }
  }

  SUBCASE("one step decreases a convex probe loss") {
    // scalar linear model, L1 away from the kink
    Tensor w = Tensor::vector({0.0});
    w.requires_grad = true;
    const std::vector<double> xs{1.0, 2.0, 3.0};
    const std::vector<double> ys{2.0, 4.0, 6.0};
    auto loss_value = [&]() {
      double acc = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) acc += std::fabs(w.data[0] * xs[i] - ys[i]);
      return acc / 3.0;
    };
    const double before = loss_value();
    Tape tape;
    Var acc;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      Var pred = tape.scale(tape.leaf(w), xs[i]);
      Var term = tape.abs(tape.sub(pred, tape.constant(ys[i])));
      acc = acc.valid() ? tape.add(acc, term) : term;
    }
    Var loss = tape.scale(tape.sum(acc), 1.0 / 3.0);
    w.zero_grad();
    tape.backward(loss);
    AdamState adam;
    adam.init({&w});
    adam.step({&w}, 0.05);
    CHECK(loss_value() < before);
  }

  SUBCASE("gradient clipping caps the global norm") {
    Tensor a = Tensor::vector({3.0});
    Tensor b = Tensor::vector({4.0});
    a.requires_grad = b.requires_grad = true;
    a.zero_grad();
    b.zero_grad();
    a.grad[0] = 3.0;
    b.grad[0] = 4.0;
    const double norm = clip_gradients({&a, &b}, 1.0);
    CHECK(norm == doctest::Approx(5.0));
    CHECK(a.grad[0] == doctest::Approx(0.6));
    CHECK(b.grad[0] == doctest::Approx(0.8));
  }
}

TEST_CASE("evaluation metrics") {
  SUBCASE("a perfect model scores accuracy 1") {
    Model m = exact_sum_model();
    const SequenceDataset ds = gen_arithmetic("sum", 40, 6, 1, 9);
    CHECK(evaluate_accuracy(m, ds) == 1.0);
    CHECK(evaluate_rmse(m, ds) == 0.0);
  }

  SUBCASE("a constant-zero model on balanced parity sits near chance") {
    Model m = exact_sum_model();  // outputs the bit sum; force weights to zero
    for (Tensor* t : m.parameters()) {
      for (double& v : t->data) v = 0.0;
    }
    const SequenceDataset ds = gen_parity(2000, 2, 10, 11);
    const double acc = evaluate_accuracy(m, ds);
    CHECK(acc > 0.4);
    CHECK(acc < 0.6);
  }

  SUBCASE("rounding rule: half away from zero") {
    // a constant-output model: zero cell, head bias = the constant
    auto constant_model = [](double c) {
      Model m = exact_sum_model();
      for (Tensor* t : m.parameters()) {
        for (double& v : t->data) v = 0.0;
      }
      MlpLayer head;
      head.weight = Tensor::matrix(1, 1, {0.0});
      head.bias = Tensor::vector({c});
      head.act = Activation::linear;
      m.head.layers.push_back(head);
      return m;
    };
    SequenceDataset ds;
    ds.task = "sum";
    ds.alphabet_max = 1;
    ds.sequences = {{1, 1, 1, 1, 1}};
    ds.labels = {5.0};
    CHECK(evaluate_accuracy(constant_model(5.4), ds) == 1.0);  // rounds to 5
    CHECK(evaluate_accuracy(constant_model(5.6), ds) == 0.0);  // rounds to 6
    CHECK(evaluate_accuracy(constant_model(5.5), ds) == 0.0);  // half away from zero
    CHECK(std::round(-2.5) == -3.0);
  }

  SUBCASE("a constant mean-label predictor scores the label standard deviation") {
    Model m = exact_sum_model();
    for (Tensor* t : m.parameters()) {
      for (double& v : t->data) v = 0.0;
    }
    MlpLayer head;
    head.weight = Tensor::matrix(1, 1, {0.0});
    head.bias = Tensor::vector({2.0});  // mean of labels below
    head.act = Activation::linear;
    m.head.layers.push_back(head);
    SequenceDataset ds;
    ds.task = "sum";
    ds.alphabet_max = 1;
    ds.sequences = {{1}, {1, 1}, {1, 1, 1}};
    ds.labels = {1.0, 2.0, 3.0};
    const double std_dev = std::sqrt(2.0 / 3.0);
    CHECK(evaluate_rmse(m, ds) == doctest::Approx(std_dev).epsilon(1e-12));
  }

  SUBCASE("rmse of a single example") {
    Model m = exact_sum_model();
    SequenceDataset ds;
    ds.task = "sum";
    ds.alphabet_max = 1;
    ds.sequences = {{1, 0, 1, 1}};  // model outputs 3
    ds.labels = {1.0};
    CHECK(evaluate_rmse(m, ds) == 2.0);
  }
}

TEST_CASE("train_model") {
  const SequenceDataset ds = gen_parity(40, 2, 6, 13);

  SUBCASE("report has one row per epoch and finite values") {
    Model m = small_rnn_model(2);
    TrainingConfig cfg;
    cfg.epochs = 7;
    cfg.batch_size = 8;
    cfg.loss = LossKind::cross_entropy;
    cfg.seed = 2;
    const RunReport report = train_model(m, ds, nullptr, cfg);
    CHECK(report.rows.size() == 7);
    for (const EpochRow& r : report.rows) {
      CHECK(std::isfinite(r.task_loss));
      CHECK(std::isfinite(r.holdout_metric));
      CHECK(r.train_metric >= 0.0);
      CHECK(r.train_metric <= 1.0);
    }
  }

  SUBCASE("training is reproducible and unaffected by a zero-lambda regularizer") {
    auto run = [&](RegKind reg) {
      Model m = small_rnn_model(3);
      TrainingConfig cfg;
      cfg.epochs = 5;
      cfg.batch_size = 8;
      cfg.loss = LossKind::cross_entropy;
      cfg.seed = 17;
      cfg.regularizer = reg;
      cfg.lambda = 0.0;
      const RunReport report = train_model(m, ds, nullptr, cfg);
      return run_report_csv(report);
    };
    const std::string none_csv = run(RegKind::none);
    CHECK(run(RegKind::none) == none_csv);  // rerun identical
    CHECK(run(RegKind::sire) == none_csv);  // lambda 0 skips the penalty
  }

  SUBCASE("sire regularization runs and reports a penalty") {
    Model m = small_rnn_model(4);
    TrainingConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.loss = LossKind::cross_entropy;
    cfg.seed = 5;
    cfg.regularizer = RegKind::sire;
    cfg.lambda = 0.1;
    const RunReport report = train_model(m, ds, nullptr, cfg);
    bool any_reg = false;
    for (const EpochRow& r : report.rows) any_reg |= r.reg_value > 0.0;
    CHECK(any_reg);
  }

  SUBCASE("csv header is fixed") {
    RunReport r;
    r.rows.push_back({1, 0.5, 0.0, 0.25, 0.25});
    const std::string csv = run_report_csv(r);
    CHECK(csv.substr(0, csv.find('\n')) ==
          "epoch,task_loss,reg_value,train_metric,holdout_metric");
  }
}

TEST_CASE("holdout_select") {
  const SequenceDataset ds = gen_parity(40, 2, 6, 19);
  auto make_model = [](const TrainingConfig& cfg) { return small_rnn_model(cfg.seed); };

  TrainingConfig base;
  base.epochs = 4;
  base.batch_size = 8;
  base.loss = LossKind::cross_entropy;
  base.seed = 23;

  SUBCASE("a single config is returned unchanged") {
    const SelectionResult r = holdout_select({base}, ds, nullptr, make_model);
    CHECK(r.best_index == 0);
    CHECK(r.reports.size() == 1);
  }

  SUBCASE("selection is deterministic, serial or parallel") {
    std::vector<TrainingConfig> grid;
    for (double lambda : {0.0, 0.01, 0.1}) {
      TrainingConfig cfg = base;
      cfg.lambda = lambda;
      cfg.regularizer = lambda > 0 ? RegKind::sire : RegKind::none;
      grid.push_back(cfg);
    }
    const SelectionResult serial = holdout_select(grid, ds, nullptr, make_model, 1);
    const SelectionResult parallel = holdout_select(grid, ds, nullptr, make_model, 3);
    CHECK(serial.best_index == parallel.best_index);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      CHECK(run_report_csv(serial.reports[i]) == run_report_csv(parallel.reports[i]));
    }
  }
}
