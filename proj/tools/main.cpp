// permrnn command line: dataset generation, training, invariance audits,
// the exact parity construction, and grid sweeps. Every command is a pure
// function of its flags (including --seed); each output file gets a
// .manifest sibling echoing the exact invocation.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "permrnn/auditor.hpp"
#include "permrnn/exact.hpp"
#include "permrnn/models.hpp"
#include "permrnn/tasks.hpp"
#include "permrnn/training.hpp"

namespace fs = std::filesystem;
using namespace permrnn;

namespace {

std::string g_invocation;

void write_manifest(const std::string& target) {
  std::ofstream os(target + ".manifest", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest for " + target);
  os << g_invocation << '\n';
}

std::string default_out_dir() {
  const char* env = std::getenv("PERMRNN_OUT_DIR");
  return env && *env ? std::string(env) : std::string(".");
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

char fmt_buf[64];
const char* fmt(double v) {
  std::snprintf(fmt_buf, sizeof(fmt_buf), "%.17g", v);
  return fmt_buf;
}

// ---------------------------------------------------------------------------

struct GenOptions {
  std::string task;
  std::size_t count = 1000;
  int len = 10;
  int len_lo = 2;
  int len_hi = 10;
  int alphabet_max = 99;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen(const GenOptions& o) {
  SequenceDataset ds;
  if (o.task == "parity") {
    ds = gen_parity(o.count, o.len_lo, o.len_hi, o.seed);
  } else {
    ds = gen_arithmetic(o.task, o.count, o.len, o.alphabet_max, o.seed);
  }
  std::string out = o.out.empty() ? join_path(default_out_dir(), o.task + ".txt") : o.out;
  save_dataset(ds, out);
  write_manifest(out);
  std::cout << "wrote " << ds.size() << " examples to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string data_path;
  std::string test_path;
  std::string out_dir;
  std::string model = "rnn";
  int hidden = 20;
  int state_width = 0;  // 0: same as hidden
  std::string activation = "tanh";
  bool one_hot = false;
  bool centered = false;
  int phi_hidden = 100;
  int phi_out = 1;
  int rho_hidden = 100;
  std::string reg = "none";
  double lambda = 0.0;
  double lr = 1e-3;
  int epochs = 1000;
  int batch = 32;
  std::string loss = "auto";
  std::uint64_t seed = 0;
  double clip = 5.0;
  bool detach_bank = false;
  int states_per_batch = 0;
  int pairs_per_state = 1;
  bool prefix_states = false;
  double holdout = 0.2;
  bool keep_final = false;
};

Model build_model(const TrainOptions& o, const std::string& task, int alphabet_max,
                  std::uint64_t seed) {
  Model m;
  m.encoding.one_hot = o.one_hot;
  m.encoding.centered = o.centered;
  m.encoding.alphabet_max = alphabet_max;
  m.head_logits = (task == "parity");
  const std::size_t in_w = m.encoding.width();
  const std::size_t hidden = static_cast<std::size_t>(o.hidden);
  const std::size_t state_w =
      o.state_width > 0 ? static_cast<std::size_t>(o.state_width) : hidden;
  const ModelKind kind = model_kind_from_name(o.model);
  m.kind = kind;
  Rng rng = Rng::stream(seed, "init/" + o.model);
  switch (kind) {
    case ModelKind::rnn:
      m.rnn = make_rnn(hidden, in_w, state_w, activation_from_name(o.activation), rng);
      m.head = make_mlp({state_w, 1}, Activation::linear, Activation::linear, rng);
      break;
    case ModelKind::gru:
      m.gru = make_gru(hidden, in_w, rng);
      m.head = make_mlp({hidden, 1}, Activation::linear, Activation::linear, rng);
      break;
    case ModelKind::deepsets:
      m.deepsets = make_deepsets(in_w, static_cast<std::size_t>(o.phi_hidden),
                                 static_cast<std::size_t>(o.phi_out),
                                 static_cast<std::size_t>(o.rho_hidden), 1, rng);
      break;
  }
  return m;
}

TrainingConfig build_config(const TrainOptions& o, const std::string& task) {
  TrainingConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.lambda = o.lambda;
  cfg.regularizer = reg_from_name(o.reg);
  cfg.loss = o.loss == "auto" ? default_loss_for_task(task) : loss_from_name(o.loss);
  cfg.seed = o.seed;
  cfg.clip_norm = o.clip;
  cfg.detach_bank = o.detach_bank;
  cfg.holdout_fraction = o.holdout;
  cfg.sampler.states_per_batch = o.states_per_batch;
  cfg.sampler.pairs_per_state = o.pairs_per_state;
  cfg.sampler.scheme =
      o.prefix_states ? SamplerConfig::Scheme::prefix_only : SamplerConfig::Scheme::uniform;
  cfg.keep_best_holdout = !o.keep_final;
  return cfg;
}

int cmd_train(const TrainOptions& o) {
  const SequenceDataset train = load_dataset(o.data_path);
  SequenceDataset test;
  const bool have_test = !o.test_path.empty();
  if (have_test) test = load_dataset(o.test_path);

  Model model = build_model(o, train.task, train.alphabet_max, o.seed);
  const TrainingConfig cfg = build_config(o, train.task);

  RunReport report = train_model(model, train, have_test ? &test : nullptr, cfg);

  const std::string out_dir = o.out_dir.empty() ? default_out_dir() : o.out_dir;
  ensure_dir(out_dir);
  const std::string model_path = join_path(out_dir, "model.txt");
  const std::string csv_path = join_path(out_dir, "report.csv");
  save_model(model, model_path);
  write_manifest(model_path);
  save_run_report_csv(report, csv_path);
  write_manifest(csv_path);

  const EpochRow& last = report.rows.back();
  std::cout << "epochs " << report.rows.size() << "  task_loss " << fmt(last.task_loss)
            << "  train_metric " << fmt(last.train_metric) << "  holdout_metric "
            << fmt(last.holdout_metric) << "\n";
  std::cout << "selected_holdout " << fmt(report.selected_holdout_metric) << "\n";
  if (report.has_test_metric) {
    std::cout << "test_metric " << fmt(report.final_test_metric) << "\n";
  }
  std::cout << "wall_seconds " << report.wall_seconds << "\n";
  std::cout << "wrote " << model_path << " and " << csv_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct AuditOptions {
  std::string model_path;
  std::string data_path;
  int perms = 20;
  int subsets = 10;
  int subset_perms = 2;
  int pairs = 200;
  int bank_states = 128;
  bool output_level = false;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_audit(const AuditOptions& o) {
  const Model model = load_model(o.model_path);
  const SequenceDataset ds = load_dataset(o.data_path);
  const EncodedDataset data = encode_sequences(ds.sequences, ds.labels, model.encoding);

  std::vector<AuditReport> reports;
  if (model.kind == ModelKind::deepsets) {
    const SetFunction eval = [&](std::span<const Tensor> xs) {
      Tape tape;
      return deepsets_forward(tape, model.deepsets, xs).value();
    };
    reports.push_back(audit_perm_invariance_fn(eval, data, o.perms, o.seed, 1));
    reports.push_back(audit_subset_invariance_fn(eval, data, o.subsets, o.subset_perms, o.seed, 1));
  } else {
    auto cell = model.make_cell();
    reports.push_back(audit_perm_invariance(*cell, data, o.perms, o.seed));
    reports.push_back(audit_subset_invariance(*cell, data, o.subsets, o.subset_perms, o.seed));
    SamplerConfig scfg;
    scfg.states_per_batch = o.bank_states;
    scfg.seed = Rng::derive(o.seed, "audit-bank");
    const StateBank bank = collect_states(*cell, data, scfg);
    reports.push_back(audit_pair_swap(*cell, bank, data, o.pairs, o.seed));
    if (o.output_level && !model.head.empty()) {
      AuditReport r = audit_perm_invariance(*cell, data, o.perms, o.seed, &model.head);
      r.probe += "/output";
      reports.push_back(r);
      r = audit_subset_invariance(*cell, data, o.subsets, o.subset_perms, o.seed, &model.head);
      r.probe += "/output";
      reports.push_back(r);
    }
  }

  std::string out = o.out.empty() ? join_path(default_out_dir(), "audit.csv") : o.out;
  {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + out);
    os << audit_report_csv_header() << '\n';
    for (const AuditReport& r : reports) os << audit_report_csv_row(r) << '\n';
  }
  write_manifest(out);
  for (const AuditReport& r : reports) {
    std::cout << r.probe << ": mean_sq " << fmt(r.mean_sq_violation);
    std::cout << " max_sq " << fmt(r.max_sq_violation) << " probes " << r.num_probes << "\n";
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ConstructOptions {
  std::string out;
  int max_len = 16;
};

int cmd_construct_parity(const ConstructOptions& o) {
  Model model;
  model.kind = ModelKind::rnn;
  model.rnn = build_parity_rnn();
  model.encoding.alphabet_max = 1;
  model.head_logits = false;

  std::cout << "weight parameters: " << parity_rnn_weight_count(model.rnn) << "\n";
  const double err = parity_exhaustive_max_error(model.rnn, o.max_len);
  std::cout << "max |state - parity| over all binary sequences of length <= " << o.max_len
            << ": " << fmt(err) << "\n";
  const bool pass = err <= 1e-9;
  std::cout << "self-test: " << (pass ? "PASS" : "FAIL") << "\n";

  std::string out = o.out.empty() ? join_path(default_out_dir(), "parity_rnn.txt") : o.out;
  save_model(model, out);
  write_manifest(out);
  std::cout << "wrote " << out << "\n";
  if (!pass) throw std::runtime_error("parity construction self-test failed");
  return 0;
}

// ---------------------------------------------------------------------------

struct SweepOptions {
  TrainOptions train;
  std::string grid;  // kind=v1,v2,...
  int seeds = 1;
  int jobs = 1;
  std::string task = "sum";  // for train-length grids
  int alphabet_max = 99;
  std::size_t count = 1000;
  std::size_t test_count = 1000;
  std::string out;
};

struct GridSpec {
  std::string kind;
  std::vector<double> values;
};

GridSpec parse_grid(const std::string& text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string::npos) {
    throw std::runtime_error("--grid must look like kind=v1,v2,... (got '" + text + "')");
  }
  GridSpec spec;
  spec.kind = text.substr(0, eq);
  std::stringstream ss(text.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) spec.values.push_back(std::stod(item));
  }
  if (spec.kind != "lambda" && spec.kind != "test-length" && spec.kind != "train-length") {
    throw std::runtime_error("unknown grid kind: " + spec.kind);
  }
  if (spec.values.empty()) throw std::runtime_error("empty grid: " + text);
  return spec;
}

struct SweepRow {
  std::string param;
  double value = 0.0;
  std::uint64_t seed = 0;
  double holdout_metric = 0.0;
  double test_metric = 0.0;
};

int cmd_sweep(const SweepOptions& o) {
  const GridSpec grid = parse_grid(o.grid);
  if (o.seeds < 1) throw std::runtime_error("--seeds must be >= 1");

  struct Job {
    std::size_t grid_index;
    int seed_index;
  };
  std::vector<Job> jobs_list;
  for (std::size_t g = 0; g < grid.values.size(); ++g) {
    for (int s = 0; s < o.seeds; ++s) jobs_list.push_back({g, s});
  }
  std::vector<SweepRow> rows(jobs_list.size());

  SequenceDataset base_train, base_test;
  if (grid.kind != "train-length") {
    base_train = load_dataset(o.train.data_path);
    if (!o.train.test_path.empty()) base_test = load_dataset(o.train.test_path);
  }

  auto run_one = [&](const Job& job) {
    const double value = grid.values[job.grid_index];
    const std::uint64_t run_seed =
        Rng::derive(o.train.seed, "sweep-run", job.grid_index,
                    static_cast<std::uint64_t>(job.seed_index));
    TrainOptions topt = o.train;
    topt.seed = run_seed;
    SweepRow row;
    row.param = grid.kind;
    row.value = value;
    row.seed = run_seed;

    if (grid.kind == "lambda") {
      topt.lambda = value;
      if (value == 0.0) topt.reg = "none";
      Model model = build_model(topt, base_train.task, base_train.alphabet_max, run_seed);
      const TrainingConfig cfg = build_config(topt, base_train.task);
      const SequenceDataset* test = base_test.size() ? &base_test : nullptr;
      RunReport rep = train_model(model, base_train, test, cfg);
      row.holdout_metric = rep.selected_holdout_metric;
      row.test_metric = rep.has_test_metric ? rep.final_test_metric : row.holdout_metric;
    } else if (grid.kind == "test-length") {
      Model model = build_model(topt, base_train.task, base_train.alphabet_max, run_seed);
      const TrainingConfig cfg = build_config(topt, base_train.task);
      RunReport rep = train_model(model, base_train, nullptr, cfg);
      const int len = static_cast<int>(value);
      SequenceDataset test =
          base_train.task == "parity"
              ? gen_parity(o.test_count, len, len, Rng::derive(o.train.seed, "sweep-test",
                                                               static_cast<std::uint64_t>(len)))
              : gen_arithmetic(base_train.task, o.test_count, len, base_train.alphabet_max,
                               Rng::derive(o.train.seed, "sweep-test",
                                           static_cast<std::uint64_t>(len)));
      row.holdout_metric = rep.selected_holdout_metric;
      row.test_metric = evaluate_metric(model, test);
    } else {  // train-length
      const int len = static_cast<int>(value);
      const std::uint64_t gen_seed = Rng::derive(run_seed, "sweep-gen");
      SequenceDataset train_ds =
          o.task == "parity"
              ? gen_parity(o.count, 2, len, gen_seed)
              : gen_arithmetic(o.task, o.count, len, o.alphabet_max, gen_seed);
      SequenceDataset test_ds =
          o.task == "parity"
              ? gen_parity(o.test_count, len, len, Rng::derive(gen_seed, "test"))
              : gen_arithmetic(o.task, o.test_count, len, train_ds.alphabet_max,
                               Rng::derive(gen_seed, "test"));
      Model model = build_model(topt, train_ds.task, train_ds.alphabet_max, run_seed);
      const TrainingConfig cfg = build_config(topt, train_ds.task);
      RunReport rep = train_model(model, train_ds, &test_ds, cfg);
      row.holdout_metric = rep.selected_holdout_metric;
      row.test_metric = rep.final_test_metric;
    }
    return row;
  };

  const int workers =
      std::max(1, std::min<int>(o.jobs > 0 ? o.jobs : 1, static_cast<int>(jobs_list.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs_list.size()) return;
      try {
        rows[i] = run_one(jobs_list[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::string out = o.out.empty() ? join_path(default_out_dir(), "sweep.csv") : o.out;
  {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + out);
    os << "param,value,seed,holdout_metric,test_metric\n";
    for (const SweepRow& r : rows) {
      os << r.param << ',' << fmt(r.value);
      os << ',' << r.seed;
      os << ',' << fmt(r.holdout_metric);
      os << ',' << fmt(r.test_metric) << '\n';
    }
  }
  write_manifest(out);
  std::cout << "wrote " << rows.size() << " rows to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  {
    std::ostringstream os;
    for (int i = 0; i < argc; ++i) {
      if (i) os << ' ';
      os << argv[i];
    }
    g_invocation = os.str();
  }

  CLI::App app{"permutation-invariance laboratory for recurrent sequence models"};
  app.require_subcommand(1);

  GenOptions gen_opts;
  CLI::App* gen = app.add_subcommand("gen", "generate a task dataset");
  gen->add_option("task", gen_opts.task, "parity | sum | range | variance | half-range")
      ->required();
  gen->add_option("--count", gen_opts.count, "number of examples");
  gen->add_option("--len", gen_opts.len, "sequence length (arithmetic tasks)");
  gen->add_option("--len-lo", gen_opts.len_lo, "minimum length (parity)");
  gen->add_option("--len-hi", gen_opts.len_hi, "maximum length (parity)");
  gen->add_option("--max", gen_opts.alphabet_max, "alphabet maximum (arithmetic tasks)");
  gen->add_option("--seed", gen_opts.seed, "random seed");
  gen->add_option("--out", gen_opts.out, "output path");

  TrainOptions train_opts;
  CLI::App* train = app.add_subcommand("train", "train a model on a dataset file");
  auto add_train_flags = [](CLI::App* cmd, TrainOptions& t) {
    cmd->add_option("--data", t.data_path, "training dataset file");
    cmd->add_option("--test", t.test_path, "held-out test dataset file");
    cmd->add_option("--model", t.model, "rnn | gru | deepsets");
    cmd->add_option("--hidden", t.hidden, "hidden width");
    cmd->add_option("--state-width", t.state_width, "rnn state width (default: hidden)");
    cmd->add_option("--activation", t.activation, "rnn activation: tanh | relu");
    cmd->add_flag("--one-hot", t.one_hot, "one-hot input encoding");
    cmd->add_flag("--centered", t.centered, "map scalar inputs onto [-1, 1]");
    cmd->add_option("--phi-hidden", t.phi_hidden, "deepsets phi hidden width");
    cmd->add_option("--phi-out", t.phi_out, "deepsets phi output width");
    cmd->add_option("--rho-hidden", t.rho_hidden, "deepsets rho hidden width");
    cmd->add_option("--reg", t.reg, "none | sire | sub");
    cmd->add_option("--lambda", t.lambda, "regularization coefficient");
    cmd->add_option("--lr", t.lr, "learning rate");
    cmd->add_option("--epochs", t.epochs, "training epochs");
    cmd->add_option("--batch", t.batch, "batch size");
    cmd->add_option("--loss", t.loss, "auto | l1 | cross-entropy | mse");
    cmd->add_option("--seed", t.seed, "random seed");
    cmd->add_option("--clip", t.clip, "gradient clip norm (0 disables)");
    cmd->add_flag("--detach-bank", t.detach_bank, "stop gradients through banked states");
    cmd->add_option("--states-per-batch", t.states_per_batch,
                    "sampled states per batch (0: batch size)");
    cmd->add_option("--pairs-per-state", t.pairs_per_state, "input pairs per banked state");
    cmd->add_flag("--prefix-states", t.prefix_states, "sample prefix subsets only");
    cmd->add_option("--holdout", t.holdout, "holdout fraction");
    cmd->add_flag("--keep-final", t.keep_final,
                  "return last-epoch parameters instead of the best-holdout snapshot");
  };
  add_train_flags(train, train_opts);
  train->add_option("--out-dir", train_opts.out_dir, "output directory");
  train->get_option("--data")->required();

  AuditOptions audit_opts;
  CLI::App* audit = app.add_subcommand("audit", "measure invariance violations of a model");
  audit->add_option("--model", audit_opts.model_path, "model file")->required();
  audit->add_option("--data", audit_opts.data_path, "dataset file")->required();
  audit->add_option("--perms", audit_opts.perms, "permutations per sequence");
  audit->add_option("--subsets", audit_opts.subsets, "subsets per sequence");
  audit->add_option("--subset-perms", audit_opts.subset_perms, "ordering pairs per subset");
  audit->add_option("--pairs", audit_opts.pairs, "pair-swap probes");
  audit->add_option("--bank-states", audit_opts.bank_states, "sampled states for pair-swap");
  audit->add_flag("--output-level", audit_opts.output_level,
                  "also audit through the output head");
  audit->add_option("--seed", audit_opts.seed, "random seed");
  audit->add_option("--out", audit_opts.out, "output CSV path");

  ConstructOptions construct_opts;
  CLI::App* construct = app.add_subcommand(
      "construct-parity", "emit the exact 12-weight parity cell and self-test it");
  construct->add_option("--out", construct_opts.out, "output model path");
  construct->add_option("--max-len", construct_opts.max_len,
                        "exhaustive self-test length cap");

  SweepOptions sweep_opts;
  CLI::App* sweep = app.add_subcommand("sweep", "train/evaluate over a parameter grid");
  add_train_flags(sweep, sweep_opts.train);
  sweep->add_option("--grid", sweep_opts.grid,
                    "lambda=... | test-length=... | train-length=...")
      ->required();
  sweep->add_option("--seeds", sweep_opts.seeds, "independent runs per grid point");
  sweep->add_option("--jobs", sweep_opts.jobs, "concurrent runs");
  sweep->add_option("--task", sweep_opts.task, "task for train-length grids");
  sweep->add_option("--max", sweep_opts.alphabet_max, "alphabet maximum for train-length grids");
  sweep->add_option("--count", sweep_opts.count, "train examples for train-length grids");
  sweep->add_option("--test-count", sweep_opts.test_count, "generated test examples");
  sweep->add_option("--out", sweep_opts.out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(gen)) return cmd_gen(gen_opts);
    if (app.got_subcommand(train)) return cmd_train(train_opts);
    if (app.got_subcommand(audit)) return cmd_audit(audit_opts);
    if (app.got_subcommand(construct)) return cmd_construct_parity(construct_opts);
    if (app.got_subcommand(sweep)) return cmd_sweep(sweep_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
