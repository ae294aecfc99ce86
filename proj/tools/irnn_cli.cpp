// irnn: command-line driver for dataset generation, training, evaluation,
// grid search, gradient checking and permutation files.
//
// Exit codes: 0 success, 1 usage error, 2 runtime/data error, 3 divergence.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "irnn/irnn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitDiverged = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_checksum(const fs::path& p) { return hex64(irnn::fnv1a64(irnn::read_file_bytes(p))); }

void write_text(const fs::path& p, const std::string& text) {
  irnn::write_file_bytes(p, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

// ---------------------------------------------------------------------------
// Model / task options shared by train, grid-search and eval

struct RunOptions {
  std::string task = "adding";
  std::string cell = "rnn";
  std::optional<std::string> activation;
  std::optional<std::string> init;
  std::size_t hidden = 100;
  double lr = 0.01;
  double clip = 100.0;
  std::optional<double> forget_bias;
  std::size_t batch = 16;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> eval_every;
  std::uint64_t seed = 1;
  std::vector<std::string> data;
  std::optional<std::uint64_t> permute_seed;
  std::optional<std::size_t> downsample;
  double input_std = 0.001;
  bool record_wallclock = false;
};

void add_model_flags(CLI::App& app, RunOptions& o) {
  app.add_option("--task", o.task, "adding | mnist")->check(CLI::IsMember({"adding", "mnist"}));
  app.add_option("--cell", o.cell, "rnn | lstm")->check(CLI::IsMember({"rnn", "lstm"}));
  app.add_option("--activation", o.activation, "relu | tanh | linear (default relu; lstm accepts tanh only)")
      ->check(CLI::IsMember({"relu", "tanh", "linear"}));
  app.add_option("--init", o.init,
                 "identity | iscale:<s> | gauss:<std> | tanh-baseline (rnn only; default identity, "
                 "tanh-baseline for tanh)");
  app.add_option("--hidden", o.hidden, "hidden units")->check(CLI::PositiveNumber);
  app.add_option("--forget-bias", o.forget_bias, "initial forget-gate bias (lstm only; default 1.0)");
  app.add_option("--batch", o.batch, "minibatch size")->check(CLI::PositiveNumber);
  app.add_option("--eval-every", o.eval_every, "updates between test evaluations")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "run seed");
  app.add_option("--data", o.data,
                 "adding: <train.addp> <test.addp>; mnist: <train-images> <train-labels> "
                 "<test-images> <test-labels>")
      ->expected(1, 4);
  app.add_option("--permute-seed", o.permute_seed, "mnist: fixed pixel permutation seed");
  app.add_option("--downsample", o.downsample, "mnist: average-pool to this side (divides 28)")
      ->check(CLI::PositiveNumber);
  app.add_option("--input-std", o.input_std, "std of the Gaussian for V, b and the readout")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--record-wallclock", o.record_wallclock,
               "fill wallclock_s with elapsed seconds (metrics are then not byte-reproducible)");
}

irnn::ModelSpec resolve_spec(const RunOptions& o, std::size_t input_dim) {
  irnn::ModelSpec spec;
  spec.cell = irnn::parse_cell_kind(o.cell);
  if (spec.cell == irnn::CellKind::Lstm) {
    if (o.activation && *o.activation != "tanh") {
      throw UsageError("--cell lstm uses tanh; --activation " + *o.activation + " is not valid");
    }
    if (o.init) throw UsageError("--init applies to --cell rnn only");
    spec.forget_bias = o.forget_bias.value_or(1.0);
  } else {
    if (o.forget_bias) throw UsageError("--forget-bias applies to --cell lstm only");
    spec.activation = irnn::parse_activation(o.activation.value_or("relu"));
    if (o.init) {
      spec.init = irnn::parse_init_scheme(*o.init);
    } else {
      spec.init = spec.activation == irnn::Activation::Tanh ? irnn::InitScheme{irnn::scheme::TanhBaseline{}}
                                                           : irnn::InitScheme{irnn::scheme::Identity{}};
    }
  }
  spec.hidden = o.hidden;
  spec.input_dim = input_dim;
  spec.head = o.task == "adding" ? irnn::HeadKind::Regression : irnn::HeadKind::Softmax;
  spec.classes = o.task == "adding" ? 1 : 10;
  spec.input_init_std = o.input_std;
  spec.validate();
  return spec;
}

void check_task_flags(const RunOptions& o) {
  if (o.task == "adding") {
    if (o.permute_seed) throw UsageError("--permute-seed applies to --task mnist only");
    if (o.downsample) throw UsageError("--downsample applies to --task mnist only");
    if (o.data.size() != 2) throw UsageError("--task adding needs --data <train.addp> <test.addp>");
  } else if (o.data.size() != 4) {
    throw UsageError(
        "--task mnist needs --data <train-images> <train-labels> <test-images> <test-labels>");
  }
}

struct AddingTask {
  irnn::AddingDataset train;
  irnn::AddingDataset test;
};
struct MnistTask {
  irnn::MnistSeqDataset train;
  irnn::MnistSeqDataset test;
};
using TaskData = std::variant<AddingTask, MnistTask>;

std::vector<std::uint32_t> resolve_permutation(const RunOptions& o, std::size_t side) {
  if (!o.permute_seed) return {};
  return irnn::make_permutation(side * side, *o.permute_seed);
}

void apply_sequence_view(irnn::MnistSeqDataset& ds, const RunOptions& o) {
  ds.side = o.downsample.value_or(0);
  ds.permutation = resolve_permutation(o, ds.sequence_side());
  // Validate the view eagerly so bad flags fail before training starts.
  if (ds.size() > 0) {
    const std::size_t first = 0;
    (void)ds.batch(std::span<const std::size_t>(&first, 1));
  }
}

TaskData load_task(const RunOptions& o) {
  if (o.task == "adding") {
    AddingTask t{irnn::load_adding(o.data[0]), irnn::load_adding(o.data[1])};
    if (t.train.steps() != t.test.steps()) {
      throw std::runtime_error("train and test adding files have different T");
    }
    return t;
  }
  MnistTask t{irnn::load_mnist(o.data[0], o.data[1]), irnn::load_mnist(o.data[2], o.data[3])};
  try {
    apply_sequence_view(t.train, o);
    apply_sequence_view(t.test, o);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return t;
}

json manifest_json(const RunOptions& o, const irnn::ModelSpec& spec, const irnn::TrainConfig& cfg) {
  json m;
  m["command"] = "train";
  m["task"] = o.task;
  m["cell"] = o.cell;
  if (spec.cell == irnn::CellKind::Rnn) {
    m["activation"] = std::string(irnn::to_string(spec.activation));
    m["init"] = irnn::to_string(spec.init);
  } else {
    m["forget_bias"] = spec.forget_bias;
  }
  m["hidden"] = spec.hidden;
  m["input_dim"] = spec.input_dim;
  m["input_std"] = spec.input_init_std;
  m["lr"] = cfg.lr;
  m["clip"] = cfg.clip;
  m["batch"] = cfg.batch_size;
  m["steps"] = cfg.max_steps;
  m["eval_every"] = cfg.eval_every;
  m["seed"] = cfg.seed;
  m["record_wallclock"] = cfg.record_wallclock;
  m["data"] = json::array();
  m["data_checksums"] = json::array();
  for (const auto& p : o.data) {
    m["data"].push_back(fs::absolute(p).string());
    m["data_checksums"].push_back("fnv1a64:" + file_checksum(p));
  }
  if (o.permute_seed) m["permute_seed"] = *o.permute_seed;
  if (o.downsample) m["downsample"] = *o.downsample;
  return m;
}

RunOptions options_from_manifest(const fs::path& path) {
  const auto bytes = irnn::read_file_bytes(path);
  json m;
  try {
    m = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  RunOptions o;
  try {
    o.task = m.at("task").get<std::string>();
    o.cell = m.at("cell").get<std::string>();
    if (m.contains("activation")) o.activation = m["activation"].get<std::string>();
    if (m.contains("init")) o.init = m["init"].get<std::string>();
    if (m.contains("forget_bias")) o.forget_bias = m["forget_bias"].get<double>();
    o.hidden = m.at("hidden").get<std::size_t>();
    o.input_std = m.at("input_std").get<double>();
    o.lr = m.at("lr").get<double>();
    o.clip = m.at("clip").get<double>();
    o.batch = m.at("batch").get<std::size_t>();
    o.steps = m.at("steps").get<std::size_t>();
    o.eval_every = m.at("eval_every").get<std::size_t>();
    o.seed = m.at("seed").get<std::uint64_t>();
    o.record_wallclock = m.value("record_wallclock", false);
    o.data = m.at("data").get<std::vector<std::string>>();
    if (m.contains("permute_seed")) o.permute_seed = m["permute_seed"].get<std::uint64_t>();
    if (m.contains("downsample")) o.downsample = m["downsample"].get<std::size_t>();
    const auto sums = m.at("data_checksums").get<std::vector<std::string>>();
    if (sums.size() != o.data.size()) throw std::runtime_error("checksum count mismatch");
    for (std::size_t i = 0; i < sums.size(); ++i) {
      const std::string actual = "fnv1a64:" + file_checksum(o.data[i]);
      if (actual != sums[i]) {
        throw std::runtime_error("data file '" + o.data[i] + "' changed since the manifest was written (" +
                                 actual + " != " + sums[i] + ")");
      }
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest '" + path.string() + "' is incomplete: " + e.what());
  }
  return o;
}

irnn::TrainConfig resolve_config(const RunOptions& o, std::size_t default_steps) {
  irnn::TrainConfig cfg;
  cfg.lr = o.lr;
  cfg.clip = o.clip;
  cfg.batch_size = o.batch;
  cfg.max_steps = o.steps.value_or(default_steps);
  cfg.eval_every = o.eval_every.value_or(o.task == "adding" ? 200 : 1000);
  cfg.seed = o.seed;
  cfg.record_wallclock = o.record_wallclock;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

template <class F>
decltype(auto) with_task(TaskData& data, F&& f) {
  return std::visit([&](auto& t) -> decltype(auto) { return f(t.train, t.test); }, data);
}

std::size_t task_input_dim(const RunOptions& o) { return o.task == "adding" ? 2 : 1; }

void print_metrics(const irnn::Metrics& m, bool regression) {
  std::cout << "step " << m.step << "  train_loss " << irnn::format_double(m.train_loss)
            << "  test_loss " << irnn::format_double(m.test_loss) << "  "
            << (regression ? "test_rmse " : "test_acc ") << irnn::format_double(m.task_metric)
            << "  grad_norm " << irnn::format_double(m.grad_norm) << "\n"
            << std::flush;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_adding(std::size_t t, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                   const fs::path& out) {
  if (t < 2) throw UsageError("--t must be >= 2");
  fs::create_directories(out);
  irnn::Rng train_rng(irnn::mix_seed(seed, 0));
  irnn::Rng test_rng(irnn::mix_seed(seed, 1));
  const auto train = irnn::gen_adding(t, n_train, train_rng);
  const auto test = irnn::gen_adding(t, n_test, test_rng);
  irnn::save_adding(out / "train.addp", train);
  irnn::save_adding(out / "test.addp", test);
  std::cout << "wrote " << (out / "train.addp").string() << " (" << n_train << " examples, T=" << t
            << ")\n"
            << "wrote " << (out / "test.addp").string() << " (" << n_test << " examples, T=" << t
            << ")\n"
            << "baseline_mse_train " << irnn::format_double(irnn::baseline_mse(train)) << "\n"
            << "baseline_mse_test " << irnn::format_double(irnn::baseline_mse(test)) << "\n";
  return kExitOk;
}

int cmd_train(RunOptions o, const std::optional<fs::path>& manifest, const fs::path& out_dir) {
  if (manifest) o = options_from_manifest(*manifest);
  check_task_flags(o);
  const auto spec = resolve_spec(o, task_input_dim(o));
  const auto cfg = resolve_config(o, o.task == "adding" ? 100000 : 1000000);
  TaskData data = load_task(o);

  fs::create_directories(out_dir);
  write_text(out_dir / "manifest.json", manifest_json(o, spec, cfg).dump(2) + "\n");
  if (auto* m = std::get_if<MnistTask>(&data); m && !m->train.permutation.empty()) {
    json p{{"side", m->train.sequence_side()}, {"seed", *o.permute_seed},
           {"permutation", m->train.permutation}};
    write_text(out_dir / "permutation.json", p.dump() + "\n");
  }

  const bool regression = spec.head == irnn::HeadKind::Regression;
  irnn::TrainHooks hooks{[&](const irnn::Metrics& m) { print_metrics(m, regression); }};
  auto result = with_task(data, [&](const auto& train, const auto& test) {
    return irnn::train(spec, cfg, train, test, hooks);
  });
  irnn::write_metrics_csv(out_dir / "metrics.csv", result.history);
  irnn::save_checkpoint(out_dir / "checkpoint.bin", spec, result.params);
  if (result.diverged) {
    std::cerr << "diverged after " << result.steps_completed << " updates: "
              << result.divergence_message << "\n";
    return kExitDiverged;
  }
  return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const std::vector<std::string>& data,
             std::optional<std::uint64_t> permute_seed, std::optional<std::size_t> downsample) {
  const auto ck = irnn::load_checkpoint(checkpoint);
  irnn::Evaluation ev;
  std::size_t n = 0;
  if (ck.spec.head == irnn::HeadKind::Regression) {
    if (data.size() != 1) throw UsageError("regression checkpoint: --data <test.addp>");
    if (permute_seed || downsample) throw UsageError("--permute-seed/--downsample apply to mnist only");
    const auto ds = irnn::load_adding(data[0]);
    ev = irnn::evaluate(ck.spec, ck.params, ds);
    n = ds.size();
  } else {
    if (data.size() != 2) throw UsageError("softmax checkpoint: --data <images> <labels>");
    auto ds = irnn::load_mnist(data[0], data[1]);
    RunOptions o;
    o.permute_seed = permute_seed;
    o.downsample = downsample;
    try {
      apply_sequence_view(ds, o);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    ev = irnn::evaluate(ck.spec, ck.params, ds);
    n = ds.size();
  }
  json out{{"loss", ev.loss},
           {ck.spec.head == irnn::HeadKind::Regression ? "rmse" : "accuracy", ev.task_metric},
           {"examples", n}};
  std::cout << out.dump() << "\n";
  return kExitOk;
}

int cmd_grid_search(RunOptions o, irnn::GridSpec grid, std::size_t steps_per_cell,
                    std::size_t workers, const fs::path& out_dir) {
  check_task_flags(o);
  if (o.cell == "lstm" && o.forget_bias) {
    throw UsageError("grid-search sweeps --forget-biases; --forget-bias is not accepted");
  }
  const auto spec = resolve_spec(o, task_input_dim(o));
  o.steps = steps_per_cell;
  const auto cfg = resolve_config(o, steps_per_cell);
  try {
    grid.validate(spec.cell);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  TaskData data = load_task(o);
  const bool regression = spec.head == irnn::HeadKind::Regression;

  irnn::GridOptions opts;
  opts.out_dir = out_dir;
  opts.workers = workers;
  opts.on_cell_done = [&](const irnn::GridResult& r) {
    std::cout << "cell " << r.index << "  lr " << irnn::format_double(r.cell.lr) << "  gc "
              << irnn::format_double(r.cell.clip);
    if (r.cell.forget_bias) std::cout << "  fb " << irnn::format_double(*r.cell.forget_bias);
    std::cout << "  final_test_loss " << irnn::format_double(r.final_test_loss)
              << (r.diverged ? "  (diverged)" : "") << "\n"
              << std::flush;
  };
  const auto ranked = with_task(data, [&](const auto& train, const auto& test) {
    return irnn::grid_search(spec, grid, cfg, train, test, opts);
  });
  const auto& best = ranked.front();
  std::cout << "best: lr " << irnn::format_double(best.cell.lr) << "  gc "
            << irnn::format_double(best.cell.clip);
  if (best.cell.forget_bias) std::cout << "  fb " << irnn::format_double(*best.cell.forget_bias);
  std::cout << "  final_test_loss " << irnn::format_double(best.final_test_loss) << "  "
            << (regression ? "test_rmse " : "test_acc ") << irnn::format_double(best.task_metric)
            << (best.diverged ? "  (diverged)" : "") << "\n";
  return kExitOk;
}

int cmd_gradcheck(const std::string& cell, const std::optional<std::string>& activation,
                  std::optional<double> forget_bias, const std::string& head, std::size_t trials,
                  std::uint64_t seed, std::size_t hidden, std::size_t input_dim,
                  const irnn::GradcheckOptions& gopts) {
  irnn::ModelSpec spec;
  spec.cell = irnn::parse_cell_kind(cell);
  if (spec.cell == irnn::CellKind::Lstm) {
    if (activation && *activation != "tanh") throw UsageError("--cell lstm uses tanh; --activation " + *activation + " is not valid");
    spec.forget_bias = forget_bias.value_or(0.0);
  } else {
    if (forget_bias) throw UsageError("--forget-bias applies to --cell lstm only");
    spec.activation = irnn::parse_activation(activation.value_or("relu"));
  }
  spec.hidden = hidden;
  spec.input_dim = input_dim;
  spec.head = head == "regression" ? irnn::HeadKind::Regression : irnn::HeadKind::Softmax;
  spec.classes = head == "regression" ? 1 : 4;

  const auto report = irnn::check_model(spec, trials, seed, gopts);
  constexpr double tolerance = 1e-4;
  for (const auto& b : report.blocks) {
    std::printf("%-14s max_rel_err %.3e  (index %zu: analytic %.10e numeric %.10e)  checked %zu  kink-skipped %zu\n",
                b.name.c_str(), b.max_rel_error, b.worst_index, b.analytic, b.numeric, b.checked,
                b.kink_skipped);
  }
  const bool ok = report.passed(tolerance);
  std::printf("%s: max relative error %.3e over %zu trials (bound %.0e)\n", ok ? "PASS" : "FAIL",
              report.max_rel_error(), report.trials, tolerance);
  return ok ? kExitOk : kExitRuntime;
}

int cmd_make_perm(std::size_t side, std::uint64_t seed, const fs::path& out) {
  if (side == 0) throw UsageError("--side must be >= 1");
  const auto perm = irnn::make_permutation(side * side, seed);
  json p{{"side", side}, {"seed", seed}, {"permutation", perm}};
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, p.dump() + "\n");
  std::cout << "wrote " << out.string() << " (" << perm.size() << " entries)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identity-initialized ReLU RNN training and benchmark harness"};
  app.require_subcommand(1);

  // gen-adding
  auto* gen = app.add_subcommand("gen-adding", "generate adding-problem train/test files");
  std::size_t gen_t = 150, gen_train = 100000, gen_test = 10000;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--t", gen_t, "sequence length T")->required();
  gen->add_option("--n-train", gen_train, "training examples");
  gen->add_option("--n-test", gen_test, "test examples");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory (train.addp, test.addp)")->required();

  // train
  auto* tr = app.add_subcommand("train", "train one model");
  RunOptions train_opts;
  add_model_flags(*tr, train_opts);
  tr->add_option("--lr", train_opts.lr, "learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--clip", train_opts.clip, "global-norm clipping threshold")->check(CLI::PositiveNumber);
  tr->add_option("--steps", train_opts.steps, "number of updates (adding 100000, mnist 1000000)");
  std::string train_out;
  std::optional<std::string> train_manifest;
  tr->add_option("--out-dir", train_out, "run directory")->required();
  auto* manifest_opt = tr->add_option("--manifest", train_manifest, "replay a previous run's manifest.json");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
  std::string ev_ckpt;
  std::vector<std::string> ev_data;
  std::optional<std::uint64_t> ev_perm;
  std::optional<std::size_t> ev_down;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint.bin")->required();
  ev->add_option("--data", ev_data, "adding: <test.addp>; mnist: <images> <labels>")->required()->expected(1, 2);
  ev->add_option("--permute-seed", ev_perm, "mnist pixel permutation seed");
  ev->add_option("--downsample", ev_down, "mnist average-pool side")->check(CLI::PositiveNumber);

  // grid-search
  auto* gs = app.add_subcommand("grid-search", "grid search over lr x clip (x forget bias)");
  RunOptions grid_opts;
  add_model_flags(*gs, grid_opts);
  irnn::GridSpec grid = irnn::GridSpec::defaults();
  std::size_t steps_per_cell = 100000, workers = 1;
  std::string grid_out;
  gs->add_option("--lrs", grid.lrs, "learning rates (default 1e-9 ... 1e-1)")->delimiter(',');
  gs->add_option("--clips", grid.clips, "clipping thresholds (default 1,10,100,1000)")->delimiter(',');
  gs->add_option("--forget-biases", grid.forget_biases, "lstm forget biases (default 1,4,10,20)")
      ->delimiter(',');
  gs->add_option("--steps-per-cell", steps_per_cell, "updates per grid cell");
  gs->add_option("--workers", workers, "parallel cells")->check(CLI::PositiveNumber);
  gs->add_option("--out-dir", grid_out, "output directory")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "compare BPTT gradients with central differences");
  std::string gc_cell = "rnn", gc_head = "regression";
  std::optional<std::string> gc_act;
  std::optional<double> gc_fb;
  std::size_t gc_trials = 20, gc_hidden = 5, gc_input = 2;
  std::uint64_t gc_seed = 1;
  irnn::GradcheckOptions gopts;
  gc->add_option("--cell", gc_cell, "rnn | lstm")->check(CLI::IsMember({"rnn", "lstm"}));
  gc->add_option("--activation", gc_act, "relu | tanh | linear")
      ->check(CLI::IsMember({"relu", "tanh", "linear"}));
  gc->add_option("--forget-bias", gc_fb, "lstm forget-gate bias (default 0)");
  gc->add_option("--head", gc_head, "regression | softmax")
      ->check(CLI::IsMember({"regression", "softmax"}));
  gc->add_option("--trials", gc_trials, "random instances")->check(CLI::PositiveNumber);
  gc->add_option("--seed", gc_seed, "seed");
  gc->add_option("--hidden", gc_hidden, "hidden units")->check(CLI::PositiveNumber);
  gc->add_option("--input-dim", gc_input, "input dimension")->check(CLI::PositiveNumber);
  gc->add_option("--steps", gopts.steps, "sequence length")->check(CLI::PositiveNumber);
  gc->add_option("--lanes", gopts.lanes, "batch lanes")->check(CLI::PositiveNumber);

  // make-perm
  auto* mp = app.add_subcommand("make-perm", "write a fixed pixel permutation");
  std::size_t mp_side = 28;
  std::uint64_t mp_seed = 1;
  std::string mp_out;
  mp->add_option("--side", mp_side, "image side")->check(CLI::PositiveNumber);
  mp->add_option("--seed", mp_seed, "seed");
  mp->add_option("--out", mp_out, "output JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_adding(gen_t, gen_train, gen_test, gen_seed, gen_out);
    if (*tr) {
      if (train_manifest) {
        for (const auto* opt : tr->get_options()) {
          if (opt == manifest_opt || opt->get_name() == "--out-dir" || opt->get_name() == "--help") continue;
          if (opt->count() > 0) {
            throw UsageError("--manifest replays a run; " + opt->get_name() + " cannot be combined with it");
          }
        }
        return cmd_train(train_opts, fs::path(*train_manifest), train_out);
      }
      if (train_opts.data.empty()) throw UsageError("train needs --data (or --manifest)");
      return cmd_train(train_opts, std::nullopt, train_out);
    }
    if (*ev) return cmd_eval(ev_ckpt, ev_data, ev_perm, ev_down);
    if (*gs) return cmd_grid_search(grid_opts, grid, steps_per_cell, workers, grid_out);
    if (*gc) return cmd_gradcheck(gc_cell, gc_act, gc_fb, gc_head, gc_trials, gc_seed, gc_hidden, gc_input, gopts);
    if (*mp) return cmd_make_perm(mp_side, mp_seed, mp_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const irnn::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
