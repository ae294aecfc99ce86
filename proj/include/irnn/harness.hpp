#pragma once

// Training loop, evaluation and the learning-rate / clipping / forget-bias
// grid search.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "irnn/network.hpp"
#include "irnn/optim.hpp"
#include "irnn/tasks.hpp"

namespace irnn {

/// One evaluation point. task_metric is test RMSE for regression and top-1
/// accuracy for classification; train_loss and grad_norm are means over the
/// updates since the previous row.
struct Metrics {
  std::size_t step = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double task_metric = 0.0;
  double grad_norm = 0.0;
  double wallclock_s = 0.0;

  bool operator==(const Metrics&) const = default;
};

inline constexpr std::string_view kMetricsHeader =
    "step,train_loss,test_loss,task_metric,grad_norm,wallclock_s";

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

inline std::string metrics_csv_row(const Metrics& m) {
  return std::to_string(m.step) + "," + format_double(m.train_loss) + "," +
         format_double(m.test_loss) + "," + format_double(m.task_metric) + "," +
         format_double(m.grad_norm) + "," + format_double(m.wallclock_s) + "\n";
}

inline std::string metrics_csv(std::span<const Metrics> rows) {
  std::string out(kMetricsHeader);
  out += '\n';
  for (const auto& m : rows) out += metrics_csv_row(m);
  return out;
}

inline void write_metrics_csv(const std::filesystem::path& path, std::span<const Metrics> rows) {
  const std::string text = metrics_csv(rows);
  write_file_bytes(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

struct Evaluation {
  double loss = 0.0;
  double task_metric = 0.0;
};

/// Mean loss over the full set; task metric is RMSE or top-1 accuracy.
template <SequenceSource Data>
Evaluation evaluate(const ModelSpec& spec, const Parameters& params, const Data& data,
                    std::size_t chunk = 500) {
  const std::size_t n = data.size();
  if (n == 0) throw std::invalid_argument("evaluate: empty dataset");
  double loss_sum = 0.0;
  double metric_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto s = score_batch(spec, params, data.batch(idx));
    loss_sum += s.loss_sum;
    metric_sum += s.metric_sum;
  }
  const double count = static_cast<double>(n);
  Evaluation e;
  e.loss = loss_sum / count;
  e.task_metric = spec.head == HeadKind::Regression ? std::sqrt(metric_sum / count) : metric_sum / count;
  return e;
}

struct TrainResult {
  Parameters params;
  std::vector<Metrics> history;
  bool diverged = false;
  std::string divergence_message;
  std::size_t steps_completed = 0;
};

struct TrainHooks {
  std::function<void(const Metrics&)> on_eval;
};

/// Epoch-shuffled minibatch order; drops the ragged tail of each epoch.
class MinibatchSampler {
 public:
  MinibatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : order_(n), batch_(std::min(batch_size, n)), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::span<const std::size_t> next() {
    if (pos_ + batch_ > order_.size()) reshuffle();
    std::span<const std::size_t> out(order_.data() + pos_, batch_);
    pos_ += batch_;
    return out;
  }

 private:
  void reshuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::swap(order_[i - 1], order_[static_cast<std::size_t>(rng_.uniform_index(i))]);
    }
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  Rng rng_;
};

/// Seed streams derived from the run seed.
inline constexpr std::uint64_t kInitStream = 0;
inline constexpr std::uint64_t kShuffleStream = 1;

template <SequenceSource TrainData, SequenceSource TestData>
TrainResult train(const ModelSpec& spec, const TrainConfig& cfg, const TrainData& train_data,
                  const TestData& test_data, const TrainHooks& hooks = {}) {
  spec.validate();
  cfg.validate();
  if (train_data.size() == 0 || test_data.size() == 0) {
    throw std::invalid_argument("train: datasets must be non-empty");
  }
  if (train_data.input_dim() != spec.input_dim || test_data.input_dim() != spec.input_dim) {
    throw ShapeError("train: dataset input_dim does not match model input_dim " +
                     std::to_string(spec.input_dim));
  }

  Rng init_rng(mix_seed(cfg.seed, kInitStream));
  TrainResult result{initialize_parameters(spec, init_rng), {}, false, {}, 0};
  MinibatchSampler sampler(train_data.size(), cfg.batch_size, mix_seed(cfg.seed, kShuffleStream));

  const auto t0 = std::chrono::steady_clock::now();
  double loss_acc = 0.0;
  double norm_acc = 0.0;
  std::size_t since_eval = 0;

  auto record = [&](std::size_t step) {
    const auto ev = evaluate(spec, result.params, test_data);
    Metrics m;
    m.step = step;
    m.train_loss = loss_acc / static_cast<double>(since_eval);
    m.grad_norm = norm_acc / static_cast<double>(since_eval);
    m.test_loss = ev.loss;
    m.task_metric = ev.task_metric;
    if (cfg.record_wallclock) {
      m.wallclock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    result.history.push_back(m);
    if (hooks.on_eval) hooks.on_eval(m);
    loss_acc = norm_acc = 0.0;
    since_eval = 0;
  };

  try {
    for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
      const SequenceBatch batch = train_data.batch(sampler.next());
      auto fwd = forward(spec, result.params, batch);
      auto grads = backward(spec, result.params, fwd.tape);
      const double norm = clip_gradients(grads.params, cfg.clip);
      sgd_step(result.params, grads.params, cfg.lr);
      result.steps_completed = step;
      loss_acc += fwd.loss;
      norm_acc += norm;
      ++since_eval;
      if (step % cfg.eval_every == 0 || step == cfg.max_steps) record(step);
    }
  } catch (const DivergenceError& e) {
    result.diverged = true;
    result.divergence_message = e.what();
  }
  return result;
}

// ---------------------------------------------------------------------------
// Grid search

struct GridSpec {
  std::vector<double> lrs;
  std::vector<double> clips;
  std::vector<double> forget_biases;  // LSTM only

  /// 1e-9 ... 1e-1, {1, 10, 100, 1000}, {1, 4, 10, 20}.
  static GridSpec defaults() {
    GridSpec g;
    for (int e = -9; e <= -1; ++e) g.lrs.push_back(std::pow(10.0, e));
    g.clips = {1.0, 10.0, 100.0, 1000.0};
    g.forget_biases = {1.0, 4.0, 10.0, 20.0};
    return g;
  }

  void validate(CellKind cell) const {
    auto positive = [](const std::vector<double>& v, const char* what) {
      if (v.empty()) throw std::invalid_argument(std::string("grid: ") + what + " list is empty");
      for (double x : v) {
        if (!(x > 0.0) || !std::isfinite(x)) {
          throw std::invalid_argument(std::string("grid: ") + what + " values must be positive");
        }
      }
    };
    positive(lrs, "learning-rate");
    positive(clips, "clip");
    if (cell == CellKind::Lstm) positive(forget_biases, "forget-bias");
  }
};

struct GridCell {
  double lr = 0.0;
  double clip = 0.0;
  std::optional<double> forget_bias;

  auto key() const { return std::make_tuple(lr, clip, forget_bias.value_or(0.0)); }
};

/// Cartesian product; the forget-bias axis applies to LSTM only.
inline std::vector<GridCell> grid_cells(CellKind cell, const GridSpec& grid) {
  grid.validate(cell);
  std::vector<GridCell> cells;
  for (double lr : grid.lrs) {
    for (double gc : grid.clips) {
      if (cell == CellKind::Lstm) {
        for (double fb : grid.forget_biases) cells.push_back({lr, gc, fb});
      } else {
        cells.push_back({lr, gc, std::nullopt});
      }
    }
  }
  return cells;
}

struct GridResult {
  std::size_t index = 0;
  GridCell cell;
  double final_test_loss = std::numeric_limits<double>::quiet_NaN();
  double task_metric = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
  std::string metrics_path;
  std::uint64_t seed = 0;
  std::vector<Metrics> history;
};

/// Completed runs by final test loss, then lexicographic (lr, gc, fb);
/// diverged runs last in lexicographic order.
inline void rank_results(std::vector<GridResult>& results) {
  std::stable_sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
    const bool fa = a.diverged || !std::isfinite(a.final_test_loss);
    const bool fb = b.diverged || !std::isfinite(b.final_test_loss);
    if (fa != fb) return !fa;
    if (!fa && a.final_test_loss != b.final_test_loss) return a.final_test_loss < b.final_test_loss;
    return a.cell.key() < b.cell.key();
  });
}

inline std::string cell_file_name(std::size_t index, const GridCell& c) {
  std::string name = "cell_" + std::to_string(index) + "_lr" + format_double(c.lr) + "_gc" +
                     format_double(c.clip);
  if (c.forget_bias) name += "_fb" + format_double(*c.forget_bias);
  return name + ".csv";
}

struct GridOptions {
  std::optional<std::filesystem::path> out_dir;  // per-cell CSVs and summary.json
  std::size_t workers = 1;
  std::function<void(const GridResult&)> on_cell_done;
};

inline nlohmann::json grid_summary_json(std::span<const GridResult> ranked) {
  auto num = [](double x) -> nlohmann::json {
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
  };
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : ranked) {
    nlohmann::json j;
    j["lr"] = r.cell.lr;
    j["gc"] = r.cell.clip;
    if (r.cell.forget_bias) j["fb"] = *r.cell.forget_bias;
    j["final_test_loss"] = num(r.final_test_loss);
    j["task_metric"] = num(r.task_metric);
    j["diverged"] = r.diverged;
    j["metrics_path"] = r.metrics_path;
    j["seed"] = r.seed;
    arr.push_back(std::move(j));
  }
  return arr;
}

/// One train() per grid cell, all with the template's seed. Cells may run on
/// several worker threads; results land in per-cell slots, so the ranked
/// output does not depend on the worker count.
template <SequenceSource TrainData, SequenceSource TestData>
std::vector<GridResult> grid_search(const ModelSpec& spec, const GridSpec& grid,
                                    const TrainConfig& budget, const TrainData& train_data,
                                    const TestData& test_data, const GridOptions& opts = {}) {
  const auto cells = grid_cells(spec.cell, grid);
  std::vector<GridResult> results(cells.size());
  if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir);

  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        ModelSpec cell_spec = spec;
        if (cells[i].forget_bias) cell_spec.forget_bias = *cells[i].forget_bias;
        TrainConfig cfg = budget;
        cfg.lr = cells[i].lr;
        cfg.clip = cells[i].clip;
        auto run = train(cell_spec, cfg, train_data, test_data);

        GridResult& r = results[i];
        r.index = i;
        r.cell = cells[i];
        r.seed = cfg.seed;
        r.diverged = run.diverged;
        if (!run.history.empty()) {
          r.final_test_loss = run.history.back().test_loss;
          r.task_metric = run.history.back().task_metric;
        } else if (!run.diverged) {
          const auto ev = evaluate(cell_spec, run.params, test_data);
          r.final_test_loss = ev.loss;
          r.task_metric = ev.task_metric;
        }
        if (opts.out_dir) {
          const auto path = *opts.out_dir / cell_file_name(i, cells[i]);
          write_metrics_csv(path, run.history);
          r.metrics_path = path.filename().string();
        }
        r.history = std::move(run.history);
        if (opts.on_cell_done) {
          std::lock_guard lock(callback_mutex);
          opts.on_cell_done(r);
        }
      } catch (...) {
        std::lock_guard lock(callback_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const std::size_t nworkers = std::max<std::size_t>(1, std::min(opts.workers, cells.size()));
  if (nworkers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < nworkers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  rank_results(results);
  if (opts.out_dir) {
    const std::string text = grid_summary_json(results).dump(2) + "\n";
    write_file_bytes(*opts.out_dir / "summary.json",
                     {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
  }
  return results;
}

}  // namespace irnn
