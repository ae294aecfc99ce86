#pragma once

// Unrolled sequence model: one recurrent cell run over T steps from a zero
// state, followed by a readout applied to the final hidden state only.
// Loss is the batch mean of squared error (regression) or cross-entropy
// (softmax). Backward is exact BPTT over the stored step caches.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <concepts>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "irnn/binary_io.hpp"
#include "irnn/cells.hpp"
#include "irnn/init.hpp"
#include "irnn/ndcore.hpp"

namespace irnn {

/// Non-finite value or activation above kOverflowLimit during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kOverflowLimit = 1e100;

enum class CellKind { Rnn, Lstm };
enum class HeadKind { Regression, Softmax };

inline std::string_view to_string(CellKind c) { return c == CellKind::Rnn ? "rnn" : "lstm"; }
inline std::string_view to_string(HeadKind h) {
  return h == HeadKind::Regression ? "regression" : "softmax";
}

inline CellKind parse_cell_kind(std::string_view s) {
  if (s == "rnn") return CellKind::Rnn;
  if (s == "lstm") return CellKind::Lstm;
  throw std::invalid_argument("unknown cell '" + std::string(s) + "'");
}

struct ModelSpec {
  CellKind cell = CellKind::Rnn;
  Activation activation = Activation::Relu;  // Rnn only
  std::size_t hidden = 100;
  std::size_t input_dim = 2;
  HeadKind head = HeadKind::Regression;
  std::size_t classes = 10;                 // Softmax only
  InitScheme init = scheme::Identity{};     // Rnn only
  double input_init_std = 0.001;
  double forget_bias = 1.0;                 // Lstm only

  std::size_t outputs() const noexcept { return head == HeadKind::Regression ? 1 : classes; }

  void validate() const {
    if (hidden == 0) throw std::invalid_argument("ModelSpec: hidden must be >= 1");
    if (input_dim == 0) throw std::invalid_argument("ModelSpec: input_dim must be >= 1");
    if (head == HeadKind::Softmax && classes < 2) {
      throw std::invalid_argument("ModelSpec: softmax head needs >= 2 classes");
    }
    if (!(input_init_std >= 0.0)) throw std::invalid_argument("ModelSpec: input_init_std < 0");
    if (!std::isfinite(forget_bias)) throw std::invalid_argument("ModelSpec: forget_bias not finite");
    irnn::validate(init);
  }

  bool operator==(const ModelSpec&) const = default;
};

struct HeadParams {
  Matrix U;  // outputs x H
  Vector c;  // outputs
  bool operator==(const HeadParams&) const = default;
};

using CellParams = std::variant<RnnParams, LstmParams>;

/// Every trainable block of a model. Gradients use the same type.
struct Parameters {
  CellParams cell;
  HeadParams head;

  bool operator==(const Parameters&) const = default;
};

/// Visits every parameter block in the fixed serialization order:
/// cell blocks (W, V, b; for LSTM per gate input, forget, output, candidate),
/// then head U, c.
template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, Parameters>
void for_each_block(P& params, F&& f) {
  std::visit(
      [&](auto& cell) {
        using Cell = std::remove_const_t<std::remove_reference_t<decltype(cell)>>;
        if constexpr (std::same_as<Cell, RnnParams>) {
          f(std::string_view("W"), cell.W.values());
          f(std::string_view("V"), cell.V.values());
          f(std::string_view("b"), cell.b.values());
        } else {
          static constexpr std::array<std::array<std::string_view, 3>, 4> names = {{
              {"input.W", "input.V", "input.b"},
              {"forget.W", "forget.V", "forget.b"},
              {"output.W", "output.V", "output.b"},
              {"candidate.W", "candidate.V", "candidate.b"},
          }};
          for (std::size_t g = 0; g < 4; ++g) {
            f(names[g][0], cell.gates[g].W.values());
            f(names[g][1], cell.gates[g].V.values());
            f(names[g][2], cell.gates[g].b.values());
          }
        }
      },
      params.cell);
  f(std::string_view("head.U"), params.head.U.values());
  f(std::string_view("head.c"), params.head.c.values());
}

inline Parameters zeros_like(const Parameters& p) {
  Parameters out = p;
  for_each_block(out, [](std::string_view, std::span<double> b) { std::fill(b.begin(), b.end(), 0.0); });
  return out;
}

inline std::size_t parameter_count(const Parameters& p) {
  std::size_t n = 0;
  for_each_block(p, [&](std::string_view, std::span<const double> b) { n += b.size(); });
  return n;
}

inline std::uint64_t fingerprint(const Parameters& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for_each_block(p, [&](std::string_view, std::span<const double> b) {
    h = fnv1a64({reinterpret_cast<const unsigned char*>(b.data()), b.size_bytes()}, h);
  });
  return h;
}

/// Checks that `p` has exactly the block shapes `spec` implies.
inline void check_shapes(const ModelSpec& spec, const Parameters& p) {
  const std::size_t h = spec.hidden;
  const std::size_t d = spec.input_dim;
  if (spec.cell == CellKind::Rnn) {
    const auto* rnn = std::get_if<RnnParams>(&p.cell);
    if (!rnn) throw ShapeError("parameters hold an LSTM but spec asks for rnn");
    rnn->validate();
    if (rnn->hidden() != h || rnn->input_dim() != d) {
      throw ShapeError("rnn parameters are H=" + std::to_string(rnn->hidden()) + ", D=" +
                       std::to_string(rnn->input_dim()) + "; spec wants H=" + std::to_string(h) +
                       ", D=" + std::to_string(d));
    }
  } else {
    const auto* lstm = std::get_if<LstmParams>(&p.cell);
    if (!lstm) throw ShapeError("parameters hold an rnn but spec asks for lstm");
    lstm->validate();
    if (lstm->hidden() != h || lstm->input_dim() != d) {
      throw ShapeError("lstm parameters are H=" + std::to_string(lstm->hidden()) + ", D=" +
                       std::to_string(lstm->input_dim()) + "; spec wants H=" +
                       std::to_string(h) + ", D=" + std::to_string(d));
    }
  }
  if (p.head.U.rows() != spec.outputs() || p.head.U.cols() != h || p.head.c.len() != spec.outputs()) {
    throw ShapeError("head U " + p.head.U.shape_string() + ", c " + std::to_string(p.head.c.len()) +
                     " does not match " + std::to_string(spec.outputs()) + " outputs over H=" +
                     std::to_string(h));
  }
}

/// Draws a fresh model. Draw order: cell blocks, then head U, c.
inline Parameters initialize_parameters(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t h = spec.hidden;
  const std::size_t d = spec.input_dim;
  CellParams cell = [&]() -> CellParams {
    if (spec.cell == CellKind::Rnn) {
      if (std::holds_alternative<scheme::TanhBaseline>(spec.init)) {
        auto t = init_tanh_baseline(h, d, rng);
        return RnnParams{std::move(t.W), std::move(t.V), std::move(t.b), spec.activation};
      }
      Matrix W = init_recurrent(spec.init, h, rng);
      auto vb = init_input_and_bias(spec.input_init_std, h, d, rng);
      return RnnParams{std::move(W), std::move(vb.V), std::move(vb.b), spec.activation};
    }
    auto make_gate = [&](Gate g) {
      Matrix W = gaussian_fill(h, h, 0.0, spec.input_init_std, rng);
      Matrix V = gaussian_fill(h, d, 0.0, spec.input_init_std, rng);
      Vector b(h, g == Gate::Forget ? spec.forget_bias : 0.0);
      return GateParams{std::move(W), std::move(V), std::move(b)};
    };
    // Braced initializers evaluate left to right, which fixes the draw order.
    return LstmParams{{make_gate(Gate::Input), make_gate(Gate::Forget), make_gate(Gate::Output),
                       make_gate(Gate::Candidate)}};
  }();
  const std::size_t k = spec.outputs();
  HeadParams head{gaussian_fill(k, h, 0.0, spec.input_init_std, rng),
                  gaussian_vector(k, 0.0, spec.input_init_std, rng)};
  return {std::move(cell), std::move(head)};
}

// ---------------------------------------------------------------------------
// Batches

/// inputs are laid out [T][B][D]. Exactly one of targets / labels is used,
/// depending on the head.
struct SequenceBatch {
  std::size_t steps = 0;
  std::size_t lanes = 0;
  std::size_t input_dim = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
  std::vector<std::uint32_t> labels;

  std::span<const double> input(std::size_t t, std::size_t lane) const noexcept {
    return {inputs.data() + (t * lanes + lane) * input_dim, input_dim};
  }
  std::span<double> input(std::size_t t, std::size_t lane) noexcept {
    return {inputs.data() + (t * lanes + lane) * input_dim, input_dim};
  }

  static SequenceBatch zeros(std::size_t steps, std::size_t lanes, std::size_t input_dim) {
    SequenceBatch b;
    b.steps = steps;
    b.lanes = lanes;
    b.input_dim = input_dim;
    b.inputs.assign(steps * lanes * input_dim, 0.0);
    return b;
  }
};

namespace detail {

inline void check_batch_inputs(const ModelSpec& spec, const SequenceBatch& batch) {
  if (batch.steps == 0 || batch.lanes == 0) {
    throw ShapeError("batch must have T >= 1 and B >= 1, got T=" + std::to_string(batch.steps) +
                     ", B=" + std::to_string(batch.lanes));
  }
  if (batch.input_dim != spec.input_dim) {
    throw ShapeError("batch input_dim " + std::to_string(batch.input_dim) +
                     " does not match model input_dim " + std::to_string(spec.input_dim));
  }
  if (batch.inputs.size() != batch.steps * batch.lanes * batch.input_dim) {
    throw ShapeError("batch inputs hold " + std::to_string(batch.inputs.size()) +
                     " values, expected T*B*D = " +
                     std::to_string(batch.steps * batch.lanes * batch.input_dim));
  }
}

inline void check_batch_targets(const ModelSpec& spec, const SequenceBatch& batch) {
  if (spec.head == HeadKind::Regression) {
    if (batch.targets.size() != batch.lanes) {
      throw ShapeError("regression batch needs " + std::to_string(batch.lanes) + " targets, got " +
                       std::to_string(batch.targets.size()));
    }
  } else {
    if (batch.labels.size() != batch.lanes) {
      throw ShapeError("classification batch needs " + std::to_string(batch.lanes) +
                       " labels, got " + std::to_string(batch.labels.size()));
    }
    for (auto y : batch.labels) {
      if (y >= spec.classes) {
        throw ShapeError("label " + std::to_string(y) + " out of range for " +
                         std::to_string(spec.classes) + " classes");
      }
    }
  }
}

inline void check_finite_state(std::span<const double> v, std::size_t step, std::size_t lane) {
  for (double x : v) {
    if (!std::isfinite(x) || std::abs(x) > kOverflowLimit) {
      throw DivergenceError("forward: activation overflow at step " + std::to_string(step) +
                            " (lane " + std::to_string(lane) + ")");
    }
  }
}

inline Vector head_outputs(const HeadParams& head, const Vector& h) {
  Vector out = matvec(head.U, h);
  for (std::size_t k = 0; k < out.len(); ++k) out[k] += head.c[k];
  return out;
}

/// Softmax in place; returns log-sum-exp of the logits.
inline double softmax_in_place(Vector& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
  return m + std::log(s);
}

inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  return best;
}

/// Runs the cell over one lane without caching. Returns h_T.
inline Vector run_lane(const CellParams& cell, const SequenceBatch& batch, std::size_t lane,
                       std::size_t hidden) {
  Vector h(hidden);
  Vector x(batch.input_dim);
  if (const auto* rnn = std::get_if<RnnParams>(&cell)) {
    Vector z(hidden);
    for (std::size_t t = 0; t < batch.steps; ++t) {
      auto in = batch.input(t, lane);
      std::copy(in.begin(), in.end(), x.begin());
      z.fill(0.0);
      matvec_accumulate(rnn->W, h.values(), z.values());
      matvec_accumulate(rnn->V, x.values(), z.values());
      for (std::size_t i = 0; i < hidden; ++i) h[i] = activate(rnn->activation, z[i] + rnn->b[i]);
      check_finite_state(h.values(), t + 1, lane);
    }
    return h;
  }
  const auto& lstm = std::get<LstmParams>(cell);
  Vector c(hidden);
  for (std::size_t t = 0; t < batch.steps; ++t) {
    auto in = batch.input(t, lane);
    std::copy(in.begin(), in.end(), x.begin());
    auto step = lstm_step(lstm, h, c, x);
    h = std::move(step.h);
    c = std::move(step.c);
    check_finite_state(c.values(), t + 1, lane);
  }
  return h;
}

}  // namespace detail

struct Predictions {
  std::vector<double> values;         // regression: one scalar per lane
  std::vector<std::size_t> classes;   // softmax: argmax per lane, ties to lowest index
};

/// Everything backward() needs; owned by one forward/backward pair.
struct Tape {
  std::size_t steps = 0;
  std::size_t lanes = 0;
  std::uint64_t params_fingerprint = 0;
  std::vector<RnnCache> rnn;    // lane-major: [lane * steps + t]
  std::vector<LstmCache> lstm;  // lane-major
  std::vector<Vector> final_h;  // per lane
  std::vector<Vector> outputs;  // regression prediction or softmax probabilities, per lane
  std::vector<double> targets;
  std::vector<std::uint32_t> labels;
};

struct ForwardResult {
  double loss = 0.0;
  Predictions predictions;
  Tape tape;
};

inline ForwardResult forward(const ModelSpec& spec, const Parameters& params,
                             const SequenceBatch& batch) {
  check_shapes(spec, params);
  detail::check_batch_inputs(spec, batch);
  detail::check_batch_targets(spec, batch);

  ForwardResult r;
  Tape& tape = r.tape;
  tape.steps = batch.steps;
  tape.lanes = batch.lanes;
  tape.params_fingerprint = fingerprint(params);
  tape.targets = batch.targets;
  tape.labels = batch.labels;
  tape.final_h.reserve(batch.lanes);
  tape.outputs.reserve(batch.lanes);

  const std::size_t hidden = spec.hidden;
  const double inv_b = 1.0 / static_cast<double>(batch.lanes);
  double loss_sum = 0.0;

  for (std::size_t lane = 0; lane < batch.lanes; ++lane) {
    Vector h(hidden);
    if (const auto* rnn = std::get_if<RnnParams>(&params.cell)) {
      for (std::size_t t = 0; t < batch.steps; ++t) {
        auto in = batch.input(t, lane);
        Vector x(std::vector<double>(in.begin(), in.end()));
        auto step = rnn_step(*rnn, h, x);
        h = std::move(step.h);
        detail::check_finite_state(h.values(), t + 1, lane);
        tape.rnn.push_back(std::move(step.cache));
      }
    } else {
      const auto& lstm = std::get<LstmParams>(params.cell);
      Vector c(hidden);
      for (std::size_t t = 0; t < batch.steps; ++t) {
        auto in = batch.input(t, lane);
        Vector x(std::vector<double>(in.begin(), in.end()));
        auto step = lstm_step(lstm, h, c, x);
        h = std::move(step.h);
        c = std::move(step.c);
        detail::check_finite_state(c.values(), t + 1, lane);
        tape.lstm.push_back(std::move(step.cache));
      }
    }

    Vector out = detail::head_outputs(params.head, h);
    if (spec.head == HeadKind::Regression) {
      const double err = out[0] - batch.targets[lane];
      loss_sum += err * err;
      r.predictions.values.push_back(out[0]);
    } else {
      const std::size_t y = batch.labels[lane];
      const double logit_y = out[y];
      const double lse = detail::softmax_in_place(out);
      loss_sum += lse - logit_y;
      r.predictions.classes.push_back(detail::argmax_lowest(out.values()));
    }
    tape.final_h.push_back(std::move(h));
    tape.outputs.push_back(std::move(out));
  }
  r.loss = loss_sum * inv_b;
  if (!std::isfinite(r.loss)) throw DivergenceError("forward: non-finite loss");
  return r;
}

struct Gradients {
  Parameters params;              // same block layout as the model
  std::vector<Vector> dh_final;   // dL/dh_T per lane, injected by the head
  std::vector<Vector> dh_initial; // dL/dh_0 per lane after full BPTT
};

inline Gradients backward(const ModelSpec& spec, const Parameters& params, const Tape& tape) {
  check_shapes(spec, params);
  if (tape.params_fingerprint != fingerprint(params)) {
    throw std::invalid_argument("backward: tape was recorded with different parameters");
  }
  const bool is_rnn = spec.cell == CellKind::Rnn;
  const std::size_t expected = tape.steps * tape.lanes;
  if (tape.final_h.size() != tape.lanes || tape.outputs.size() != tape.lanes ||
      (is_rnn ? tape.rnn.size() : tape.lstm.size()) != expected) {
    throw std::invalid_argument("backward: tape does not match the model's cell kind or shape");
  }

  Gradients g{zeros_like(params), {}, {}};
  const double inv_b = 1.0 / static_cast<double>(tape.lanes);
  const std::size_t hidden = spec.hidden;

  for (std::size_t lane = 0; lane < tape.lanes; ++lane) {
    Vector dout = tape.outputs[lane];
    if (spec.head == HeadKind::Regression) {
      dout[0] = 2.0 * (dout[0] - tape.targets[lane]) * inv_b;
    } else {
      for (double& v : dout) v *= inv_b;
      dout[tape.labels[lane]] -= inv_b;
    }
    detail::outer_accumulate(g.params.head.U, dout.values(), tape.final_h[lane].values());
    for (std::size_t k = 0; k < dout.len(); ++k) g.params.head.c[k] += dout[k];
    Vector dh = matvec_transposed(params.head.U, dout);
    g.dh_final.push_back(dh);

    if (is_rnn) {
      const auto& p = std::get<RnnParams>(params.cell);
      auto& gp = std::get<RnnParams>(g.params.cell);
      for (std::size_t t = tape.steps; t-- > 0;) {
        dh = rnn_backstep_accumulate(p, tape.rnn[lane * tape.steps + t], dh, gp);
      }
    } else {
      const auto& p = std::get<LstmParams>(params.cell);
      auto& gp = std::get<LstmParams>(g.params.cell);
      Vector dc(hidden);
      for (std::size_t t = tape.steps; t-- > 0;) {
        auto back = lstm_backstep_accumulate(p, tape.lstm[lane * tape.steps + t], dh, dc, gp);
        dh = std::move(back.dh_prev);
        dc = std::move(back.dc_prev);
      }
    }
    g.dh_initial.push_back(std::move(dh));
  }
  return g;
}

/// Evaluation path: same computation as forward() without caches.
inline Predictions predict(const ModelSpec& spec, const Parameters& params,
                           const SequenceBatch& inputs) {
  check_shapes(spec, params);
  detail::check_batch_inputs(spec, inputs);
  Predictions out;
  for (std::size_t lane = 0; lane < inputs.lanes; ++lane) {
    Vector h = detail::run_lane(params.cell, inputs, lane, spec.hidden);
    Vector o = detail::head_outputs(params.head, h);
    if (spec.head == HeadKind::Regression) {
      out.values.push_back(o[0]);
    } else {
      out.classes.push_back(detail::argmax_lowest(o.values()));
    }
  }
  return out;
}

/// Summed loss and task statistic over a batch, without caches.
/// For regression `metric_sum` is the sum of squared errors; for softmax it
/// is the number of correct top-1 predictions.
struct BatchScore {
  double loss_sum = 0.0;
  double metric_sum = 0.0;
};

inline BatchScore score_batch(const ModelSpec& spec, const Parameters& params,
                              const SequenceBatch& batch) {
  check_shapes(spec, params);
  detail::check_batch_inputs(spec, batch);
  detail::check_batch_targets(spec, batch);
  BatchScore s;
  for (std::size_t lane = 0; lane < batch.lanes; ++lane) {
    Vector h = detail::run_lane(params.cell, batch, lane, spec.hidden);
    Vector o = detail::head_outputs(params.head, h);
    if (spec.head == HeadKind::Regression) {
      const double err = o[0] - batch.targets[lane];
      s.loss_sum += err * err;
      s.metric_sum += err * err;
    } else {
      const std::size_t y = batch.labels[lane];
      const double logit_y = o[y];
      const double lse = detail::softmax_in_place(o);
      s.loss_sum += lse - logit_y;
      if (detail::argmax_lowest(o.values()) == y) s.metric_sum += 1.0;
    }
  }
  return s;
}

}  // namespace irnn
