#pragma once

// Central finite-difference oracle for the analytic backward pass.
//
// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
// ReLU kink guard: a coordinate is excluded when perturbing it by +/-eps
// flips the sign of any ReLU pre-activation, i.e. when the
// difference quotient straddles a kink. Probe losses are evaluated in
// long double by an independent reference forward pass.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "irnn/network.hpp"

namespace irnn {

inline constexpr double kGradcheckEpsilon = 1e-5;

inline double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// (loss(x+eps) - loss(x-eps)) / 2eps for each coordinate of `coords`. The
/// loss callable reads the coordinates in place; they are restored exactly
/// after each probe. Non-finite probes yield NaN for that coordinate.
inline std::vector<double> numeric_gradient(const std::function<double()>& loss,
                                            std::span<double> coords, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("numeric_gradient: epsilon must be > 0");
  std::vector<double> out(coords.size());
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const double saved = coords[k];
    coords[k] = saved + epsilon;
    const double plus = loss();
    coords[k] = saved - epsilon;
    const double minus = loss();
    coords[k] = saved;
    out[k] = (std::isfinite(plus) && std::isfinite(minus))
                 ? (plus - minus) / (2.0 * epsilon)
                 : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

/// Same oracle over every block of a model, returned with the model's layout.
inline Parameters numeric_gradient(const std::function<double(const Parameters&)>& loss,
                                   Parameters params, double epsilon) {
  Parameters grads = zeros_like(params);
  std::vector<std::span<double>> gblocks;
  for_each_block(grads, [&](std::string_view, std::span<double> b) { gblocks.push_back(b); });
  std::size_t i = 0;
  for_each_block(params, [&](std::string_view, std::span<double> b) {
    const auto g = numeric_gradient([&] { return loss(params); }, b, epsilon);
    std::copy(g.begin(), g.end(), gblocks[i++].begin());
  });
  return grads;
}

struct BlockReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  std::size_t kink_skipped = 0;
};

struct GradReport {
  std::vector<BlockReport> blocks;
  std::size_t trials = 0;
  std::size_t non_finite = 0;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
    return m;
  }
  std::size_t kink_skipped() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.kink_skipped;
    return n;
  }
  bool passed(double tolerance) const { return non_finite == 0 && max_rel_error() < tolerance; }

  void merge(const GradReport& other) {
    if (blocks.empty()) {
      blocks = other.blocks;
    } else {
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        auto& mine = blocks[i];
        const auto& theirs = other.blocks[i];
        if (theirs.max_rel_error > mine.max_rel_error) {
          mine.max_rel_error = theirs.max_rel_error;
          mine.worst_index = theirs.worst_index;
          mine.analytic = theirs.analytic;
          mine.numeric = theirs.numeric;
        }
        mine.checked += theirs.checked;
        mine.kink_skipped += theirs.kink_skipped;
      }
    }
    trials += other.trials;
    non_finite += other.non_finite;
  }
};

namespace detail {

using Wide = long double;

struct WideForward {
  Wide loss = 0;
  std::vector<bool> relu_pattern;  // sign of every ReLU pre-activation, lane-major
};

/// Extended-precision reference forward pass over flat parameters laid out in
/// for_each_block order. Written independently of forward(); in double the
/// rounding of the loss (~u |L| / eps) swamps gradients near the 1e-8 floor.
inline WideForward wide_forward(const ModelSpec& spec, std::span<const Wide> theta,
                                const SequenceBatch& batch) {
  const std::size_t h = spec.hidden;
  const std::size_t d = spec.input_dim;
  const std::size_t o = spec.outputs();
  const Wide* p = theta.data();
  auto take = [&p](std::size_t n) {
    const Wide* out = p;
    p += n;
    return out;
  };
  struct Affine {
    const Wide* W;
    const Wide* V;
    const Wide* b;
  };
  auto affine = [&] {
    Affine a;
    a.W = take(h * h);
    a.V = take(d * h);
    a.b = take(h);
    return a;
  };
  std::vector<Affine> blocks;
  for (int g = 0; g < (spec.cell == CellKind::Rnn ? 1 : 4); ++g) blocks.push_back(affine());
  const Wide* U = take(o * h);
  const Wide* c_out = take(o);

  auto preact = [&](const Affine& a, const std::vector<Wide>& hp, std::span<const double> x, std::size_t i) {
    Wide z = a.b[i];
    for (std::size_t j = 0; j < h; ++j) z += a.W[i * h + j] * hp[j];
    for (std::size_t j = 0; j < d; ++j) z += a.V[i * d + j] * static_cast<Wide>(x[j]);
    return z;
  };
  auto sigm = [](Wide z) { return 1 / (1 + std::exp(-z)); };

  WideForward r;
  Wide loss_sum = 0;
  for (std::size_t lane = 0; lane < batch.lanes; ++lane) {
    std::vector<Wide> hs(h, 0), cs(h, 0), next(h);
    for (std::size_t t = 0; t < batch.steps; ++t) {
      const auto x = batch.input(t, lane);
      if (spec.cell == CellKind::Rnn) {
        for (std::size_t i = 0; i < h; ++i) {
          const Wide z = preact(blocks[0], hs, x, i);
          switch (spec.activation) {
            case Activation::Relu:
              r.relu_pattern.push_back(z > 0);
              next[i] = z > 0 ? z : 0;
              break;
            case Activation::Tanh: next[i] = std::tanh(z); break;
            case Activation::Linear: next[i] = z; break;
          }
        }
      } else {
        for (std::size_t i = 0; i < h; ++i) {
          const Wide in = sigm(preact(blocks[0], hs, x, i));
          const Wide forget = sigm(preact(blocks[1], hs, x, i));
          const Wide out = sigm(preact(blocks[2], hs, x, i));
          const Wide cand = std::tanh(preact(blocks[3], hs, x, i));
          cs[i] = forget * cs[i] + in * cand;
          next[i] = out * std::tanh(cs[i]);
        }
      }
      hs.swap(next);
    }
    std::vector<Wide> y(o);
    for (std::size_t k = 0; k < o; ++k) {
      y[k] = c_out[k];
      for (std::size_t j = 0; j < h; ++j) y[k] += U[k * h + j] * hs[j];
    }
    if (spec.head == HeadKind::Regression) {
      const Wide err = y[0] - static_cast<Wide>(batch.targets[lane]);
      loss_sum += err * err;
    } else {
      const Wide m = *std::max_element(y.begin(), y.end());
      Wide s = 0;
      for (Wide v : y) s += std::exp(v - m);
      loss_sum += m + std::log(s) - y[batch.labels[lane]];
    }
  }
  r.loss = loss_sum / static_cast<Wide>(batch.lanes);
  return r;
}

}  // namespace detail

/// Compares backward() against the finite-difference oracle on one instance.
/// Probes run through detail::wide_forward with theta_k +/- eps.
inline GradReport check_gradients(const ModelSpec& spec, const Parameters& params,
                                  const SequenceBatch& batch,
                                  double epsilon = kGradcheckEpsilon) {
  const Gradients analytic = backward(spec, params, forward(spec, params, batch).tape);

  std::vector<detail::Wide> theta;
  for_each_block(params, [&](std::string_view, std::span<const double> b) { theta.insert(theta.end(), b.begin(), b.end()); });
  const auto base_pattern = detail::wide_forward(spec, theta, batch).relu_pattern;

  GradReport report;
  report.trials = 1;
  std::size_t offset = 0;
  for_each_block(analytic.params, [&](std::string_view name, std::span<const double> a) {
    BlockReport br;
    br.name = std::string(name);
    for (std::size_t k = 0; k < a.size(); ++k) {
      detail::Wide& coord = theta[offset + k];
      const detail::Wide saved = coord;
      coord = saved + epsilon;
      const auto plus = detail::wide_forward(spec, theta, batch);
      coord = saved - epsilon;
      const auto minus = detail::wide_forward(spec, theta, batch);
      coord = saved;
      if (!std::isfinite(plus.loss) || !std::isfinite(minus.loss)) {
        ++report.non_finite;
        continue;
      }
      if (plus.relu_pattern != base_pattern || minus.relu_pattern != base_pattern) {
        ++br.kink_skipped;
        continue;
      }
      const double numeric = static_cast<double>((plus.loss - minus.loss) / (2 * static_cast<detail::Wide>(epsilon)));
      const double err = relative_error(a[k], numeric);
      ++br.checked;
      if (br.checked == 1 || err > br.max_rel_error) {
        br.max_rel_error = err;
        br.worst_index = k;
        br.analytic = a[k];
        br.numeric = numeric;
      }
    }
    offset += a.size();
    report.blocks.push_back(std::move(br));
  });
  return report;
}

/// Random instance used by check_model(): moderate weight scales so that no
/// block is trivially zero, inputs ~ N(0, 1), regression targets within
/// N(0, 1) of the model's own predictions, uniform class labels.
struct GradcheckInstance {
  Parameters params;
  SequenceBatch batch;
};

inline GradcheckInstance random_instance(const ModelSpec& spec, std::size_t steps,
                                         std::size_t lanes, Rng& rng) {
  spec.validate();
  const std::size_t h = spec.hidden;
  const std::size_t d = spec.input_dim;
  CellParams cell = [&]() -> CellParams {
    if (spec.cell == CellKind::Rnn) {
      Matrix W = gaussian_fill(h, h, 0.0, 0.4, rng);
      Matrix V = gaussian_fill(h, d, 0.0, 0.5, rng);
      Vector b = gaussian_vector(h, 0.1, 0.1, rng);
      return RnnParams{std::move(W), std::move(V), std::move(b), spec.activation};
    }
    auto make_gate = [&](Gate g) {
      Matrix W = gaussian_fill(h, h, 0.0, 0.4, rng);
      Matrix V = gaussian_fill(h, d, 0.0, 0.4, rng);
      Vector b = gaussian_vector(h, g == Gate::Forget ? spec.forget_bias : 0.0, 0.1, rng);
      return GateParams{std::move(W), std::move(V), std::move(b)};
    };
    return LstmParams{{make_gate(Gate::Input), make_gate(Gate::Forget), make_gate(Gate::Output),
                       make_gate(Gate::Candidate)}};
  }();
  HeadParams head{gaussian_fill(spec.outputs(), h, 0.0, 0.5, rng),
                  gaussian_vector(spec.outputs(), 0.0, 0.1, rng)};
  Parameters params{std::move(cell), std::move(head)};

  SequenceBatch batch = SequenceBatch::zeros(steps, lanes, d);
  for (double& x : batch.inputs) x = rng.normal();
  if (spec.head == HeadKind::Regression) {
    const auto preds = predict(spec, params, batch);
    for (std::size_t b = 0; b < lanes; ++b) batch.targets.push_back(preds.values[b] + rng.normal());
  } else {
    for (std::size_t b = 0; b < lanes; ++b) {
      batch.labels.push_back(static_cast<std::uint32_t>(rng.uniform_index(spec.classes)));
    }
  }
  return {std::move(params), std::move(batch)};
}

struct GradcheckOptions {
  std::size_t steps = 10;
  std::size_t lanes = 3;
  double epsilon = kGradcheckEpsilon;
};

/// Runs check_gradients() on `trials` random instances and keeps the worst case per block.
inline GradReport check_model(const ModelSpec& spec, std::size_t trials, std::uint64_t seed,
                              const GradcheckOptions& opts = {}) {
  if (trials == 0) throw std::invalid_argument("check_model: trials must be >= 1");
  GradReport total;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(mix_seed(seed, t));
    auto inst = random_instance(spec, opts.steps, opts.lanes, rng);
    total.merge(check_gradients(spec, inst.params, inst.batch, opts.epsilon));
  }
  return total;
}

}  // namespace irnn
