#pragma once

// Plain SGD with a fixed learning rate and gradient clipping by the global
// L2 norm over all parameter blocks (rescaling, never elementwise clamping).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "irnn/network.hpp"

namespace irnn {

struct TrainConfig {
  double lr = 0.01;
  double clip = 100.0;
  std::size_t batch_size = 16;
  std::size_t max_steps = 100000;
  std::size_t eval_every = 200;
  std::uint64_t seed = 1;
  /// Fill the wallclock_s column with real elapsed time. Off by default so
  /// metrics files are byte-reproducible.
  bool record_wallclock = false;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (!(clip > 0.0)) throw std::invalid_argument("TrainConfig: clip must be > 0");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (eval_every == 0) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  }
};

inline double global_norm(const Parameters& grads) {
  std::vector<std::span<const double>> blocks;
  for_each_block(grads, [&](std::string_view, std::span<const double> b) { blocks.push_back(b); });
  return l2_norm(std::span<const std::span<const double>>(blocks));
}

/// Rescales all blocks by gc / n when the joint norm n exceeds gc.
/// Returns n (the pre-clip norm).
inline double clip_gradients(Parameters& grads, double gc) {
  if (!(gc > 0.0)) throw std::invalid_argument("clip_gradients: threshold must be > 0");
  const double n = global_norm(grads);
  if (!std::isfinite(n)) throw DivergenceError("clip_gradients: non-finite gradient norm");
  auto rescale = [&](double factor) {
    for_each_block(grads, [&](std::string_view, std::span<double> b) {
      for (double& x : b) x *= factor;
    });
  };
  if (n > gc) {
    rescale(gc / n);
    // Rounding can leave the norm a few ulps above gc; nudge down so a second
    // clip is an exact no-op.
    for (double m = global_norm(grads); m > gc; m = global_norm(grads)) {
      rescale(std::nextafter(gc / m, 0.0));
    }
  }
  return n;
}

/// p <- p - lr * g for every coordinate, in block order.
inline void sgd_step(Parameters& params, const Parameters& grads, double lr) {
  std::vector<std::span<const double>> gblocks;
  for_each_block(grads, [&](std::string_view, std::span<const double> b) { gblocks.push_back(b); });
  std::size_t i = 0;
  for_each_block(params, [&](std::string_view name, std::span<double> p) {
    if (i >= gblocks.size() || gblocks[i].size() != p.size()) {
      throw ShapeError("sgd_step: gradient block for " + std::string(name) + " has wrong shape");
    }
    const auto g = gblocks[i++];
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
  });
  if (i != gblocks.size()) throw ShapeError("sgd_step: gradient has extra blocks");
}

}  // namespace irnn
