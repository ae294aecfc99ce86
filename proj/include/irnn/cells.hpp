#pragma once

// Single-step forward/backward for the simple recurrent cell
//   h_t = g(W h_{t-1} + V x_t + b)
// and a standard LSTM (forget gate, no peepholes). Backward passes read the
// pre-activations stored in the step caches; nothing is recomputed.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "irnn/ndcore.hpp"

namespace irnn {

enum class Activation { Relu, Tanh, Linear };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "linear") return Activation::Linear;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

/// g(0) = 0 and g'(0) = 0 for ReLU.
inline double activate(Activation a, double z) noexcept {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Linear: return z;
  }
  return z;
}

inline double activation_derivative(Activation a, double z) noexcept {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Linear: return 1.0;
  }
  return 1.0;
}

inline double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

namespace detail {

// out += m * v
inline void matvec_accumulate(const Matrix& m, std::span<const double> v, std::span<double> out) noexcept {
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] += dot(m.row(i), v);
}

// out += mᵀ * v
inline void matvec_t_accumulate(const Matrix& m, std::span<const double> v, std::span<double> out) noexcept {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double vi = v[i];
    if (vi == 0.0) continue;
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j] * vi;
  }
}

// m += u ⊗ v
inline void outer_accumulate(Matrix& m, std::span<const double> u, std::span<const double> v) noexcept {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double ui = u[i];
    if (ui == 0.0) continue;
    auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += ui * v[j];
  }
}

inline void require_len(const Vector& v, std::size_t n, const char* what) {
  if (v.len() != n) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                     std::to_string(v.len()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Simple recurrent cell

struct RnnParams {
  Matrix W;  // H x H
  Matrix V;  // H x D
  Vector b;  // H
  Activation activation = Activation::Relu;

  std::size_t hidden() const noexcept { return W.rows(); }
  std::size_t input_dim() const noexcept { return V.cols(); }

  void validate() const {
    if (W.rows() != W.cols()) throw ShapeError("RnnParams: W must be square, got " + W.shape_string());
    if (V.rows() != W.rows() || b.len() != W.rows()) {
      throw ShapeError("RnnParams: W " + W.shape_string() + ", V " + V.shape_string() +
                       ", b " + std::to_string(b.len()) + " disagree on hidden size");
    }
  }

  bool operator==(const RnnParams&) const = default;
};

struct RnnCache {
  Vector h_prev;
  Vector x;
  Vector preact;
};

struct RnnStep {
  Vector h;
  RnnCache cache;
};

inline RnnStep rnn_step(const RnnParams& p, const Vector& h_prev, const Vector& x) {
  detail::require_len(h_prev, p.hidden(), "rnn_step h_prev");
  detail::require_len(x, p.input_dim(), "rnn_step x");
  Vector z(p.hidden());
  detail::matvec_accumulate(p.W, h_prev.values(), z.values());
  detail::matvec_accumulate(p.V, x.values(), z.values());
  for (std::size_t i = 0; i < z.len(); ++i) z[i] += p.b[i];
  Vector h(z.len());
  for (std::size_t i = 0; i < z.len(); ++i) h[i] = activate(p.activation, z[i]);
  return {std::move(h), RnnCache{h_prev, x, std::move(z)}};
}

/// Gradient buffers with the same shapes as RnnParams.
inline RnnParams zeros_like(const RnnParams& p) {
  return {Matrix(p.W.rows(), p.W.cols()), Matrix(p.V.rows(), p.V.cols()), Vector(p.b.len()),
          p.activation};
}

/// Accumulates the step's parameter gradients into `grads` and returns dL/dh_prev.
inline Vector rnn_backstep_accumulate(const RnnParams& p, const RnnCache& cache, const Vector& dh,
                                      RnnParams& grads) {
  const std::size_t h = p.hidden();
  if (cache.preact.len() != h || cache.h_prev.len() != h || cache.x.len() != p.input_dim()) {
    throw ShapeError("rnn_backstep: cache does not match params");
  }
  detail::require_len(dh, h, "rnn_backstep dh");
  Vector masked(h);
  for (std::size_t i = 0; i < h; ++i) {
    masked[i] = dh[i] * activation_derivative(p.activation, cache.preact[i]);
  }
  detail::outer_accumulate(grads.W, masked.values(), cache.h_prev.values());
  detail::outer_accumulate(grads.V, masked.values(), cache.x.values());
  for (std::size_t i = 0; i < h; ++i) grads.b[i] += masked[i];
  Vector dh_prev(h);
  detail::matvec_t_accumulate(p.W, masked.values(), dh_prev.values());
  return dh_prev;
}

struct RnnStepGrads {
  Vector dh_prev;
  Matrix dW;
  Matrix dV;
  Vector db;
};

inline RnnStepGrads rnn_backstep(const RnnParams& p, const RnnCache& cache, const Vector& dh) {
  RnnParams g = zeros_like(p);
  Vector dh_prev = rnn_backstep_accumulate(p, cache, dh, g);
  return {std::move(dh_prev), std::move(g.W), std::move(g.V), std::move(g.b)};
}

// ---------------------------------------------------------------------------
// LSTM

enum class Gate : std::size_t { Input = 0, Forget = 1, Output = 2, Candidate = 3 };
inline constexpr std::array<Gate, 4> kGates = {Gate::Input, Gate::Forget, Gate::Output,
                                               Gate::Candidate};

inline std::string_view gate_name(Gate g) {
  constexpr std::array<std::string_view, 4> names = {"input", "forget", "output", "candidate"};
  return names[static_cast<std::size_t>(g)];
}

struct GateParams {
  Matrix W;  // H x H
  Matrix V;  // H x D
  Vector b;  // H
  bool operator==(const GateParams&) const = default;
};

struct LstmParams {
  std::array<GateParams, 4> gates;

  GateParams& gate(Gate g) noexcept { return gates[static_cast<std::size_t>(g)]; }
  const GateParams& gate(Gate g) const noexcept { return gates[static_cast<std::size_t>(g)]; }

  std::size_t hidden() const noexcept { return gates[0].W.rows(); }
  std::size_t input_dim() const noexcept { return gates[0].V.cols(); }

  void validate() const {
    const std::size_t h = hidden();
    const std::size_t d = input_dim();
    for (Gate g : kGates) {
      const auto& gp = gate(g);
      if (gp.W.rows() != h || gp.W.cols() != h || gp.V.rows() != h || gp.V.cols() != d ||
          gp.b.len() != h) {
        throw ShapeError("LstmParams: " + std::string(gate_name(g)) + " gate has W " +
                         gp.W.shape_string() + ", V " + gp.V.shape_string() + ", b " +
                         std::to_string(gp.b.len()) + "; expected H=" + std::to_string(h) +
                         ", D=" + std::to_string(d));
      }
    }
  }

  bool operator==(const LstmParams&) const = default;
};

inline LstmParams zeros_like(const LstmParams& p) {
  const std::size_t h = p.hidden();
  const std::size_t d = p.input_dim();
  LstmParams out{{GateParams{Matrix(h, h), Matrix(h, d), Vector(h)},
                  GateParams{Matrix(h, h), Matrix(h, d), Vector(h)},
                  GateParams{Matrix(h, h), Matrix(h, d), Vector(h)},
                  GateParams{Matrix(h, h), Matrix(h, d), Vector(h)}}};
  return out;
}

struct LstmCache {
  Vector h_prev;
  Vector c_prev;
  Vector x;
  std::array<Vector, 4> act;  // post-nonlinearity gate values, indexed by Gate
  Vector c;
  Vector tanh_c;
};

struct LstmStep {
  Vector h;
  Vector c;
  LstmCache cache;
};

inline LstmStep lstm_step(const LstmParams& p, const Vector& h_prev, const Vector& c_prev,
                          const Vector& x) {
  const std::size_t h = p.hidden();
  detail::require_len(h_prev, h, "lstm_step h_prev");
  detail::require_len(c_prev, h, "lstm_step c_prev");
  detail::require_len(x, p.input_dim(), "lstm_step x");

  LstmCache cache{h_prev, c_prev, x, {}, Vector(h), Vector(h)};
  for (Gate g : kGates) {
    const auto& gp = p.gate(g);
    Vector z(h);
    detail::matvec_accumulate(gp.W, h_prev.values(), z.values());
    detail::matvec_accumulate(gp.V, x.values(), z.values());
    for (std::size_t k = 0; k < h; ++k) {
      const double zk = z[k] + gp.b[k];
      z[k] = g == Gate::Candidate ? std::tanh(zk) : sigmoid(zk);
    }
    cache.act[static_cast<std::size_t>(g)] = std::move(z);
  }
  const auto& i = cache.act[0];
  const auto& f = cache.act[1];
  const auto& o = cache.act[2];
  const auto& u = cache.act[3];
  Vector out(h);
  for (std::size_t k = 0; k < h; ++k) {
    cache.c[k] = f[k] * c_prev[k] + i[k] * u[k];
    cache.tanh_c[k] = std::tanh(cache.c[k]);
    out[k] = o[k] * cache.tanh_c[k];
  }
  Vector c = cache.c;
  return {std::move(out), std::move(c), std::move(cache)};
}

struct LstmBackResult {
  Vector dh_prev;
  Vector dc_prev;
};

inline LstmBackResult lstm_backstep_accumulate(const LstmParams& p, const LstmCache& cache,
                                               const Vector& dh, const Vector& dc,
                                               LstmParams& grads) {
  const std::size_t h = p.hidden();
  detail::require_len(dh, h, "lstm_backstep dh");
  detail::require_len(dc, h, "lstm_backstep dc");
  if (cache.c.len() != h || cache.x.len() != p.input_dim()) {
    throw ShapeError("lstm_backstep: cache does not match params");
  }
  const auto& i = cache.act[0];
  const auto& f = cache.act[1];
  const auto& o = cache.act[2];
  const auto& u = cache.act[3];

  std::array<Vector, 4> dz{Vector(h), Vector(h), Vector(h), Vector(h)};
  Vector dc_prev(h);
  for (std::size_t k = 0; k < h; ++k) {
    const double tc = cache.tanh_c[k];
    const double dct = dc[k] + dh[k] * o[k] * (1.0 - tc * tc);
    dz[2][k] = dh[k] * tc * o[k] * (1.0 - o[k]);
    dz[1][k] = dct * cache.c_prev[k] * f[k] * (1.0 - f[k]);
    dz[0][k] = dct * u[k] * i[k] * (1.0 - i[k]);
    dz[3][k] = dct * i[k] * (1.0 - u[k] * u[k]);
    dc_prev[k] = dct * f[k];
  }
  Vector dh_prev(h);
  for (Gate g : kGates) {
    const auto idx = static_cast<std::size_t>(g);
    auto& gg = grads.gate(g);
    detail::outer_accumulate(gg.W, dz[idx].values(), cache.h_prev.values());
    detail::outer_accumulate(gg.V, dz[idx].values(), cache.x.values());
    for (std::size_t k = 0; k < h; ++k) gg.b[k] += dz[idx][k];
    detail::matvec_t_accumulate(p.gate(g).W, dz[idx].values(), dh_prev.values());
  }
  return {std::move(dh_prev), std::move(dc_prev)};
}

struct LstmStepGrads {
  Vector dh_prev;
  Vector dc_prev;
  LstmParams grads;
};

inline LstmStepGrads lstm_backstep(const LstmParams& p, const LstmCache& cache, const Vector& dh,
                                   const Vector& dc) {
  LstmParams g = zeros_like(p);
  auto r = lstm_backstep_accumulate(p, cache, dh, dc, g);
  return {std::move(r.dh_prev), std::move(r.dc_prev), std::move(g)};
}

}  // namespace irnn
