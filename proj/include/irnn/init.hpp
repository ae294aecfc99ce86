#pragma once

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "irnn/ndcore.hpp"

namespace irnn {

namespace scheme {
struct Identity {
  bool operator==(const Identity&) const = default;
};
struct ScaledIdentity {
  double scale = 0.01;
  bool operator==(const ScaledIdentity&) const = default;
};
struct Gaussian {
  double std = 0.001;
  bool operator==(const Gaussian&) const = default;
};
/// Recurrent N(0, 1/H), input N(0, 1/D), zero bias. Used for the tanh baseline.
struct TanhBaseline {
  bool operator==(const TanhBaseline&) const = default;
};
}  // namespace scheme

using InitScheme =
    std::variant<scheme::Identity, scheme::ScaledIdentity, scheme::Gaussian, scheme::TanhBaseline>;

inline void validate(const InitScheme& s) {
  if (const auto* si = std::get_if<scheme::ScaledIdentity>(&s); si && !(si->scale > 0.0)) {
    throw std::invalid_argument("init: scaled identity requires scale > 0");
  }
  if (const auto* g = std::get_if<scheme::Gaussian>(&s); g && !(g->std >= 0.0)) {
    throw std::invalid_argument("init: gaussian requires std >= 0");
  }
}

namespace detail {

inline double parse_double(std::string_view text, std::string_view what) {
  // std::from_chars for double is available in libstdc++ 11.
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || text.empty()) {
    throw std::invalid_argument("invalid number for " + std::string(what) + ": '" +
                                std::string(text) + "'");
  }
  return value;
}

}  // namespace detail

/// Parses `identity`, `iscale:<s>`, `gauss:<std>` or `tanh-baseline`.
inline InitScheme parse_init_scheme(std::string_view text) {
  InitScheme out;
  if (text == "identity") {
    out = scheme::Identity{};
  } else if (text == "tanh-baseline") {
    out = scheme::TanhBaseline{};
  } else if (text.starts_with("iscale:")) {
    out = scheme::ScaledIdentity{detail::parse_double(text.substr(7), "iscale")};
  } else if (text.starts_with("gauss:")) {
    out = scheme::Gaussian{detail::parse_double(text.substr(6), "gauss")};
  } else {
    throw std::invalid_argument("unknown init scheme '" + std::string(text) +
                                "' (expected identity | iscale:<s> | gauss:<std> | tanh-baseline)");
  }
  validate(out);
  return out;
}

inline std::string to_string(const InitScheme& s) {
  struct Visitor {
    std::string operator()(const scheme::Identity&) const { return "identity"; }
    std::string operator()(const scheme::TanhBaseline&) const { return "tanh-baseline"; }
    std::string operator()(const scheme::ScaledIdentity& v) const {
      return "iscale:" + shortest(v.scale);
    }
    std::string operator()(const scheme::Gaussian& v) const { return "gauss:" + shortest(v.std); }
    static std::string shortest(double x) {
      char buf[64];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
      return std::string(buf, ptr);
    }
  };
  return std::visit(Visitor{}, s);
}

inline Matrix init_recurrent(const InitScheme& s, std::size_t h, Rng& rng) {
  if (h == 0) throw ShapeError("init_recurrent: hidden size must be positive");
  validate(s);
  struct Visitor {
    std::size_t h;
    Rng& rng;
    Matrix operator()(const scheme::Identity&) const { return identity(h); }
    Matrix operator()(const scheme::ScaledIdentity& v) const { return scaled_identity(h, v.scale); }
    Matrix operator()(const scheme::Gaussian& v) const { return gaussian_fill(h, h, 0.0, v.std, rng); }
    Matrix operator()(const scheme::TanhBaseline&) const {
      return gaussian_fill(h, h, 0.0, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    }
  };
  return std::visit(Visitor{h, rng}, s);
}

struct InputInit {
  Matrix V;
  Vector b;
};

/// V (h x d) and b (h) drawn from N(0, std^2). std = 0 gives zeros.
inline InputInit init_input_and_bias(double std, std::size_t h, std::size_t d, Rng& rng) {
  if (!(std >= 0.0)) throw std::invalid_argument("init_input_and_bias: std must be nonnegative");
  Matrix V = gaussian_fill(h, d, 0.0, std, rng);
  Vector b = gaussian_vector(h, 0.0, std, rng);
  return {std::move(V), std::move(b)};
}

struct TanhBaselineInit {
  Matrix W;
  Matrix V;
  Vector b;
};

inline TanhBaselineInit init_tanh_baseline(std::size_t h, std::size_t d, Rng& rng) {
  if (h == 0 || d == 0) throw ShapeError("init_tanh_baseline: sizes must be positive");
  Matrix W = gaussian_fill(h, h, 0.0, 1.0 / std::sqrt(static_cast<double>(h)), rng);
  Matrix V = gaussian_fill(h, d, 0.0, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  return {std::move(W), std::move(V), Vector(h)};
}

}  // namespace irnn
