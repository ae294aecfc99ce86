#pragma once

// Model checkpoint, flat little-endian binary:
//
//   offset  field
//   0       magic "IRNN0001" (8 bytes)
//   8       i64 cell          0 = rnn, 1 = lstm
//   16      i64 activation    0 = relu, 1 = tanh, 2 = linear
//   24      i64 hidden
//   32      i64 input_dim
//   40      i64 head          0 = regression, 1 = softmax
//   48      i64 classes
//   56      i64 init kind     0 = identity, 1 = iscale, 2 = gauss, 3 = tanh-baseline
//   64      f64 init value    scale or std; 0 when unused
//   72      f64 input_init_std
//   80      f64 forget_bias
//   88      parameter blocks, f64 each, row-major, in for_each_block() order
//
// The file ends exactly after the last block.

#include <filesystem>
#include <variant>

#include "irnn/binary_io.hpp"
#include "irnn/network.hpp"

namespace irnn {

inline constexpr std::string_view kCheckpointMagic = "IRNN0001";

struct Checkpoint {
  ModelSpec spec;
  Parameters params;
};

inline std::vector<unsigned char> encode_checkpoint(const ModelSpec& spec, const Parameters& params) {
  check_shapes(spec, params);
  ByteWriter w;
  w.raw(kCheckpointMagic);
  w.i64_le(spec.cell == CellKind::Rnn ? 0 : 1);
  w.i64_le(static_cast<std::int64_t>(spec.activation));
  w.i64_le(static_cast<std::int64_t>(spec.hidden));
  w.i64_le(static_cast<std::int64_t>(spec.input_dim));
  w.i64_le(spec.head == HeadKind::Regression ? 0 : 1);
  w.i64_le(static_cast<std::int64_t>(spec.classes));
  w.i64_le(static_cast<std::int64_t>(spec.init.index()));
  double init_value = 0.0;
  if (const auto* s = std::get_if<scheme::ScaledIdentity>(&spec.init)) init_value = s->scale;
  if (const auto* g = std::get_if<scheme::Gaussian>(&spec.init)) init_value = g->std;
  w.f64_le(init_value);
  w.f64_le(spec.input_init_std);
  w.f64_le(spec.forget_bias);
  for_each_block(params, [&](std::string_view, std::span<const double> b) { w.f64_le(b); });
  return w.take();
}

/// Parameter storage with the shapes `spec` implies, all zero.
inline Parameters allocate_parameters(const ModelSpec& spec) {
  const std::size_t h = spec.hidden;
  const std::size_t d = spec.input_dim;
  CellParams cell = [&]() -> CellParams {
    if (spec.cell == CellKind::Rnn) {
      return RnnParams{Matrix(h, h), Matrix(h, d), Vector(h), spec.activation};
    }
    auto zero_gate = [&] { return GateParams{Matrix(h, h), Matrix(h, d), Vector(h)}; };
    return LstmParams{{zero_gate(), zero_gate(), zero_gate(), zero_gate()}};
  }();
  return {std::move(cell), HeadParams{Matrix(spec.outputs(), h), Vector(spec.outputs())}};
}

inline Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kCheckpointMagic, "checkpoint");
  ModelSpec spec;
  const auto field_offset = r.offset();
  const std::int64_t cell = r.i64_le("checkpoint cell");
  const std::int64_t act = r.i64_le("checkpoint activation");
  const std::int64_t hidden = r.i64_le("checkpoint hidden");
  const std::int64_t input_dim = r.i64_le("checkpoint input_dim");
  const std::int64_t head = r.i64_le("checkpoint head");
  const std::int64_t classes = r.i64_le("checkpoint classes");
  const std::int64_t init_kind = r.i64_le("checkpoint init kind");
  const double init_value = r.f64_le("checkpoint init value");
  spec.input_init_std = r.f64_le("checkpoint input_init_std");
  spec.forget_bias = r.f64_le("checkpoint forget_bias");

  if (cell < 0 || cell > 1 || act < 0 || act > 2 || head < 0 || head > 1 || init_kind < 0 ||
      init_kind > 3 || hidden < 1 || input_dim < 1 || classes < 0 || hidden > (1 << 20) ||
      input_dim > (1 << 20) || classes > (1 << 20)) {
    throw FormatError("checkpoint: header fields out of range", field_offset);
  }
  spec.cell = cell == 0 ? CellKind::Rnn : CellKind::Lstm;
  spec.activation = static_cast<Activation>(act);
  spec.hidden = static_cast<std::size_t>(hidden);
  spec.input_dim = static_cast<std::size_t>(input_dim);
  spec.head = head == 0 ? HeadKind::Regression : HeadKind::Softmax;
  spec.classes = static_cast<std::size_t>(classes);
  switch (init_kind) {
    case 0: spec.init = scheme::Identity{}; break;
    case 1: spec.init = scheme::ScaledIdentity{init_value}; break;
    case 2: spec.init = scheme::Gaussian{init_value}; break;
    default: spec.init = scheme::TanhBaseline{}; break;
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: invalid spec: ") + e.what(), field_offset);
  }

  Parameters params = allocate_parameters(spec);
  for_each_block(params, [&](std::string_view name, std::span<double> b) {
    r.f64_le(b, "checkpoint block " + std::string(name));
  });
  r.expect_end("checkpoint");
  return {std::move(spec), std::move(params)};
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                            const Parameters& params) {
  write_file_bytes(path, encode_checkpoint(spec, params));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace irnn
