#pragma once

// Benchmark data: the adding problem and pixel-by-pixel MNIST.
//
// Adding problem: each step carries (signal, mask); signal ~ U[0,1), the mask
// is 1 at exactly two distinct positions drawn uniformly from the whole
// sequence, and the target is the sum of the two marked signals.
//
// ADDP0001 layout (little-endian):
//   magic "ADDP0001", i64 T, i64 n, then per example
//   T f64 signal, T f64 mask, 1 f64 target.
//
// MNIST uses the standard big-endian IDX files (images 0x00000803,
// labels 0x00000801).

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "irnn/binary_io.hpp"
#include "irnn/network.hpp"

namespace irnn {

template <class D>
concept SequenceSource = requires(const D& d, std::span<const std::size_t> idx) {
  { d.size() } -> std::convertible_to<std::size_t>;
  { d.input_dim() } -> std::convertible_to<std::size_t>;
  { d.batch(idx) } -> std::same_as<SequenceBatch>;
};

// ---------------------------------------------------------------------------
// Adding problem

struct AddingExample {
  std::vector<double> signal;
  std::vector<double> mask;
  double target = 0.0;
};

class AddingDataset {
 public:
  AddingDataset(std::size_t steps, std::vector<double> signals,
                std::vector<std::array<std::uint32_t, 2>> marks)
      : steps_(steps), signals_(std::move(signals)), marks_(std::move(marks)) {
    if (steps_ < 2) throw std::invalid_argument("adding: T must be >= 2");
    if (signals_.size() != steps_ * marks_.size()) {
      throw ShapeError("adding: signal buffer does not match T * n");
    }
    targets_.reserve(marks_.size());
    for (std::size_t e = 0; e < marks_.size(); ++e) {
      const auto [i, j] = marks_[e];
      if (i >= j || j >= steps_) throw std::invalid_argument("adding: mark positions invalid");
      targets_.push_back(signals_[e * steps_ + i] + signals_[e * steps_ + j]);
    }
  }

  std::size_t size() const noexcept { return marks_.size(); }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t input_dim() const noexcept { return 2; }

  std::span<const double> signal(std::size_t e) const noexcept {
    return {signals_.data() + e * steps_, steps_};
  }
  /// Marked positions, ascending.
  std::array<std::uint32_t, 2> marks(std::size_t e) const noexcept { return marks_[e]; }
  double target(std::size_t e) const noexcept { return targets_[e]; }
  std::span<const double> targets() const noexcept { return targets_; }

  AddingExample example(std::size_t e) const {
    AddingExample ex;
    auto s = signal(e);
    ex.signal.assign(s.begin(), s.end());
    ex.mask.assign(steps_, 0.0);
    ex.mask[marks_[e][0]] = 1.0;
    ex.mask[marks_[e][1]] = 1.0;
    ex.target = targets_[e];
    return ex;
  }

  SequenceBatch batch(std::span<const std::size_t> indices) const {
    SequenceBatch b = SequenceBatch::zeros(steps_, indices.size(), 2);
    b.targets.reserve(indices.size());
    for (std::size_t lane = 0; lane < indices.size(); ++lane) {
      const std::size_t e = indices[lane];
      if (e >= size()) throw std::out_of_range("adding: example index out of range");
      auto s = signal(e);
      for (std::size_t t = 0; t < steps_; ++t) b.input(t, lane)[0] = s[t];
      b.input(marks_[e][0], lane)[1] = 1.0;
      b.input(marks_[e][1], lane)[1] = 1.0;
      b.targets.push_back(targets_[e]);
    }
    return b;
  }

  bool operator==(const AddingDataset&) const = default;

 private:
  std::size_t steps_;
  std::vector<double> signals_;
  std::vector<std::array<std::uint32_t, 2>> marks_;
  std::vector<double> targets_;
};

inline AddingDataset gen_adding(std::size_t steps, std::size_t n, Rng& rng) {
  if (steps < 2) throw std::invalid_argument("gen_adding: T must be >= 2, got " + std::to_string(steps));
  std::vector<double> signals(steps * n);
  std::vector<std::array<std::uint32_t, 2>> marks(n);
  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t t = 0; t < steps; ++t) signals[e * steps + t] = rng.uniform();
    auto i = static_cast<std::uint32_t>(rng.uniform_index(steps));
    auto j = static_cast<std::uint32_t>(rng.uniform_index(steps - 1));
    if (j >= i) ++j;
    marks[e] = {std::min(i, j), std::max(i, j)};
  }
  return AddingDataset(steps, std::move(signals), std::move(marks));
}

/// MSE of always predicting 1.0.
inline double baseline_mse(const AddingDataset& ds) {
  if (ds.size() == 0) return 0.0;
  double acc = 0.0;
  for (double y : ds.targets()) acc += (1.0 - y) * (1.0 - y);
  return acc / static_cast<double>(ds.size());
}

inline constexpr std::string_view kAddingMagic = "ADDP0001";

inline std::vector<unsigned char> encode_adding(const AddingDataset& ds) {
  ByteWriter w;
  w.raw(kAddingMagic);
  w.i64_le(static_cast<std::int64_t>(ds.steps()));
  w.i64_le(static_cast<std::int64_t>(ds.size()));
  for (std::size_t e = 0; e < ds.size(); ++e) {
    const auto ex = ds.example(e);
    w.f64_le(ex.signal);
    w.f64_le(ex.mask);
    w.f64_le(ex.target);
  }
  return w.take();
}

inline AddingDataset decode_adding(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kAddingMagic, "ADDP");
  const auto header_offset = r.offset();
  const std::int64_t steps = r.i64_le("ADDP T");
  const std::int64_t n = r.i64_le("ADDP n");
  if (steps < 2 || steps > (std::int64_t{1} << 32) || n < 0) {
    throw FormatError("ADDP: invalid header T/n", header_offset);
  }
  const auto t = static_cast<std::size_t>(steps);
  const auto count = static_cast<std::size_t>(n);
  const std::size_t record = (2 * t + 1) * 8;
  if (count > 0 && r.remaining() / record < count) {
    throw FormatError("ADDP: truncated, header declares " + std::to_string(count) + " examples",
                      r.offset());
  }
  std::vector<double> signals(t * count);
  std::vector<std::array<std::uint32_t, 2>> marks(count);
  std::vector<double> mask(t);
  for (std::size_t e = 0; e < count; ++e) {
    const auto record_offset = r.offset();
    r.f64_le(std::span<double>(signals.data() + e * t, t), "ADDP signal");
    r.f64_le(std::span<double>(mask), "ADDP mask");
    const double target = r.f64_le("ADDP target");
    std::vector<std::uint32_t> ones;
    for (std::size_t k = 0; k < t; ++k) {
      if (mask[k] == 1.0) {
        ones.push_back(static_cast<std::uint32_t>(k));
      } else if (mask[k] != 0.0) {
        throw FormatError("ADDP: mask entry is neither 0 nor 1 in example " + std::to_string(e),
                          record_offset);
      }
    }
    if (ones.size() != 2) {
      throw FormatError("ADDP: example " + std::to_string(e) + " has " +
                            std::to_string(ones.size()) + " marked steps, expected 2",
                        record_offset);
    }
    marks[e] = {ones[0], ones[1]};
    if (signals[e * t + ones[0]] + signals[e * t + ones[1]] != target) {
      throw FormatError("ADDP: target of example " + std::to_string(e) +
                            " is not the sum of its marked signals",
                        record_offset);
    }
  }
  r.expect_end("ADDP");
  return AddingDataset(t, std::move(signals), std::move(marks));
}

inline void save_adding(const std::filesystem::path& path, const AddingDataset& ds) {
  write_file_bytes(path, encode_adding(ds));
}

inline AddingDataset load_adding(const std::filesystem::path& path) {
  return decode_adding(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// MNIST

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct MnistImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
};

inline MnistImages decode_idx_images(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  const auto magic = r.u32_be("IDX images magic");
  if (magic != kIdxImagesMagic) throw FormatError("IDX images: bad magic", 0);
  MnistImages im;
  im.count = r.u32_be("IDX images count");
  im.rows = r.u32_be("IDX images rows");
  im.cols = r.u32_be("IDX images cols");
  if (im.rows == 0 || im.cols == 0) throw FormatError("IDX images: zero image size", 8);
  const unsigned __int128 total = static_cast<unsigned __int128>(im.count) * im.rows * im.cols;
  if (total > r.remaining()) {
    throw FormatError("IDX images: truncated, header declares " + std::to_string(im.count) +
                          " images of " + std::to_string(im.rows) + "x" + std::to_string(im.cols),
                      r.offset());
  }
  auto px = r.bytes(static_cast<std::size_t>(total), "IDX images pixels");
  im.pixels.assign(px.begin(), px.end());
  r.expect_end("IDX images");
  return im;
}

inline std::vector<std::uint8_t> decode_idx_labels(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  const auto magic = r.u32_be("IDX labels magic");
  if (magic != kIdxLabelsMagic) throw FormatError("IDX labels: bad magic", 0);
  const std::size_t count = r.u32_be("IDX labels count");
  auto raw = r.bytes(count, "IDX labels");
  r.expect_end("IDX labels");
  return {raw.begin(), raw.end()};
}

namespace detail {
inline void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
}  // namespace detail

inline std::vector<unsigned char> encode_idx_images(const MnistImages& im) {
  std::vector<unsigned char> out;
  detail::put_u32_be(out, kIdxImagesMagic);
  detail::put_u32_be(out, static_cast<std::uint32_t>(im.count));
  detail::put_u32_be(out, static_cast<std::uint32_t>(im.rows));
  detail::put_u32_be(out, static_cast<std::uint32_t>(im.cols));
  out.insert(out.end(), im.pixels.begin(), im.pixels.end());
  return out;
}

inline std::vector<unsigned char> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<unsigned char> out;
  detail::put_u32_be(out, kIdxLabelsMagic);
  detail::put_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

inline void validate_permutation(std::span<const std::uint32_t> perm, std::size_t n) {
  if (perm.size() != n) {
    throw std::invalid_argument("permutation has " + std::to_string(perm.size()) +
                                " entries, expected " + std::to_string(n));
  }
  std::vector<bool> seen(n, false);
  for (auto p : perm) {
    if (p >= n || seen[p]) throw std::invalid_argument("permutation is not a bijection");
    seen[p] = true;
  }
}

/// Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::uint32_t> make_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

/// Images and labels plus the sequence view (optional downsampling, then
/// optional fixed pixel permutation). Each image becomes a side*side step
/// sequence of scalars in [0, 1], scanline order from the top left.
struct MnistSeqDataset {
  MnistImages images;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint32_t> permutation;  // empty: scanline order
  std::size_t side = 0;                    // 0: native resolution

  std::size_t size() const noexcept { return images.count; }
  std::size_t input_dim() const noexcept { return 1; }
  std::size_t sequence_side() const noexcept { return side == 0 ? images.rows : side; }
  std::size_t steps() const noexcept { return sequence_side() * sequence_side(); }

  SequenceBatch batch(std::span<const std::size_t> indices) const;
};

inline MnistSeqDataset load_mnist(const std::filesystem::path& images_path,
                                  const std::filesystem::path& labels_path) {
  MnistSeqDataset ds;
  ds.images = decode_idx_images(read_file_bytes(images_path));
  ds.labels = decode_idx_labels(read_file_bytes(labels_path));
  if (ds.labels.size() != ds.images.count) {
    throw FormatError("MNIST: " + std::to_string(ds.images.count) + " images but " +
                          std::to_string(ds.labels.size()) + " labels",
                      4);
  }
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] > 9) throw FormatError("MNIST: label out of range 0..9", 8 + i);
  }
  return ds;
}

inline SequenceBatch to_sequence_batch(const MnistImages& images,
                                       std::span<const std::uint8_t> labels,
                                       std::span<const std::size_t> indices,
                                       std::span<const std::uint32_t> permutation = {},
                                       std::size_t downsample_side = 0) {
  const std::size_t rows = images.rows;
  const std::size_t cols = images.cols;
  std::size_t side = rows;
  std::size_t factor = 1;
  if (downsample_side != 0) {
    if (rows != cols || rows % downsample_side != 0) {
      throw std::invalid_argument("downsample side " + std::to_string(downsample_side) +
                                  " does not divide image side " + std::to_string(rows));
    }
    side = downsample_side;
    factor = rows / downsample_side;
  } else if (rows != cols && !permutation.empty()) {
    throw std::invalid_argument("permutation requires square images");
  }
  const std::size_t steps = downsample_side != 0 ? side * side : rows * cols;
  if (!permutation.empty()) validate_permutation(permutation, steps);

  SequenceBatch b = SequenceBatch::zeros(steps, indices.size(), 1);
  b.labels.reserve(indices.size());
  std::vector<double> seq(steps);
  const double pool = static_cast<double>(factor * factor);
  for (std::size_t lane = 0; lane < indices.size(); ++lane) {
    const std::size_t e = indices[lane];
    if (e >= images.count || e >= labels.size()) {
      throw std::out_of_range("MNIST: image index out of range");
    }
    const std::uint8_t* px = images.pixels.data() + e * rows * cols;
    if (factor == 1) {
      for (std::size_t k = 0; k < steps; ++k) seq[k] = px[k] / 255.0;
    } else {
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
          unsigned sum = 0;
          for (std::size_t dr = 0; dr < factor; ++dr)
            for (std::size_t dc = 0; dc < factor; ++dc)
              sum += px[(r * factor + dr) * cols + c * factor + dc];
          seq[r * side + c] = (sum / pool) / 255.0;
        }
      }
    }
    for (std::size_t t = 0; t < steps; ++t) {
      b.input(t, lane)[0] = permutation.empty() ? seq[t] : seq[permutation[t]];
    }
    b.labels.push_back(labels[e]);
  }
  return b;
}

inline SequenceBatch MnistSeqDataset::batch(std::span<const std::size_t> indices) const {
  return to_sequence_batch(images, labels, indices, permutation, side);
}

}  // namespace irnn
