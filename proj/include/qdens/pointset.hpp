#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qdens/direction_numbers.hpp"
#include "qdens/rng.hpp"

// Point sets in (0,1)^s: plain Monte Carlo draws and Sobol' digital nets,
// the latter randomized by a left matrix scramble followed by a digital
// shift.  Sobol' coordinates use w = 31 digit bits and are mapped to doubles
// with a center-of-cell offset, u = (y + 1/2) 2^-31, so every stored
// coordinate is strictly inside (0,1) and inversion never sees 0 or 1.

namespace qdens {

inline constexpr int kSobolBits = 31;
// Half of the smallest Sobol' cell; subtracting it recovers the raw
// digital-net value from a stored coordinate.
inline constexpr double kSobolHalfCell = 0x1.0p-32;

enum class PointKind { mc, sobol };

struct Randomization {
  enum class Kind { none, lms_plus_shift };
  Kind kind = Kind::none;
  std::uint64_t seed = 0;
};

namespace detail {

// Direction integers ("generator matrix columns") for dimensions
// 0..s-1, dimension 0 being van der Corput.  Layout: dim * kSobolBits + c.
inline std::vector<std::uint32_t> build_direction_integers(
    const DirectionNumbers& dirs, int s) {
  if (s < 1) throw std::invalid_argument("point dimension must be >= 1");
  if (s > dirs.max_dim())
    throw std::invalid_argument(
        "dimension " + std::to_string(s) +
        " exceeds the direction-number table (max_dim = " +
        std::to_string(dirs.max_dim()) + ")");
  constexpr int w = kSobolBits;
  std::vector<std::uint32_t> v(static_cast<std::size_t>(s) * w);
  for (int c = 0; c < w; ++c) v[static_cast<std::size_t>(c)] = 1u << (w - 1 - c);
  for (int dim = 1; dim < s; ++dim) {
    const auto& rec = dirs.record(dim + 1);
    const int deg = static_cast<int>(rec.degree);
    std::uint32_t* col = v.data() + static_cast<std::size_t>(dim) * w;
    for (int j = 0; j < deg && j < w; ++j) col[j] = rec.m[j] << (w - 1 - j);
    for (int j = deg; j < w; ++j) {
      std::uint32_t x = col[j - deg] ^ (col[j - deg] >> deg);
      for (int t = 1; t <= deg - 1; ++t)
        if ((rec.poly >> (deg - 1 - t)) & 1u) x ^= col[j - t];
      col[j] = x;
    }
  }
  return v;
}

// Left matrix scramble: multiply every column by a lower-triangular
// matrix with unit diagonal.  Row r (1-based, row 1 = most significant
// digit) is stored as a bitmask with the digit-c coefficient at bit w-c.
inline std::uint32_t apply_row_masks(std::span<const std::uint32_t> rows,
                                     std::uint32_t column) {
  constexpr int w = kSobolBits;
  std::uint32_t out = 0;
  for (int r = 1; r <= w; ++r)
    out |= static_cast<std::uint32_t>(std::popcount(rows[r - 1] & column) & 1)
           << (w - r);
  return out;
}

// Draws the scramble rows and shifts for `s` dimensions from one stream.
struct LmsShiftDraw {
  std::vector<std::uint32_t> rows;    // s * w row masks
  std::vector<std::uint32_t> shifts;  // s digital shifts
};

inline LmsShiftDraw draw_lms_shift(int s, std::uint64_t seed) {
  constexpr int w = kSobolBits;
  auto gen = rng::make_stream(seed, rng::kTagRandomization, 0, 0);
  LmsShiftDraw out;
  out.rows.resize(static_cast<std::size_t>(s) * w);
  out.shifts.resize(static_cast<std::size_t>(s));
  for (int dim = 0; dim < s; ++dim) {
    std::uint32_t* rows = out.rows.data() + static_cast<std::size_t>(dim) * w;
    for (int r = 1; r <= w; ++r) {
      std::uint32_t mask = 1u << (w - r);  // unit diagonal
      if (r > 1) {
        // r-1 random bits strictly below the diagonal, i.e. at the more
        // significant digit positions w-r+1 .. w-1.
        const std::uint32_t rnd = gen.bits32() & ((1u << (r - 1)) - 1u);
        mask |= rnd << (w - r + 1);
      }
      rows[r - 1] = mask;
    }
    out.shifts[static_cast<std::size_t>(dim)] = gen.bits32() >> 1;  // 31 bits
  }
  return out;
}

}  // namespace detail

// An n x s matrix of points in the open unit cube with provenance.
// Immutable after construction and safe to share across threads.
class PointSet {
 public:
  std::size_t size() const { return n_; }
  int dim() const { return s_; }
  PointKind kind() const { return kind_; }
  const Randomization& randomization() const { return rand_; }

  // Wraps explicit coordinates (row-major, strictly inside (0,1)) as an
  // mc-provenance point set; used by tests and by tools that replay points.
  static PointSet from_values(std::vector<double> values, std::size_t n,
                              int s) {
    if (n < 1 || s < 1 || values.size() != n * static_cast<std::size_t>(s))
      throw std::invalid_argument("from_values: shape mismatch");
    for (double v : values)
      if (!(v > 0.0 && v < 1.0))
        throw std::invalid_argument(
            "from_values: coordinates must lie strictly in (0,1)");
    PointSet out;
    out.n_ = n;
    out.s_ = s;
    out.kind_ = PointKind::mc;
    out.values_ = std::move(values);
    return out;
  }

  double operator()(std::size_t i, int j) const {
    return values_[i * static_cast<std::size_t>(s_) + static_cast<std::size_t>(j)];
  }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * static_cast<std::size_t>(s_),
            static_cast<std::size_t>(s_)};
  }
  const std::vector<double>& values() const { return values_; }

  // Sobol'-only accessors.
  int log2_count() const { return k_; }
  std::span<const std::uint32_t> direction_integers() const {
    return sobol_dirs_;
  }
  std::span<const std::uint32_t> digital_shift() const { return shift_; }

 private:
  friend PointSet generate_mc(std::size_t, int, std::uint64_t);
  friend PointSet sobol_net(int, int, const DirectionNumbers&);
  friend PointSet randomize(const PointSet&, const Randomization&);
  friend PointSet randomize_with(const PointSet&,
                                 std::span<const std::uint32_t>,
                                 std::span<const std::uint32_t>);
  friend class PointSource;

  PointSet() = default;

  std::size_t n_ = 0;
  int s_ = 0;
  int k_ = -1;
  PointKind kind_ = PointKind::mc;
  Randomization rand_;
  std::vector<double> values_;
  std::vector<std::uint32_t> sobol_dirs_;  // s * w, post-scramble if randomized
  std::vector<std::uint32_t> shift_;       // s, zero if unrandomized
};

// Streams the rows of a conceptual point set in index order without
// materializing it; PointSet construction and the experiment harness share
// this path, so both produce bit-identical coordinates.
class PointSource {
 public:
  static PointSource mc(std::size_t n, int s, std::uint64_t seed) {
    PointSource src(n, s);
    src.gen_.emplace(rng::derive_seed(seed, rng::kTagMcPoints, n,
                                      static_cast<std::uint64_t>(s)));
    return src;
  }

  static PointSource sobol(int k, int s, std::vector<std::uint32_t> dirs,
                           std::vector<std::uint32_t> shift) {
    if (k < 0 || k > kSobolBits)
      throw std::invalid_argument("sobol: need 0 <= k <= 31");
    PointSource src(std::size_t{1} << k, s);
    src.k_ = k;
    src.dirs_ = std::move(dirs);
    src.current_.assign(shift.begin(), shift.end());
    if (src.current_.empty()) src.current_.assign(static_cast<std::size_t>(s), 0u);
    return src;
  }

  std::size_t size() const { return n_; }
  int dim() const { return s_; }

  // Fills `count` consecutive rows (count * s doubles).
  void next_block(std::size_t count, double* out) {
    if (gen_) {
      for (std::size_t t = 0; t < count * static_cast<std::size_t>(s_); ++t)
        out[t] = gen_->uniform_open();
      cursor_ += count;
      return;
    }
    for (std::size_t t = 0; t < count; ++t, ++cursor_) {
      for (int d = 0; d < s_; ++d)
        out[t * static_cast<std::size_t>(s_) + static_cast<std::size_t>(d)] =
            (static_cast<double>(current_[static_cast<std::size_t>(d)]) + 0.5) *
            0x1.0p-31;
      if (cursor_ + 1 == n_) continue;  // last row: nothing to advance to
      // Natural index order: XOR the direction integers of every digit
      // that flips between cursor_ and cursor_ + 1.
      std::uint64_t carry = cursor_ ^ (cursor_ + 1);
      while (carry != 0) {
        const int c = std::countr_zero(carry);
        carry &= carry - 1;
        const std::uint32_t* col = dirs_.data() + static_cast<std::size_t>(c);
        for (int d = 0; d < s_; ++d)
          current_[static_cast<std::size_t>(d)] ^=
              col[static_cast<std::size_t>(d) * kSobolBits];
      }
    }
  }

 private:
  PointSource(std::size_t n, int s) : n_(n), s_(s) {}

  std::size_t n_;
  int s_;
  std::size_t cursor_ = 0;
  int k_ = -1;
  std::optional<rng::Xoshiro256pp> gen_;
  std::vector<std::uint32_t> dirs_;
  std::vector<std::uint32_t> current_;
};

// n independent uniform points over (0,1)^s; (n, s, seed) fully determine
// the output.
inline PointSet generate_mc(std::size_t n, int s, std::uint64_t seed) {
  if (n < 1 || s < 1) throw std::invalid_argument("generate_mc: n, s >= 1");
  PointSet out;
  out.n_ = n;
  out.s_ = s;
  out.kind_ = PointKind::mc;
  out.values_.resize(n * static_cast<std::size_t>(s));
  auto src = PointSource::mc(n, s, seed);
  src.next_block(n, out.values_.data());
  return out;
}

// The first 2^k points of the Sobol' sequence in s dimensions,
// unrandomized.  Point 0 is the origin of the net; stored coordinates carry
// the center-of-cell offset (subtract kSobolHalfCell for the raw values).
inline PointSet sobol_net(int k, int s,
                          const DirectionNumbers& dirs =
                              DirectionNumbers::builtin()) {
  PointSet out;
  out.n_ = std::size_t{1} << k;
  out.s_ = s;
  out.k_ = k;
  out.kind_ = PointKind::sobol;
  out.sobol_dirs_ = detail::build_direction_integers(dirs, s);
  out.shift_.assign(static_cast<std::size_t>(s), 0u);
  out.values_.resize(out.n_ * static_cast<std::size_t>(s));
  auto src = PointSource::sobol(k, s, out.sobol_dirs_, out.shift_);
  src.next_block(out.n_, out.values_.data());
  return out;
}

// Applies an explicit scramble (s * w row masks) and digital shift to an
// unrandomized net.  randomize() draws these from a seed; tests can pass
// the identity.
inline PointSet randomize_with(const PointSet& net,
                               std::span<const std::uint32_t> row_masks,
                               std::span<const std::uint32_t> shifts) {
  if (net.kind() != PointKind::sobol)
    throw std::invalid_argument("randomize: point set is not a Sobol' net");
  if (net.randomization().kind != Randomization::Kind::none)
    throw std::invalid_argument("randomize: net is already randomized");
  constexpr int w = kSobolBits;
  PointSet out;
  out.n_ = net.size();
  out.s_ = net.dim();
  out.k_ = net.log2_count();
  out.kind_ = PointKind::sobol;
  out.shift_.assign(shifts.begin(), shifts.end());
  out.sobol_dirs_.resize(net.direction_integers().size());
  for (int d = 0; d < net.dim(); ++d) {
    const auto rows = row_masks.subspan(static_cast<std::size_t>(d) * w, w);
    for (int c = 0; c < w; ++c) {
      const std::size_t at = static_cast<std::size_t>(d) * w +
                             static_cast<std::size_t>(c);
      out.sobol_dirs_[at] =
          detail::apply_row_masks(rows, net.direction_integers()[at]);
    }
  }
  out.rand_ = {Randomization::Kind::lms_plus_shift, 0};
  out.values_.resize(out.n_ * static_cast<std::size_t>(out.s_));
  auto src = PointSource::sobol(out.k_, out.s_, out.sobol_dirs_, out.shift_);
  src.next_block(out.n_, out.values_.data());
  return out;
}

// Left matrix scramble + digital shift drawn from r.seed.  Leaves every
// one-dimensional dyadic equidistribution count of the net intact while
// making each point uniform over (0,1)^s.
inline PointSet randomize(const PointSet& net, const Randomization& r) {
  if (r.kind != Randomization::Kind::lms_plus_shift)
    throw std::invalid_argument("randomize: unsupported randomization kind");
  const auto draw = detail::draw_lms_shift(net.dim(), r.seed);
  PointSet out = randomize_with(net, draw.rows, draw.shifts);
  out.rand_ = r;
  return out;
}

}  // namespace qdens
