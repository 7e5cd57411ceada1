#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace uclab {

// Geometry comparisons use this absolute slack (scaled by M where a scale
// exists) so containment certificates are not decided by the last ulp.
inline constexpr double kGeomTol = 1e-12;

enum class Errc {
  invalid_parameter,
  window_too_small,
  scale_not_normalized,
  grid_mismatch,
  zero_field,
  no_convergence,
  unreachable_residual,
  degenerate_sweep,
  nonpositive_ratio,
  interval_too_wide,
  bad_config,
  io_error,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::window_too_small: return "window-too-small";
    case Errc::scale_not_normalized: return "scale-not-normalized";
    case Errc::grid_mismatch: return "grid-mismatch";
    case Errc::zero_field: return "zero-field";
    case Errc::no_convergence: return "no-convergence";
    case Errc::unreachable_residual: return "unreachable-residual";
    case Errc::degenerate_sweep: return "degenerate-sweep";
    case Errc::nonpositive_ratio: return "nonpositive-ratio";
    case Errc::interval_too_wide: return "interval-too-wide";
    case Errc::bad_config: return "bad-config";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

// Deterministic, platform-independent RNG (splitmix64). std::uniform_*
// distributions are not bit-stable across standard libraries, and report
// determinism is a contract, so all randomness that reaches an artifact
// goes through this.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0,1), 53-bit resolution
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_in(double a, double b) { return a + (b - a) * next_unit(); }

  // standard normal via Box-Muller (deterministic)
  double next_normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
  }
};

// Derives an independent stream for sub-task `tag` of a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  SplitMix64 mix(base ^ (0x9e3779b97f4a7c15ULL * (tag + 1)));
  return mix.next_u64();
}

// Axis-aligned box of lattice indices, inclusive on both ends.
struct IndexBox {
  std::vector<int> lo;
  std::vector<int> hi;

  IndexBox() = default;
  IndexBox(std::vector<int> l, std::vector<int> h) : lo(std::move(l)), hi(std::move(h)) {
    require(lo.size() == hi.size(), Errc::invalid_parameter, "index box rank mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i)
      require(lo[i] <= hi[i], Errc::invalid_parameter, "empty index box");
  }

  static IndexBox cube(int d, int l, int h) {
    return IndexBox(std::vector<int>(d, l), std::vector<int>(d, h));
  }

  int dim() const { return static_cast<int>(lo.size()); }

  std::int64_t count() const {
    std::int64_t c = 1;
    for (std::size_t i = 0; i < lo.size(); ++i) c *= (hi[i] - lo[i] + 1);
    return c;
  }

  bool contains(const std::vector<int>& k) const {
    if (k.size() != lo.size()) return false;
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (k[i] < lo[i] || k[i] > hi[i]) return false;
    return true;
  }

  bool contains_box(const IndexBox& other) const {
    if (other.dim() != dim()) return false;
    for (int i = 0; i < dim(); ++i)
      if (other.lo[i] < lo[i] || other.hi[i] > hi[i]) return false;
    return true;
  }

  // Row-major flat index, axis 0 slowest.
  std::int64_t flat(const std::vector<int>& k) const {
    std::int64_t f = 0;
    for (std::size_t i = 0; i < lo.size(); ++i) f = f * (hi[i] - lo[i] + 1) + (k[i] - lo[i]);
    return f;
  }

  std::vector<int> unflat(std::int64_t f) const {
    std::vector<int> k(lo.size());
    for (int i = dim() - 1; i >= 0; --i) {
      int w = hi[i] - lo[i] + 1;
      k[i] = lo[i] + static_cast<int>(f % w);
      f /= w;
    }
    return k;
  }

  // Visits every index in row-major order; the buffer is reused.
  template <class F>
  void for_each(F&& f) const {
    std::vector<int> k = lo;
    while (true) {
      f(static_cast<const std::vector<int>&>(k));
      int axis = dim() - 1;
      while (axis >= 0) {
        if (++k[axis] <= hi[axis]) break;
        k[axis] = lo[axis];
        --axis;
      }
      if (axis < 0) return;
    }
  }
};

inline bool operator==(const IndexBox& a, const IndexBox& b) {
  return a.lo == b.lo && a.hi == b.hi;
}

// N-d prefix sums over a row-major array with extents n[i]; box-sum queries
// over index ranges [lo_i, hi_i] (inclusive) in O(2^d).
class PrefixSums {
 public:
  PrefixSums(const std::vector<double>& values, const std::vector<std::int64_t>& extents)
      : ext_(extents) {
    std::int64_t total = 1;
    for (auto e : ext_) total *= (e + 1);
    sums_.assign(total, 0.0);
    const int d = static_cast<int>(ext_.size());
    strides_.assign(d, 1);
    for (int i = d - 2; i >= 0; --i) strides_[i] = strides_[i + 1] * (ext_[i + 1] + 1);

    std::vector<std::int64_t> idx(d, 1);
    std::int64_t nvals = 1;
    for (auto e : ext_) nvals *= e;
    std::vector<std::int64_t> vstrides(d, 1);
    for (int i = d - 2; i >= 0; --i) vstrides[i] = vstrides[i + 1] * ext_[i + 1];
    for (std::int64_t v = 0; v < nvals; ++v) {
      std::int64_t rem = v;
      std::int64_t pos = 0;
      for (int i = 0; i < d; ++i) {
        idx[i] = rem / vstrides[i] + 1;
        rem %= vstrides[i];
        pos += idx[i] * strides_[i];
      }
      double s = values[v];
      // inclusion-exclusion over already-filled lower corners
      for (unsigned mask = 1; mask < (1u << d); ++mask) {
        std::int64_t p = pos;
        int bits = 0;
        for (int i = 0; i < d; ++i)
          if (mask & (1u << i)) {
            p -= strides_[i];
            ++bits;
          }
        s += (bits % 2 ? 1.0 : -1.0) * sums_[p];
      }
      sums_[pos] = s;
    }
  }

  // Sum of values over idx[i] in [lo[i], hi[i]], 0-based inclusive; ranges are
  // clamped to the array and an empty range yields 0.
  double box_sum(const std::vector<std::int64_t>& lo, const std::vector<std::int64_t>& hi) const {
    const int d = static_cast<int>(ext_.size());
    std::vector<std::int64_t> low(d), lim(d);
    for (int i = 0; i < d; ++i) {
      low[i] = std::max<std::int64_t>(lo[i], 0);
      lim[i] = std::min(hi[i], ext_[i] - 1);
      if (low[i] > lim[i]) return 0.0;
    }
    double s = 0.0;
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
      std::int64_t p = 0;
      int bits = 0;
      for (int i = 0; i < d; ++i) {
        if (mask & (1u << i)) {
          p += low[i] * strides_[i];
          ++bits;
        } else {
          p += (lim[i] + 1) * strides_[i];
        }
      }
      s += (bits % 2 ? -1.0 : 1.0) * sums_[p];
    }
    return s;
  }

 private:
  std::vector<std::int64_t> ext_;
  std::vector<std::int64_t> strides_;
  std::vector<double> sums_;
};

}  // namespace uclab
