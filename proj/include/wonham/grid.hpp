#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "wonham/error.hpp"

namespace wonham {

struct StencilEntry {
  std::size_t node;
  double weight;
};

/// Uniform node grid on the box [0, L]^N covering the cone D near the
/// probability simplex. Both L/dx and 1/dx must be integers so that the
/// simplex slice {sum x = 1} contains grid nodes.
class SpatialGrid {
 public:
  SpatialGrid() = default;

  SpatialGrid(std::size_t dim, double length, double dx) : dim_(dim), length_(length), dx_(dx) {
    if (dim < 1) throw Error(ErrorKind::invalid_argument, "grid dimension must be positive");
    if (!(dx > 0.0)) throw Error(ErrorKind::invalid_argument, "grid spacing must be positive");
    if (!(length >= 1.0)) throw Error(ErrorKind::invalid_argument, "box length L must be >= 1");
    const double cells = length / dx;
    const double unit = 1.0 / dx;
    if (std::abs(cells - std::round(cells)) > 1e-9 * cells ||
        std::abs(unit - std::round(unit)) > 1e-9 * unit)
      throw Error(ErrorKind::invalid_argument, "L / dx and 1 / dx must be integers");
    per_axis_ = static_cast<std::size_t>(std::round(cells)) + 1;
    unit_ = static_cast<std::size_t>(std::round(unit));
    if (per_axis_ < 3) throw Error(ErrorKind::invalid_argument, "grid needs at least 3 nodes per axis");
    size_ = 1;
    stride_.assign(dim, 1);
    for (std::size_t i = dim; i-- > 0;) {
      stride_[i] = size_;
      size_ *= per_axis_;
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  double length() const noexcept { return length_; }
  double dx() const noexcept { return dx_; }
  std::size_t per_axis() const noexcept { return per_axis_; }
  std::size_t size() const noexcept { return size_; }
  /// Number of cells per unit length (1/dx).
  std::size_t unit_cells() const noexcept { return unit_; }
  std::size_t stride(std::size_t axis) const noexcept { return stride_[axis]; }

  std::size_t axis_index(std::size_t node, std::size_t axis) const noexcept {
    return (node / stride_[axis]) % per_axis_;
  }

  void coords(std::size_t node, std::span<double> out) const noexcept {
    for (std::size_t i = 0; i < dim_; ++i)
      out[i] = static_cast<double>(axis_index(node, i)) * dx_;
  }
  std::vector<double> coords(std::size_t node) const {
    std::vector<double> x(dim_);
    coords(node, x);
    return x;
  }

  std::size_t index(std::span<const std::size_t> multi) const noexcept {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < dim_; ++i) idx += multi[i] * stride_[i];
    return idx;
  }

  /// Node coordinates sum to exactly 1.
  bool on_simplex(std::size_t node) const noexcept {
    std::size_t s = 0;
    for (std::size_t i = 0; i < dim_; ++i) s += axis_index(node, i);
    return s == unit_;
  }

  std::size_t integer_mass(std::size_t node) const noexcept {
    std::size_t s = 0;
    for (std::size_t i = 0; i < dim_; ++i) s += axis_index(node, i);
    return s;
  }

  /// Interpolation weights for the value at y. Inside the box the rule is
  /// multilinear. Beyond the outer faces v is extended by degree-1
  /// homogeneity: v(y) = (max y / (L - dx)) v(y (L - dx) / max y).
  void stencil(std::span<const double> y, double weight, std::vector<StencilEntry>& out) const {
    double z[16];
    double frac[16];
    std::size_t base[16];
    if (dim_ > 16) throw Error(ErrorKind::invalid_argument, "grid dimension above 16");
    double top = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      double v = y[i];
      if (v < 0.0) {
        if (v < -1e-12 * length_)
          throw Error(ErrorKind::out_of_bounds_stencil, "stencil point leaves the cone D");
        v = 0.0;
      }
      z[i] = v;
      top = std::max(top, v);
    }
    if (top > length_ * (1.0 + 1e-12)) {
      const double c = (length_ - dx_) / top;
      for (std::size_t i = 0; i < dim_; ++i) z[i] *= c;
      weight /= c;
    }
    for (std::size_t i = 0; i < dim_; ++i) {
      const double u = std::min(z[i], length_) / dx_;
      std::size_t b = static_cast<std::size_t>(std::floor(u));
      b = std::min(b, per_axis_ - 2);
      base[i] = b;
      frac[i] = std::clamp(u - static_cast<double>(b), 0.0, 1.0);
    }
    const std::size_t corners = std::size_t{1} << dim_;
    for (std::size_t c = 0; c < corners; ++c) {
      double w = weight;
      std::size_t idx = 0;
      for (std::size_t i = 0; i < dim_; ++i) {
        const bool up = (c >> i) & 1U;
        w *= up ? frac[i] : 1.0 - frac[i];
        idx += (base[i] + (up ? 1 : 0)) * stride_[i];
      }
      if (w != 0.0) out.push_back({idx, w});
    }
  }

  double interpolate(std::span<const double> values, std::span<const double> y) const {
    std::vector<StencilEntry> st;
    st.reserve(std::size_t{1} << dim_);
    stencil(y, 1.0, st);
    double v = 0.0;
    for (const auto& e : st) v += e.weight * values[e.node];
    return v;
  }

  /// Simplex node nearest to x / |x|_1 (largest-remainder rounding of
  /// pi / dx). The origin is returned for x = 0.
  std::size_t nearest_simplex_node(std::span<const double> x) const {
    double mass = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) mass += std::max(0.0, x[i]);
    std::vector<std::size_t> multi(dim_, 0);
    if (!(mass > 0.0)) return 0;
    std::vector<double> rem(dim_);
    std::size_t used = 0;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double target = std::max(0.0, x[i]) / mass * static_cast<double>(unit_);
      multi[i] = static_cast<std::size_t>(std::floor(target));
      rem[i] = target - static_cast<double>(multi[i]);
      used += multi[i];
    }
    std::vector<std::size_t> order(dim_);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t r = 0; used < unit_ && r < dim_; ++r, ++used) ++multi[order[r]];
    return index(multi);
  }

  friend bool operator==(const SpatialGrid& a, const SpatialGrid& b) {
    return a.dim_ == b.dim_ && a.length_ == b.length_ && a.dx_ == b.dx_;
  }

 private:
  std::size_t dim_ = 0;
  double length_ = 0.0;
  double dx_ = 0.0;
  std::size_t per_axis_ = 0;
  std::size_t unit_ = 0;
  std::size_t size_ = 0;
  std::vector<std::size_t> stride_;
};

}  // namespace wonham
