#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "chronoscope/error.hpp"

namespace chronoscope {

using cplx = std::complex<double>;
inline constexpr double kPi = std::numbers::pi;

// Uniform frequency axis, w_n = center + (n - N/2) * spacing.
class FrequencyGrid {
 public:
  FrequencyGrid(std::size_t count, double center, double spacing)
      : count_(count), center_(center), spacing_(spacing) {
    if (count < 4 || count % 2 != 0) {
      throw InvalidArgument("grid count must be even and >= 4, got " + std::to_string(count));
    }
    if (!(spacing > 0.0) || !std::isfinite(spacing) || !std::isfinite(center)) {
      throw InvalidArgument("grid spacing must be positive and finite");
    }
  }

  std::size_t size() const { return count_; }
  double center() const { return center_; }
  double spacing() const { return spacing_; }
  double span() const { return static_cast<double>(count_) * spacing_; }

  double point(std::size_t n) const {
    return center_ + (static_cast<double>(n) - static_cast<double>(count_ / 2)) * spacing_;
  }
  double operator[](std::size_t n) const { return point(n); }
  double front() const { return point(0); }
  double back() const { return point(count_ - 1); }

  std::vector<double> points() const {
    std::vector<double> out(count_);
    for (std::size_t n = 0; n < count_; ++n) out[n] = point(n);
    return out;
  }

  // Dual time grid of the DFT: t_k = (k - N/2) * 2pi / (N dw).
  double time_spacing() const { return 2.0 * kPi / span(); }
  double time_point(std::size_t k) const {
    return (static_cast<double>(k) - static_cast<double>(count_ / 2)) * time_spacing();
  }
  double max_time() const { return kPi / spacing_; }

  // Inside the cell-extended range [front - dw/2, back + dw/2].
  bool contains(double w) const {
    return w >= front() - 0.5 * spacing_ && w <= back() + 0.5 * spacing_;
  }

  std::size_t nearest_index(double w) const {
    double x = std::round((w - center_) / spacing_) + static_cast<double>(count_ / 2);
    if (x < 0.0) return 0;
    if (x > static_cast<double>(count_ - 1)) return count_ - 1;
    return static_cast<std::size_t>(x);
  }

  bool operator==(const FrequencyGrid&) const = default;

 private:
  std::size_t count_;
  double center_;
  double spacing_;
};

inline FrequencyGrid make_grid(std::size_t count, double center, double span) {
  if (!(span > 0.0) || !std::isfinite(span)) throw InvalidArgument("grid span must be positive");
  if (count < 4 || count % 2 != 0) {
    throw InvalidArgument("grid count must be even and >= 4, got " + std::to_string(count));
  }
  return FrequencyGrid(count, center, span / static_cast<double>(count));
}

// Uniform axis for phase-space maps (time-like or frequency-like).
class Axis {
 public:
  Axis() = default;
  Axis(double start, double step, std::size_t count) : start_(start), step_(step), count_(count) {
    if (count == 0) throw InvalidArgument("axis needs at least one point");
    if (count > 1 && !(step > 0.0)) throw InvalidArgument("axis step must be positive");
  }

  static Axis linspace(double min, double max, std::size_t count) {
    if (count < 2) return Axis(min, 1.0, 1);
    if (!(max > min)) throw InvalidArgument("axis max must exceed min");
    return Axis(min, (max - min) / static_cast<double>(count - 1), count);
  }
  static Axis frequencies(const FrequencyGrid& g) { return Axis(g.front(), g.spacing(), g.size()); }
  static Axis times(const FrequencyGrid& g) { return Axis(g.time_point(0), g.time_spacing(), g.size()); }

  std::size_t size() const { return count_; }
  double step() const { return step_; }
  double start() const { return start_; }
  double operator[](std::size_t i) const { return start_ + static_cast<double>(i) * step_; }
  double front() const { return start_; }
  double back() const { return (*this)[count_ - 1]; }
  double max_abs() const { return std::max(std::abs(front()), std::abs(back())); }

  std::vector<double> values() const {
    std::vector<double> out(count_);
    for (std::size_t i = 0; i < count_; ++i) out[i] = (*this)[i];
    return out;
  }

  bool approx_equal(const Axis& o, double rel = 1e-12) const {
    double scale = std::max({std::abs(step_), std::abs(start_), 1.0});
    return count_ == o.count_ && std::abs(start_ - o.start_) <= rel * scale &&
           std::abs(step_ - o.step_) <= rel * scale;
  }

  // Index of the point nearest to x (clamped).
  std::size_t nearest_index(double x) const {
    if (count_ == 1) return 0;
    double k = std::round((x - start_) / step_);
    if (k < 0.0) return 0;
    if (k > static_cast<double>(count_ - 1)) return count_ - 1;
    return static_cast<std::size_t>(k);
  }

 private:
  double start_ = 0.0;
  double step_ = 1.0;
  std::size_t count_ = 1;
};

}  // namespace chronoscope
