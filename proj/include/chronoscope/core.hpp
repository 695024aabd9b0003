#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "chronoscope/error.hpp"
#include "chronoscope/fft.hpp"
#include "chronoscope/grid.hpp"

namespace chronoscope {

using SpectralFunction = std::function<cplx(double)>;

namespace detail {

inline double parity(std::size_t k) { return (k % 2 == 0) ? 1.0 : -1.0; }

// psi~(t_k) = dw/sqrt(2 pi) sum_n psi_n exp(-i w_n t_k) on the dual grid.
inline std::vector<cplx> grid_to_time(const FrequencyGrid& g, std::span<const cplx> s) {
  const std::size_t n = g.size();
  std::vector<cplx> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = s[i] * parity(i);
  auto spec = fft::forward(a);
  const double scale = g.spacing() / std::sqrt(2.0 * kPi);
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = g.time_point(k);
    out[k] = scale * parity(k + n / 2) * std::polar(1.0, -g.center() * t) * spec[k];
  }
  return out;
}

// Inverse of grid_to_time: psi_n = dt/sqrt(2 pi) sum_k psi~_k exp(+i w_n t_k).
inline std::vector<cplx> time_to_grid(const FrequencyGrid& g, std::span<const cplx> ts) {
  const std::size_t n = g.size();
  std::vector<cplx> b(n);
  for (std::size_t k = 0; k < n; ++k) b[k] = ts[k] * std::polar(1.0, g.center() * g.time_point(k)) * parity(k);
  auto back = fft::backward(b);
  const double scale = g.time_spacing() / std::sqrt(2.0 * kPi);
  std::vector<cplx> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = scale * parity(i + n / 2) * back[i];
  return out;
}

// Trigonometric interpolant of grid samples (the one implied by the grid DFT),
// tabulated on a 16x finer lattice and read back with 6-point Lagrange.
class BandLimitedInterpolant {
 public:
  static constexpr std::size_t kRefine = 16;

  BandLimitedInterpolant(const FrequencyGrid& g, std::span<const cplx> samples)
      : origin_(g.front()), step_(g.spacing() / kRefine), lo_(g.front() - 0.5 * g.spacing()),
        hi_(g.back() + 0.5 * g.spacing()) {
    const std::size_t n = g.size();
    const std::size_t m = n * kRefine;
    auto ts = grid_to_time(g, samples);
    std::vector<cplx> a(m, cplx{});
    for (std::size_t k = 0; k < n; ++k) {
      const double sign = parity(k + n / 2);
      const cplx v = ts[k] * std::polar(1.0, g.center() * g.time_point(k)) * sign;
      const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(n / 2);
      a[static_cast<std::size_t>(idx < 0 ? idx + static_cast<std::ptrdiff_t>(m) : idx)] = v;
    }
    table_ = fft::backward(a);
    const double scale = g.time_spacing() / std::sqrt(2.0 * kPi);
    for (auto& v : table_) v *= scale;
    // Exact samples at the grid nodes.
    for (std::size_t i = 0; i < n; ++i) table_[i * kRefine] = samples[i];
  }

  cplx operator()(double w) const {
    if (w < lo_ || w > hi_) return {};
    const double x = (w - origin_) / step_;
    const double fl = std::floor(x);
    const double u = x - fl;
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(table_.size());
    const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(fl);
    auto at = [&](std::ptrdiff_t j) { return table_[static_cast<std::size_t>(((j % m) + m) % m)]; };
    if (u == 0.0) return at(i);
    cplx acc{};
    for (int j = -2; j <= 3; ++j) {
      double wgt = 1.0;
      for (int q = -2; q <= 3; ++q) {
        if (q != j) wgt *= (u - q) / static_cast<double>(j - q);
      }
      acc += wgt * at(i + j);
    }
    return acc;
  }

 private:
  double origin_, step_, lo_, hi_;
  std::vector<cplx> table_;
};

inline double mass_outside(const FrequencyGrid& g, const SpectralFunction& f) {
  const double dw = g.spacing();
  const double lo = g.front() - 0.5 * dw;
  const double hi = g.back() + 0.5 * dw;
  const std::size_t pad = 2 * g.size();
  double inside = 0.0;
  double outside = 0.0;
  for (std::size_t k = 0; k < g.size() + 2 * pad; ++k) {
    const double w = g.front() + (static_cast<double>(k) - static_cast<double>(pad)) * dw;
    const double p = std::norm(f(w));
    if (w < lo || w > hi) outside += p; else inside += p;
  }
  return inside + outside > 0.0 ? outside / (inside + outside) : 0.0;
}

}  // namespace detail

// Complex spectral function on a grid, not normalized. Off-grid values come from
// the analytic evaluator when present, else from band-limited interpolation.
class Spectrum {
 public:
  static Spectrum from_function(const FrequencyGrid& g, SpectralFunction f) {
    std::vector<cplx> s(g.size());
    for (std::size_t n = 0; n < g.size(); ++n) s[n] = f(g.point(n));
    return Spectrum(g, std::move(s), std::move(f));
  }

  static Spectrum from_samples(const FrequencyGrid& g, std::vector<cplx> s) {
    if (s.size() != g.size()) {
      throw InvalidArgument("sample count " + std::to_string(s.size()) + " does not match grid count " +
                            std::to_string(g.size()));
    }
    return Spectrum(g, std::move(s), nullptr);
  }

  const FrequencyGrid& grid() const { return grid_; }
  const std::vector<cplx>& samples() const { return samples_; }
  bool has_analytic() const { return static_cast<bool>(analytic_); }

  cplx operator()(double w) const { return analytic_ ? analytic_(w) : (*interp_)(w); }

  // Callable snapshot usable after this object is gone.
  SpectralFunction evaluator() const {
    if (analytic_) return analytic_;
    auto interp = interp_;
    return [interp](double w) { return (*interp)(w); };
  }

  double norm_squared() const {
    double acc = 0.0;
    for (const auto& v : samples_) acc += std::norm(v);
    return acc * grid_.spacing();
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& v : samples_) m = std::max(m, std::abs(v));
    return m;
  }

  Spectrum scaled(cplx a) const {
    std::vector<cplx> s = samples_;
    for (auto& v : s) v *= a;
    if (analytic_) {
      auto f = analytic_;
      return Spectrum(grid_, std::move(s), [f, a](double w) { return a * f(w); });
    }
    return from_samples(grid_, std::move(s));
  }

 private:
  Spectrum(const FrequencyGrid& g, std::vector<cplx> s, SpectralFunction f)
      : grid_(g), samples_(std::move(s)), analytic_(std::move(f)) {
    if (!analytic_) interp_ = std::make_shared<const detail::BandLimitedInterpolant>(grid_, samples_);
  }

  FrequencyGrid grid_;
  std::vector<cplx> samples_;
  SpectralFunction analytic_;
  std::shared_ptr<const detail::BandLimitedInterpolant> interp_;
};

// Normalized single-photon spectral amplitude: sum |psi_n|^2 dw = 1.
class PureState {
 public:
  static constexpr double kTruncationLimit = 1e-10;

  static PureState from_function(const FrequencyGrid& g, SpectralFunction f, bool check_truncation = true) {
    if (check_truncation) {
      const double lost = detail::mass_outside(g, f);
      if (lost > kTruncationLimit) {
        throw PreconditionError("state mass outside the grid is " + std::to_string(lost) +
                                " (limit 1e-10); widen the grid span");
      }
    }
    auto raw = Spectrum::from_function(g, f);
    const double n2 = raw.norm_squared();
    if (!(n2 > 0.0) || !std::isfinite(n2)) throw InvalidArgument("state has zero or non-finite norm");
    return PureState(raw.scaled(1.0 / std::sqrt(n2)));
  }

  static PureState from_samples(const FrequencyGrid& g, std::vector<cplx> s) {
    auto raw = Spectrum::from_samples(g, std::move(s));
    const double n2 = raw.norm_squared();
    if (!(n2 > 0.0) || !std::isfinite(n2)) throw InvalidArgument("state has zero or non-finite norm");
    return PureState(raw.scaled(1.0 / std::sqrt(n2)));
  }

  const Spectrum& spectrum() const { return spectrum_; }
  const FrequencyGrid& grid() const { return spectrum_.grid(); }
  const std::vector<cplx>& amplitudes() const { return spectrum_.samples(); }
  bool has_analytic() const { return spectrum_.has_analytic(); }
  cplx operator()(double w) const { return spectrum_(w); }
  SpectralFunction evaluator() const { return spectrum_.evaluator(); }

  // psi(w) exp(i w tau)
  PureState time_shifted(double tau) const {
    if (has_analytic()) {
      auto f = evaluator();
      return from_function(grid(), [f, tau](double w) { return f(w) * std::polar(1.0, w * tau); }, false);
    }
    std::vector<cplx> s = amplitudes();
    for (std::size_t n = 0; n < s.size(); ++n) s[n] *= std::polar(1.0, grid().point(n) * tau);
    return from_samples(grid(), std::move(s));
  }

  // psi(w - mu)
  PureState frequency_shifted(double mu) const {
    if (has_analytic()) {
      auto f = evaluator();
      return from_function(grid(), [f, mu](double w) { return f(w - mu); });
    }
    auto ts = detail::grid_to_time(grid(), amplitudes());
    for (std::size_t k = 0; k < ts.size(); ++k) ts[k] *= std::polar(1.0, -mu * grid().time_point(k));
    return from_samples(grid(), detail::time_to_grid(grid(), ts));
  }

  PureState conjugated() const {
    if (has_analytic()) {
      auto f = evaluator();
      return from_function(grid(), [f](double w) { return std::conj(f(w)); }, false);
    }
    std::vector<cplx> s = amplitudes();
    for (auto& v : s) v = std::conj(v);
    return from_samples(grid(), std::move(s));
  }

 private:
  explicit PureState(Spectrum s) : spectrum_(std::move(s)) {}
  Spectrum spectrum_;
};

// Spectral window centered on zero frequency; unnormalized.
class Window {
 public:
  static Window from_function(const FrequencyGrid& g, SpectralFunction f, bool even_real,
                              double half_support = std::numeric_limits<double>::infinity()) {
    return Window(Spectrum::from_function(g, std::move(f)), even_real, half_support);
  }
  static Window from_samples(const FrequencyGrid& g, std::vector<cplx> s, bool even_real) {
    return Window(Spectrum::from_samples(g, std::move(s)), even_real, std::numeric_limits<double>::infinity());
  }

  const Spectrum& spectrum() const { return spectrum_; }
  const FrequencyGrid& grid() const { return spectrum_.grid(); }
  cplx operator()(double w) const { return spectrum_(w); }
  SpectralFunction evaluator() const { return spectrum_.evaluator(); }
  bool even_real() const { return even_real_; }
  // |f(w)| = 0 for |w| > half_support (infinite when unbounded).
  double half_support() const { return half_support_; }

 private:
  Window(Spectrum s, bool even_real, double half_support)
      : spectrum_(std::move(s)), even_real_(even_real), half_support_(half_support) {
    if (!(spectrum_.max_abs() > 0.0)) throw InvalidArgument("window is identically zero on its grid");
    if (even_real_) {
      const auto& g = grid();
      for (std::size_t n = 0; n < g.size(); ++n) {
        const double w = g.point(n);
        const cplx a = spectrum_(w);
        const cplx b = spectrum_(-w);
        if (std::abs(a.imag()) > 1e-12 || std::abs(a - b) > 1e-12) {
          throw InvalidArgument("window flagged even-real is not even and real at w=" + std::to_string(w));
        }
      }
    }
  }

  Spectrum spectrum_;
  bool even_real_;
  double half_support_;
};

// cos^2(pi w / span) on |w| <= span/2.
inline Window hamming_window(const FrequencyGrid& g, double span) {
  if (!(span > 0.0)) throw InvalidArgument("window span must be positive");
  if (span > g.span()) throw InvalidArgument("window span exceeds the grid span");
  auto f = [span](double w) -> cplx {
    if (std::abs(w) > 0.5 * span) return 0.0;
    const double c = std::cos(kPi * w / span);
    return c * c;
  };
  return Window::from_function(g, f, true, 0.5 * span);
}

// Discretized form on N_w + 1 support points: phi[n] = sin^2(pi n / N_w).
inline std::vector<double> hamming_samples(std::size_t n_w) {
  if (n_w < 2) throw InvalidArgument("window needs at least two intervals");
  std::vector<double> out(n_w + 1);
  for (std::size_t n = 0; n <= n_w; ++n) {
    const double s = std::sin(kPi * static_cast<double>(n) / static_cast<double>(n_w));
    out[n] = s * s;
  }
  return out;
}

inline Window gaussian_window(const FrequencyGrid& g, double width) {
  if (!(width > 0.0)) throw InvalidArgument("window width must be positive");
  return Window::from_function(g, [width](double w) -> cplx { return std::exp(-0.5 * w * w / (width * width)); },
                               true);
}

// f = 1 on |w| <= span/2.
inline Window rectangular_window(const FrequencyGrid& g, double span) {
  if (!(span > 0.0)) throw InvalidArgument("window span must be positive");
  return Window::from_function(g, [span](double w) -> cplx { return std::abs(w) <= 0.5 * span ? 1.0 : 0.0; },
                               true, 0.5 * span);
}

inline PureState gaussian_state(const FrequencyGrid& g, double center, double width, double chirp = 0.0) {
  if (!(width > 0.0)) throw InvalidArgument("gaussian width must be positive");
  const double amp = std::pow(kPi * width * width, -0.25);
  return PureState::from_function(g, [=](double w) {
    const double x = w - center;
    return amp * std::exp(-0.5 * x * x / (width * width)) * std::polar(1.0, chirp * x * x);
  });
}

// Normalized Hermite function h_n(x) via the stable three-term recurrence.
inline double hermite_function(int order, double x) {
  double prev = 0.0;
  double cur = std::pow(kPi, -0.25) * std::exp(-0.5 * x * x);
  for (int k = 0; k < order; ++k) {
    const double next = std::sqrt(2.0 / (k + 1.0)) * x * cur - std::sqrt(k / (k + 1.0)) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

inline PureState hermite_gauss_state(const FrequencyGrid& g, int order, double center, double width) {
  if (order < 0) throw InvalidArgument("Hermite-Gauss order must be >= 0");
  if (!(width > 0.0)) throw InvalidArgument("Hermite-Gauss width must be positive");
  const double scale = 1.0 / std::sqrt(width);
  return PureState::from_function(
      g, [=](double w) -> cplx { return scale * hermite_function(order, (w - center) / width); });
}

inline double qudit_coefficient(int n, double kappa) {
  return std::exp(-0.5 * static_cast<double>(n) * static_cast<double>(n) * kappa * kappa);
}

// sum_{n=-d..d} c_n g(w - n spacing) with unit-norm Gaussian peaks.
inline PureState qudit_comb_state(const FrequencyGrid& g, int half_d, double spacing, double kappa,
                                  double peak_width, bool allow_overlap = false) {
  if (half_d < 0) throw InvalidArgument("half_d must be >= 0");
  if (!(spacing > 0.0) || !(peak_width > 0.0)) throw InvalidArgument("comb spacing and peak width must be positive");
  if (peak_width >= spacing / 6.0 && !allow_overlap) {
    throw OverlapWarning("comb peaks overlap: peak_width " + std::to_string(peak_width) + " >= spacing/6 = " +
                         std::to_string(spacing / 6.0));
  }
  const double amp = std::pow(kPi * peak_width * peak_width, -0.25);
  // Peaks further than 2.5 spacings contribute below exp(-110) when resolved.
  const int reach = allow_overlap ? 2 * half_d + 1 : 2;
  return PureState::from_function(g, [=](double w) -> cplx {
    const int n0 = static_cast<int>(std::lround(w / spacing));
    double acc = 0.0;
    for (int n = std::max(-half_d, n0 - reach); n <= std::min(half_d, n0 + reach); ++n) {
      const double x = (w - n * spacing) / peak_width;
      acc += qudit_coefficient(n, kappa) * std::exp(-0.5 * x * x);
    }
    return amp * acc;
  });
}

// Normalized linear combination sum_k c_k psi_k (states on one grid).
inline PureState superposition(const std::vector<cplx>& coefficients, const std::vector<PureState>& states) {
  if (coefficients.size() != states.size() || states.empty()) {
    throw InvalidArgument("superposition needs one coefficient per state");
  }
  const auto& g = states.front().grid();
  std::vector<SpectralFunction> fs;
  bool analytic = true;
  for (const auto& s : states) {
    if (!(s.grid() == g)) throw InvalidArgument("superposition states must share a grid");
    analytic = analytic && s.has_analytic();
    fs.push_back(s.evaluator());
  }
  if (analytic) {
    return PureState::from_function(g, [fs, coefficients](double w) {
      cplx acc{};
      for (std::size_t k = 0; k < fs.size(); ++k) acc += coefficients[k] * fs[k](w);
      return acc;
    });
  }
  std::vector<cplx> s(g.size(), cplx{});
  for (std::size_t k = 0; k < states.size(); ++k) {
    for (std::size_t n = 0; n < g.size(); ++n) s[n] += coefficients[k] * states[k].amplitudes()[n];
  }
  return PureState::from_samples(g, std::move(s));
}

inline cplx inner_product(const PureState& a, const PureState& b) {
  if (!(a.grid() == b.grid())) throw InvalidArgument("inner product needs a shared grid");
  cplx acc{};
  for (std::size_t n = 0; n < a.grid().size(); ++n) acc += std::conj(a.amplitudes()[n]) * b.amplitudes()[n];
  return acc * a.grid().spacing();
}

// |<reference|estimate>| with the estimate evaluated on the reference grid and renormalized there.
inline double fidelity(const PureState& reference, const PureState& estimate) {
  const auto& g = reference.grid();
  cplx acc{};
  double nb = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const cplx b = estimate(g.point(n));
    acc += std::conj(reference.amplitudes()[n]) * b;
    nb += std::norm(b);
  }
  if (!(nb > 0.0)) return 0.0;
  return std::abs(acc) * g.spacing() / std::sqrt(nb * g.spacing());
}

// Smallest grid interval holding every sample with |s|^2 above rel * max |s|^2.
inline std::pair<double, double> effective_support(const Spectrum& s, double rel = 1e-18) {
  const auto& v = s.samples();
  double peak = 0.0;
  for (const auto& x : v) peak = std::max(peak, std::norm(x));
  std::size_t lo = v.size();
  std::size_t hi = 0;
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (std::norm(v[n]) > rel * peak) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
  }
  if (lo > hi) return {s.grid().center(), s.grid().center()};
  return {s.grid().point(lo), s.grid().point(hi)};
}

struct Branch {
  double weight;
  PureState state;
};

class MixedState;
MixedState mix_states(const std::vector<double>& weights, const std::vector<PureState>& states);

// Density kernel rho(w_n, w_m) with its eigen-branches.
class MixedState {
 public:
  static constexpr double kBranchCutoff = 1e-10;

  static MixedState from_kernel(const FrequencyGrid& g, Eigen::MatrixXcd kernel) {
    validate(g, kernel);
    const double dw = g.spacing();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(kernel * dw);
    const auto& evals = es.eigenvalues();
    if (evals.minCoeff() < -1e-10) {
      throw InvalidArgument("density kernel is not positive semidefinite (eigenvalue " +
                            std::to_string(evals.minCoeff()) + ")");
    }
    std::vector<Branch> branches;
    double cumulative = 0.0;
    for (Eigen::Index k = evals.size() - 1; k >= 0 && cumulative < 1.0 - kBranchCutoff; --k) {
      if (evals(k) <= 0.0) break;
      std::vector<cplx> s(g.size());
      for (std::size_t n = 0; n < g.size(); ++n) s[n] = es.eigenvectors()(static_cast<Eigen::Index>(n), k);
      branches.push_back({evals(k), PureState::from_samples(g, std::move(s))});
      cumulative += evals(k);
    }
    return MixedState(g, std::move(kernel), std::move(branches));
  }

  static MixedState from_pure(const PureState& s) { return mix_states({1.0}, {s}); }

  const FrequencyGrid& grid() const { return grid_; }
  const Eigen::MatrixXcd& kernel() const { return kernel_; }
  const std::vector<Branch>& branches() const { return branches_; }

  double trace() const { return kernel_.diagonal().real().sum() * grid_.spacing(); }
  double purity() const { return kernel_.cwiseAbs2().sum() * grid_.spacing() * grid_.spacing(); }

 private:
  friend MixedState mix_states(const std::vector<double>&, const std::vector<PureState>&);

  MixedState(const FrequencyGrid& g, Eigen::MatrixXcd kernel, std::vector<Branch> branches)
      : grid_(g), kernel_(std::move(kernel)), branches_(std::move(branches)) {}

  static void validate(const FrequencyGrid& g, const Eigen::MatrixXcd& k) {
    const auto n = static_cast<Eigen::Index>(g.size());
    if (k.rows() != n || k.cols() != n) throw InvalidArgument("density kernel shape does not match the grid");
    const double herm = (k - k.adjoint()).cwiseAbs().maxCoeff();
    if (herm > 1e-12) throw InvalidArgument("density kernel is not Hermitian (residue " + std::to_string(herm) + ")");
    const double tr = k.diagonal().real().sum() * g.spacing();
    if (std::abs(tr - 1.0) > 1e-10) throw InvalidArgument("density kernel trace is " + std::to_string(tr) + ", not 1");
    const double pur = k.cwiseAbs2().sum() * g.spacing() * g.spacing();
    if (pur > 1.0 + 1e-10) throw InvalidArgument("density kernel purity exceeds 1");
  }

  FrequencyGrid grid_;
  Eigen::MatrixXcd kernel_;
  std::vector<Branch> branches_;
};

// Branches come from the Gram matrix of the inputs, so they keep analytic evaluators.
inline MixedState mix_states(const std::vector<double>& weights, const std::vector<PureState>& states) {
  if (weights.size() != states.size() || states.empty()) throw InvalidArgument("one weight per state required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("mixture weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("mixture weights must sum to 1");
  const auto& g = states.front().grid();
  for (const auto& s : states) {
    if (!(s.grid() == g)) throw InvalidArgument("mixture states must share one grid");
  }
  const auto n = static_cast<Eigen::Index>(g.size());
  const auto m = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXcd b(n, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double sw = std::sqrt(weights[static_cast<std::size_t>(k)]);
    for (Eigen::Index i = 0; i < n; ++i) b(i, k) = sw * states[static_cast<std::size_t>(k)].amplitudes()[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXcd kernel = b * b.adjoint();
  kernel = 0.5 * (kernel + kernel.adjoint()).eval();
  MixedState::validate(g, kernel);

  Eigen::MatrixXcd gram = b.adjoint() * b * g.spacing();
  gram = 0.5 * (gram + gram.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram);
  std::vector<Branch> branches;
  double cumulative = 0.0;
  for (Eigen::Index k = m - 1; k >= 0 && cumulative < 1.0 - MixedState::kBranchCutoff; --k) {
    const double lambda = es.eigenvalues()(k);
    if (lambda <= 0.0) break;
    std::vector<cplx> coeff(states.size());
    for (Eigen::Index j = 0; j < m; ++j) {
      coeff[static_cast<std::size_t>(j)] = std::sqrt(weights[static_cast<std::size_t>(j)]) * es.eigenvectors()(j, k);
    }
    branches.push_back({lambda, superposition(coeff, states)});
    cumulative += lambda;
  }
  return MixedState(g, std::move(kernel), std::move(branches));
}

struct TimeAmplitude {
  Axis time;
  std::vector<cplx> samples;
};

inline TimeAmplitude to_time_domain(const PureState& s) {
  return {Axis::times(s.grid()), detail::grid_to_time(s.grid(), s.amplitudes())};
}

inline PureState from_time_domain(const TimeAmplitude& ta, const FrequencyGrid& g) {
  if (ta.samples.size() != g.size() || !ta.time.approx_equal(Axis::times(g))) {
    throw InvalidArgument("time amplitude is not on the dual grid of the target frequency grid");
  }
  return PureState::from_samples(g, detail::time_to_grid(g, ta.samples));
}

// Direct quadrature of psi~(t) at an arbitrary time.
inline cplx time_amplitude_at(const PureState& s, double t) {
  const auto& g = s.grid();
  cplx acc{};
  for (std::size_t n = 0; n < g.size(); ++n) acc += s.amplitudes()[n] * std::polar(1.0, -g.point(n) * t);
  return acc * g.spacing() / std::sqrt(2.0 * kPi);
}

}  // namespace chronoscope
