#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chronoscope/core.hpp"
#include "chronoscope/interferometer.hpp"
#include "chronoscope/parallel.hpp"
#include "chronoscope/phase_space.hpp"

namespace chronoscope {

struct AmbiguityFlags {
  bool global_phase = true;
  bool conjugate_time_reversal = false;
};

struct RetrievalResult {
  PureState estimate;
  std::vector<double> fidelity_history;  // 1 - || |X_k| - sqrt(S) || / || sqrt(S) ||
  AmbiguityFlags ambiguity;
  int iterations = 0;
  bool converged = false;
  double self_consistency_error = 0.0;  // || |X|^2 - S || / || S ||
  std::uint64_t seed = 0;
};

struct PhaseRetrievalOptions {
  int restarts = 5;
  double tol = 1e-10;  // stop once the magnitude inconsistency drops below this
};

namespace detail {

// STFT on the dual time grid, one FFT per window position: X(:, m) = dw E (phi_m .* psi).
class DualGridStft {
 public:
  DualGridStft(const FrequencyGrid& g, const Eigen::MatrixXd& phi) : g_(g), phi_(phi) {
    const std::size_t n = g.size();
    fwd_phase_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      fwd_phase_[k] = g.spacing() * parity(k + n / 2) * std::polar(1.0, g.center() * g.time_point(k));
    }
    coverage_ = phi_.rowwise().squaredNorm();
  }

  Eigen::MatrixXcd forward(const std::vector<cplx>& psi) const {
    const std::size_t n = g_.size();
    Eigen::MatrixXcd x(static_cast<Eigen::Index>(n), phi_.cols());
    std::vector<cplx> a(n);
    for (Eigen::Index m = 0; m < phi_.cols(); ++m) {
      for (std::size_t q = 0; q < n; ++q) a[q] = phi_(static_cast<Eigen::Index>(q), m) * psi[q] * parity(q);
      auto b = fft::backward(a);
      for (std::size_t k = 0; k < n; ++k) x(static_cast<Eigen::Index>(k), m) = fwd_phase_[k] * b[k];
    }
    return x;
  }

  // Least-squares signal for a given (inconsistent) STFT.
  std::vector<cplx> inverse(const Eigen::MatrixXcd& y) const {
    const std::size_t n = g_.size();
    const double inv_scale = 1.0 / (static_cast<double>(n) * g_.spacing() * g_.spacing());
    std::vector<cplx> acc(n, cplx{});
    std::vector<cplx> a(n);
    for (Eigen::Index m = 0; m < phi_.cols(); ++m) {
      for (std::size_t k = 0; k < n; ++k) a[k] = std::conj(fwd_phase_[k]) * y(static_cast<Eigen::Index>(k), m);
      auto b = fft::forward(a);
      for (std::size_t q = 0; q < n; ++q) acc[q] += phi_(static_cast<Eigen::Index>(q), m) * b[q] * parity(q);
    }
    const double cmax = coverage_.maxCoeff();
    for (std::size_t q = 0; q < n; ++q) {
      const double c = coverage_(static_cast<Eigen::Index>(q));
      acc[q] = c > 1e-12 * cmax ? acc[q] * inv_scale / c : cplx{};
    }
    return acc;
  }

 private:
  FrequencyGrid g_;
  Eigen::MatrixXd phi_;
  std::vector<cplx> fwd_phase_;
  Eigen::VectorXd coverage_;
};

inline double interpolate(const Axis& axis, const std::vector<double>& v, double x) {
  if (axis.size() == 1) return v.front();
  const double pos = (x - axis.front()) / axis.step();
  if (pos <= 0.0) return v.front();
  if (pos >= static_cast<double>(v.size() - 1)) return v.back();
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double f = pos - static_cast<double>(i);
  return (1.0 - f) * v[i] + f * v[i + 1];
}

inline std::vector<cplx> phase_aligned(std::vector<cplx> s) {
  std::size_t best = 0;
  for (std::size_t n = 1; n < s.size(); ++n) {
    if (std::abs(s[n]) > std::abs(s[best])) best = n;
  }
  if (std::abs(s[best]) > 0.0) {
    const cplx rot = std::conj(s[best]) / std::abs(s[best]);
    for (auto& v : s) v *= rot;
  }
  return s;
}

// S(t_k) against S(t_{N-k}); the dual grid is symmetric apart from k = 0.
inline bool tau_symmetric(const Eigen::MatrixXd& s, double rel = 1e-6) {
  const Eigen::Index n = s.rows();
  double diff = 0.0;
  for (Eigen::Index k = 1; k < n; ++k) diff = std::max(diff, (s.row(k) - s.row(n - k)).cwiseAbs().maxCoeff());
  return diff <= rel * s.cwiseAbs().maxCoeff();
}

}  // namespace detail

// Alternating projections between the measured STFT magnitude and consistent STFTs, restarted
// from several random phases; the most self-consistent run wins (ties go to the lower seed).
inline RetrievalResult phase_retrieve(const PhaseSpaceMap& spec, const Window& window, std::uint64_t init_seed,
                                      int max_iter, const PhaseRetrievalOptions& opt = {}) {
  if (spec.kind != MapKind::Spectrogram) throw InvalidArgument("phase_retrieve needs a spectrogram map");
  if (max_iter < 1 || opt.restarts < 1) throw InvalidArgument("max_iter and restarts must be positive");
  const auto& g = window.grid();
  if (!spec.time_axis.approx_equal(Axis::times(g))) {
    throw InvalidArgument("spectrogram tau axis must be the dual time grid of the window grid (" +
                          std::to_string(g.size()) + " points, step " + std::to_string(g.time_spacing()) + ")");
  }
  const auto& mu = spec.freq_axis;
  const auto n = static_cast<Eigen::Index>(g.size());
  const auto nm = static_cast<Eigen::Index>(mu.size());
  Eigen::MatrixXd phi(n, nm);
  for (Eigen::Index q = 0; q < n; ++q) {
    for (Eigen::Index m = 0; m < nm; ++m) {
      phi(q, m) = window(g.point(static_cast<std::size_t>(q)) - mu[static_cast<std::size_t>(m)]).real();
    }
  }
  if (!window.even_real()) {
    for (Eigen::Index q = 0; q < n; ++q) {
      for (Eigen::Index m = 0; m < nm; ++m) {
        if (std::abs(window(g.point(static_cast<std::size_t>(q)) - mu[static_cast<std::size_t>(m)]).imag()) > 1e-12) {
          throw InvalidArgument("phase_retrieve supports real windows only");
        }
      }
    }
  }
  if (mu.size() > 1 && std::isfinite(window.half_support()) && mu.step() > window.half_support()) {
    throw PreconditionError("window hop " + std::to_string(mu.step()) + " exceeds half the window support; the STFT is not redundant enough");
  }
  detail::DualGridStft op(g, phi);
  const Eigen::MatrixXd s = spec.values.cwiseMax(0.0);
  const Eigen::MatrixXd amp = s.cwiseSqrt();
  const double amp_norm = amp.norm();
  const double s_norm = s.norm();
  if (!(amp_norm > 0.0)) throw InvalidArgument("spectrogram is identically zero");

  std::vector<double> marg(mu.size());
  for (std::size_t m = 0; m < mu.size(); ++m) marg[m] = std::max(0.0, s.col(static_cast<Eigen::Index>(m)).sum());

  struct Run {
    std::vector<cplx> psi;
    std::vector<double> history;
    int iterations;
    double error;
    bool converged;
  };
  std::vector<Run> runs(static_cast<std::size_t>(opt.restarts));
  parallel_for(runs.size(), [&](std::size_t r) {
    std::mt19937_64 rng(init_seed + r);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
    std::vector<cplx> psi(g.size());
    for (std::size_t q = 0; q < g.size(); ++q) {
      psi[q] = std::sqrt(detail::interpolate(mu, marg, g.point(q))) * std::polar(1.0, angle(rng));
    }
    Run run{{}, {}, 0, 0.0, false};
    Eigen::MatrixXcd x = op.forward(psi);
    for (int it = 0; it < max_iter; ++it) {
      const double mismatch = (x.cwiseAbs() - amp).norm() / amp_norm;
      run.history.push_back(1.0 - mismatch);
      run.iterations = it + 1;
      if (mismatch < opt.tol) {
        run.converged = true;
        break;
      }
      Eigen::MatrixXcd y(x.rows(), x.cols());
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double a = std::abs(x.data()[k]);
        y.data()[k] = a > 0.0 ? x.data()[k] * (amp.data()[k] / a) : cplx(amp.data()[k]);
      }
      psi = op.inverse(y);
      x = op.forward(psi);
    }
    run.error = (x.cwiseAbs2() - s).norm() / s_norm;
    run.psi = std::move(psi);
    runs[r] = std::move(run);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].error < runs[best].error) best = r;
  }
  auto& win = runs[best];
  RetrievalResult out{PureState::from_samples(g, detail::phase_aligned(win.psi)), win.history, {}, win.iterations,
                      win.converged, win.error, init_seed + best};
  out.ambiguity.conjugate_time_reversal = detail::tau_symmetric(s);
  return out;
}

// Fidelity after removing the declared ambiguities (global phase always, conjugation when flagged).
inline double aligned_fidelity(const PureState& truth, const RetrievalResult& r) {
  double f = fidelity(truth, r.estimate);
  if (r.ambiguity.conjugate_time_reversal) f = std::max(f, fidelity(truth, r.estimate.conjugated()));
  return f;
}

// (1 - 2I) / pi: the CW of the normalized psi U_- for a separable kernel, and the
// combined cross-Wigner sum that the general inversion starts from.
inline PhaseSpaceMap separable_intermediate(const PhaseSpaceMap& coinc) {
  if (coinc.kind != MapKind::CoincidenceMap) throw InvalidArgument("expected a coincidence map");
  PhaseSpaceMap cw{MapKind::CW, coinc.time_axis, coinc.freq_axis, (1.0 - 2.0 * coinc.values.array()).matrix() / kPi,
                   nlohmann::json::object()};
  cw.metadata["source"] = "coincidence";
  return cw;
}

// Separable gate: the map gives the CW of the normalized psi U_-, then Eq.-11 style
// reconstruction and division by U_-. beta only rescales and is removed by normalization.
inline PureState recover_separable(const PhaseSpaceMap& coinc, const SpectralFunction& u_minus, double beta,
                                   std::optional<double> anchor = std::nullopt) {
  if (coinc.kind != MapKind::CoincidenceMap) throw InvalidArgument("recover_separable needs a coincidence map");
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
  const PureState chi = reconstruct_from_wigner(separable_intermediate(coinc), anchor);
  const auto& g = chi.grid();
  // |U_minus| is probed across each cell so a zero between samples is not divided through.
  constexpr int kProbes = 8;
  std::vector<cplx> u(g.size());
  std::vector<double> ucell(g.size());
  double umax = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    u[n] = u_minus(g.point(n));
    ucell[n] = std::abs(u[n]);
    for (int k = -kProbes; k <= kProbes; ++k) {
      const double a = std::abs(u_minus(g.point(n) + 0.5 * g.spacing() * k / kProbes));
      ucell[n] = std::min(ucell[n], a);
      umax = std::max(umax, a);
    }
  }
  if (!(umax > 0.0)) throw PreconditionError("U_minus vanishes on the reconstruction grid");
  const double floor = 1e-3 * umax;
  double cmax = 0.0;
  for (const auto& v : chi.amplitudes()) cmax = std::max(cmax, std::norm(v));
  std::size_t first = g.size();
  std::size_t last = 0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    if (std::norm(chi.amplitudes()[n]) > 1e-10 * cmax) {
      first = std::min(first, n);
      last = std::max(last, n);
    }
  }
  std::vector<cplx> psi(g.size(), cplx{});
  std::optional<std::pair<double, double>> bad;
  for (std::size_t n = 0; n < g.size(); ++n) {
    if (ucell[n] >= floor) {
      psi[n] = chi.amplitudes()[n] / u[n];
    } else if (n >= first && n <= last) {
      if (!bad) bad = std::make_pair(g.point(n), g.point(n));
      bad->second = g.point(n);
    }
  }
  if (bad) {
    throw PreconditionError("U_minus is below the division floor on [" + std::to_string(bad->first) + ", " +
                            std::to_string(bad->second) + "] inside the state's support");
  }
  return PureState::from_samples(g, std::move(psi));
}

struct CorrelationEstimate {
  FrequencyGrid grid;
  Eigen::MatrixXcd rho;    // rho(x_n, x_m) = psi(x_n) conj(psi(x_m)) for pure states, unit trace
  Eigen::MatrixXi mask;    // 1 where recovered, 0 where masked or outside the map
  double masked_fraction;  // inside the region the map can address
  PhaseSpaceMap combined;  // sum_jk p_j p_k beta_jk Wbar_{gj gk} up to a constant, before the tau inversion
};

// General kernel: sum_jk p_j p_k beta_jk Wbar_{gj gk}(tau, mu) = int dv exp(2ivtau) K(mu - v, mu + v) C(mu, v)
// with known K(x, y) = sum_jk p_j p_k beta_jk p2_j(x) conj(p2_k(y)); invert along tau, divide by K.
inline CorrelationEstimate recover_correlation_general(const PhaseSpaceMap& coinc, const GateKernel& kernel,
                                                       const PureState& reference, double floor_rel = 1e-3) {
  if (coinc.kind != MapKind::CoincidenceMap) throw InvalidArgument("recover_correlation_general needs a coincidence map");
  const auto& d = kernel.decomposition();
  const auto& gp = *kernel.grid_plus();
  const auto& ta = coinc.time_axis;
  const auto& fa = coinc.freq_axis;
  PhaseSpaceMap combined = separable_intermediate(coinc);
  if (ta.size() < 8) throw PreconditionError("too few tau samples (" + std::to_string(ta.size()) + ") to invert along tau");
  if (fa.size() < 4) throw PreconditionError("too few mu samples to build a correlation matrix");
  const std::size_t nj = d.weights.size();
  Eigen::MatrixXcd beta(static_cast<Eigen::Index>(nj), static_cast<Eigen::Index>(nj));
  for (std::size_t j = 0; j < nj; ++j) {
    for (std::size_t k = 0; k < nj; ++k) {
      cplx acc{};
      for (std::size_t n = 0; n < gp.size(); ++n) {
        acc += std::norm(reference(gp.point(n))) * d.first[j].samples()[n] * std::conj(d.first[k].samples()[n]);
      }
      beta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = acc * gp.spacing();
    }
  }
  auto kxy = [&](double x, double y) {
    cplx acc{};
    for (std::size_t j = 0; j < nj; ++j) {
      const cplx a = d.weights[j] * d.second[j](x);
      for (std::size_t k = 0; k < nj; ++k) {
        acc += a * d.weights[k] * beta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * std::conj(d.second[k](y));
      }
    }
    return acc;
  };

  std::size_t count = fa.size() - (fa.size() % 2);
  const double delta = fa.step();
  const auto jc = static_cast<std::ptrdiff_t>(fa.size() / 2);
  const auto nc = static_cast<std::ptrdiff_t>(count / 2);
  const FrequencyGrid out_grid(count, fa[static_cast<std::size_t>(jc)], 2.0 * delta);
  const double lag_limit = 0.5 * kPi / ta.step();
  const auto n = static_cast<Eigen::Index>(count);
  Eigen::MatrixXcd q = Eigen::MatrixXcd::Zero(n, n);
  Eigen::MatrixXcd kv = Eigen::MatrixXcd::Zero(n, n);
  Eigen::MatrixXi in_roi = Eigen::MatrixXi::Zero(n, n);
  parallel_for(count, [&](std::size_t a) {
    for (std::size_t b = 0; b < count; ++b) {
      const std::ptrdiff_t j = jc + (static_cast<std::ptrdiff_t>(a) - nc) + (static_cast<std::ptrdiff_t>(b) - nc);
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(fa.size())) continue;
      const double v = (static_cast<double>(b) - static_cast<double>(a)) * delta;
      const auto ia = static_cast<Eigen::Index>(a);
      const auto ib = static_cast<Eigen::Index>(b);
      in_roi(ia, ib) = 1;
      if (std::abs(v) >= lag_limit) continue;
      cplx acc{};
      for (std::size_t i = 0; i < ta.size(); ++i) {
        acc += combined.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * std::polar(1.0, -2.0 * v * ta[i]);
      }
      q(ia, ib) = acc * ta.step();
      kv(ia, ib) = kxy(out_grid.point(a), out_grid.point(b));
    }
  });
  double kmax = 0.0;
  for (Eigen::Index k = 0; k < kv.size(); ++k) kmax = std::max(kmax, std::abs(kv.data()[k]));
  if (!(kmax > 0.0)) throw PreconditionError("kernel product vanishes on the addressed region");
  CorrelationEstimate est{out_grid, Eigen::MatrixXcd::Zero(n, n), Eigen::MatrixXi::Zero(n, n), 0.0, std::move(combined)};
  std::size_t roi = 0;
  std::size_t masked = 0;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      if (!in_roi(a, b)) continue;
      ++roi;
      if (std::abs(kv(a, b)) < floor_rel * kmax) {
        ++masked;
        continue;
      }
      est.rho(a, b) = q(a, b) / kv(a, b);
      est.mask(a, b) = 1;
    }
  }
  est.masked_fraction = static_cast<double>(masked) / static_cast<double>(roi);
  if (est.masked_fraction > 0.5) {
    throw PreconditionError("division floor masks " + std::to_string(100.0 * est.masked_fraction) +
                            "% of the addressed region");
  }
  est.rho = (0.5 * (est.rho + est.rho.adjoint())).eval();
  const double tr = est.rho.diagonal().real().sum() * out_grid.spacing();
  if (!(tr > 0.0)) throw PreconditionError("recovered correlation has non-positive trace");
  est.rho /= tr;
  return est;
}

// Dominant-term Cx extraction: PW_{C2_j} = (1 - 2 I) / (p_j alpha_j).
inline PhaseSpaceMap extract_cpw_from_cx(const PhaseSpaceMap& coinc, const std::vector<double>& p,
                                         const std::vector<double>& alpha, std::size_t term = 0) {
  if (coinc.kind != MapKind::CoincidenceMap) throw InvalidArgument("extract_cpw_from_cx needs a coincidence map");
  if (p.size() != alpha.size() || term >= p.size()) throw InvalidArgument("p and alpha must list the requested term");
  const double pa = p[term] * alpha[term];
  if (!(std::abs(pa) > 1e-12)) throw PreconditionError("p_j alpha_j = " + std::to_string(pa) + " is below the extraction floor");
  PhaseSpaceMap out{MapKind::CPW, coinc.time_axis, coinc.freq_axis, (1.0 - 2.0 * coinc.values.array()).matrix() / pa,
                    nlohmann::json::object()};
  double rest = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k != term) rest += std::abs(p[k] * alpha[k]);
  }
  out.metadata["term"] = term;
  out.metadata["other_terms_weight"] = rest / std::abs(pa);
  return out;
}

}  // namespace chronoscope
