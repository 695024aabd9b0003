#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chronoscope/core.hpp"
#include "chronoscope/parallel.hpp"
#include "json.hpp"

namespace chronoscope {

enum class MapKind { CW, CPW, CrossWignerReal, Spectrogram, CoincidenceMap };

inline std::string to_string(MapKind k) {
  switch (k) {
    case MapKind::CW: return "CW";
    case MapKind::CPW: return "CPW";
    case MapKind::CrossWignerReal: return "CrossWignerReal";
    case MapKind::Spectrogram: return "Spectrogram";
    case MapKind::CoincidenceMap: return "CoincidenceMap";
  }
  return "unknown";
}

inline MapKind map_kind_from_string(const std::string& s) {
  for (MapKind k : {MapKind::CW, MapKind::CPW, MapKind::CrossWignerReal, MapKind::Spectrogram,
                    MapKind::CoincidenceMap}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown map kind '" + s + "'");
}

// values(i, j): i indexes time_axis, j indexes freq_axis. A CW entry is W(w_j, t_i);
// CPW, spectrogram and coincidence entries are at (tau_i, mu_j).
struct PhaseSpaceMap {
  MapKind kind = MapKind::CW;
  Axis time_axis;
  Axis freq_axis;
  Eigen::MatrixXd values;
  nlohmann::json metadata = nlohmann::json::object();

  double operator()(std::size_t i, std::size_t j) const {
    return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  double integral() const { return values.sum() * time_axis.step() * freq_axis.step(); }
};

// Weight on the lag variable, e.g. f(-w) conj(f(w)) for a window f.
using LagWeight = std::function<cplx(double)>;

namespace detail {

// Bilinear lag integrand sum_p c_p a_p(nu - w') conj(b_p(nu + w')).
struct LagTerm {
  cplx coefficient;
  SpectralFunction a;
  SpectralFunction b;
};

struct LagLattice {
  double step;
  std::vector<double> nodes;
};

inline LagLattice lag_lattice(double step, std::size_t half_count, double limit, const LagWeight& weight) {
  LagLattice lat{step, {}};
  const auto k_max = static_cast<std::ptrdiff_t>(half_count);
  for (std::ptrdiff_t k = -k_max; k <= k_max; ++k) {
    const double w = static_cast<double>(k) * step;
    if (std::abs(w) > limit) continue;
    if (weight && weight(w) == cplx{}) continue;
    lat.nodes.push_back(w);
  }
  return lat;
}

// out(i, j) = step * sum_k weight(w'_k) * integrand(nu_j, w'_k) * exp(i * sign * 2 w'_k t_i)
inline Eigen::MatrixXcd lag_transform(const std::vector<LagTerm>& terms, const LagWeight& weight,
                                      const LagLattice& lat, const Axis& time, const Axis& freq, double sign) {
  const auto nk = static_cast<Eigen::Index>(lat.nodes.size());
  const auto nf = static_cast<Eigen::Index>(freq.size());
  const auto nt = static_cast<Eigen::Index>(time.size());
  if (nk == 0) return Eigen::MatrixXcd::Zero(nt, nf);
  std::vector<cplx> wts(lat.nodes.size(), 1.0);
  if (weight) {
    for (std::size_t k = 0; k < lat.nodes.size(); ++k) wts[k] = weight(lat.nodes[k]);
  }
  Eigen::MatrixXcd p(nk, nf);
  parallel_for(static_cast<std::size_t>(nf), [&](std::size_t j) {
    const double nu = freq[j];
    for (Eigen::Index k = 0; k < nk; ++k) {
      const double w = lat.nodes[static_cast<std::size_t>(k)];
      cplx acc{};
      for (const auto& t : terms) acc += t.coefficient * t.a(nu - w) * std::conj(t.b(nu + w));
      p(k, static_cast<Eigen::Index>(j)) = wts[static_cast<std::size_t>(k)] * acc;
    }
  });
  Eigen::MatrixXcd e(nt, nk);
  for (Eigen::Index i = 0; i < nt; ++i) {
    for (Eigen::Index k = 0; k < nk; ++k) {
      e(i, k) = std::polar(1.0, sign * 2.0 * lat.nodes[static_cast<std::size_t>(k)] * time[static_cast<std::size_t>(i)]);
    }
  }
  Eigen::MatrixXcd out = e * p;
  out *= lat.step;
  return out;
}

inline void require_time_resolution(const FrequencyGrid& g, const Axis& time, const char* what) {
  if (time.max_abs() > g.max_time() * (1.0 + 1e-9)) {
    throw PreconditionError(std::string(what) + ": time axis reaches |t| = " + std::to_string(time.max_abs()) +
                            " but the grid spacing " + std::to_string(g.spacing()) + " supports only |t| <= pi/dw = " +
                            std::to_string(g.max_time()) + "; refine the grid or narrow the time axis");
  }
}

inline std::vector<LagTerm> branch_terms(const std::vector<Branch>& branches) {
  std::vector<LagTerm> terms;
  for (const auto& b : branches) terms.push_back({b.weight, b.state.evaluator(), b.state.evaluator()});
  return terms;
}

inline std::vector<Branch> as_branches(const PureState& s) { return {{1.0, s}}; }

inline PhaseSpaceMap real_map(MapKind kind, const Axis& time, const Axis& freq, const Eigen::MatrixXcd& z,
                              double scale) {
  PhaseSpaceMap m{kind, time, freq, (z.real() * scale).eval(), nlohmann::json::object()};
  m.metadata["imag_residue"] = z.imag().cwiseAbs().maxCoeff() * std::abs(scale);
  return m;
}

inline PhaseSpaceMap wigner_of(const FrequencyGrid& g, const std::vector<Branch>& branches, const Axis& time,
                               const Axis& freq) {
  require_time_resolution(g, time, "wigner");
  // Lag nodes at dw/2 over [-span/2, span/2] cover every pair inside the grid.
  auto lat = lag_lattice(0.5 * g.spacing(), g.size(), 0.5 * g.span(), nullptr);
  auto z = lag_transform(branch_terms(branches), nullptr, lat, time, freq, +1.0);
  return real_map(MapKind::CW, time, freq, z, 1.0 / kPi);
}

inline PhaseSpaceMap pseudo_wigner_of(const FrequencyGrid& g, const std::vector<Branch>& branches,
                                      const LagWeight& weight, double half_support, const Axis& time,
                                      const Axis& freq) {
  require_time_resolution(g, time, "pseudo_wigner");
  auto lat = lag_lattice(0.5 * g.spacing(), g.size(), std::min(0.5 * g.span(), half_support), weight);
  auto z = lag_transform(branch_terms(branches), weight, lat, time, freq, -1.0);
  return real_map(MapKind::CPW, time, freq, z, 1.0);
}

inline LagWeight window_lag_weight(const Window& f) {
  auto fe = f.evaluator();
  return [fe](double w) { return fe(-w) * std::conj(fe(w)); };
}

}  // namespace detail

// W(w, t) = (1/pi) int dw' exp(2 i w' t) rho(w - w', w + w')
inline PhaseSpaceMap wigner(const PureState& s, const Axis& time, const Axis& freq) {
  return detail::wigner_of(s.grid(), detail::as_branches(s), time, freq);
}
inline PhaseSpaceMap wigner(const MixedState& s, const Axis& time, const Axis& freq) {
  return detail::wigner_of(s.grid(), s.branches(), time, freq);
}

struct Marginals {
  std::vector<double> time;
  std::vector<double> freq;
};

inline Marginals marginals(const PhaseSpaceMap& m) {
  if (m.kind != MapKind::CW) throw InvalidArgument("marginals need a CW map, got " + to_string(m.kind));
  Marginals out;
  Eigen::VectorXd tm = m.values.rowwise().sum() * m.freq_axis.step();
  Eigen::VectorXd fm = m.values.colwise().sum().transpose() * m.time_axis.step();
  out.time.assign(tm.data(), tm.data() + tm.size());
  out.freq.assign(fm.data(), fm.data() + fm.size());
  return out;
}

// PW(tau, mu) = int dw L(w) rho(mu - w, mu + w) exp(-2 i w tau), L(w) = f(-w) conj(f(w)).
inline PhaseSpaceMap pseudo_wigner(const PureState& s, const Window& f, const Axis& time, const Axis& freq) {
  return detail::pseudo_wigner_of(s.grid(), detail::as_branches(s), detail::window_lag_weight(f), f.half_support(),
                                  time, freq);
}
inline PhaseSpaceMap pseudo_wigner(const MixedState& s, const Window& f, const Axis& time, const Axis& freq) {
  return detail::pseudo_wigner_of(s.grid(), s.branches(), detail::window_lag_weight(f), f.half_support(), time, freq);
}
// Same with an explicit lag weight L(w).
inline PhaseSpaceMap pseudo_wigner(const PureState& s, const LagWeight& weight, double half_support,
                                   const Axis& time, const Axis& freq) {
  return detail::pseudo_wigner_of(s.grid(), detail::as_branches(s), weight, half_support, time, freq);
}

// Wbar(tau, mu) = int dw' exp(2 i w' tau) gj(mu - w') conj(gk(mu + w')); no 1/pi.
inline Eigen::MatrixXcd cross_wigner(const Spectrum& gj, const Spectrum& gk, const Axis& time, const Axis& freq) {
  if (!(gj.grid() == gk.grid())) throw InvalidArgument("cross_wigner inputs must share a grid");
  const auto& g = gj.grid();
  detail::require_time_resolution(g, time, "cross_wigner");
  auto lat = detail::lag_lattice(0.5 * g.spacing(), g.size(), 0.5 * g.span(), nullptr);
  return detail::lag_transform({{1.0, gj.evaluator(), gk.evaluator()}}, nullptr, lat, time, freq, +1.0);
}

// X(tau, mu) = int phi(w - mu) psi(w) exp(i w tau) dw, as a Riemann sum on the state grid.
inline Eigen::MatrixXcd stft(const PureState& s, const Window& phi, const Axis& time, const Axis& freq) {
  const auto& g = s.grid();
  if (std::isfinite(phi.half_support()) && 2.0 * phi.half_support() > g.span() * (1.0 + 1e-12)) {
    throw PreconditionError("stft: window support exceeds the state grid span");
  }
  detail::require_time_resolution(g, time, "stft");
  const auto n = static_cast<Eigen::Index>(g.size());
  const auto nt = static_cast<Eigen::Index>(time.size());
  const auto nf = static_cast<Eigen::Index>(freq.size());
  const double dw = g.spacing();
  auto fe = phi.evaluator();
  Eigen::MatrixXcd x(nt, nf);
  if (time.approx_equal(Axis::times(g))) {
    parallel_for(static_cast<std::size_t>(nf), [&](std::size_t j) {
      std::vector<cplx> a(g.size());
      for (std::size_t q = 0; q < g.size(); ++q) {
        a[q] = fe(g.point(q) - freq[j]) * s.amplitudes()[q] * detail::parity(q);
      }
      auto b = fft::backward(a);
      for (std::size_t k = 0; k < g.size(); ++k) {
        x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
            dw * detail::parity(k + g.size() / 2) * std::polar(1.0, g.center() * g.time_point(k)) * b[k];
      }
    });
    return x;
  }
  Eigen::MatrixXcd gm(n, nf);
  for (Eigen::Index j = 0; j < nf; ++j) {
    for (Eigen::Index q = 0; q < n; ++q) {
      const double w = g.point(static_cast<std::size_t>(q));
      gm(q, j) = fe(w - freq[static_cast<std::size_t>(j)]) * s.amplitudes()[static_cast<std::size_t>(q)];
    }
  }
  Eigen::MatrixXcd e(nt, n);
  for (Eigen::Index i = 0; i < nt; ++i) {
    for (Eigen::Index q = 0; q < n; ++q) e(i, q) = std::polar(1.0, g.point(static_cast<std::size_t>(q)) * time[static_cast<std::size_t>(i)]);
  }
  x = e * gm;
  x *= dw;
  return x;
}

inline PhaseSpaceMap spectrogram(const PureState& s, const Window& phi, const Axis& time, const Axis& freq) {
  auto x = stft(s, phi, time, freq);
  PhaseSpaceMap m{MapKind::Spectrogram, time, freq, x.cwiseAbs2(), nlohmann::json::object()};
  m.metadata["clipped_negative"] = 0;
  return m;
}

// Clip values in (-1e-14, 0) to zero and report how many; deeper negatives are an error.
inline void clip_spectrogram(PhaseSpaceMap& m) {
  std::size_t clipped = 0;
  for (Eigen::Index i = 0; i < m.values.size(); ++i) {
    double& v = m.values.data()[i];
    if (v < 0.0) {
      if (v < -1e-14) throw PreconditionError("spectrogram value " + std::to_string(v) + " is negative");
      v = 0.0;
      ++clipped;
    }
  }
  m.metadata["clipped_negative"] = clipped;
}

// psi(x) = (1/psi*(a)) int W((x + a)/2, t) exp(i (x - a) t) dt on the lattice x = a + 2 k dw_map.
inline PureState reconstruct_from_wigner(const PhaseSpaceMap& m, std::optional<double> anchor = std::nullopt) {
  if (m.kind != MapKind::CW) throw InvalidArgument("reconstruct_from_wigner needs a CW map");
  const auto& fa = m.freq_axis;
  const auto& ta = m.time_axis;
  if (fa.size() < 4) throw InvalidArgument("frequency axis too short for reconstruction");
  const auto marg = marginals(m).freq;
  std::size_t ja = 0;
  if (anchor) {
    ja = fa.nearest_index(*anchor);
    if (std::abs(fa[ja] - *anchor) > 0.5 * fa.step() * (1.0 + 1e-9)) {
      throw InvalidArgument("anchor lies outside the map's frequency axis");
    }
  } else {
    ja = static_cast<std::size_t>(std::max_element(marg.begin(), marg.end()) - marg.begin());
  }
  const double peak = *std::max_element(marg.begin(), marg.end());
  const double amp2 = marg[ja];
  if (!(amp2 > 1e-6 * peak)) {
    throw PreconditionError("anchor amplitude |psi(a)|^2 = " + std::to_string(amp2) + " at a = " +
                            std::to_string(fa[ja]) + " is below threshold; move the anchor to a spectral maximum");
  }
  const double a = fa[ja];
  const auto m_lo = -static_cast<std::ptrdiff_t>(ja);
  std::size_t count = fa.size();
  if (count % 2 != 0) --count;
  const double step = 2.0 * fa.step();
  std::vector<cplx> s(count);
  const double norm = 1.0 / std::sqrt(amp2);
  parallel_for(count, [&](std::size_t n) {
    const std::ptrdiff_t mm = m_lo + static_cast<std::ptrdiff_t>(n);
    const auto j = static_cast<Eigen::Index>(static_cast<std::ptrdiff_t>(ja) + mm);
    const double lag = step * static_cast<double>(mm);
    cplx acc{};
    for (std::size_t i = 0; i < ta.size(); ++i) {
      acc += m.values(static_cast<Eigen::Index>(i), j) * std::polar(1.0, lag * ta[i]);
    }
    s[n] = acc * ta.step() * norm;
  });
  const double center = a + step * static_cast<double>(m_lo + static_cast<std::ptrdiff_t>(count / 2));
  return PureState::from_samples(FrequencyGrid(count, center, step), std::move(s));
}

// Inverts PW = L_f * (lag form of rho) along tau. Lags where |f(w)|^2 < reg * max are dropped.
inline PhaseSpaceMap wigner_from_pseudo(const PhaseSpaceMap& pw, const Window& f, double reg_epsilon) {
  if (pw.kind != MapKind::CPW) throw InvalidArgument("wigner_from_pseudo needs a CPW map");
  if (!f.even_real()) throw InvalidArgument("deconvolution is implemented for even-real windows only");
  if (!(reg_epsilon > 0.0)) throw InvalidArgument("reg_epsilon must be positive");
  const auto& ta = pw.time_axis;
  const auto& fa = pw.freq_axis;
  if (ta.size() < 8) throw PreconditionError("tau axis too short for deconvolution");
  const double t_ext = ta.max_abs() + ta.step();
  const double h = kPi / (4.0 * t_ext);
  const double nyquist = 0.5 * kPi / ta.step();
  const double limit = std::min(nyquist, f.half_support());
  const auto kmax = static_cast<std::size_t>(std::floor(limit / h));
  auto lw = detail::window_lag_weight(f);
  std::vector<double> nodes;
  std::vector<double> lf;
  double lf_max = 0.0;
  for (std::ptrdiff_t k = -static_cast<std::ptrdiff_t>(kmax); k <= static_cast<std::ptrdiff_t>(kmax); ++k) {
    const double w = static_cast<double>(k) * h;
    nodes.push_back(w);
    lf.push_back(lw(w).real());
    lf_max = std::max(lf_max, std::abs(lf.back()));
  }
  std::vector<Eigen::Index> kept;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (std::abs(lf[k]) >= reg_epsilon * lf_max) kept.push_back(static_cast<Eigen::Index>(k));
  }
  if (kept.size() < 4) {
    throw PreconditionError("window support too small: only " + std::to_string(kept.size()) +
                            " lag samples survive the regularization cutoff");
  }
  const auto nk = static_cast<Eigen::Index>(kept.size());
  const auto nt = static_cast<Eigen::Index>(ta.size());
  Eigen::MatrixXcd fwd(nk, nt);
  Eigen::MatrixXcd inv(nt, nk);
  for (Eigen::Index r = 0; r < nk; ++r) {
    const double w = nodes[static_cast<std::size_t>(kept[static_cast<std::size_t>(r)])];
    for (Eigen::Index i = 0; i < nt; ++i) {
      const double t = ta[static_cast<std::size_t>(i)];
      fwd(r, i) = std::polar(1.0, 2.0 * w * t);
      inv(i, r) = std::polar(1.0, 2.0 * w * t);
    }
  }
  // Lag form of rho, divided by the window weight.
  Eigen::MatrixXcd c = fwd * pw.values.cast<cplx>();
  for (Eigen::Index r = 0; r < nk; ++r) {
    c.row(r) *= ta.step() / (kPi * lf[static_cast<std::size_t>(kept[static_cast<std::size_t>(r)])]);
  }
  Eigen::MatrixXcd w = inv * c;
  w *= h / kPi;
  PhaseSpaceMap out{MapKind::CW, ta, fa, w.real(), nlohmann::json::object()};
  out.metadata["masked_lag_fraction"] = 1.0 - static_cast<double>(kept.size()) / static_cast<double>(nodes.size());
  out.metadata["reg_epsilon"] = reg_epsilon;
  return out;
}

// W_f(0, s) = (1/pi) int dw exp(2 i w s) f(-w) conj(f(w)).
inline std::vector<double> window_wigner_at_zero(const Window& f, const std::vector<double>& s) {
  const auto& g = f.grid();
  auto lw = detail::window_lag_weight(f);
  auto lat = detail::lag_lattice(0.5 * g.spacing(), g.size(), std::min(0.5 * g.span(), f.half_support()), lw);
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    cplx acc{};
    for (double w : lat.nodes) acc += lw(w) * std::polar(1.0, 2.0 * w * s[i]);
    out[i] = (acc * lat.step).real() / kPi;
  }
  return out;
}

// PW(tau, mu) = pi int dt W(mu, t) W_f(0, -t - tau): the window smooths the CW along time.
inline PhaseSpaceMap pseudo_wigner_by_convolution(const PhaseSpaceMap& cw, const Window& f, const Axis& tau) {
  if (cw.kind != MapKind::CW) throw InvalidArgument("convolution route needs a CW map");
  const auto& ta = cw.time_axis;
  std::vector<double> s;
  s.reserve(ta.size() * tau.size());
  for (std::size_t k = 0; k < tau.size(); ++k) {
    for (std::size_t i = 0; i < ta.size(); ++i) s.push_back(-(ta[i] + tau[k]));
  }
  const auto wf = window_wigner_at_zero(f, s);
  Eigen::MatrixXd kern(tau.size(), ta.size());
  for (std::size_t k = 0; k < tau.size(); ++k) {
    for (std::size_t i = 0; i < ta.size(); ++i) {
      kern(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = wf[k * ta.size() + i];
    }
  }
  PhaseSpaceMap out{MapKind::CPW, tau, cw.freq_axis, (kern * cw.values) * (kPi * ta.step()), nlohmann::json::object()};
  return out;
}

// int |f(w - mu) psi(w)|^2 dw: probability that the filter passes the shifted state.
inline double filter_transmission(const PureState& s, const Window& f, double mu) {
  const auto& g = s.grid();
  double acc = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) acc += std::norm(f(g.point(n) - mu) * s.amplitudes()[n]);
  return acc * g.spacing();
}

// 2 pi * double integral of W^2; equals Tr rho^2 for the unit-integral W used here.
inline double purity_witness(const PhaseSpaceMap& cw) {
  if (cw.kind != MapKind::CW) throw InvalidArgument("purity witness needs a CW map");
  return 2.0 * kPi * cw.values.squaredNorm() * cw.time_axis.step() * cw.freq_axis.step();
}

}  // namespace chronoscope
