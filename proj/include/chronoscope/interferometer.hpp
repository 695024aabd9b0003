#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "chronoscope/core.hpp"
#include "chronoscope/parallel.hpp"
#include "chronoscope/phase_space.hpp"

namespace chronoscope {

enum class Port { Signal, Idler };

using JointFunction = std::function<cplx(double, double)>;

struct JointBranch {
  double weight;
  Eigen::MatrixXcd amplitude;  // (signal index, idler index)
  JointFunction evaluator;     // empty when only samples are known
};

// Joint spectral amplitude on a square product grid; a weighted branch list for mixed inputs.
class TwoPhotonAmplitude {
 public:
  TwoPhotonAmplitude(const FrequencyGrid& grid, std::vector<JointBranch> branches, double success_probability = 1.0)
      : grid_(grid), branches_(std::move(branches)), success_probability_(success_probability) {
    const auto n = static_cast<Eigen::Index>(grid_.size());
    for (const auto& b : branches_) {
      if (b.amplitude.rows() != n || b.amplitude.cols() != n) {
        throw InvalidArgument("joint amplitude shape does not match the joint grid");
      }
    }
  }

  const FrequencyGrid& grid() const { return grid_; }
  const FrequencyGrid& grid_s() const { return grid_; }
  const FrequencyGrid& grid_i() const { return grid_; }
  const std::vector<JointBranch>& branches() const { return branches_; }
  double success_probability() const { return success_probability_; }

  double norm_squared() const {
    double acc = 0.0;
    for (const auto& b : branches_) acc += b.weight * b.amplitude.squaredNorm();
    return acc * grid_.spacing() * grid_.spacing();
  }

 private:
  FrequencyGrid grid_;
  std::vector<JointBranch> branches_;
  double success_probability_;
};

namespace detail {

inline Eigen::MatrixXcd sample_joint(const FrequencyGrid& g, const JointFunction& f) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXcd m(n, n);
  parallel_for(g.size(), [&](std::size_t r) {
    const double s = g.point(r);
    for (Eigen::Index c = 0; c < n; ++c) m(static_cast<Eigen::Index>(r), c) = f(s, g.point(static_cast<std::size_t>(c)));
  });
  return m;
}

struct Interval {
  double lo;
  double hi;
};

inline Interval support_of(const std::vector<Branch>& branches) {
  Interval out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& b : branches) {
    auto [lo, hi] = effective_support(b.state.spectrum());
    out.lo = std::min(out.lo, lo);
    out.hi = std::max(out.hi, hi);
  }
  return out;
}

inline Interval support_of(const PureState& s) {
  auto [lo, hi] = effective_support(s.spectrum());
  return {lo, hi};
}

inline Interval hull(Interval a, Interval b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

inline constexpr std::size_t kMaxJointCount = 4096;

// Square grid covering both port ranges with a few cells of padding.
inline FrequencyGrid covering_grid(Interval range, double spacing) {
  const double lo = range.lo - 4.0 * spacing;
  const double hi = range.hi + 4.0 * spacing;
  auto count = static_cast<std::size_t>(std::ceil((hi - lo) / spacing)) + 1;
  count = std::max<std::size_t>(count + (count % 2), 4);
  if (count > kMaxJointCount) {
    throw PreconditionError("joint grid would need " + std::to_string(count) + " points per port (limit " +
                            std::to_string(kMaxJointCount) + "); coarsen the grids or narrow the shift ranges");
  }
  return FrequencyGrid(count, lo + static_cast<double>(count / 2) * spacing, spacing);
}

inline void require_inside(const FrequencyGrid& g, Interval needed, const char* what) {
  const double have_lo = g.front() - 0.5 * g.spacing();
  const double have_hi = g.back() + 0.5 * g.spacing();
  if (needed.lo < have_lo || needed.hi > have_hi) {
    const double need = std::max(std::abs(needed.lo - g.center()), std::abs(needed.hi - g.center()));
    const double have = 0.5 * g.span();
    throw PreconditionError(std::string(what) + ": evaluation points leave the joint grid; enlarge its span by a factor of at least " +
                            std::to_string(std::max(need / have, std::sqrt(2.0))));
  }
}

inline Interval rotated_sum(Interval u, Interval v) { return {(u.lo + v.lo) / std::sqrt(2.0), (u.hi + v.hi) / std::sqrt(2.0)}; }
inline Interval rotated_diff(Interval u, Interval v) { return {(u.lo - v.hi) / std::sqrt(2.0), (u.hi - v.lo) / std::sqrt(2.0)}; }

inline FrequencyGrid rotated_grid(const PureState& ref, const std::vector<Branch>& target,
                                  const std::optional<FrequencyGrid>& joint, const char* what) {
  const Interval u = support_of(ref);
  const Interval v = support_of(target);
  const Interval need = hull(rotated_sum(u, v), rotated_diff(u, v));
  if (joint) {
    require_inside(*joint, need, what);
    return *joint;
  }
  return covering_grid(need, std::min(ref.grid().spacing(), target.front().state.grid().spacing()));
}

inline JointBranch make_branch(double weight, const FrequencyGrid& g, JointFunction f) {
  auto m = sample_joint(g, f);
  return {weight, std::move(m), std::move(f)};
}

}  // namespace detail

// Psi(ws, wi) = phi((ws + wi)/sqrt2) psi((ws - wi)/sqrt2), one branch per eigen-branch of the target.
inline TwoPhotonAmplitude frequency_beam_splitter(const PureState& ref, const std::vector<Branch>& target,
                                                  const std::optional<FrequencyGrid>& joint = std::nullopt) {
  const auto g = detail::rotated_grid(ref, target, joint, "frequency_beam_splitter");
  auto fp = ref.evaluator();
  std::vector<JointBranch> out;
  for (const auto& b : target) {
    auto fb = b.state.evaluator();
    out.push_back(detail::make_branch(b.weight, g, [fp, fb](double s, double i) {
      constexpr double r = 0.70710678118654752440;
      return fp((s + i) * r) * fb((s - i) * r);
    }));
  }
  return TwoPhotonAmplitude(g, std::move(out));
}
inline TwoPhotonAmplitude frequency_beam_splitter(const PureState& ref, const PureState& target,
                                                  const std::optional<FrequencyGrid>& joint = std::nullopt) {
  return frequency_beam_splitter(ref, detail::as_branches(target), joint);
}
inline TwoPhotonAmplitude frequency_beam_splitter(const PureState& ref, const MixedState& target,
                                                  const std::optional<FrequencyGrid>& joint = std::nullopt) {
  return frequency_beam_splitter(ref, target.branches(), joint);
}

// Psi(a, b) = phi(a) psi(a - b): the shear |w>|w'> -> |w>|w - w'> on the product input.
inline TwoPhotonAmplitude cx_gate(const PureState& ref, const std::vector<Branch>& target,
                                  const std::optional<FrequencyGrid>& joint = std::nullopt) {
  const detail::Interval a = detail::support_of(ref);
  const detail::Interval v = detail::support_of(target);
  const detail::Interval b{a.lo - v.hi, a.hi - v.lo};
  const detail::Interval need = detail::hull(a, b);
  FrequencyGrid g = joint ? *joint
                          : detail::covering_grid(need, std::min(ref.grid().spacing(), target.front().state.grid().spacing()));
  if (joint) detail::require_inside(g, need, "cx_gate");
  auto fp = ref.evaluator();
  std::vector<JointBranch> out;
  for (const auto& br : target) {
    auto fb = br.state.evaluator();
    out.push_back(detail::make_branch(br.weight, g, [fp, fb](double x, double y) { return fp(x) * fb(x - y); }));
  }
  return TwoPhotonAmplitude(g, std::move(out));
}
inline TwoPhotonAmplitude cx_gate(const PureState& ref, const PureState& target,
                                  const std::optional<FrequencyGrid>& joint = std::nullopt) {
  return cx_gate(ref, detail::as_branches(target), joint);
}

// Psi(ws, wi) = phi(ws) psi(wi): no entangling gate.
inline TwoPhotonAmplitude product_state(const PureState& ref, const std::vector<Branch>& target, const FrequencyGrid& g) {
  detail::require_inside(g, detail::hull(detail::support_of(ref), detail::support_of(target)), "product_state");
  auto fp = ref.evaluator();
  std::vector<JointBranch> out;
  for (const auto& br : target) {
    auto fb = br.state.evaluator();
    out.push_back(detail::make_branch(br.weight, g, [fp, fb](double s, double i) { return fp(s) * fb(i); }));
  }
  return TwoPhotonAmplitude(g, std::move(out));
}

namespace detail {

// Band-limited translation of one axis by mu: Psi'(..w..) = Psi(..w - mu..).
inline Eigen::MatrixXcd translate_axis(const FrequencyGrid& g, const Eigen::MatrixXcd& m, double mu, Port port) {
  Eigen::MatrixXcd out(m.rows(), m.cols());
  const std::size_t n = g.size();
  std::vector<cplx> ramp(n);
  for (std::size_t k = 0; k < n; ++k) ramp[k] = std::polar(1.0, -mu * g.time_point(k));
  parallel_for(n, [&](std::size_t r) {
    std::vector<cplx> line(n);
    for (std::size_t c = 0; c < n; ++c) {
      line[c] = port == Port::Idler ? m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))
                                    : m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r));
    }
    auto ts = grid_to_time(g, line);
    for (std::size_t k = 0; k < n; ++k) ts[k] *= ramp[k];
    auto back = time_to_grid(g, ts);
    for (std::size_t c = 0; c < n; ++c) {
      if (port == Port::Idler) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = back[c];
      else out(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = back[c];
    }
  });
  return out;
}

// Fraction of |Psi|^2 that a translation by mu would carry past the grid edge on that axis.
// The band-limited translation wraps around instead of failing, so this is checked up front.
inline double exiting_fraction(const FrequencyGrid& g, const Eigen::MatrixXcd& m, double mu, Port port) {
  const Eigen::VectorXd marg = port == Port::Idler ? Eigen::VectorXd(m.cwiseAbs2().colwise().sum().transpose())
                                                   : Eigen::VectorXd(m.cwiseAbs2().rowwise().sum());
  const double total = marg.sum();
  if (!(total > 0.0)) return 0.0;
  const double lo = g.point(0) - 0.5 * g.spacing();
  const double hi = g.point(g.size() - 1) + 0.5 * g.spacing();
  double out = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double w = g.point(k) + mu;
    if (w < lo || w > hi) out += marg(static_cast<Eigen::Index>(k));
  }
  return out / total;
}

}  // namespace detail

// Frequency translation by mu, then the phase exp(i w tau) on the chosen port.
inline TwoPhotonAmplitude apply_shifts(const TwoPhotonAmplitude& psi, double tau, double mu, Port port) {
  if (tau == 0.0 && mu == 0.0) return psi;
  const auto& g = psi.grid();
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::VectorXcd phase(n);
  for (Eigen::Index k = 0; k < n; ++k) phase(k) = std::polar(1.0, g.point(static_cast<std::size_t>(k)) * tau);
  std::vector<JointBranch> out;
  out.reserve(psi.branches().size());
  for (const auto& b : psi.branches()) {
    JointBranch nb{b.weight, {}, {}};
    if (mu != 0.0) {
      if (b.evaluator) {
        auto f = b.evaluator;
        nb.evaluator = port == Port::Signal ? JointFunction([f, mu](double s, double i) { return f(s - mu, i); })
                                            : JointFunction([f, mu](double s, double i) { return f(s, i - mu); });
        nb.amplitude = detail::sample_joint(g, nb.evaluator);
      } else {
        nb.amplitude = detail::translate_axis(g, b.amplitude, mu, port);
      }
      const double lost = detail::exiting_fraction(g, b.amplitude, mu, port);
      if (lost > 1e-10) {
        throw PreconditionError("frequency shift " + std::to_string(mu) + " moves the joint amplitude off its grid (" +
                                std::to_string(lost) + " of the norm leaves)");
      }
    } else {
      nb.amplitude = b.amplitude;
      nb.evaluator = b.evaluator;
    }
    if (tau != 0.0) {
      if (port == Port::Signal) nb.amplitude = phase.asDiagonal() * nb.amplitude;
      else nb.amplitude = nb.amplitude * phase.asDiagonal();
      if (nb.evaluator) {
        auto f = nb.evaluator;
        nb.evaluator = port == Port::Signal
                           ? JointFunction([f, tau](double s, double i) { return f(s, i) * std::polar(1.0, s * tau); })
                           : JointFunction([f, tau](double s, double i) { return f(s, i) * std::polar(1.0, i * tau); });
      }
    }
    out.push_back(std::move(nb));
  }
  return TwoPhotonAmplitude(g, std::move(out), psi.success_probability());
}

struct Coincidence {
  double probability;  // clamped to [0, 1]
  double raw;          // before clamping
};

// I = (1 - Re int Psi(ws, wi) conj(Psi(wi, ws))) / 2, summed over weighted branches.
inline Coincidence hom_coincidence(const TwoPhotonAmplitude& psi) {
  const double h2 = psi.grid().spacing() * psi.grid().spacing();
  double norm = 0.0;
  double overlap = 0.0;
  for (const auto& b : psi.branches()) {
    norm += b.weight * b.amplitude.squaredNorm();
    overlap += b.weight * (b.amplitude.array() * b.amplitude.transpose().conjugate().array()).sum().real();
  }
  norm *= h2;
  overlap *= h2;
  if (std::abs(norm - 1.0) > 1e-6) {
    throw PreconditionError("hom_coincidence: joint amplitude norm is " + std::to_string(norm) + ", expected 1");
  }
  const double raw = 0.5 * (1.0 - overlap / norm);
  if (raw < -1e-10 || raw > 1.0 + 1e-10) {
    throw PreconditionError("hom_coincidence: probability " + std::to_string(raw) + " outside [0, 1]");
  }
  return {std::clamp(raw, 0.0, 1.0), raw};
}

// Schmidt weights (squared singular values, summing to 1) of a single-branch amplitude.
inline std::vector<double> schmidt_weights(const TwoPhotonAmplitude& psi) {
  if (psi.branches().size() != 1) throw InvalidArgument("Schmidt decomposition needs a pure joint amplitude");
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(psi.branches().front().amplitude * psi.grid().spacing());
  std::vector<double> out;
  double total = 0.0;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) total += std::pow(svd.singularValues()(k), 2);
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) out.push_back(std::pow(svd.singularValues()(k), 2) / total);
  return out;
}

// U(w+, w-) = scale * sum_j p_j p1_j(w+) p2_j(w-), orthonormal p1, p2 and p_j summing to 1.
struct KernelDecomposition {
  double scale = 0.0;
  std::vector<double> weights;
  std::vector<Spectrum> first;
  std::vector<Spectrum> second;
};

namespace detail {

// SVD in the delta basis scaled by 1/sqrt(dw). Singular pairs below rank_tol * sigma_0 are dropped.
inline KernelDecomposition decompose_matrix(const FrequencyGrid& ga, const FrequencyGrid& gb, const Eigen::MatrixXcd& u,
                                            double rank_tol) {
  const double sa = std::sqrt(ga.spacing());
  const double sb = std::sqrt(gb.spacing());
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(u * (sa * sb), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  KernelDecomposition d;
  if (sv.size() == 0 || !(sv(0) > 0.0)) throw PreconditionError("kernel matrix is zero");
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > rank_tol * sv(0)) ++rank;
  for (Eigen::Index j = 0; j < rank; ++j) d.scale += sv(j);
  for (Eigen::Index j = 0; j < rank; ++j) {
    d.weights.push_back(sv(j) / d.scale);
    std::vector<cplx> a(ga.size());
    std::vector<cplx> b(gb.size());
    for (std::size_t n = 0; n < ga.size(); ++n) a[n] = svd.matrixU()(static_cast<Eigen::Index>(n), j) / sa;
    for (std::size_t m = 0; m < gb.size(); ++m) b[m] = std::conj(svd.matrixV()(static_cast<Eigen::Index>(m), j)) / sb;
    d.first.push_back(Spectrum::from_samples(ga, std::move(a)));
    d.second.push_back(Spectrum::from_samples(gb, std::move(b)));
  }
  return d;
}

}  // namespace detail

// Finite-bandwidth gate kernel U(w+, w-): separable functions or a sampled general matrix.
class GateKernel {
 public:
  static GateKernel separable(SpectralFunction plus, SpectralFunction minus) {
    GateKernel k;
    k.separable_ = true;
    k.plus_ = std::move(plus);
    k.minus_ = std::move(minus);
    auto p = k.plus_;
    auto m = k.minus_;
    k.eval_ = [p, m](double a, double b) { return p(a) * m(b); };
    return k;
  }

  // Keeps the analytic kernel for evaluation; the decomposition comes from its samples.
  static GateKernel from_function(const FrequencyGrid& gp, const FrequencyGrid& gm, JointFunction u,
                                  double rank_tol = 1e-12) {
    Eigen::MatrixXcd mat(static_cast<Eigen::Index>(gp.size()), static_cast<Eigen::Index>(gm.size()));
    for (std::size_t n = 0; n < gp.size(); ++n) {
      for (std::size_t m = 0; m < gm.size(); ++m) mat(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = u(gp.point(n), gm.point(m));
    }
    GateKernel k = from_matrix(gp, gm, std::move(mat), rank_tol);
    k.eval_ = std::move(u);
    return k;
  }

  static GateKernel from_matrix(const FrequencyGrid& gp, const FrequencyGrid& gm, Eigen::MatrixXcd u,
                                double rank_tol = 1e-12) {
    if (u.rows() != static_cast<Eigen::Index>(gp.size()) || u.cols() != static_cast<Eigen::Index>(gm.size())) {
      throw InvalidArgument("kernel matrix shape does not match its grids");
    }
    GateKernel k;
    k.separable_ = false;
    k.grid_plus_ = gp;
    k.grid_minus_ = gm;
    k.decomposition_ = detail::decompose_matrix(gp, gm, u, rank_tol);
    k.matrix_ = std::move(u);
    auto d = std::make_shared<const KernelDecomposition>(*k.decomposition_);
    k.eval_ = [d](double a, double b) {
      cplx acc{};
      for (std::size_t j = 0; j < d->weights.size(); ++j) acc += d->weights[j] * d->first[j](a) * d->second[j](b);
      return d->scale * acc;
    };
    return k;
  }

  bool is_separable() const { return separable_; }
  cplx operator()(double wp, double wm) const { return eval_(wp, wm); }
  const JointFunction& evaluator() const { return eval_; }
  const SpectralFunction& plus() const { return plus_; }
  const SpectralFunction& minus() const { return minus_; }

  const KernelDecomposition& decomposition() const {
    if (!decomposition_) throw InvalidArgument("separable kernels carry no matrix decomposition");
    return *decomposition_;
  }
  const Eigen::MatrixXcd& matrix() const { return matrix_; }
  const std::optional<FrequencyGrid>& grid_plus() const { return grid_plus_; }
  const std::optional<FrequencyGrid>& grid_minus() const { return grid_minus_; }

 private:
  GateKernel() = default;
  bool separable_ = true;
  SpectralFunction plus_;
  SpectralFunction minus_;
  JointFunction eval_;
  std::optional<FrequencyGrid> grid_plus_;
  std::optional<FrequencyGrid> grid_minus_;
  std::optional<KernelDecomposition> decomposition_;
  Eigen::MatrixXcd matrix_;
};

// Psi = phi(w+) psi(w-) U(w+, w-) with w+- = (ws +- wi)/sqrt2, renormalized; the norm before
// renormalization is the success probability.
inline TwoPhotonAmplitude finite_bandwidth_apply(const PureState& ref, const std::vector<Branch>& target,
                                                 const GateKernel& kernel,
                                                 const std::optional<FrequencyGrid>& joint = std::nullopt) {
  const auto g = detail::rotated_grid(ref, target, joint, "finite_bandwidth_apply");
  auto fp = ref.evaluator();
  auto u = kernel.evaluator();
  std::vector<JointBranch> raw;
  double total = 0.0;
  for (const auto& b : target) {
    auto fb = b.state.evaluator();
    raw.push_back(detail::make_branch(b.weight, g, [fp, fb, u](double s, double i) {
      constexpr double r = 0.70710678118654752440;
      const double wp = (s + i) * r;
      const double wm = (s - i) * r;
      return fp(wp) * fb(wm) * u(wp, wm);
    }));
    total += b.weight * raw.back().amplitude.squaredNorm() * g.spacing() * g.spacing();
  }
  if (!(total > 1e-14)) throw PreconditionError("gate kernel annihilates the input state (success probability " + std::to_string(total) + ")");
  std::vector<JointBranch> out;
  for (auto& b : raw) {
    const double pb = b.amplitude.squaredNorm() * g.spacing() * g.spacing();
    if (!(pb > 0.0)) continue;
    const double sc = 1.0 / std::sqrt(pb);
    auto f = b.evaluator;
    out.push_back({b.weight * pb / total, b.amplitude * sc, [f, sc](double s, double i) { return sc * f(s, i); }});
  }
  return TwoPhotonAmplitude(g, std::move(out), total);
}
inline TwoPhotonAmplitude finite_bandwidth_apply(const PureState& ref, const PureState& target, const GateKernel& kernel,
                                                 const std::optional<FrequencyGrid>& joint = std::nullopt) {
  return finite_bandwidth_apply(ref, detail::as_branches(target), kernel, joint);
}

// phi(p + w/2) conj(phi(p - w/2)) = scale * sum_j p_j C1_j(p) C2_j(w), alpha_j = scale * int C1_j.
// The phase of each singular pair is chosen so alpha_j is real and non-negative.
struct ReferenceCorrelation {
  double scale = 0.0;
  std::vector<double> weights;
  std::vector<double> alpha;
  std::vector<Spectrum> c1;
  std::vector<Spectrum> c2;

  // A(w) = int dp phi(p + w/2) conj(phi(p - w/2)) = sum_j p_j alpha_j C2_j(w).
  cplx autocorrelation(double w) const {
    cplx acc{};
    for (std::size_t j = 0; j < weights.size(); ++j) acc += weights[j] * alpha[j] * c2[j](w);
    return acc;
  }
};

inline ReferenceCorrelation decompose_reference_correlation(const PureState& ref, double rank_tol = 1e-10) {
  auto [lo, hi] = effective_support(ref.spectrum());
  const double dw = ref.grid().spacing();
  lo -= 4.0 * dw;
  hi += 4.0 * dw;
  auto np = static_cast<std::size_t>(std::ceil((hi - lo) / dw)) + 1;
  np += np % 2;
  const FrequencyGrid gp(np, lo + static_cast<double>(np / 2) * dw, dw);
  const FrequencyGrid gw(2 * np, 0.0, dw);
  auto f = ref.evaluator();
  Eigen::MatrixXcd m(static_cast<Eigen::Index>(gp.size()), static_cast<Eigen::Index>(gw.size()));
  for (std::size_t a = 0; a < gp.size(); ++a) {
    for (std::size_t b = 0; b < gw.size(); ++b) {
      const double p = gp.point(a);
      const double w = gw.point(b);
      m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = f(p + 0.5 * w) * std::conj(f(p - 0.5 * w));
    }
  }
  auto d = detail::decompose_matrix(gp, gw, m, rank_tol);
  ReferenceCorrelation out;
  out.scale = d.scale;
  out.weights = d.weights;
  for (std::size_t j = 0; j < d.weights.size(); ++j) {
    cplx integral{};
    for (const auto& v : d.first[j].samples()) integral += v;
    integral *= gp.spacing() * d.scale;
    const cplx rot = std::abs(integral) > 0.0 ? std::conj(integral) / std::abs(integral) : cplx{1.0};
    out.alpha.push_back(std::abs(integral));
    out.c1.push_back(d.first[j].scaled(rot));
    out.c2.push_back(d.second[j].scaled(std::conj(rot)));
  }
  return out;
}

enum class GateType { FreqBS, Cx, None, Kernel };

inline std::string to_string(GateType g) {
  switch (g) {
    case GateType::FreqBS: return "freq_bs";
    case GateType::Cx: return "cx";
    case GateType::None: return "none";
    case GateType::Kernel: return "kernel";
  }
  return "unknown";
}

struct Gate {
  GateType type = GateType::FreqBS;
  std::optional<GateKernel> kernel;

  static Gate freq_bs() { return {GateType::FreqBS, std::nullopt}; }
  static Gate cx() { return {GateType::Cx, std::nullopt}; }
  static Gate none() { return {GateType::None, std::nullopt}; }
  static Gate with_kernel(GateKernel k) { return {GateType::Kernel, std::move(k)}; }
};

struct CoincidenceOptions {
  std::optional<Window> pre_filter;
  bool pre_shift_mu_first = true;
  std::optional<FrequencyGrid> joint_grid;
};

namespace detail {

inline std::vector<Branch> filtered_branches(const std::vector<Branch>& target, const Window& f, double mu,
                                             double* transmission) {
  std::vector<Branch> out;
  std::vector<double> t;
  double total = 0.0;
  auto fe = f.evaluator();
  for (const auto& b : target) {
    auto se = b.state.evaluator();
    SpectralFunction chi = [se, fe, mu](double w) { return se(w + mu) * fe(w); };
    auto raw = Spectrum::from_function(b.state.grid(), chi);
    t.push_back(raw.norm_squared());
    total += b.weight * t.back();
  }
  if (!(total > 1e-14)) {
    throw PreconditionError("pre-filter blocks the target at mu = " + std::to_string(mu));
  }
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (!(t[k] > 0.0)) continue;
    auto se = target[k].state.evaluator();
    SpectralFunction chi = [se, fe, mu](double w) { return se(w + mu) * fe(w); };
    out.push_back({target[k].weight * t[k] / total, PureState::from_function(target[k].state.grid(), chi, false)});
  }
  if (transmission) *transmission = total;
  return out;
}

inline FrequencyGrid pipeline_grid(const PureState& ref, const std::vector<Branch>& target, const Gate& gate,
                                   const Axis& mu, bool pre_shift, const std::optional<Window>& filter) {
  const double spacing = std::min(ref.grid().spacing(), target.front().state.grid().spacing());
  const Interval u = support_of(ref);
  Interval v = support_of(target);
  const double mu_lo = std::min(mu.front(), mu.back());
  const double mu_hi = std::max(mu.front(), mu.back());
  const double r2 = std::sqrt(2.0);
  switch (gate.type) {
    case GateType::FreqBS:
    case GateType::Kernel: {
      if (filter && pre_shift) {
        v = {v.lo - mu_hi, v.hi - mu_lo};
        if (std::isfinite(filter->half_support())) {
          v = {std::max(v.lo, -filter->half_support()), std::min(v.hi, filter->half_support())};
        }
        return covering_grid(hull(rotated_sum(u, v), rotated_diff(u, v)), spacing);
      }
      Interval s = rotated_sum(u, v);
      Interval i = rotated_diff(u, v);
      i = {i.lo + r2 * std::min(0.0, mu_lo), i.hi + r2 * std::max(0.0, mu_hi)};
      return covering_grid(hull(s, i), spacing);
    }
    case GateType::Cx: {
      Interval a{u.lo - mu_hi, u.hi - mu_lo};
      a = hull(a, u);
      Interval b{u.lo - v.hi, u.hi - v.lo};
      return covering_grid(hull(a, b), spacing);
    }
    case GateType::None: {
      Interval s{u.lo + std::min(0.0, mu_lo), u.hi + std::max(0.0, mu_hi)};
      return covering_grid(hull(s, v), spacing);
    }
  }
  throw InvalidArgument("unknown gate");
}

}  // namespace detail

// The interferometer path: for each (tau, mu) build the input, apply the gate and shifts,
// and record the HOM coincidence probability. Entries are at (tau_i, mu_j).
inline PhaseSpaceMap coincidence_map(const PureState& ref, const std::vector<Branch>& target, const Gate& gate,
                                     const Axis& tau, const Axis& mu, const CoincidenceOptions& opt = {}) {
  if (target.empty()) throw InvalidArgument("coincidence_map needs a target state");
  if (gate.type == GateType::Kernel && !gate.kernel) throw InvalidArgument("kernel gate without a kernel");
  if (opt.pre_filter && gate.type != GateType::FreqBS) {
    throw InvalidArgument("a pre-filter is only supported with the frequency beam-splitter gate");
  }
  const bool shift_first = opt.pre_filter && opt.pre_shift_mu_first;
  const FrequencyGrid g = opt.joint_grid ? *opt.joint_grid
                                         : detail::pipeline_grid(ref, target, gate, mu, opt.pre_shift_mu_first, opt.pre_filter);
  const double r2 = std::sqrt(2.0);
  std::vector<Branch> prefiltered;
  if (opt.pre_filter && !shift_first) {
    double t = 0.0;
    prefiltered = detail::filtered_branches(target, *opt.pre_filter, 0.0, &t);
  }
  const std::vector<Branch>& base = prefiltered.empty() ? target : prefiltered;

  PhaseSpaceMap out{MapKind::CoincidenceMap, tau, mu, Eigen::MatrixXd(tau.size(), mu.size()), nlohmann::json::object()};
  std::vector<double> transmission(mu.size(), 1.0);
  std::vector<double> success(mu.size(), 1.0);
  std::vector<double> clamp(mu.size(), 0.0);
  std::vector<double> drift(mu.size(), 0.0);
  parallel_for(mu.size(), [&](std::size_t j) {
    const double m = mu[j];
    double tr = 1.0;
    try {
      std::vector<Branch> input = shift_first ? detail::filtered_branches(base, *opt.pre_filter, m, &tr) : base;
      TwoPhotonAmplitude amp = [&] {
        switch (gate.type) {
          case GateType::FreqBS: return frequency_beam_splitter(ref, input, g);
          case GateType::Kernel: return finite_bandwidth_apply(ref, input, *gate.kernel, g);
          case GateType::Cx: return cx_gate(ref, input, g);
          case GateType::None: return product_state(ref, input, g);
        }
        throw InvalidArgument("unknown gate");
      }();
      double tau_scale = 1.0;
      Port port = Port::Signal;
      switch (gate.type) {
        case GateType::FreqBS:
        case GateType::Kernel:
          tau_scale = r2;
          if (!shift_first) {
            amp = apply_shifts(amp, 0.0, r2 * m, Port::Idler);
            port = Port::Idler;
          }
          break;
        case GateType::Cx:
          amp = apply_shifts(amp, 0.0, -m, Port::Signal);
          tau_scale = 2.0;
          break;
        case GateType::None:
          amp = apply_shifts(amp, 0.0, m, Port::Signal);
          tau_scale = -1.0;
          break;
      }
      success[j] = amp.success_probability();
      transmission[j] = tr;
      drift[j] = std::abs(amp.norm_squared() - 1.0);
      for (std::size_t i = 0; i < tau.size(); ++i) {
        auto c = hom_coincidence(apply_shifts(amp, tau_scale * tau[i], 0.0, port));
        out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c.probability;
        clamp[j] = std::max(clamp[j], std::abs(c.probability - c.raw));
      }
    } catch (const PreconditionError& e) {
      throw PreconditionError(std::string(e.what()) + " [at mu = " + std::to_string(m) + "]");
    }
  });
  out.metadata["gate"] = to_string(gate.type);
  out.metadata["joint_grid"] = {{"count", g.size()}, {"center", g.center()}, {"spacing", g.spacing()}};
  if (gate.type == GateType::FreqBS || gate.type == GateType::Kernel) {
    out.metadata["mu_convention"] = shift_first ? "target translated by -mu before the filter"
                                                : "idler translated by sqrt(2) mu after the gate";
    out.metadata["tau_convention"] = "time shift sqrt(2) tau";
  }
  if (shift_first) out.metadata["filter_transmission"] = transmission;
  if (gate.type == GateType::Kernel) out.metadata["success_probability"] = success;
  out.metadata["max_clamp"] = *std::max_element(clamp.begin(), clamp.end());
  out.metadata["max_norm_drift"] = *std::max_element(drift.begin(), drift.end());
  return out;
}
inline PhaseSpaceMap coincidence_map(const PureState& ref, const PureState& target, const Gate& gate, const Axis& tau,
                                     const Axis& mu, const CoincidenceOptions& opt = {}) {
  return coincidence_map(ref, detail::as_branches(target), gate, tau, mu, opt);
}
inline PhaseSpaceMap coincidence_map(const PureState& ref, const MixedState& target, const Gate& gate, const Axis& tau,
                                     const Axis& mu, const CoincidenceOptions& opt = {}) {
  return coincidence_map(ref, target.branches(), gate, tau, mu, opt);
}

// (max - min) / (max + min) of the coincidence column at mu index j.
inline double fringe_visibility(const PhaseSpaceMap& coinc, std::size_t j) {
  if (j >= coinc.freq_axis.size()) throw InvalidArgument("fringe_visibility: mu index out of range");
  const auto col = coinc.values.col(static_cast<Eigen::Index>(j));
  const double hi = col.maxCoeff();
  const double lo = col.minCoeff();
  return hi + lo > 0.0 ? (hi - lo) / (hi + lo) : 0.0;
}

// Direct phase-space predictions for the pipeline above.
namespace closed_form {

inline PhaseSpaceMap from_values(const Axis& tau, const Axis& mu, Eigen::MatrixXd v, const char* source) {
  PhaseSpaceMap m{MapKind::CoincidenceMap, tau, mu, std::move(v), nlohmann::json::object()};
  m.metadata["closed_form"] = source;
  return m;
}

// (1 - pi W(mu, tau)) / 2
inline PhaseSpaceMap freq_bs(const PureState& s, const Axis& tau, const Axis& mu) {
  auto w = wigner(s, tau, mu);
  return from_values(tau, mu, (1.0 - kPi * w.values.array()).matrix() * 0.5, "(1 - pi W)/2");
}
inline PhaseSpaceMap freq_bs(const MixedState& s, const Axis& tau, const Axis& mu) {
  auto w = wigner(s, tau, mu);
  return from_values(tau, mu, (1.0 - kPi * w.values.array()).matrix() * 0.5, "(1 - pi W_rho)/2");
}

// (1 - PW(tau, mu) / T(mu)) / 2, i.e. (1 - pi PW_hat) with PW_hat the CW-normalized CPW.
inline PhaseSpaceMap filtered(const PureState& s, const Window& f, const Axis& tau, const Axis& mu) {
  auto pw = pseudo_wigner(s, f, tau, mu);
  Eigen::MatrixXd v(tau.size(), mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const double t = filter_transmission(s, f, mu[j]);
    for (std::size_t i = 0; i < tau.size(); ++i) {
      v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0.5 * (1.0 - pw(i, j) / t);
    }
  }
  return from_values(tau, mu, std::move(v), "(1 - PW/T)/2");
}

// (1 - S(tau, mu)) / 2 with the normalized reference photon as window.
inline PhaseSpaceMap no_gate(const PureState& s, const PureState& ref, const Axis& tau, const Axis& mu) {
  auto win = Window::from_function(ref.grid(), ref.evaluator(), false);
  auto sp = spectrogram(s, win, tau, mu);
  return from_values(tau, mu, (1.0 - sp.values.array()).matrix() * 0.5, "(1 - S)/2");
}

// (1 - sum_j p_j alpha_j PW_{C2_j}) / 2 with lag weight C2_j(-w).
inline PhaseSpaceMap cx(const PureState& s, const ReferenceCorrelation& rc, const Axis& tau, const Axis& mu) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(tau.size(), mu.size());
  for (std::size_t j = 0; j < rc.weights.size(); ++j) {
    const auto c2 = rc.c2[j];
    auto pw = pseudo_wigner(s, [c2](double w) { return c2(-w); }, std::numeric_limits<double>::infinity(), tau, mu);
    acc += rc.weights[j] * rc.alpha[j] * pw.values;
  }
  return from_values(tau, mu, (1.0 - acc.array()).matrix() * 0.5, "(1 - sum p alpha PW)/2");
}

}  // namespace closed_form

}  // namespace chronoscope
