#include <gtest/gtest.h>

#include <cmath>

#include "chronoscope/interferometer.hpp"

using namespace chronoscope;

namespace {

const FrequencyGrid kGrid = make_grid(256, 0.0, 20.0);
const Axis kTau = Axis::linspace(-3.0, 3.0, 21);
const Axis kMu = Axis::linspace(-2.0, 2.0, 21);

double sup(const PhaseSpaceMap& a, const PhaseSpaceMap& b) { return (a.values - b.values).cwiseAbs().maxCoeff(); }

bool in_unit_range(const PhaseSpaceMap& m) {
  return m.values.minCoeff() >= -1e-10 && m.values.maxCoeff() <= 1.0 + 1e-10;
}

// Trapezoid on a fine uniform mesh, independent of the library grids.
double quad(const std::function<double(double)>& f, double lo, double hi, int n = 20000) {
  const double h = (hi - lo) / n;
  double acc = 0.5 * (f(lo) + f(hi));
  for (int k = 1; k < n; ++k) acc += f(lo + k * h);
  return acc * h;
}

TwoPhotonAmplitude from_matrix(const FrequencyGrid& g, Eigen::MatrixXcd m) {
  m /= std::sqrt(m.squaredNorm()) * g.spacing();
  return TwoPhotonAmplitude(g, {{1.0, std::move(m), {}}});
}

Eigen::MatrixXcd outer(const FrequencyGrid& g, const SpectralFunction& a, const SpectralFunction& b) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXcd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = a(g.point(static_cast<std::size_t>(r))) * b(g.point(static_cast<std::size_t>(c)));
  }
  return m;
}

}  // namespace

TEST(FrequencyBeamSplitter, GaussianJointAmplitudeMatchesProductForm) {
  const double sp = 0.9, sm = 0.6;
  const auto psi = frequency_beam_splitter(gaussian_state(kGrid, 0.0, sp), gaussian_state(kGrid, 0.0, sm));
  EXPECT_NEAR(psi.norm_squared(), 1.0, 1e-8);
  const auto& g = psi.grid();
  const auto& a = psi.branches().front().amplitude;
  double e = 0.0;
  for (std::size_t r = 0; r < g.size(); r += 7) {
    for (std::size_t c = 0; c < g.size(); c += 7) {
      const double s = g.point(r), i = g.point(c);
      const double v = std::exp(-(s + i) * (s + i) / (4 * sp * sp) - (s - i) * (s - i) / (4 * sm * sm)) / std::sqrt(kPi * sp * sm);
      e = std::max(e, std::abs(a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) - v));
    }
  }
  EXPECT_LT(e, 1e-12);
}

TEST(FrequencyBeamSplitter, EqualWidthsGiveSingleSchmidtMode) {
  const auto psi = frequency_beam_splitter(gaussian_state(kGrid, 0.0, 0.8), gaussian_state(kGrid, 0.0, 0.8));
  EXPECT_NEAR(schmidt_weights(psi).front(), 1.0, 1e-6);
  const auto ent = frequency_beam_splitter(gaussian_state(kGrid, 0.0, 1.2), gaussian_state(kGrid, 0.0, 0.4));
  EXPECT_LT(schmidt_weights(ent).front(), 0.9);
}

TEST(FrequencyBeamSplitter, NarrowTargetConcentratesOnDiagonal) {
  const auto psi = frequency_beam_splitter(gaussian_state(kGrid, 0.0, 1.0), gaussian_state(kGrid, 0.0, 0.08));
  const auto& g = psi.grid();
  const auto& a = psi.branches().front().amplitude;
  double near = 0.0, total = 0.0;
  for (std::size_t r = 0; r < g.size(); ++r) {
    for (std::size_t c = 0; c < g.size(); ++c) {
      const double p = std::norm(a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      total += p;
      if (std::abs(g.point(r) - g.point(c)) < 0.5) near += p;
    }
  }
  EXPECT_GT(near / total, 1.0 - 1e-8);
}

TEST(FrequencyBeamSplitter, TooSmallJointGridIsRejected) {
  EXPECT_THROW(frequency_beam_splitter(gaussian_state(kGrid, 0.0, 1.0), gaussian_state(kGrid, 0.0, 1.0), make_grid(64, 0.0, 6.0)),
               PreconditionError);
}

TEST(CxGate, GaussianMomentsFollowTheShear) {
  const double sa = 0.7, sb = 0.5, ca = 0.4, cb = -0.3;
  const auto psi = cx_gate(gaussian_state(kGrid, ca, sa), gaussian_state(kGrid, cb, sb));
  EXPECT_NEAR(psi.norm_squared(), 1.0, 1e-8);
  const auto& g = psi.grid();
  const auto& a = psi.branches().front().amplitude;
  double m0 = 0, mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
  for (std::size_t r = 0; r < g.size(); ++r) {
    for (std::size_t c = 0; c < g.size(); ++c) {
      const double p = std::norm(a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      const double x = g.point(r), y = g.point(c);
      m0 += p, mx += p * x, my += p * y, mxx += p * x * x, myy += p * y * y, mxy += p * x * y;
    }
  }
  mx /= m0, my /= m0;
  const double vx = mxx / m0 - mx * mx, vy = myy / m0 - my * my, cxy = mxy / m0 - mx * my;
  EXPECT_NEAR(mx, ca, 1e-10);
  EXPECT_NEAR(my, ca - cb, 1e-10);
  EXPECT_NEAR(vx, sa * sa / 2, 1e-10);
  EXPECT_NEAR(vy, (sa * sa + sb * sb) / 2, 1e-10);
  EXPECT_NEAR(cxy / std::sqrt(vx * vy), sa / std::sqrt(sa * sa + sb * sb), 1e-9);
}

TEST(CxGate, PointLikeReferencePinsTheSignalLine) {
  const double w0 = 0.5;
  const auto psi = cx_gate(gaussian_state(kGrid, w0, 0.05), gaussian_state(kGrid, 0.0, 0.8));
  const auto& g = psi.grid();
  const auto& a = psi.branches().front().amplitude;
  double off = 0.0, total = 0.0;
  for (std::size_t r = 0; r < g.size(); ++r) {
    const double p = a.row(static_cast<Eigen::Index>(r)).squaredNorm();
    total += p;
    if (std::abs(g.point(r) - w0) > 0.4) off += p;
  }
  EXPECT_LT(off / total, 1e-12);
}

TEST(ApplyShifts, NullShiftIsExactIdentity) {
  const auto psi = frequency_beam_splitter(gaussian_state(kGrid, 0.0, 1.0), gaussian_state(kGrid, 0.2, 0.7, 0.3));
  const auto same = apply_shifts(psi, 0.0, 0.0, Port::Idler);
  EXPECT_EQ((same.branches().front().amplitude - psi.branches().front().amplitude).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ApplyShifts, TimeShiftsAddAndKeepModulus) {
  const auto psi = frequency_beam_splitter(gaussian_state(kGrid, 0.0, 1.0), gaussian_state(kGrid, 0.2, 0.7, 0.3));
  for (Port port : {Port::Signal, Port::Idler}) {
    const auto two = apply_shifts(apply_shifts(psi, 0.4, 0.0, port), 0.9, 0.0, port);
    const auto one = apply_shifts(psi, 1.3, 0.0, port);
    EXPECT_LT((two.branches().front().amplitude - one.branches().front().amplitude).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((one.branches().front().amplitude.cwiseAbs() - psi.branches().front().amplitude.cwiseAbs()).cwiseAbs().maxCoeff(),
              1e-14);
  }
}

TEST(ApplyShifts, FrequencyShiftPreservesNormAndTranslates) {
  const auto psi = frequency_beam_splitter(gaussian_state(kGrid, 0.0, 1.0), gaussian_state(kGrid, 0.0, 0.7));
  const auto moved = apply_shifts(psi, 0.0, 0.8, Port::Idler);
  EXPECT_NEAR(moved.norm_squared(), psi.norm_squared(), 1e-10);
  const auto& f = psi.branches().front().evaluator;
  EXPECT_LT(std::abs(moved.branches().front().evaluator(0.3, 0.5) - f(0.3, -0.3)), 1e-14);

  // Sample-only amplitudes go through the band-limited translation.
  const auto& g = psi.grid();
  TwoPhotonAmplitude bare(g, {{1.0, psi.branches().front().amplitude, {}}});
  const double mu = 6 * g.spacing() + 0.37 * g.spacing();
  const auto shifted = apply_shifts(bare, 0.0, mu, Port::Signal);
  EXPECT_NEAR(shifted.norm_squared(), 1.0, 1e-10);
  const auto want = detail::sample_joint(g, [f, mu](double s, double i) { return f(s - mu, i); });
  EXPECT_LT((shifted.branches().front().amplitude - want).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_THROW(apply_shifts(bare, 0.0, 0.45 * g.span(), Port::Signal), PreconditionError);
}

TEST(HomCoincidence, SymmetryLimits) {
  const auto g = make_grid(128, 0.0, 16.0);
  auto a = [](double w) { return cplx(std::exp(-(w - 1.0) * (w - 1.0) / 2)); };
  auto b = [](double w) { return cplx(std::exp(-(w + 1.0) * (w + 1.0) / 2), 0.0) * std::polar(1.0, 0.3 * w); };
  const Eigen::MatrixXcd ab = outer(g, a, b);
  EXPECT_NEAR(hom_coincidence(from_matrix(g, ab + ab.transpose())).probability, 0.0, 1e-8);
  EXPECT_NEAR(hom_coincidence(from_matrix(g, ab - ab.transpose())).probability, 1.0, 1e-8);
  auto far = [](double w) { return cplx(std::exp(-(w + 4.0) * (w + 4.0) / 0.5)); };
  EXPECT_NEAR(hom_coincidence(from_matrix(g, outer(g, a, far))).probability, 0.5, 1e-6);
}

TEST(HomCoincidence, UnnormalizedInputIsRejected) {
  const auto g = make_grid(64, 0.0, 12.0);
  auto a = [](double w) { return cplx(std::exp(-w * w / 2)); };
  Eigen::MatrixXcd m = outer(g, a, a);
  TwoPhotonAmplitude raw(g, {{1.0, m, {}}});
  EXPECT_THROW(hom_coincidence(raw), PreconditionError);
}

TEST(CoincidenceMap, FreqBsMatchesWignerForPureFamilies) {
  const auto ref = gaussian_state(kGrid, 0.0, 1.0);
  for (const auto& s : {gaussian_state(kGrid, 0.3, 0.8), hermite_gauss_state(kGrid, 1, 0.0, 1.0), gaussian_state(kGrid, 0.0, 1.0, 0.3)}) {
    const auto m = coincidence_map(ref, s, Gate::freq_bs(), kTau, kMu);
    EXPECT_LT(sup(m, closed_form::freq_bs(s, kTau, kMu)), 1e-4);
    EXPECT_TRUE(in_unit_range(m));
    EXPECT_EQ(m.kind, MapKind::CoincidenceMap);
  }
  const auto g = make_grid(512, 0.0, 20.0);
  const auto q = qudit_comb_state(g, 3, 2.0, 0.3, 0.25);
  EXPECT_LT(sup(coincidence_map(gaussian_state(g, 0.0, 1.0), q, Gate::freq_bs(), kTau, kMu), closed_form::freq_bs(q, kTau, kMu)),
            1e-4);
}

TEST(CoincidenceMap, FreqBsDoesNotDependOnTheReference) {
  const auto s = gaussian_state(kGrid, 0.2, 0.9, 0.25);
  const auto gauss = gaussian_state(kGrid, 0.0, 1.0);
  const auto cos2 = PureState::from_function(kGrid, hamming_window(kGrid, 6.0).evaluator(), false);
  EXPECT_LT(sup(coincidence_map(gauss, s, Gate::freq_bs(), kTau, kMu), coincidence_map(cos2, s, Gate::freq_bs(), kTau, kMu)), 1e-4);
}

TEST(CoincidenceMap, HomLimitsAtTheOrigin) {
  const Axis zero = Axis::linspace(-1.0, 1.0, 3);
  const auto ref = gaussian_state(kGrid, 0.0, 1.0);
  EXPECT_LT(coincidence_map(ref, gaussian_state(kGrid, 0.0, 1.0), Gate::freq_bs(), zero, zero)(1, 1), 1e-6);
  EXPECT_NEAR(coincidence_map(ref, hermite_gauss_state(kGrid, 1, 0.0, 1.0), Gate::freq_bs(), zero, zero)(1, 1), 1.0, 1e-6);
  // Detuned far beyond the state width: W(mu, 0) vanishes.
  const Axis far = Axis::linspace(-6.0, 6.0, 3);
  const auto m = coincidence_map(ref, gaussian_state(kGrid, 0.0, 0.5), Gate::freq_bs(), zero, far);
  EXPECT_NEAR(m(1, 0), 0.5, 1e-6);
  EXPECT_NEAR(m(1, 2), 0.5, 1e-6);
}

TEST(CoincidenceMap, MixtureMatchesDensityWigner) {
  const auto ref = gaussian_state(kGrid, 0.0, 1.0);
  const auto mix = mix_states({0.5, 0.5}, {gaussian_state(kGrid, -1.5, 0.5), gaussian_state(kGrid, 1.5, 0.5)});
  const auto m = coincidence_map(ref, mix, Gate::freq_bs(), kTau, kMu);
  EXPECT_LT(sup(m, closed_form::freq_bs(mix, kTau, kMu)), 1e-4);
  EXPECT_TRUE(in_unit_range(m));
}

TEST(CoincidenceMap, FringeVisibilitySeparatesPureFromMixed) {
  const auto ref = gaussian_state(kGrid, 0.0, 1.0);
  const auto a = gaussian_state(kGrid, -2.0, 0.5);
  const auto b = gaussian_state(kGrid, 2.0, 0.5);
  const Axis tau = Axis::linspace(-0.8, 0.8, 21);
  const Axis mu = Axis::linspace(-0.5, 0.5, 3);
  const auto pure = coincidence_map(ref, superposition({1.0, 1.0}, {a, b}), Gate::freq_bs(), tau, mu);
  const auto mixed = coincidence_map(ref, mix_states({0.5, 0.5}, {a, b}), Gate::freq_bs(), tau, mu);
  EXPECT_GT(fringe_visibility(pure, 1), 0.9);
  EXPECT_LT(fringe_visibility(mixed, 1), 1e-3);
}

TEST(CoincidenceMap, ShiftThenFilterMatchesPseudoWigner) {
  const auto ref = gaussian_state(kGrid, 0.0, 1.0);
  const auto s = gaussian_state(kGrid, 0.2, 1.0, 0.3);
  const auto f = hamming_window(kGrid, 4.0);
  CoincidenceOptions opt;
  opt.pre_filter = f;
  const auto m = coincidence_map(ref, s, Gate::freq_bs(), kTau, kMu, opt);
  EXPECT_LT(sup(m, closed_form::filtered(s, f, kTau, kMu)), 1e-4);
  EXPECT_TRUE(m.metadata.contains("filter_transmission"));
  EXPECT_THROW(coincidence_map(ref, s, Gate::none(), kTau, kMu, CoincidenceOptions{f, true, std::nullopt}), InvalidArgument);
}

TEST(CoincidenceMap, NoGateGivesSpectrogram) {
  const auto s = gaussian_state(kGrid, 0.2, 1.0, 0.3);
  const auto win = PureState::from_function(kGrid, hamming_window(kGrid, 6.0).evaluator(), false);
  const auto m = coincidence_map(win, s, Gate::none(), kTau, kMu);
  EXPECT_LT(sup(m, closed_form::no_gate(s, win, kTau, kMu)), 1e-4);
  EXPECT_TRUE(in_unit_range(m));
}

TEST(CoincidenceMap, NoGateMapDependsOnTheReference) {
  const auto two_peak = superposition({1.0, 1.0}, {gaussian_state(kGrid, -1.5, 0.5), gaussian_state(kGrid, 1.5, 0.5)});
  const auto narrow = PureState::from_function(kGrid, hamming_window(kGrid, 2.0).evaluator(), false);
  const auto wide = PureState::from_function(kGrid, hamming_window(kGrid, 6.0).evaluator(), false);
  EXPECT_GT(sup(coincidence_map(narrow, two_peak, Gate::none(), kTau, kMu), coincidence_map(wide, two_peak, Gate::none(), kTau, kMu)),
            1e-2);
}

TEST(CoincidenceMap, CxMatchesWeightedPseudoWigner) {
  const auto s = gaussian_state(kGrid, 0.2, 1.0, 0.3);
  for (const auto& ref : {gaussian_state(kGrid, 0.0, 1.0),
                          PureState::from_function(kGrid, [](double w) { return cplx(std::exp(-w * w / 2) * (1.0 + 0.5 * w * w)); })}) {
    const auto rc = decompose_reference_correlation(ref);
    EXPECT_LT(sup(coincidence_map(ref, s, Gate::cx(), kTau, kMu), closed_form::cx(s, rc, kTau, kMu)), 1e-4);
  }
}

TEST(ReferenceCorrelation, GaussianIsRankOne) {
  const auto rc = decompose_reference_correlation(gaussian_state(kGrid, 0.0, 1.0));
  ASSERT_EQ(rc.weights.size(), 1u);
  EXPECT_NEAR(rc.weights[0], 1.0, 1e-12);
  EXPECT_GT(rc.alpha[0], 0.0);
  const auto rich = decompose_reference_correlation(
      PureState::from_function(kGrid, [](double w) { return cplx(std::exp(-w * w / 2) * (1.0 + 0.5 * w * w)); }));
  EXPECT_GT(rich.weights.size(), 1u);
  // A(w) = int phi(p + w/2) conj(phi(p - w/2)) dp; for the unit Gaussian it is exp(-w^2/4).
  const auto unit = decompose_reference_correlation(gaussian_state(kGrid, 0.0, 1.0));
  for (double w : {0.0, 0.7, 1.9}) EXPECT_NEAR(std::abs(unit.autocorrelation(w)), std::exp(-w * w / 4), 1e-8);
}

TEST(GateKernel, DecompositionInvariants) {
  const auto gp = make_grid(96, 0.0, 16.0), gm = make_grid(96, 0.0, 16.0);
  const auto k = GateKernel::from_function(gp, gm, [](double a, double b) { return cplx(std::exp(-a * a / 8 - b * b / 18) * (1.0 + 0.3 * a * b)); }, 1e-10);
  const auto& d = k.decomposition();
  ASSERT_EQ(d.weights.size(), 2u);
  EXPECT_GE(d.weights[0], d.weights[1]);
  double total = 0.0;
  for (double w : d.weights) total += w;
  EXPECT_NEAR(total, 1.0, 1e-12);
  Eigen::MatrixXcd rebuilt = Eigen::MatrixXcd::Zero(k.matrix().rows(), k.matrix().cols());
  for (std::size_t j = 0; j < d.weights.size(); ++j) {
    for (std::size_t n = 0; n < gp.size(); ++n) {
      for (std::size_t m = 0; m < gm.size(); ++m) {
        rebuilt(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) += d.scale * d.weights[j] * d.first[j].samples()[n] * d.second[j].samples()[m];
      }
    }
  }
  EXPECT_LT((rebuilt - k.matrix()).cwiseAbs().maxCoeff(), 1e-8);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t l = 0; l < 2; ++l) {
      cplx o1{}, o2{};
      for (std::size_t n = 0; n < gp.size(); ++n) o1 += std::conj(d.first[j].samples()[n]) * d.first[l].samples()[n];
      for (std::size_t n = 0; n < gm.size(); ++n) o2 += std::conj(d.second[j].samples()[n]) * d.second[l].samples()[n];
      EXPECT_LT(std::abs(o1 * gp.spacing() - (j == l ? 1.0 : 0.0)), 1e-10);
      EXPECT_LT(std::abs(o2 * gm.spacing() - (j == l ? 1.0 : 0.0)), 1e-10);
    }
  }
}

TEST(FiniteBandwidth, UnitKernelIsTheFrequencyBeamSplitter) {
  const auto ref = gaussian_state(kGrid, 0.0, 1.0);
  const auto s = gaussian_state(kGrid, 0.2, 0.8, 0.3);
  const auto unit = GateKernel::separable([](double) { return cplx(1.0); }, [](double) { return cplx(1.0); });
  const auto a = finite_bandwidth_apply(ref, s, unit);
  const auto b = frequency_beam_splitter(ref, s, a.grid());
  EXPECT_LT((a.branches().front().amplitude - b.branches().front().amplitude).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(a.success_probability(), 1.0, 1e-10);
}

TEST(FiniteBandwidth, SeparableKernelMatchesQuadraturedClosedForm) {
  const auto ref = gaussian_state(kGrid, 0.0, 1.0);
  const auto s = gaussian_state(kGrid, 0.2, 0.8, 0.3);
  auto up = [](double w) { return cplx(std::exp(-w * w / 8.0)); };
  auto um = [](double w) { return cplx(std::exp(-w * w / 18.0)); };
  const auto m = coincidence_map(ref, s, Gate::with_kernel(GateKernel::separable(up, um)), kTau, kMu);
  const double beta = quad([&](double w) { return std::norm(ref(w)) * std::norm(up(w)); }, -12, 12);
  const double gamma = quad([&](double w) { return std::norm(s(w)) * std::norm(um(w)); }, -12, 12);
  const double p = m.metadata["success_probability"][0].get<double>();
  EXPECT_NEAR(p, beta * gamma, 1e-8);
  // W of the unnormalized psi U_- is gamma times the W of its normalized version.
  const auto chi = PureState::from_function(kGrid, [&](double w) { return s(w) * um(w); });
  const Eigen::MatrixXd w_raw = gamma * wigner(chi, kTau, kMu).values;
  const Eigen::MatrixXd closed = 0.5 * (1.0 - (kPi * beta / p) * w_raw.array()).matrix();
  EXPECT_LT((m.values - closed).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(FiniteBandwidth, RankTwoKernelMatchesCrossWignerAssembly) {
  const auto ref = gaussian_state(kGrid, 0.0, 1.0);
  const auto s = gaussian_state(kGrid, 0.2, 0.8, 0.3);
  const auto gp = make_grid(128, 0.0, 16.0), gm = make_grid(128, 0.0, 16.0);
  const auto k = GateKernel::from_function(gp, gm, [](double a, double b) { return cplx(std::exp(-a * a / 8 - b * b / 18) * (1.0 + 0.3 * a * b)); }, 1e-10);
  const auto& d = k.decomposition();
  ASSERT_EQ(d.weights.size(), 2u);
  const auto m = coincidence_map(ref, s, Gate::with_kernel(k), kTau, kMu);
  const double p = m.metadata["success_probability"][0].get<double>();
  std::vector<Spectrum> gj;
  for (std::size_t j = 0; j < 2; ++j) {
    const auto c2 = d.second[j];
    gj.push_back(Spectrum::from_function(kGrid, [&, c2](double w) { return s(w) * c2(w); }));
  }
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(kTau.size(), kMu.size());
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t l = 0; l < 2; ++l) {
      const auto c1j = d.first[j], c1l = d.first[l];
      const double bjl_re = quad([&](double w) { return std::norm(ref(w)) * (c1j(w) * std::conj(c1l(w))).real(); }, -8, 8);
      const double bjl_im = quad([&](double w) { return std::norm(ref(w)) * (c1j(w) * std::conj(c1l(w))).imag(); }, -8, 8);
      acc += d.weights[j] * d.weights[l] * cplx(bjl_re, bjl_im) * cross_wigner(gj[j], gj[l], kTau, kMu);
    }
  }
  EXPECT_LT(acc.imag().cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::MatrixXd closed = 0.5 * (1.0 - (d.scale * d.scale / p) * acc.real().array()).matrix();
  EXPECT_LT((m.values - closed).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(FiniteBandwidth, AnnihilatingKernelIsRejected) {
  const auto ref = gaussian_state(kGrid, 0.0, 1.0);
  const auto zero = GateKernel::separable([](double) { return cplx(0.0); }, [](double) { return cplx(1.0); });
  EXPECT_THROW(finite_bandwidth_apply(ref, ref, zero), PreconditionError);
}
