#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "chronoscope/core.hpp"

using namespace chronoscope;

namespace {

double l2_distance(const PureState& a, const PureState& b) {
  double acc = 0.0;
  for (std::size_t n = 0; n < a.grid().size(); ++n) acc += std::norm(a.amplitudes()[n] - b.amplitudes()[n]);
  return std::sqrt(acc * a.grid().spacing());
}

// Closed-form time amplitude of A exp(-x^2/(2 s^2) + i a x^2), x = w - c, for the e^{-iwt} transform.
cplx chirped_gaussian_time(double t, double c, double s, double a) {
  const double amp = std::pow(kPi * s * s, -0.25);
  const cplx alpha(0.5 / (s * s), -a);
  return amp * std::polar(1.0, -c * t) * std::sqrt(kPi / alpha) * std::exp(-t * t / (4.0 * alpha)) / std::sqrt(2.0 * kPi);
}

}  // namespace

TEST(FrequencyGrid, RejectsOddOrTinyCounts) {
  EXPECT_THROW(FrequencyGrid(7, 0.0, 0.1), InvalidArgument);
  EXPECT_THROW(FrequencyGrid(2, 0.0, 0.1), InvalidArgument);
  EXPECT_THROW(FrequencyGrid(8, 0.0, -1.0), InvalidArgument);
  EXPECT_THROW(make_grid(16, 0.0, 0.0), InvalidArgument);
}

TEST(FrequencyGrid, PointsAndDualTimeGrid) {
  const auto g = make_grid(64, 1.5, 16.0);
  EXPECT_DOUBLE_EQ(g.spacing(), 0.25);
  EXPECT_DOUBLE_EQ(g.point(32), 1.5);
  EXPECT_DOUBLE_EQ(g.front(), 1.5 - 8.0);
  EXPECT_NEAR(g.time_spacing(), 2.0 * kPi / 16.0, 1e-15);
  EXPECT_NEAR(g.max_time(), kPi / 0.25, 1e-15);
  EXPECT_EQ(g.nearest_index(1.5 + 0.26), 33u);
  const auto ax = Axis::times(g);
  EXPECT_EQ(ax.size(), 64u);
  EXPECT_NEAR(ax[32], 0.0, 1e-15);
}

TEST(PureState, GaussianIsNormalized) {
  const auto g = make_grid(256, 0.0, 20.0);
  for (double w : {0.4, 1.0, 2.0}) {
    const auto s = gaussian_state(g, 0.7, w, 0.2);
    EXPECT_NEAR(s.spectrum().norm_squared(), 1.0, 1e-12) << "width " << w;
  }
}

TEST(PureState, TruncatedStateIsRejected) {
  const auto g = make_grid(64, 0.0, 6.0);
  EXPECT_THROW(gaussian_state(g, 0.0, 3.0), PreconditionError);
  EXPECT_THROW(gaussian_state(g, 0.0, -1.0), InvalidArgument);
}

TEST(PureState, FromSamplesNormalizesAndRejectsZero) {
  const auto g = make_grid(16, 0.0, 8.0);
  std::vector<cplx> s(16, cplx{});
  EXPECT_THROW(PureState::from_samples(g, s), InvalidArgument);
  s[8] = 3.0;
  const auto p = PureState::from_samples(g, s);
  EXPECT_NEAR(p.spectrum().norm_squared(), 1.0, 1e-14);
}

TEST(HermiteGauss, OrderZeroIsGaussian) {
  const auto g = make_grid(256, 0.0, 20.0);
  EXPECT_LT(l2_distance(hermite_gauss_state(g, 0, 0.3, 1.2), gaussian_state(g, 0.3, 1.2)), 1e-10);
}

TEST(HermiteGauss, FamilyIsOrthonormal) {
  const auto g = make_grid(256, 0.0, 24.0);
  for (int m = 0; m < 5; ++m) {
    for (int n = 0; n < 5; ++n) {
      const cplx ip = inner_product(hermite_gauss_state(g, m, 0.0, 1.0), hermite_gauss_state(g, n, 0.0, 1.0));
      EXPECT_NEAR(std::abs(ip), m == n ? 1.0 : 0.0, 1e-10) << m << "," << n;
    }
  }
}

TEST(Qudit, CoefficientsAndNormalization) {
  EXPECT_NEAR(qudit_coefficient(6, 0.1) / qudit_coefficient(0, 0.1), std::exp(-0.18), 1e-15);
  const auto g = make_grid(512, 0.0, 20.0);
  const auto q = qudit_comb_state(g, 3, 2.0, 0.3, 0.25);
  EXPECT_NEAR(q.spectrum().norm_squared(), 1.0, 1e-12);
  // Peak heights follow the coefficients when peaks do not overlap.
  const double r = std::abs(q(4.0)) / std::abs(q(0.0));
  EXPECT_NEAR(r, qudit_coefficient(2, 0.3), 1e-9);
}

TEST(Qudit, OverlappingPeaksWarn) {
  const auto g = make_grid(256, 0.0, 20.0);
  EXPECT_THROW(qudit_comb_state(g, 2, 1.0, 0.1, 0.5), OverlapWarning);
  EXPECT_NO_THROW(qudit_comb_state(g, 2, 1.0, 0.1, 0.5, true));
}

TEST(TimeDomain, ChirpedGaussianMatchesClosedForm) {
  const auto g = make_grid(256, 0.0, 20.0);
  const double c = 0.5, s = 1.0, a = 0.3;
  const auto psi = gaussian_state(g, c, s, a);
  const auto ta = to_time_domain(psi);
  double err = 0.0;
  for (std::size_t k = 0; k < ta.samples.size(); ++k) {
    err = std::max(err, std::abs(ta.samples[k] - chirped_gaussian_time(ta.time[k], c, s, a)));
  }
  EXPECT_LT(err, 1e-10);
  EXPECT_LT(std::abs(time_amplitude_at(psi, 1.234) - chirped_gaussian_time(1.234, c, s, a)), 1e-10);
}

TEST(TimeDomain, ParsevalAndRoundTrip) {
  const auto g = make_grid(128, 0.3, 16.0);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  std::vector<cplx> v(g.size());
  for (auto& x : v) x = {n01(rng), n01(rng)};
  const auto psi = PureState::from_samples(g, v);
  const auto ta = to_time_domain(psi);
  double p = 0.0;
  for (const auto& x : ta.samples) p += std::norm(x);
  EXPECT_NEAR(p * ta.time.step(), 1.0, 1e-12);
  EXPECT_LT(l2_distance(from_time_domain(ta, g), psi), 1e-12);
}

TEST(TimeDomain, ShiftsActAsExpected) {
  const auto g = make_grid(256, 0.0, 20.0);
  const auto psi = gaussian_state(g, 0.2, 1.0, 0.1);
  const double tau = 1.7;
  const auto moved = psi.time_shifted(tau);
  for (double t : {-1.0, 0.4, 2.5}) {
    EXPECT_LT(std::abs(time_amplitude_at(moved, t) - time_amplitude_at(psi, t - tau)), 1e-10);
  }
  const auto up = psi.frequency_shifted(0.8);
  for (double w : {-1.0, 0.3, 1.9}) EXPECT_LT(std::abs(up(w) - psi(w - 0.8)), 1e-9);
  // The frequency shift is a pure phase ramp in time; the modulus is unchanged.
  for (double t : {-2.0, 0.0, 1.1}) {
    EXPECT_NEAR(std::abs(time_amplitude_at(up, t)), std::abs(time_amplitude_at(psi, t)), 1e-9);
  }
}

TEST(Spectrum, SampledEvaluatorInterpolatesBandLimitedSignals) {
  const auto g = make_grid(256, 0.0, 20.0);
  const auto psi = gaussian_state(g, 0.5, 1.0, 0.3);
  const auto sampled = PureState::from_samples(g, psi.amplitudes());
  EXPECT_FALSE(sampled.has_analytic());
  double node = 0.0, off = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) node = std::max(node, std::abs(sampled(g.point(n)) - psi.amplitudes()[n]));
  for (double w = -5.0; w < 5.0; w += 0.0137) off = std::max(off, std::abs(sampled(w) - psi(w)));
  EXPECT_LT(node, 1e-14);
  EXPECT_LT(off, 1e-10);
  EXPECT_EQ(sampled(g.back() + 3.0 * g.spacing()), cplx{});
}

TEST(Fidelity, IgnoresGlobalPhase) {
  const auto g = make_grid(128, 0.0, 16.0);
  const auto a = gaussian_state(g, 0.0, 1.0, 0.2);
  const auto b = PureState::from_samples(g, a.spectrum().scaled(std::polar(1.0, 1.1)).samples());
  EXPECT_NEAR(fidelity(a, b), 1.0, 1e-12);
  // |<g1|g2>| = sqrt(2 s1 s2 / (s1^2 + s2^2)) exp(-d^2 / (2 (s1^2 + s2^2)))
  const double expected = std::sqrt(2.0 * 0.5 / 1.25) * std::exp(-9.0 / 2.5);
  EXPECT_NEAR(fidelity(gaussian_state(g, 0.0, 1.0), gaussian_state(g, 3.0, 0.5)), expected, 1e-12);
}

TEST(Window, EvenRealFlagIsValidated) {
  const auto g = make_grid(64, 0.0, 8.0);
  EXPECT_THROW(Window::from_function(g, [](double w) -> cplx { return std::exp(-(w - 0.5) * (w - 0.5)); }, true),
               InvalidArgument);
  const auto h = hamming_window(g, 4.0);
  EXPECT_NEAR(h(0.0).real(), 1.0, 1e-15);
  EXPECT_EQ(h(2.01), cplx{});
  EXPECT_NEAR(h(1.0).real(), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(h.half_support(), 2.0);
}

TEST(Window, HammingSamplesAreSinSquared) {
  const auto s = hamming_samples(8);
  ASSERT_EQ(s.size(), 9u);
  EXPECT_NEAR(s[0], 0.0, 1e-15);
  EXPECT_NEAR(s[4], 1.0, 1e-15);
  EXPECT_NEAR(s[2], 0.5, 1e-15);
}

TEST(MixedState, OrthogonalMixtureHasPurityOneHalf) {
  const auto g = make_grid(256, 0.0, 20.0);
  const auto m = mix_states({0.5, 0.5}, {gaussian_state(g, -3.0, 0.5), gaussian_state(g, 3.0, 0.5)});
  EXPECT_NEAR(m.trace(), 1.0, 1e-12);
  EXPECT_NEAR(m.purity(), 0.5, 1e-10);
  EXPECT_EQ(m.branches().size(), 2u);
}

TEST(MixedState, PureInputGivesRankOneKernel) {
  const auto g = make_grid(128, 0.0, 16.0);
  const auto s = gaussian_state(g, 0.5, 1.0, 0.3);
  const auto m = MixedState::from_pure(s);
  EXPECT_NEAR(m.purity(), 1.0, 1e-8);
  ASSERT_EQ(m.branches().size(), 1u);
  EXPECT_NEAR(fidelity(s, m.branches()[0].state), 1.0, 1e-10);
  const auto k = MixedState::from_kernel(g, m.kernel());
  EXPECT_EQ(k.branches().size(), 1u);
}

TEST(MixedState, InvalidKernelsAreRejected) {
  const auto g = make_grid(16, 0.0, 8.0);
  Eigen::MatrixXcd k = Eigen::MatrixXcd::Identity(16, 16);
  EXPECT_THROW(MixedState::from_kernel(g, k * 3.0), InvalidArgument);  // trace 1.5
  EXPECT_THROW(mix_states({0.5, 0.6}, {gaussian_state(make_grid(64, 0, 16), 0, 1), gaussian_state(make_grid(64, 0, 16), 1, 1)}),
               InvalidArgument);
}

TEST(Superposition, IsNormalized) {
  const auto g = make_grid(256, 0.0, 20.0);
  const auto s = superposition({1.0, cplx(0.0, 1.0)}, {gaussian_state(g, -2.0, 0.5), gaussian_state(g, 2.0, 0.5)});
  EXPECT_NEAR(s.spectrum().norm_squared(), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(s(-2.0)), std::abs(s(2.0)), 1e-12);
}
