#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "chronoscope/core.hpp"
#include "chronoscope/interferometer.hpp"
#include "chronoscope/io.hpp"
#include "chronoscope/phase_space.hpp"
#include "chronoscope/retrieval.hpp"
#include "json.hpp"

namespace chronoscope::scenario {

namespace fs = std::filesystem;
using nlohmann::json;

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"wigner", "pseudo_wigner", "spectrogram", "hom_map",
                                              "retrieve", "reconstruct", "figure3"};
  return names;
}

inline constexpr std::size_t kMinAxis = 8;
inline constexpr std::size_t kMaxAxis = 8192;
inline constexpr double kCheckTolerance = 1e-4;

// ---- config parsing -------------------------------------------------------------------------

namespace detail {

inline const json& need(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(ctx + ": missing '" + key + "'");
  return j.at(key);
}

inline double num(const json& j, const std::string& key, const std::string& ctx) {
  const json& v = need(j, key, ctx);
  if (!v.is_number()) throw ConfigError(ctx + "." + key + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(ctx + "." + key + " must be finite");
  return d;
}

inline double num_or(const json& j, const std::string& key, double def, const std::string& ctx) {
  return j.contains(key) ? num(j, key, ctx) : def;
}

inline long long integer(const json& j, const std::string& key, const std::string& ctx) {
  const json& v = need(j, key, ctx);
  if (!v.is_number_integer()) throw ConfigError(ctx + "." + key + " must be an integer");
  return v.get<long long>();
}

inline long long integer_or(const json& j, const std::string& key, long long def, const std::string& ctx) {
  return j.contains(key) ? integer(j, key, ctx) : def;
}

inline std::string str(const json& j, const std::string& key, const std::string& ctx) {
  const json& v = need(j, key, ctx);
  if (!v.is_string()) throw ConfigError(ctx + "." + key + " must be a string");
  return v.get<std::string>();
}

inline void only_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(ctx + ": unknown key '" + k + "'");
  }
}

inline std::size_t count_in_range(long long n, const std::string& ctx) {
  if (n < static_cast<long long>(kMinAxis) || n > static_cast<long long>(kMaxAxis)) {
    throw ConfigError(ctx + " = " + std::to_string(n) + " is outside [8, 8192]");
  }
  return static_cast<std::size_t>(n);
}

}  // namespace detail

inline FrequencyGrid parse_grid(const json& j, const std::string& ctx) {
  detail::only_keys(j, {"count", "center", "span"}, ctx);
  const auto n = detail::count_in_range(detail::integer(j, "count", ctx), ctx + ".count");
  if (n % 2) throw ConfigError(ctx + ".count must be even");
  const double span = detail::num(j, "span", ctx);
  if (!(span > 0.0)) throw ConfigError(ctx + ".span must be positive");
  return make_grid(n, detail::num_or(j, "center", 0.0, ctx), span);
}

// {"start", "stop", "count"}, or the string "dual" for the dual time grid of `dual_of`.
inline Axis parse_axis(const json& j, const std::string& ctx, const FrequencyGrid* dual_of = nullptr,
                       bool frequency = false) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "dual" && dual_of && !frequency) return Axis::times(*dual_of);
    if (s == "grid" && dual_of && frequency) return Axis::frequencies(*dual_of);
    throw ConfigError(ctx + ": unsupported axis shorthand '" + s + "'");
  }
  detail::only_keys(j, {"start", "stop", "count"}, ctx);
  const auto n = detail::count_in_range(detail::integer(j, "count", ctx), ctx + ".count");
  const double a = detail::num(j, "start", ctx);
  const double b = detail::num(j, "stop", ctx);
  if (!(b > a)) throw ConfigError(ctx + ": stop must exceed start");
  return Axis::linspace(a, b, n);
}

using Target = std::variant<PureState, MixedState>;

inline PureState parse_pure(const json& j, const fs::path& base, const std::string& ctx);

inline Target parse_state(const json& j, const fs::path& base, const std::string& ctx) {
  if (j.is_object() && j.contains("family") && j.at("family") == "mixture") {
    detail::only_keys(j, {"family", "weights", "states"}, ctx);
    const json& w = detail::need(j, "weights", ctx);
    const json& s = detail::need(j, "states", ctx);
    if (!w.is_array() || !s.is_array() || w.size() != s.size() || w.empty()) {
      throw ConfigError(ctx + ": weights and states must be arrays of equal, nonzero length");
    }
    std::vector<double> weights;
    std::vector<PureState> states;
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (!w[k].is_number() || !(w[k].get<double>() >= 0.0)) throw ConfigError(ctx + ".weights must be non-negative numbers");
      weights.push_back(w[k].get<double>());
      states.push_back(parse_pure(s[k], base, ctx + ".states[" + std::to_string(k) + "]"));
    }
    for (const auto& st : states) {
      if (!(st.grid() == states.front().grid())) throw ConfigError(ctx + ": mixture components must share one grid");
    }
    return mix_states(weights, states);
  }
  return parse_pure(j, base, ctx);
}

inline PureState parse_pure(const json& j, const fs::path& base, const std::string& ctx) {
  const std::string family = detail::str(j, "family", ctx);
  if (family == "file") {
    detail::only_keys(j, {"family", "path"}, ctx);
    const fs::path p = base / detail::str(j, "path", ctx);
    if (!fs::exists(p)) throw ConfigError(ctx + ": file '" + p.string() + "' does not exist");
    return io::read_state_csv(p);
  }
  const FrequencyGrid g = parse_grid(detail::need(j, "grid", ctx), ctx + ".grid");
  if (family == "gaussian") {
    detail::only_keys(j, {"family", "grid", "center", "width", "chirp"}, ctx);
    const double w = detail::num(j, "width", ctx);
    if (!(w > 0.0)) throw ConfigError(ctx + ".width must be positive");
    return gaussian_state(g, detail::num_or(j, "center", 0.0, ctx), w, detail::num_or(j, "chirp", 0.0, ctx));
  }
  if (family == "hermite_gauss") {
    detail::only_keys(j, {"family", "grid", "order", "center", "width"}, ctx);
    const auto order = detail::integer(j, "order", ctx);
    if (order < 0 || order > 40) throw ConfigError(ctx + ".order must be in [0, 40]");
    const double w = detail::num_or(j, "width", 1.0, ctx);
    if (!(w > 0.0)) throw ConfigError(ctx + ".width must be positive");
    return hermite_gauss_state(g, static_cast<int>(order), detail::num_or(j, "center", 0.0, ctx), w);
  }
  if (family == "qudit_comb") {
    detail::only_keys(j, {"family", "grid", "half_d", "spacing", "kappa", "peak_width"}, ctx);
    const auto half_d = detail::integer(j, "half_d", ctx);
    if (half_d < 0 || half_d > 64) throw ConfigError(ctx + ".half_d must be in [0, 64]");
    const double spacing = detail::num(j, "spacing", ctx);
    const double width = detail::num(j, "peak_width", ctx);
    if (!(spacing > 0.0) || !(width > 0.0)) throw ConfigError(ctx + ": spacing and peak_width must be positive");
    return qudit_comb_state(g, static_cast<int>(half_d), spacing, detail::num(j, "kappa", ctx), width);
  }
  if (family == "samples") {
    detail::only_keys(j, {"family", "grid", "re", "im"}, ctx);
    const json& re = detail::need(j, "re", ctx);
    const json& im = detail::need(j, "im", ctx);
    if (!re.is_array() || !im.is_array() || re.size() != g.size() || im.size() != g.size()) {
      throw ConfigError(ctx + ": re and im must list one value per grid point");
    }
    std::vector<cplx> s(g.size());
    for (std::size_t n = 0; n < g.size(); ++n) {
      if (!re[n].is_number() || !im[n].is_number()) throw ConfigError(ctx + ": samples must be numbers");
      s[n] = {re[n].get<double>(), im[n].get<double>()};
    }
    return PureState::from_samples(g, std::move(s));
  }
  throw ConfigError(ctx + ": unknown state family '" + family + "'");
}

inline Window parse_window(const json& j, const FrequencyGrid& g, const std::string& ctx) {
  const std::string type = detail::str(j, "type", ctx);
  if (type == "hamming" || type == "rectangular") {
    detail::only_keys(j, {"type", "span"}, ctx);
    const double span = detail::num(j, "span", ctx);
    if (!(span > 0.0)) throw ConfigError(ctx + ".span must be positive");
    return type == "hamming" ? hamming_window(g, span) : rectangular_window(g, span);
  }
  if (type == "gaussian") {
    detail::only_keys(j, {"type", "width"}, ctx);
    const double w = detail::num(j, "width", ctx);
    if (!(w > 0.0)) throw ConfigError(ctx + ".width must be positive");
    return gaussian_window(g, w);
  }
  throw ConfigError(ctx + ": unknown window type '" + type + "'");
}

// Kernels are Gaussian in w+ and w-; a nonzero coupling adds (1 + c w+ w-) and forces the general path.
inline GateKernel parse_kernel(const json& j, const std::string& ctx) {
  detail::only_keys(j, {"plus_width", "minus_width", "coupling", "grid"}, ctx);
  const double a = detail::num(j, "plus_width", ctx);
  const double b = detail::num(j, "minus_width", ctx);
  if (!(a > 0.0) || !(b > 0.0)) throw ConfigError(ctx + ": kernel widths must be positive");
  const double c = detail::num_or(j, "coupling", 0.0, ctx);
  auto plus = [a](double w) { return cplx(std::exp(-0.5 * w * w / (a * a))); };
  auto minus = [b](double w) { return cplx(std::exp(-0.5 * w * w / (b * b))); };
  if (c == 0.0 && !j.contains("grid")) return GateKernel::separable(plus, minus);
  const FrequencyGrid g = parse_grid(detail::need(j, "grid", ctx), ctx + ".grid");
  return GateKernel::from_function(g, g, [plus, minus, c](double p, double m) { return plus(p) * minus(m) * (1.0 + c * p * m); },
                                   1e-10);
}

inline Gate parse_gate(const json& j, const std::string& ctx, std::optional<Window>& pre_filter, const FrequencyGrid& g) {
  detail::only_keys(j, {"type", "pre_filter", "kernel"}, ctx);
  const std::string type = detail::str(j, "type", ctx);
  if (j.contains("pre_filter")) {
    if (type != "freq_bs") throw ConfigError(ctx + ": pre_filter is only supported with the freq_bs gate");
    pre_filter = parse_window(j.at("pre_filter"), g, ctx + ".pre_filter");
  }
  if (type == "freq_bs") return Gate::freq_bs();
  if (type == "cx") return Gate::cx();
  if (type == "none") return Gate::none();
  if (type == "kernel") return Gate::with_kernel(parse_kernel(detail::need(j, "kernel", ctx), ctx + ".kernel"));
  throw ConfigError(ctx + ": unknown gate type '" + type + "'");
}

// ---- results ----------------------------------------------------------------------------------

struct CheckItem {
  std::string name;
  double value;
  double limit;
  bool passed;
};

struct Outcome {
  std::vector<std::string> files;  // relative to the output directory
  json summary = json::object();
  std::vector<CheckItem> checks;
};

struct RunOptions {
  fs::path out_dir = "chronoscope_out";
  std::optional<std::uint64_t> seed;
  bool check = false;
  fs::path config_dir = ".";
};

struct Manifest {
  json document;
  bool check_passed = true;
};

namespace detail {

inline void add_check(Outcome& o, std::string name, double value, double limit, bool less = true) {
  const bool ok = std::isfinite(value) && (less ? value < limit : value > limit);
  o.checks.push_back({std::move(name), value, limit, ok});
}

// Points of `a` with stride so that at most `max_points` remain; the returned axis reuses them.
inline std::pair<Axis, std::size_t> thinned(const Axis& a, std::size_t max_points = 21) {
  if (a.size() <= max_points) return {a, 1};
  const std::size_t stride = (a.size() - 1 + max_points - 2) / (max_points - 1);
  return {Axis(a.start(), a.step() * static_cast<double>(stride), (a.size() - 1) / stride + 1), stride};
}

inline void emit_map(Outcome& o, const fs::path& dir, const std::string& stem, const PhaseSpaceMap& m) {
  io::write_map_csv(dir / (stem + ".csv"), m);
  io::write_pgm(dir / (stem + ".pgm"), m);
  o.files.push_back(stem + ".csv");
  o.files.push_back(stem + ".pgm");
  o.files.push_back(stem + ".pgm.json");
}

inline PureState require_pure(const Target& t, const std::string& what) {
  if (const auto* p = std::get_if<PureState>(&t)) return *p;
  throw ConfigError(what + " must be a pure state for this scenario");
}

inline const FrequencyGrid& grid_of(const Target& t) {
  return std::visit([](const auto& s) -> const FrequencyGrid& { return s.grid(); }, t);
}

inline PureState default_reference(const FrequencyGrid& g) { return gaussian_state(g, g.center(), g.span() / 16.0); }

}  // namespace detail

// ---- Fig. 3 model ----------------------------------------------------------------------------

struct Figure3Analysis {
  std::size_t resolution = 0;
  std::vector<double> ridges;  // ridge centers in units of the comb spacing
  double max_offset_bins = 0.0;
  bool on_comb = false;
  double fwhm_mu = 0.0;     // central ridge, mu-marginal
  double tau_extent = 0.0;  // central ridge, FWHM along tau
  double ratio = 0.0;       // ridge n = half_d over ridge n = 0
  double expected_ratio = 0.0;
};

struct Figure3Run {
  PhaseSpaceMap spectrogram;
  std::vector<double> omega;  // normalized by the comb spacing
  std::vector<double> intensity;
  Figure3Analysis analysis;
};

namespace detail {

// Interpolated full width at half maximum around index k0.
inline double fwhm(const std::vector<double>& v, std::size_t k0, double step) {
  const double half = 0.5 * v[k0];
  std::size_t l = k0;
  while (l > 0 && v[l - 1] > half) --l;
  std::size_t r = k0;
  while (r + 1 < v.size() && v[r + 1] > half) ++r;
  double left = static_cast<double>(l);
  if (l > 0) left -= (v[l] - half) / (v[l] - v[l - 1]);
  double right = static_cast<double>(r);
  if (r + 1 < v.size()) right += (v[r] - half) / (v[r] - v[r + 1]);
  return (right - left) * step;
}

}  // namespace detail

// Comb spacing 1, frequency span 16 spacings; N sets the resolution and each comb line spans
// two bins. The window span is given in comb spacings.
inline Figure3Run figure3_model(std::size_t resolution, double kappa = 0.1, int half_d = 6, double window_span = 1.0) {
  if (resolution != 256 && resolution != 1024) {
    throw InvalidArgument("figure3 supports N = 256 or 1024, got " + std::to_string(resolution));
  }
  if (!(window_span > 0.0)) throw InvalidArgument("window span must be positive");
  const double delta = 1.0;
  const double span = 16.0 * delta;
  if (half_d < 1 || half_d > 7) throw InvalidArgument("half_d must keep the comb inside the 16-spacing span (1..7)");
  const auto g = make_grid(resolution, 0.0, span);
  const PureState psi = qudit_comb_state(g, half_d, delta, kappa, 2.0 * span / static_cast<double>(resolution));
  const Window win = hamming_window(g, window_span * delta);
  Figure3Run run;
  run.spectrogram = spectrogram(psi, win, Axis::times(g), Axis::frequencies(g));
  run.spectrogram.metadata["normalized_frequency"] = "omega / comb spacing";
  run.spectrogram.metadata["resolution"] = resolution;
  for (std::size_t n = 0; n < g.size(); ++n) {
    run.omega.push_back(g.point(n) / delta);
    run.intensity.push_back(std::norm(psi.amplitudes()[n]));
  }

  const auto& s = run.spectrogram;
  const auto& mu = s.freq_axis;
  std::vector<double> marg(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) marg[j] = s.values.col(static_cast<Eigen::Index>(j)).sum() * s.time_axis.step();
  const double mmax = *std::max_element(marg.begin(), marg.end());
  auto& a = run.analysis;
  a.resolution = resolution;
  std::vector<std::size_t> peaks;
  for (std::size_t j = 1; j + 1 < marg.size(); ++j) {
    if (marg[j] > marg[j - 1] && marg[j] >= marg[j + 1] && marg[j] > 0.02 * mmax) peaks.push_back(j);
  }
  a.on_comb = !peaks.empty();
  for (auto j : peaks) {
    const double x = mu[j] / delta;
    a.ridges.push_back(x);
    const double off = std::abs(mu[j] - std::round(x) * delta) / mu.step();
    a.max_offset_bins = std::max(a.max_offset_bins, off);
    if (off > 1.0 || std::abs(std::round(x)) > half_d) a.on_comb = false;
  }
  const std::size_t j0 = mu.nearest_index(0.0);
  const std::size_t jd = mu.nearest_index(half_d * delta);
  a.fwhm_mu = detail::fwhm(marg, j0, mu.step());
  std::vector<double> col(s.time_axis.size());
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j0));
  a.tau_extent = detail::fwhm(col, s.time_axis.nearest_index(0.0), s.time_axis.step());
  a.ratio = marg[jd] / marg[j0];
  const double c = qudit_coefficient(half_d, kappa) / qudit_coefficient(0, kappa);
  a.expected_ratio = c * c;
  return run;
}

inline json to_json(const Figure3Analysis& a) {
  return {{"resolution", a.resolution},         {"ridge_count", a.ridges.size()}, {"ridges", a.ridges},
          {"max_offset_bins", a.max_offset_bins}, {"on_comb", a.on_comb},         {"fwhm_mu", a.fwhm_mu},
          {"tau_extent", a.tau_extent},         {"ridge_ratio", a.ratio},       {"expected_ratio", a.expected_ratio}};
}

// ---- scenarios --------------------------------------------------------------------------------

namespace detail {

inline const std::set<std::string> kCommonKeys{"scenario", "seed"};

inline std::set<std::string> with_common(std::set<std::string> k) {
  k.insert(kCommonKeys.begin(), kCommonKeys.end());
  return k;
}

inline Outcome run_wigner(const json& c, const RunOptions& o) {
  only_keys(c, with_common({"state", "tau", "mu"}), "config");
  const Target t = parse_state(need(c, "state", "config"), o.config_dir, "state");
  const Axis tau = parse_axis(need(c, "tau", "config"), "tau", &grid_of(t));
  const Axis mu = parse_axis(need(c, "mu", "config"), "mu", &grid_of(t), true);
  const PhaseSpaceMap w = std::visit([&](const auto& s) { return wigner(s, tau, mu); }, t);
  Outcome out;
  emit_map(out, o.out_dir, "wigner", w);
  out.summary["integral"] = w.integral();
  out.summary["max_abs"] = w.values.cwiseAbs().maxCoeff();
  if (o.check) {
    const Axis ts = thinned(tau).first;
    const Axis ms = thinned(mu).first;
    const auto ref = default_reference(grid_of(t));
    const PhaseSpaceMap pipe = std::visit([&](const auto& s) { return coincidence_map(ref, s, Gate::freq_bs(), ts, ms); }, t);
    const PhaseSpaceMap closed = std::visit([&](const auto& s) { return closed_form::freq_bs(s, ts, ms); }, t);
    add_check(out, "freq_bs coincidence vs (1 - pi W)/2", (pipe.values - closed.values).cwiseAbs().maxCoeff(), kCheckTolerance);
  }
  return out;
}

inline Outcome run_pseudo_wigner(const json& c, const RunOptions& o) {
  only_keys(c, with_common({"state", "window", "tau", "mu"}), "config");
  const Target t = parse_state(need(c, "state", "config"), o.config_dir, "state");
  const auto& g = grid_of(t);
  const Window f = parse_window(need(c, "window", "config"), g, "window");
  const Axis tau = parse_axis(need(c, "tau", "config"), "tau", &g);
  const Axis mu = parse_axis(need(c, "mu", "config"), "mu", &g, true);
  const PhaseSpaceMap pw = std::visit([&](const auto& s) { return pseudo_wigner(s, f, tau, mu); }, t);
  Outcome out;
  emit_map(out, o.out_dir, "pseudo_wigner", pw);
  out.summary["max_abs"] = pw.values.cwiseAbs().maxCoeff();
  if (o.check) {
    if (!f.even_real()) throw ConfigError("the convolution check needs an even real window");
    const PhaseSpaceMap cw = std::visit([&](const auto& s) { return wigner(s, Axis::times(g), mu); }, t);
    const PhaseSpaceMap conv = pseudo_wigner_by_convolution(cw, f, tau);
    const double scale = std::max(1e-300, pw.values.cwiseAbs().maxCoeff());
    add_check(out, "direct CPW vs CW convolution (relative)", (conv.values - pw.values).cwiseAbs().maxCoeff() / scale, kCheckTolerance);
  }
  return out;
}

inline Outcome run_spectrogram(const json& c, const RunOptions& o) {
  only_keys(c, with_common({"state", "window", "tau", "mu"}), "config");
  const PureState s = require_pure(parse_state(need(c, "state", "config"), o.config_dir, "state"), "state");
  const auto& g = s.grid();
  const Window f = parse_window(need(c, "window", "config"), g, "window");
  const Axis tau = c.contains("tau") ? parse_axis(c.at("tau"), "tau", &g) : Axis::times(g);
  const Axis mu = parse_axis(need(c, "mu", "config"), "mu", &g, true);
  const PhaseSpaceMap sp = spectrogram(s, f, tau, mu);
  Outcome out;
  emit_map(out, o.out_dir, "spectrogram", sp);
  out.summary["integral"] = sp.integral();
  out.summary["clipped_negative"] = sp.metadata.value("clipped_negative", 0.0);
  if (o.check) {
    auto [ts, si] = thinned(tau);
    auto [ms, sj] = thinned(mu);
    const double wn = f.spectrum().norm_squared();
    const PureState ref = PureState::from_function(g, f.evaluator(), false);
    const PhaseSpaceMap pipe = coincidence_map(ref, s, Gate::none(), ts, ms);
    PhaseSpaceMap closed = pipe;
    for (Eigen::Index i = 0; i < closed.values.rows(); ++i) {
      for (Eigen::Index j = 0; j < closed.values.cols(); ++j) {
        closed.values(i, j) = 0.5 * (1.0 - sp.values(i * static_cast<Eigen::Index>(si), j * static_cast<Eigen::Index>(sj)) / wn);
      }
    }
    add_check(out, "no-gate coincidence vs (1 - S)/2", (pipe.values - closed.values).cwiseAbs().maxCoeff(), kCheckTolerance);
  }
  return out;
}

inline Outcome run_hom_map(const json& c, const RunOptions& o) {
  only_keys(c, with_common({"reference", "state", "gate", "tau", "mu"}), "config");
  const Target t = parse_state(need(c, "state", "config"), o.config_dir, "state");
  const auto& g = grid_of(t);
  const PureState ref = c.contains("reference") ? require_pure(parse_state(c.at("reference"), o.config_dir, "reference"), "reference")
                                                : default_reference(g);
  std::optional<Window> filter;
  const Gate gate = parse_gate(need(c, "gate", "config"), "gate", filter, g);
  const Axis tau = parse_axis(need(c, "tau", "config"), "tau", &g);
  const Axis mu = parse_axis(need(c, "mu", "config"), "mu", &g, true);
  CoincidenceOptions opt;
  opt.pre_filter = filter;
  const PhaseSpaceMap m = std::visit([&](const auto& s) { return coincidence_map(ref, s, gate, tau, mu, opt); }, t);
  Outcome out;
  emit_map(out, o.out_dir, "coincidence", m);
  out.summary["gate"] = to_string(gate.type);
  out.summary["min"] = m.values.minCoeff();
  out.summary["max"] = m.values.maxCoeff();
  if (!o.check) return out;
  const auto* pure = std::get_if<PureState>(&t);
  std::optional<PhaseSpaceMap> closed;
  std::string name;
  switch (gate.type) {
    case GateType::FreqBS:
      if (filter) {
        if (pure) closed = closed_form::filtered(*pure, *filter, tau, mu);
        name = "filtered coincidence vs (1 - PW/T)/2";
      } else {
        closed = std::visit([&](const auto& s) { return closed_form::freq_bs(s, tau, mu); }, t);
        name = "freq_bs coincidence vs (1 - pi W)/2";
      }
      break;
    case GateType::None:
      if (pure) closed = closed_form::no_gate(*pure, ref, tau, mu);
      name = "no-gate coincidence vs (1 - S)/2";
      break;
    case GateType::Cx:
      if (pure) closed = closed_form::cx(*pure, decompose_reference_correlation(ref), tau, mu);
      name = "cx coincidence vs dominant-term CPW sum";
      break;
    case GateType::Kernel:
      if (pure && gate.kernel->is_separable()) {
        auto um = gate.kernel->minus();
        auto f = pure->evaluator();
        const PureState chi = PureState::from_function(g, [um, f](double w) { return f(w) * um(w); }, false);
        closed = closed_form::freq_bs(chi, tau, mu);
        name = "separable kernel coincidence vs (1 - pi W_{psi U-})/2";
      }
      break;
  }
  if (!closed) throw ConfigError("--check has no closed form for this state/gate combination");
  add_check(out, name, (m.values - closed->values).cwiseAbs().maxCoeff(), kCheckTolerance);
  return out;
}

inline Outcome run_retrieve(const json& c, const RunOptions& o) {
  only_keys(c, with_common({"state", "spectrogram_file", "window", "window_grid", "mu", "max_iter", "restarts"}), "config");
  std::optional<PureState> truth;
  if (c.contains("state")) truth = require_pure(parse_state(c.at("state"), o.config_dir, "state"), "state");
  if (truth.has_value() == c.contains("spectrogram_file")) throw ConfigError("give exactly one of 'state' or 'spectrogram_file'");
  const FrequencyGrid g = truth ? truth->grid() : parse_grid(need(c, "window_grid", "config"), "window_grid");
  const Window f = parse_window(need(c, "window", "config"), g, "window");
  const auto max_iter = integer_or(c, "max_iter", 200, "config");
  const auto restarts = integer_or(c, "restarts", 5, "config");
  if (max_iter < 1 || max_iter > 100000) throw ConfigError("config.max_iter must be in [1, 100000]");
  if (restarts < 1 || restarts > 64) throw ConfigError("config.restarts must be in [1, 64]");
  PhaseSpaceMap sp;
  if (truth) {
    const Axis mu = parse_axis(need(c, "mu", "config"), "mu", &g, true);
    sp = spectrogram(*truth, f, Axis::times(g), mu);
  } else {
    const fs::path p = o.config_dir / str(c, "spectrogram_file", "config");
    if (!fs::exists(p)) throw ConfigError("spectrogram_file '" + p.string() + "' does not exist");
    sp = io::read_map_csv(p);
  }
  PhaseRetrievalOptions ro;
  ro.restarts = static_cast<int>(restarts);
  const std::uint64_t seed = o.seed.value_or(static_cast<std::uint64_t>(integer_or(c, "seed", 0, "config")));
  const RetrievalResult r = phase_retrieve(sp, f, seed, static_cast<int>(max_iter), ro);
  Outcome out;
  emit_map(out, o.out_dir, "spectrogram", sp);
  io::write_state_csv(o.out_dir / "estimate.csv", r.estimate);
  out.files.push_back("estimate.csv");
  json res = {{"iterations", r.iterations},
              {"converged", r.converged},
              {"self_consistency_error", r.self_consistency_error},
              {"seed", r.seed},
              {"ambiguity", {{"global_phase", r.ambiguity.global_phase}, {"conjugate_time_reversal", r.ambiguity.conjugate_time_reversal}}},
              {"fidelity_history", r.fidelity_history}};
  if (truth) res["fidelity"] = aligned_fidelity(*truth, r);
  io::write_json(o.out_dir / "retrieval.json", res);
  out.files.push_back("retrieval.json");
  res.erase("fidelity_history");
  out.summary = res;
  if (o.check) {
    add_check(out, "spectrogram self-consistency", r.self_consistency_error, 1e-2);
    if (truth) add_check(out, "aligned fidelity", aligned_fidelity(*truth, r), 0.99, false);
  }
  return out;
}

inline Outcome run_reconstruct(const json& c, const RunOptions& o) {
  only_keys(c, with_common({"state", "wigner_file", "tau", "mu", "anchor"}), "config");
  std::optional<PureState> truth;
  if (c.contains("state")) truth = require_pure(parse_state(c.at("state"), o.config_dir, "state"), "state");
  if (truth.has_value() == c.contains("wigner_file")) throw ConfigError("give exactly one of 'state' or 'wigner_file'");
  PhaseSpaceMap w;
  if (truth) {
    const Axis tau = parse_axis(need(c, "tau", "config"), "tau", &truth->grid());
    const Axis mu = parse_axis(need(c, "mu", "config"), "mu", &truth->grid(), true);
    w = wigner(*truth, tau, mu);
  } else {
    const fs::path p = o.config_dir / str(c, "wigner_file", "config");
    if (!fs::exists(p)) throw ConfigError("wigner_file '" + p.string() + "' does not exist");
    w = io::read_map_csv(p);
  }
  std::optional<double> anchor;
  if (c.contains("anchor")) anchor = num(c, "anchor", "config");
  const PureState est = reconstruct_from_wigner(w, anchor);
  Outcome out;
  emit_map(out, o.out_dir, "wigner", w);
  io::write_state_csv(o.out_dir / "estimate.csv", est);
  out.files.push_back("estimate.csv");
  if (truth) out.summary["fidelity"] = fidelity(*truth, est);
  out.summary["estimate_grid"] = {{"count", est.grid().size()}, {"center", est.grid().center()}, {"spacing", est.grid().spacing()}};
  if (o.check) {
    if (!truth) throw ConfigError("--check for reconstruct needs a known 'state'");
    add_check(out, "reconstruction fidelity", fidelity(*truth, est), 1.0 - 1e-6, false);
  }
  return out;
}

inline Outcome run_figure3(const json& c, const RunOptions& o) {
  only_keys(c, with_common({"resolutions", "kappa", "half_d", "window_span"}), "config");
  std::vector<std::size_t> ns{256, 1024};
  if (c.contains("resolutions")) {
    const json& r = c.at("resolutions");
    if (!r.is_array() || r.empty()) throw ConfigError("config.resolutions must be a nonempty array");
    ns.clear();
    for (const auto& v : r) {
      if (!v.is_number_integer() || (v.get<long long>() != 256 && v.get<long long>() != 1024)) {
        throw ConfigError("config.resolutions entries must be 256 or 1024");
      }
      ns.push_back(v.get<std::size_t>());
    }
  }
  const double kappa = num_or(c, "kappa", 0.1, "config");
  const auto half_d = integer_or(c, "half_d", 6, "config");
  if (half_d < 1 || half_d > 7) throw ConfigError("config.half_d must be in [1, 7]");
  const double window_span = num_or(c, "window_span", 1.0, "config");
  if (!(window_span > 0.0)) throw ConfigError("config.window_span must be positive");
  Outcome out;
  std::vector<Figure3Analysis> all;
  for (auto n : ns) {
    const auto run = figure3_model(n, kappa, static_cast<int>(half_d), window_span);
    const std::string tag = std::to_string(n);
    emit_map(out, o.out_dir, "spectrogram_" + tag, run.spectrogram);
    io::write_table_csv(o.out_dir / ("intensity_" + tag + ".csv"), {"normalized_frequency", "intensity"}, {run.omega, run.intensity});
    out.files.push_back("intensity_" + tag + ".csv");
    out.summary["N" + tag] = to_json(run.analysis);
    all.push_back(run.analysis);
    if (o.check) {
      const double expected = 2.0 * static_cast<double>(half_d) + 1.0;
      add_check(out, "N=" + tag + " ridge count error", std::abs(static_cast<double>(run.analysis.ridges.size()) - expected), 0.5);
      add_check(out, "N=" + tag + " max ridge offset (bins)", run.analysis.max_offset_bins, 1.0 + 1e-9);
      add_check(out, "N=" + tag + " ridge ratio relative error",
                std::abs(run.analysis.ratio / run.analysis.expected_ratio - 1.0), 0.05);
    }
  }
  io::write_json(o.out_dir / "figure3.json", out.summary);
  out.files.push_back("figure3.json");
  if (o.check) {
    for (std::size_t a = 0; a < all.size(); ++a) {
      for (std::size_t b = 0; b < all.size(); ++b) {
        if (all[a].resolution == 256 && all[b].resolution == 1024) {
          add_check(out, "fwhm_mu(1024) - fwhm_mu(256)", all[b].fwhm_mu - all[a].fwhm_mu, 0.0);
          add_check(out, "tau_extent(256) - tau_extent(1024)", all[a].tau_extent - all[b].tau_extent, 0.0);
        }
      }
    }
  }
  return out;
}

template <class E>
[[noreturn]] inline void rethrow_as(const std::string& scenario, const E& e) {
  throw E("scenario '" + scenario + "': " + e.what());
}

}  // namespace detail

inline json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// Runs one scenario and writes its artifacts plus manifest.json into opt.out_dir.
inline Manifest run(const std::string& name, const json& config, const RunOptions& opt) {
  if (std::find(scenario_names().begin(), scenario_names().end(), name) == scenario_names().end()) {
    throw ConfigError("unknown scenario '" + name + "'");
  }
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  if (config.contains("scenario") && config.at("scenario") != name) {
    throw ConfigError("config names scenario '" + config.at("scenario").dump() + "' but '" + name + "' was requested");
  }
  if (config.contains("seed") && !config.at("seed").is_number_unsigned()) throw ConfigError("config.seed must be a non-negative integer");
  fs::create_directories(opt.out_dir);
  Outcome out;
  try {
    if (name == "wigner") out = detail::run_wigner(config, opt);
    else if (name == "pseudo_wigner") out = detail::run_pseudo_wigner(config, opt);
    else if (name == "spectrogram") out = detail::run_spectrogram(config, opt);
    else if (name == "hom_map") out = detail::run_hom_map(config, opt);
    else if (name == "retrieve") out = detail::run_retrieve(config, opt);
    else if (name == "reconstruct") out = detail::run_reconstruct(config, opt);
    else out = detail::run_figure3(config, opt);
  } catch (const ConfigError& e) {
    detail::rethrow_as(name, e);
  } catch (const OverlapWarning& e) {
    detail::rethrow_as(name, PreconditionError(e.what()));
  } catch (const PreconditionError& e) {
    detail::rethrow_as(name, e);
  } catch (const InvalidArgument& e) {
    detail::rethrow_as(name, e);
  }
  Manifest m;
  json files = json::array();
  std::sort(out.files.begin(), out.files.end());
  for (const auto& f : out.files) {
    const fs::path p = opt.out_dir / f;
    files.push_back({{"path", f}, {"sha256", io::sha256_file(p)}, {"bytes", fs::file_size(p)}});
  }
  json checks = json::array();
  for (const auto& c : out.checks) {
    checks.push_back({{"name", c.name}, {"value", c.value}, {"limit", c.limit}, {"passed", c.passed}});
    m.check_passed = m.check_passed && c.passed;
  }
  json echo = config;
  if (opt.seed) echo["seed"] = *opt.seed;
  m.document = {{"scenario", name}, {"config", echo}, {"files", files}, {"summary", out.summary}};
  if (opt.check) m.document["check"] = {{"passed", m.check_passed}, {"items", checks}};
  io::write_json(opt.out_dir / "manifest.json", m.document);
  return m;
}

}  // namespace chronoscope::scenario
