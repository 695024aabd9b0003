#pragma once

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "chronoscope/core.hpp"
#include "chronoscope/phase_space.hpp"
#include "json.hpp"

namespace chronoscope::io {

namespace fs = std::filesystem;

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double to_double(const std::string& s, const std::string& where) {
  // strtod rather than stod: subnormals the writer emits set ERANGE but are valid.
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  const std::size_t used = static_cast<std::size_t>(end - s.c_str());
  if (used == 0 || (errno == ERANGE && std::isinf(v))) {
    throw InvalidArgument(where + ": cannot parse number '" + s + "'");
  }
  if (used != s.size() && s.find_first_not_of(" \t\r", used) != std::string::npos) {
    throw InvalidArgument(where + ": trailing characters in '" + s + "'");
  }
  return v;
}

inline std::string axis_line(const char* name, const Axis& a) {
  return std::string("# ") + name + "," + fmt17(a.start()) + "," + fmt17(a.step()) + "," + std::to_string(a.size());
}

inline Axis parse_axis(const std::vector<std::string>& f, const std::string& where) {
  if (f.size() != 4) throw InvalidArgument(where + ": axis line needs start, step and count");
  const double n = to_double(f[3], where);
  if (!(n >= 1.0) || n != std::floor(n)) throw InvalidArgument(where + ": bad axis count");
  return Axis(to_double(f[1], where), to_double(f[2], where), static_cast<std::size_t>(n));
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace detail

// Header lines start with '#'; then one row per time index, one column per frequency index.
inline void write_map_csv(const fs::path& path, const PhaseSpaceMap& m) {
  auto out = detail::open_out(path);
  out << "# kind," << to_string(m.kind) << '\n';
  out << detail::axis_line("time_axis", m.time_axis) << '\n';
  out << detail::axis_line("freq_axis", m.freq_axis) << '\n';
  out << "# metadata," << m.metadata.dump() << '\n';
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
      if (j) out << ',';
      out << fmt17(m.values(i, j));
    }
    out << '\n';
  }
}

inline PhaseSpaceMap read_map_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open map file '" + path.string() + "'");
  const std::string where = path.string();
  PhaseSpaceMap m;
  bool have_kind = false, have_t = false, have_f = false;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto comma = line.find(',');
      const std::string key = line.substr(2, comma == std::string::npos ? std::string::npos : comma - 2);
      if (key == "kind") {
        m.kind = map_kind_from_string(line.substr(comma + 1));
        have_kind = true;
      } else if (key == "time_axis") {
        m.time_axis = detail::parse_axis(detail::split(line.substr(2)), where);
        have_t = true;
      } else if (key == "freq_axis") {
        m.freq_axis = detail::parse_axis(detail::split(line.substr(2)), where);
        have_f = true;
      } else if (key == "metadata") {
        try {
          m.metadata = nlohmann::json::parse(line.substr(comma + 1));
        } catch (const nlohmann::json::exception& e) {
          throw InvalidArgument(where + ": bad metadata: " + e.what());
        }
      }
      continue;
    }
    std::vector<double> row;
    for (const auto& f : detail::split(line)) row.push_back(detail::to_double(f, where));
    rows.push_back(std::move(row));
  }
  if (!have_kind || !have_t || !have_f) throw InvalidArgument(where + ": missing kind or axis header");
  if (rows.size() != m.time_axis.size()) throw InvalidArgument(where + ": row count does not match the time axis");
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.freq_axis.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.freq_axis.size()) throw InvalidArgument(where + ": column count does not match the frequency axis");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

// omega, re, im per grid point.
inline void write_state_csv(const fs::path& path, const PureState& s) {
  auto out = detail::open_out(path);
  const auto& g = s.grid();
  out << "# kind,PureState\n";
  out << "# grid," << g.size() << ',' << fmt17(g.center()) << ',' << fmt17(g.spacing()) << '\n';
  out << "omega,re,im\n";
  for (std::size_t n = 0; n < g.size(); ++n) {
    const cplx v = s.amplitudes()[n];
    out << fmt17(g.point(n)) << ',' << fmt17(v.real()) << ',' << fmt17(v.imag()) << '\n';
  }
}

inline PureState read_state_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open state file '" + path.string() + "'");
  const std::string where = path.string();
  std::optional<FrequencyGrid> g;
  std::vector<cplx> s;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("omega", 0) == 0) continue;
    if (line[0] == '#') {
      auto f = detail::split(line.substr(2));
      if (f.size() == 4 && f[0] == "grid") {
        g.emplace(static_cast<std::size_t>(detail::to_double(f[1], where)), detail::to_double(f[2], where),
                  detail::to_double(f[3], where));
      }
      continue;
    }
    auto f = detail::split(line);
    if (f.size() != 3) throw InvalidArgument(where + ": expected omega,re,im rows");
    s.emplace_back(detail::to_double(f[1], where), detail::to_double(f[2], where));
  }
  if (!g) throw InvalidArgument(where + ": missing grid header");
  if (s.size() != g->size()) throw InvalidArgument(where + ": sample count does not match the grid");
  return PureState::from_samples(*g, std::move(s));
}

inline void write_table_csv(const fs::path& path, const std::vector<std::string>& header,
                            const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size()) throw InvalidArgument("table header and column count differ");
  auto out = detail::open_out(path);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  const std::size_t n = columns.empty() ? 0 : columns.front().size();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << fmt17(columns[c].at(r));
    out << '\n';
  }
}

// 8-bit greyscale, min -> 0 and max -> 255; rows follow the time axis. Range goes to <path>.json.
inline void write_pgm(const fs::path& path, const PhaseSpaceMap& m) {
  const double lo = m.values.minCoeff();
  const double hi = m.values.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  auto out = detail::open_out(path);
  out << "P5\n" << m.values.cols() << ' ' << m.values.rows() << "\n255\n";
  std::string row(static_cast<std::size_t>(m.values.cols()), '\0');
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
      const double v = std::clamp((m.values(i, j) - lo) / span, 0.0, 1.0);
      row[static_cast<std::size_t>(j)] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v)));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  nlohmann::json side = {{"image", path.filename().string()},
                         {"kind", to_string(m.kind)},
                         {"min", lo},
                         {"max", hi},
                         {"rows", "time_axis"},
                         {"cols", "freq_axis"},
                         {"time_axis", {{"start", m.time_axis.start()}, {"step", m.time_axis.step()}, {"count", m.time_axis.size()}}},
                         {"freq_axis", {{"start", m.freq_axis.start()}, {"step", m.freq_axis.step()}, {"count", m.freq_axis.size()}}}};
  auto sc = detail::open_out(fs::path(path.string() + ".json"));
  sc << side.dump(2) << '\n';
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("EVP_MD_CTX_new failed");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

}  // namespace chronoscope::io
