#pragma once

#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace chronoscope::fft {

// Unnormalized DFTs: forward uses exp(-2 pi i nk/N), backward exp(+2 pi i nk/N).
inline std::vector<std::complex<double>> forward(const std::vector<std::complex<double>>& in) {
  Eigen::FFT<double> engine;
  std::vector<std::complex<double>> out;
  engine.fwd(out, in);
  return out;
}

inline std::vector<std::complex<double>> backward(const std::vector<std::complex<double>>& in) {
  Eigen::FFT<double> engine;
  engine.SetFlag(Eigen::FFT<double>::Unscaled);
  std::vector<std::complex<double>> out;
  engine.inv(out, in);
  return out;
}

}  // namespace chronoscope::fft
