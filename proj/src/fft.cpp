#include "sslkit/fft.hpp"

#include <unsupported/Eigen/FFT>

namespace sslkit::dsp {

namespace {

Eigen::FFT<double>& engine() {
  thread_local Eigen::FFT<double> fft;  // caches plans per length
  return fft;
}

}  // namespace

Eigen::VectorXcd dft(const Eigen::VectorXd& signal) {
  if (signal.size() < 1) throw ShapeError("dft of empty signal");
  if (signal.size() == 1) return signal.cast<std::complex<double>>();
  Eigen::VectorXcd out(signal.size());
  engine().fwd(out, signal);
  return out;
}

Eigen::VectorXcd dft(const Eigen::VectorXcd& signal) {
  if (signal.size() < 1) throw ShapeError("dft of empty signal");
  if (signal.size() == 1) return signal;
  Eigen::VectorXcd out(signal.size());
  engine().fwd(out, signal);
  return out;
}

Eigen::VectorXcd idft(const Eigen::VectorXcd& spectrum) {
  if (spectrum.size() < 1) throw ShapeError("idft of empty spectrum");
  if (spectrum.size() == 1) return spectrum;
  Eigen::VectorXcd out(spectrum.size());
  engine().inv(out, spectrum);
  return out;
}

Eigen::VectorXd idft_real(const Eigen::VectorXcd& spectrum) {
  return idft(spectrum).real();
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace sslkit::dsp
