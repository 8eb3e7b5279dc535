#pragma once

#include <Eigen/Dense>

#include "sslkit/common.hpp"

namespace sslkit::dsp {

// Discrete Fourier transform, full-length complex spectrum.
Eigen::VectorXcd dft(const Eigen::VectorXd& signal);
Eigen::VectorXcd dft(const Eigen::VectorXcd& signal);

// Inverse transform with 1/N scaling, so idft(dft(x)) == x.
Eigen::VectorXcd idft(const Eigen::VectorXcd& spectrum);

// Real part of the inverse transform; for conjugate-symmetric spectra.
Eigen::VectorXd idft_real(const Eigen::VectorXcd& spectrum);

int next_pow2(int n);

}  // namespace sslkit::dsp
