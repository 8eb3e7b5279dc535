#include "sslkit/frozen_encoder.hpp"

#include <cmath>
#include <numbers>

#include "sslkit/fft.hpp"
#include "sslkit/rng.hpp"

namespace sslkit::model {

namespace {
constexpr double kLogFloor = 1e-10;
}

SpectrogramEncoder::SpectrogramEncoder(int embed_dim, int frame_len,
                                       std::uint64_t seed)
    : embed_dim_(embed_dim),
      frame_len_(frame_len),
      hop_(frame_len / 2),
      bins_(frame_len / 2 + 1) {
  if (embed_dim < 1) throw ConfigError("embed_dim must be positive");
  if (frame_len < 8 || frame_len % 2 != 0) {
    throw ConfigError("frame_len must be even and >= 8");
  }
  if (embed_dim > bins_) {
    throw ConfigError("embed_dim exceeds spectrogram bins; use a longer frame");
  }
  Rng rng(seed);
  Eigen::MatrixXd gaussian(bins_, bins_);
  for (Eigen::Index i = 0; i < gaussian.size(); ++i) {
    gaussian.data()[i] = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ();
  projection_ = q.topRows(embed_dim).eval();
}

Eigen::VectorXd SpectrogramEncoder::encode(const Eigen::VectorXd& wave) const {
  if (wave.size() < 1) throw ShapeError("empty waveform");

  Eigen::VectorXd window(frame_len_);
  for (int n = 0; n < frame_len_; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / frame_len_);
  }

  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(bins_);
  int frames = 0;
  for (int start = 0;; start += hop_) {
    if (start >= wave.size() && frames > 0) break;
    Eigen::VectorXd frame = Eigen::VectorXd::Zero(frame_len_);
    const int avail =
        std::min<int>(frame_len_, static_cast<int>(wave.size()) - start);
    if (avail > 0) frame.head(avail) = wave.segment(start, avail);
    frame = frame.cwiseProduct(window);
    const Eigen::VectorXcd spec = dsp::dft(frame);
    for (int k = 0; k < bins_; ++k) {
      pooled[k] += std::log(std::abs(spec[k]) + kLogFloor);
    }
    ++frames;
    if (start + frame_len_ >= wave.size()) break;
  }
  pooled /= frames;

  // Standardize before projection so embeddings stay O(1).
  const double mu = pooled.mean();
  const double sd = std::sqrt((pooled.array() - mu).square().sum() / bins_);
  const Eigen::VectorXd z = (pooled.array() - mu) / (sd + 1e-12);
  return projection_ * z;
}

}  // namespace sslkit::model
