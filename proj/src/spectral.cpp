#include "sslkit/spectral.hpp"

#include <cmath>
#include <numbers>

#include "sslkit/fft.hpp"

namespace sslkit::dsp {

namespace {

constexpr double kCoherenceFloorScale = 1e-14;

Eigen::VectorXd make_window(Window window, int len) {
  Eigen::VectorXd w(len);
  switch (window) {
    case Window::hann:
      for (int n = 0; n < len; ++n) {
        w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / len);
      }
      break;
    case Window::rectangular:
      w.setOnes();
      break;
  }
  return w;
}

}  // namespace

PsdEstimate welch_psd(const Eigen::VectorXd& s_i, const Eigen::VectorXd& s_j,
                      int segment_len, int overlap, double sample_rate,
                      Window window) {
  if (s_i.size() != s_j.size()) throw ShapeError("channel length mismatch");
  if (segment_len < 2 || segment_len > s_i.size()) {
    throw ShapeError("segment length must lie in [2, signal length]");
  }
  if (overlap < 0 || overlap >= segment_len) {
    throw ShapeError("overlap must lie in [0, segment length)");
  }

  const int hop = segment_len - overlap;
  const int nseg = 1 + static_cast<int>((s_i.size() - segment_len) / hop);
  if (nseg < 2) {
    throw DataError("fewer than 2 Welch segments; coherence is degenerate");
  }

  const Eigen::VectorXd w = make_window(window, segment_len);
  const double norm = 1.0 / (sample_rate * w.squaredNorm() * nseg);
  const int bins = segment_len / 2 + 1;

  PsdEstimate est;
  est.segments = nseg;
  est.cross = Eigen::VectorXcd::Zero(bins);
  est.auto_i = Eigen::VectorXd::Zero(bins);
  est.auto_j = Eigen::VectorXd::Zero(bins);
  est.freq.resize(bins);
  for (int k = 0; k < bins; ++k) est.freq[k] = sample_rate * k / segment_len;

  for (int seg = 0; seg < nseg; ++seg) {
    const int start = seg * hop;
    const Eigen::VectorXd xi = s_i.segment(start, segment_len).cwiseProduct(w);
    const Eigen::VectorXd xj = s_j.segment(start, segment_len).cwiseProduct(w);
    const Eigen::VectorXcd fi = dft(xi);
    const Eigen::VectorXcd fj = dft(xj);
    for (int k = 0; k < bins; ++k) {
      est.cross[k] += std::conj(fi[k]) * fj[k];
      est.auto_i[k] += std::norm(fi[k]);
      est.auto_j[k] += std::norm(fj[k]);
    }
  }
  est.cross *= norm;
  est.auto_i *= norm;
  est.auto_j *= norm;
  return est;
}

CoherenceProfile coherence(const PsdEstimate& psd) {
  const Eigen::VectorXd denom = psd.auto_i.cwiseProduct(psd.auto_j);
  const double max_denom = denom.maxCoeff();
  if (max_denom <= 0.0) {
    throw SignalError("silent channel; coherence undefined");
  }
  const double floor = kCoherenceFloorScale * max_denom;
  CoherenceProfile prof;
  prof.psd = psd;
  prof.values.resize(psd.cross.size());
  for (Eigen::Index k = 0; k < psd.cross.size(); ++k) {
    prof.values[k] = std::norm(psd.cross[k]) / std::max(denom[k], floor);
  }
  return prof;
}

WeightedTdoaFeature weight_by_coherence(
    const std::vector<CorrelationFeature>& features,
    const std::vector<CoherenceProfile>& coherences, double alpha,
    bool mean_over_pairs) {
  if (features.empty()) throw DataError("no correlation features to weight");
  if (features.size() != coherences.size()) {
    throw DataError("feature/coherence list length mismatch");
  }
  if (alpha < 0.0) throw ConfigError("alpha must be non-negative");

  WeightedTdoaFeature out;
  out.alpha = alpha;
  out.values = Eigen::VectorXd::Zero(features.front().values.size());
  out.pair_weights.resize(static_cast<Eigen::Index>(features.size()));
  for (std::size_t p = 0; p < features.size(); ++p) {
    const CorrelationFeature& f = features[p];
    const CoherenceProfile& c = coherences[p];
    if (f.mic_i != c.mic_i || f.mic_j != c.mic_j) {
      throw DataError("feature/coherence pair mismatch");
    }
    if (f.values.size() != out.values.size()) {
      throw ShapeError("correlation features must share one lag grid");
    }
    const double weight = std::pow(c.mean(), alpha);
    out.pair_weights[static_cast<Eigen::Index>(p)] = weight;
    out.values += weight * f.values;
  }
  if (mean_over_pairs) {
    out.values /= static_cast<double>(features.size());
  }
  return out;
}

}  // namespace sslkit::dsp
