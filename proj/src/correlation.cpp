#include "sslkit/correlation.hpp"

#include <cmath>

#include "sslkit/fft.hpp"

namespace sslkit::dsp {

namespace {

constexpr double kPhatFloorScale = 1e-12;

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Normalized cross-spectrum conj(S_i) .* S_j / |.|, padded to nfft.
Eigen::VectorXcd phat_cross_spectrum(const Eigen::VectorXd& s_i,
                                     const Eigen::VectorXd& s_j, int nfft) {
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(nfft);
  Eigen::VectorXd pj = Eigen::VectorXd::Zero(nfft);
  pi.head(s_i.size()) = s_i;
  pj.head(s_j.size()) = s_j;
  const Eigen::VectorXcd fi = dft(pi);
  const Eigen::VectorXcd fj = dft(pj);
  Eigen::VectorXcd cross = fi.conjugate().cwiseProduct(fj);
  const Eigen::VectorXd mags = cross.cwiseAbs();
  const double max_mag = mags.maxCoeff();
  if (max_mag <= 0.0) {
    throw SignalError("phase transform undefined for an all-zero channel");
  }
  const double floor = kPhatFloorScale * max_mag;
  for (Eigen::Index k = 0; k < cross.size(); ++k) {
    cross[k] /= std::max(mags[k], floor);
  }
  return cross;
}

CorrelationFeature crop_lags(const Eigen::VectorXd& circular, int tau_max,
                             double sample_rate) {
  CorrelationFeature f;
  f.sample_rate = sample_rate;
  const int nfft = static_cast<int>(circular.size());
  f.values.resize(2 * tau_max + 1);
  f.lag_grid.resize(2 * tau_max + 1);
  for (int lag = -tau_max; lag <= tau_max; ++lag) {
    const int idx = (lag % nfft + nfft) % nfft;
    f.values[lag + tau_max] = circular[idx];
    f.lag_grid[lag + tau_max] = lag;
  }
  return f;
}

void check_gcc_inputs(const Eigen::VectorXd& s_i, const Eigen::VectorXd& s_j,
                      int tau_max) {
  if (s_i.size() != s_j.size()) throw ShapeError("channel length mismatch");
  if (s_i.size() < 2) throw ShapeError("channels too short");
  if (tau_max < 0 || tau_max >= s_i.size()) {
    throw ShapeError("tau_max must lie in [0, length)");
  }
  if (s_i.cwiseAbs().maxCoeff() == 0.0 || s_j.cwiseAbs().maxCoeff() == 0.0) {
    throw SignalError("all-zero channel");
  }
}

}  // namespace

FilterBank FilterBank::mel(int num_filters, double sample_rate) {
  if (num_filters < 1) throw ConfigError("filterbank needs at least 1 filter");
  FilterBank bank;
  bank.kind = Kind::mel_triangle;
  bank.corners.resize(num_filters, 3);
  const double lo_mel = hz_to_mel(0.0);
  const double hi_mel = hz_to_mel(sample_rate / 2.0);
  for (int p = 0; p < num_filters; ++p) {
    const double m0 = lo_mel + (hi_mel - lo_mel) * p / (num_filters + 1);
    const double m1 = lo_mel + (hi_mel - lo_mel) * (p + 1) / (num_filters + 1);
    const double m2 = lo_mel + (hi_mel - lo_mel) * (p + 2) / (num_filters + 1);
    bank.corners(p, 0) = mel_to_hz(m0);
    bank.corners(p, 1) = mel_to_hz(m1);
    bank.corners(p, 2) = mel_to_hz(m2);
  }
  bank.combination_weights =
      Eigen::VectorXd::Constant(num_filters, 1.0 / num_filters);
  return bank;
}

FilterBank FilterBank::all_pass() {
  FilterBank bank;
  bank.kind = Kind::all_pass;
  bank.combination_weights = Eigen::VectorXd::Ones(1);
  return bank;
}

Eigen::VectorXd FilterBank::bin_response(int filter, int nfft,
                                         double sample_rate) const {
  validate();
  if (filter < 0 || filter >= size()) throw ConfigError("filter index");
  Eigen::VectorXd h(nfft);
  if (kind == Kind::all_pass) {
    h.setOnes();
    return h;
  }
  const double lo = corners(filter, 0);
  const double center = corners(filter, 1);
  const double hi = corners(filter, 2);
  for (int k = 0; k < nfft; ++k) {
    // Symmetric response over |f|, so real signals stay real after filtering.
    double f = sample_rate * k / nfft;
    if (f > sample_rate / 2.0) f = sample_rate - f;
    double w = 0.0;
    if (f > lo && f < hi) {
      w = f <= center ? (f - lo) / (center - lo) : (hi - f) / (hi - center);
    }
    h[k] = w;
  }
  return h;
}

void FilterBank::validate() const {
  if (size() < 1) throw ConfigError("filterbank must have P >= 1");
  if (!combination_weights.allFinite()) {
    throw NumericError("filterbank weights must be finite");
  }
  if (kind == Kind::mel_triangle) {
    if (corners.rows() != size() || corners.cols() != 3) {
      throw ShapeError("filterbank corners must be P x 3");
    }
    for (int p = 0; p < size(); ++p) {
      if (!(corners(p, 0) < corners(p, 1) && corners(p, 1) < corners(p, 2))) {
        throw ConfigError("filter corners must be increasing");
      }
    }
  }
}

CorrelationFeature gcc_phat(const Eigen::VectorXd& s_i,
                            const Eigen::VectorXd& s_j, int tau_max,
                            double sample_rate) {
  check_gcc_inputs(s_i, s_j, tau_max);
  const int nfft = next_pow2(static_cast<int>(s_i.size()) + tau_max);
  const Eigen::VectorXcd cross = phat_cross_spectrum(s_i, s_j, nfft);
  return crop_lags(idft_real(cross), tau_max, sample_rate);
}

std::vector<CorrelationFeature> ngcc_filter_responses(
    const Eigen::VectorXd& s_i, const Eigen::VectorXd& s_j,
    const FilterBank& bank, int tau_max, double sample_rate) {
  check_gcc_inputs(s_i, s_j, tau_max);
  bank.validate();
  const int nfft = next_pow2(static_cast<int>(s_i.size()) + tau_max);
  const Eigen::VectorXcd cross = phat_cross_spectrum(s_i, s_j, nfft);
  std::vector<CorrelationFeature> out;
  out.reserve(static_cast<std::size_t>(bank.size()));
  for (int p = 0; p < bank.size(); ++p) {
    const Eigen::VectorXd h = bank.bin_response(p, nfft, sample_rate);
    const Eigen::VectorXcd filtered = cross.cwiseProduct(h.cast<std::complex<double>>());
    out.push_back(crop_lags(idft_real(filtered), tau_max, sample_rate));
  }
  return out;
}

CorrelationFeature ngcc_phat(const Eigen::VectorXd& s_i,
                             const Eigen::VectorXd& s_j, const FilterBank& bank,
                             int tau_max, double sample_rate) {
  std::vector<CorrelationFeature> responses =
      ngcc_filter_responses(s_i, s_j, bank, tau_max, sample_rate);
  CorrelationFeature combined = responses.front();
  combined.values = Eigen::VectorXd::Zero(2 * tau_max + 1);
  for (int p = 0; p < bank.size(); ++p) {
    combined.values += bank.combination_weights[p] * responses[static_cast<std::size_t>(p)].values;
  }
  return combined;
}

double estimate_tdoa(const CorrelationFeature& feature) {
  if (feature.values.size() == 0) throw ShapeError("empty correlation feature");
  int best = 0;
  for (int i = 1; i < feature.values.size(); ++i) {
    const double v = feature.values[i];
    const double b = feature.values[best];
    if (v > b || (v == b && std::abs(feature.lag_grid[i]) <
                                std::abs(feature.lag_grid[best]))) {
      best = i;
    }
  }
  return feature.lag_grid[best] / feature.sample_rate;
}

int default_tau_max(const sim::RoomSpec& room) {
  return static_cast<int>(std::ceil(room.diagonal() / room.speed_of_sound *
                                    room.sample_rate));
}

}  // namespace sslkit::dsp
