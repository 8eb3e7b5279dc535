#pragma once

#include <Eigen/Dense>

#include <vector>

#include "sslkit/acoustics.hpp"
#include "sslkit/common.hpp"

namespace sslkit::dsp {

// Phase-transform cross-correlation over the symmetric lag grid
// [-tau_max, tau_max]. values[tau_max + d] is the response at lag d;
// a positive peak lag means the second channel arrives later.
struct CorrelationFeature {
  int mic_i = 0;
  int mic_j = 0;
  Eigen::VectorXd values;
  Eigen::VectorXi lag_grid;
  double sample_rate = 16000.0;

  int tau_max() const { return static_cast<int>((values.size() - 1) / 2); }
};

// Frequency-domain weighting bank applied to the normalized cross-spectrum.
// Filters are fixed band shapes; only the combination weights take part in
// training.
struct FilterBank {
  enum class Kind { all_pass, mel_triangle };

  Kind kind = Kind::all_pass;
  Eigen::MatrixXd corners;             // P x 3 (lo, center, hi) Hz for mel
  Eigen::VectorXd combination_weights;  // one weight per filter
  bool trainable = false;

  int size() const { return static_cast<int>(combination_weights.size()); }

  // Mel-spaced triangular band-pass filters covering (0, fs/2), weights 1/P.
  static FilterBank mel(int num_filters, double sample_rate);
  static FilterBank all_pass();

  // Per-bin weighting for an nfft-point spectrum (symmetric in frequency).
  Eigen::VectorXd bin_response(int filter, int nfft, double sample_rate) const;

  void validate() const;
};

CorrelationFeature gcc_phat(const Eigen::VectorXd& s_i,
                            const Eigen::VectorXd& s_j, int tau_max,
                            double sample_rate);

// Per-filter PHAT responses (before combination).
std::vector<CorrelationFeature> ngcc_filter_responses(
    const Eigen::VectorXd& s_i, const Eigen::VectorXd& s_j,
    const FilterBank& bank, int tau_max, double sample_rate);

// Weighted combination of the per-filter responses.
CorrelationFeature ngcc_phat(const Eigen::VectorXd& s_i,
                             const Eigen::VectorXd& s_j, const FilterBank& bank,
                             int tau_max, double sample_rate);

// Peak lag in seconds; ties broken toward the smaller |lag|.
double estimate_tdoa(const CorrelationFeature& feature);

// Largest physically possible delay for a room, in samples.
int default_tau_max(const sim::RoomSpec& room);

}  // namespace sslkit::dsp
