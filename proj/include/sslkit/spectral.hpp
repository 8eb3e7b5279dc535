#pragma once

#include <Eigen/Dense>

#include <vector>

#include "sslkit/common.hpp"
#include "sslkit/correlation.hpp"

namespace sslkit::dsp {

enum class Window { hann, rectangular };

// Welch-averaged auto and cross spectral densities on the one-sided grid.
struct PsdEstimate {
  Eigen::VectorXd freq;     // Hz
  Eigen::VectorXcd cross;   // g_ij
  Eigen::VectorXd auto_i;   // g_ii
  Eigen::VectorXd auto_j;   // g_jj
  int segments = 0;
};

PsdEstimate welch_psd(const Eigen::VectorXd& s_i, const Eigen::VectorXd& s_j,
                      int segment_len, int overlap, double sample_rate,
                      Window window = Window::hann);

// Magnitude-squared coherence profile of a microphone pair.
struct CoherenceProfile {
  int mic_i = 0;
  int mic_j = 0;
  Eigen::VectorXd values;  // in [0, 1] per frequency bin
  PsdEstimate psd;

  double mean() const { return values.mean(); }
};

CoherenceProfile coherence(const PsdEstimate& psd);

// Sum of per-pair correlation features, each scaled by the pair's
// frequency-averaged coherence raised to `alpha`.
struct WeightedTdoaFeature {
  Eigen::VectorXd values;
  double alpha = 1.0;
  Eigen::VectorXd pair_weights;  // aligned with the input feature list
};

WeightedTdoaFeature weight_by_coherence(
    const std::vector<CorrelationFeature>& features,
    const std::vector<CoherenceProfile>& coherences, double alpha,
    bool mean_over_pairs = false);

}  // namespace sslkit::dsp
