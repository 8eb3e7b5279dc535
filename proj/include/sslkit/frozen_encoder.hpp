#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "sslkit/common.hpp"

namespace sslkit::model {

// Frozen audio encoder: log-magnitude short-time spectrogram, mean-pooled
// over time, standardized, then projected to the embedding width by a fixed
// seeded orthogonal matrix. Deterministic, holds no trainable state, and can
// be swapped for any pretrained encoder with the same signature.
class SpectrogramEncoder {
 public:
  explicit SpectrogramEncoder(int embed_dim, int frame_len = 256,
                              std::uint64_t seed = 0x53534c4b49544645ULL);

  Eigen::VectorXd encode(const Eigen::VectorXd& wave) const;

  int embed_dim() const { return embed_dim_; }
  int frame_len() const { return frame_len_; }

 private:
  int embed_dim_;
  int frame_len_;
  int hop_;
  int bins_;
  Eigen::MatrixXd projection_;  // embed_dim x bins, orthonormal rows
};

}  // namespace sslkit::model
