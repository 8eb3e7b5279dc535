#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sslkit/autodiff.hpp"

namespace sslkit::ad {

// Adaptive-moment optimizer. The learning rate decays by `decay` every
// `decay_every` epochs through epoch_schedule().
struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay = 0.95;
  int decay_every = 10;
};

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig config = {});

  // Applies one update from the accumulated gradients. Parameters without a
  // gradient are treated as having a zero gradient. Any non-finite gradient
  // rejects the whole step before touching any parameter.
  void step();

  void zero_grad();

  // Call once per epoch (1-based). Multiplies the learning rate by `decay`
  // exactly when epoch > 0 and epoch % decay_every == 0.
  void epoch_schedule(int epoch);

  double learning_rate() const { return lr_; }
  long step_count() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  AdamConfig config_;
  double lr_;
  long t_ = 0;
};

// Central-difference comparison of analytic gradients, elementwise, with
// per-element step `step * max(1, |x|)`. Discrepancy is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
struct GradCheckResult {
  double max_rel_error = 0.0;
  bool pass = true;
  std::vector<std::pair<std::string, double>> per_param;
};

GradCheckResult grad_check(
    const std::function<Tensor()>& f,
    const std::vector<std::pair<std::string, Tensor>>& params,
    double step = 1e-5, double tol = 1e-4);

// --- checkpoints -------------------------------------------------------------

// Text manifest plus raw little-endian float64 blocks; values round-trip
// bit-exactly (docs/checkpoint_format.md).
struct Checkpoint {
  std::vector<std::pair<std::string, Mat>> params;
  std::string hyper_json;
};

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params,
                     const std::string& hyper_json);

Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint values into matching registered tensors; name or shape
// mismatches throw.
void restore_params(const Checkpoint& ckpt,
                    std::vector<std::pair<std::string, Tensor>>& params);

}  // namespace sslkit::ad
