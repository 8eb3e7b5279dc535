#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "sslkit/acoustics.hpp"
#include "sslkit/attention.hpp"
#include "sslkit/autodiff.hpp"
#include "sslkit/correlation.hpp"
#include "sslkit/frozen_encoder.hpp"
#include "sslkit/spectral.hpp"

namespace sslkit::model {

using ad::Tensor;

// Which inputs the network may rely on. Faulty-mic scenes mask microphone
// positions; scene B additionally feeds the known source position instead of
// emitting a source prediction.
enum class Scenario {
  default_task,
  unknown_source_signal,
  faulty_mic_scene_a,
  faulty_mic_scene_b,
  multi_source,
};

const char* scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

struct ModelConfig {
  int embed_dim = 128;
  int num_heads = 4;
  int num_blocks = 4;          // masked-encoder depth
  int num_decoder_blocks = 2;  // decoder depth
  int top_t = 4;
  double mask_ratio = 0.3;
  double lambda_sound = 1.0;
  double lambda_mloc = 1.0;
  double lambda_sloc = 1.0;
  int num_sources = 1;    // K source slots
  int filterbank_size = 8;
  double alpha = 1.0;     // coherence exponent for the pair weighting
  int ffn_mult = 4;
  int stft_frame = 256;
  int num_mics = 8;       // microphone token budget
  int audio_len = 2048;
  int tau_max = 507;      // correlation half-width in samples

  int feature_len() const { return 2 * tau_max + 1; }
  void validate() const;
};

// Per-scene features the network consumes. Everything here is fixed given
// the recording: frozen audio embeddings, geometry, per-filter correlation
// responses already coherence-weighted and summed over microphone pairs
// (so the trainable filter combination stays a linear map on top).
struct SceneInput {
  Eigen::MatrixXd mic_audio_emb;     // M x d
  Eigen::MatrixXd source_audio_emb;  // K x d
  Eigen::MatrixXd mic_positions;     // M x 3
  Eigen::MatrixXd source_positions;  // K x 3 ground truth
  Eigen::MatrixXd filter_responses;  // P x L
  Eigen::MatrixXd mic_waveforms;     // M x N reconstruction targets
  std::vector<bool> faulty;          // per microphone
  Scenario scenario = Scenario::default_task;

  int num_mics() const { return static_cast<int>(mic_audio_emb.rows()); }
  int num_sources() const { return static_cast<int>(source_positions.rows()); }
};

SceneInput featurize(const sim::SceneRecording& recording,
                     const ModelConfig& config, const dsp::FilterBank& bank,
                     const SpectrogramEncoder& encoder, Scenario scenario);

// Masking decisions for one forward pass. Audio masking is the random
// reconstruction pretext (training only); position masks come from the
// scenario (faulty microphones, source queries).
struct MaskPlan {
  std::vector<bool> audio_masked;  // per microphone token
  std::vector<bool> pos_masked;    // per microphone token
  bool source_audio_masked = false;
};

// Assembled token set: one row per microphone plus the source tokens, each
// carrying an audio slot and a position slot; masked slots hold the learned
// mask embedding. The shared TDOA embedding enters through attention.
struct TokenSet {
  Tensor audio_slots;      // (T, d)
  Tensor pos_slots;        // (T, d)
  Tensor tdoa_embedding;   // (1, d)
  int num_mic_tokens = 0;
  int num_source_tokens = 0;
  std::vector<bool> audio_masked;  // per token
  std::vector<bool> pos_masked;    // per token
};

struct Prediction {
  Eigen::MatrixXd source_positions;  // K x 3; empty for scene B
  std::vector<std::pair<int, Vec3>> mic_positions;  // per position-masked mic
  std::vector<std::pair<int, Eigen::VectorXd>> reconstructed_audio;
  Eigen::MatrixXd recon_audio_emb;  // per token
  Eigen::MatrixXd recon_pos_emb;    // per token
};

struct LossBreakdown {
  double sound_term = 0.0;
  double mloc_term = 0.0;
  double sloc_term = 0.0;
  double total = 0.0;
};

// Minimum-cost assignment of predicted sources to ground-truth sources;
// returns the truth index for each prediction row.
std::vector<int> match_sources(const Eigen::MatrixXd& predicted,
                               const Eigen::MatrixXd& truth);

class SslModel {
 public:
  SslModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const SpectrogramEncoder& audio_encoder() const { return encoder_; }

  // Filter bank with the current trainable combination weights.
  dsp::FilterBank filterbank() const;

  std::vector<std::pair<std::string, Tensor>>& named_params() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& named_params() const {
    return params_;
  }
  std::vector<Tensor> trainable_params() const;

  // Stream encoders.
  Eigen::VectorXd encode_audio(const Eigen::VectorXd& wave) const;
  Tensor encode_positions(const Tensor& xyz) const;      // (n,3) -> (n,d)
  Tensor encode_tdoa(const Tensor& weighted_feature) const;  // (1,L) -> (1,d)

  MaskPlan make_mask_plan(const SceneInput& input, Rng* training_rng) const;
  TokenSet build_tokens(const SceneInput& input, const MaskPlan& plan) const;

  // Differentiable forward pass. Undefined tensors mean "no such outputs in
  // this scene" (e.g. no audio-masked microphones).
  struct Forward {
    Tensor source_positions;      // (K, 3)
    Tensor masked_mic_positions;  // (U, 3)
    Tensor reconstructed_audio;   // (A, N)
    Tensor recon_audio_emb;       // (T, d)
    Tensor recon_pos_emb;         // (T, d)
    std::vector<int> masked_mic_ids;
    std::vector<int> audio_masked_ids;
    int num_tokens = 0;
  };
  Forward forward(const SceneInput& input, const MaskPlan& plan) const;

  // Weighted training objective; the scalar tensor drives backward, the
  // breakdown reports the three terms.
  std::pair<Tensor, LossBreakdown> total_loss(const Forward& fwd,
                                              const SceneInput& input) const;

  Prediction infer(const SceneInput& input) const;

 private:
  Tensor register_param(const std::string& name, Tensor t);
  AttentionParams register_attention(const std::string& prefix, int dim,
                                     int heads, Rng& rng);
  TransformerBlock register_block(const std::string& prefix, Rng& rng);

  ModelConfig config_;
  SpectrogramEncoder encoder_;
  std::vector<std::pair<std::string, Tensor>> params_;
  dsp::FilterBank bank_shapes_;  // fixed mel bands; weights live in params

  Tensor fb_weights_;
  Tensor pos_w1_, pos_b1_, pos_w2_, pos_b2_;
  Tensor tdoa_w_, tdoa_b_;
  AttentionParams a2p_, joint_, decode_;
  Tensor a2p_ln_g_, a2p_ln_b_;
  Tensor joint_ln_g_, joint_ln_b_;
  Tensor decode_ln_g_, decode_ln_b_;
  Tensor mask_emb_;
  Tensor source_queries_;
  std::vector<TransformerBlock> enc_blocks_, dec_blocks_;
  Tensor head_audio_w_, head_audio_b_, head_pos_w_, head_pos_b_;
  Tensor inv_w1_, inv_b1_, inv_w2_, inv_b2_;
  Tensor posdec_w1_, posdec_b1_, posdec_w2_, posdec_b2_;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  std::string log_path;         // JSONL epoch log, empty to disable
  std::string checkpoint_path;  // written after the final epoch
};

struct EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  double total = 0.0;
  double sound = 0.0;
  double mloc = 0.0;
  double sloc = 0.0;
};

std::vector<EpochStats> train(SslModel& model,
                              const std::vector<SceneInput>& scenes,
                              const TrainConfig& config);

}  // namespace sslkit::model
