#include "sslkit/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "sslkit/optim.hpp"

namespace sslkit::model {

using namespace sslkit::ad;

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::default_task: return "default";
    case Scenario::unknown_source_signal: return "unknown_source_signal";
    case Scenario::faulty_mic_scene_a: return "faulty_mic_scene_A";
    case Scenario::faulty_mic_scene_b: return "faulty_mic_scene_B";
    case Scenario::multi_source: return "multi_source";
  }
  return "default";
}

Scenario scenario_from_name(const std::string& name) {
  if (name == "default") return Scenario::default_task;
  if (name == "unknown_source_signal") return Scenario::unknown_source_signal;
  if (name == "faulty_mic_scene_A") return Scenario::faulty_mic_scene_a;
  if (name == "faulty_mic_scene_B") return Scenario::faulty_mic_scene_b;
  if (name == "multi_source") return Scenario::multi_source;
  throw ConfigError("unknown scenario: " + name);
}

void ModelConfig::validate() const {
  if (embed_dim < 2) throw ConfigError("embed_dim must be >= 2");
  if (num_heads < 1 || embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim must be divisible by num_heads");
  }
  if (num_blocks < 0 || num_decoder_blocks < 0) {
    throw ConfigError("block counts must be non-negative");
  }
  if (top_t < 1) throw ConfigError("top_t must be >= 1");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) {
    throw ConfigError("mask_ratio must lie in [0, 1)");
  }
  if (lambda_sound < 0.0 || lambda_mloc < 0.0 || lambda_sloc < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (num_sources < 1) throw ConfigError("num_sources must be >= 1");
  if (filterbank_size < 1) throw ConfigError("filterbank_size must be >= 1");
  if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
  if (num_mics < 1) throw ConfigError("num_mics must be >= 1");
  if (audio_len < 2) throw ConfigError("audio_len must be >= 2");
  if (tau_max < 1) throw ConfigError("tau_max must be >= 1");
}

// --- featurize ----------------------------------------------------------------

SceneInput featurize(const sim::SceneRecording& recording,
                     const ModelConfig& config, const dsp::FilterBank& bank,
                     const SpectrogramEncoder& encoder, Scenario scenario) {
  const int m = recording.num_mics();
  const int n = recording.num_samples();
  const int k = static_cast<int>(recording.sources.size());
  if (m < 2) throw ConfigError("featurize needs at least two microphones");
  if (config.tau_max >= n) {
    throw ConfigError("tau_max must be below the recording length");
  }

  SceneInput input;
  input.scenario = scenario;
  input.mic_waveforms = recording.channels;
  input.mic_positions.resize(m, 3);
  input.faulty.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    input.mic_positions.row(i) = recording.mics[static_cast<std::size_t>(i)]
                                     .position.transpose();
    input.faulty[static_cast<std::size_t>(i)] =
        !recording.mics[static_cast<std::size_t>(i)].known_position;
  }
  input.source_positions.resize(k, 3);
  input.source_audio_emb.resize(k, config.embed_dim);
  for (int s = 0; s < k; ++s) {
    input.source_positions.row(s) =
        recording.sources[static_cast<std::size_t>(s)].position.transpose();
    input.source_audio_emb.row(s) =
        encoder.encode(recording.sources[static_cast<std::size_t>(s)].signal)
            .transpose();
  }

  input.mic_audio_emb.resize(m, config.embed_dim);
  for (int i = 0; i < m; ++i) {
    input.mic_audio_emb.row(i) =
        encoder.encode(recording.channels.row(i).transpose()).transpose();
  }

  // Coherence-weighted sum of the per-filter correlation responses over all
  // ordered microphone pairs; the (j, i) orientation is the lag-reverse of
  // (i, j), so the aggregate is invariant to microphone ordering. The
  // trainable combination weights multiply these rows.
  const int fs_segment = std::min(256, n / 2);
  const double fs = recording.room.sample_rate;
  input.filter_responses =
      Eigen::MatrixXd::Zero(bank.size(), config.feature_len());
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const Eigen::VectorXd si = recording.channels.row(i).transpose();
      const Eigen::VectorXd sj = recording.channels.row(j).transpose();
      const std::vector<dsp::CorrelationFeature> responses =
          dsp::ngcc_filter_responses(si, sj, bank, config.tau_max, fs);
      const dsp::CoherenceProfile prof = dsp::coherence(
          dsp::welch_psd(si, sj, fs_segment, fs_segment / 2, fs));
      const double weight = std::pow(prof.mean(), config.alpha);
      for (int p = 0; p < bank.size(); ++p) {
        const Eigen::VectorXd& v =
            responses[static_cast<std::size_t>(p)].values;
        input.filter_responses.row(p) +=
            weight * (v + v.reverse()).transpose();
      }
    }
  }
  return input;
}

// --- model ----------------------------------------------------------------------

Tensor SslModel::register_param(const std::string& name, Tensor t) {
  params_.emplace_back(name, t);
  return t;
}

AttentionParams SslModel::register_attention(const std::string& prefix, int dim,
                                             int heads, Rng& rng) {
  AttentionParams p = make_attention(dim, heads, rng);
  register_param(prefix + ".w_q", p.w_q);
  register_param(prefix + ".w_k", p.w_k);
  register_param(prefix + ".w_v", p.w_v);
  register_param(prefix + ".w_o", p.w_o);
  return p;
}

TransformerBlock SslModel::register_block(const std::string& prefix, Rng& rng) {
  TransformerBlock b =
      make_block(config_.embed_dim, config_.num_heads, config_.ffn_mult, rng);
  register_param(prefix + ".attn.w_q", b.attn.w_q);
  register_param(prefix + ".attn.w_k", b.attn.w_k);
  register_param(prefix + ".attn.w_v", b.attn.w_v);
  register_param(prefix + ".attn.w_o", b.attn.w_o);
  register_param(prefix + ".ln1_gain", b.ln1_gain);
  register_param(prefix + ".ln1_bias", b.ln1_bias);
  register_param(prefix + ".ffn_w1", b.ffn_w1);
  register_param(prefix + ".ffn_b1", b.ffn_b1);
  register_param(prefix + ".ffn_w2", b.ffn_w2);
  register_param(prefix + ".ffn_b2", b.ffn_b2);
  register_param(prefix + ".ln2_gain", b.ln2_gain);
  register_param(prefix + ".ln2_bias", b.ln2_bias);
  return b;
}

SslModel::SslModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      encoder_(config.embed_dim, config.stft_frame),
      bank_shapes_(dsp::FilterBank::mel(config.filterbank_size, 16000.0)) {
  config_.validate();
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  const int d = config_.embed_dim;

  fb_weights_ = register_param(
      "filterbank.weights",
      Tensor::from_matrix(Mat::Constant(1, config_.filterbank_size,
                                        1.0 / config_.filterbank_size),
                          true));

  pos_w1_ = register_param("position_encoder.w1", param_xavier(3, d, rng));
  pos_b1_ = register_param("position_encoder.b1", param_zeros(1, d));
  pos_w2_ = register_param("position_encoder.w2", param_xavier(d, d, rng));
  pos_b2_ = register_param("position_encoder.b2", param_zeros(1, d));

  tdoa_w_ = register_param("tdoa_encoder.w",
                           param_xavier(config_.feature_len(), d, rng));
  tdoa_b_ = register_param("tdoa_encoder.b", param_zeros(1, d));

  a2p_ = register_attention("fusion.a2p", d, config_.num_heads, rng);
  a2p_ln_g_ = register_param("fusion.a2p.ln_gain", param_ones(1, d));
  a2p_ln_b_ = register_param("fusion.a2p.ln_bias", param_zeros(1, d));

  joint_ = register_attention("fusion.tdoa", d, config_.num_heads, rng);
  joint_ln_g_ = register_param("fusion.tdoa.ln_gain", param_ones(1, d));
  joint_ln_b_ = register_param("fusion.tdoa.ln_bias", param_zeros(1, d));

  mask_emb_ = register_param("mask_embedding", param_normal(1, d, 0.02, rng));
  source_queries_ = register_param("source_queries",
                                   param_normal(config_.num_sources, d, 0.02, rng));

  for (int i = 0; i < config_.num_blocks; ++i) {
    enc_blocks_.push_back(register_block("encoder.block" + std::to_string(i), rng));
  }
  for (int i = 0; i < config_.num_decoder_blocks; ++i) {
    dec_blocks_.push_back(register_block("decoder.block" + std::to_string(i), rng));
  }

  head_audio_w_ = register_param("head.audio_emb.w", param_xavier(d, d, rng));
  head_audio_b_ = register_param("head.audio_emb.b", param_zeros(1, d));
  head_pos_w_ = register_param("head.pos_emb.w", param_xavier(d, d, rng));
  head_pos_b_ = register_param("head.pos_emb.b", param_zeros(1, d));

  decode_ = register_attention("decode.tdoa", d, config_.num_heads, rng);
  decode_ln_g_ = register_param("decode.tdoa.ln_gain", param_ones(1, d));
  decode_ln_b_ = register_param("decode.tdoa.ln_bias", param_zeros(1, d));

  inv_w1_ = register_param("audio_inverse.w1", param_xavier(d, d, rng));
  inv_b1_ = register_param("audio_inverse.b1", param_zeros(1, d));
  inv_w2_ = register_param("audio_inverse.w2",
                           param_xavier(d, config_.audio_len, rng));
  inv_b2_ = register_param("audio_inverse.b2", param_zeros(1, config_.audio_len));

  posdec_w1_ = register_param("position_decoder.w1", param_xavier(d, d, rng));
  posdec_b1_ = register_param("position_decoder.b1", param_zeros(1, d));
  posdec_w2_ = register_param("position_decoder.w2", param_xavier(d, 3, rng));
  posdec_b2_ = register_param("position_decoder.b2", param_zeros(1, 3));
}

dsp::FilterBank SslModel::filterbank() const {
  dsp::FilterBank bank = bank_shapes_;
  bank.combination_weights = fb_weights_.values().row(0).transpose();
  bank.trainable = true;
  return bank;
}

std::vector<Tensor> SslModel::trainable_params() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    (void)name;
    out.push_back(t);
  }
  return out;
}

Eigen::VectorXd SslModel::encode_audio(const Eigen::VectorXd& wave) const {
  return encoder_.encode(wave);
}

Tensor SslModel::encode_positions(const Tensor& xyz) const {
  if (xyz.cols() != 3) throw ShapeError("positions must be (n, 3)");
  const Tensor h = gelu(add(matmul(xyz, pos_w1_), pos_b1_));
  return add(matmul(h, pos_w2_), pos_b2_);
}

Tensor SslModel::encode_tdoa(const Tensor& weighted_feature) const {
  if (weighted_feature.cols() != config_.feature_len()) {
    throw ShapeError("weighted feature length mismatch");
  }
  return gelu(add(matmul(weighted_feature, tdoa_w_), tdoa_b_));
}

MaskPlan SslModel::make_mask_plan(const SceneInput& input,
                                  Rng* training_rng) const {
  const int m = input.num_mics();
  MaskPlan plan;
  plan.audio_masked.assign(static_cast<std::size_t>(m), false);
  plan.pos_masked.assign(static_cast<std::size_t>(m), false);
  for (int i = 0; i < m; ++i) {
    if (training_rng != nullptr && config_.mask_ratio > 0.0) {
      plan.audio_masked[static_cast<std::size_t>(i)] =
          training_rng->uniform() < config_.mask_ratio;
    }
    plan.pos_masked[static_cast<std::size_t>(i)] =
        input.faulty[static_cast<std::size_t>(i)];
  }
  const bool all_masked =
      std::all_of(plan.audio_masked.begin(), plan.audio_masked.end(),
                  [](bool b) { return b; });
  if (all_masked && m > 0) {
    plan.audio_masked[0] = false;
    std::fprintf(stderr, "sslkit: every audio token masked; keeping mic 0\n");
  }
  plan.source_audio_masked =
      input.scenario == Scenario::unknown_source_signal;
  return plan;
}

TokenSet SslModel::build_tokens(const SceneInput& input,
                                const MaskPlan& plan) const {
  const int m = input.num_mics();
  const int k = input.num_sources();
  if (static_cast<int>(plan.audio_masked.size()) != m ||
      static_cast<int>(plan.pos_masked.size()) != m) {
    throw ShapeError("mask plan does not match the microphone count");
  }
  const bool scene_b = input.scenario == Scenario::faulty_mic_scene_b;
  if (!scene_b && k != config_.num_sources) {
    throw ConfigError("scene source count differs from the model's source slots");
  }

  TokenSet tok;
  tok.num_mic_tokens = m;
  tok.num_source_tokens = k;

  // Audio slots.
  std::vector<Tensor> audio_rows;
  audio_rows.reserve(static_cast<std::size_t>(m + k));
  for (int i = 0; i < m; ++i) {
    if (plan.audio_masked[static_cast<std::size_t>(i)]) {
      audio_rows.push_back(mask_emb_);
      tok.audio_masked.push_back(true);
    } else {
      audio_rows.push_back(
          Tensor::from_matrix(input.mic_audio_emb.row(i)));
      tok.audio_masked.push_back(false);
    }
  }
  for (int s = 0; s < k; ++s) {
    if (!scene_b && plan.source_audio_masked) {
      audio_rows.push_back(mask_emb_);
      tok.audio_masked.push_back(true);
    } else {
      audio_rows.push_back(
          Tensor::from_matrix(input.source_audio_emb.row(s)));
      tok.audio_masked.push_back(false);
    }
  }
  tok.audio_slots = concat(audio_rows, 0);

  // Position slots. Microphone positions run through the position encoder in
  // one batch; masked rows swap in the mask embedding.
  const Tensor mic_pos_emb =
      encode_positions(Tensor::from_matrix(input.mic_positions));
  std::vector<Tensor> pos_rows;
  pos_rows.reserve(static_cast<std::size_t>(m + k));
  for (int i = 0; i < m; ++i) {
    if (plan.pos_masked[static_cast<std::size_t>(i)]) {
      pos_rows.push_back(mask_emb_);
      tok.pos_masked.push_back(true);
    } else {
      pos_rows.push_back(slice(mic_pos_emb, 0, i, 1));
      tok.pos_masked.push_back(false);
    }
  }
  for (int s = 0; s < k; ++s) {
    if (scene_b) {
      pos_rows.push_back(encode_positions(
          Tensor::from_matrix(input.source_positions.row(s))));
      tok.pos_masked.push_back(false);
    } else {
      pos_rows.push_back(slice(source_queries_, 0, s, 1));
      tok.pos_masked.push_back(true);  // source position is the query target
    }
  }
  tok.pos_slots = concat(pos_rows, 0);

  // Shared TDOA embedding from the coherence-weighted filter responses.
  const Tensor f_w =
      matmul(fb_weights_, Tensor::from_matrix(input.filter_responses));
  tok.tdoa_embedding = encode_tdoa(f_w);
  return tok;
}

SslModel::Forward SslModel::forward(const SceneInput& input,
                                    const MaskPlan& plan) const {
  if (input.num_mics() != config_.num_mics) {
    throw ConfigError("microphone count differs from the training token budget");
  }
  if (input.mic_waveforms.cols() != config_.audio_len) {
    throw ConfigError("recording length differs from the configured audio_len");
  }
  TokenSet tok = build_tokens(input, plan);
  const bool scene_b = input.scenario == Scenario::faulty_mic_scene_b;

  // Coordinate fusion: audio queries against position keys/values.
  const Tensor f_a2p = cross_attention(tok.audio_slots, tok.pos_slots, a2p_);
  const Tensor f_fuse =
      fuse_residual(f_a2p, tok.audio_slots, a2p_ln_g_, a2p_ln_b_);

  // TDOA fusion through sparse attention onto the shared embedding.
  const Tensor joint_att = sparse_cross_attention(f_fuse, tok.tdoa_embedding,
                                                  joint_, config_.top_t);
  const Tensor f_joint =
      fuse_residual(joint_att, f_fuse, joint_ln_g_, joint_ln_b_);

  Tensor h = f_joint;
  for (const TransformerBlock& block : enc_blocks_) h = apply_block(block, h);
  Tensor dec = h;
  for (const TransformerBlock& block : dec_blocks_) dec = apply_block(block, dec);

  Forward out;
  out.num_tokens = tok.num_mic_tokens + tok.num_source_tokens;
  out.recon_audio_emb = add(matmul(dec, head_audio_w_), head_audio_b_);
  out.recon_pos_emb = add(matmul(dec, head_pos_w_), head_pos_b_);

  // Audio reconstruction for the masked microphone tokens.
  for (int i = 0; i < tok.num_mic_tokens; ++i) {
    if (tok.audio_masked[static_cast<std::size_t>(i)]) {
      out.audio_masked_ids.push_back(i);
    }
  }
  if (!out.audio_masked_ids.empty()) {
    std::vector<Tensor> rows;
    rows.reserve(out.audio_masked_ids.size());
    for (int id : out.audio_masked_ids) {
      rows.push_back(slice(out.recon_audio_emb, 0, id, 1));
    }
    const Tensor packed = concat(rows, 0);
    const Tensor hidden = gelu(add(matmul(packed, inv_w1_), inv_b1_));
    out.reconstructed_audio = add(matmul(hidden, inv_w2_), inv_b2_);
  }

  // Position decoding: reconstructed position embeddings queried against the
  // TDOA embedding, then a two-layer MLP down to coordinates.
  const Tensor z_att = sparse_cross_attention(out.recon_pos_emb,
                                              tok.tdoa_embedding, decode_,
                                              config_.top_t);
  const Tensor z =
      fuse_residual(z_att, out.recon_pos_emb, decode_ln_g_, decode_ln_b_);
  const Tensor zh = gelu(add(matmul(z, posdec_w1_), posdec_b1_));
  const Tensor positions = add(matmul(zh, posdec_w2_), posdec_b2_);  // (T, 3)

  for (int i = 0; i < tok.num_mic_tokens; ++i) {
    if (tok.pos_masked[static_cast<std::size_t>(i)]) {
      out.masked_mic_ids.push_back(i);
    }
  }
  if (!out.masked_mic_ids.empty()) {
    std::vector<Tensor> rows;
    for (int id : out.masked_mic_ids) rows.push_back(slice(positions, 0, id, 1));
    out.masked_mic_positions = concat(rows, 0);
  }
  if (!scene_b && tok.num_source_tokens > 0) {
    out.source_positions =
        slice(positions, 0, tok.num_mic_tokens, tok.num_source_tokens);
  }
  return out;
}

std::vector<int> match_sources(const Eigen::MatrixXd& predicted,
                               const Eigen::MatrixXd& truth) {
  const int k = static_cast<int>(predicted.rows());
  if (truth.rows() != k) throw ShapeError("source count mismatch");
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  if (k <= 1) return perm;
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int i = 0; i < k; ++i) {
      cost += (predicted.row(i) - truth.row(perm[static_cast<std::size_t>(i)]))
                  .norm();
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::pair<Tensor, LossBreakdown> SslModel::total_loss(
    const Forward& fwd, const SceneInput& input) const {
  // Audio reconstruction over the masked microphone tokens.
  Tensor sound = Tensor::scalar(0.0);
  if (!fwd.audio_masked_ids.empty()) {
    if (input.mic_waveforms.rows() != input.num_mics()) {
      throw DataError("missing ground-truth waveforms for masked audio");
    }
    Mat targets(static_cast<int>(fwd.audio_masked_ids.size()),
                input.mic_waveforms.cols());
    for (std::size_t r = 0; r < fwd.audio_masked_ids.size(); ++r) {
      targets.row(static_cast<Eigen::Index>(r)) =
          input.mic_waveforms.row(fwd.audio_masked_ids[r]);
    }
    sound = sum_squares(fwd.reconstructed_audio - Tensor::from_matrix(targets));
  }

  // Position loss for position-masked microphones.
  Tensor mloc = Tensor::scalar(0.0);
  if (!fwd.masked_mic_ids.empty()) {
    Mat truth(static_cast<int>(fwd.masked_mic_ids.size()), 3);
    for (std::size_t r = 0; r < fwd.masked_mic_ids.size(); ++r) {
      truth.row(static_cast<Eigen::Index>(r)) =
          input.mic_positions.row(fwd.masked_mic_ids[r]);
    }
    mloc = sum_squares(fwd.masked_mic_positions - Tensor::from_matrix(truth));
  }

  // Squared-distance matching between predicted sources and the anchors
  // (known microphones plus the other predicted sources).
  Tensor sloc = Tensor::scalar(0.0);
  if (fwd.source_positions.defined()) {
    const Eigen::MatrixXd pred = [&] {
      Eigen::MatrixXd p(fwd.source_positions.rows(), 3);
      p = fwd.source_positions.values();
      return p;
    }();
    const std::vector<int> perm = match_sources(pred, input.source_positions);
    std::vector<Eigen::RowVector3d> anchors;
    for (int i = 0; i < input.num_mics(); ++i) {
      if (!input.faulty[static_cast<std::size_t>(i)]) {
        anchors.push_back(input.mic_positions.row(i));
      }
    }
    const int k = fwd.source_positions.rows();
    bool first = true;
    for (int i = 0; i < k; ++i) {
      const Tensor pred_i = slice(fwd.source_positions, 0, i, 1);
      const Eigen::RowVector3d gt_i =
          input.source_positions.row(perm[static_cast<std::size_t>(i)]);
      for (const Eigen::RowVector3d& a : anchors) {
        Mat am(1, 3);
        am = a;
        const Tensor d2_pred = sum_squares(pred_i - Tensor::from_matrix(am));
        const double d2_true = (gt_i - a).squaredNorm();
        const Tensor term = abs_t(add_const(d2_pred, -d2_true));
        sloc = first ? term : add(sloc, term);
        first = false;
      }
      for (int j = i + 1; j < k; ++j) {
        const Tensor pred_j = slice(fwd.source_positions, 0, j, 1);
        const Eigen::RowVector3d gt_j =
            input.source_positions.row(perm[static_cast<std::size_t>(j)]);
        const Tensor d2_pred = sum_squares(pred_i - pred_j);
        const double d2_true = (gt_i - gt_j).squaredNorm();
        const Tensor term = abs_t(add_const(d2_pred, -d2_true));
        sloc = first ? term : add(sloc, term);
        first = false;
      }
    }
  }

  const Tensor total = add(add(scale(sound, config_.lambda_sound),
                               scale(mloc, config_.lambda_mloc)),
                           scale(sloc, config_.lambda_sloc));
  LossBreakdown breakdown;
  breakdown.sound_term = sound.value();
  breakdown.mloc_term = mloc.value();
  breakdown.sloc_term = sloc.value();
  breakdown.total = total.value();
  return {total, breakdown};
}

Prediction SslModel::infer(const SceneInput& input) const {
  const MaskPlan plan = make_mask_plan(input, nullptr);
  const Forward fwd = forward(input, plan);

  Prediction pred;
  pred.recon_audio_emb = fwd.recon_audio_emb.values();
  pred.recon_pos_emb = fwd.recon_pos_emb.values();
  if (fwd.source_positions.defined()) {
    pred.source_positions = fwd.source_positions.values();
  }
  for (std::size_t r = 0; r < fwd.masked_mic_ids.size(); ++r) {
    pred.mic_positions.emplace_back(
        fwd.masked_mic_ids[r],
        fwd.masked_mic_positions.values().row(static_cast<Eigen::Index>(r))
            .transpose());
  }
  for (std::size_t r = 0; r < fwd.audio_masked_ids.size(); ++r) {
    pred.reconstructed_audio.emplace_back(
        fwd.audio_masked_ids[r],
        fwd.reconstructed_audio.values().row(static_cast<Eigen::Index>(r))
            .transpose());
  }
  return pred;
}

// --- training -------------------------------------------------------------------

std::vector<EpochStats> train(SslModel& model,
                              const std::vector<SceneInput>& scenes,
                              const TrainConfig& config) {
  if (scenes.empty()) throw ConfigError("training needs a non-empty dataset");
  if (config.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  Adam opt(model.trainable_params(), adam_cfg);

  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path, std::ios::app);
    if (!log) throw FormatError("cannot open training log: " + config.log_path);
  }

  std::vector<EpochStats> curve;
  std::vector<int> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    opt.epoch_schedule(epoch);
    Rng shuffle_rng(derive_seed(config.seed, 0x73687566ULL,
                                static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = opt.learning_rate();

    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), cursor + static_cast<std::size_t>(config.batch_size));
      opt.zero_grad();
      Tape tape;
      Tensor batch_loss = Tensor::scalar(0.0);
      int count = 0;
      for (std::size_t b = cursor; b < batch_end; ++b) {
        const SceneInput& scene = scenes[static_cast<std::size_t>(order[b])];
        Rng mask_rng(derive_seed(config.seed, 0x6d61736bULL,
                                 (static_cast<std::uint64_t>(epoch) << 32) ^
                                     static_cast<std::uint64_t>(order[b])));
        const MaskPlan plan = model.make_mask_plan(scene, &mask_rng);
        const SslModel::Forward fwd = model.forward(scene, plan);
        auto [loss, breakdown] = model.total_loss(fwd, scene);
        batch_loss = count == 0 ? loss : add(batch_loss, loss);
        ++count;
        stats.total += breakdown.total;
        stats.sound += breakdown.sound_term;
        stats.mloc += breakdown.mloc_term;
        stats.sloc += breakdown.sloc_term;
      }
      batch_loss = scale(batch_loss, 1.0 / count);
      if (!std::isfinite(batch_loss.value())) {
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch));
      }
      tape.backward(batch_loss);
      opt.step();
      cursor = batch_end;
    }

    const double n = static_cast<double>(scenes.size());
    stats.total /= n;
    stats.sound /= n;
    stats.mloc /= n;
    stats.sloc /= n;
    curve.push_back(stats);

    if (log.is_open()) {
      nlohmann::json line{{"epoch", stats.epoch},
                          {"lr", stats.learning_rate},
                          {"total", stats.total},
                          {"sound", stats.sound},
                          {"mloc", stats.mloc},
                          {"sloc", stats.sloc}};
      log << line.dump() << "\n";
    }
  }

  if (!config.checkpoint_path.empty()) {
    nlohmann::json hyper{{"embed_dim", model.config().embed_dim},
                         {"num_mics", model.config().num_mics},
                         {"num_sources", model.config().num_sources},
                         {"audio_len", model.config().audio_len},
                         {"tau_max", model.config().tau_max}};
    ad::save_checkpoint(config.checkpoint_path, model.named_params(),
                        hyper.dump());
  }
  return curve;
}

}  // namespace sslkit::model
