#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

#include "sslkit/common.hpp"
#include "sslkit/rng.hpp"

namespace sslkit::sim {

// Shoebox room. Wall order for absorption: x=0, x=Lx, y=0, y=Ly, z=0, z=Lz.
struct RoomSpec {
  Vec3 dimensions{7.0, 8.0, 2.0};
  std::array<double, 6> wall_absorption{0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  double speed_of_sound = 343.0;
  double sample_rate = 16000.0;
  int max_reflection_order = 1;

  void validate() const;
  bool inside(const Vec3& p, double margin = 0.0) const;
  double diagonal() const { return dimensions.norm(); }
};

struct MicSpec {
  Vec3 position = Vec3::Zero();
  bool known_position = true;  // false: recording usable, position unknown
  int id = 0;
};

enum class SignalKind { white_noise, tone, speech_like_ar };

struct SourceSpec {
  Vec3 position = Vec3::Zero();
  Eigen::VectorXd signal;
  SignalKind kind = SignalKind::white_noise;
};

Eigen::VectorXd make_signal(SignalKind kind, int length, double sample_rate,
                            Rng& rng);

struct ImpulseResponse {
  Eigen::VectorXd taps;
  int source_id = -1;
  int mic_id = -1;
};

// Fractional image delays: rounded to the nearest sample (exact oracle
// behaviour) or spread over a windowed-sinc kernel.
enum class DelayModel { nearest, sinc };

ImpulseResponse generate_rir(const RoomSpec& room, const Vec3& source,
                             const Vec3& mic,
                             DelayModel delay_model = DelayModel::nearest);

struct SceneRecording {
  RoomSpec room;
  std::vector<MicSpec> mics;
  std::vector<SourceSpec> sources;
  Eigen::MatrixXd channels;  // mics.size() x N, one row per microphone
  double noise_std = 0.0;
  std::uint64_t rng_seed = 0;

  int num_mics() const { return static_cast<int>(mics.size()); }
  int num_samples() const { return static_cast<int>(channels.cols()); }
};

// Renders each channel as the sum over sources of conv(rir, signal),
// truncated to the signal length, plus i.i.d. Gaussian noise. num_samples
// overrides the channel length; required when there are no sources.
SceneRecording render_mixture(const RoomSpec& room,
                              const std::vector<MicSpec>& mics,
                              const std::vector<SourceSpec>& sources,
                              double noise_std, std::uint64_t seed,
                              DelayModel delay_model = DelayModel::nearest,
                              int num_samples = -1);

struct SceneSpec {
  std::vector<MicSpec> mics;
  std::vector<SourceSpec> sources;
};

// Uniform placement with a 10 cm wall margin and 10 cm pairwise separation.
// Exactly `faulty` microphones get known_position = false.
SceneSpec sample_scene(const RoomSpec& room, int num_mics, int num_sources,
                       int faulty, std::uint64_t seed, int signal_len = 2048,
                       SignalKind kind = SignalKind::white_noise);

constexpr double kPlacementMargin = 0.10;     // meters, from every wall
constexpr double kPlacementSeparation = 0.10;  // meters, pairwise

}  // namespace sslkit::sim
