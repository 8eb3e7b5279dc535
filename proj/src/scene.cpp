#include "sslkit/acoustics.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace sslkit::sim {

namespace {

constexpr double kPi = std::numbers::pi;

// Minimum source-microphone distance before the 1/(4*pi*d) gain blows up.
constexpr double kCoincidenceEps = 1e-3;

double hann(double x, double half_width) {
  return 0.5 * (1.0 + std::cos(kPi * x / half_width));
}

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x); }

}  // namespace

void RoomSpec::validate() const {
  if (!(dimensions.array() > 0.0).all()) {
    throw GeometryError("room dimensions must be positive");
  }
  for (double a : wall_absorption) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw GeometryError("wall absorption must lie in [0, 1]");
    }
  }
  if (!(speed_of_sound > 0.0)) throw GeometryError("speed of sound must be positive");
  if (!(sample_rate > 0.0)) throw GeometryError("sample rate must be positive");
  if (max_reflection_order < 0) {
    throw GeometryError("reflection order must be non-negative");
  }
}

bool RoomSpec::inside(const Vec3& p, double margin) const {
  return (p.array() > margin).all() &&
         (p.array() < dimensions.array() - margin).all();
}

Eigen::VectorXd make_signal(SignalKind kind, int length, double sample_rate,
                            Rng& rng) {
  if (length <= 0) throw ShapeError("signal length must be positive");
  Eigen::VectorXd s(length);
  switch (kind) {
    case SignalKind::white_noise:
      for (int n = 0; n < length; ++n) s[n] = rng.normal();
      break;
    case SignalKind::tone: {
      const double freq = rng.uniform(100.0, 4000.0);
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      for (int n = 0; n < length; ++n) {
        s[n] = std::sin(2.0 * kPi * freq * n / sample_rate + phase);
      }
      break;
    }
    case SignalKind::speech_like_ar: {
      // Two fixed resonances excited by white noise, normalized to unit RMS.
      const double f1 = 500.0, r1 = 0.95;
      const double f2 = 1500.0, r2 = 0.90;
      const double c1 = 2.0 * r1 * std::cos(2.0 * kPi * f1 / sample_rate);
      const double c2 = 2.0 * r2 * std::cos(2.0 * kPi * f2 / sample_rate);
      // Cascade of the two AR(2) sections.
      Eigen::VectorXd u(length);
      for (int n = 0; n < length; ++n) u[n] = rng.normal();
      Eigen::VectorXd v = Eigen::VectorXd::Zero(length);
      for (int n = 0; n < length; ++n) {
        v[n] = u[n] + (n >= 1 ? c1 * v[n - 1] : 0.0) -
               (n >= 2 ? r1 * r1 * v[n - 2] : 0.0);
      }
      for (int n = 0; n < length; ++n) {
        s[n] = v[n] + (n >= 1 ? c2 * s[n - 1] : 0.0) -
               (n >= 2 ? r2 * r2 * s[n - 2] : 0.0);
      }
      const double rms = std::sqrt(s.squaredNorm() / length);
      if (rms > 0.0) s /= rms;
      break;
    }
  }
  return s;
}

ImpulseResponse generate_rir(const RoomSpec& room, const Vec3& source,
                             const Vec3& mic, DelayModel delay_model) {
  room.validate();
  if (!room.inside(source)) throw GeometryError("source outside room");
  if (!room.inside(mic)) throw GeometryError("microphone outside room");
  if ((source - mic).norm() < kCoincidenceEps) {
    throw GeometryError("source coincident with microphone");
  }

  // Amplitude reflection coefficient per wall; absorption is an energy
  // fraction, so beta = sqrt(1 - absorption).
  std::array<double, 6> beta{};
  for (int w = 0; w < 6; ++w) beta[w] = std::sqrt(1.0 - room.wall_absorption[w]);

  const int order = room.max_reflection_order;
  const double samples_per_meter = room.sample_rate / room.speed_of_sound;

  struct Image {
    double distance;
    double amplitude;
  };
  std::vector<Image> images;

  const Vec3 L = room.dimensions;
  for (int nx = -order; nx <= order; ++nx) {
    for (int ny = -order; ny <= order; ++ny) {
      for (int nz = -order; nz <= order; ++nz) {
        for (int q = 0; q < 8; ++q) {
          const int qx = q & 1, qy = (q >> 1) & 1, qz = (q >> 2) & 1;
          const int bounces = std::abs(nx - qx) + std::abs(nx) +
                              std::abs(ny - qy) + std::abs(ny) +
                              std::abs(nz - qz) + std::abs(nz);
          if (bounces > order) continue;
          const Vec3 img((1 - 2 * qx) * source.x() + 2.0 * nx * L.x(),
                         (1 - 2 * qy) * source.y() + 2.0 * ny * L.y(),
                         (1 - 2 * qz) * source.z() + 2.0 * nz * L.z());
          const double dist = (img - mic).norm();
          double amp = 1.0 / (4.0 * kPi * dist);
          amp *= std::pow(beta[0], std::abs(nx - qx)) * std::pow(beta[1], std::abs(nx));
          amp *= std::pow(beta[2], std::abs(ny - qy)) * std::pow(beta[3], std::abs(ny));
          amp *= std::pow(beta[4], std::abs(nz - qz)) * std::pow(beta[5], std::abs(nz));
          images.push_back({dist, amp});
        }
      }
    }
  }

  double max_delay = 0.0;
  for (const Image& im : images) {
    if (im.amplitude == 0.0) continue;  // fully absorbed path
    max_delay = std::max(max_delay, im.distance * samples_per_meter);
  }

  ImpulseResponse rir;
  if (delay_model == DelayModel::nearest) {
    const int len = static_cast<int>(std::llround(max_delay)) + 1;
    rir.taps = Eigen::VectorXd::Zero(len);
    for (const Image& im : images) {
      const int idx =
          static_cast<int>(std::llround(im.distance * samples_per_meter));
      rir.taps[idx] += im.amplitude;
    }
  } else {
    // Windowed sinc, 64-sample half-width, Hann taper.
    const int half = 64;
    const int len = static_cast<int>(std::ceil(max_delay)) + half + 1;
    rir.taps = Eigen::VectorXd::Zero(len);
    for (const Image& im : images) {
      const double delay = im.distance * samples_per_meter;
      const int lo = std::max(0, static_cast<int>(std::floor(delay)) - half);
      const int hi =
          std::min(len - 1, static_cast<int>(std::ceil(delay)) + half);
      for (int i = lo; i <= hi; ++i) {
        const double x = i - delay;
        rir.taps[i] += im.amplitude * sinc(x) * hann(x, half + 1.0);
      }
    }
  }
  return rir;
}

SceneRecording render_mixture(const RoomSpec& room,
                              const std::vector<MicSpec>& mics,
                              const std::vector<SourceSpec>& sources,
                              double noise_std, std::uint64_t seed,
                              DelayModel delay_model, int num_samples) {
  room.validate();
  if (mics.empty()) throw GeometryError("at least one microphone required");
  if (noise_std < 0.0) throw ConfigError("noise std must be non-negative");

  int n = num_samples;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const int len = static_cast<int>(sources[k].signal.size());
    if (len <= 0) throw ShapeError("source signal is empty");
    if (k == 0 && n <= 0) {
      n = len;
    } else if (len != n) {
      throw ShapeError("source signals must share one length");
    }
  }
  if (n <= 0) {
    throw ShapeError("num_samples must be given when there are no sources");
  }

  SceneRecording rec;
  rec.room = room;
  rec.mics = mics;
  rec.sources = sources;
  rec.noise_std = noise_std;
  rec.rng_seed = seed;
  rec.channels = Eigen::MatrixXd::Zero(static_cast<int>(mics.size()), n);

  for (std::size_t m = 0; m < mics.size(); ++m) {
    for (std::size_t k = 0; k < sources.size(); ++k) {
      ImpulseResponse rir =
          generate_rir(room, sources[k].position, mics[m].position, delay_model);
      rir.source_id = static_cast<int>(k);
      rir.mic_id = mics[m].id;
      const Eigen::VectorXd& s = sources[k].signal;
      const int taps = static_cast<int>(rir.taps.size());
      for (int t = 0; t < n; ++t) {
        double acc = 0.0;
        const int jmax = std::min(taps - 1, t);
        for (int j = 0; j <= jmax; ++j) acc += rir.taps[j] * s[t - j];
        rec.channels(static_cast<int>(m), t) += acc;
      }
    }
    if (noise_std > 0.0) {
      Rng noise(derive_seed(seed, 0x6e6f6973ULL, static_cast<std::uint64_t>(m)));
      for (int t = 0; t < n; ++t) {
        rec.channels(static_cast<int>(m), t) += noise_std * noise.normal();
      }
    }
  }
  return rec;
}

namespace {

Vec3 sample_point(const RoomSpec& room, Rng& rng) {
  Vec3 p;
  for (int a = 0; a < 3; ++a) {
    p[a] = rng.uniform(kPlacementMargin, room.dimensions[a] - kPlacementMargin);
  }
  return p;
}

bool separated(const Vec3& p, const std::vector<Vec3>& placed) {
  for (const Vec3& q : placed) {
    if ((p - q).norm() < kPlacementSeparation) return false;
  }
  return true;
}

}  // namespace

SceneSpec sample_scene(const RoomSpec& room, int num_mics, int num_sources,
                       int faulty, std::uint64_t seed, int signal_len,
                       SignalKind kind) {
  room.validate();
  if (num_mics < 1) throw ConfigError("need at least one microphone");
  if (num_sources < 1) throw ConfigError("need at least one source");
  if (faulty < 0 || faulty > num_mics) {
    throw ConfigError("faulty count must lie in [0, M]");
  }
  if ((room.dimensions.array() <= 2.0 * kPlacementMargin).any()) {
    throw SamplingError("room too small for wall margin");
  }

  Rng rng(seed);
  const int total = num_mics + num_sources;
  std::vector<Vec3> placed;
  placed.reserve(total);
  constexpr int kMaxTries = 1000;
  for (int i = 0; i < total; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
      Vec3 p = sample_point(room, rng);
      if (separated(p, placed)) {
        placed.push_back(p);
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw SamplingError("could not place " + std::to_string(total) +
                          " points with the required separation");
    }
  }

  // Faulty flags: random subset of size `faulty`, order via seeded shuffle.
  std::vector<int> idx(num_mics);
  for (int i = 0; i < num_mics; ++i) idx[i] = i;
  rng.shuffle(idx);

  SceneSpec spec;
  spec.mics.resize(num_mics);
  for (int m = 0; m < num_mics; ++m) {
    spec.mics[m].position = placed[m];
    spec.mics[m].id = m;
    spec.mics[m].known_position = true;
  }
  for (int u = 0; u < faulty; ++u) spec.mics[idx[u]].known_position = false;

  spec.sources.resize(num_sources);
  for (int k = 0; k < num_sources; ++k) {
    spec.sources[k].position = placed[num_mics + k];
    spec.sources[k].kind = kind;
    Rng sig_rng(derive_seed(seed, 0x7369676eULL, static_cast<std::uint64_t>(k)));
    spec.sources[k].signal =
        make_signal(kind, signal_len, room.sample_rate, sig_rng);
  }
  return spec;
}

}  // namespace sslkit::sim
