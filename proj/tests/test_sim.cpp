#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "sslkit/acoustics.hpp"
#include "sslkit/dataset.hpp"

using namespace sslkit;
using namespace sslkit::sim;

namespace {

RoomSpec default_room() {
  RoomSpec r;
  r.max_reflection_order = 0;
  return r;
}

// Independent oracle: full time-domain convolution truncated to n samples.
Eigen::VectorXd conv_truncated(const Eigen::VectorXd& h,
                               const Eigen::VectorXd& s, int n) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j <= std::min<int>(t, static_cast<int>(h.size()) - 1); ++j) {
      y[t] += h[j] * s[t - j];
    }
  }
  return y;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("order-0 rir places a single tap at the rounded direct delay") {
  RoomSpec room = default_room();
  const Vec3 src(1.0, 1.0, 1.0);
  const Vec3 mic(4.43, 1.0, 1.0);  // d = 3.43 m -> exactly 160 samples
  ImpulseResponse rir = generate_rir(room, src, mic);
  REQUIRE(rir.taps.size() == 161);
  CHECK(rir.taps[160] == doctest::Approx(1.0 / (4.0 * std::numbers::pi * 3.43))
                             .epsilon(1e-12));
  for (int i = 0; i < 160; ++i) CHECK(rir.taps[i] == 0.0);
}

TEST_CASE("one-sample direct delay") {
  RoomSpec room = default_room();
  const double d = room.speed_of_sound / room.sample_rate;
  const Vec3 src(1.0, 1.0, 1.0);
  const Vec3 mic(1.0 + d, 1.0, 1.0);
  ImpulseResponse rir = generate_rir(room, src, mic);
  REQUIRE(rir.taps.size() == 2);
  CHECK(rir.taps[0] == 0.0);
  CHECK(rir.taps[1] > 0.0);
}

TEST_CASE("fully absorbing walls reduce order 1 to the order-0 response") {
  RoomSpec room = default_room();
  room.wall_absorption = {1, 1, 1, 1, 1, 1};
  const Vec3 src(2.0, 3.0, 1.0);
  const Vec3 mic(5.0, 4.0, 1.2);
  RoomSpec o0 = room;
  o0.max_reflection_order = 0;
  RoomSpec o1 = room;
  o1.max_reflection_order = 1;
  ImpulseResponse a = generate_rir(o0, src, mic);
  ImpulseResponse b = generate_rir(o1, src, mic);
  REQUIRE(a.taps.size() == b.taps.size());
  CHECK((a.taps - b.taps).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("direct-path delay: argmax tap equals round(d/c*fs) for order 0") {
  RoomSpec room = default_room();
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Vec3 src, mic;
    for (int a = 0; a < 3; ++a) {
      src[a] = rng.uniform(0.2, room.dimensions[a] - 0.2);
      mic[a] = rng.uniform(0.2, room.dimensions[a] - 0.2);
    }
    if ((src - mic).norm() < 0.05) continue;
    ImpulseResponse rir = generate_rir(room, src, mic);
    int argmax = 0;
    rir.taps.maxCoeff(&argmax);
    const double d = (src - mic).norm();
    CHECK(argmax == static_cast<int>(std::llround(
                        d / room.speed_of_sound * room.sample_rate)));
  }
}

TEST_CASE("rir energy never increases with wall absorption") {
  RoomSpec room = default_room();
  room.max_reflection_order = 2;
  const Vec3 src(2.0, 2.5, 0.8);
  const Vec3 mic(5.5, 6.0, 1.4);
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    room.wall_absorption = {alpha, alpha, alpha, alpha, alpha, alpha};
    const double energy = generate_rir(room, src, mic).taps.squaredNorm();
    CHECK(energy <= prev + 1e-15);
    prev = energy;
  }
}

TEST_CASE("rir geometry errors") {
  RoomSpec room = default_room();
  CHECK_THROWS_AS(generate_rir(room, Vec3(-1, 1, 1), Vec3(2, 2, 1)),
                  GeometryError);
  CHECK_THROWS_AS(generate_rir(room, Vec3(2, 2, 1), Vec3(2, 9, 1)),
                  GeometryError);
  CHECK_THROWS_AS(generate_rir(room, Vec3(2, 2, 1), Vec3(2 + 1e-4, 2, 1)),
                  GeometryError);
}

TEST_CASE("render with no sources is all zeros") {
  RoomSpec room = default_room();
  std::vector<MicSpec> mics{{Vec3(1, 1, 1), true, 0}, {Vec3(2, 2, 1), true, 1}};
  SceneRecording rec =
      render_mixture(room, mics, {}, 0.0, 1, DelayModel::nearest, 64);
  CHECK(rec.channels.rows() == 2);
  CHECK(rec.channels.cols() == 64);
  CHECK(rec.channels.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-source render matches the direct convolution oracle") {
  RoomSpec room = default_room();
  Rng rng(11);
  SourceSpec src;
  src.position = Vec3(2.5, 3.0, 1.0);
  src.signal = make_signal(SignalKind::white_noise, 512, room.sample_rate, rng);
  std::vector<MicSpec> mics{{Vec3(5.0, 5.5, 1.3), true, 0}};
  SceneRecording rec = render_mixture(room, mics, {src}, 0.0, 3);

  ImpulseResponse rir = generate_rir(room, src.position, mics[0].position);
  Eigen::VectorXd expect = conv_truncated(rir.taps, src.signal, 512);
  CHECK((rec.channels.row(0).transpose() - expect).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("superposition: two-source render equals sum of single renders") {
  RoomSpec room = default_room();
  room.max_reflection_order = 1;
  room.wall_absorption = {0.3, 0.4, 0.5, 0.6, 0.7, 0.2};
  Rng rng(21);
  SourceSpec a, b;
  a.position = Vec3(1.5, 2.0, 0.7);
  a.signal = make_signal(SignalKind::white_noise, 400, room.sample_rate, rng);
  b.position = Vec3(5.5, 6.5, 1.5);
  b.signal = make_signal(SignalKind::tone, 400, room.sample_rate, rng);
  std::vector<MicSpec> mics{{Vec3(3.3, 4.4, 1.1), true, 0},
                            {Vec3(6.0, 2.2, 0.5), true, 1}};
  SceneRecording both = render_mixture(room, mics, {a, b}, 0.0, 5);
  SceneRecording only_a = render_mixture(room, mics, {a}, 0.0, 5);
  SceneRecording only_b = render_mixture(room, mics, {b}, 0.0, 5);
  CHECK((both.channels - (only_a.channels + only_b.channels))
            .cwiseAbs()
            .maxCoeff() < 1e-9);
}

TEST_CASE("render determinism and seeded noise") {
  RoomSpec room = default_room();
  Rng rng(31);
  SourceSpec s;
  s.position = Vec3(3, 3, 1);
  s.signal = make_signal(SignalKind::white_noise, 256, room.sample_rate, rng);
  std::vector<MicSpec> mics{{Vec3(1, 1, 1), true, 0}};
  SceneRecording r1 = render_mixture(room, mics, {s}, 0.01, 42);
  SceneRecording r2 = render_mixture(room, mics, {s}, 0.01, 42);
  SceneRecording r3 = render_mixture(room, mics, {s}, 0.01, 43);
  CHECK((r1.channels - r2.channels).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r1.channels - r3.channels).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("mismatched source signal lengths raise a shape error") {
  RoomSpec room = default_room();
  Rng rng(3);
  SourceSpec a, b;
  a.position = Vec3(2, 2, 1);
  a.signal = make_signal(SignalKind::white_noise, 128, room.sample_rate, rng);
  b.position = Vec3(4, 4, 1);
  b.signal = make_signal(SignalKind::white_noise, 64, room.sample_rate, rng);
  std::vector<MicSpec> mics{{Vec3(1, 1, 1), true, 0}};
  CHECK_THROWS_AS(render_mixture(room, mics, {a, b}, 0.0, 1), ShapeError);
}

TEST_CASE("sample_scene honors margins, separation and faulty count") {
  RoomSpec room = default_room();
  SceneSpec spec = sample_scene(room, 11, 1, 0, 99, 128);
  CHECK(spec.mics.size() == 11);
  CHECK(spec.sources.size() == 1);
  int faulty = 0;
  std::vector<Vec3> all;
  for (const MicSpec& m : spec.mics) {
    CHECK(room.inside(m.position, kPlacementMargin - 1e-12));
    if (!m.known_position) ++faulty;
    all.push_back(m.position);
  }
  CHECK(faulty == 0);
  all.push_back(spec.sources[0].position);
  CHECK(room.inside(spec.sources[0].position, kPlacementMargin - 1e-12));
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      CHECK((all[i] - all[j]).norm() >= kPlacementSeparation);
    }
  }
}

TEST_CASE("sample_scene flags exactly U faulty mics; U=M flags all") {
  RoomSpec room = default_room();
  SceneSpec one = sample_scene(room, 1, 1, 1, 5, 64);
  CHECK_FALSE(one.mics[0].known_position);

  SceneSpec some = sample_scene(room, 8, 1, 3, 6, 64);
  int faulty = 0;
  for (const MicSpec& m : some.mics) faulty += m.known_position ? 0 : 1;
  CHECK(faulty == 3);
}

TEST_CASE("sample_scene same seed gives identical scene") {
  RoomSpec room = default_room();
  SceneSpec a = sample_scene(room, 6, 2, 1, 1234, 64);
  SceneSpec b = sample_scene(room, 6, 2, 1, 1234, 64);
  for (int m = 0; m < 6; ++m) {
    CHECK(a.mics[m].position == b.mics[m].position);
    CHECK(a.mics[m].known_position == b.mics[m].known_position);
  }
  for (int k = 0; k < 2; ++k) {
    CHECK(a.sources[k].position == b.sources[k].position);
    CHECK((a.sources[k].signal - b.sources[k].signal).cwiseAbs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("sample_scene infeasible packing raises") {
  RoomSpec tiny;
  tiny.dimensions = Vec3(0.25, 0.25, 0.25);
  CHECK_THROWS_AS(sample_scene(tiny, 50, 1, 0, 1, 32), SamplingError);
}

TEST_CASE("dataset round trip is lossless") {
  RoomSpec room = default_room();
  std::vector<SceneRecording> recs;
  for (int i = 0; i < 3; ++i) {
    SceneSpec spec = sample_scene(room, 4, 1, 1, 100 + i, 128);
    recs.push_back(
        render_mixture(room, spec.mics, spec.sources, 1e-3, 200 + i));
  }
  const auto path = temp_file("sslkit_roundtrip.ssld");
  write_dataset(recs, path.string());
  std::vector<SceneRecording> back = read_dataset(path.string());
  REQUIRE(back.size() == recs.size());

  // Samples are float32-quantized in the container; a second pass through
  // the file must be bit-exact.
  const auto path2 = temp_file("sslkit_roundtrip2.ssld");
  write_dataset(back, path2.string());
  std::vector<SceneRecording> again = read_dataset(path2.string());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].rng_seed == recs[i].rng_seed);
    CHECK(back[i].noise_std == recs[i].noise_std);
    CHECK(back[i].room.dimensions == recs[i].room.dimensions);
    REQUIRE(back[i].mics.size() == recs[i].mics.size());
    for (std::size_t m = 0; m < recs[i].mics.size(); ++m) {
      CHECK(back[i].mics[m].position == recs[i].mics[m].position);
      CHECK(back[i].mics[m].known_position == recs[i].mics[m].known_position);
    }
    CHECK((back[i].channels - recs[i].channels).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((again[i].channels - back[i].channels).cwiseAbs().maxCoeff() == 0.0);
    CHECK((again[i].sources[0].signal - back[i].sources[0].signal)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("dataset read rejects truncated and corrupted files") {
  RoomSpec room = default_room();
  SceneSpec spec = sample_scene(room, 3, 1, 0, 77, 64);
  std::vector<SceneRecording> recs{
      render_mixture(room, spec.mics, spec.sources, 0.0, 7)};
  const auto path = temp_file("sslkit_trunc.ssld");
  write_dataset(recs, path.string());

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();

  const auto cut = temp_file("sslkit_cut.ssld");
  std::ofstream out(cut, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  out.close();
  CHECK_THROWS_AS(read_dataset(cut.string()), FormatError);

  // Flip one sample byte: the checksum must catch it.
  const auto bad = temp_file("sslkit_bad.ssld");
  std::string corrupted = bytes;
  corrupted[corrupted.size() - 10] ^= 0x01;
  std::ofstream outb(bad, std::ios::binary);
  outb.write(corrupted.data(), static_cast<std::streamsize>(corrupted.size()));
  outb.close();
  CHECK_THROWS_AS(read_dataset(bad.string()), FormatError);

  std::filesystem::remove(path);
  std::filesystem::remove(cut);
  std::filesystem::remove(bad);
}

TEST_CASE("empty dataset round trips") {
  const auto path = temp_file("sslkit_empty.ssld");
  write_dataset({}, path.string());
  CHECK(read_dataset(path.string()).empty());
  std::filesystem::remove(path);
}
