#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "sslkit/correlation.hpp"
#include "sslkit/fft.hpp"
#include "sslkit/rng.hpp"
#include "sslkit/spectral.hpp"

using namespace sslkit;
using namespace sslkit::dsp;

namespace {

Eigen::VectorXd white(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = rng.normal();
  return x;
}

// Delay by d samples, zero-filled at the front, truncated at the back.
Eigen::VectorXd shift(const Eigen::VectorXd& x, int d) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
  for (int t = 0; t < x.size(); ++t) {
    const int s = t - d;
    if (s >= 0 && s < x.size()) y[t] = x[s];
  }
  return y;
}

// Oracle: normalized time-domain cross-correlation argmax over [-tau, tau].
int xcorr_argmax(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int tau) {
  double best = -1e300;
  int best_lag = 0;
  for (int lag = -tau; lag <= tau; ++lag) {
    double acc = 0.0;
    for (int t = 0; t < a.size(); ++t) {
      const int u = t + lag;
      if (u >= 0 && u < b.size()) acc += a[t] * b[u];
    }
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  return best_lag;
}

}  // namespace

TEST_CASE("idft inverts dft") {
  for (int n : {1, 2, 8, 48, 129}) {
    Eigen::VectorXd x = white(n, 1000 + n);
    Eigen::VectorXd back = idft_real(dft(x));
    CHECK((x - back).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("constant signal concentrates in the zero-frequency bin") {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(64, 3.5);
  Eigen::VectorXcd spec = dft(x);
  CHECK(std::abs(spec[0]) == doctest::Approx(64 * 3.5));
  CHECK(spec.tail(63).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("Parseval: time energy equals scaled spectral energy") {
  Eigen::VectorXd x = white(200, 5);
  const double time_energy = x.squaredNorm();  // direct summation oracle
  Eigen::VectorXcd spec = dft(x);
  double spec_energy = 0.0;
  for (Eigen::Index k = 0; k < spec.size(); ++k) spec_energy += std::norm(spec[k]);
  CHECK(time_energy == doctest::Approx(spec_energy / 200.0).epsilon(1e-12));
}

TEST_CASE("gcc_phat of a signal with itself peaks at lag zero") {
  Eigen::VectorXd x = white(512, 9);
  CorrelationFeature f = gcc_phat(x, x, 32, 16000.0);
  CHECK(f.values.size() == 65);
  int arg = 0;
  f.values.maxCoeff(&arg);
  CHECK(f.lag_grid[arg] == 0);
  CHECK(estimate_tdoa(f) == 0.0);
}

TEST_CASE("gcc_phat recovers integer shifts exactly (vs time-domain oracle)") {
  const int tau = 24;
  const int n = 16 * tau;
  for (int d : {-24, -7, 0, 3, 11, 24}) {
    Eigen::VectorXd x = white(n, 100 + d);
    Eigen::VectorXd y = shift(x, d);
    CorrelationFeature f = gcc_phat(x, y, tau, 16000.0);
    int arg = 0;
    f.values.maxCoeff(&arg);
    CHECK(f.lag_grid[arg] == d);
    CHECK(f.lag_grid[arg] == xcorr_argmax(x, y, tau));
    CHECK(estimate_tdoa(f) == doctest::Approx(d / 16000.0).epsilon(1e-15));
  }
}

TEST_CASE("independent noise pairs peak well below matched pairs") {
  const int n = 1024, tau = 32;
  double matched = 0.0, unmatched = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd x = white(n, 2 * t);
    Eigen::VectorXd y = shift(x, 5);
    Eigen::VectorXd z = white(n, 2 * t + 1);
    matched += gcc_phat(x, y, tau, 16000.0).values.maxCoeff();
    unmatched += gcc_phat(x, z, tau, 16000.0).values.maxCoeff();
  }
  CHECK(unmatched / trials < 0.5 * (matched / trials));
}

TEST_CASE("gcc_phat rejects an all-zero channel") {
  Eigen::VectorXd x = white(256, 1);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(256);
  CHECK_THROWS_AS(gcc_phat(x, z, 16, 16000.0), SignalError);
  CHECK_THROWS_AS(gcc_phat(z, z, 16, 16000.0), SignalError);
}

TEST_CASE("phat normalization gives unit magnitude where the floor is idle") {
  // Reconstruct the normalized cross-spectrum via a round trip: the
  // correlation over the full circular lag set has unit total energy per bin.
  Eigen::VectorXd x = white(256, 77);
  Eigen::VectorXd y = shift(x, 3);
  const int nfft = next_pow2(256 + 16);
  Eigen::VectorXd px = Eigen::VectorXd::Zero(nfft), py = px;
  px.head(256) = x;
  py.head(256) = y;
  Eigen::VectorXcd cross = dft(px).conjugate().cwiseProduct(dft(py));
  Eigen::VectorXd mags = cross.cwiseAbs();
  const double floor = 1e-12 * mags.maxCoeff();
  for (Eigen::Index k = 0; k < cross.size(); ++k) {
    cross[k] /= std::max(mags[k], floor);
    if (mags[k] > floor) {
      CHECK(std::abs(std::abs(cross[k]) - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("gcc symmetry: swapping channels reverses the lag axis") {
  Eigen::VectorXd x = white(512, 13);
  Eigen::VectorXd y = shift(x, 9);
  CorrelationFeature ab = gcc_phat(x, y, 20, 16000.0);
  CorrelationFeature ba = gcc_phat(y, x, 20, 16000.0);
  CHECK((ab.values - ba.values.reverse()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("single all-pass filter reduces the filterbank path to gcc_phat") {
  Eigen::VectorXd x = white(512, 3);
  Eigen::VectorXd y = shift(x, -6);
  FilterBank bank = FilterBank::all_pass();
  CorrelationFeature plain = gcc_phat(x, y, 16, 16000.0);
  CorrelationFeature banked = ngcc_phat(x, y, bank, 16, 16000.0);
  CHECK((plain.values - banked.values).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("zero combination weights give a zero feature") {
  Eigen::VectorXd x = white(256, 4);
  Eigen::VectorXd y = shift(x, 2);
  FilterBank bank = FilterBank::mel(4, 16000.0);
  bank.combination_weights.setZero();
  CorrelationFeature f = ngcc_phat(x, y, bank, 8, 16000.0);
  CHECK(f.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("filterbank combination is linear in the weights") {
  Eigen::VectorXd x = white(512, 6);
  Eigen::VectorXd y = shift(x, 4);
  FilterBank bank = FilterBank::mel(2, 16000.0);
  bank.combination_weights << 0.7, -0.4;

  std::vector<CorrelationFeature> responses =
      ngcc_filter_responses(x, y, bank, 12, 16000.0);
  Eigen::VectorXd manual =
      0.7 * responses[0].values - 0.4 * responses[1].values;
  CorrelationFeature combined = ngcc_phat(x, y, bank, 12, 16000.0);
  CHECK((combined.values - manual).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mel filter responses are finite and non-negative") {
  FilterBank bank = FilterBank::mel(8, 16000.0);
  for (int p = 0; p < bank.size(); ++p) {
    Eigen::VectorXd h = bank.bin_response(p, 1024, 16000.0);
    CHECK(h.allFinite());
    CHECK(h.minCoeff() >= 0.0);
    CHECK(h.maxCoeff() > 0.0);
  }
}

TEST_CASE("estimate_tdoa unit conversion and tie break") {
  CorrelationFeature f;
  f.sample_rate = 16000.0;
  f.values = Eigen::VectorXd::Zero(321);
  f.lag_grid.resize(321);
  for (int i = 0; i < 321; ++i) f.lag_grid[i] = i - 160;
  f.values[160 + 160] = 1.0;  // peak at lag 160
  CHECK(estimate_tdoa(f) == doctest::Approx(0.01).epsilon(1e-15));

  f.values.setZero();
  f.values[160 - 5] = 0.5;  // tie between lags -5 and +7
  f.values[160 + 7] = 0.5;
  CHECK(estimate_tdoa(f) == doctest::Approx(-5.0 / 16000.0).epsilon(1e-15));
}

TEST_CASE("welch auto-psd of white noise is flat within 20%") {
  // Monte Carlo with >= 32 segments per draw.
  const int n = 256 * 40;
  Eigen::VectorXd x = white(n, 21);
  PsdEstimate est = welch_psd(x, x, 256, 128, 16000.0);
  CHECK(est.segments >= 32);
  // Interior bins (skip DC and Nyquist, which have half the variance terms).
  Eigen::VectorXd interior = est.auto_i.segment(1, est.auto_i.size() - 2);
  const double mean = interior.mean();
  CHECK(std::abs(interior.maxCoeff() - mean) / mean < 0.5);
  CHECK(std::abs(mean * 16000.0 - 1.0) < 0.2);  // unit-variance noise: density 1/fs
}

TEST_CASE("welch cross equals auto for identical channels") {
  Eigen::VectorXd x = white(2048, 8);
  PsdEstimate est = welch_psd(x, x, 256, 128, 16000.0);
  CHECK((est.cross.real() - est.auto_i).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(est.cross.imag().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("welch of a zero signal is zero") {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(2048);
  PsdEstimate est = welch_psd(z, z, 256, 128, 16000.0);
  CHECK(est.auto_i.cwiseAbs().maxCoeff() == 0.0);
  CHECK(est.cross.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("welch needs at least two segments") {
  Eigen::VectorXd x = white(256, 2);
  CHECK_THROWS_AS(welch_psd(x, x, 256, 0, 16000.0), DataError);
}

TEST_CASE("coherence of identical and scaled channels is one") {
  Eigen::VectorXd x = white(4096, 31);
  CoherenceProfile self = coherence(welch_psd(x, x, 256, 128, 16000.0));
  CHECK((self.values.array() - 1.0).abs().maxCoeff() < 1e-9);

  Eigen::VectorXd x2 = 2.0 * x;
  CoherenceProfile scaled = coherence(welch_psd(x, x2, 256, 128, 16000.0));
  CHECK((scaled.values.array() - 1.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("coherence stays in [0,1] and is small for independent noise") {
  double mean_of_means = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd a = white(64 * 256 / 2 + 128, 500 + 2 * t);
    Eigen::VectorXd b = white(64 * 256 / 2 + 128, 501 + 2 * t);
    PsdEstimate est = welch_psd(a, b, 256, 128, 16000.0);
    CHECK(est.segments >= 64);
    CoherenceProfile prof = coherence(est);
    CHECK(prof.values.minCoeff() >= 0.0);
    CHECK(prof.values.maxCoeff() <= 1.0 + 1e-9);
    mean_of_means += prof.mean();
  }
  CHECK(mean_of_means / trials < 0.2);
}

TEST_CASE("coherence of silence raises") {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(2048);
  PsdEstimate est = welch_psd(z, z, 256, 128, 16000.0);
  CHECK_THROWS_AS(coherence(est), SignalError);
}

TEST_CASE("coherence weighting: alpha zero gives the plain sum") {
  Eigen::VectorXd x = white(2048, 41);
  Eigen::VectorXd y = shift(x, 3), z = shift(x, -2);
  CorrelationFeature f1 = gcc_phat(x, y, 16, 16000.0);
  f1.mic_i = 0;
  f1.mic_j = 1;
  CorrelationFeature f2 = gcc_phat(x, z, 16, 16000.0);
  f2.mic_i = 0;
  f2.mic_j = 2;
  CoherenceProfile c1 = coherence(welch_psd(x, y, 256, 128, 16000.0));
  c1.mic_i = 0;
  c1.mic_j = 1;
  CoherenceProfile c2 = coherence(welch_psd(x, z, 256, 128, 16000.0));
  c2.mic_i = 0;
  c2.mic_j = 2;

  WeightedTdoaFeature w = weight_by_coherence({f1, f2}, {c1, c2}, 0.0);
  CHECK((w.values - (f1.values + f2.values)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(w.pair_weights == Eigen::Vector2d::Ones());
}

TEST_CASE("coherence weighting matches elementwise recomputation") {
  Eigen::VectorXd x = white(2048, 55);
  Eigen::VectorXd y = shift(x, 1);
  Eigen::VectorXd n = white(2048, 56);

  CorrelationFeature f1 = gcc_phat(x, y, 8, 16000.0);
  CorrelationFeature f2 = gcc_phat(x, n, 8, 16000.0);
  CoherenceProfile c1 = coherence(welch_psd(x, y, 256, 128, 16000.0));
  CoherenceProfile c2 = coherence(welch_psd(x, n, 256, 128, 16000.0));

  const double a = 1.7;
  WeightedTdoaFeature w = weight_by_coherence({f1, f2}, {c1, c2}, a);
  Eigen::VectorXd manual = std::pow(c1.mean(), a) * f1.values +
                           std::pow(c2.mean(), a) * f2.values;
  CHECK((w.values - manual).cwiseAbs().maxCoeff() < 1e-12);

  // Single pair: the feature is just scaled.
  WeightedTdoaFeature single = weight_by_coherence({f1}, {c1}, a);
  CHECK((single.values - std::pow(c1.mean(), a) * f1.values)
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  // Mean mode divides by the pair count.
  WeightedTdoaFeature avg = weight_by_coherence({f1, f2}, {c1, c2}, a, true);
  CHECK((avg.values - manual / 2.0).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("coherence weighting rejects misaligned pairs") {
  Eigen::VectorXd x = white(2048, 60);
  Eigen::VectorXd y = shift(x, 1);
  CorrelationFeature f = gcc_phat(x, y, 8, 16000.0);
  f.mic_i = 0;
  f.mic_j = 1;
  CoherenceProfile c = coherence(welch_psd(x, y, 256, 128, 16000.0));
  c.mic_i = 2;
  c.mic_j = 3;
  CHECK_THROWS_AS(weight_by_coherence({f}, {c}, 1.0), DataError);
}

TEST_CASE("weighting is linear in each correlation feature") {
  Eigen::VectorXd x = white(2048, 70);
  Eigen::VectorXd y = shift(x, 2);
  CorrelationFeature f = gcc_phat(x, y, 8, 16000.0);
  CoherenceProfile c = coherence(welch_psd(x, y, 256, 128, 16000.0));

  CorrelationFeature f_scaled = f;
  f_scaled.values *= 3.0;
  WeightedTdoaFeature w1 = weight_by_coherence({f}, {c}, 1.0);
  WeightedTdoaFeature w3 = weight_by_coherence({f_scaled}, {c}, 1.0);
  CHECK((w3.values - 3.0 * w1.values).cwiseAbs().maxCoeff() < 1e-12);
}
