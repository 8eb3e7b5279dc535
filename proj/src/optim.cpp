#include "sslkit/optim.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace sslkit::ad {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config), lr_(config.learning_rate) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.push_back(Mat::Zero(p.rows(), p.cols()));
    v_.push_back(Mat::Zero(p.rows(), p.cols()));
  }
}

void Adam::step() {
  for (const Tensor& p : params_) {
    if (p.has_grad() && !p.grad().allFinite()) {
      throw NumericError("optimizer step rejected: non-finite gradient");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const Mat g = p.has_grad() ? p.grad() : Mat::Zero(p.rows(), p.cols());
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    const Mat mhat = m_[i] / bc1;
    const Mat vhat = v_[i] / bc2;
    const Mat denom = vhat.cwiseSqrt() +
                      Mat::Constant(p.rows(), p.cols(), config_.epsilon);
    p.mutable_values() -= lr_ * mhat.cwiseQuotient(denom);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::epoch_schedule(int epoch) {
  if (epoch > 0 && config_.decay_every > 0 &&
      epoch % config_.decay_every == 0) {
    lr_ *= config_.decay;
  }
}

GradCheckResult grad_check(
    const std::function<Tensor()>& f,
    const std::vector<std::pair<std::string, Tensor>>& params, double step,
    double tol) {
  if (step <= 0.0) throw ConfigError("grad_check step must be positive");

  // Analytic gradients from one taped evaluation.
  std::vector<Mat> analytic;
  {
    for (const auto& entry : params) {
      Tensor p = entry.second;
      p.zero_grad();
    }
    Tape tape;
    Tensor y = f();
    tape.backward(y);
    for (const auto& entry : params) {
      const Tensor& p = entry.second;
      analytic.push_back(p.has_grad() ? p.grad()
                                      : Mat::Zero(p.rows(), p.cols()));
    }
  }

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    double worst = 0.0;
    for (int r = 0; r < p.rows(); ++r) {
      for (int c = 0; c < p.cols(); ++c) {
        const double x0 = p.values()(r, c);
        const double h = step * std::max(1.0, std::abs(x0));
        p.mutable_values()(r, c) = x0 + h;
        const double y_plus = f().value();
        p.mutable_values()(r, c) = x0 - h;
        const double y_minus = f().value();
        p.mutable_values()(r, c) = x0;
        const double numeric = (y_plus - y_minus) / (2.0 * h);
        const double a = analytic[pi](r, c);
        const double rel = std::abs(a - numeric) /
                           std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, rel);
      }
    }
    result.per_param.emplace_back(params[pi].first, worst);
    result.max_rel_error = std::max(result.max_rel_error, worst);
  }
  result.pass = result.max_rel_error <= tol;
  return result;
}

// --- checkpoints --------------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "SSLCKPT1";
constexpr int kCheckpointVersion = 1;

std::uint32_t crc_of(const std::string& bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params,
                     const std::string& hyper_json) {
  using nlohmann::json;
  json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["hyper"] =
      hyper_json.empty() ? json::object() : json::parse(hyper_json);
  json list = json::array();
  for (const auto& [name, p] : params) {
    list.push_back(json{{"name", name}, {"shape", p.shape()}});
  }
  manifest["params"] = list;

  std::string blob;
  for (const auto& [name, p] : params) {
    (void)name;
    const Mat& m = p.values();
    const std::size_t bytes = static_cast<std::size_t>(m.size()) * 8;
    const std::size_t off = blob.size();
    blob.resize(off + bytes);
    std::memcpy(blob.data() + off, m.data(), bytes);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out << kCheckpointMagic << "\n" << manifest.dump() << "\n";
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  const std::uint32_t crc = crc_of(blob);
  const char crc_bytes[4] = {static_cast<char>(crc & 0xff),
                             static_cast<char>((crc >> 8) & 0xff),
                             static_cast<char>((crc >> 16) & 0xff),
                             static_cast<char>((crc >> 24) & 0xff)};
  out.write(crc_bytes, 4);
  if (!out) throw FormatError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open for reading: " + path);

  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw FormatError("not a checkpoint file: " + path);
  }
  if (!std::getline(in, line)) {
    throw FormatError("truncated checkpoint manifest");
  }
  json manifest = json::parse(line, nullptr, false);
  if (manifest.is_discarded()) {
    throw FormatError("malformed checkpoint manifest");
  }
  if (manifest.at("format_version").get<int>() != kCheckpointVersion) {
    throw FormatError("checkpoint format-version mismatch");
  }

  Checkpoint ckpt;
  ckpt.hyper_json = manifest.at("hyper").dump();
  std::size_t total = 0;
  std::vector<std::pair<std::string, std::vector<int>>> entries;
  for (const json& e : manifest.at("params")) {
    const auto shape = e.at("shape").get<std::vector<int>>();
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    total += n;
    entries.emplace_back(e.at("name").get<std::string>(), shape);
  }

  std::string blob(total * 8, '\0');
  if (!in.read(blob.data(), static_cast<std::streamsize>(blob.size()))) {
    throw FormatError("truncated checkpoint data");
  }
  char crc_bytes[4];
  if (!in.read(crc_bytes, 4)) {
    throw FormatError("truncated checkpoint checksum");
  }
  std::uint32_t stored = 0;
  for (int i = 3; i >= 0; --i) {
    stored = (stored << 8) | static_cast<unsigned char>(crc_bytes[i]);
  }
  if (crc_of(blob) != stored) throw FormatError("checkpoint checksum mismatch");

  std::size_t off = 0;
  for (const auto& [name, shape] : entries) {
    const int rows = shape.size() == 1 ? 1 : shape[0];
    const int cols = shape.size() == 1 ? shape[0] : shape[1];
    Mat m(rows, cols);
    std::memcpy(m.data(), blob.data() + off,
                static_cast<std::size_t>(m.size()) * 8);
    off += static_cast<std::size_t>(m.size()) * 8;
    ckpt.params.emplace_back(name, std::move(m));
  }
  return ckpt;
}

void restore_params(const Checkpoint& ckpt,
                    std::vector<std::pair<std::string, Tensor>>& params) {
  if (ckpt.params.size() != params.size()) {
    throw FormatError("checkpoint parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, values] = ckpt.params[i];
    auto& [want_name, tensor] = params[i];
    if (name != want_name) {
      throw FormatError("checkpoint parameter name mismatch: " + name +
                        " vs " + want_name);
    }
    if (values.rows() != tensor.rows() || values.cols() != tensor.cols()) {
      throw FormatError("checkpoint parameter shape mismatch: " + name);
    }
    tensor.mutable_values() = values;
  }
}

}  // namespace sslkit::ad
