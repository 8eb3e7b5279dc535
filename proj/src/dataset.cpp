#include "sslkit/dataset.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace sslkit::sim {

namespace {

using nlohmann::json;

const char* kind_name(SignalKind k) {
  switch (k) {
    case SignalKind::white_noise: return "white_noise";
    case SignalKind::tone: return "tone";
    case SignalKind::speech_like_ar: return "speech_like_ar";
  }
  return "white_noise";
}

SignalKind kind_from_name(const std::string& s) {
  if (s == "white_noise") return SignalKind::white_noise;
  if (s == "tone") return SignalKind::tone;
  if (s == "speech_like_ar") return SignalKind::speech_like_ar;
  throw FormatError("unknown signal kind: " + s);
}

json room_to_json(const RoomSpec& r) {
  return json{{"dimensions", {r.dimensions.x(), r.dimensions.y(), r.dimensions.z()}},
              {"wall_absorption", r.wall_absorption},
              {"speed_of_sound", r.speed_of_sound},
              {"sample_rate", r.sample_rate},
              {"max_reflection_order", r.max_reflection_order}};
}

RoomSpec room_from_json(const json& j) {
  RoomSpec r;
  const auto& d = j.at("dimensions");
  r.dimensions = Vec3(d.at(0).get<double>(), d.at(1).get<double>(),
                      d.at(2).get<double>());
  const auto& a = j.at("wall_absorption");
  for (int w = 0; w < 6; ++w) r.wall_absorption[static_cast<std::size_t>(w)] = a.at(w).get<double>();
  r.speed_of_sound = j.at("speed_of_sound").get<double>();
  r.sample_rate = j.at("sample_rate").get<double>();
  r.max_reflection_order = j.at("max_reflection_order").get<int>();
  return r;
}

void append_f32(std::string& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const float f = static_cast<float>(v[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
  }
}

double read_f32(const std::string& buf, std::size_t offset) {
  std::uint32_t bits = (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset]))) |
                       (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset + 1])) << 8) |
                       (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset + 2])) << 16) |
                       (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset + 3])) << 24);
  float f;
  std::memcpy(&f, &bits, 4);
  return static_cast<double>(f);
}

std::uint32_t crc_of(const std::string& bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

std::string record_meta_line(const SceneRecording& rec) {
  json mics = json::array();
  for (const MicSpec& m : rec.mics) {
    mics.push_back(json{{"position", {m.position.x(), m.position.y(), m.position.z()}},
                        {"known_position", m.known_position},
                        {"id", m.id}});
  }
  json sources = json::array();
  for (const SourceSpec& s : rec.sources) {
    sources.push_back(json{{"position", {s.position.x(), s.position.y(), s.position.z()}},
                           {"kind", kind_name(s.kind)}});
  }
  json meta{{"room", room_to_json(rec.room)},
            {"mics", mics},
            {"sources", sources},
            {"noise_std", rec.noise_std},
            {"rng_seed", rec.rng_seed},
            {"channels", rec.channels.rows()},
            {"samples", rec.channels.cols()}};
  return meta.dump() + "\n";
}

}  // namespace

void write_dataset(const std::vector<SceneRecording>& recordings,
                   const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path);

  out << kDatasetMagic << "\n";
  out << json{{"format_version", kDatasetFormatVersion},
              {"record_count", recordings.size()}}
             .dump()
      << "\n";

  for (const SceneRecording& rec : recordings) {
    std::string payload = record_meta_line(rec);
    for (Eigen::Index m = 0; m < rec.channels.rows(); ++m) {
      append_f32(payload, rec.channels.row(m).transpose());
    }
    for (const SourceSpec& s : rec.sources) append_f32(payload, s.signal);
    const std::uint32_t crc = crc_of(payload);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    char crc_bytes[4] = {static_cast<char>(crc & 0xff),
                         static_cast<char>((crc >> 8) & 0xff),
                         static_cast<char>((crc >> 16) & 0xff),
                         static_cast<char>((crc >> 24) & 0xff)};
    out.write(crc_bytes, 4);
  }
  if (!out) throw FormatError("write failed: " + path);
}

namespace {

std::string read_line_or_throw(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
  return line;
}

}  // namespace

std::vector<SceneRecording> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open for reading: " + path);

  if (read_line_or_throw(in, "magic") != kDatasetMagic) {
    throw FormatError("bad magic; not a dataset file: " + path);
  }
  json header = json::parse(read_line_or_throw(in, "header"), nullptr, false);
  if (header.is_discarded()) throw FormatError("malformed dataset header");
  if (header.at("format_version").get<int>() != kDatasetFormatVersion) {
    throw FormatError("dataset format-version mismatch");
  }
  const std::size_t count = header.at("record_count").get<std::size_t>();

  std::vector<SceneRecording> out;
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    const std::string meta_line = read_line_or_throw(in, "record metadata");
    json meta = json::parse(meta_line, nullptr, false);
    if (meta.is_discarded()) throw FormatError("malformed record metadata");

    SceneRecording rec;
    rec.room = room_from_json(meta.at("room"));
    for (const json& jm : meta.at("mics")) {
      MicSpec m;
      const auto& p = jm.at("position");
      m.position = Vec3(p.at(0).get<double>(), p.at(1).get<double>(),
                        p.at(2).get<double>());
      m.known_position = jm.at("known_position").get<bool>();
      m.id = jm.at("id").get<int>();
      rec.mics.push_back(m);
    }
    for (const json& js : meta.at("sources")) {
      SourceSpec s;
      const auto& p = js.at("position");
      s.position = Vec3(p.at(0).get<double>(), p.at(1).get<double>(),
                        p.at(2).get<double>());
      s.kind = kind_from_name(js.at("kind").get<std::string>());
      rec.sources.push_back(s);
    }
    rec.noise_std = meta.at("noise_std").get<double>();
    rec.rng_seed = meta.at("rng_seed").get<std::uint64_t>();
    const Eigen::Index mchan = meta.at("channels").get<Eigen::Index>();
    const Eigen::Index n = meta.at("samples").get<Eigen::Index>();
    if (mchan != static_cast<Eigen::Index>(rec.mics.size())) {
      throw FormatError("channel count does not match microphone list");
    }

    const std::size_t block =
        4 * static_cast<std::size_t>(n) *
        (static_cast<std::size_t>(mchan) + rec.sources.size());
    std::string bytes(block, '\0');
    if (!in.read(bytes.data(), static_cast<std::streamsize>(block))) {
      throw FormatError("truncated sample block");
    }

    char crc_bytes[4];
    if (!in.read(crc_bytes, 4)) throw FormatError("truncated checksum");
    std::uint32_t stored = 0;
    for (int i = 3; i >= 0; --i) {
      stored = (stored << 8) | static_cast<unsigned char>(crc_bytes[i]);
    }
    if (crc_of(meta_line + "\n" + bytes) != stored) {
      throw FormatError("checksum mismatch in record " + std::to_string(r));
    }

    rec.channels.resize(mchan, n);
    std::size_t off = 0;
    for (Eigen::Index m = 0; m < mchan; ++m) {
      for (Eigen::Index t = 0; t < n; ++t, off += 4) {
        rec.channels(m, t) = read_f32(bytes, off);
      }
    }
    for (SourceSpec& s : rec.sources) {
      s.signal.resize(n);
      for (Eigen::Index t = 0; t < n; ++t, off += 4) {
        s.signal[t] = read_f32(bytes, off);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace sslkit::sim
