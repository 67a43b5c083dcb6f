#pragma once

// Model checkpoint file: a text header describing the layer shapes,
// standardization statistics and training-config hash, followed by the raw
// little-endian float64 parameters. Reals in the header are written as C99
// hex floats, so a round trip is bit-exact.
//
//   FTC-CHECKPOINT 1
//   model ftc-encoder/1
//   stratum WS:0.00-0.05
//   config_hash <sha256>
//   dropout <hexfloat>
//   stats_mean <hexfloat> <hexfloat> <hexfloat>
//   stats_stddev <hexfloat> <hexfloat> <hexfloat>
//   layers 6
//   layer <encoder|decoder> <index> <conv|tconv> <in> <out> <kernel> <stride>
//   ...
//   payload <count>
//   <count * 8 bytes: per layer, weights then bias, row-major>

#include <bit>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "ftc/error.hpp"
#include "ftc/train.hpp"

namespace ftc {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline void write_le(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  os.write(b, 8);
}

inline double read_le(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint: truncated payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw DataError("checkpoint: bad real '" + s + "'");
  return v;
}

inline std::string expect_line(std::istream& is, const std::string& keyword) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("checkpoint: missing '" + keyword + "' line");
  if (line.rfind(keyword + " ", 0) != 0)
    throw DataError("checkpoint: expected '" + keyword + "', got '" + line + "'");
  return line.substr(keyword.size() + 1);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const TrainedModel& m) {
  os << "FTC-CHECKPOINT " << kCheckpointVersion << '\n';
  os << "model " << m.params.version << '\n';
  os << "stratum " << m.stratum.str() << '\n';
  os << "config_hash " << m.config_hash << '\n';
  os << "dropout " << detail::hexfloat(m.params.dropout_rate) << '\n';
  os << "stats_mean";
  for (double v : m.stats.mean) os << ' ' << detail::hexfloat(v);
  os << "\nstats_stddev";
  for (double v : m.stats.stddev) os << ' ' << detail::hexfloat(v);
  os << "\nlayers " << 2 * kStages << '\n';
  std::size_t count = 0;
  for (std::size_t i = 0; i < 2 * kStages; ++i) {
    const auto& l = layer_at(m.params, i);
    const bool enc = i < kStages;
    os << "layer " << (enc ? "encoder " : "decoder ") << (enc ? i : i - kStages)
       << (enc ? " conv " : " tconv ") << l.in_channels << ' ' << l.out_channels << ' '
       << l.kernel_width << ' ' << l.stride << '\n';
    count += l.weights.size() + l.bias.size();
  }
  os << "payload " << count << '\n';
  for (std::size_t i = 0; i < 2 * kStages; ++i) {
    const auto& l = layer_at(m.params, i);
    for (double w : l.weights) detail::write_le(os, w);
    for (double b : l.bias) detail::write_le(os, b);
  }
}

inline TrainedModel read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("FTC-CHECKPOINT ", 0) != 0)
    throw DataError("checkpoint: not a checkpoint file");
  if (std::stoi(line.substr(15)) != kCheckpointVersion)
    throw DataError("checkpoint: unsupported format version '" + line.substr(15) + "'");
  TrainedModel m;
  m.params.version = detail::expect_line(is, "model");
  const auto key = try_parse_stratum(detail::expect_line(is, "stratum"));
  if (!key) throw DataError("checkpoint: bad stratum key");
  m.stratum = *key;
  m.config_hash = detail::expect_line(is, "config_hash");
  m.params.dropout_rate = detail::parse_hexfloat(detail::expect_line(is, "dropout"));
  auto read3 = [&](const std::string& kw, std::array<double, kInputChannels>& out) {
    std::istringstream ss(detail::expect_line(is, kw));
    for (double& v : out) {
      std::string tok;
      if (!(ss >> tok)) throw DataError("checkpoint: short '" + kw + "' line");
      v = detail::parse_hexfloat(tok);
    }
  };
  read3("stats_mean", m.stats.mean);
  read3("stats_stddev", m.stats.stddev);
  if (std::stoul(detail::expect_line(is, "layers")) != 2 * kStages)
    throw DataError("checkpoint: unexpected layer count");
  std::size_t count = 0;
  for (std::size_t i = 0; i < 2 * kStages; ++i) {
    std::istringstream ss(detail::expect_line(is, "layer"));
    std::string block, kind;
    std::size_t idx = 0, in = 0, out = 0, k = 0, stride = 0;
    if (!(ss >> block >> idx >> kind >> in >> out >> k >> stride))
      throw DataError("checkpoint: malformed layer line");
    const bool enc = i < kStages;
    if (block != (enc ? "encoder" : "decoder") || idx != (enc ? i : i - kStages) ||
        kind != (enc ? "conv" : "tconv"))
      throw DataError("checkpoint: layers out of order");
    layer_at(m.params, i) = nd::ConvLayer::zeros(in, out, k, stride);
    count += in * out * k + out;
  }
  if (std::stoul(detail::expect_line(is, "payload")) != count)
    throw DataError("checkpoint: payload size does not match layer shapes");
  for (std::size_t i = 0; i < 2 * kStages; ++i) {
    auto& l = layer_at(m.params, i);
    for (double& w : l.weights) w = detail::read_le(is);
    for (double& b : l.bias) b = detail::read_le(is);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint: trailing bytes");
  return m;
}

inline void save_checkpoint(const std::string& path, const TrainedModel& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path);
  write_checkpoint(os, m);
  if (!os) throw DataError("failed writing checkpoint " + path);
}

inline TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  try {
    return read_checkpoint(is);
  } catch (const std::invalid_argument&) {
    throw DataError("checkpoint " + path + ": malformed number in header");
  }
}

}  // namespace ftc
