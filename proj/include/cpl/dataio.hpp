// CPLE container files, CSV ingestion and the synthetic data generator.
//
// CPLE layout (all integers little-endian):
//   offset  0  magic "CPLE"
//   offset  4  u32 version (1)
//   offset  8  u8  kind (0 = features, 1 = logits)
//   offset  9  u64 n
//   offset 17  u32 d
//   offset 21  u32 c
//   offset 25  u8  has_labels
//   offset 26  n*d float32, row-major
//              n int32 labels (-1 = unlabeled), present iff has_labels
//              optional UTF-8 JSON sidecar {"class_names": [...]} to end of file
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpl/core.hpp"

namespace cpl {

/// Malformed container file. offset() is the byte position of the problem.
class FormatError : public ConfigError {
 public:
  FormatError(const std::string& msg, std::uint64_t offset)
      : ConfigError(msg + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

inline constexpr std::array<char, 4> kContainerMagic{'C', 'P', 'L', 'E'};
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kHeaderBytes = 26;

struct ContainerHeader {
  std::uint32_t version = kContainerVersion;
  DataKind kind = DataKind::features;
  std::uint64_t n = 0;
  std::uint32_t d = 0;
  std::uint32_t c = 0;
  bool has_labels = false;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t k = 0; k < sizeof(T); ++k) out.push_back(static_cast<char>((u >> (8 * k)) & 0xFF));
}

template <typename T>
T get_le(const std::string& in, std::size_t pos) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k)
    u |= static_cast<U>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
  return static_cast<T>(u);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ConfigError("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline std::string encode_container(const DataContainer& data) {
  data.validate();
  std::string out;
  out.reserve(kHeaderBytes + data.rows.data().size() * 4 + data.labels.size() * 4);
  out.append(kContainerMagic.data(), kContainerMagic.size());
  detail::put_le<std::uint32_t>(out, kContainerVersion);
  detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(data.kind));
  detail::put_le<std::uint64_t>(out, data.n());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.d()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.c));
  detail::put_le<std::uint8_t>(out, data.has_labels() ? 1 : 0);
  for (double v : data.rows.data())
    detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  for (int y : data.labels) detail::put_le<std::int32_t>(out, y);
  if (!data.class_names.empty()) out += nlohmann::json{{"class_names", data.class_names}}.dump();
  return out;
}

inline ContainerHeader decode_header(const std::string& bytes) {
  if (bytes.size() < kHeaderBytes)
    throw FormatError("truncated header: need " + std::to_string(kHeaderBytes) + " bytes, have " +
                          std::to_string(bytes.size()),
                      bytes.size());
  if (std::memcmp(bytes.data(), kContainerMagic.data(), 4) != 0) throw FormatError("bad magic", 0);
  ContainerHeader h;
  h.version = detail::get_le<std::uint32_t>(bytes, 4);
  if (h.version != kContainerVersion)
    throw FormatError("unsupported version " + std::to_string(h.version), 4);
  auto kind = detail::get_le<std::uint8_t>(bytes, 8);
  if (kind > 1) throw FormatError("unknown kind " + std::to_string(kind), 8);
  h.kind = static_cast<DataKind>(kind);
  h.n = detail::get_le<std::uint64_t>(bytes, 9);
  h.d = detail::get_le<std::uint32_t>(bytes, 17);
  h.c = detail::get_le<std::uint32_t>(bytes, 21);
  auto hl = detail::get_le<std::uint8_t>(bytes, 25);
  if (hl > 1) throw FormatError("has_labels must be 0 or 1", 25);
  h.has_labels = hl == 1;
  if (h.kind == DataKind::logits && h.d != h.c)
    throw FormatError("logits container requires d == c", 17);
  return h;
}

inline DataContainer decode_container(const std::string& bytes) {
  auto h = decode_header(bytes);
  // guard against n*d overflow before computing payload sizes
  if (h.d != 0 && h.n > (std::numeric_limits<std::uint64_t>::max() / 8) / h.d)
    throw FormatError("payload size overflows", 9);
  std::uint64_t payload = h.n * h.d * 4;
  std::uint64_t label_bytes = h.has_labels ? h.n * 4 : 0;
  std::uint64_t need = kHeaderBytes + payload + label_bytes;
  if (bytes.size() < need)
    throw FormatError("truncated payload: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size()),
                      bytes.size());

  DataContainer out;
  out.kind = h.kind;
  out.c = h.c;
  out.rows = Matrix(h.n, h.d);
  auto& vals = out.rows.data();
  std::size_t pos = kHeaderBytes;
  for (std::size_t k = 0; k < vals.size(); ++k, pos += 4) {
    float f = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, pos));
    if (!std::isfinite(f)) throw FormatError("non-finite value", pos);
    vals[k] = f;
  }
  if (h.has_labels) {
    out.labels.resize(h.n);
    for (std::size_t i = 0; i < h.n; ++i, pos += 4) {
      auto y = detail::get_le<std::int32_t>(bytes, pos);
      if (y != kUnlabeled && (y < 0 || static_cast<std::uint32_t>(y) >= h.c))
        throw FormatError("label " + std::to_string(y) + " out of range", pos);
      out.labels[i] = y;
    }
  }
  if (pos < bytes.size()) {
    auto sidecar = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(),
                                         nullptr, false);
    if (sidecar.is_discarded() || !sidecar.is_object())
      throw FormatError("trailing bytes are not a JSON sidecar", pos);
    if (sidecar.contains("class_names")) {
      out.class_names = sidecar["class_names"].get<std::vector<std::string>>();
      if (out.class_names.size() != h.c) throw FormatError("class_names length differs from c", pos);
    }
  }
  return out;
}

inline DataContainer load_container(const std::filesystem::path& path) {
  return decode_container(detail::read_file(path));
}

inline void save_container(const DataContainer& data, const std::filesystem::path& path) {
  detail::write_file(path, encode_container(data));
}

/// Reads `f0,...,f{D-1}[,label]` CSV with a header row. The class count is
/// `classes` when given, else max label + 1.
inline DataContainer load_csv(const std::filesystem::path& path,
                              std::optional<std::size_t> classes = std::nullopt) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path.string() + "'");
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };

  std::string line;
  if (!std::getline(f, line)) throw ConfigError("empty CSV '" + path.string() + "'");
  auto header = split(line);
  bool has_label = !header.empty() && header.back() == "label";
  std::size_t d = header.size() - (has_label ? 1 : 0);
  for (std::size_t j = 0; j < d; ++j)
    if (header[j] != "f" + std::to_string(j))
      throw ConfigError("CSV header column " + std::to_string(j) + " should be f" + std::to_string(j));

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != header.size())
      throw ConfigError("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(header.size()));
    try {
      for (std::size_t j = 0; j < d; ++j) values.push_back(std::stod(cells[j]));
      if (has_label) labels.push_back(std::stoi(cells[d]));
    } catch (const std::logic_error&) {
      throw ConfigError("CSV line " + std::to_string(line_no) + " has a non-numeric cell");
    }
  }
  DataContainer out;
  out.kind = DataKind::features;
  std::size_t n = d ? values.size() / d : 0;
  out.rows = Matrix(n, d, std::move(values));
  out.labels = std::move(labels);
  if (classes) {
    out.c = *classes;
  } else {
    int mx = -1;
    for (int y : out.labels) mx = std::max(mx, y);
    out.c = static_cast<std::size_t>(mx + 1);
  }
  // match the float32 storage of binary containers
  for (double& v : out.rows.data()) v = static_cast<float>(v);
  out.validate();
  return out;
}

inline void save_csv(const DataContainer& data, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f.precision(9);
  for (std::size_t j = 0; j < data.d(); ++j) f << (j ? "," : "") << 'f' << j;
  if (data.has_labels()) f << ",label";
  f << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    auto r = data.rows.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) f << (j ? "," : "") << static_cast<float>(r[j]);
    if (data.has_labels()) f << ',' << data.labels[i];
    f << '\n';
  }
}

/// Checkpoint of a linear head as a features container with C rows of [W | b].
inline DataContainer model_to_container(const LinearModel& m) {
  DataContainer out;
  out.kind = DataKind::features;
  out.c = m.classes();
  out.rows = Matrix(m.classes(), m.dim() + 1);
  for (std::size_t c = 0; c < m.classes(); ++c) {
    auto w = m.weights.row(c);
    auto r = out.rows.row(c);
    std::copy(w.begin(), w.end(), r.begin());
    r[m.dim()] = m.bias[c];
  }
  return out;
}

inline LinearModel model_from_container(const DataContainer& ckpt) {
  if (ckpt.kind != DataKind::features || ckpt.n() != ckpt.c || ckpt.d() < 1)
    throw ConfigError("checkpoint must be a features container of shape C x (D+1)");
  LinearModel m(ckpt.c, ckpt.d() - 1);
  for (std::size_t c = 0; c < ckpt.c; ++c) {
    auto r = ckpt.rows.row(c);
    std::copy(r.begin(), r.end() - 1, m.weights.row(c).begin());
    m.bias[c] = r.back();
  }
  return m;
}

/// Parameters of the synthetic generator.
///
/// Features are unit-covariance Gaussian blobs centred at separation * u_c for
/// random unit vectors u_c. The logits imitate a miscalibrated zero-shot model:
/// logit_ic = signal * [c == y_i] + confusion_bias[c] + noise * eps_ic.
struct SynthConfig {
  std::size_t classes = 10;
  std::size_t per_class = 200;
  std::size_t test_per_class = 0;
  std::size_t dim = 32;
  double separation = 4.0;
  std::vector<double> confusion_bias;  // empty = all zeros
  double logit_signal = 2.0;
  double logit_noise = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  DataContainer features;  // training features with ground-truth labels
  DataContainer logits;    // zero-shot logits for the same rows
  DataContainer test;      // held-out features (empty when test_per_class = 0)
};

inline SyntheticData make_synthetic(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (!(cfg.separation > 0.0)) throw ConfigError("separation must be positive");
  if (cfg.dim < 1) throw ConfigError("dim must be >= 1");
  std::vector<double> bias = cfg.confusion_bias;
  if (bias.empty()) bias.assign(cfg.classes, 0.0);
  if (bias.size() != cfg.classes) throw ConfigError("confusion_bias needs one entry per class");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix means(cfg.classes, cfg.dim);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    auto m = means.row(c);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : m) {
        v = gauss(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : m) v = cfg.separation * v / norm;
  }

  auto draw = [&](std::size_t per_class, bool with_logits, DataContainer& feats, DataContainer* logits) {
    std::size_t n = per_class * cfg.classes;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % cfg.classes);
    std::shuffle(labels.begin(), labels.end(), rng);
    feats.kind = DataKind::features;
    feats.c = cfg.classes;
    feats.rows = Matrix(n, cfg.dim);
    feats.labels = labels;
    if (with_logits) {
      logits->kind = DataKind::logits;
      logits->c = cfg.classes;
      logits->rows = Matrix(n, cfg.classes);
      logits->labels = labels;
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto y = static_cast<std::size_t>(labels[i]);
      auto x = feats.rows.row(i);
      auto mu = means.row(y);
      for (std::size_t j = 0; j < cfg.dim; ++j) x[j] = static_cast<float>(mu[j] + gauss(rng));
      if (with_logits) {
        auto z = logits->rows.row(i);
        for (std::size_t c = 0; c < cfg.classes; ++c)
          z[c] = static_cast<float>((c == y ? cfg.logit_signal : 0.0) + bias[c] +
                                    cfg.logit_noise * gauss(rng));
      }
    }
  };

  SyntheticData out;
  draw(cfg.per_class, true, out.features, &out.logits);
  if (cfg.test_per_class > 0) draw(cfg.test_per_class, false, out.test, nullptr);
  return out;
}

}  // namespace cpl
