// Shared domain types for the candidate-pseudolabel engine.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace cpl {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration (bad flag value, inconsistent shapes).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A run that cannot continue (empty training set, divergence).
class RuntimeAbort : public Error {
 public:
  using Error::Error;
};

inline constexpr int kUnlabeled = -1;

// Warning sink. Tests swap it out to keep output quiet or to capture messages.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg) {
  if (warning_sink()) warning_sink()(msg);
}

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ConfigError("matrix data size does not match shape");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Number of worker threads, capped by the CPL_THREADS environment variable.
inline unsigned worker_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CPL_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

/// Runs fn(i) for i in [0, count). Each index is written by exactly one worker,
/// so results stored per index are independent of the thread count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn, std::size_t min_per_thread = 256) {
  unsigned threads = worker_threads();
  if (threads <= 1 || count < 2 * min_per_thread) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count / min_per_thread));
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  std::size_t chunk = (count + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    std::size_t lo = t * chunk;
    std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
}

enum class DataKind : std::uint8_t { features = 0, logits = 1 };

/// N×d feature (or logit) matrix with optional per-instance labels.
///
/// Labels use kUnlabeled for instances without ground truth. When the
/// container holds logits, d equals the class count.
struct DataContainer {
  DataKind kind = DataKind::features;
  std::size_t c = 0;
  Matrix rows;
  std::vector<int> labels;  // empty, or one entry per row
  std::vector<std::string> class_names;

  std::size_t n() const { return rows.rows(); }
  std::size_t d() const { return rows.cols(); }
  bool has_labels() const { return !labels.empty(); }

  bool is_labeled(std::size_t i) const { return has_labels() && labels[i] != kUnlabeled; }

  void validate() const {
    if (kind == DataKind::logits && d() != c)
      throw ConfigError("logits container must have d == c (d=" + std::to_string(d()) +
                        ", c=" + std::to_string(c) + ")");
    if (!labels.empty() && labels.size() != n())
      throw ConfigError("label count " + std::to_string(labels.size()) + " does not match n=" +
                        std::to_string(n()));
    if (!class_names.empty() && class_names.size() != c)
      throw ConfigError("class_names must have c entries");
    for (double v : rows.data())
      if (!std::isfinite(v)) throw ConfigError("container holds non-finite values");
    for (int y : labels)
      if (y != kUnlabeled && (y < 0 || static_cast<std::size_t>(y) >= c))
        throw ConfigError("label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");
  }

  /// Copy of the listed rows, labels included.
  DataContainer subset(std::span<const std::size_t> idx) const {
    DataContainer out;
    out.kind = kind;
    out.c = c;
    out.class_names = class_names;
    out.rows = Matrix(idx.size(), d());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto src = rows.row(idx[k]);
      std::copy(src.begin(), src.end(), out.rows.row(k).begin());
    }
    if (has_labels()) {
      out.labels.reserve(idx.size());
      for (auto i : idx) out.labels.push_back(labels[i]);
    }
    return out;
  }
};

/// Numerically stable softmax. Throws on non-finite input.
inline std::vector<double> softmax_row(std::span<const double> logits) {
  if (logits.empty()) throw ConfigError("softmax of empty vector");
  for (double v : logits)
    if (!std::isfinite(v)) throw Error("non-finite logits");
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// Index of the largest entry; ties go to the lower index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// N×C row-stochastic confidence matrix.
class ConfidenceMatrix {
 public:
  static constexpr double kRowTolerance = 1e-6;

  ConfidenceMatrix() = default;
  explicit ConfidenceMatrix(Matrix p) : p_(std::move(p)) {
    for (std::size_t i = 0; i < p_.rows(); ++i) {
      double sum = 0.0;
      for (double v : p_.row(i)) {
        if (!(v >= 0.0 && v <= 1.0))
          throw ConfigError("confidence row " + std::to_string(i) + " has entry outside [0,1]");
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowTolerance)
        throw ConfigError("confidence row " + std::to_string(i) + " sums to " +
                          std::to_string(sum));
    }
  }

  /// Softmax of every row of a logit matrix.
  static ConfidenceMatrix from_logits(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    parallel_for(logits.rows(), [&](std::size_t i) {
      auto s = softmax_row(logits.row(i));
      std::copy(s.begin(), s.end(), p.row(i).begin());
    });
    return ConfidenceMatrix(std::move(p));
  }

  std::size_t n() const { return p_.rows(); }
  std::size_t c() const { return p_.cols(); }
  double operator()(std::size_t i, std::size_t c) const { return p_(i, c); }
  std::span<const double> row(std::size_t i) const { return p_.row(i); }
  const Matrix& matrix() const { return p_; }

  /// Column view q_c.
  std::vector<double> column(std::size_t c) const {
    std::vector<double> q(n());
    for (std::size_t i = 0; i < n(); ++i) q[i] = p_(i, c);
    return q;
  }

  /// Row maxima.
  std::vector<double> row_max() const {
    std::vector<double> m(n());
    for (std::size_t i = 0; i < n(); ++i) {
      auto r = row(i);
      m[i] = *std::max_element(r.begin(), r.end());
    }
    return m;
  }

  /// Rows restricted to the listed instances.
  ConfidenceMatrix subset(std::span<const std::size_t> idx) const {
    Matrix m(idx.size(), c());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto r = row(idx[k]);
      std::copy(r.begin(), r.end(), m.row(k).begin());
    }
    ConfidenceMatrix out;
    out.p_ = std::move(m);
    return out;
  }

 private:
  Matrix p_;
};

/// Quantile ratios for candidate selection. A missing beta disables the
/// inter-instance filter.
struct SelectionParams {
  double alpha = 0.75;
  std::optional<double> beta = 0.95;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
    if (beta && !(*beta >= 0.0 && *beta <= 1.0)) throw ConfigError("beta must be in [0,1]");
  }
};

/// Per-instance candidate sets with provenance. Sets are sorted by class index.
struct CandidateAssignment {
  std::size_t c = 0;
  std::vector<std::vector<std::size_t>> sets;
  std::vector<std::vector<std::size_t>> intra_sets;
  std::vector<std::vector<std::size_t>> inter_sets;  // empty when beta is off

  std::size_t n() const { return sets.size(); }

  std::vector<std::uint8_t> target(std::size_t i) const { return set_to_target(sets[i], c); }

  static std::vector<std::uint8_t> set_to_target(std::span<const std::size_t> set, std::size_t c) {
    std::vector<std::uint8_t> s(c, 0);
    for (auto k : set) s.at(k) = 1;
    return s;
  }

  static std::vector<std::size_t> target_to_set(std::span<const std::uint8_t> s) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s[k]) out.push_back(k);
    return out;
  }
};

/// Instances admitted for training in one iteration.
struct TrainingSet {
  std::vector<std::size_t> indices;  // into the confidence matrix rows
  std::vector<std::vector<std::uint8_t>> targets;
  std::vector<std::size_t> selected_by;  // class whose top-K pass admitted the entry

  std::size_t m() const { return indices.size(); }
};

/// Per-class top-K schedule: K_{t+1} = K_t + delta.
struct CurriculumState {
  std::size_t t = 1;
  std::size_t big_t = 1;
  std::size_t k_t = 1;
  std::size_t delta = 1;

  /// delta = floor(pool / (T*C)), clamped to at least 1, and K_1 = delta.
  static CurriculumState start(std::size_t pool_size, std::size_t big_t, std::size_t classes) {
    if (big_t == 0 || classes == 0) throw ConfigError("curriculum needs T >= 1 and C >= 1");
    CurriculumState s;
    s.big_t = big_t;
    s.delta = std::max<std::size_t>(1, pool_size / (big_t * classes));
    s.k_t = s.delta;
    return s;
  }

  void advance() {
    ++t;
    k_t += delta;
  }
};

enum class Paradigm { ssl, ul, trzsl };

struct ParadigmSpec {
  Paradigm paradigm = Paradigm::ul;
  std::size_t labeled_per_class = 2;
  double seen_fraction = 0.62;
  std::optional<std::size_t> q_fewshot;
  double lambda = 1.0;

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(seen_fraction > 0.0 && seen_fraction < 1.0))
      throw ConfigError("seen_fraction must be in (0,1)");
    if (paradigm == Paradigm::ssl && labeled_per_class < 1)
      throw ConfigError("labeled_per_class must be >= 1");
    if (q_fewshot && *q_fewshot < 1) throw ConfigError("q must be >= 1");
  }
};

struct OptimConfig {
  std::size_t epochs = 50;
  std::size_t warmup_epochs = 2;
  double lr = 0.02;
  double warmup_lr = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-2;
  std::size_t batch_unlabeled = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (warmup_epochs >= epochs) throw ConfigError("warmup_epochs must be < epochs");
    if (!(lr > 0 && warmup_lr > 0)) throw ConfigError("learning rates must be positive");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0,1)");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
    if (batch_unlabeled < 1) throw ConfigError("b2 must be >= 1");
  }
};

/// Linear softmax head: logits = W x + b.
struct LinearModel {
  Matrix weights;  // C×D
  std::vector<double> bias;

  LinearModel() = default;
  LinearModel(std::size_t classes, std::size_t dim) : weights(classes, dim), bias(classes, 0.0) {}

  std::size_t classes() const { return weights.rows(); }
  std::size_t dim() const { return weights.cols(); }

  void logits(std::span<const double> x, std::span<double> out) const {
    for (std::size_t c = 0; c < classes(); ++c) {
      auto w = weights.row(c);
      double z = bias[c];
      for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
      out[c] = z;
    }
  }

  bool operator==(const LinearModel&) const = default;
};

inline std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::ssl: return "ssl";
    case Paradigm::ul: return "ul";
    case Paradigm::trzsl: return "trzsl";
  }
  return "?";
}

inline Paradigm parse_paradigm(const std::string& s) {
  if (s == "ssl") return Paradigm::ssl;
  if (s == "ul") return Paradigm::ul;
  if (s == "trzsl") return Paradigm::trzsl;
  throw ConfigError("unknown paradigm '" + s + "'");
}

}  // namespace cpl
