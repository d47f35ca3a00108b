// JSON and CSV serialization of run reports.
#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "cpl/trainer.hpp"

namespace cpl {

inline constexpr int kReportSchemaVersion = 1;

namespace detail {

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["paradigm"] = to_string(cfg.paradigm.paradigm);
  j["labeled_per_class"] = cfg.paradigm.labeled_per_class;
  j["seen_fraction"] = cfg.paradigm.seen_fraction;
  j["q_fewshot"] = detail::opt_json(cfg.paradigm.q_fewshot);
  j["lambda"] = cfg.paradigm.lambda;
  j["alpha"] = cfg.selection.alpha;
  j["beta"] = cfg.selection.beta ? nlohmann::json(*cfg.selection.beta) : nlohmann::json("off");
  j["loss"] = to_string(cfg.loss.kind);
  j["lw_leverage"] = cfg.loss.lw_leverage;
  j["iters"] = cfg.big_t;
  j["epochs"] = cfg.optim.epochs;
  j["warmup_epochs"] = cfg.optim.warmup_epochs;
  j["lr"] = cfg.optim.lr;
  j["warmup_lr"] = cfg.optim.warmup_lr;
  j["momentum"] = cfg.optim.momentum;
  j["weight_decay"] = cfg.optim.weight_decay;
  j["b2"] = cfg.optim.batch_unlabeled;
  j["seed"] = cfg.seed;
  return j;
}

inline nlohmann::json iteration_to_json(const IterationRecord& r) {
  nlohmann::json j;
  j["t"] = r.t;
  j["tau"] = r.tau;
  j["k_t"] = r.k_t;
  j["m"] = r.m;
  j["b1"] = r.b1;
  j["epochs"] = r.epochs;
  j["avg_candidate_size"] = r.avg_candidate_size;
  j["label_estimation_accuracy"] =
      r.label_estimation ? nlohmann::json(r.label_estimation->nonempty) : nlohmann::json(nullptr);
  j["label_estimation_accuracy_all"] =
      r.label_estimation ? nlohmann::json(r.label_estimation->all) : nlohmann::json(nullptr);
  j["train_set_label_accuracy"] = detail::opt_json(r.train_set_label_accuracy);
  j["train_loss"] = r.train_loss;
  j["test_top1"] = detail::opt_json(r.test_top1);
  j["per_class_accuracy"] = r.per_class_accuracy;
  j["class_frequency"] = r.class_frequency;
  j["harmonic_mean"] = detail::opt_json(r.harmonic_mean);
  return j;
}

/// Report document. wallclock_s is recorded by the caller; pass 0 for
/// reproducible output.
inline nlohmann::json report_to_json(const RunReport& rep, double wallclock_s = 0.0) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config"] = config_to_json(rep.config);
  j["data"] = {{"labeled_size", rep.labeled_size},
               {"pool_size", rep.pool_size},
               {"delta", rep.delta},
               {"seen_classes", rep.seen_classes},
               {"unseen_classes", rep.unseen_classes}};
  j["per_iteration"] = nlohmann::json::array();
  for (const auto& r : rep.iterations) j["per_iteration"].push_back(iteration_to_json(r));
  nlohmann::json fin;
  fin["test_top1"] = detail::opt_json(rep.final.test_top1);
  fin["harmonic_mean"] = detail::opt_json(rep.final.harmonic_mean);
  fin["acc_seen"] = detail::opt_json(rep.final.acc_seen);
  fin["acc_unseen"] = detail::opt_json(rep.final.acc_unseen);
  if (rep.final.confusion) {
    nlohmann::json rows = nlohmann::json::array();
    const auto& cm = *rep.final.confusion;
    for (std::size_t t = 0; t < cm.c; ++t) {
      std::vector<std::uint64_t> row(cm.counts.begin() + static_cast<std::ptrdiff_t>(t * cm.c),
                                     cm.counts.begin() + static_cast<std::ptrdiff_t>((t + 1) * cm.c));
      rows.push_back(row);
    }
    fin["confusion"] = rows;
  } else {
    fin["confusion"] = nullptr;
  }
  fin["wallclock_s"] = wallclock_s;
  j["final"] = fin;
  return j;
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\pred";
  for (std::size_t p = 0; p < cm.c; ++p) out += "," + std::to_string(p);
  out += '\n';
  for (std::size_t t = 0; t < cm.c; ++t) {
    out += std::to_string(t);
    for (std::size_t p = 0; p < cm.c; ++p) out += "," + std::to_string(cm(t, p));
    out += '\n';
  }
  return out;
}

/// One row per iteration, one column per class.
inline std::string class_frequency_csv(const RunReport& rep) {
  std::string out = "t";
  std::size_t classes = rep.model.classes();
  for (std::size_t c = 0; c < classes; ++c) out += ",class_" + std::to_string(c);
  out += '\n';
  for (const auto& r : rep.iterations) {
    out += std::to_string(r.t);
    for (auto f : r.class_frequency) out += "," + std::to_string(f);
    out += '\n';
  }
  return out;
}

}  // namespace cpl
