// cpl: command-line front end for the candidate-pseudolabel engine.
//
//   cpl run     train with candidate pseudolabels and write a JSON report
//   cpl synth   generate synthetic feature / logits / test containers
//   cpl select  apply candidate selection once to a logits container
//   cpl eval    score a model checkpoint on a test container
//
// Exit codes: 0 success, 2 configuration or I/O error, 3 runtime abort.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpl/cpl.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;

std::optional<double> parse_beta(const std::string& s) {
  if (s == "off") return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw cpl::ConfigError("--beta: expected a number in [0,1] or 'off', got '" + s + "'");
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw cpl::ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

struct RunArgs {
  std::string data, logits, test, out = "report.json", save_model, csv_prefix;
  std::string paradigm = "ul", loss = "cc", beta = "0.95";
  double alpha = 0.75, lambda = 1.0, lw_leverage = 1.0, seen_fraction = 0.62;
  double lr = 0.02, warmup_lr = 1e-4, momentum = 0.9, weight_decay = 5e-2;
  std::size_t iters = 10, epochs = 50, warmup_epochs = 2, b2 = 64, labeled_per_class = 2, q = 0;
  std::uint64_t seed = 0;
  bool record_time = false;
};

int cmd_run(const RunArgs& a) {
  cpl::RunConfig cfg;
  cfg.paradigm.paradigm = cpl::parse_paradigm(a.paradigm);
  cfg.paradigm.labeled_per_class = a.labeled_per_class;
  cfg.paradigm.seen_fraction = a.seen_fraction;
  if (a.q > 0) cfg.paradigm.q_fewshot = a.q;
  cfg.paradigm.lambda = a.lambda;
  cfg.selection.alpha = a.alpha;
  cfg.selection.beta = parse_beta(a.beta);
  cfg.loss.kind = cpl::parse_loss(a.loss);
  cfg.loss.lw_leverage = a.lw_leverage;
  cfg.optim.epochs = a.epochs;
  cfg.optim.warmup_epochs = a.warmup_epochs;
  cfg.optim.lr = a.lr;
  cfg.optim.warmup_lr = a.warmup_lr;
  cfg.optim.momentum = a.momentum;
  cfg.optim.weight_decay = a.weight_decay;
  cfg.optim.batch_unlabeled = a.b2;
  cfg.optim.seed = a.seed;
  cfg.big_t = a.iters;
  cfg.seed = a.seed;
  cfg.validate();

  auto data = cpl::load_container(a.data);
  cpl::DataContainer test;
  if (!a.test.empty()) test = cpl::load_container(a.test);
  std::optional<cpl::DataContainer> logits;
  if (!a.logits.empty()) logits = cpl::load_container(a.logits);
  if (logits && logits->kind != cpl::DataKind::logits)
    throw cpl::ConfigError("--logits: container kind must be logits");

  auto start = std::chrono::steady_clock::now();
  auto report = cpl::run_cpl(cfg, data, test, logits ? &*logits : nullptr);
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_text(a.out, cpl::report_to_json(report, a.record_time ? elapsed : 0.0).dump(2) + "\n");
  if (!a.save_model.empty()) cpl::save_container(cpl::model_to_container(report.model), a.save_model);
  if (!a.csv_prefix.empty()) {
    write_text(a.csv_prefix + "_class_frequency.csv", cpl::class_frequency_csv(report));
    if (report.final.confusion)
      write_text(a.csv_prefix + "_confusion.csv", cpl::confusion_csv(*report.final.confusion));
  }

  const auto& last = report.iterations.back();
  std::cout << "iterations " << report.iterations.size() << "  final M " << last.m;
  if (report.final.test_top1) std::cout << "  test top-1 " << *report.final.test_top1;
  if (report.final.harmonic_mean) std::cout << "  harmonic mean " << *report.final.harmonic_mean;
  std::cout << "\nreport written to " << a.out << '\n';
  return 0;
}

struct SynthArgs {
  cpl::SynthConfig cfg;
  std::string bias;
  std::string out = "synth";
};

std::vector<double> parse_bias(const std::string& spec, std::size_t classes) {
  // Either "c:v,c:v" sparse entries or a full comma list of C values.
  std::vector<double> bias(classes, 0.0);
  if (spec.empty()) return bias;
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  bool sparse = spec.find(':') != std::string::npos;
  if (!sparse && parts.size() != classes)
    throw cpl::ConfigError("--bias: expected " + std::to_string(classes) + " values or class:value pairs");
  try {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (sparse) {
        auto colon = parts[k].find(':');
        if (colon == std::string::npos) throw cpl::ConfigError("--bias: mixed list formats");
        auto c = std::stoul(parts[k].substr(0, colon));
        if (c >= classes) throw cpl::ConfigError("--bias: class " + std::to_string(c) + " out of range");
        bias[c] = std::stod(parts[k].substr(colon + 1));
      } else {
        bias[k] = std::stod(parts[k]);
      }
    }
  } catch (const std::logic_error&) {
    throw cpl::ConfigError("--bias: could not parse '" + spec + "'");
  }
  return bias;
}

int cmd_synth(SynthArgs a) {
  a.cfg.confusion_bias = parse_bias(a.bias, a.cfg.classes);
  auto syn = cpl::make_synthetic(a.cfg);
  cpl::save_container(syn.features, a.out + ".features.cple");
  cpl::save_container(syn.logits, a.out + ".logits.cple");
  std::cout << "wrote " << a.out << ".features.cple, " << a.out << ".logits.cple";
  if (syn.test.n() > 0) {
    cpl::save_container(syn.test, a.out + ".test.cple");
    std::cout << ", " << a.out << ".test.cple";
  }
  std::cout << '\n';
  return 0;
}

struct SelectArgs {
  std::string logits, json_out;
  double alpha = 0.75;
  std::string beta = "0.95";
};

int cmd_select(const SelectArgs& a) {
  cpl::SelectionParams params{a.alpha, parse_beta(a.beta)};
  params.validate();
  auto data = cpl::load_container(a.logits);
  if (data.kind != cpl::DataKind::logits) throw cpl::ConfigError("--logits: container kind must be logits");
  auto conf = cpl::ConfidenceMatrix::from_logits(data.rows);
  auto res = cpl::generate_candidates_detailed(conf, params);
  const auto& assign = res.assignment;

  nlohmann::json j;
  j["tau"] = res.tau;
  j["n"] = assign.n();
  std::size_t nonempty = 0;
  for (const auto& s : assign.sets) nonempty += s.empty() ? 0 : 1;
  j["nonempty"] = nonempty;
  j["avg_candidate_size"] = nonempty ? nlohmann::json(cpl::avg_candidate_size(assign)) : nlohmann::json(nullptr);
  j["class_frequency"] = cpl::class_frequency(assign);
  if (data.has_labels() &&
      std::any_of(data.labels.begin(), data.labels.end(), [](int y) { return y != cpl::kUnlabeled; })) {
    auto le = cpl::label_estimation_accuracy(assign, data.labels);
    j["label_estimation_accuracy"] = le.nonempty;
    j["label_estimation_accuracy_all"] = le.all;
  }

  std::cout << "tau " << res.tau << '\n'
            << "nonempty sets " << nonempty << " / " << assign.n() << '\n';
  if (nonempty) std::cout << "avg candidate size " << j["avg_candidate_size"].get<double>() << '\n';
  std::cout << "class frequency";
  for (auto f : j["class_frequency"]) std::cout << ' ' << f.get<std::uint64_t>();
  std::cout << '\n';
  if (j.contains("label_estimation_accuracy"))
    std::cout << "label estimation accuracy " << j["label_estimation_accuracy"].get<double>() << " (all "
              << j["label_estimation_accuracy_all"].get<double>() << ")\n";
  if (!a.json_out.empty()) write_text(a.json_out, j.dump(2) + "\n");
  return 0;
}

struct EvalArgs {
  std::string model, test, json_out;
};

int cmd_eval(const EvalArgs& a) {
  auto model = cpl::model_from_container(cpl::load_container(a.model));
  auto test = cpl::load_container(a.test);
  test.validate();
  if (test.d() != model.dim() || test.c != model.classes())
    throw cpl::ConfigError("checkpoint shape does not match test container");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < test.n(); ++i)
    if (test.is_labeled(i)) idx.push_back(i);
  if (idx.empty()) throw cpl::ConfigError("test container has no labels");
  auto sub = test.subset(idx);
  auto preds = cpl::argmax_rows(cpl::predict_logits(model, sub.rows));
  double top1 = cpl::top1_accuracy(preds, sub.labels);
  auto cm = cpl::confusion(preds, sub.labels, model.classes());
  std::cout << "top-1 " << top1 << '\n';
  if (!a.json_out.empty()) {
    nlohmann::json j;
    j["test_top1"] = top1;
    j["per_class_accuracy"] = cpl::per_class_accuracy(cm);
    write_text(a.json_out, j.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Candidate pseudolabel learning engine"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "train with candidate pseudolabels");
  run_cmd->add_option("--data", run.data, "training features container")->required();
  run_cmd->add_option("--logits", run.logits, "first-iteration logits container");
  run_cmd->add_option("--test", run.test, "test features container");
  run_cmd->add_option("--paradigm", run.paradigm, "ssl | ul | trzsl")->capture_default_str();
  run_cmd->add_option("--loss", run.loss, "cc | rc | cav | lw | softce")->capture_default_str();
  run_cmd->add_option("--alpha", run.alpha, "intra-instance quantile")->capture_default_str();
  run_cmd->add_option("--beta", run.beta, "inter-instance quantile or 'off'")->capture_default_str();
  run_cmd->add_option("--lambda", run.lambda, "weight of the candidate-label term")->capture_default_str();
  run_cmd->add_option("--iters", run.iters, "curriculum iterations T")->capture_default_str();
  run_cmd->add_option("--epochs", run.epochs, "total epochs, split across iterations")->capture_default_str();
  run_cmd->add_option("--warmup-epochs", run.warmup_epochs)->capture_default_str();
  run_cmd->add_option("--lr", run.lr)->capture_default_str();
  run_cmd->add_option("--warmup-lr", run.warmup_lr)->capture_default_str();
  run_cmd->add_option("--momentum", run.momentum)->capture_default_str();
  run_cmd->add_option("--weight-decay", run.weight_decay)->capture_default_str();
  run_cmd->add_option("--b2", run.b2, "candidate-labeled batch size")->capture_default_str();
  run_cmd->add_option("--labeled-per-class", run.labeled_per_class, "ssl labeled shots")->capture_default_str();
  run_cmd->add_option("--seen-fraction", run.seen_fraction, "trzsl seen class ratio")->capture_default_str();
  run_cmd->add_option("--q", run.q, "few-shot unlabeled cap per class (0 = off)")->capture_default_str();
  run_cmd->add_option("--lw-leverage", run.lw_leverage)->capture_default_str();
  run_cmd->add_option("--seed", run.seed)->capture_default_str();
  run_cmd->add_option("--out", run.out, "report path")->capture_default_str();
  run_cmd->add_option("--save-model", run.save_model, "checkpoint path");
  run_cmd->add_option("--csv-prefix", run.csv_prefix, "write <prefix>_confusion.csv and <prefix>_class_frequency.csv");
  run_cmd->add_flag("--record-time", run.record_time, "store wall-clock seconds in the report");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic containers");
  synth_cmd->add_option("--classes", synth.cfg.classes)->capture_default_str();
  synth_cmd->add_option("--per-class", synth.cfg.per_class)->capture_default_str();
  synth_cmd->add_option("--test-per-class", synth.cfg.test_per_class)->capture_default_str();
  synth_cmd->add_option("--dim", synth.cfg.dim)->capture_default_str();
  synth_cmd->add_option("--separation", synth.cfg.separation)->capture_default_str();
  synth_cmd->add_option("--bias", synth.bias, "per-class logit bias: 'c:v,...' or C comma values");
  synth_cmd->add_option("--signal", synth.cfg.logit_signal, "true-class logit")->capture_default_str();
  synth_cmd->add_option("--noise", synth.cfg.logit_noise, "logit noise std")->capture_default_str();
  synth_cmd->add_option("--seed", synth.cfg.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "output prefix")->capture_default_str();

  SelectArgs select;
  auto* select_cmd = app.add_subcommand("select", "apply candidate selection to a logits container");
  select_cmd->add_option("--logits", select.logits)->required();
  select_cmd->add_option("--alpha", select.alpha)->capture_default_str();
  select_cmd->add_option("--beta", select.beta, "quantile or 'off'")->capture_default_str();
  select_cmd->add_option("--json", select.json_out, "write statistics as JSON");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a test container");
  eval_cmd->add_option("--model", eval.model)->required();
  eval_cmd->add_option("--test", eval.test)->required();
  eval_cmd->add_option("--json", eval.json_out, "write metrics as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*synth_cmd) return cmd_synth(synth);
    if (*select_cmd) return cmd_select(select);
    if (*eval_cmd) return cmd_eval(eval);
  } catch (const cpl::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kExitAbort;
  }
  return kExitConfig;
}
