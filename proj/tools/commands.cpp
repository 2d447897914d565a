#include "commands.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>

#include "apn/checkpoint.hpp"
#include "apn/errors.hpp"
#include "apn/evaluation.hpp"
#include "apn/optimizer.hpp"
#include "apn/smoke.hpp"
#include "apn/synth.hpp"
#include "apn/training.hpp"

namespace apn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_run_config(const fs::path& dir, const std::string& command, const json& options) {
  write_json(dir / "run_config.json", json{{"command", command}, {"options", options}});
}

// Attribute table as seen by a model trained with these flags.
AttributeTable model_attributes(AttributeTable attrs, double binary_threshold, bool normalize_phi) {
  if (binary_threshold > 0.0) attrs = binarize_attributes(std::move(attrs), binary_threshold);
  if (normalize_phi) attrs = normalize_rows(std::move(attrs));
  return attrs;
}

void check_compatible(const ApnModel& model, const Dataset& data) {
  if (model.num_attributes() != data.attrs.num_attributes()) {
    throw ContractError("checkpoint has K=" + std::to_string(model.num_attributes()) +
                        " attributes but the dataset has K=" +
                        std::to_string(data.attrs.num_attributes()));
  }
  if (model.has_encoder != (data.mode == DataMode::kImage)) {
    throw ContractError("checkpoint and dataset disagree on image versus feature-map input");
  }
  if (model.has_encoder) {
    const Shape want{model.encoder.in_channels, model.encoder.input_size, model.encoder.input_size};
    if (data.input_shape != want) throw DimensionError("dataset images do not match the encoder input");
  } else if (data.input_shape.size() != 3 || data.input_shape[2] != model.channels()) {
    throw DimensionError("dataset feature maps do not match the checkpoint channel count");
  }
}

// ---------------------------------------------------------------- gen-data

struct GenDataOptions {
  std::size_t classes = 20;
  std::size_t per_class = 25;
  double unseen = 0.25;
  std::uint64_t seed = 42;
  GlyphSpec glyph;
  std::string out;

  json to_json() const {
    return {{"classes", classes},          {"per-class", per_class},
            {"unseen", unseen},            {"seed", seed},
            {"parts", glyph.num_parts},    {"colors", glyph.colors_per_part},
            {"glyph-size", glyph.glyph_size}, {"jitter", glyph.jitter},
            {"noise", glyph.noise},        {"label-flip", glyph.label_flip},
            {"seen-test", glyph.seen_test_fraction}, {"out", out}};
  }
};

void add_gen_data(CLI::App& sub, GenDataOptions& o) {
  sub.add_option("--classes", o.classes, "number of classes")->capture_default_str();
  sub.add_option("--per-class", o.per_class, "samples per class")->capture_default_str();
  sub.add_option("--unseen", o.unseen, "fraction of classes held out as unseen")->capture_default_str();
  sub.add_option("--seed", o.seed, "generator seed")->capture_default_str();
  sub.add_option("--parts", o.glyph.num_parts, "parts per glyph scene")->capture_default_str();
  sub.add_option("--colors", o.glyph.colors_per_part, "colours per part")->capture_default_str();
  sub.add_option("--glyph-size", o.glyph.glyph_size, "glyph edge in pixels")->capture_default_str();
  sub.add_option("--jitter", o.glyph.jitter, "maximum glyph offset in pixels")->capture_default_str();
  sub.add_option("--noise", o.glyph.noise, "background noise amplitude")->capture_default_str();
  sub.add_option("--label-flip", o.glyph.label_flip, "per-sample attribute label noise")
      ->capture_default_str();
  sub.add_option("--seen-test", o.glyph.seen_test_fraction, "test share of each seen class")
      ->capture_default_str();
  sub.add_option("-o,--out", o.out, "output dataset directory")->required();
}

int cmd_gen_data(GenDataOptions o, std::ostream& out) {
  o.glyph.seed = o.seed;
  const Dataset data = gen_glyph_dataset(o.glyph, o.classes, o.per_class, o.unseen);
  save_dataset(data, o.out);
  write_run_config(o.out, "gen-data", o.to_json());
  out << "wrote " << data.samples.size() << " samples (" << data.attrs.seen_ids.size() << " seen / "
      << data.attrs.unseen_ids.size() << " unseen classes, K=" << data.attrs.num_attributes()
      << ") to " << o.out << "\n";
  return kOk;
}

// ------------------------------------------------------------------- train

struct TrainOptions {
  std::string data;
  std::string out;
  double l1 = 1.0, l2 = 0.1, l3 = 0.2;
  SgdConfig sgd;
  std::uint64_t seed = 7;
  std::size_t batch = 16;
  int checkpoint_every = 10;
  bool cpt_raw = false;
  bool normalize_phi = false;
  double binarize = 0.0;
  bool quiet = false;

  json to_json() const {
    return {{"data", data},
            {"out", out},
            {"l1", l1},
            {"l2", l2},
            {"l3", l3},
            {"epochs", sgd.epochs},
            {"seed", seed},
            {"lr", sgd.base_lr},
            {"momentum", sgd.momentum},
            {"weight-decay", sgd.weight_decay},
            {"decay-every", sgd.decay_every},
            {"decay-factor", sgd.decay_factor},
            {"batch", batch},
            {"checkpoint-every", checkpoint_every},
            {"cpt-raw", cpt_raw},
            {"normalize-phi", normalize_phi},
            {"binarize", binarize}};
  }
};

void add_train(CLI::App& sub, TrainOptions& o) {
  sub.add_option("--data", o.data, "dataset directory or manifest")->required();
  sub.add_option("-o,--out", o.out, "run directory")->required();
  sub.add_option("--l1", o.l1, "weight of the attribute regression loss")->capture_default_str();
  sub.add_option("--l2", o.l2, "weight of the attribute decorrelation loss")->capture_default_str();
  sub.add_option("--l3", o.l3, "weight of the compactness loss")->capture_default_str();
  sub.add_option("--epochs", o.sgd.epochs, "training epochs")->capture_default_str();
  sub.add_option("--seed", o.seed, "initialization and shuffling seed")->capture_default_str();
  sub.add_option("--lr", o.sgd.base_lr, "initial learning rate")->capture_default_str();
  sub.add_option("--momentum", o.sgd.momentum, "SGD momentum")->capture_default_str();
  sub.add_option("--weight-decay", o.sgd.weight_decay, "coupled weight decay")->capture_default_str();
  sub.add_option("--decay-every", o.sgd.decay_every, "epochs between learning-rate decays")
      ->capture_default_str();
  sub.add_option("--decay-factor", o.sgd.decay_factor, "learning-rate decay factor")
      ->capture_default_str();
  sub.add_option("--batch", o.batch, "mini-batch size")->capture_default_str();
  sub.add_option("--checkpoint-every", o.checkpoint_every, "epochs between checkpoints (0: final only)")
      ->capture_default_str();
  sub.add_flag("--cpt-raw", o.cpt_raw, "compactness loss on unclamped similarity maps");
  sub.add_flag("--normalize-phi", o.normalize_phi, "L2-normalize class attribute vectors");
  sub.add_option("--binarize", o.binarize, "train on attributes thresholded at this value (0: off)")
      ->capture_default_str();
  sub.add_flag("-q,--quiet", o.quiet, "no per-epoch output");
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
  if (o.checkpoint_every < 0) throw ContractError("--checkpoint-every must be >= 0");
  if (o.binarize < 0.0 || o.binarize >= 1.0) throw ContractError("--binarize must lie in [0,1)");
  TrainConfig cfg;
  cfg.sgd = o.sgd;
  cfg.sgd.seed = o.seed;
  cfg.weights = LossWeights{o.l1, o.l2, o.l3, o.cpt_raw};
  cfg.batch_size = o.batch;
  if (o.batch == 0) throw ContractError("--batch must be positive");
  if (o.l1 < 0 || o.l2 < 0 || o.l3 < 0) throw ContractError("loss weights must be >= 0");
  cfg.sgd.validate();

  const Dataset data = load_manifest(o.data);
  const AttributeTable attrs = model_attributes(data.attrs, o.binarize, o.normalize_phi);
  ApnModel model;
  if (data.mode == DataMode::kImage) {
    if (data.input_shape.size() != 3 || data.input_shape[1] != data.input_shape[2]) {
      throw DimensionError("image datasets must hold square 3-D tensors");
    }
    EncoderConfig enc;
    enc.in_channels = data.input_shape[0];
    enc.input_size = data.input_shape[1];
    model = ApnModel::initialize(enc, attrs.num_attributes(), o.seed);
  } else {
    model = ApnModel::initialize_feature_mode(data.input_shape.at(2), attrs.num_attributes(), o.seed);
  }
  check_compatible(model, data);
  const std::vector<Example> examples = data.examples(Split::kTrain);
  if (examples.empty()) throw ContractError("dataset has no training samples");

  ensure_dir(o.out);
  write_run_config(o.out, "train", o.to_json());
  CheckpointInfo info;
  info.seed = o.seed;
  info.cpt_raw = o.cpt_raw;
  info.normalize_phi = o.normalize_phi;
  info.binary_threshold = o.binarize;

  const auto logs = train(model, examples, attrs, cfg, [&](const EpochLog& log, const ApnModel& m) {
    const int done = log.epoch + 1;
    if (!o.quiet) {
      char line[160];
      std::snprintf(line, sizeof line,
                    "epoch %3d lr %.2e  cls %.4f reg %.4f ad %.4f cpt %.4f total %.4f\n", done,
                    log.lr, log.cls, log.reg, log.ad, log.cpt, log.total);
      out << line << std::flush;
    }
    if (o.checkpoint_every > 0 && done % o.checkpoint_every == 0 && done < cfg.sgd.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d", done);
      CheckpointInfo at = info;
      at.epoch = done;
      save_checkpoint(fs::path(o.out) / name, m, at);
    }
  });
  info.epoch = cfg.sgd.epochs;
  info.final = true;
  save_checkpoint(fs::path(o.out) / "final", model, info);
  std::ofstream log_file(fs::path(o.out) / "train_log.csv", std::ios::binary);
  if (!log_file) throw IoError("cannot write training log");
  write_training_log(log_file, logs);
  out << "final checkpoint: " << (fs::path(o.out) / "final").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- eval

struct Loaded {
  Dataset data;
  ApnModel model;
  CheckpointInfo info;
  AttributeTable attrs;  // as used by the model
};

Loaded load_run(const std::string& data_path, const std::string& checkpoint) {
  Loaded l;
  l.data = load_manifest(data_path);
  l.model = load_checkpoint(checkpoint, &l.info);
  check_compatible(l.model, l.data);
  l.attrs = model_attributes(l.data.attrs, l.info.binary_threshold, l.info.normalize_phi);
  return l;
}

struct EvalOptions {
  std::string data;
  std::string checkpoint;
  std::string out;
  std::string mode = "zsl";
  std::optional<double> gamma;
  std::string gamma_grid;

  json to_json() const {
    json j = {{"data", data}, {"checkpoint", checkpoint}, {"out", out}, {"mode", mode}};
    j["gamma"] = gamma ? json(*gamma) : json(nullptr);
    j["gamma-grid"] = gamma_grid;
    return j;
  }
};

void add_eval(CLI::App& sub, EvalOptions& o) {
  sub.add_option("--data", o.data, "dataset directory or manifest")->required();
  sub.add_option("--checkpoint", o.checkpoint, "checkpoint directory")->required();
  sub.add_option("-o,--out", o.out, "report directory")->required();
  sub.add_option("--mode", o.mode, "zsl or gzsl")
      ->check(CLI::IsMember({"zsl", "gzsl"}))
      ->capture_default_str();
  sub.add_option("--gamma", o.gamma, "calibration constant for a single GZSL evaluation");
  sub.add_option("--gamma-grid", o.gamma_grid, "lo:hi:step calibration sweep (GZSL)");
}

json report_json(const EvalReport& r) {
  json per_class = json::object();
  for (const auto& [id, acc] : r.per_class_acc) per_class[std::to_string(id)] = acc;
  return {{"top1", r.top1}, {"per_class", per_class}};
}

json gzsl_json(const EvalReport& r) {
  return {{"gamma", r.gamma}, {"s", r.acc_seen}, {"u", r.acc_unseen}, {"H", r.harmonic}};
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  if (o.mode == "zsl" && (o.gamma || !o.gamma_grid.empty())) {
    throw ContractError("--gamma and --gamma-grid apply to --mode gzsl only");
  }
  if (o.gamma && !o.gamma_grid.empty()) throw ContractError("give either --gamma or --gamma-grid");
  const std::vector<double> grid =
      o.mode == "gzsl" && !o.gamma ? parse_gamma_grid(o.gamma_grid.empty() ? "0:1:0.02" : o.gamma_grid)
                                   : std::vector<double>{};
  const Loaded run = load_run(o.data, o.checkpoint);
  std::vector<const Sample*> samples = run.data.select(Split::kTest);
  if (o.mode == "zsl") {
    std::erase_if(samples, [&](const Sample* s) { return run.attrs.is_seen(s->class_id); });
  }
  if (samples.empty()) throw ContractError("no test samples to evaluate");
  const auto inference = run_inference(run.model, run.attrs, samples, thread_count_from_env());
  std::vector<Tensor> scores;
  std::vector<std::size_t> labels;
  for (const auto& r : inference) {
    scores.push_back(r.scores);
    labels.push_back(r.class_id);
  }

  ensure_dir(o.out);
  write_run_config(o.out, "eval", o.to_json());
  const AttributeTable& truth = run.data.attrs;
  json report = {{"mode", o.mode},
                 {"checkpoint_epoch", run.info.epoch},
                 {"samples", samples.size()},
                 {"attribute_accuracy",
                  {{"seen", attribute_accuracy(inference, truth, [&](std::size_t c) { return truth.is_seen(c); })},
                   {"unseen",
                    attribute_accuracy(inference, truth, [&](std::size_t c) { return !truth.is_seen(c); })}}}};
  char line[160];
  if (o.mode == "zsl") {
    const EvalReport r = evaluate_zsl(scores, labels, run.attrs);
    report["zsl"] = report_json(r);
    std::snprintf(line, sizeof line, "ZSL top-1 (unseen classes): %.4f\n", r.top1);
    out << line;
  } else if (o.gamma) {
    const EvalReport r = evaluate_gzsl(scores, labels, run.attrs, *o.gamma);
    report["gzsl"] = gzsl_json(r);
    std::snprintf(line, sizeof line, "GZSL gamma %.4g: s %.4f u %.4f H %.4f\n", r.gamma, r.acc_seen,
                  r.acc_unseen, r.harmonic);
    out << line;
  } else {
    const CalibrationSweep sweep = calibration_sweep(scores, labels, run.attrs, grid);
    std::ostringstream csv;
    write_sweep_csv(csv, sweep);
    write_text(fs::path(o.out) / "sweep.csv", csv.str());
    const EvalReport& best = sweep.rows[sweep.best];
    write_json(fs::path(o.out) / "best_gamma.json", gzsl_json(best));
    report["gzsl"] = gzsl_json(best);
    report["sweep_points"] = sweep.rows.size();
    std::snprintf(line, sizeof line, "GZSL sweep (%zu points), best gamma %.4g: s %.4f u %.4f H %.4f\n",
                  sweep.rows.size(), best.gamma, best.acc_seen, best.acc_unseen, best.harmonic);
    out << line;
  }
  write_json(fs::path(o.out) / "report.json", report);
  return kOk;
}

// ---------------------------------------------------------------- localize

struct LocalizeCliOptions {
  std::string data;
  std::string checkpoint;
  std::string out;
  double fraction = 0.25;
  double threshold = 0.5;
  std::string baseline;
  std::size_t heatmaps = 0;

  json to_json() const {
    return {{"data", data},         {"checkpoint", checkpoint}, {"out", out},
            {"fraction", fraction}, {"threshold", threshold},   {"baseline", baseline},
            {"heatmaps", heatmaps}};
  }
};

void add_localize(CLI::App& sub, LocalizeCliOptions& o) {
  sub.add_option("--data", o.data, "dataset directory or manifest")->required();
  sub.add_option("--checkpoint", o.checkpoint, "checkpoint directory")->required();
  sub.add_option("-o,--out", o.out, "report directory")->required();
  sub.add_option("--fraction", o.fraction, "part box edge as a fraction of the object box")
      ->capture_default_str();
  sub.add_option("--threshold", o.threshold, "IoU needed for a correct part")->capture_default_str();
  sub.add_option("--baseline", o.baseline, "cam: class-activation maps of V instead of prototypes")
      ->check(CLI::IsMember({"", "cam"}));
  sub.add_option("--heatmaps", o.heatmaps, "dump PGM maps and SVG boxes for the first N test images")
      ->capture_default_str();
}

int cmd_localize(const LocalizeCliOptions& o, std::ostream& out) {
  if (!(o.fraction > 0.0 && o.fraction <= 1.0)) throw ContractError("--fraction must lie in (0,1]");
  if (!(o.threshold >= 0.0 && o.threshold <= 1.0)) throw ContractError("--threshold must lie in [0,1]");
  const Loaded run = load_run(o.data, o.checkpoint);
  const std::vector<const Sample*> samples = run.data.select(Split::kTest);
  if (samples.empty()) throw ContractError("no test samples to localize");
  if (std::none_of(samples.begin(), samples.end(), [](const Sample* s) { return !s->parts.empty(); })) {
    throw ContractError("dataset has no part annotations to localize");
  }
  const auto inference = run_inference(run.model, run.attrs, samples, thread_count_from_env());

  LocalizeOptions opts;
  opts.fraction = o.fraction;
  opts.threshold = o.threshold;
  opts.cam = o.baseline == "cam";
  const PcpResult result = localize(run.data, run.model, samples, inference, opts);

  ensure_dir(o.out);
  write_run_config(o.out, "localize", o.to_json());
  std::ostringstream records;
  write_localization_csv(records, result);
  write_text(fs::path(o.out) / "localization.csv", records.str());

  std::ostringstream table;
  table << "part,pcp,count\n";
  char line[128];
  for (const auto& [part, acc] : result.per_part) {
    std::snprintf(line, sizeof line, "%s,%.6f,%zu\n", part.c_str(), acc, result.counts.at(part));
    table << line;
  }
  std::snprintf(line, sizeof line, "mean,%.6f,%zu\n", result.mean, samples.size());
  table << line;
  write_text(fs::path(o.out) / "pcp.csv", table.str());
  json summary = {{"maps", opts.cam ? "cam" : "prototype"},
                  {"fraction", o.fraction},
                  {"threshold", o.threshold},
                  {"mean", result.mean},
                  {"per_part", result.per_part}};
  write_json(fs::path(o.out) / "pcp.json", summary);

  if (o.heatmaps > 0) {
    const std::size_t n = std::min(o.heatmaps, samples.size());
    LocalizeOptions dump = opts;
    dump.heatmap_dir = fs::path(o.out) / "heatmaps";
    ensure_dir(*dump.heatmap_dir);
    localize(run.data, run.model, std::span(samples).first(n), std::span(inference).first(n), dump);
  }

  out << (opts.cam ? "BaseMod+CAM" : "prototype") << " PCP at fraction " << o.fraction
      << ", IoU >= " << o.threshold << "\n"
      << table.str();
  return kOk;
}

// --------------------------------------------------------------- gradcheck

struct GradcheckOptions {
  std::string loss = "full";
  std::optional<double> tolerance;
  std::uint64_t seed = 0;
  std::string out;

  json to_json(double tol) const {
    return {{"loss", loss}, {"tolerance", tol}, {"seed", seed}, {"out", out}};
  }
};

void add_gradcheck(CLI::App& sub, GradcheckOptions& o) {
  sub.add_option("--loss", o.loss, "cls (BaseMod only) or full")
      ->check(CLI::IsMember({"cls", "full"}))
      ->capture_default_str();
  sub.add_option("--tolerance", o.tolerance, "maximum relative error (default 1e-5 cls, 1e-4 full)");
  sub.add_option("--seed", o.seed, "smoke problem seed")->capture_default_str();
  sub.add_option("-o,--out", o.out, "optional report directory");
}

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  const bool cls = o.loss == "cls";
  GradCheckOptions opts;
  opts.tolerance = o.tolerance.value_or(cls ? 1e-5 : 1e-4);
  if (!(opts.tolerance > 0.0)) throw ContractError("--tolerance must be positive");
  const LossWeights weights = cls ? LossWeights{0.0, 0.0, 0.0, false} : LossWeights{};

  const auto start = std::chrono::steady_clock::now();
  const SmokeProblem problem = make_smoke_problem(o.seed);
  const auto batch = problem.batch();
  const GradCheckReport report = grad_check(problem.model, batch, problem.attrs, weights, opts);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  char line[160];
  out << "parameter  checked  skipped  max_rel_error  status\n";
  json entries = json::array();
  for (const auto& e : report.entries) {
    std::snprintf(line, sizeof line, "%-9s  %7zu  %7zu  %13.3e  %s\n", e.name.c_str(), e.checked, e.skipped,
                  e.max_rel_error, e.passed ? "ok" : "FAIL");
    out << line;
    entries.push_back({{"name", e.name},
                       {"checked", e.checked},
                       {"skipped", e.skipped},
                       {"max_rel_error", e.max_rel_error},
                       {"passed", e.passed}});
  }
  std::snprintf(line, sizeof line, "%s loss, tolerance %.1e: %s (%.2f s)\n", o.loss.c_str(), opts.tolerance,
                report.passed ? "PASS" : "FAIL", seconds);
  out << line;
  if (!report.passed) {
    out << "failing:";
    for (const auto& name : report.failing()) out << ' ' << name;
    out << "\n";
  }
  if (!o.out.empty()) {
    ensure_dir(o.out);
    write_run_config(o.out, "gradcheck", o.to_json(opts.tolerance));
    write_json(fs::path(o.out) / "gradcheck.json",
               {{"loss", o.loss}, {"tolerance", opts.tolerance}, {"passed", report.passed}, {"entries", entries}});
  }
  return report.passed ? kOk : kContractFailure;
}

// ------------------------------------------------------------- config files

const std::set<std::string> kFlagKeys{"cpt-raw", "normalize-phi", "quiet"};

// Turns `--config file.json` into command-line tokens placed before the
// user's own arguments; options given explicitly win over the file.
std::vector<std::string> expand_config(const std::vector<std::string>& args,
                                       const std::function<bool(const std::string&, const std::string&)>& known) {
  std::vector<std::string> rest;
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!path || rest.empty()) return rest;

  std::ifstream is(*path);
  if (!is) throw IoError("cannot read config file " + *path);
  json cfg;
  try {
    is >> cfg;
  } catch (const json::exception& e) {
    throw IoError("malformed config file " + *path + ": " + e.what());
  }
  if (cfg.contains("options")) {
    if (cfg.contains("command") && cfg["command"] != rest.front()) {
      throw ContractError("config file was written for command " + cfg["command"].dump());
    }
    cfg = cfg["options"];
  }
  if (!cfg.is_object()) throw ContractError("config file must hold a JSON object");

  auto given = [&](const std::string& key) {
    for (const auto& a : rest) {
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
      if (key == "out" && a == "-o") return true;
    }
    return false;
  };
  std::vector<std::string> tokens{rest.front()};
  for (const auto& [key, value] : cfg.items()) {
    if (!known(rest.front(), key)) {
      throw ContractError("unknown config key '" + key + "' for command " + rest.front());
    }
    if (given(key)) continue;
    if (value.is_null()) continue;
    if (kFlagKeys.count(key)) {
      if (!value.is_boolean()) throw ContractError("config key '" + key + "' must be true or false");
      if (value.get<bool>()) tokens.push_back("--" + key);
      continue;
    }
    if (value.is_string() && value.get<std::string>().empty()) continue;
    tokens.push_back("--" + key);
    tokens.push_back(value.is_string() ? value.get<std::string>() : value.dump());
  }
  tokens.insert(tokens.end(), rest.begin() + 1, rest.end());
  return tokens;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attribute prototype network for zero-shot learning", "apn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "apn 1.0");

  GenDataOptions gen;
  TrainOptions tr;
  EvalOptions ev;
  LocalizeCliOptions loc;
  GradcheckOptions gc;
  std::string config_path;
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file of option values; explicit flags take precedence");
    return sub;
  };
  add_gen_data(*with_config(app.add_subcommand("gen-data", "generate the synthetic glyph dataset")), gen);
  add_train(*with_config(app.add_subcommand("train", "train a model with SGD")), tr);
  add_eval(*with_config(app.add_subcommand("eval", "zero-shot and generalized zero-shot evaluation")), ev);
  add_localize(*with_config(app.add_subcommand("localize", "part localization and PCP")), loc);
  add_gradcheck(*with_config(app.add_subcommand("gradcheck", "finite-difference gradient check")), gc);

  try {
    const auto known = [&](const std::string& cmd, const std::string& key) {
      const CLI::App* sub = app.get_subcommand_no_throw(cmd);
      return sub && key != "config" && sub->get_option_no_throw("--" + key) != nullptr;
    };
    const std::vector<std::string> args = expand_config(raw_args, known);
    std::vector<std::string> storage{"apn"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    try {
      app.parse(int(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = e.get_exit_code();
      if (code == 0) {
        out << (dynamic_cast<const CLI::CallForVersion*>(&e) ? e.what() + std::string("\n")
                                                             : app.help(app.get_subcommands().empty()
                                                                            ? ""
                                                                            : app.get_subcommands()[0]->get_name()));
        return kOk;
      }
      err << "apn: " << e.what() << "\n";
      return kContractFailure;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "gen-data") return cmd_gen_data(gen, out);
    if (cmd == "train") return cmd_train(tr, out);
    if (cmd == "eval") return cmd_eval(ev, out);
    if (cmd == "localize") return cmd_localize(loc, out);
    return cmd_gradcheck(gc, out);
  } catch (const IoError& e) {
    err << "apn: I/O error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const fs::filesystem_error& e) {
    err << "apn: I/O error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const ContractError& e) {
    err << "apn: " << e.what() << "\n";
    return kContractFailure;
  } catch (const std::exception& e) {
    err << "apn: " << e.what() << "\n";
    return kContractFailure;
  }
}

}  // namespace apn::cli
