#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "milfd/checkpoint.hpp"
#include "milfd/config_json.hpp"
#include "milfd/dataset_io.hpp"
#include "milfd/error.hpp"
#include "milfd/metrics.hpp"
#include "milfd/qnet.hpp"
#include "milfd/synthetic.hpp"
#include "milfd/trainer.hpp"

namespace milfd::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Reads a flat JSON object whose keys are the active subcommand's long flag
// names. CLI11 only applies a config value when the flag itself was absent,
// which gives "flags override the file".
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(std::string section) : section_(std::move(section)) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.parents = {section_};
      item.name = key;
      if (value.is_null()) continue;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(key, v));
      } else {
        item.inputs.push_back(scalar(key, value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const std::string& key, const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw ConfigError("config key '" + key + "' must be a string, number, boolean or list");
  }

  std::string section_;
};

void emit(std::ostream& out, std::ofstream* log, const json& line) {
  out << line.dump() << '\n';
  if (log) *log << line.dump() << '\n';
}

std::unique_ptr<std::ofstream> open_log(const std::string& path) {
  if (path.empty()) return nullptr;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  auto log = std::make_unique<std::ofstream>(p, std::ios::trunc);
  if (!*log) throw DataError("cannot open log file " + path);
  return log;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- gen-data ---------------------------------------------------------------

struct GenOptions {
  std::string out;
  SyntheticConfig cfg;
  std::optional<double> fake_tracklet_ratio;
};

void add_gen_options(CLI::App& cmd, GenOptions& o) {
  cmd.add_option("--out", o.out, "Output directory")->required();
  cmd.add_option("--videos", o.cfg.videos, "Total videos, split 5:1:1 into train/val/test")->capture_default_str();
  cmd.add_option("--dim", o.cfg.dim, "Feature dimension D")->capture_default_str();
  cmd.add_option("--frames", o.cfg.frames, "Frames per tracklet T")->capture_default_str();
  cmd.add_option("--k-min", o.cfg.k_min, "Fewest tracklets per video")->capture_default_str();
  cmd.add_option("--k-max", o.cfg.k_max, "Most tracklets per video")->capture_default_str();
  cmd.add_option("--fake-video-ratio", o.cfg.fake_video_ratio)->capture_default_str();
  cmd.add_option("--fake-tracklet-ratio", o.fake_tracklet_ratio,
                 "Fraction of fake tracklets in a fake video (default: exactly one)");
  cmd.add_option("--amplitude", o.cfg.amplitude, "Anomaly amplitude m")->capture_default_str();
  cmd.add_option("--omega", o.cfg.omega, "Anomaly angular frequency")->capture_default_str();
  cmd.add_option("--noise", o.cfg.noise, "Per-frame noise sigma")->capture_default_str();
  cmd.add_option("--prototype-scale", o.cfg.prototype_scale)->capture_default_str();
  cmd.add_option("--seed", o.cfg.seed)->capture_default_str();
}

int run_gen(GenOptions& o, std::ostream& out) {
  o.cfg.fake_tracklet_ratio = o.fake_tracklet_ratio;
  o.cfg.validate();
  const fs::path dir(o.out);
  const SyntheticDataset ds = generate_synthetic_dataset(o.cfg);
  json summary = {{"out", o.out}, {"config", to_json(o.cfg)}};
  for (const Dataset* split : {&ds.train, &ds.val, &ds.test}) {
    const fs::path manifest = write_dataset(dir, *split);
    summary[split->split] = {{"manifest", manifest.generic_string()},
                             {"videos", split->bags.size()},
                             {"tracklets", split->tracklet_count()}};
  }
  write_file(dir / "synthetic.json", to_json(o.cfg).dump(2) + "\n");
  out << summary.dump() << '\n';
  return 0;
}

// ---- train ------------------------------------------------------------------

struct ModelOptions {
  std::size_t attention_width = ModelConfig{}.attention_width;
  std::optional<std::size_t> layers;
  std::vector<std::size_t> rates;
  std::size_t kernel_size = 3;
  std::string norm = "frame";
  std::string variant = "full";
  std::string bag_variant = "attention";
  std::string sparsity_target = "scores";

  ModelConfig build(std::size_t dim) const {
    ModelConfig cfg;
    cfg.dim = dim;
    cfg.attention_width = attention_width;
    cfg.short_term.kernel_size = kernel_size;
    cfg.short_term.norm = parse_norm_mode(norm);
    if (!rates.empty()) {
      cfg.short_term.rates = rates;
      cfg.short_term.num_layers = layers.value_or(rates.size());
    } else if (layers) {
      cfg.short_term.num_layers = *layers;
      cfg.short_term.rates.clear();
      for (std::size_t l = 0; l < *layers; ++l) cfg.short_term.rates.push_back(std::size_t{1} << l);
    }
    cfg.instance_variant = parse_instance_variant(variant);
    cfg.bag_variant = parse_bag_variant(bag_variant);
    cfg.sparsity_target = parse_sparsity_target(sparsity_target);
    cfg.validate();
    return cfg;
  }
};

struct TrainOptions {
  std::string data;
  std::string out;
  std::string log;
  ModelOptions model;
  TrainConfig train;
  bool no_sparsity = false;
};

void add_train_options(CLI::App& cmd, TrainOptions& o) {
  cmd.add_option("--data", o.data, "Dataset directory holding train.json and val.json")->required();
  cmd.add_option("--out", o.out, "Checkpoint path for the best-validation model")->required();
  cmd.add_option("--log", o.log, "Also write the JSON-lines epoch log here");
  cmd.add_option("--lr", o.train.lr)->capture_default_str();
  cmd.add_option("--batch-size", o.train.batch_size, "Bags per Adam step")->capture_default_str();
  cmd.add_option("--beta", o.train.beta, "Sparsity weight")->capture_default_str();
  cmd.add_flag("--no-sparsity", o.no_sparsity, "Train with plain BCE");
  cmd.add_option("--epochs", o.train.epochs)->capture_default_str();
  cmd.add_option("--seed", o.train.seed)->capture_default_str();
  cmd.add_option("--threshold", o.train.threshold, "Localization threshold")->capture_default_str();
  cmd.add_option("--jitter", o.train.jitter, "Gaussian feature jitter std (0 = off)")->capture_default_str();
  cmd.add_option("--threads", o.train.eval_threads, "Threads for validation scoring")->capture_default_str();
  cmd.add_option("--attention-width", o.model.attention_width, "Bag attention width C")->capture_default_str();
  cmd.add_option("--layers", o.model.layers, "Short-term layers L (rates default to 1, 2, 4, ...)");
  cmd.add_option("--rates", o.model.rates, "Dilation rates, one per layer");
  cmd.add_option("--kernel-size", o.model.kernel_size)->capture_default_str();
  cmd.add_option("--norm", o.model.norm, "frame | channel")->capture_default_str();
  cmd.add_option("--variant", o.model.variant,
                 "full | max_pool_only | avg_pool_only | no_short_term | no_long_term")
      ->capture_default_str();
  cmd.add_option("--bag-variant", o.model.bag_variant, "attention | max_pooling | avg_pooling")
      ->capture_default_str();
  cmd.add_option("--sparsity-target", o.model.sparsity_target, "scores | softmax_attention")
      ->capture_default_str();
}

Dataset load_split(const std::string& dir, const std::string& split) {
  const fs::path manifest = fs::path(dir) / (split + ".json");
  if (!fs::exists(manifest)) throw DataError("missing manifest " + manifest.string());
  return load_dataset(manifest);
}

std::size_t dataset_dim(const Dataset& ds) {
  for (const auto& b : ds.bags)
    for (const auto& t : b.tracklets) return t.dim();
  throw DataError("split '" + ds.split + "' holds no tracklets");
}

int run_train(TrainOptions& o, std::ostream& out) {
  if (o.no_sparsity) o.train.sparsity = false;
  o.train.validate();
  const Dataset train = load_split(o.data, "train");
  const Dataset val = load_split(o.data, "val");
  const ModelConfig model_cfg = o.model.build(dataset_dim(train));
  auto log = open_log(o.log);

  const TrainResult result = train_model(model_cfg, o.train, train, val, [&](const EpochLog& e, const Model&) {
    emit(out, log.get(), to_json(e));
  });
  save_model(o.out, result.best_model, to_json(o.train).dump());
  const std::string bytes = read_file(o.out);
  emit(out, log.get(),
       {{"checkpoint", o.out},
        {"best_epoch", result.best_epoch},
        {"best_val_auc", result.best_val_auc},
        {"steps", result.steps},
        {"checksum", hex64(fnv1a64(bytes))}});
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  std::string manifest;
  std::string data;
  std::string split = "test";
  std::string out;
  double threshold = 0.75;
  std::string select_on;
  std::size_t threads = 1;
};

void add_eval_options(CLI::App& cmd, EvalOptions& o) {
  cmd.add_option("--checkpoint", o.checkpoint)->required();
  cmd.add_option("--manifest", o.manifest, "Split manifest to score");
  cmd.add_option("--data", o.data, "Dataset directory (used with --split when no --manifest)");
  cmd.add_option("--split", o.split)->capture_default_str();
  cmd.add_option("--threshold", o.threshold, "Localization threshold")->capture_default_str();
  cmd.add_option("--select-threshold", o.select_on,
                 "Split (under --data) to grid-search the localization threshold on, by tracklet F1 "
                 "over 0.50, 0.55, ..., 0.95; overrides --threshold");
  cmd.add_option("--threads", o.threads)->capture_default_str();
  cmd.add_option("--out", o.out, "Write the JSON report here instead of stdout");
}

int run_eval(const EvalOptions& o, std::ostream& out) {
  if (!(o.threshold > 0.0 && o.threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (o.manifest.empty() && o.data.empty()) throw UsageError("eval needs --manifest or --data");
  const fs::path manifest = o.manifest.empty() ? fs::path(o.data) / (o.split + ".json") : fs::path(o.manifest);
  const Model model = load_model(o.checkpoint);
  const Dataset ds = load_dataset(manifest);
  if (dataset_dim(ds) != model.config().dim) {
    throw DataError("checkpoint expects D = " + std::to_string(model.config().dim) + " but " +
                    manifest.string() + " holds D = " + std::to_string(dataset_dim(ds)));
  }
  double threshold = o.threshold;
  if (!o.select_on.empty()) {
    if (o.data.empty()) throw UsageError("--select-threshold needs --data");
    const Dataset tune = load_dataset(fs::path(o.data) / (o.select_on + ".json"));
    if (dataset_dim(tune) != model.config().dim) throw DataError("split '" + o.select_on + "' has the wrong D");
    const auto grid = default_threshold_grid();
    threshold = select_threshold(evaluate(model, tune, o.threshold, o.threads).videos, grid);
  }
  const Evaluation ev = evaluate(model, ds, threshold, o.threads);
  const MetricsReport& r = ev.report;
  json videos = json::array();
  for (const auto& v : ev.videos) {
    json localized = json::array();
    for (std::size_t k : v.localized) localized.push_back(v.tracklet_ids[k]);
    json scores = json::object();
    for (std::size_t k = 0; k < v.tracklet_ids.size(); ++k) scores[v.tracklet_ids[k]] = v.output.scores[k];
    videos.push_back({{"id", v.id},
                      {"label", v.label},
                      {"probability", v.output.probability},
                      {"predicted", v.output.probability > 0.5 ? 1 : 0},
                      {"tracklet_scores", scores},
                      {"localized", localized}});
  }
  json report = {{"split", ds.split},
                        {"video_auc", r.video_auc},
                        {"video_acc", r.video_acc},
                        {"localization_map", r.localization_map},
                        {"threshold", r.threshold},
                        {"videos", r.videos},
                        {"fake_videos", r.fake_videos},
                        {"tracklets", r.tracklets},
                        {"fake_tracklets", r.fake_tracklets},
                        {"per_video", videos}};
  if (!o.select_on.empty()) report["threshold_selected_on"] = o.select_on;
  if (o.out.empty()) {
    out << report.dump(2) << '\n';
  } else {
    write_file(o.out, report.dump(2) + "\n");
    out << json{{"report", o.out}, {"video_auc", r.video_auc}, {"localization_map", r.localization_map}}.dump()
        << '\n';
  }
  return 0;
}

// ---- predict ----------------------------------------------------------------

struct PredictOptions {
  std::string checkpoint;
  std::vector<std::string> inputs;
};

void add_predict_options(CLI::App& cmd, PredictOptions& o) {
  cmd.add_option("--checkpoint", o.checkpoint)->required();
  cmd.add_option("--input", o.inputs, "Tracklet files (.trkf) or directories of them, one video")
      ->required();
}

int run_predict(const PredictOptions& o, std::ostream& out) {
  const Model model = load_model(o.checkpoint);
  // Tracklet id = file stem; ordered by id so the output does not depend on
  // argument or directory order.
  std::map<std::string, fs::path> files;
  for (const auto& in : o.inputs) {
    const fs::path p(in);
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.path().extension() == ".trkf") files.emplace(entry.path().stem().string(), entry.path());
      }
    } else {
      if (!files.emplace(p.stem().string(), p).second) {
        throw InputError("tracklet id '" + p.stem().string() + "' given twice");
      }
    }
  }
  if (files.empty()) throw DataError("no .trkf tracklet files found in the given inputs");
  std::vector<std::string> ids;
  std::vector<Matrix> features;
  for (const auto& [id, path] : files) {
    ids.push_back(id);
    features.push_back(read_feature_file(path));
  }
  const ModelOutput result = model.predict(features);
  char buf[64];
  for (std::size_t k = 0; k < ids.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.6f", result.scores[k]);
    out << ids[k] << ' ' << buf << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f", result.probability);
  out << "video " << buf << '\n';
  return 0;
}

// ---- qnet-train ------------------------------------------------------------------

struct QNetOptions {
  std::string out;
  std::string log;
  QNetConfig net;
  QualityCorpusConfig corpus;
  QNetTrainConfig train;
  std::uint64_t init_seed = 5;
};

void add_qnet_options(CLI::App& cmd, QNetOptions& o) {
  cmd.add_option("--out", o.out, "Q-Net checkpoint path")->required();
  cmd.add_option("--log", o.log, "Also write the JSON-lines epoch log here");
  cmd.add_option("--alpha", o.net.alpha, "Adversarial weight; 0 disables reversal")->capture_default_str();
  cmd.add_option("--hidden", o.net.hidden, "Trunk width")->capture_default_str();
  cmd.add_option("--feature-dim", o.corpus.feature_dim)->capture_default_str();
  cmd.add_option("--domains", o.corpus.domains)->capture_default_str();
  cmd.add_option("--samples", o.corpus.samples)->capture_default_str();
  cmd.add_option("--max-iteration", o.corpus.max_iteration)->capture_default_str();
  cmd.add_option("--corpus-seed", o.corpus.seed)->capture_default_str();
  cmd.add_option("--epochs", o.train.epochs)->capture_default_str();
  cmd.add_option("--lr", o.train.lr)->capture_default_str();
  cmd.add_option("--batch-size", o.train.batch_size)->capture_default_str();
  cmd.add_option("--seed", o.train.seed, "Epoch shuffling seed")->capture_default_str();
  cmd.add_option("--init-seed", o.init_seed, "Parameter initialization seed")->capture_default_str();
}

int run_qnet(QNetOptions& o, std::ostream& out) {
  o.net.feature_dim = o.corpus.feature_dim;
  o.net.domains = o.corpus.domains;
  const auto corpus = generate_quality_corpus(o.corpus);
  QNet net = QNet::initialize(o.net, o.init_seed);
  auto log = open_log(o.log);
  const auto history = train_qnet(net, corpus, o.train, [&](const QNetEpochStats& s) {
    emit(out, log.get(),
         {{"epoch", s.epoch},
          {"objective", s.train_objective},
          {"quality_mae", s.quality_mae},
          {"domain_accuracy", s.domain_accuracy}});
  });
  save_qnet(o.out, net);
  emit(out, log.get(),
       {{"checkpoint", o.out},
        {"alpha", o.net.alpha},
        {"quality_mae", history.back().quality_mae},
        {"domain_accuracy", history.back().domain_accuracy},
        {"checksum", hex64(fnv1a64(read_file(o.out)))}});
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly supervised multi-instance face forgery detection on tracklet features", "milfd"};
  app.require_subcommand(1);
  app.fallthrough();

  // The config file's keys belong to whichever subcommand is being run.
  std::string section;
  for (const auto& a : args) {
    if (!a.starts_with("-")) {
      section = a;
      break;
    }
  }
  app.set_config("--config", "", "JSON file of flag values; flags given on the command line win");
  app.config_formatter(std::make_shared<JsonConfig>(section));
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenOptions gen;
  TrainOptions train;
  EvalOptions eval;
  PredictOptions predict;
  QNetOptions qnet;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic train/val/test dataset");
  auto* train_cmd = app.add_subcommand("train", "Train the detector and keep the best-validation checkpoint");
  auto* eval_cmd = app.add_subcommand("eval", "Score a split and write a JSON metrics report");
  auto* predict_cmd = app.add_subcommand("predict", "Score one video's tracklet files");
  auto* qnet_cmd = app.add_subcommand("qnet-train", "Train the domain-adversarial quality network");
  add_gen_options(*gen_cmd, gen);
  add_train_options(*train_cmd, train);
  add_eval_options(*eval_cmd, eval);
  add_predict_options(*predict_cmd, predict);
  add_qnet_options(*qnet_cmd, qnet);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.category() << ": " << e.what() << '\n';
    return 1;
  }

  try {
    if (*gen_cmd) return run_gen(gen, out);
    if (*train_cmd) return run_train(train, out);
    if (*eval_cmd) return run_eval(eval, out);
    if (*predict_cmd) return run_predict(predict, out);
    if (*qnet_cmd) return run_qnet(qnet, out);
  } catch (const Error& e) {
    err << "error: " << e.category() << ": " << e.what() << '\n';
    return e.category() == "usage" ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: data: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace milfd::cli
