#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "milfd/checkpoint.hpp"
#include "milfd/config_json.hpp"
#include "milfd/dataset_io.hpp"
#include "milfd/error.hpp"
#include "milfd/metrics.hpp"
#include "milfd/ops.hpp"
#include "milfd/trainer.hpp"

using namespace milfd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("milfd-cli-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

ModelConfig tiny_model(std::size_t dim = 6) {
  ModelConfig cfg;
  cfg.dim = dim;
  cfg.attention_width = 5;
  return cfg;
}

SyntheticConfig tiny_data() {
  SyntheticConfig cfg;
  cfg.videos = 28;
  cfg.dim = 6;
  cfg.frames = 12;
  cfg.k_max = 3;
  return cfg;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("checkpoint layout and byte-identical round trips") {
  const Model model = Model::initialize(tiny_model(), 3);
  const std::string cfg = model_checkpoint_config(model.config());
  const std::string bytes = encode_checkpoint(cfg, model.params());

  CHECK(bytes.substr(0, 4) == "MILC");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(static_cast<unsigned char>(bytes[8]) == (cfg.size() & 0xff));
  CHECK(bytes.substr(12, cfg.size()) == cfg);

  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.config_json == cfg);
  CHECK(encode_checkpoint(back.config_json, back.params) == bytes);

  TempDir dir("ckpt");
  save_model(dir.path / "a.ckpt", model, R"({"lr":0.0001})");
  const Model loaded = load_model(dir.path / "a.ckpt");
  save_model(dir.path / "b.ckpt", loaded, R"({"lr":0.0001})");
  CHECK(read_file(dir.path / "a.ckpt") == read_file(dir.path / "b.ckpt"));

  Rng rng(1);
  std::vector<Matrix> bag;
  for (int k = 0; k < 3; ++k) {
    Matrix m(6, 9);
    for (auto& v : m.data()) v = rng.normal();
    bag.push_back(m);
  }
  CHECK(loaded.predict(bag).probability == model.predict(bag).probability);
}

TEST_CASE("checkpoint corruption is detected") {
  const Model model = Model::initialize(tiny_model(), 3);
  const std::string bytes = encode_checkpoint(model_checkpoint_config(model.config()), model.params());

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(flipped), DataError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), DataError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), DataError);
  CHECK_THROWS_AS(decode_checkpoint(""), DataError);

  // A structurally valid file whose parameters do not fit the config.
  ParameterSet wrong;
  wrong.add("head.bias", Matrix(1, 1));
  CHECK_THROWS_AS(model_from_checkpoint(decode_checkpoint(
                      encode_checkpoint(model_checkpoint_config(model.config()), wrong))),
                  DataError);
  const QNet net = QNet::initialize(QNetConfig{.feature_dim = 4, .hidden = 3}, 1);
  TempDir dir("qckpt");
  save_qnet(dir.path / "q.ckpt", net);
  CHECK_THROWS_AS(load_model(dir.path / "q.ckpt"), DataError);
  const QNet qback = load_qnet(dir.path / "q.ckpt");
  CHECK(qback.config().hidden == 3);
  CHECK(qback.params().at("trunk.l1.weight").value == net.params().at("trunk.l1.weight").value);
}

TEST_CASE("config json round trips and rejects unknown keys") {
  ModelConfig cfg;
  cfg.dim = 12;
  cfg.short_term.num_layers = 2;
  cfg.short_term.rates = {1, 3};
  cfg.instance_variant = InstanceVariant::no_long_term;
  cfg.bag_variant = BagVariant::avg_pooling;
  ModelConfig back;
  apply_json(to_json(cfg), back);
  CHECK(to_json(back) == to_json(cfg));
  CHECK_THROWS_AS(apply_json(nlohmann::json{{"dimm", 3}}, back), ConfigError);
  CHECK_THROWS_AS(apply_json(nlohmann::json{{"dim", "three"}}, back), ConfigError);
  CHECK_THROWS_AS(apply_json(nlohmann::json{{"bag_variant", "median"}}, back), ConfigError);

  TrainConfig tc;
  tc.lr = 3e-4;
  tc.sparsity = false;
  TrainConfig tback;
  apply_json(to_json(tc), tback);
  CHECK(to_json(tback) == to_json(tc));
  CHECK_THROWS_AS(apply_json(nlohmann::json{{"learning_rate", 1}}, tback), ConfigError);

  TrainConfig bad;
  bad.threshold = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("batch gradient accumulation equals the summed-loss gradient") {
  const Dataset ds = generate_split(tiny_data(), "train", 2);
  Model a = Model::initialize(tiny_model(), 9);
  Model b = a;
  const double beta = 0.001;

  a.params().zero_grad();
  std::vector<const Bag*> bags{&ds.bags[0], &ds.bags[1]};
  const double total = accumulate_gradients(a, bags, beta);

  b.params().zero_grad();
  double direct = 0.0;
  {
    Tape tape;
    ParamBinding bind(tape, b.params());
    Var sum_loss;
    for (std::size_t i = 0; i < 2; ++i) {
      const auto features = ds.bags[i].features();
      Var l = compute_loss(b.forward(bind, features), ds.bags[i].label, beta, SparsityTarget::scores);
      sum_loss = i == 0 ? l : add(sum_loss, l);
    }
    direct = sum_loss.scalar();
    tape.backward(sum_loss);
  }
  CHECK(total == doctest::Approx(direct).epsilon(1e-12));
  for (auto pa = a.params().begin(), pb = b.params().begin(); pa != a.params().end(); ++pa, ++pb) {
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < pa->grad.size(); ++i) {
      diff = std::max(diff, std::abs(pa->grad[i] - pb->grad[i]));
      norm = std::max(norm, std::abs(pb->grad[i]));
    }
    CHECK_MESSAGE(diff <= 1e-12 * std::max(norm, 1.0), pa->name);
  }
}

TEST_CASE("training loop bookkeeping") {
  SyntheticConfig data = tiny_data();
  const Dataset train = generate_split(data, "train", 8);
  const Dataset val = generate_split(data, "val", 4);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 1;
  const TrainResult one = train_model(tiny_model(), tc, train, val);
  CHECK(one.steps == 2);
  tc.batch_size = 3;  // 3 + 3 + 2
  CHECK(train_model(tiny_model(), tc, train, val).steps == 3);

  tc.epochs = 3;
  std::size_t calls = 0;
  const TrainResult a = train_model(tiny_model(), tc, train, val, [&](const EpochLog& log, const Model&) {
    ++calls;
    CHECK(log.epoch == calls);
    CHECK(std::isfinite(log.mean_loss));
  });
  const TrainResult b = train_model(tiny_model(), tc, train, val);
  CHECK(calls == 3);
  CHECK(encode_checkpoint("{}", a.best_model.params()) == encode_checkpoint("{}", b.best_model.params()));
  CHECK(a.history.size() == 3);

  // Updates far below double resolution leave every epoch's val AUC equal;
  // the earliest epoch must win the tie.
  TrainConfig frozen = tc;
  frozen.lr = 1e-300;
  const TrainResult tie = train_model(tiny_model(), frozen, train, val);
  CHECK(tie.best_epoch == 1);
  CHECK(tie.history[1].val_auc == tie.history[0].val_auc);
  CHECK_FALSE(tie.history[1].best);

  Dataset broken = train;
  for (auto& v : broken.bags[0].tracklets[0].features.data()) v = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_model(tiny_model(), tc, broken, val), DivergenceError);
  CHECK_THROWS_AS(train_model(tiny_model(), tc, Dataset{}, val), DataError);
}

TEST_CASE("cli gen-data is deterministic and respects the K range") {
  TempDir dir("gen");
  const std::vector<std::string> base{"gen-data", "--videos", "21", "--dim", "4", "--frames", "8",
                                      "--k-min", "2", "--k-max", "3", "--seed", "7"};
  auto a = base;
  a.insert(a.end(), {"--out", (dir.path / "a").string()});
  auto b = base;
  b.insert(b.end(), {"--out", (dir.path / "b").string()});
  REQUIRE(run_cli(a).code == 0);
  REQUIRE(run_cli(b).code == 0);
  const auto ta = tree_bytes(dir.path / "a");
  CHECK(ta == tree_bytes(dir.path / "b"));
  CHECK(ta.contains("train.json"));

  const Dataset train = load_dataset(dir.path / "a" / "train.json");
  CHECK(train.bags.size() == 15);
  for (const auto& bag : train.bags) {
    CHECK(bag.tracklets.size() >= 2);
    CHECK(bag.tracklets.size() <= 3);
  }
  CHECK(load_dataset(dir.path / "a" / "val.json").bags.size() == 3);
  CHECK(load_dataset(dir.path / "a" / "test.json").bags.size() == 3);
}

TEST_CASE("cli train, eval and predict") {
  TempDir dir("flow");
  const std::string data = (dir.path / "data").string();
  REQUIRE(run_cli({"gen-data", "--out", data, "--videos", "28", "--dim", "6", "--frames", "12", "--k-max", "3"}).code == 0);

  write_file(dir.path / "train.json", R"({"epochs": 5, "batch-size": 4, "attention-width": 5})");
  const std::string ckpt = (dir.path / "m.ckpt").string();
  const auto trained = run_cli({"train", "--data", data, "--out", ckpt, "--config", (dir.path / "train.json").string(),
                            "--epochs", "2", "--log", (dir.path / "log.jsonl").string()});
  REQUIRE_MESSAGE(trained.code == 0, trained.err);
  // Flag beats the config file: two epoch lines plus the summary.
  CHECK(std::count(trained.out.begin(), trained.out.end(), '\n') == 3);
  CHECK(read_file(dir.path / "log.jsonl") == trained.out);
  const auto summary = nlohmann::json::parse(trained.out.substr(trained.out.rfind('{')));
  CHECK(summary.at("steps") == 10);  // 20 train bags, batch 4, 2 epochs

  const auto again = run_cli({"train", "--data", data, "--out", (dir.path / "m2.ckpt").string(), "--config",
                          (dir.path / "train.json").string(), "--epochs", "2"});
  CHECK(read_file(ckpt) == read_file(dir.path / "m2.ckpt"));
  CHECK(nlohmann::json::parse(again.out.substr(again.out.rfind('{'))).at("checksum") == summary.at("checksum"));

  const auto eval = run_cli({"eval", "--checkpoint", ckpt, "--data", data, "--split", "test", "--threshold", "0.6"});
  REQUIRE_MESSAGE(eval.code == 0, eval.err);
  const auto report = nlohmann::json::parse(eval.out);
  for (const char* key : {"video_auc", "video_acc", "localization_map", "threshold", "videos", "fake_videos",
                          "tracklets", "fake_tracklets", "per_video"}) {
    CHECK_MESSAGE(report.contains(key), key);
  }
  CHECK(report.at("threshold") == 0.6);
  CHECK(report.at("videos") == 4);

  const auto tuned = run_cli({"eval", "--checkpoint", ckpt, "--data", data, "--select-threshold", "val"});
  REQUIRE_MESSAGE(tuned.code == 0, tuned.err);
  const auto tuned_report = nlohmann::json::parse(tuned.out);
  CHECK(tuned_report.at("threshold_selected_on") == "val");
  const double picked = tuned_report.at("threshold");
  const auto grid = default_threshold_grid();
  CHECK(std::find(grid.begin(), grid.end(), picked) != grid.end());

  // One video's tracklets through predict, in two argument orders.
  const DatasetManifest test = manifest_from_json(read_file(fs::path(data) / "test.json"));
  const VideoRecord* multi = nullptr;
  for (const auto& v : test.videos)
    if (v.tracklets.size() >= 2) multi = &v;
  REQUIRE(multi != nullptr);
  std::vector<std::string> forward{"predict", "--checkpoint", ckpt, "--input"};
  for (const auto& t : multi->tracklets) forward.push_back((fs::path(data) / t.path).string());
  std::vector<std::string> backward(forward.begin(), forward.begin() + 4);
  backward.insert(backward.end(), forward.rbegin(), forward.rend() - 4);
  const auto p1 = run_cli(forward);
  const auto p2 = run_cli(backward);
  REQUIRE_MESSAGE(p1.code == 0, p1.err);
  CHECK(p1.out == p2.out);
  std::istringstream lines(p1.out);
  std::string id;
  double score = 0.0;
  std::size_t count = 0;
  while (lines >> id >> score) {
    ++count;
    CHECK(score >= 0.0);
    CHECK(score <= 1.0);
  }
  CHECK(count == multi->tracklets.size() + 1);
  CHECK(id == "video");

  const auto single = run_cli({"predict", "--checkpoint", ckpt, "--input",
                           (fs::path(data) / multi->tracklets[0].path).string()});
  CHECK(std::count(single.out.begin(), single.out.end(), '\n') == 2);
}

TEST_CASE("cli failures print a category and exit nonzero") {
  TempDir dir("errors");
  const auto missing = run_cli({"eval", "--checkpoint", (dir.path / "none.ckpt").string(), "--data", dir.path.string()});
  CHECK(missing.code != 0);
  CHECK(missing.err.starts_with("error: data: "));

  const auto usage = run_cli({"train"});
  CHECK(usage.code != 0);
  CHECK(usage.err.starts_with("error: usage: "));
  CHECK(run_cli({}).code != 0);
  const auto no_source = run_cli({"eval", "--checkpoint", "x.ckpt"});
  CHECK(no_source.code == 2);
  CHECK(no_source.err.starts_with("error: usage: "));
  CHECK(run_cli({"frobnicate"}).code != 0);

  write_file(dir.path / "bad.json", R"({"lr": -1})");
  const std::string data = (dir.path / "data").string();
  REQUIRE(run_cli({"gen-data", "--out", data, "--videos", "14", "--dim", "3", "--frames", "4"}).code == 0);
  const auto bad_lr = run_cli({"train", "--data", data, "--out", (dir.path / "x.ckpt").string(), "--config",
                           (dir.path / "bad.json").string()});
  CHECK(bad_lr.err.starts_with("error: config: "));

  write_file(dir.path / "extra.json", R"({"learning-rate": 1})");
  const auto extra = run_cli({"train", "--data", data, "--out", (dir.path / "x.ckpt").string(), "--config",
                          (dir.path / "extra.json").string()});
  CHECK(extra.code != 0);
  CHECK(extra.err.find("learning-rate") != std::string::npos);

  // Checkpoint trained on D = 3 against data with D = 5.
  REQUIRE(run_cli({"train", "--data", data, "--out", (dir.path / "d3.ckpt").string(), "--epochs", "1",
               "--attention-width", "4"}).code == 0);
  const std::string other = (dir.path / "other").string();
  REQUIRE(run_cli({"gen-data", "--out", other, "--videos", "14", "--dim", "5", "--frames", "4"}).code == 0);
  const auto mismatch = run_cli({"eval", "--checkpoint", (dir.path / "d3.ckpt").string(), "--data", other});
  CHECK(mismatch.err.starts_with("error: data: "));

  const auto unreadable = run_cli({"predict", "--checkpoint", (dir.path / "d3.ckpt").string(), "--input",
                               (dir.path / "ghost.trkf").string()});
  CHECK(unreadable.err.starts_with("error: data: "));
  CHECK(unreadable.err.find("ghost.trkf") != std::string::npos);

  CHECK(run_cli({"qnet-train", "--out", (dir.path / "q.ckpt").string(), "--alpha", "-1"}).err.starts_with(
      "error: config: "));
  CHECK(run_cli({"--help"}).code == 0);
}
