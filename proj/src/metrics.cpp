#include "milfd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "milfd/error.hpp"

namespace milfd {
namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a) + " scores for " +
                         std::to_string(b) + " labels");
  }
}

void require_binary(std::span<const int> labels) {
  for (int l : labels)
    if (l != 0 && l != 1) throw InputError("labels must be 0 or 1, got " + std::to_string(l));
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  require_same_length(scores.size(), labels.size(), "auc");
  require_binary(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks over tie groups, then the rank-sum form of Mann-Whitney U.
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += mid;
        pos += 1.0;
      } else {
        neg += 1.0;
      }
    }
    i = j;
  }
  if (pos == 0.0 || neg == 0.0) throw MetricError("auc needs both positive and negative labels");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  require_same_length(scores.size(), labels.size(), "average_precision");
  require_binary(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0.0, total = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 1) {
      hits += 1.0;
      total += hits / static_cast<double>(k + 1);
    }
  }
  if (hits == 0.0) throw MetricError("average precision needs at least one positive");
  return total / hits;
}

double accuracy(std::span<const double> probs, std::span<const int> labels, double threshold) {
  require_same_length(probs.size(), labels.size(), "accuracy");
  require_binary(labels);
  if (probs.empty()) throw MetricError("accuracy of an empty split");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if ((probs[i] > threshold ? 1 : 0) == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(probs.size());
}

Evaluation evaluate(const Model& model, const Dataset& dataset, double threshold,
                    std::size_t threads) {
  if (dataset.bags.empty()) throw MetricError("cannot evaluate an empty split");
  Evaluation ev;
  ev.videos.resize(dataset.bags.size());

  auto run = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < dataset.bags.size(); i += step) {
      const Bag& bag = dataset.bags[i];
      VideoPrediction& vp = ev.videos[i];
      vp.output = model.predict(bag.features());
      vp.id = bag.id;
      vp.label = bag.label;
      vp.localized = localize(vp.output, threshold);
      for (const auto& t : bag.tracklets) {
        vp.tracklet_ids.push_back(t.id);
        vp.tracklet_labels.push_back(t.label);
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, dataset.bags.size()));
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(run, w, threads);
  }

  MetricsReport& r = ev.report;
  r.threshold = threshold;
  std::vector<double> probs;
  std::vector<int> video_labels;
  struct Ranked {
    const std::string* id;
    double score;
    int label;
  };
  std::vector<Ranked> pooled;
  bool tracklets_labeled = true;
  for (const auto& vp : ev.videos) {
    probs.push_back(vp.output.probability);
    video_labels.push_back(vp.label);
    for (std::size_t k = 0; k < vp.tracklet_ids.size(); ++k) {
      if (vp.tracklet_labels[k] < 0) tracklets_labeled = false;
      pooled.push_back({&vp.tracklet_ids[k], vp.output.scores[k], vp.tracklet_labels[k]});
    }
  }
  r.videos = probs.size();
  r.fake_videos = static_cast<std::size_t>(std::count(video_labels.begin(), video_labels.end(), 1));
  r.tracklets = pooled.size();
  r.video_auc = auc(probs, video_labels);
  r.video_acc = accuracy(probs, video_labels);

  if (!tracklets_labeled) throw DataError("localization mAP needs a label on every tracklet");
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const Ranked& a, const Ranked& b) { return *a.id < *b.id; });
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : pooled) {
    scores.push_back(p.score);
    labels.push_back(p.label);
  }
  r.fake_tracklets = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.localization_map = average_precision(scores, labels);
  return ev;
}

double select_threshold(const std::vector<VideoPrediction>& videos, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  double best = grid.front(), best_f1 = -1.0;
  for (double th : grid) {
    double tp = 0, fp = 0, fn = 0;
    for (const auto& v : videos) {
      for (std::size_t k = 0; k < v.output.scores.size(); ++k) {
        const bool pred = v.output.scores[k] > th;
        const bool truth = v.tracklet_labels[k] == 1;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
      }
    }
    const double f1 = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = th;
    }
  }
  return best;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back((50 + 5 * i) / 100.0);
  return grid;
}

}  // namespace milfd
