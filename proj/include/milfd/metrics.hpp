#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "milfd/bag_model.hpp"
#include "milfd/synthetic.hpp"

namespace milfd {

// Mann-Whitney AUC: (ordered pairs + 0.5 * tied pairs) / (P * N).
// Throws MetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

// Single-class average precision: sort by score descending with ties kept in
// input order, then sum precision@k at each positive and divide by P.
// Throws MetricError when there is no positive.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// Fraction of items where (prob > threshold) matches label == 1.
double accuracy(std::span<const double> probs, std::span<const int> labels, double threshold = 0.5);

struct MetricsReport {
  double video_auc = 0.0;
  double video_acc = 0.0;
  double localization_map = 0.0;
  double threshold = 0.75;
  std::size_t videos = 0;
  std::size_t fake_videos = 0;
  std::size_t tracklets = 0;
  std::size_t fake_tracklets = 0;
};

struct VideoPrediction {
  std::string id;
  int label = 0;
  ModelOutput output;
  std::vector<std::string> tracklet_ids;
  std::vector<int> tracklet_labels;
  std::vector<std::size_t> localized;  // indices with score > threshold
};

struct Evaluation {
  MetricsReport report;
  std::vector<VideoPrediction> videos;
};

// Runs the model over every bag. The model only sees features; tracklet
// labels are read afterwards for the localization mAP. Tracklets are pooled
// across the split and ranked with ties in tracklet-id order.
Evaluation evaluate(const Model& model, const Dataset& dataset, double threshold = 0.75,
                    std::size_t threads = 1);

// Picks the localization threshold from grid maximizing tracklet-level F1
// (earliest grid value on ties).
double select_threshold(const std::vector<VideoPrediction>& videos, std::span<const double> grid);

// 0.50, 0.55, ..., 0.95
std::vector<double> default_threshold_grid();

}  // namespace milfd
