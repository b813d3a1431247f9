#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "objret/geometry.hpp"

namespace objret::metrics {

using geometry::BBox;
using geometry::ScoredBox;

struct Detection {
    std::string image_id;
    std::string cls;
    BBox box;
    double score = 0.0;
};

struct GtObject {
    std::string image_id;
    std::string cls;
    BBox box;
};

struct MatchCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

struct ApResult {
    std::map<std::string, double> per_class;
    double mean = 0.0;
    MatchCounts counts;
};

// 101-point interpolated AP per class (precision envelope at recalls
// 0.00..1.00), greedy one-to-one matching at IoU >= iou_thresh, detections by
// descending score with input-order tie-break. Mean over classes with >= 1 gt.
ApResult average_precision(const std::vector<Detection>& detections,
                           const std::vector<GtObject>& gts, double iou_thresh);

struct RecallResult {
    double ar50 = 0.0;
    double ar_avg = 0.0;  // mean over IoU 0.50:0.05:0.95
};

// Class-agnostic proposal recall with a top-k per-image budget.
RecallResult average_recall(const std::map<std::string, std::vector<ScoredBox>>& proposals,
                            const std::map<std::string, std::vector<BBox>>& gts, int k);

// Fraction of tasks whose prediction reaches iou_thresh against the single
// gt box; tasks without a prediction count as incorrect.
double top1_accuracy(const std::map<std::string, ScoredBox>& predictions,
                     const std::map<std::string, BBox>& gts, double iou_thresh = 0.5);

struct EvalReport {
    std::optional<ApResult> ap;
    std::map<int, RecallResult> ar;  // keyed by proposal budget k
    std::optional<double> top1;
};

nlohmann::ordered_json report_to_json(const EvalReport& report);

}  // namespace objret::metrics
