#include "objret/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "objret/errors.hpp"

namespace objret::metrics {

namespace {

// Greedy matcher shared by AP and AR: candidates in rank order claim the
// unmatched gt with the highest IoU >= thresh; ties go to the earliest gt.
struct GreedyMatcher {
    const std::vector<BBox>& gts;
    std::vector<bool> taken;

    explicit GreedyMatcher(const std::vector<BBox>& g) : gts(g), taken(g.size(), false) {}

    bool try_match(const BBox& box, double thresh) {
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t i = 0; i < gts.size(); ++i) {
            if (taken[i]) continue;
            const double v = geometry::iou(box, gts[i]);
            if (v >= thresh && v > best_iou) {
                best = static_cast<int>(i);
                best_iou = v;
            }
        }
        if (best < 0) return false;
        taken[static_cast<std::size_t>(best)] = true;
        return true;
    }
};

double interpolated_ap(const std::vector<bool>& tp_flags, std::size_t n_gt) {
    if (n_gt == 0) return 0.0;
    std::vector<double> recall, precision;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < tp_flags.size(); ++i) {
        tp += tp_flags[i] ? 1 : 0;
        recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
        precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    }
    // Precision envelope: max precision at any recall >= r.
    std::vector<double> envelope(precision);
    for (int i = static_cast<int>(envelope.size()) - 2; i >= 0; --i)
        envelope[static_cast<std::size_t>(i)] =
            std::max(envelope[static_cast<std::size_t>(i)], envelope[static_cast<std::size_t>(i) + 1]);
    double sum = 0.0;
    for (int j = 0; j <= 100; ++j) {
        const double r = j / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end())
            sum += envelope[static_cast<std::size_t>(it - recall.begin())];
    }
    return sum / 101.0;
}

}  // namespace

ApResult average_precision(const std::vector<Detection>& detections,
                           const std::vector<GtObject>& gts, double iou_thresh) {
    std::map<std::string, std::map<std::string, std::vector<BBox>>> gt_by_class_image;
    std::map<std::string, std::size_t> gt_count;
    for (const GtObject& g : gts) {
        gt_by_class_image[g.cls][g.image_id].push_back(g.box);
        ++gt_count[g.cls];
    }
    std::map<std::string, std::vector<Detection>> dets_by_class;
    for (const Detection& d : detections) dets_by_class[d.cls].push_back(d);

    ApResult result;
    for (const auto& [cls, n_gt] : gt_count) {
        std::vector<Detection> dets;
        if (const auto it = dets_by_class.find(cls); it != dets_by_class.end()) dets = it->second;
        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection& a, const Detection& b) { return a.score > b.score; });
        std::map<std::string, GreedyMatcher> matchers;
        for (const auto& [image_id, boxes] : gt_by_class_image[cls])
            matchers.emplace(image_id, GreedyMatcher(boxes));
        std::vector<bool> tp_flags;
        tp_flags.reserve(dets.size());
        for (const Detection& d : dets) {
            const auto mit = matchers.find(d.image_id);
            const bool tp = mit != matchers.end() && mit->second.try_match(d.box, iou_thresh);
            tp_flags.push_back(tp);
            if (tp)
                ++result.counts.tp;
            else
                ++result.counts.fp;
        }
        result.per_class[cls] = interpolated_ap(tp_flags, n_gt);
    }
    // Detections whose class has no gt at all are plain false positives.
    for (const auto& [cls, dets] : dets_by_class)
        if (!gt_count.count(cls)) result.counts.fp += dets.size();
    const std::size_t total_gt =
        std::accumulate(gt_count.begin(), gt_count.end(), std::size_t{0},
                        [](std::size_t acc, const auto& kv) { return acc + kv.second; });
    result.counts.fn = total_gt - result.counts.tp;
    if (!result.per_class.empty()) {
        double sum = 0.0;
        for (const auto& [cls, ap] : result.per_class) sum += ap;
        result.mean = sum / static_cast<double>(result.per_class.size());
    }
    return result;
}

RecallResult average_recall(const std::map<std::string, std::vector<ScoredBox>>& proposals,
                            const std::map<std::string, std::vector<BBox>>& gts, int k) {
    std::size_t total_gt = 0;
    for (const auto& [image_id, boxes] : gts) total_gt += boxes.size();
    RecallResult result;
    if (total_gt == 0) return result;

    std::map<std::string, std::vector<ScoredBox>> top;
    for (const auto& [image_id, props] : proposals) {
        std::vector<ScoredBox> sorted = props;
        std::sort(sorted.begin(), sorted.end(), [](const ScoredBox& a, const ScoredBox& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
            return a.box.y1 < b.box.y1;
        });
        if (k >= 0 && sorted.size() > static_cast<std::size_t>(k))
            sorted.resize(static_cast<std::size_t>(k));
        top.emplace(image_id, std::move(sorted));
    }

    double avg_sum = 0.0;
    for (int t = 0; t < 10; ++t) {
        const double thresh = 0.5 + 0.05 * t;
        std::size_t matched = 0;
        for (const auto& [image_id, gt_boxes] : gts) {
            GreedyMatcher matcher(gt_boxes);
            const auto pit = top.find(image_id);
            if (pit == top.end()) continue;
            for (const ScoredBox& p : pit->second)
                if (matcher.try_match(p.box, thresh)) ++matched;
        }
        const double frac = static_cast<double>(matched) / static_cast<double>(total_gt);
        if (t == 0) result.ar50 = frac;
        avg_sum += frac;
    }
    result.ar_avg = avg_sum / 10.0;
    return result;
}

double top1_accuracy(const std::map<std::string, ScoredBox>& predictions,
                     const std::map<std::string, BBox>& gts, double iou_thresh) {
    if (gts.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& [task, gt] : gts) {
        const auto it = predictions.find(task);
        if (it == predictions.end()) continue;  // missing prediction: incorrect
        if (geometry::iou(it->second.box, gt) >= iou_thresh) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(gts.size());
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    if (report.ap) {
        nlohmann::ordered_json ap;
        nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
        for (const auto& [cls, v] : report.ap->per_class) per_class[cls] = v;
        ap["per_class"] = std::move(per_class);
        ap["mean"] = report.ap->mean;
        ap["tp"] = report.ap->counts.tp;
        ap["fp"] = report.ap->counts.fp;
        ap["fn"] = report.ap->counts.fn;
        j["ap"] = std::move(ap);
    }
    if (!report.ar.empty()) {
        nlohmann::ordered_json ar = nlohmann::ordered_json::object();
        for (const auto& [k, v] : report.ar) {
            nlohmann::ordered_json e;
            e["ar50"] = v.ar50;
            e["ar_avg"] = v.ar_avg;
            ar[std::to_string(k)] = std::move(e);
        }
        j["ar"] = std::move(ar);
    }
    if (report.top1) j["top1"] = *report.top1;
    return j;
}

}  // namespace objret::metrics
