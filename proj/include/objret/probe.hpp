#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "objret/geometry.hpp"
#include "objret/synthworld.hpp"

namespace objret::probe {

using geometry::BBox;
using geometry::Extent;
using geometry::FeatureGrid;
using geometry::ScoredBox;

// The single trained parameter block: one objectness embedding plus a logit
// scale and bias. The region embeddings it scores are inputs, never
// parameters.
struct ObjectnessProbe {
    std::vector<double> weight;
    double scale = 1.0;
    double bias = 0.0;
};

struct ProbeTrainConfig {
    double lr = 0.5;
    double momentum = 0.9;
    int epochs = 150;
    double gamma = 2.0;  // focal exponent
    std::uint64_t seed = 0;
    double positive_iou = 0.5;
};

// Frozen region embeddings with IoU soft labels.
struct ProbeDataset {
    int dim = 0;
    std::vector<std::vector<float>> embeddings;  // unit-norm rows
    std::vector<double> labels;                  // in [0, 1]
};

struct ProbeTrainResult {
    ObjectnessProbe probe;
    std::vector<double> loss_history;  // mean loss per epoch, index 0 = initial
};

// sigmoid(scale * dot(weight/||weight||, embedding) + bias).
double probe_score(const ObjectnessProbe& probe, std::span<const float> embedding);

// |y - p|^gamma * (-y ln p - (1-y) ln(1-p)); p must lie strictly in (0, 1).
double soft_focal_loss(double p, double y, double gamma);

// label_i = max IoU of proposal i over all gt boxes; zeros when gt is empty.
std::vector<double> soft_labels(std::span<const BBox> proposal_boxes,
                                std::span<const BBox> gt_boxes);

// Square anchors centered on every `stride`-th cell of the finest grid, one
// box per entry of `scales` (side lengths in scene units), clipped to the
// extent.
std::vector<BBox> anchor_boxes(const FeatureGrid& finest, const Extent& extent, int stride,
                               std::span<const double> scales);

struct AnchorConfig {
    int stride = 1;
    std::vector<double> scales{8.0, 11.0, 14.5};
};

// Pools and normalizes anchor embeddings over the corpus and labels them with
// max-IoU against each image's ground truth.
ProbeDataset build_probe_dataset(const std::vector<synthworld::SceneRecord>& corpus,
                                 const AnchorConfig& anchors);

// Full-batch gradient descent with momentum on the mean soft focal loss of
// probe_score against the dataset labels. Deterministic per cfg.seed. The
// scale is optimized as exp(log_scale), so trained probes always have
// scale > 0.
ProbeTrainResult train_probe(const ProbeDataset& data, const ProbeTrainConfig& cfg);

// Mean loss and its gradient in (weight..., log_scale, bias) coordinates;
// exposed for finite-difference verification.
double probe_loss_and_gradient(const ProbeDataset& data, std::span<const double> params,
                               double gamma, std::span<double> grad_out);

// Dense anchors scored by the probe on their pooled embeddings, then NMS,
// then top-k.
std::vector<ScoredBox> propose(std::span<const FeatureGrid> grids, const Extent& extent,
                               const ObjectnessProbe& probe, int stride,
                               std::span<const double> scales, double nms_iou, int k);

// JSON persistence: {dim, weight, scale, bias, trained_epochs, seed}.
void save_probe(const ObjectnessProbe& probe, int trained_epochs, std::uint64_t seed,
                const std::string& path);
ObjectnessProbe load_probe(const std::string& path);

}  // namespace objret::probe
