#include "objret/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "objret/errors.hpp"
#include "objret/rng.hpp"

namespace objret::probe {

using json = nlohmann::ordered_json;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Loss on the logit; equals soft_focal_loss(sigmoid(z), y, gamma) but stays
// finite for any finite z.
double focal_loss_from_logit(double z, double y, double gamma) {
    const double p = sigmoid(z);
    const double ce = y * softplus(-z) + (1.0 - y) * softplus(z);
    return std::pow(std::abs(y - p), gamma) * ce;
}

// d/dz of focal_loss_from_logit.
double focal_grad_from_logit(double z, double y, double gamma) {
    const double p = sigmoid(z);
    if (p == y) return 0.0;
    const double ce = y * softplus(-z) + (1.0 - y) * softplus(z);
    const double m = std::pow(std::abs(y - p), gamma);
    double dmdz = 0.0;
    if (gamma > 0.0) {
        dmdz = gamma * std::pow(std::abs(y - p), gamma - 1.0) *
               ((p > y) ? 1.0 : -1.0) * p * (1.0 - p);
    }
    return dmdz * ce + m * (p - y);
}

}  // namespace

double probe_score(const ObjectnessProbe& probe, std::span<const float> embedding) {
    if (probe.weight.size() != embedding.size())
        throw ConfigError("probe_score: dimension mismatch");
    double norm2 = 0.0;
    for (const double w : probe.weight) norm2 += w * w;
    if (norm2 <= 0.0 || !std::isfinite(norm2))
        throw ValidationError("probe_score: weight has zero norm");
    const double norm = std::sqrt(norm2);
    double u = 0.0;
    for (std::size_t i = 0; i < embedding.size(); ++i)
        u += probe.weight[i] / norm * embedding[i];
    return sigmoid(probe.scale * u + probe.bias);
}

double soft_focal_loss(double p, double y, double gamma) {
    if (!(p > 0.0 && p < 1.0))
        throw ValidationError("soft_focal_loss: p must lie strictly in (0,1)");
    const double ce = -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
    return std::pow(std::abs(y - p), gamma) * ce;
}

std::vector<double> soft_labels(std::span<const BBox> proposal_boxes,
                                std::span<const BBox> gt_boxes) {
    std::vector<double> labels(proposal_boxes.size(), 0.0);
    for (std::size_t i = 0; i < proposal_boxes.size(); ++i) {
        double best = 0.0;
        for (const BBox& gt : gt_boxes) best = std::max(best, geometry::iou(proposal_boxes[i], gt));
        labels[i] = best;
    }
    return labels;
}

std::vector<BBox> anchor_boxes(const FeatureGrid& finest, const Extent& extent, int stride,
                               std::span<const double> scales) {
    if (stride < 1) throw ConfigError("anchor_boxes: stride must be >= 1");
    if (scales.empty()) throw ConfigError("anchor_boxes: need at least one scale");
    const double sx = extent.width / finest.width;
    const double sy = extent.height / finest.height;
    std::vector<BBox> anchors;
    anchors.reserve(static_cast<std::size_t>(finest.height / stride + 1) *
                    (finest.width / stride + 1) * scales.size());
    for (int i = 0; i < finest.height; i += stride) {
        const double cy = (i + 0.5) * sy;
        for (int j = 0; j < finest.width; j += stride) {
            const double cx = (j + 0.5) * sx;
            for (const double s : scales) {
                const BBox b{cx - s / 2, cy - s / 2, cx + s / 2, cy + s / 2};
                anchors.push_back(b.clipped(extent.width, extent.height));
            }
        }
    }
    return anchors;
}

ProbeDataset build_probe_dataset(const std::vector<synthworld::SceneRecord>& corpus,
                                 const AnchorConfig& anchors) {
    ProbeDataset data;
    for (const synthworld::SceneRecord& rec : corpus) {
        if (rec.grids.empty()) throw ConfigError("probe dataset: corpus record has no grids");
        if (data.dim == 0) data.dim = rec.grids[0].dim;
        const std::vector<BBox> boxes =
            anchor_boxes(rec.grids[0], rec.extent, anchors.stride, anchors.scales);
        std::vector<BBox> gts;
        gts.reserve(rec.objects.size());
        for (const synthworld::ObjectAnnotation& o : rec.objects) gts.push_back(o.box);
        const std::vector<double> labels = soft_labels(boxes, gts);
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            std::vector<float> emb = geometry::pool_region_embedding(rec.grids, boxes[i],
                                                                     rec.extent);
            geometry::l2_normalize(emb);
            data.embeddings.push_back(std::move(emb));
            data.labels.push_back(labels[i]);
        }
    }
    return data;
}

double probe_loss_and_gradient(const ProbeDataset& data, std::span<const double> params,
                               double gamma, std::span<double> grad_out) {
    const std::size_t dim = static_cast<std::size_t>(data.dim);
    const std::span<const double> w = params.subspan(0, dim);
    const double log_scale = params[dim];
    const double bias = params[dim + 1];
    const double scale = std::exp(log_scale);

    double norm2 = 0.0;
    for (const double x : w) norm2 += x * x;
    const double norm = std::sqrt(norm2);
    if (!(norm > 0.0)) throw ValidationError("probe training: weight has zero norm");

    std::fill(grad_out.begin(), grad_out.end(), 0.0);
    const std::size_t n = data.embeddings.size();
    double total = 0.0;
    std::vector<double> gw(dim, 0.0);
    double g_ls = 0.0, g_b = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const std::vector<float>& e = data.embeddings[s];
        double u = 0.0;
        for (std::size_t d = 0; d < dim; ++d) u += w[d] / norm * e[d];
        const double z = scale * u + bias;
        total += focal_loss_from_logit(z, data.labels[s], gamma);
        const double gz = focal_grad_from_logit(z, data.labels[s], gamma);
        // d u / d w = (e - u * w_hat) / ||w||
        const double c = gz * scale / norm;
        for (std::size_t d = 0; d < dim; ++d) gw[d] += c * (e[d] - u * w[d] / norm);
        g_ls += gz * scale * u;  // z depends on log_scale through scale = exp(ls)
        g_b += gz;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t d = 0; d < dim; ++d) grad_out[d] = gw[d] * inv_n;
    grad_out[dim] = g_ls * inv_n;
    grad_out[dim + 1] = g_b * inv_n;
    return total * inv_n;
}

ProbeTrainResult train_probe(const ProbeDataset& data, const ProbeTrainConfig& cfg) {
    if (data.embeddings.empty() || data.labels.size() != data.embeddings.size())
        throw ConfigError("probe training: empty or inconsistent dataset");
    bool has_pos = false, has_neg = false;
    for (const double y : data.labels) {
        has_pos = has_pos || y > cfg.positive_iou;
        has_neg = has_neg || y < cfg.positive_iou;
    }
    if (!has_pos || !has_neg)
        throw ConfigError("probe training: need samples on both sides of positive_iou");

    const std::size_t dim = static_cast<std::size_t>(data.dim);
    std::vector<double> params(dim + 2, 0.0);
    // Class-mean difference init: the positive/negative centroid gap already
    // points at a separating direction; training calibrates it and the logit
    // scale. Pure noise init tends to stall against the heavy negative mass.
    std::vector<double> mean_pos(dim, 0.0), mean_neg(dim, 0.0);
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t s = 0; s < data.embeddings.size(); ++s) {
        const bool positive = data.labels[s] > cfg.positive_iou;
        std::vector<double>& acc = positive ? mean_pos : mean_neg;
        for (std::size_t d = 0; d < dim; ++d) acc[d] += data.embeddings[s][d];
        (positive ? n_pos : n_neg) += 1;
    }
    CounterRng rng(sub_seed(cfg.seed, "probe-init"));
    for (std::size_t d = 0; d < dim; ++d)
        params[d] = mean_pos[d] / static_cast<double>(n_pos) -
                    mean_neg[d] / static_cast<double>(n_neg) + 0.01 * rng.normal();
    params[dim] = 0.0;      // log_scale
    params[dim + 1] = 0.0;  // bias

    std::vector<double> grad(params.size(), 0.0);
    std::vector<double> velocity(params.size(), 0.0);
    ProbeTrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double loss = probe_loss_and_gradient(data, params, cfg.gamma, grad);
        if (!std::isfinite(loss)) throw DivergenceError("probe training: non-finite loss", epoch);
        for (const double g : grad)
            if (!std::isfinite(g))
                throw DivergenceError("probe training: non-finite gradient", epoch);
        result.loss_history.push_back(loss);
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity[i] = cfg.momentum * velocity[i] - cfg.lr * grad[i];
            params[i] += velocity[i];
        }
    }
    const double final_loss = probe_loss_and_gradient(data, params, cfg.gamma, grad);
    if (!std::isfinite(final_loss))
        throw DivergenceError("probe training: non-finite loss", cfg.epochs);
    result.loss_history.push_back(final_loss);

    result.probe.weight.assign(params.begin(), params.begin() + static_cast<long>(dim));
    result.probe.scale = std::exp(params[dim]);
    result.probe.bias = params[dim + 1];
    return result;
}

std::vector<ScoredBox> propose(std::span<const FeatureGrid> grids, const Extent& extent,
                               const ObjectnessProbe& probe, int stride,
                               std::span<const double> scales, double nms_iou, int k) {
    if (grids.empty()) throw ConfigError("propose: no grids");
    const std::vector<BBox> anchors = anchor_boxes(grids[0], extent, stride, scales);
    std::vector<ScoredBox> scored;
    scored.reserve(anchors.size());
    for (const BBox& box : anchors) {
        std::vector<float> emb = geometry::pool_region_embedding(grids, box, extent);
        geometry::l2_normalize(emb);
        scored.push_back({box, probe_score(probe, emb)});
    }
    std::vector<ScoredBox> kept = geometry::nms(std::move(scored), nms_iou);
    if (k >= 0 && kept.size() > static_cast<std::size_t>(k))
        kept.resize(static_cast<std::size_t>(k));
    return kept;
}

void save_probe(const ObjectnessProbe& probe, int trained_epochs, std::uint64_t seed,
                const std::string& path) {
    json j;
    j["dim"] = probe.weight.size();
    j["weight"] = probe.weight;
    j["scale"] = probe.scale;
    j["bias"] = probe.bias;
    j["trained_epochs"] = trained_epochs;
    j["seed"] = seed;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("probe: cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

ObjectnessProbe load_probe(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("probe: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(std::string("probe: ") + e.what());
    }
    ObjectnessProbe probe;
    try {
        probe.weight = j.at("weight").get<std::vector<double>>();
        probe.scale = j.at("scale").get<double>();
        probe.bias = j.at("bias").get<double>();
        if (probe.weight.size() != j.at("dim").get<std::size_t>())
            throw FormatError("probe: dim does not match weight length");
    } catch (const json::exception& e) {
        throw FormatError(std::string("probe: ") + e.what());
    }
    return probe;
}

}  // namespace objret::probe
