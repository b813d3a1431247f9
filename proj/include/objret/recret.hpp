#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "objret/embedstore.hpp"
#include "objret/geometry.hpp"
#include "objret/synthworld.hpp"

namespace objret::recret {

using geometry::BBox;
using geometry::Extent;
using geometry::ScoredBox;

// Sinusoidal encoding of (cx, cy, w, h) normalized by the image extent,
// rescaled to a fixed L2 norm so it never drowns the unit-norm region
// feature it is added to.
struct BoxPositionEncoding {
    int dim = 0;
    double scale = 0.05;

    std::vector<float> encode(const BBox& box, const Extent& extent) const;
};

struct CandidateList {
    std::string image_id;
    Extent extent;
    std::vector<BBox> boxes;
    std::vector<std::vector<float>> object_features;
    std::vector<bool> injected;
};

struct RecQuery {
    std::string text;
    std::vector<float> embedding;
};

struct ScoreVector {
    std::vector<double> scores;  // aligned with the candidate list, in [0,1]
};

// Per-candidate two-layer tanh scorer over
// concat(object_feature, query, dot(object, query), cx, cy, w, h).
// Scores depend only on (query, candidate), never on candidate order.
struct ToyScorer {
    int feature_dim = 0;
    int hidden = 0;
    double pos_scale = 0.05;
    std::vector<double> w1;  // hidden x input, row-major
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;

    int input_dim() const { return 2 * feature_dim + 5; }
    std::size_t param_count() const {
        return static_cast<std::size_t>(hidden) * input_dim() + 2 * hidden + 1;
    }
};

ToyScorer init_scorer(int feature_dim, int hidden, double pos_scale, std::uint64_t seed);

// Total score_candidates calls since the last reset; one call scores the
// whole candidate list.
std::uint64_t scorer_invocation_count();
void reset_scorer_invocation_count();

// Cached boxes, then every gt whose best candidate IoU < inject_iou appended
// with its flag set. Features: normalized pooled region embedding plus the
// position encoding; injected boxes get the identical treatment.
CandidateList assemble_candidates(const synthworld::SceneRecord& record,
                                  const embedstore::ImageCacheRecord& store_record,
                                  std::span<const BBox> gts, double inject_iou,
                                  const BoxPositionEncoding& posenc);

// The m absent classes with the highest max-over-proposals confidence;
// ties broken lexicographically. Returns all absent classes if fewer than m.
std::vector<std::string> mine_hard_negatives(
    const embedstore::ImageCacheRecord& store_record,
    const std::map<std::string, std::vector<float>>& class_embeddings,
    const std::set<std::string>& present, int m = 3);

// One scorer pass over the full list.
ScoreVector score_candidates(const ToyScorer& scorer, const RecQuery& query,
                             const CandidateList& cands);

struct RecTask {
    std::string image_id;
    std::string query_text;
    std::vector<std::string> query_terms;
    std::vector<BBox> gt_boxes;  // empty marks a negative query

    bool is_negative() const { return gt_boxes.empty(); }
};

// Query embedding = sum of term embeddings.
std::vector<float> embed_query(const synthworld::ConceptEmbedder& embedder,
                               std::span<const std::string> terms);

struct RecTrainConfig {
    double lr = 0.3;
    double momentum = 0.9;
    int epochs = 300;
    double gamma = 2.0;
    std::uint64_t seed = 0;
    double inject_iou = 0.5;
    int hidden = 32;
    double pos_scale = 0.05;
};

struct RecTrainResult {
    ToyScorer scorer;
    std::vector<double> loss_history;
};

// Mean soft focal loss of scores against max-IoU soft labels over every
// (task, candidate) pair; negative tasks contribute all-zero labels.
// Full-batch gradient descent with momentum, deterministic per cfg.seed;
// the analytic gradient is spot-checked against finite differences at
// initialization.
RecTrainResult train_rec_scorer(const std::vector<synthworld::SceneRecord>& corpus,
                                const embedstore::EmbeddingStore& store,
                                const std::vector<RecTask>& tasks,
                                const synthworld::ConceptEmbedder& embedder,
                                const RecTrainConfig& cfg);

// Mean loss and gradient over prebuilt input rows; exposed for
// finite-difference verification.
double rec_loss_and_gradient(std::span<const double> rows, std::span<const double> labels,
                             int input_dim, int hidden, double gamma,
                             std::span<const double> params, std::span<double> grad_out);

std::vector<double> scorer_params(const ToyScorer& scorer);
void set_scorer_params(ToyScorer& scorer, std::span<const double> params);

// Input row for one (query, candidate) pair; shared by scoring and training.
std::vector<double> build_input_row(const RecQuery& query, const CandidateList& cands,
                                    std::size_t index);

enum class DecodeMode { top1, threshold };

// top1: the argmax candidate. threshold: all candidates scoring >= t in
// descending score order.
std::vector<ScoredBox> decode_rec(const ScoreVector& scores, const CandidateList& cands,
                                  DecodeMode mode, double t = 0.5);

struct TaggedDetection {
    std::string cls;
    ScoredBox det;
};

// Concatenates per-query detections with class tags, optional per-class NMS.
// Output depends only on the map contents, not insertion order.
std::vector<TaggedDetection> merge_multiquery(
    const std::map<std::string, std::vector<ScoredBox>>& per_query_detections,
    std::optional<double> nms_iou);

enum class QueryGranularity { leaf, policy_sampled };

struct TaskGenConfig {
    int n_tasks = 500;
    double negative_fraction = 0.25;
    std::uint64_t seed = 0;
    QueryGranularity granularity = QueryGranularity::leaf;
    synthworld::LabelPolicy policy = synthworld::LabelPolicy::last_two;
    double side_fraction = 0.5;  // chance a positive query adds a spatial side
    int first_image = 0;         // [first_image, last_image) source range
    int last_image = -1;         // -1: end of corpus
    int hard_negatives = 3;
};

// Synthetic REC tasks: positive queries name a unique object (concept term,
// optionally plus a side term); negative queries are mined hard-negative
// concepts with empty gt.
std::vector<RecTask> make_rec_tasks(const std::vector<synthworld::SceneRecord>& corpus,
                                    const embedstore::EmbeddingStore& store,
                                    const synthworld::Taxonomy& taxonomy,
                                    const synthworld::ConceptEmbedder& embedder,
                                    const TaskGenConfig& cfg);

// JSON lines: {image_id, query_text, query_terms:[...], gt_boxes:[[x1,y1,x2,y2],...]}.
void save_rec_tasks(const std::vector<RecTask>& tasks, const std::string& path);
std::vector<RecTask> load_rec_tasks(const std::string& path);

void save_scorer(const ToyScorer& scorer, int trained_epochs, std::uint64_t seed,
                 const std::string& path);
ToyScorer load_scorer(const std::string& path);

}  // namespace objret::recret
