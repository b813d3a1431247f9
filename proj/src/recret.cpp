#include "objret/recret.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "objret/errors.hpp"
#include "objret/probe.hpp"
#include "objret/rng.hpp"

namespace objret::recret {

using json = nlohmann::ordered_json;

namespace {

std::atomic<std::uint64_t> g_scorer_invocations{0};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double focal_loss_from_logit(double z, double y, double gamma) {
    const double p = sigmoid(z);
    const double ce = y * softplus(-z) + (1.0 - y) * softplus(z);
    return std::pow(std::abs(y - p), gamma) * ce;
}

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

std::uint64_t scorer_invocation_count() {
    return g_scorer_invocations.load(std::memory_order_relaxed);
}
void reset_scorer_invocation_count() {
    g_scorer_invocations.store(0, std::memory_order_relaxed);
}

std::vector<float> BoxPositionEncoding::encode(const BBox& box, const Extent& extent) const {
    if (dim < 1) throw ConfigError("position encoding: dim must be >= 1");
    const double coords[4] = {box.cx() / extent.width, box.cy() / extent.height,
                              box.width() / extent.width, box.height() / extent.height};
    std::vector<float> out(static_cast<std::size_t>(dim), 0.0f);
    const int per_coord = dim / 4;
    for (int c = 0; c < 4; ++c) {
        for (int t = 0; t < per_coord; ++t) {
            const double omega = 3.14159265358979323846 * static_cast<double>(1 << (t / 2));
            const double phase = coords[c] * omega;
            out[static_cast<std::size_t>(c * per_coord + t)] =
                static_cast<float>((t % 2 == 0) ? std::sin(phase) : std::cos(phase));
        }
    }
    const double norm = geometry::l2_norm(out);
    if (norm > 1e-12)
        for (float& x : out) x = static_cast<float>(x / norm * scale);
    return out;
}

ToyScorer init_scorer(int feature_dim, int hidden, double pos_scale, std::uint64_t seed) {
    if (feature_dim < 1 || hidden < 1) throw ConfigError("scorer: bad dimensions");
    ToyScorer s;
    s.feature_dim = feature_dim;
    s.hidden = hidden;
    s.pos_scale = pos_scale;
    const int in = s.input_dim();
    CounterRng rng(sub_seed(seed, "rec-init"));
    s.w1.resize(static_cast<std::size_t>(hidden) * in);
    const double w1_std = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : s.w1) w = w1_std * rng.normal();
    s.b1.assign(static_cast<std::size_t>(hidden), 0.0);
    s.w2.resize(static_cast<std::size_t>(hidden));
    const double w2_std = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& w : s.w2) w = w2_std * rng.normal();
    s.b2 = 0.0;
    return s;
}

CandidateList assemble_candidates(const synthworld::SceneRecord& record,
                                  const embedstore::ImageCacheRecord& store_record,
                                  std::span<const BBox> gts, double inject_iou,
                                  const BoxPositionEncoding& posenc) {
    if (record.image_id != store_record.image_id)
        throw ConfigError("assemble_candidates: cache record belongs to another image");
    CandidateList cands;
    cands.image_id = record.image_id;
    cands.extent = record.extent;
    for (const embedstore::Proposal& p : store_record.proposals) {
        cands.boxes.push_back(p.box);
        cands.injected.push_back(false);
    }
    for (const BBox& gt : gts) {
        double best = 0.0;
        for (const embedstore::Proposal& p : store_record.proposals)
            best = std::max(best, geometry::iou(gt, p.box));
        if (best < inject_iou) {
            cands.boxes.push_back(gt);
            cands.injected.push_back(true);
        }
    }
    cands.object_features.reserve(cands.boxes.size());
    for (const BBox& box : cands.boxes) {
        std::vector<float> feat = geometry::pool_region_embedding(record.grids, box,
                                                                  record.extent);
        geometry::l2_normalize(feat);
        const std::vector<float> pe = posenc.encode(box, record.extent);
        for (std::size_t d = 0; d < feat.size(); ++d) feat[d] += pe[d];
        cands.object_features.push_back(std::move(feat));
    }
    return cands;
}

std::vector<std::string> mine_hard_negatives(
    const embedstore::ImageCacheRecord& store_record,
    const std::map<std::string, std::vector<float>>& class_embeddings,
    const std::set<std::string>& present, int m) {
    std::vector<std::pair<double, std::string>> ranked;  // (-confidence, name)
    for (const auto& [concept_id, emb] : class_embeddings) {
        if (present.count(concept_id)) continue;
        double conf = -1.0;
        for (const embedstore::Proposal& p : store_record.proposals)
            conf = std::max(conf, geometry::dot_f64(emb, p.embedding));
        ranked.emplace_back(-conf, concept_id);
    }
    std::sort(ranked.begin(), ranked.end());
    if (m >= 0 && ranked.size() > static_cast<std::size_t>(m))
        ranked.resize(static_cast<std::size_t>(m));
    std::vector<std::string> out;
    out.reserve(ranked.size());
    for (const auto& [neg_conf, concept_id] : ranked) out.push_back(concept_id);
    return out;
}

std::vector<double> build_input_row(const RecQuery& query, const CandidateList& cands,
                                    std::size_t index) {
    const std::vector<float>& feat = cands.object_features[index];
    if (feat.size() != query.embedding.size())
        throw ConfigError("rec scorer: query dim does not match feature dim");
    std::vector<double> row;
    row.reserve(2 * feat.size() + 5);
    for (const float x : feat) row.push_back(x);
    for (const float x : query.embedding) row.push_back(x);
    row.push_back(geometry::dot_f64(feat, query.embedding));
    const BBox& box = cands.boxes[index];
    row.push_back(box.cx() / cands.extent.width);
    row.push_back(box.cy() / cands.extent.height);
    row.push_back(box.width() / cands.extent.width);
    row.push_back(box.height() / cands.extent.height);
    return row;
}

namespace {

double forward_logit(const ToyScorer& s, std::span<const double> row) {
    const int in = s.input_dim();
    double z = s.b2;
    for (int j = 0; j < s.hidden; ++j) {
        double a = s.b1[static_cast<std::size_t>(j)];
        const double* w = &s.w1[static_cast<std::size_t>(j) * in];
        for (int i = 0; i < in; ++i) a += w[i] * row[static_cast<std::size_t>(i)];
        z += s.w2[static_cast<std::size_t>(j)] * std::tanh(a);
    }
    return z;
}

}  // namespace

ScoreVector score_candidates(const ToyScorer& scorer, const RecQuery& query,
                             const CandidateList& cands) {
    g_scorer_invocations.fetch_add(1, std::memory_order_relaxed);
    ScoreVector out;
    out.scores.reserve(cands.boxes.size());
    for (std::size_t i = 0; i < cands.boxes.size(); ++i) {
        const std::vector<double> row = build_input_row(query, cands, i);
        out.scores.push_back(sigmoid(forward_logit(scorer, row)));
    }
    return out;
}

std::vector<float> embed_query(const synthworld::ConceptEmbedder& embedder,
                               std::span<const std::string> terms) {
    if (terms.empty()) throw ConfigError("rec query: no terms");
    std::vector<float> q(static_cast<std::size_t>(embedder.dim()), 0.0f);
    for (const std::string& term : terms) {
        const std::vector<float> e = embedder.embed(term);
        for (std::size_t d = 0; d < q.size(); ++d) q[d] += e[d];
    }
    return q;
}

std::vector<double> scorer_params(const ToyScorer& s) {
    std::vector<double> p;
    p.reserve(s.param_count());
    p.insert(p.end(), s.w1.begin(), s.w1.end());
    p.insert(p.end(), s.b1.begin(), s.b1.end());
    p.insert(p.end(), s.w2.begin(), s.w2.end());
    p.push_back(s.b2);
    return p;
}

void set_scorer_params(ToyScorer& s, std::span<const double> params) {
    if (params.size() != s.param_count()) throw ConfigError("scorer: parameter count mismatch");
    std::size_t off = 0;
    std::copy(params.begin(), params.begin() + static_cast<long>(s.w1.size()), s.w1.begin());
    off += s.w1.size();
    std::copy(params.begin() + static_cast<long>(off),
              params.begin() + static_cast<long>(off + s.b1.size()), s.b1.begin());
    off += s.b1.size();
    std::copy(params.begin() + static_cast<long>(off),
              params.begin() + static_cast<long>(off + s.w2.size()), s.w2.begin());
    off += s.w2.size();
    s.b2 = params[off];
}

double rec_loss_and_gradient(std::span<const double> rows, std::span<const double> labels,
                             int input_dim, int hidden, double gamma,
                             std::span<const double> params, std::span<double> grad_out) {
    const std::size_t n = labels.size();
    if (n == 0) throw ConfigError("rec training: empty batch");
    const std::size_t w1_len = static_cast<std::size_t>(hidden) * input_dim;
    const std::span<const double> w1 = params.subspan(0, w1_len);
    const std::span<const double> b1 = params.subspan(w1_len, static_cast<std::size_t>(hidden));
    const std::span<const double> w2 =
        params.subspan(w1_len + hidden, static_cast<std::size_t>(hidden));
    const double b2 = params[w1_len + 2 * static_cast<std::size_t>(hidden)];

    std::fill(grad_out.begin(), grad_out.end(), 0.0);
    std::vector<double> act(static_cast<std::size_t>(hidden));
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const double* x = rows.data() + s * static_cast<std::size_t>(input_dim);
        double z = b2;
        for (int j = 0; j < hidden; ++j) {
            double a = b1[static_cast<std::size_t>(j)];
            const double* w = w1.data() + static_cast<std::size_t>(j) * input_dim;
            for (int i = 0; i < input_dim; ++i) a += w[i] * x[i];
            act[static_cast<std::size_t>(j)] = std::tanh(a);
            z += w2[static_cast<std::size_t>(j)] * act[static_cast<std::size_t>(j)];
        }
        const double y = labels[s];
        total += focal_loss_from_logit(z, y, gamma);
        const double gz = focal_grad_from_logit(z, y, gamma);
        double* g_w1 = grad_out.data();
        double* g_b1 = grad_out.data() + w1_len;
        double* g_w2 = g_b1 + hidden;
        for (int j = 0; j < hidden; ++j) {
            const double h = act[static_cast<std::size_t>(j)];
            g_w2[j] += gz * h;
            const double ga = gz * w2[static_cast<std::size_t>(j)] * (1.0 - h * h);
            g_b1[j] += ga;
            double* gw = g_w1 + static_cast<std::size_t>(j) * input_dim;
            for (int i = 0; i < input_dim; ++i) gw[i] += ga * x[i];
        }
        grad_out[w1_len + 2 * static_cast<std::size_t>(hidden)] += gz;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& g : grad_out) g *= inv_n;
    return total * inv_n;
}

RecTrainResult train_rec_scorer(const std::vector<synthworld::SceneRecord>& corpus,
                                const embedstore::EmbeddingStore& store,
                                const std::vector<RecTask>& tasks,
                                const synthworld::ConceptEmbedder& embedder,
                                const RecTrainConfig& cfg) {
    if (tasks.empty()) throw ConfigError("rec training: no tasks");
    bool has_negative = false;
    for (const RecTask& t : tasks) has_negative = has_negative || t.is_negative();
    if (!has_negative)
        throw ConfigError("rec training: tasks must include negative queries");

    std::map<std::string, const synthworld::SceneRecord*> by_id;
    for (const synthworld::SceneRecord& rec : corpus) by_id[rec.image_id] = &rec;

    const int dim = embedder.dim();
    BoxPositionEncoding posenc{dim, cfg.pos_scale};
    ToyScorer scorer = init_scorer(dim, cfg.hidden, cfg.pos_scale, cfg.seed);
    const int input_dim = scorer.input_dim();

    std::vector<double> rows;
    std::vector<double> labels;
    for (const RecTask& task : tasks) {
        const auto rit = by_id.find(task.image_id);
        if (rit == by_id.end())
            throw ConfigError("rec training: task image '" + task.image_id + "' not in corpus");
        const embedstore::ImageCacheRecord* cached = store.find(task.image_id);
        if (!cached)
            throw ConfigError("rec training: task image '" + task.image_id + "' not in cache");
        const CandidateList cands = assemble_candidates(*rit->second, *cached, task.gt_boxes,
                                                        cfg.inject_iou, posenc);
        // Injection guarantee: every gt must now have a positive match.
        for (const BBox& gt : task.gt_boxes) {
            double best = 0.0;
            for (const BBox& b : cands.boxes) best = std::max(best, geometry::iou(gt, b));
            if (best < cfg.inject_iou)
                throw ValidationError("rec training: gt without positive candidate in '" +
                                      task.image_id + "'");
        }
        if (cands.boxes.empty()) continue;
        const std::vector<double> task_labels =
            probe::soft_labels(cands.boxes, task.gt_boxes);
        RecQuery query{task.query_text, embed_query(embedder, task.query_terms)};
        for (std::size_t i = 0; i < cands.boxes.size(); ++i) {
            const std::vector<double> row = build_input_row(query, cands, i);
            rows.insert(rows.end(), row.begin(), row.end());
            labels.push_back(task_labels[i]);
        }
    }
    if (labels.empty()) throw ConfigError("rec training: no training rows");

    std::vector<double> params = scorer_params(scorer);
    std::vector<double> grad(params.size(), 0.0);

    // Finite-difference spot check of the analytic gradient at initialization.
    {
        const std::size_t n_check = std::min<std::size_t>(labels.size(), 64);
        const std::span<const double> sub_rows(rows.data(),
                                               n_check * static_cast<std::size_t>(input_dim));
        const std::span<const double> sub_labels(labels.data(), n_check);
        std::vector<double> g(params.size(), 0.0);
        rec_loss_and_gradient(sub_rows, sub_labels, input_dim, cfg.hidden, cfg.gamma, params, g);
        CounterRng rng(sub_seed(cfg.seed, "rec-gradcheck"));
        std::vector<double> scratch(params.size(), 0.0);
        for (int c = 0; c < 10; ++c) {
            const std::size_t idx = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(params.size()) - 1));
            const double step = 1e-5;
            std::vector<double> pp = params;
            pp[idx] += step;
            const double lp = rec_loss_and_gradient(sub_rows, sub_labels, input_dim, cfg.hidden,
                                                    cfg.gamma, pp, scratch);
            pp[idx] -= 2 * step;
            const double lm = rec_loss_and_gradient(sub_rows, sub_labels, input_dim, cfg.hidden,
                                                    cfg.gamma, pp, scratch);
            const double fd = (lp - lm) / (2 * step);
            const double denom = std::max({std::abs(fd), std::abs(g[idx]), 1e-8});
            if (std::abs(fd - g[idx]) / denom > 1e-3)
                throw DivergenceError("rec training: gradient check failed at init", 0);
        }
    }

    std::vector<double> velocity(params.size(), 0.0);
    RecTrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double loss =
            rec_loss_and_gradient(rows, labels, input_dim, cfg.hidden, cfg.gamma, params, grad);
        if (!std::isfinite(loss)) throw DivergenceError("rec training: non-finite loss", epoch);
        for (const double g : grad)
            if (!std::isfinite(g))
                throw DivergenceError("rec training: non-finite gradient", epoch);
        result.loss_history.push_back(loss);
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity[i] = cfg.momentum * velocity[i] - cfg.lr * grad[i];
            params[i] += velocity[i];
        }
    }
    const double final_loss =
        rec_loss_and_gradient(rows, labels, input_dim, cfg.hidden, cfg.gamma, params, grad);
    if (!std::isfinite(final_loss))
        throw DivergenceError("rec training: non-finite loss", cfg.epochs);
    result.loss_history.push_back(final_loss);
    set_scorer_params(scorer, params);
    result.scorer = std::move(scorer);
    return result;
}

std::vector<ScoredBox> decode_rec(const ScoreVector& scores, const CandidateList& cands,
                                  DecodeMode mode, double t) {
    if (scores.scores.size() != cands.boxes.size())
        throw ConfigError("decode_rec: scores and candidates are misaligned");
    std::vector<ScoredBox> out;
    if (scores.scores.empty()) return out;
    if (mode == DecodeMode::top1) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < scores.scores.size(); ++i)
            if (scores.scores[i] > scores.scores[best]) best = i;
        out.push_back({cands.boxes[best], scores.scores[best]});
        return out;
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < scores.scores.size(); ++i)
        if (scores.scores[i] >= t) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.scores[a] > scores.scores[b];
    });
    for (const std::size_t i : order) out.push_back({cands.boxes[i], scores.scores[i]});
    return out;
}

std::vector<TaggedDetection> merge_multiquery(
    const std::map<std::string, std::vector<ScoredBox>>& per_query_detections,
    std::optional<double> nms_iou) {
    std::vector<TaggedDetection> out;
    for (const auto& [cls, dets] : per_query_detections) {
        std::vector<ScoredBox> kept = nms_iou ? geometry::nms(dets, *nms_iou) : dets;
        for (const ScoredBox& d : kept) out.push_back({cls, d});
    }
    return out;
}

std::vector<RecTask> make_rec_tasks(const std::vector<synthworld::SceneRecord>& corpus,
                                    const embedstore::EmbeddingStore& store,
                                    const synthworld::Taxonomy& taxonomy,
                                    const synthworld::ConceptEmbedder& embedder,
                                    const TaskGenConfig& cfg) {
    if (corpus.empty()) throw ConfigError("rec tasks: empty corpus");
    const int first = std::clamp(cfg.first_image, 0, static_cast<int>(corpus.size()));
    const int last = cfg.last_image < 0
                         ? static_cast<int>(corpus.size())
                         : std::clamp(cfg.last_image, first, static_cast<int>(corpus.size()));
    if (first >= last) throw ConfigError("rec tasks: empty image range");

    std::map<std::string, std::vector<float>> leaf_embeddings;
    for (const std::string& leaf : taxonomy.leaves())
        leaf_embeddings.emplace(leaf, embedder.embed(leaf));

    CounterRng rng(sub_seed(cfg.seed, "rec-tasks"));
    std::vector<RecTask> tasks;
    int guard = 0;
    while (static_cast<int>(tasks.size()) < cfg.n_tasks && guard < cfg.n_tasks * 60) {
        ++guard;
        const synthworld::SceneRecord& rec =
            corpus[static_cast<std::size_t>(rng.uniform_int(first, last - 1))];
        const bool want_negative = rng.uniform() < cfg.negative_fraction;
        if (want_negative) {
            const embedstore::ImageCacheRecord* cached = store.find(rec.image_id);
            if (!cached) continue;
            std::set<std::string> present;
            for (const synthworld::ObjectAnnotation& o : rec.objects)
                for (const std::string& label : o.label_path) present.insert(label);
            const std::vector<std::string> negs =
                mine_hard_negatives(*cached, leaf_embeddings, present, cfg.hard_negatives);
            if (negs.empty()) continue;
            const std::string& concept_id = negs[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(negs.size()) - 1))];
            tasks.push_back({rec.image_id, concept_id, {concept_id}, {}});
            continue;
        }
        if (rec.objects.empty()) continue;
        const synthworld::ObjectAnnotation& target = rec.objects[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(rec.objects.size()) - 1))];
        std::string concept_id = target.label_path.back();
        if (cfg.granularity == QueryGranularity::policy_sampled)
            concept_id = synthworld::sample_label(target, cfg.policy, rng);

        const auto matches_concept = [&](const synthworld::ObjectAnnotation& o) {
            return std::find(o.label_path.begin(), o.label_path.end(), concept_id) !=
                   o.label_path.end();
        };
        std::vector<const synthworld::ObjectAnnotation*> matching;
        for (const synthworld::ObjectAnnotation& o : rec.objects)
            if (matches_concept(o)) matching.push_back(&o);

        std::vector<std::string> terms{concept_id};
        if (matching.size() == 1 && rng.uniform() >= cfg.side_fraction) {
            // Plain concept task: the concept is unique in the image.
        } else {
            // Disambiguate (or just decorate) with a spatial side.
            const auto on_side = [&](const synthworld::ObjectAnnotation& o,
                                     const std::string& side) {
                if (side == "left") return o.box.cx() < rec.extent.width / 2;
                if (side == "right") return o.box.cx() >= rec.extent.width / 2;
                if (side == "top") return o.box.cy() < rec.extent.height / 2;
                return o.box.cy() >= rec.extent.height / 2;
            };
            std::string chosen_side;
            for (const std::string& side : synthworld::side_tokens()) {
                int n_on_side = 0;
                bool target_on_side = false;
                for (const synthworld::ObjectAnnotation* o : matching) {
                    if (on_side(*o, side)) {
                        ++n_on_side;
                        target_on_side = target_on_side || o == &target;
                    }
                }
                if (n_on_side == 1 && target_on_side) {
                    chosen_side = side;
                    break;
                }
            }
            if (chosen_side.empty()) continue;  // no unambiguous query for this target
            terms.push_back(chosen_side);
        }
        std::string text;
        for (const std::string& t : terms) text += (text.empty() ? "" : " ") + t;
        tasks.push_back({rec.image_id, text, terms, {target.box}});
    }
    return tasks;
}

void save_rec_tasks(const std::vector<RecTask>& tasks, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("rec tasks: cannot open '" + path + "' for writing");
    for (const RecTask& t : tasks) {
        json j;
        j["image_id"] = t.image_id;
        j["query_text"] = t.query_text;
        j["query_terms"] = t.query_terms;
        json boxes = json::array();
        for (const BBox& b : t.gt_boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
        j["gt_boxes"] = std::move(boxes);
        out << j.dump() << '\n';
    }
}

std::vector<RecTask> load_rec_tasks(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("rec tasks: cannot open '" + path + "'");
    std::vector<RecTask> tasks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            RecTask t;
            t.image_id = j.at("image_id").get<std::string>();
            t.query_text = j.at("query_text").get<std::string>();
            t.query_terms = j.at("query_terms").get<std::vector<std::string>>();
            for (const json& b : j.at("gt_boxes"))
                t.gt_boxes.push_back(
                    {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
            tasks.push_back(std::move(t));
        } catch (const json::exception& e) {
            throw ParseError(std::string("rec tasks: ") + e.what(), lineno);
        }
    }
    return tasks;
}

void save_scorer(const ToyScorer& scorer, int trained_epochs, std::uint64_t seed,
                 const std::string& path) {
    json j;
    j["feature_dim"] = scorer.feature_dim;
    j["hidden"] = scorer.hidden;
    j["pos_scale"] = scorer.pos_scale;
    j["w1"] = scorer.w1;
    j["b1"] = scorer.b1;
    j["w2"] = scorer.w2;
    j["b2"] = scorer.b2;
    j["trained_epochs"] = trained_epochs;
    j["seed"] = seed;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("scorer: cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

ToyScorer load_scorer(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("scorer: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(std::string("scorer: ") + e.what());
    }
    ToyScorer s;
    try {
        s.feature_dim = j.at("feature_dim").get<int>();
        s.hidden = j.at("hidden").get<int>();
        s.pos_scale = j.at("pos_scale").get<double>();
        s.w1 = j.at("w1").get<std::vector<double>>();
        s.b1 = j.at("b1").get<std::vector<double>>();
        s.w2 = j.at("w2").get<std::vector<double>>();
        s.b2 = j.at("b2").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("scorer: ") + e.what());
    }
    if (s.w1.size() != static_cast<std::size_t>(s.hidden) * s.input_dim() ||
        s.b1.size() != static_cast<std::size_t>(s.hidden) ||
        s.w2.size() != static_cast<std::size_t>(s.hidden))
        throw FormatError("scorer: inconsistent parameter shapes");
    return s;
}

}  // namespace objret::recret
