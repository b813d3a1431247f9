// objret: corpus generation, probe training, cache building, retrieval and
// REC evaluation over a persistent proposal-embedding cache.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "objret/embedstore.hpp"
#include "objret/errors.hpp"
#include "objret/geometry.hpp"
#include "objret/metrics.hpp"
#include "objret/probe.hpp"
#include "objret/recret.hpp"
#include "objret/retrieval.hpp"
#include "objret/rng.hpp"
#include "objret/synthworld.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace objret;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitFormat = 4;
constexpr int kExitDivergence = 5;

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void require_input(const std::string& path) {
    if (!fs::exists(path)) throw FormatError("missing input file: '" + path + "' [missing]");
}

void require_output(const std::string& path, const std::string& flag) {
    if (path.empty()) throw ConfigError("missing required output path: " + flag);
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

// Every command drops a {command, config, seed, wall_time} manifest next to
// its primary output.
void write_manifest(const std::string& command, const json& config, std::uint64_t seed,
                    double wall_time, const std::string& primary_output) {
    json manifest;
    manifest["command"] = command;
    manifest["config"] = config;
    manifest["seed"] = seed;
    manifest["wall_time"] = wall_time;
    write_json(manifest, primary_output + ".manifest.json");
}

std::string meta_path(const std::string& corpus_path) { return corpus_path + ".meta.json"; }

// Commands that need feature grids regenerate the corpus from its sidecar
// spec; the annotation JSONL stays the ground-truth surface.
std::vector<synthworld::SceneRecord> corpus_with_grids(const std::string& corpus_path) {
    require_input(meta_path(corpus_path));
    const synthworld::CorpusSpec spec = synthworld::load_corpus_spec(meta_path(corpus_path));
    return synthworld::generate_corpus(spec);
}

synthworld::CorpusSpec corpus_spec_of(const std::string& corpus_path) {
    require_input(meta_path(corpus_path));
    return synthworld::load_corpus_spec(meta_path(corpus_path));
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : csv) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

synthworld::LabelPolicy parse_policy(const std::string& name) {
    if (name == "uniform_all") return synthworld::LabelPolicy::uniform_all;
    if (name == "last_two") return synthworld::LabelPolicy::last_two;
    throw ConfigError("unknown label policy '" + name + "'");
}

// Ground-truth image sets per queried concept (path membership).
std::map<std::string, std::set<std::string>> retrieval_gt(
    const std::vector<synthworld::SceneRecord>& corpus, const std::vector<std::string>& queries) {
    std::map<std::string, std::set<std::string>> gt;
    for (const std::string& q : queries) gt[q] = {};
    for (const auto& rec : corpus) {
        for (const auto& obj : rec.objects) {
            for (const auto& label : obj.label_path) {
                const auto it = gt.find(label);
                if (it != gt.end()) it->second.insert(rec.image_id);
            }
        }
    }
    return gt;
}

std::vector<std::string> leaf_queries(const synthworld::CorpusSpec& spec) {
    return spec.concepts.leaves();
}

struct CommonOpts {
    std::string corpus;
    std::string cache;
    std::string probe;
    std::string scorer;
    std::string report;
    std::string queries;
    std::string tasks;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int dim = 32;
    int k = 100;
    double threshold = 0.2;
    std::string policy = "last_two";
    bool federated = false;
};

std::uint64_t derived_seed(const CommonOpts& opts, const std::string& component,
                           std::uint64_t base) {
    return opts.seed_set ? opts.seed : sub_seed(base, component);
}

int cmd_gen(const CommonOpts& opts, int images, int roots, int children, int leaves,
            int min_objects, int max_objects, double noise, double extent,
            const std::string& grids_csv, double min_size, double max_size,
            double min_aspect, double max_aspect) {
    const double t0 = now_seconds();
    require_output(opts.corpus, "--corpus");
    synthworld::CorpusSpec spec;
    spec.n_images = images;
    spec.concepts = synthworld::make_default_taxonomy(roots, children, leaves);
    spec.min_objects = min_objects;
    spec.max_objects = max_objects;
    spec.dim = opts.dim;
    spec.seed = opts.seed;
    spec.noise_sigma = noise;
    spec.extent = {extent, extent};
    spec.grid_sizes.clear();
    for (const std::string& g : split_csv(grids_csv)) spec.grid_sizes.push_back(std::stoi(g));
    spec.min_object_size = min_size;
    spec.max_object_size = max_size;
    spec.min_aspect = min_aspect;
    spec.max_aspect = max_aspect;

    const auto corpus = synthworld::generate_corpus(spec);
    synthworld::save_annotations(corpus, opts.corpus);
    synthworld::save_corpus_spec(spec, meta_path(opts.corpus));

    json config;
    config["images"] = images;
    config["dim"] = opts.dim;
    config["noise"] = noise;
    config["concept_roots"] = roots;
    config["objects"] = {min_objects, max_objects};
    write_manifest("gen", config, opts.seed, now_seconds() - t0, opts.corpus);
    std::cout << "wrote " << corpus.size() << " images to " << opts.corpus << "\n";
    return 0;
}

int cmd_train_probe(const CommonOpts& opts, int epochs, double lr, double momentum,
                    double gamma, int stride, const std::string& scales_csv) {
    const double t0 = now_seconds();
    require_input(opts.corpus);
    require_output(opts.probe, "--probe");
    const auto spec = corpus_spec_of(opts.corpus);
    const auto corpus = synthworld::generate_corpus(spec);

    probe::AnchorConfig anchors;
    anchors.stride = stride;
    anchors.scales.clear();
    for (const std::string& s : split_csv(scales_csv)) anchors.scales.push_back(std::stod(s));
    const probe::ProbeDataset data = probe::build_probe_dataset(corpus, anchors);

    probe::ProbeTrainConfig cfg;
    cfg.lr = lr;
    cfg.momentum = momentum;
    cfg.epochs = epochs;
    cfg.gamma = gamma;
    cfg.seed = derived_seed(opts, "train_probe", spec.seed);
    const probe::ProbeTrainResult result = probe::train_probe(data, cfg);
    probe::save_probe(result.probe, epochs, cfg.seed, opts.probe);

    json config;
    config["corpus"] = opts.corpus;
    config["epochs"] = epochs;
    config["lr"] = lr;
    config["momentum"] = momentum;
    config["gamma"] = gamma;
    config["stride"] = stride;
    config["scales"] = scales_csv;
    config["initial_loss"] = result.loss_history.front();
    config["final_loss"] = result.loss_history.back();
    write_manifest("train_probe", config, cfg.seed, now_seconds() - t0, opts.probe);
    std::cout << "trained probe: loss " << result.loss_history.front() << " -> "
              << result.loss_history.back() << "\n";
    return 0;
}

int cmd_build_cache(const CommonOpts& opts, double nms_iou, int stride,
                    const std::string& scales_csv) {
    const double t0 = now_seconds();
    require_input(opts.corpus);
    require_input(opts.probe);
    require_output(opts.cache, "--cache");
    const auto corpus = corpus_with_grids(opts.corpus);
    const probe::ObjectnessProbe objectness = probe::load_probe(opts.probe);

    embedstore::BuildConfig cfg;
    cfg.k = opts.k;
    cfg.nms_iou = nms_iou;
    cfg.stride = stride;
    cfg.scales.clear();
    for (const std::string& s : split_csv(scales_csv)) cfg.scales.push_back(std::stod(s));

    const embedstore::EmbeddingStore store = embedstore::build_store(corpus, objectness, cfg);
    embedstore::save_store(store, opts.cache);

    json config;
    config["corpus"] = opts.corpus;
    config["probe"] = opts.probe;
    config["k"] = opts.k;
    config["nms_iou"] = nms_iou;
    config["proposals"] = store.total_proposals();
    write_manifest("build_cache", config, corpus_spec_of(opts.corpus).seed, now_seconds() - t0,
                   opts.cache);
    std::cout << "cached " << store.total_proposals() << " proposals for "
              << store.records().size() << " images\n";
    return 0;
}

int cmd_query(const CommonOpts& opts) {
    const double t0 = now_seconds();
    require_input(opts.cache);
    require_output(opts.report, "--report");
    const auto spec = corpus_spec_of(opts.corpus);
    const auto embedder = synthworld::make_embedder(spec);
    const auto store = embedstore::load_store(opts.cache);

    const std::vector<std::string> names =
        opts.queries.empty() ? leaf_queries(spec) : split_csv(opts.queries);
    json out;
    out["threshold"] = opts.threshold;
    json results = json::object();
    for (const std::string& name : names) {
        retrieval::QuerySpec q;
        q.concept_id = name;
        q.embedding = embedder.embed(name);
        q.threshold = opts.threshold;
        const retrieval::RetrievalResult r = retrieval::retrieve(store, q);
        json rj;
        rj["images"] = r.images;
        json maxima = json::object();
        for (const auto& [id, v] : r.per_image_max) maxima[id] = v;
        rj["per_image_max"] = std::move(maxima);
        results[name] = std::move(rj);
    }
    out["results"] = std::move(results);
    write_json(out, opts.report);

    json config;
    config["cache"] = opts.cache;
    config["queries"] = names;
    config["threshold"] = opts.threshold;
    write_manifest("query", config, spec.seed, now_seconds() - t0, opts.report);
    std::cout << "queried " << names.size() << " concepts\n";
    return 0;
}

int cmd_eval_retrieval(const CommonOpts& opts) {
    const double t0 = now_seconds();
    require_input(opts.corpus);
    require_input(opts.cache);
    require_output(opts.report, "--report");
    const auto spec = corpus_spec_of(opts.corpus);
    const auto embedder = synthworld::make_embedder(spec);
    const auto annotations = synthworld::load_annotations(opts.corpus);
    const auto store = embedstore::load_store(opts.cache);

    const std::vector<std::string> names =
        opts.queries.empty() ? leaf_queries(spec) : split_csv(opts.queries);
    std::map<std::string, retrieval::RetrievalResult> results;
    for (const std::string& name : names) {
        retrieval::QuerySpec q;
        q.concept_id = name;
        q.embedding = embedder.embed(name);
        q.threshold = opts.threshold;
        results[name] = retrieval::retrieve(store, q);
    }
    const auto gt = retrieval_gt(annotations, names);
    retrieval::RetrievalReport report = retrieval::evaluate_retrieval(results, gt, opts.federated);
    report.threshold = opts.threshold;
    write_json(retrieval::report_to_json(report), opts.report);

    json config;
    config["cache"] = opts.cache;
    config["threshold"] = opts.threshold;
    config["federated"] = opts.federated;
    config["queries"] = names;
    write_manifest("eval_retrieval", config, spec.seed, now_seconds() - t0, opts.report);
    if (opts.federated)
        std::cout << "macro recall " << report.macro.recall << "\n";
    else
        std::cout << "macro f1 " << *report.macro.f1 << "\n";
    return 0;
}

int cmd_eval_recall(const CommonOpts& opts) {
    const double t0 = now_seconds();
    require_input(opts.corpus);
    require_input(opts.cache);
    require_output(opts.report, "--report");
    const auto annotations = synthworld::load_annotations(opts.corpus);
    const auto store = embedstore::load_store(opts.cache);

    std::map<std::string, std::vector<geometry::ScoredBox>> proposals;
    for (const auto& rec : store.records()) {
        auto& list = proposals[rec.image_id];
        for (const auto& p : rec.proposals) list.push_back({p.box, p.objectness});
    }
    std::map<std::string, std::vector<geometry::BBox>> gts;
    for (const auto& rec : annotations) {
        auto& list = gts[rec.image_id];
        for (const auto& obj : rec.objects) list.push_back(obj.box);
    }
    const metrics::RecallResult recall = metrics::average_recall(proposals, gts, opts.k);

    metrics::EvalReport report;
    report.ar[opts.k] = recall;
    write_json(metrics::report_to_json(report), opts.report);

    json config;
    config["cache"] = opts.cache;
    config["k"] = opts.k;
    write_manifest("eval_recall", config, corpus_spec_of(opts.corpus).seed, now_seconds() - t0,
                   opts.report);
    std::cout << "ar50@" << opts.k << " = " << recall.ar50 << ", ar = " << recall.ar_avg << "\n";
    return 0;
}

int cmd_eval_detect(const CommonOpts& opts, double iou_thresh, double merge_nms) {
    const double t0 = now_seconds();
    require_input(opts.corpus);
    require_input(opts.cache);
    require_output(opts.report, "--report");
    const auto spec = corpus_spec_of(opts.corpus);
    const auto embedder = synthworld::make_embedder(spec);
    const auto annotations = synthworld::load_annotations(opts.corpus);
    const auto store = embedstore::load_store(opts.cache);

    const std::vector<std::string> names =
        opts.queries.empty() ? leaf_queries(spec) : split_csv(opts.queries);
    std::map<std::string, std::vector<float>> class_embeddings;
    for (const std::string& name : names) class_embeddings[name] = embedder.embed(name);

    // Dot-product region classification over cached proposals, merged per
    // class, then standard AP.
    std::vector<metrics::Detection> detections;
    for (const auto& rec : store.records()) {
        std::map<std::string, std::vector<geometry::ScoredBox>> per_query;
        for (const auto& [name, emb] : class_embeddings) {
            std::vector<geometry::ScoredBox> dets;
            for (const auto& p : rec.proposals) {
                const double score = geometry::dot_f64(emb, p.embedding);
                if (score >= opts.threshold) dets.push_back({p.box, score});
            }
            if (!dets.empty()) per_query[name] = std::move(dets);
        }
        for (const auto& tagged : recret::merge_multiquery(per_query, merge_nms))
            detections.push_back({rec.image_id, tagged.cls, tagged.det.box, tagged.det.score});
    }
    std::vector<metrics::GtObject> gts;
    for (const auto& rec : annotations)
        for (const auto& obj : rec.objects)
            gts.push_back({rec.image_id, obj.label_path.back(), obj.box});

    metrics::EvalReport report;
    report.ap = metrics::average_precision(detections, gts, iou_thresh);
    write_json(metrics::report_to_json(report), opts.report);

    json config;
    config["cache"] = opts.cache;
    config["threshold"] = opts.threshold;
    config["iou_thresh"] = iou_thresh;
    write_manifest("eval_detect", config, spec.seed, now_seconds() - t0, opts.report);
    std::cout << "mean ap " << report.ap->mean << " over " << report.ap->per_class.size()
              << " classes\n";
    return 0;
}

int cmd_gen_rec_tasks(const CommonOpts& opts, int n_tasks, double negative_fraction,
                      double side_fraction, const std::string& granularity, int first_image,
                      int last_image) {
    const double t0 = now_seconds();
    require_input(opts.corpus);
    require_input(opts.cache);
    require_output(opts.tasks, "--tasks");
    const auto spec = corpus_spec_of(opts.corpus);
    const auto corpus = synthworld::load_annotations(opts.corpus);
    const auto embedder = synthworld::make_embedder(spec);
    const auto store = embedstore::load_store(opts.cache);

    recret::TaskGenConfig cfg;
    cfg.n_tasks = n_tasks;
    cfg.negative_fraction = negative_fraction;
    cfg.side_fraction = side_fraction;
    cfg.seed = derived_seed(opts, "gen_rec_tasks", spec.seed);
    cfg.policy = parse_policy(opts.policy);
    if (granularity == "leaf")
        cfg.granularity = recret::QueryGranularity::leaf;
    else if (granularity == "sampled")
        cfg.granularity = recret::QueryGranularity::policy_sampled;
    else
        throw ConfigError("unknown granularity '" + granularity + "'");
    cfg.first_image = first_image;
    cfg.last_image = last_image;

    const auto tasks = recret::make_rec_tasks(corpus, store, spec.concepts, embedder, cfg);
    recret::save_rec_tasks(tasks, opts.tasks);

    json config;
    config["n_tasks"] = n_tasks;
    config["negative_fraction"] = negative_fraction;
    config["granularity"] = granularity;
    config["policy"] = opts.policy;
    config["image_range"] = {first_image, last_image};
    write_manifest("gen_rec_tasks", config, cfg.seed, now_seconds() - t0, opts.tasks);
    std::cout << "wrote " << tasks.size() << " tasks\n";
    return 0;
}

int cmd_train_rec(const CommonOpts& opts, int epochs, double lr, double momentum, double gamma,
                  int hidden, double inject_iou, double pos_scale) {
    const double t0 = now_seconds();
    require_input(opts.corpus);
    require_input(opts.cache);
    require_input(opts.tasks);
    require_output(opts.scorer, "--scorer");
    const auto spec = corpus_spec_of(opts.corpus);
    const auto corpus = synthworld::generate_corpus(spec);
    const auto embedder = synthworld::make_embedder(spec);
    const auto store = embedstore::load_store(opts.cache);
    const auto tasks = recret::load_rec_tasks(opts.tasks);

    recret::RecTrainConfig cfg;
    cfg.lr = lr;
    cfg.momentum = momentum;
    cfg.epochs = epochs;
    cfg.gamma = gamma;
    cfg.seed = derived_seed(opts, "train_rec", spec.seed);
    cfg.inject_iou = inject_iou;
    cfg.hidden = hidden;
    cfg.pos_scale = pos_scale;

    const recret::RecTrainResult result =
        recret::train_rec_scorer(corpus, store, tasks, embedder, cfg);
    recret::save_scorer(result.scorer, epochs, cfg.seed, opts.scorer);

    json config;
    config["tasks"] = opts.tasks;
    config["epochs"] = epochs;
    config["lr"] = lr;
    config["hidden"] = hidden;
    config["inject_iou"] = inject_iou;
    config["initial_loss"] = result.loss_history.front();
    config["final_loss"] = result.loss_history.back();
    write_manifest("train_rec", config, cfg.seed, now_seconds() - t0, opts.scorer);
    std::cout << "trained scorer: loss " << result.loss_history.front() << " -> "
              << result.loss_history.back() << "\n";
    return 0;
}

int cmd_eval_rec(const CommonOpts& opts) {
    const double t0 = now_seconds();
    require_input(opts.corpus);
    require_input(opts.cache);
    require_input(opts.tasks);
    require_input(opts.scorer);
    require_output(opts.report, "--report");
    const auto spec = corpus_spec_of(opts.corpus);
    const auto corpus = synthworld::generate_corpus(spec);
    const auto embedder = synthworld::make_embedder(spec);
    const auto store = embedstore::load_store(opts.cache);
    const auto tasks = recret::load_rec_tasks(opts.tasks);
    const recret::ToyScorer scorer = recret::load_scorer(opts.scorer);

    std::map<std::string, const synthworld::SceneRecord*> by_id;
    for (const auto& rec : corpus) by_id[rec.image_id] = &rec;
    const recret::BoxPositionEncoding posenc{scorer.feature_dim, scorer.pos_scale};

    recret::reset_scorer_invocation_count();
    std::map<std::string, geometry::ScoredBox> preds;
    std::map<std::string, geometry::BBox> gts;
    double pos_sum = 0.0, neg_sum = 0.0;
    std::size_t pos_n = 0, neg_n = 0, n_pos_tasks = 0, n_neg_tasks = 0;
    int index = 0;
    for (const auto& task : tasks) {
        const auto rit = by_id.find(task.image_id);
        const auto* cached = store.find(task.image_id);
        if (rit == by_id.end() || cached == nullptr)
            throw ConfigError("eval_rec: task image '" + task.image_id + "' unknown");
        // Evaluation candidates come from the cache alone; no gt leaks in.
        const auto cands = recret::assemble_candidates(*rit->second, *cached, {}, 0.5, posenc);
        const recret::RecQuery query{task.query_text,
                                     recret::embed_query(embedder, task.query_terms)};
        const auto scores = recret::score_candidates(scorer, query, cands);
        const std::string id = "task" + std::to_string(index++);
        if (task.is_negative()) {
            ++n_neg_tasks;
            for (const double s : scores.scores) {
                neg_sum += s;
                ++neg_n;
            }
            continue;
        }
        ++n_pos_tasks;
        gts[id] = task.gt_boxes[0];
        const auto decoded = recret::decode_rec(scores, cands, recret::DecodeMode::top1);
        if (!decoded.empty()) preds[id] = decoded[0];
        const auto labels = probe::soft_labels(cands.boxes, task.gt_boxes);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= 0.5) {
                pos_sum += scores.scores[i];
                ++pos_n;
            }
        }
    }
    const std::uint64_t invocations = recret::scorer_invocation_count();

    json out;
    out["top1"] = metrics::top1_accuracy(preds, gts, 0.5);
    out["n_pos_tasks"] = n_pos_tasks;
    out["n_neg_tasks"] = n_neg_tasks;
    out["positive_mean_score"] = pos_n ? pos_sum / pos_n : 0.0;
    out["negative_mean_score"] = neg_n ? neg_sum / neg_n : 0.0;
    out["scorer_invocations"] = invocations;
    out["tasks"] = tasks.size();
    write_json(out, opts.report);

    json config;
    config["tasks"] = opts.tasks;
    config["scorer"] = opts.scorer;
    write_manifest("eval_rec", config, spec.seed, now_seconds() - t0, opts.report);
    std::cout << "top1 " << out["top1"] << " over " << n_pos_tasks << " positive tasks\n";
    return 0;
}

int cmd_bench(const CommonOpts& opts, int n_queries) {
    const double t0 = now_seconds();
    require_input(opts.cache);
    require_output(opts.report, "--report");
    const auto store = embedstore::load_store(opts.cache);

    json out;
    out["n_queries"] = n_queries;
    json sizes = json::array();
    double full_per_query = 0.0;
    std::vector<std::pair<double, double>> points;  // (n_proposals, per-query seconds)

    if (n_queries > 0) {
        CounterRng rng(sub_seed(1, "bench-queries"));
        std::vector<std::vector<float>> queries;
        for (int q = 0; q < n_queries; ++q) {
            std::vector<float> v(static_cast<std::size_t>(store.dim()));
            for (float& x : v) x = static_cast<float>(rng.normal());
            geometry::l2_normalize(v);
            queries.push_back(std::move(v));
        }

        // Prefixes of the store at three sizes: N, N/10, N/100.
        const std::size_t full = store.total_proposals();
        for (const std::size_t target : {full / 100, full / 10, full}) {
            embedstore::EmbeddingStore prefix(store.dim());
            std::size_t count = 0;
            for (const auto& rec : store.records()) {
                if (count >= target) break;
                prefix.add_record(rec);
                count += rec.proposals.size();
            }
            if (prefix.total_proposals() == 0) continue;

            geometry::reset_grid_read_count();
            volatile double sink = 0.0;
            int reps = 0;
            const double start = now_seconds();
            double elapsed = 0.0;
            while (elapsed < 0.05 || reps < n_queries) {
                const auto scored =
                    embedstore::score_query(prefix, queries[reps % queries.size()]);
                sink = sink + (scored[0].scores.empty() ? 0.0 : scored[0].scores[0]);
                ++reps;
                elapsed = now_seconds() - start;
            }
            const double per_query = elapsed / reps;
            json entry;
            entry["n_proposals"] = prefix.total_proposals();
            entry["per_query_seconds"] = per_query;
            entry["grid_reads"] = geometry::grid_read_count();
            sizes.push_back(entry);
            points.emplace_back(static_cast<double>(prefix.total_proposals()), per_query);
            if (target == full) full_per_query = per_query;
        }
    }
    out["cached"] = std::move(sizes);

    // Least-squares line through (n, t); r2 close to 1 means linear scaling.
    double r2 = 0.0;
    if (points.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const auto& [x, y] : points) {
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double n = static_cast<double>(points.size());
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        const double intercept = (sy - slope * sx) / n;
        double ss_res = 0, ss_tot = 0;
        for (const auto& [x, y] : points) {
            ss_res += (y - (slope * x + intercept)) * (y - (slope * x + intercept));
            ss_tot += (y - sy / n) * (y - sy / n);
        }
        r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
        out["linear_fit_r2"] = r2;
        out["linear_fit_slope"] = slope;
    }

    // Re-extraction baseline: recompute every pooled embedding from the
    // grids for each query, then dot. Requires the corpus.
    if (n_queries > 0 && !opts.corpus.empty()) {
        const auto corpus = corpus_with_grids(opts.corpus);
        std::map<std::string, const synthworld::SceneRecord*> by_id;
        for (const auto& rec : corpus) by_id[rec.image_id] = &rec;
        CounterRng rng(sub_seed(2, "bench-baseline"));
        std::vector<float> query(static_cast<std::size_t>(store.dim()));
        for (float& x : query) x = static_cast<float>(rng.normal());
        geometry::l2_normalize(query);

        const int baseline_queries = std::min(n_queries, 3);
        volatile double sink = 0.0;
        const double start = now_seconds();
        for (int q = 0; q < baseline_queries; ++q) {
            for (const auto& rec : store.records()) {
                const auto* scene = by_id.at(rec.image_id);
                for (const auto& p : rec.proposals) {
                    std::vector<float> emb = geometry::pool_region_embedding(
                        scene->grids, p.box, scene->extent);
                    geometry::l2_normalize(emb);
                    sink = sink + geometry::dot_f64(query, emb);
                }
            }
        }
        const double per_query = (now_seconds() - start) / std::max(baseline_queries, 1);
        json baseline;
        baseline["n_queries"] = baseline_queries;
        baseline["per_query_seconds"] = per_query;
        out["baseline"] = std::move(baseline);
        if (full_per_query > 0.0) out["speedup_ratio"] = per_query / full_per_query;
    }

    write_json(out, opts.report);
    json config;
    config["cache"] = opts.cache;
    config["queries"] = n_queries;
    write_manifest("bench", config, 0, now_seconds() - t0, opts.report);
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cached object-embedding retrieval engine"};
    app.require_subcommand(1);

    CommonOpts opts;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", opts.seed, "root RNG seed")->each([&](const std::string&) {
            opts.seed_set = true;
        });
        sub->add_option("--dim", opts.dim, "embedding dimensionality");
        sub->add_option("--corpus", opts.corpus, "corpus annotation JSONL path");
        sub->add_option("--cache", opts.cache, "embedding cache path");
        sub->add_option("--probe", opts.probe, "objectness probe JSON path");
        sub->add_option("--scorer", opts.scorer, "REC scorer JSON path");
        sub->add_option("--k", opts.k, "proposal budget");
        sub->add_option("--threshold", opts.threshold, "score threshold");
        sub->add_option("--policy", opts.policy, "label policy: uniform_all|last_two")
            ->check(CLI::IsMember({"uniform_all", "last_two"}));
        sub->add_flag("--federated", opts.federated, "report recall only");
        sub->add_option("--report", opts.report, "report JSON output path");
        sub->add_option("--queries", opts.queries, "comma-separated concept names");
        sub->add_option("--tasks", opts.tasks, "REC task JSONL path");
    };

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
    int images = 50, roots = 6, children = 2, leaves = 1;
    int min_objects = 2, max_objects = 4;
    double noise = 0.0, extent = 64.0, min_size = 8.0, max_size = 14.0;
    double min_aspect = 0.8, max_aspect = 1.25;
    std::string grids_csv = "32,16";
    add_common(gen);
    gen->add_option("--images", images, "number of images");
    gen->add_option("--concepts", roots, "number of root concepts");
    gen->add_option("--children", children, "children per root");
    gen->add_option("--leaves", leaves, "leaves per child");
    gen->add_option("--min-objects", min_objects);
    gen->add_option("--max-objects", max_objects);
    gen->add_option("--noise", noise, "embedding noise sigma");
    gen->add_option("--extent", extent, "square scene extent");
    gen->add_option("--grids", grids_csv, "comma-separated grid sizes, finest first");
    gen->add_option("--min-size", min_size);
    gen->add_option("--max-size", max_size);
    gen->add_option("--min-aspect", min_aspect);
    gen->add_option("--max-aspect", max_aspect);

    // train_probe
    auto* train_probe = app.add_subcommand("train_probe", "train the objectness probe");
    int probe_epochs = 150;
    double probe_lr = 0.5, probe_momentum = 0.9, probe_gamma = 2.0;
    int probe_stride = 2;
    std::string scales_csv = "8,11,14.5";
    add_common(train_probe);
    train_probe->add_option("--epochs", probe_epochs);
    train_probe->add_option("--lr", probe_lr);
    train_probe->add_option("--momentum", probe_momentum);
    train_probe->add_option("--gamma", probe_gamma);
    train_probe->add_option("--stride", probe_stride);
    train_probe->add_option("--scales", scales_csv);

    // build_cache
    auto* build_cache = app.add_subcommand("build_cache", "build the proposal embedding cache");
    double cache_nms = 0.5;
    int cache_stride = 1;
    std::string cache_scales = "8,11,14.5";
    add_common(build_cache);
    build_cache->add_option("--nms-iou", cache_nms);
    build_cache->add_option("--stride", cache_stride);
    build_cache->add_option("--scales", cache_scales);

    // query
    auto* query = app.add_subcommand("query", "retrieve images for concept queries");
    add_common(query);

    // eval_retrieval
    auto* eval_retrieval =
        app.add_subcommand("eval_retrieval", "score retrieval against corpus ground truth");
    add_common(eval_retrieval);

    // eval_recall
    auto* eval_recall = app.add_subcommand("eval_recall", "AR@k of cached proposals");
    add_common(eval_recall);

    // eval_detect
    auto* eval_detect = app.add_subcommand("eval_detect", "AP of dot-product classification");
    double det_iou = 0.5, det_merge_nms = 0.6;
    add_common(eval_detect);
    eval_detect->add_option("--iou-thresh", det_iou, "AP matching IoU");
    eval_detect->add_option("--merge-nms", det_merge_nms, "per-class merge NMS IoU");

    // gen_rec_tasks
    auto* gen_tasks = app.add_subcommand("gen_rec_tasks", "synthesize REC tasks");
    int n_tasks = 500, first_image = 0, last_image = -1;
    double negative_fraction = 0.25, side_fraction = 0.5;
    std::string granularity = "leaf";
    add_common(gen_tasks);
    gen_tasks->add_option("--n-tasks", n_tasks);
    gen_tasks->add_option("--negative-fraction", negative_fraction);
    gen_tasks->add_option("--side-fraction", side_fraction);
    gen_tasks->add_option("--granularity", granularity)
        ->check(CLI::IsMember({"leaf", "sampled"}));
    gen_tasks->add_option("--first-image", first_image);
    gen_tasks->add_option("--last-image", last_image);

    // train_rec
    auto* train_rec = app.add_subcommand("train_rec", "train the REC scorer");
    int rec_epochs = 300, rec_hidden = 32;
    double rec_lr = 0.3, rec_momentum = 0.9, rec_gamma = 2.0;
    double inject_iou = 0.5, pos_scale = 0.25;
    add_common(train_rec);
    train_rec->add_option("--epochs", rec_epochs);
    train_rec->add_option("--lr", rec_lr);
    train_rec->add_option("--momentum", rec_momentum);
    train_rec->add_option("--gamma", rec_gamma);
    train_rec->add_option("--hidden", rec_hidden);
    train_rec->add_option("--inject-iou", inject_iou);
    train_rec->add_option("--pos-scale", pos_scale);

    // eval_rec
    auto* eval_rec = app.add_subcommand("eval_rec", "top-1 REC accuracy over tasks");
    add_common(eval_rec);

    // bench
    auto* bench = app.add_subcommand("bench", "cached vs re-extraction query timing");
    int bench_queries = 20;
    add_common(bench);
    bench->add_option("--queries-count", bench_queries, "number of timed queries");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed())
            return cmd_gen(opts, images, roots, children, leaves, min_objects, max_objects,
                           noise, extent, grids_csv, min_size, max_size, min_aspect,
                           max_aspect);
        if (train_probe->parsed())
            return cmd_train_probe(opts, probe_epochs, probe_lr, probe_momentum, probe_gamma,
                                   probe_stride, scales_csv);
        if (build_cache->parsed()) return cmd_build_cache(opts, cache_nms, cache_stride,
                                                          cache_scales);
        if (query->parsed()) return cmd_query(opts);
        if (eval_retrieval->parsed()) return cmd_eval_retrieval(opts);
        if (eval_recall->parsed()) return cmd_eval_recall(opts);
        if (eval_detect->parsed()) return cmd_eval_detect(opts, det_iou, det_merge_nms);
        if (gen_tasks->parsed())
            return cmd_gen_rec_tasks(opts, n_tasks, negative_fraction, side_fraction,
                                     granularity, first_image, last_image);
        if (train_rec->parsed())
            return cmd_train_rec(opts, rec_epochs, rec_lr, rec_momentum, rec_gamma, rec_hidden,
                                 inject_iou, pos_scale);
        if (eval_rec->parsed()) return cmd_eval_rec(opts);
        if (bench->parsed()) return cmd_bench(opts, bench_queries);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        const std::string what = e.what();
        return what.find("[missing]") != std::string::npos ? kExitMissingInput : kExitFormat;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
