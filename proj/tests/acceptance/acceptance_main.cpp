// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. argv[1] points at the objret CLI binary (used by the criteria that
// exercise the command-line surface); argv[2] optionally overrides the work
// directory.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

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
#include "oracles.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace objret;

namespace {

std::string g_cli = "objret";
fs::path g_work;

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw CheckFailure(msg);
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

int run_cli(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " > /dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

json load_json(const fs::path& p) {
    std::ifstream in(p);
    require(static_cast<bool>(in), "cannot open " + p.string());
    return json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

geometry::BBox random_int_box(CounterRng& rng, int lo, int hi) {
    double x1 = static_cast<double>(rng.uniform_int(lo, hi));
    double x2 = static_cast<double>(rng.uniform_int(lo, hi));
    double y1 = static_cast<double>(rng.uniform_int(lo, hi));
    double y2 = static_cast<double>(rng.uniform_int(lo, hi));
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    return {x1, y1, x2, y2};
}

geometry::BBox random_box(CounterRng& rng, double lo, double hi) {
    double x1 = rng.uniform(lo, hi), x2 = rng.uniform(lo, hi);
    double y1 = rng.uniform(lo, hi), y2 = rng.uniform(lo, hi);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    return {x1, y1, x2, y2};
}

// ---------------------------------------------------------------- criteria

// Geometry kernels vs brute-force oracles, 1000 randomized instances each.
void criterion1() {
    const double t0 = now_seconds();
    CounterRng rng(101);
    for (int t = 0; t < 1000; ++t) {
        const geometry::BBox a = random_int_box(rng, 0, 24);
        const geometry::BBox b = random_int_box(rng, 0, 24);
        require(geometry::iou(a, b) == oracles::raster_iou(a, b),
                "iou mismatch vs rasterized overlap oracle");
    }
    for (int t = 0; t < 1000; ++t) {
        const int n = static_cast<int>(rng.uniform_int(0, 50));
        std::vector<geometry::ScoredBox> boxes;
        for (int i = 0; i < n; ++i) {
            geometry::ScoredBox sb{random_box(rng, 0, 16), rng.uniform()};
            sb.score = std::floor(sb.score * 8) / 8;  // force ties
            boxes.push_back(sb);
        }
        const double thr = rng.uniform(0, 1);
        require(geometry::nms(boxes, thr) == oracles::brute_nms(boxes, thr),
                "nms mismatch vs quadratic suppression oracle");
    }
    for (int t = 0; t < 1000; ++t) {
        geometry::FeatureGrid g(14, 14, 2);
        for (int d = 0; d < 2; ++d) {
            const double a1 = rng.uniform(-1, 1), a2 = rng.uniform(-1, 1);
            const double fx1 = rng.uniform(0, 0.025), fy1 = rng.uniform(0, 0.025);
            const double fx2 = rng.uniform(0, 0.025), fy2 = rng.uniform(0, 0.025);
            const double p1 = rng.uniform(0, 6.28), p2 = rng.uniform(0, 6.28);
            for (int i = 0; i < 14; ++i)
                for (int j = 0; j < 14; ++j)
                    g.at(i, j, d) = a1 * std::sin(fy1 * i + fx1 * j + p1) +
                                    a2 * std::cos(fy2 * i + fx2 * j + p2);
        }
        const double x1 = rng.uniform(1, 9), y1 = rng.uniform(1, 9);
        const geometry::BBox box{x1, y1, x1 + rng.uniform(0.5, 3), y1 + rng.uniform(0.5, 3)};
        const geometry::FeatureGrid pooled = geometry::roi_pool(g, box, 2, 2);
        const std::vector<double> oracle = oracles::supersampled_roi_pool(g, box, 2, 2);
        for (std::size_t i = 0; i < oracle.size(); ++i)
            require(std::abs(pooled.values[i] - oracle[i]) < 1e-3,
                    "roi_pool drifted from the supersampled oracle");
    }
    const double elapsed = now_seconds() - t0;
    require(elapsed < 30.0, "geometry oracle run exceeded 30 s");
}

// Loss closed forms and analytic-vs-finite-difference gradients.
void criterion2() {
    const double v = probe::soft_focal_loss(0.5, 1.0, 2.0);
    require(std::abs(v - 0.25 * std::log(2.0)) < 1e-12, "focal loss closed form (gamma 2)");
    require(std::abs(v - 0.173287) < 1e-6, "focal loss printed value 0.173287");
    require(std::abs(probe::soft_focal_loss(0.5, 0.0, 0.0) - std::log(2.0)) < 1e-12,
            "gamma 0 must reduce to plain cross-entropy");
    require(probe::soft_focal_loss(0.37, 0.37, 2.0) == 0.0, "p == y must be a true zero");

    CounterRng rng(202);
    probe::ProbeDataset data;
    data.dim = 12;
    for (int i = 0; i < 64; ++i) {
        std::vector<float> e(12);
        for (float& x : e) x = static_cast<float>(rng.normal());
        geometry::l2_normalize(e);
        data.embeddings.push_back(std::move(e));
        data.labels.push_back(rng.uniform());
    }
    for (int point = 0; point < 10; ++point) {
        std::vector<double> params(14);
        for (double& p : params) p = 0.8 * rng.normal();
        std::vector<double> grad(params.size());
        probe_loss_and_gradient(data, params, 2.0, grad);
        std::vector<std::size_t> coords(params.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        const double err = oracles::fd_relative_error(
            [&](std::span<const double> p) {
                std::vector<double> scratch(p.size());
                return probe_loss_and_gradient(data, p, 2.0, scratch);
            },
            params, grad, coords, 1e-5);
        require(err < 1e-5, "probe gradient relative error >= 1e-5");
    }

    const int input_dim = 2 * 8 + 5, hidden = 6, rows_n = 24;
    std::vector<double> rows(static_cast<std::size_t>(rows_n) * input_dim);
    for (double& x : rows) x = rng.normal();
    std::vector<double> labels(rows_n);
    for (double& y : labels) y = rng.uniform();
    recret::ToyScorer scorer = recret::init_scorer(8, hidden, 0.05, 11);
    for (int point = 0; point < 10; ++point) {
        std::vector<double> params = recret::scorer_params(scorer);
        for (double& p : params) p += 0.3 * rng.normal();
        std::vector<double> grad(params.size());
        recret::rec_loss_and_gradient(rows, labels, input_dim, hidden, 2.0, params, grad);
        std::vector<std::size_t> coords;
        for (int c = 0; c < 30; ++c)
            coords.push_back(static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(params.size()) - 1)));
        const double err = oracles::fd_relative_error(
            [&](std::span<const double> p) {
                std::vector<double> scratch(p.size());
                return recret::rec_loss_and_gradient(rows, labels, input_dim, hidden, 2.0, p,
                                                     scratch);
            },
            params, grad, coords, 1e-5);
        require(err < 1e-4, "toy scorer gradient relative error >= 1e-4");
    }
}

synthworld::CorpusSpec probe_world(std::uint64_t seed, int n_images) {
    synthworld::CorpusSpec spec;
    spec.n_images = n_images;
    spec.concepts = synthworld::make_default_taxonomy(4, 2, 1);
    spec.min_objects = 2;
    spec.max_objects = 4;
    spec.dim = 32;
    spec.seed = seed;
    return spec;
}

// The linear-probing claim: one trained objectness embedding reaches high
// proposal recall; monotone in the proposal budget; five seeds.
void criterion3() {
    const double t0 = now_seconds();
    for (std::uint64_t seed = 0; seed <= 4; ++seed) {
        const auto spec = probe_world(seed, 200);
        const auto corpus = synthworld::generate_corpus(spec);
        const std::vector<synthworld::SceneRecord> train(corpus.begin(), corpus.begin() + 160);
        probe::AnchorConfig anchors;
        anchors.stride = 2;
        const probe::ProbeDataset data = probe::build_probe_dataset(train, anchors);
        probe::ProbeTrainConfig cfg;
        cfg.seed = seed;
        const probe::ProbeTrainResult trained = probe::train_probe(data, cfg);
        require(trained.probe.scale > 0.0, "trained probe must keep scale > 0");
        require(trained.loss_history.back() < trained.loss_history.front(),
                "final loss must undercut the initial loss");

        std::map<std::string, std::vector<geometry::ScoredBox>> proposals;
        std::map<std::string, std::vector<geometry::BBox>> gts;
        const std::vector<double> scales{8.0, 11.0, 14.5};
        for (const auto& rec : corpus) {
            proposals[rec.image_id] =
                probe::propose(rec.grids, rec.extent, trained.probe, 1, scales, 0.5, 300);
            for (const auto& obj : rec.objects) gts[rec.image_id].push_back(obj.box);
        }
        const auto at100 = metrics::average_recall(proposals, gts, 100);
        const auto at300 = metrics::average_recall(proposals, gts, 300);
        std::ostringstream os;
        os << "seed " << seed << ": ar50@100 = " << at100.ar50;
        require(at100.ar50 >= 0.99, os.str() + " < 0.99");
        require(at300.ar50 >= at100.ar50, "ar50@300 must not fall below ar50@100");
        require(at300.ar_avg >= at100.ar_avg, "ar@300 must not fall below ar@100");
    }
    const double elapsed = now_seconds() - t0;
    require(elapsed < 120.0, "probe recall runs exceeded 2 min");
}

// AP equals the brute-force PR-integration oracle; worked values.
void criterion4() {
    CounterRng rng(404);
    for (int t = 0; t < 500; ++t) {
        std::vector<metrics::Detection> dets;
        std::vector<metrics::GtObject> gts;
        const int n_images = static_cast<int>(rng.uniform_int(1, 6));
        const int n_classes = static_cast<int>(rng.uniform_int(1, 3));
        for (int i = 0; i < n_images; ++i) {
            const std::string image = "img" + std::to_string(i);
            const int n_gt = static_cast<int>(rng.uniform_int(0, 4));
            for (int g = 0; g < n_gt; ++g) {
                const std::string cls = "c" + std::to_string(rng.uniform_int(0, n_classes - 1));
                const geometry::BBox box = random_box(rng, 0, 14);
                gts.push_back({image, cls, box});
                if (rng.uniform() < 0.8) {
                    const double dx = rng.uniform(-1, 1), dy = rng.uniform(-1, 1);
                    dets.push_back({image, cls,
                                    {box.x1 + dx, box.y1 + dy, box.x2 + dx, box.y2 + dy},
                                    rng.uniform()});
                }
            }
            const int n_noise = static_cast<int>(rng.uniform_int(0, 5));
            for (int f = 0; f < n_noise; ++f)
                dets.push_back({image, "c" + std::to_string(rng.uniform_int(0, n_classes - 1)),
                                random_box(rng, 0, 14), rng.uniform()});
        }
        const auto got = metrics::average_precision(dets, gts, 0.5);
        std::map<std::string, std::vector<metrics::Detection>> dets_by_class;
        std::map<std::string, std::vector<metrics::GtObject>> gts_by_class;
        for (const auto& d : dets) dets_by_class[d.cls].push_back(d);
        for (const auto& g : gts) gts_by_class[g.cls].push_back(g);
        for (const auto& [cls, class_gts] : gts_by_class) {
            const double oracle =
                oracles::oracle_average_precision_class(dets_by_class[cls], class_gts);
            require(std::abs(got.per_class.at(cls) - oracle) < 1e-12,
                    "AP mismatch vs PR-integration oracle");
        }
    }

    std::vector<metrics::GtObject> gts;
    std::vector<metrics::Detection> perfect;
    for (int i = 0; i < 5; ++i) {
        const geometry::BBox box{i * 10.0, 0, i * 10.0 + 6, 6};
        gts.push_back({"img", "cat", box});
        perfect.push_back({"img", "cat", box, 0.9 - 0.1 * i});
    }
    require(metrics::average_precision(perfect, gts, 0.5).mean == 1.0,
            "perfect predictions must give AP = 1.0");

    std::vector<metrics::GtObject> two{{"img", "cat", {0, 0, 10, 10}},
                                       {"img", "cat", {20, 0, 30, 10}}};
    std::vector<metrics::Detection> ranked{{"img", "cat", {0, 0, 10, 10}, 0.9},
                                           {"img", "cat", {50, 50, 60, 60}, 0.8},
                                           {"img", "cat", {20, 0, 30, 10}, 0.7}};
    const double ap = metrics::average_precision(ranked, two, 0.5).mean;
    const double expected = (51.0 * 1.0 + 50.0 * (2.0 / 3.0)) / 101.0;
    require(std::abs(ap - expected) < 1e-9, "worked 2-gt example must yield 0.83498...");
}

synthworld::CorpusSpec retrieval_world(double noise) {
    synthworld::CorpusSpec spec;
    spec.n_images = 60;
    spec.concepts = synthworld::make_default_taxonomy(4, 2, 1);
    spec.min_objects = 2;
    spec.max_objects = 4;
    spec.dim = 256;
    spec.seed = 5;
    spec.noise_sigma = noise;
    spec.grid_sizes = {16, 8};
    return spec;
}

retrieval::RetrievalReport run_retrieval(const synthworld::CorpusSpec& spec, double threshold) {
    const auto corpus = synthworld::generate_corpus(spec);
    const auto embedder = synthworld::make_embedder(spec);
    const auto oracle = oracles::make_oracle_probe(embedder, spec.concepts.leaves());
    embedstore::BuildConfig bc;
    bc.k = 40;
    const auto store = embedstore::build_store(corpus, oracle, bc);

    std::map<std::string, retrieval::RetrievalResult> results;
    std::map<std::string, std::set<std::string>> gt;
    for (const std::string& leaf : spec.concepts.leaves()) {
        retrieval::QuerySpec q;
        q.concept_id = leaf;
        q.embedding = embedder.embed(leaf);
        q.threshold = threshold;
        results[leaf] = retrieval::retrieve(store, q);
        gt[leaf] = {};
        for (const auto& rec : corpus)
            for (const auto& obj : rec.objects)
                if (obj.label_path.back() == leaf) gt[leaf].insert(rec.image_id);
    }
    return retrieval::evaluate_retrieval(results, gt, false);
}

// Object-retrieval protocol at the default 0.200 threshold.
void criterion5() {
    const auto clean = run_retrieval(retrieval_world(0.0), 0.2);
    require(*clean.macro.f1 == 1.0, "noiseless macro F1 must be exactly 1.0 at threshold 0.2");

    const auto noisy = run_retrieval(retrieval_world(0.3), 0.2);
    std::ostringstream os;
    os << "noisy macro F1 = " << *noisy.macro.f1;
    require(*noisy.macro.f1 >= 0.8, os.str() + " < 0.8");

    double prev_recall = 2.0;
    for (const double thr : {-1.0, 0.0, 0.2, 0.5, 0.9}) {
        const auto report = run_retrieval(retrieval_world(0.3), thr);
        require(report.macro.recall <= prev_recall + 1e-12,
                "recall must be non-increasing in the threshold");
        prev_recall = report.macro.recall;
    }
}

// Federated rule through the CLI flag: recall-only reports.
void criterion6() {
    const fs::path dir = g_work / "federated";
    fs::create_directories(dir);
    const std::string corpus = (dir / "corpus.jsonl").string();
    require(run_cli("gen --seed 21 --dim 64 --images 16 --concepts 3 --corpus " + corpus) == 0,
            "gen failed");
    require(run_cli("train_probe --corpus " + corpus + " --probe " + (dir / "probe.json").string() +
                    " --epochs 120") == 0,
            "train_probe failed");
    require(run_cli("build_cache --corpus " + corpus + " --probe " +
                    (dir / "probe.json").string() + " --cache " + (dir / "cache.bin").string() +
                    " --k 40") == 0,
            "build_cache failed");
    require(run_cli("eval_retrieval --corpus " + corpus + " --cache " +
                    (dir / "cache.bin").string() + " --threshold 0.2 --federated --report " +
                    (dir / "federated.json").string()) == 0,
            "eval_retrieval --federated failed");
    const json report = load_json(dir / "federated.json");
    require(report.at("federated") == true, "report must be marked federated");
    require(!report.at("macro").contains("p") && !report.at("macro").contains("f1"),
            "federated macro must carry recall only");
    require(report.at("macro").contains("r"), "federated macro must carry recall");
    for (const auto& [cls, scores] : report.at("per_class").items()) {
        require(!scores.contains("p") && !scores.contains("f1"),
                "federated per-class must carry recall only: " + cls);
        require(scores.contains("r"), "federated per-class must carry recall: " + cls);
    }
    const fs::path full_path = dir / "full.json";
    require(run_cli("eval_retrieval --corpus " + corpus + " --cache " +
                    (dir / "cache.bin").string() + " --threshold 0.2 --report " +
                    full_path.string()) == 0,
            "eval_retrieval failed");
    const json full = load_json(full_path);
    require(full.at("macro").contains("p") && full.at("macro").contains("f1"),
            "non-federated report must carry precision and F1");
}

struct RecWorld {
    synthworld::CorpusSpec spec;
    std::vector<synthworld::SceneRecord> corpus;
    embedstore::EmbeddingStore store;
};

RecWorld rec_world() {
    synthworld::CorpusSpec spec;
    spec.n_images = 60;
    spec.concepts = synthworld::make_default_taxonomy(4, 2, 1);
    spec.min_objects = 2;
    spec.max_objects = 4;
    spec.dim = 64;
    spec.seed = 47;
    spec.min_object_size = 12.0;
    spec.max_object_size = 12.0;
    spec.min_aspect = 1.0;
    spec.max_aspect = 1.0;
    spec.grid_sizes = {32};
    auto corpus = synthworld::generate_corpus(spec);
    const auto embedder = synthworld::make_embedder(spec);
    const auto oracle = oracles::make_oracle_probe(embedder, spec.concepts.leaves());
    embedstore::BuildConfig bc;
    bc.k = 40;
    bc.nms_iou = 0.4;
    bc.scales = {13.0};
    auto store = embedstore::build_store(corpus, oracle, bc);
    return {std::move(spec), std::move(corpus), std::move(store)};
}

// REC retrieval contract: exact permutation invariance, 500-task training,
// held-out top-1 and the negative-query score gap.
void criterion7() {
    const double t0 = now_seconds();
    RecWorld world = rec_world();
    const auto embedder = synthworld::make_embedder(world.spec);

    recret::TaskGenConfig gen;
    gen.n_tasks = 500;
    gen.seed = 9;
    gen.first_image = 0;
    gen.last_image = 45;
    const auto train_tasks =
        recret::make_rec_tasks(world.corpus, world.store, world.spec.concepts, embedder, gen);
    require(train_tasks.size() == 500, "expected 500 training tasks");
    bool has_negative = false;
    for (const auto& t : train_tasks) has_negative = has_negative || t.is_negative();
    require(has_negative, "training tasks must include hard negatives");

    recret::RecTrainConfig cfg;
    cfg.seed = 13;
    cfg.epochs = 1500;
    cfg.lr = 1.0;
    cfg.hidden = 48;
    const recret::RecTrainResult trained =
        recret::train_rec_scorer(world.corpus, world.store, train_tasks, embedder, cfg);

    recret::TaskGenConfig heldout_gen;
    heldout_gen.n_tasks = 120;
    heldout_gen.seed = 10;
    heldout_gen.first_image = 45;
    heldout_gen.last_image = 60;
    const auto heldout = recret::make_rec_tasks(world.corpus, world.store, world.spec.concepts,
                                                embedder, heldout_gen);

    const recret::BoxPositionEncoding posenc{world.spec.dim, cfg.pos_scale};
    std::map<std::string, const synthworld::SceneRecord*> by_id;
    for (const auto& rec : world.corpus) by_id[rec.image_id] = &rec;

    std::map<std::string, geometry::ScoredBox> preds;
    std::map<std::string, geometry::BBox> gts;
    double pos_sum = 0.0, neg_sum = 0.0;
    std::size_t pos_n = 0, neg_n = 0;
    int index = 0;
    bool permutation_checked = false;
    for (const auto& task : heldout) {
        const auto cands = recret::assemble_candidates(*by_id.at(task.image_id),
                                                       *world.store.find(task.image_id), {}, 0.5,
                                                       posenc);
        const recret::RecQuery query{task.query_text,
                                     recret::embed_query(embedder, task.query_terms)};
        const auto scores = recret::score_candidates(trained.scorer, query, cands);
        if (!permutation_checked && cands.boxes.size() >= 3) {
            recret::CandidateList rev = cands;
            std::reverse(rev.boxes.begin(), rev.boxes.end());
            std::reverse(rev.object_features.begin(), rev.object_features.end());
            const auto rs = recret::score_candidates(trained.scorer, query, rev);
            std::vector<double> unperm(rs.scores.rbegin(), rs.scores.rend());
            require(unperm == scores.scores, "scores must be exactly permutation invariant");
            permutation_checked = true;
        }
        const std::string id = "task" + std::to_string(index++);
        if (task.is_negative()) {
            for (const double s : scores.scores) {
                neg_sum += s;
                ++neg_n;
            }
            continue;
        }
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
    require(permutation_checked, "permutation invariance was never exercised");
    require(pos_n > 0 && neg_n > 0, "held-out tasks must include positives and negatives");

    const double top1 = metrics::top1_accuracy(preds, gts, 0.5);
    std::ostringstream os;
    os << "held-out top-1 = " << top1;
    require(top1 >= 0.95, os.str() + " < 0.95");
    require(neg_sum / neg_n < pos_sum / pos_n,
            "negative-query mean score must undercut positive-match mean score");

    const double elapsed = now_seconds() - t0;
    require(elapsed < 300.0, "REC training and evaluation exceeded 5 min");
}

// Scorer invocation contract measured in isolation: exactly one pass per
// (image, query) regardless of candidate count.
void criterion7_invocations() {
    RecWorld world = rec_world();
    const auto embedder = synthworld::make_embedder(world.spec);
    const recret::BoxPositionEncoding posenc{world.spec.dim, 0.05};
    const recret::ToyScorer scorer = recret::init_scorer(world.spec.dim, 16, 0.05, 3);
    recret::reset_scorer_invocation_count();
    std::size_t queries = 0;
    for (const auto& rec : world.corpus) {
        const auto cands =
            recret::assemble_candidates(rec, *world.store.find(rec.image_id), {}, 0.5, posenc);
        if (cands.boxes.empty()) continue;
        for (const std::string& leaf : world.spec.concepts.leaves()) {
            const recret::RecQuery q{leaf, embedder.embed(leaf)};
            recret::score_candidates(scorer, q, cands);
            ++queries;
        }
    }
    require(recret::scorer_invocation_count() == queries,
            "scorer invocations per (image, query) must equal 1");
}

// GT injection guarantee over every training batch.
void criterion8() {
    RecWorld world = rec_world();
    const auto embedder = synthworld::make_embedder(world.spec);
    recret::TaskGenConfig gen;
    gen.n_tasks = 500;
    gen.seed = 9;
    gen.first_image = 0;
    gen.last_image = 45;
    const auto tasks =
        recret::make_rec_tasks(world.corpus, world.store, world.spec.concepts, embedder, gen);
    const recret::BoxPositionEncoding posenc{world.spec.dim, 0.05};
    std::map<std::string, const synthworld::SceneRecord*> by_id;
    for (const auto& rec : world.corpus) by_id[rec.image_id] = &rec;

    std::size_t checked = 0;
    for (const auto& task : tasks) {
        // Exhaustive check, including a gt nowhere near any cached proposal.
        std::vector<geometry::BBox> gts = task.gt_boxes;
        gts.push_back({1.0, 1.0, 3.5, 3.5});
        const auto cands = recret::assemble_candidates(*by_id.at(task.image_id),
                                                       *world.store.find(task.image_id), gts,
                                                       0.5, posenc);
        for (const auto& gt : gts) {
            double best = 0.0;
            for (const auto& box : cands.boxes) best = std::max(best, geometry::iou(gt, box));
            require(best >= 0.5, "a gt lacks a candidate at IoU >= 0.5 after injection");
            ++checked;
        }
    }
    require(checked > 500, "injection check must cover every training batch");
}

// Caching thesis: zero grid reads on the cached path, linear per-query
// scaling, and a >= 10x gap to re-extraction at N = 1e5 proposals.
void criterion9() {
    const fs::path dir = g_work / "bench";
    fs::create_directories(dir);
    const std::string small = (dir / "probe_corpus.jsonl").string();
    const std::string big = (dir / "corpus.jsonl").string();
    const std::string probe = (dir / "probe.json").string();
    const std::string cache = (dir / "cache.bin").string();
    const std::string report_path = (dir / "bench.json").string();

    // Same world (seed, dim, taxonomy); the probe trains on a 40-image
    // prefix, the cache covers all 1250 images at k = 80 -> 1e5 proposals.
    const std::string shared = "--seed 31 --dim 64 --concepts 4 --grids 16,8 ";
    require(run_cli("gen " + shared + "--images 40 --corpus " + small) == 0, "gen (small) failed");
    require(run_cli("gen " + shared + "--images 1250 --corpus " + big) == 0, "gen (big) failed");
    require(run_cli("train_probe --corpus " + small + " --probe " + probe + " --epochs 120") == 0,
            "train_probe failed");
    require(run_cli("build_cache --corpus " + big + " --probe " + probe + " --cache " + cache +
                    " --k 80 --stride 1") == 0,
            "build_cache failed");
    require(run_cli("bench --cache " + cache + " --corpus " + big +
                    " --queries-count 20 --report " + report_path) == 0,
            "bench failed");

    const json report = load_json(report_path);
    const auto& sizes = report.at("cached");
    require(sizes.size() == 3, "bench must time three store sizes");
    const std::size_t full_n = sizes.back().at("n_proposals").get<std::size_t>();
    require(full_n >= 100000, "reference cache must hold at least 1e5 proposals");
    for (const auto& entry : sizes)
        require(entry.at("grid_reads").get<std::uint64_t>() == 0,
                "cached scoring must never read feature grids");
    const double r2 = report.at("linear_fit_r2").get<double>();
    std::ostringstream os;
    os << "linear fit R^2 = " << r2;
    require(r2 >= 0.95, os.str() + " < 0.95");
    const double ratio = report.at("speedup_ratio").get<double>();
    std::ostringstream os2;
    os2 << "re-extraction / cached per-query ratio = " << ratio;
    require(ratio >= 10.0, os2.str() + " < 10x");
}

// Byte-identical artifacts for identical seeds, manifests excluded.
void criterion10() {
    const auto run_pipeline = [&](const fs::path& dir) {
        fs::create_directories(dir);
        const std::string corpus = (dir / "corpus.jsonl").string();
        const std::string probe = (dir / "probe.json").string();
        const std::string cache = (dir / "cache.bin").string();
        const std::string tasks = (dir / "tasks.jsonl").string();
        const std::string scorer = (dir / "scorer.json").string();
        require(run_cli("gen --seed 77 --dim 64 --images 20 --concepts 3 --min-size 12 "
                        "--max-size 12 --min-aspect 1 --max-aspect 1 --grids 32 --corpus " +
                        corpus) == 0,
                "gen failed");
        require(run_cli("train_probe --corpus " + corpus + " --probe " + probe +
                        " --epochs 80") == 0,
                "train_probe failed");
        require(run_cli("build_cache --corpus " + corpus + " --probe " + probe + " --cache " +
                        cache + " --k 30 --nms-iou 0.4 --scales 13") == 0,
                "build_cache failed");
        require(run_cli("eval_recall --corpus " + corpus + " --cache " + cache +
                        " --k 30 --report " + (dir / "recall.json").string()) == 0,
                "eval_recall failed");
        require(run_cli("eval_retrieval --corpus " + corpus + " --cache " + cache +
                        " --threshold 0.2 --report " + (dir / "retrieval.json").string()) == 0,
                "eval_retrieval failed");
        require(run_cli("eval_detect --corpus " + corpus + " --cache " + cache +
                        " --threshold 0.2 --report " + (dir / "detect.json").string()) == 0,
                "eval_detect failed");
        require(run_cli("query --corpus " + corpus + " --cache " + cache +
                        " --threshold 0.5 --report " + (dir / "query.json").string()) == 0,
                "query failed");
        require(run_cli("gen_rec_tasks --corpus " + corpus + " --cache " + cache + " --tasks " +
                        tasks + " --n-tasks 60") == 0,
                "gen_rec_tasks failed");
        require(run_cli("train_rec --corpus " + corpus + " --cache " + cache + " --tasks " +
                        tasks + " --scorer " + scorer + " --epochs 60 --hidden 16") == 0,
                "train_rec failed");
        require(run_cli("eval_rec --corpus " + corpus + " --cache " + cache + " --tasks " +
                        tasks + " --scorer " + scorer + " --report " +
                        (dir / "rec.json").string()) == 0,
                "eval_rec failed");
    };
    const fs::path a = g_work / "repro_a";
    const fs::path b = g_work / "repro_b";
    run_pipeline(a);
    run_pipeline(b);
    const std::vector<std::string> artifacts = {
        "corpus.jsonl", "corpus.jsonl.meta.json", "probe.json",  "cache.bin",
        "recall.json",  "retrieval.json",         "detect.json", "query.json",
        "tasks.jsonl",  "scorer.json",            "rec.json"};
    for (const std::string& name : artifacts) {
        const std::string ba = slurp(a / name);
        require(!ba.empty(), name + " missing or empty");
        require(ba == slurp(b / name), name + " differs between identically-seeded runs");
    }
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_cli = argv[1];
    g_work = argc > 2 ? fs::path(argv[2])
                      : fs::temp_directory_path() /
                            ("objret_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(g_work);

    struct Criterion {
        std::string name;
        std::function<void()> fn;
    };
    const std::vector<Criterion> criteria = {
        {"criterion 1: geometry kernels match brute-force oracles (< 30 s)", criterion1},
        {"criterion 2: loss closed forms and finite-difference gradients", criterion2},
        {"criterion 3: trained probe AR50@100 >= 0.99, monotone in k, seeds 0..4 (< 2 min)",
         criterion3},
        {"criterion 4: AP equals the PR-integration oracle; worked values", criterion4},
        {"criterion 5: retrieval F1 = 1.0 clean / >= 0.8 at sigma 0.3; recall monotone",
         criterion5},
        {"criterion 6: --federated reports carry recall only", criterion6},
        {"criterion 7: REC single-pass contract, top-1 >= 0.95, negatives gap (< 5 min)",
         criterion7},
        {"criterion 7b: scorer invocations per (image, query) equal 1", criterion7_invocations},
        {"criterion 8: every gt has a candidate at IoU >= 0.5 after injection", criterion8},
        {"criterion 9: cached path reads no grids, scales linearly, >= 10x over re-extraction",
         criterion9},
        {"criterion 10: identically-seeded pipelines produce byte-identical artifacts",
         criterion10},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const double t0 = now_seconds();
        try {
            c.fn();
            std::printf("[PASS] %s (%.1f s)\n", c.name.c_str(), now_seconds() - t0);
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] %s: %s\n", c.name.c_str(), e.what());
        }
        std::fflush(stdout);
    }
    fs::remove_all(g_work);
    if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
