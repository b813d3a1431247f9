#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>

#include "objret/metrics.hpp"
#include "objret/rng.hpp"
#include "oracles.hpp"

using namespace objret;
using namespace objret::metrics;
using geometry::BBox;
using geometry::ScoredBox;

namespace {

BBox random_box(CounterRng& rng, double lo, double hi) {
    const double x1 = rng.uniform(lo, hi), y1 = rng.uniform(lo, hi);
    return {x1, y1, x1 + rng.uniform(0.5, 4), y1 + rng.uniform(0.5, 4)};
}

// Random small detection instance: a handful of images, jittered copies of
// the gt boxes plus pure noise detections.
struct Instance {
    std::vector<Detection> dets;
    std::vector<GtObject> gts;
};

Instance random_instance(CounterRng& rng) {
    Instance inst;
    const int n_images = static_cast<int>(rng.uniform_int(1, 6));
    const int n_classes = static_cast<int>(rng.uniform_int(1, 3));
    for (int i = 0; i < n_images; ++i) {
        const std::string image = "img" + std::to_string(i);
        const int n_gt = static_cast<int>(rng.uniform_int(0, 4));
        for (int g = 0; g < n_gt; ++g) {
            const std::string cls = "c" + std::to_string(rng.uniform_int(0, n_classes - 1));
            const BBox box = random_box(rng, 0, 16);
            inst.gts.push_back({image, cls, box});
            if (rng.uniform() < 0.8) {
                const double dx = rng.uniform(-1, 1), dy = rng.uniform(-1, 1);
                inst.dets.push_back({image, cls,
                                     {box.x1 + dx, box.y1 + dy, box.x2 + dx, box.y2 + dy},
                                     rng.uniform()});
            }
        }
        const int n_noise = static_cast<int>(rng.uniform_int(0, 5));
        for (int f = 0; f < n_noise; ++f) {
            const std::string cls = "c" + std::to_string(rng.uniform_int(0, n_classes - 1));
            inst.dets.push_back({image, cls, random_box(rng, 0, 16), rng.uniform()});
        }
    }
    return inst;
}

}  // namespace

TEST_CASE("average_precision on the worked examples") {
    // Predictions equal to gt with distinct scores: AP = 1 per class.
    std::vector<GtObject> gts;
    std::vector<Detection> dets;
    for (int i = 0; i < 4; ++i) {
        const BBox box{i * 10.0, 0, i * 10.0 + 5, 5};
        const std::string cls = i % 2 ? "cat" : "dog";
        gts.push_back({"img0", cls, box});
        dets.push_back({"img0", cls, box, 0.9 - 0.1 * i});
    }
    const auto perfect = average_precision(dets, gts, 0.5);
    CHECK(perfect.mean == 1.0);
    CHECK(perfect.per_class.at("cat") == 1.0);
    CHECK(perfect.counts.tp == 4);
    CHECK(perfect.counts.fp == 0);
    CHECK(perfect.counts.fn == 0);

    // Single prediction below the IoU threshold: AP = 0.
    const BBox gt{0, 0, 10, 10};
    const BBox off{0, 0, 10, 4};  // IoU = 0.4
    REQUIRE(geometry::iou(gt, off) == doctest::Approx(0.4).epsilon(1e-12));
    const auto zero = average_precision({{"img0", "cat", off, 0.9}}, {{"img0", "cat", gt}}, 0.5);
    CHECK(zero.mean == 0.0);

    // Ranked [TP, FP, TP] over 2 gts -> (51 * 1.0 + 50 * (2/3)) / 101.
    std::vector<GtObject> two{{"img0", "cat", {0, 0, 10, 10}}, {"img0", "cat", {20, 0, 30, 10}}};
    std::vector<Detection> ranked{
        {"img0", "cat", {0, 0, 10, 10}, 0.9},
        {"img0", "cat", {50, 50, 60, 60}, 0.8},
        {"img0", "cat", {20, 0, 30, 10}, 0.7},
    };
    const auto mixed = average_precision(ranked, two, 0.5);
    const double expect = (51.0 * 1.0 + 50.0 * (2.0 / 3.0)) / 101.0;
    CHECK(mixed.mean == doctest::Approx(expect).epsilon(1e-9));
    CHECK(mixed.mean == doctest::Approx(0.83498).epsilon(1e-4));
}

TEST_CASE("average_precision equals the brute-force PR oracle") {
    CounterRng rng(31);
    for (int t = 0; t < 500; ++t) {
        const Instance inst = random_instance(rng);
        const auto got = average_precision(inst.dets, inst.gts, 0.5);

        std::map<std::string, std::vector<Detection>> dets_by_class;
        std::map<std::string, std::vector<GtObject>> gts_by_class;
        for (const auto& d : inst.dets) dets_by_class[d.cls].push_back(d);
        for (const auto& g : inst.gts) gts_by_class[g.cls].push_back(g);
        double sum = 0.0;
        int n = 0;
        for (const auto& [cls, class_gts] : gts_by_class) {
            const double ap =
                oracles::oracle_average_precision_class(dets_by_class[cls], class_gts);
            CHECK(got.per_class.at(cls) == doctest::Approx(ap).epsilon(1e-12));
            sum += ap;
            ++n;
        }
        if (n > 0) CHECK(got.mean == doctest::Approx(sum / n).epsilon(1e-12));
    }
}

TEST_CASE("average_precision is invariant under monotone score transforms") {
    CounterRng rng(32);
    for (int t = 0; t < 50; ++t) {
        Instance inst = random_instance(rng);
        const auto base = average_precision(inst.dets, inst.gts, 0.5);
        for (auto& d : inst.dets) d.score = std::exp(3.0 * d.score) + 1.0;
        const auto transformed = average_precision(inst.dets, inst.gts, 0.5);
        CHECK(base.mean == transformed.mean);
        CHECK(base.per_class == transformed.per_class);
    }
}

TEST_CASE("adding detections moves AP the right way") {
    CounterRng rng(33);
    for (int t = 0; t < 50; ++t) {
        Instance inst = random_instance(rng);
        if (inst.gts.empty()) continue;
        const auto base = average_precision(inst.dets, inst.gts, 0.5);

        // A false positive never increases AP.
        Instance with_fp = inst;
        with_fp.dets.push_back({"img0", inst.gts[0].cls, {100, 100, 101, 101}, rng.uniform()});
        const auto worse = average_precision(with_fp.dets, with_fp.gts, 0.5);
        CHECK(worse.mean <= base.mean + 1e-12);

        // A top-scoring match for a previously unmatched gt never decreases
        // AP. (Duplicating an already-matched gt can steal the match and
        // lower it, so the new detection must cover a gt nobody claimed.)
        std::optional<GtObject> unmatched;
        for (const auto& g : inst.gts) {
            bool covered = false;
            for (const auto& d : inst.dets)
                covered = covered || (d.image_id == g.image_id && d.cls == g.cls &&
                                      geometry::iou(d.box, g.box) >= 0.5);
            if (!covered) {
                unmatched = g;
                break;
            }
        }
        if (unmatched) {
            Instance with_tp = inst;
            with_tp.dets.push_back({unmatched->image_id, unmatched->cls, unmatched->box, 1e9});
            const auto better = average_precision(with_tp.dets, with_tp.gts, 0.5);
            CHECK(better.mean >= base.mean - 1e-12);
        }
    }
}

TEST_CASE("average_recall on the worked examples") {
    std::map<std::string, std::vector<BBox>> gts;
    gts["img0"] = {{0, 0, 10, 10}, {20, 0, 30, 10}, {40, 0, 50, 10}};

    std::map<std::string, std::vector<ScoredBox>> exact;
    exact["img0"] = {{{0, 0, 10, 10}, 0.9}, {{20, 0, 30, 10}, 0.8}, {{40, 0, 50, 10}, 0.7}};
    const auto perfect = average_recall(exact, gts, 100);
    CHECK(perfect.ar50 == 1.0);
    CHECK(perfect.ar_avg == 1.0);

    const auto empty = average_recall({}, gts, 100);
    CHECK(empty.ar50 == 0.0);
    CHECK(empty.ar_avg == 0.0);

    // Two matches at IoU 0.5, one of them exact: per-threshold recomputation.
    std::map<std::string, std::vector<ScoredBox>> partial;
    partial["img0"] = {
        {{0, 0, 10, 10}, 0.9},     // exact: counts at every threshold
        {{20, 5, 30, 15}, 0.8},    // IoU = 1/3 with gt2: never counts
        {{40, 0, 50, 5}, 0.7},     // IoU = 0.5 with gt3: counts at 0.5 only
    };
    const auto got = average_recall(partial, gts, 100);
    CHECK(got.ar50 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    // Thresholds: 0.5 matches 2, the other nine match 1.
    CHECK(got.ar_avg == doctest::Approx((2.0 / 3.0 + 9.0 * (1.0 / 3.0)) / 10.0).epsilon(1e-12));
    CHECK(got.ar_avg <= got.ar50);
}

TEST_CASE("average_recall respects the top-k budget") {
    std::map<std::string, std::vector<BBox>> gts;
    gts["img0"] = {{0, 0, 10, 10}};
    std::map<std::string, std::vector<ScoredBox>> props;
    // The matching proposal is ranked second; k=1 must drop it.
    props["img0"] = {{{50, 50, 60, 60}, 0.9}, {{0, 0, 10, 10}, 0.8}};
    CHECK(average_recall(props, gts, 1).ar50 == 0.0);
    CHECK(average_recall(props, gts, 2).ar50 == 1.0);
}

TEST_CASE("top1 accuracy counts IoU >= threshold tasks") {
    std::map<std::string, ScoredBox> preds;
    std::map<std::string, BBox> gts;
    gts["t0"] = {0, 0, 10, 10};
    preds["t0"] = {{0, 0, 10, 10}, 0.9};  // IoU 1.0
    gts["t1"] = {0, 0, 10, 10};
    preds["t1"] = {{0, 0, 10, 5.1}, 0.9};  // IoU 0.51
    gts["t2"] = {0, 0, 10, 10};
    preds["t2"] = {{0, 0, 10, 4.9}, 0.9};  // IoU 0.49
    gts["t3"] = {0, 0, 10, 10};
    preds["t3"] = {{50, 50, 60, 60}, 0.9};  // IoU 0.0
    CHECK(top1_accuracy(preds, gts, 0.5) == 0.5);

    // All equal / all disjoint.
    std::map<std::string, ScoredBox> all_right{{"t0", {{0, 0, 10, 10}, 1.0}}};
    std::map<std::string, BBox> one{{"t0", {0, 0, 10, 10}}};
    CHECK(top1_accuracy(all_right, one, 0.5) == 1.0);
    std::map<std::string, ScoredBox> all_wrong{{"t0", {{90, 90, 91, 91}, 1.0}}};
    CHECK(top1_accuracy(all_wrong, one, 0.5) == 0.0);

    // Missing prediction counts as incorrect.
    std::map<std::string, BBox> two{{"t0", {0, 0, 10, 10}}, {"t1", {0, 0, 10, 10}}};
    CHECK(top1_accuracy(all_right, two, 0.5) == 0.5);
}

TEST_CASE("eval report JSON has stable keys") {
    EvalReport report;
    report.ap = ApResult{};
    report.ap->per_class["cat"] = 0.5;
    report.ap->mean = 0.5;
    report.ar[100] = {0.9, 0.7};
    report.top1 = 0.25;
    const auto j = report_to_json(report);
    CHECK(j["ap"]["mean"] == 0.5);
    CHECK(j["ar"]["100"]["ar50"] == 0.9);
    CHECK(j["top1"] == 0.25);
    CHECK(report_to_json(report).dump() == j.dump());
}
