#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "objret/embedstore.hpp"
#include "objret/errors.hpp"
#include "objret/geometry.hpp"
#include "objret/metrics.hpp"
#include "objret/probe.hpp"
#include "objret/recret.hpp"
#include "objret/retrieval.hpp"
#include "objret/rng.hpp"
#include "objret/synthworld.hpp"

namespace py = pybind11;
using namespace objret;

namespace {

geometry::FeatureGrid grid_from_nested(const std::vector<std::vector<std::vector<double>>>& v) {
    if (v.empty() || v[0].empty() || v[0][0].empty())
        throw ConfigError("feature grid: empty tensor");
    geometry::FeatureGrid g(static_cast<int>(v.size()), static_cast<int>(v[0].size()),
                            static_cast<int>(v[0][0].size()));
    for (int i = 0; i < g.height; ++i)
        for (int j = 0; j < g.width; ++j)
            for (int d = 0; d < g.dim; ++d)
                g.at(i, j, d) = v[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                                 [static_cast<std::size_t>(d)];
    return g;
}

}  // namespace

PYBIND11_MODULE(_objret, m) {
    m.doc() = "cached object-embedding retrieval engine";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<FormatError>(m, "FormatError");
    py::register_exception<ValidationError>(m, "ValidationError");

    // geometry
    py::class_<geometry::BBox>(m, "BBox")
        .def(py::init<double, double, double, double>(), py::arg("x1"), py::arg("y1"),
             py::arg("x2"), py::arg("y2"))
        .def_readwrite("x1", &geometry::BBox::x1)
        .def_readwrite("y1", &geometry::BBox::y1)
        .def_readwrite("x2", &geometry::BBox::x2)
        .def_readwrite("y2", &geometry::BBox::y2)
        .def("area", &geometry::BBox::area)
        .def("__repr__", [](const geometry::BBox& b) {
            return "BBox(" + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ", " +
                   std::to_string(b.x2) + ", " + std::to_string(b.y2) + ")";
        });

    py::class_<geometry::ScoredBox>(m, "ScoredBox")
        .def(py::init<>())
        .def(py::init([](const geometry::BBox& box, double score) {
                 return geometry::ScoredBox{box, score};
             }),
             py::arg("box"), py::arg("score"))
        .def_readwrite("box", &geometry::ScoredBox::box)
        .def_readwrite("score", &geometry::ScoredBox::score);

    py::class_<geometry::Extent>(m, "Extent")
        .def(py::init<double, double>(), py::arg("width"), py::arg("height"))
        .def_readwrite("width", &geometry::Extent::width)
        .def_readwrite("height", &geometry::Extent::height);

    py::class_<geometry::FeatureGrid>(m, "FeatureGrid")
        .def(py::init(&grid_from_nested), py::arg("values"))
        .def_readonly("height", &geometry::FeatureGrid::height)
        .def_readonly("width", &geometry::FeatureGrid::width)
        .def_readonly("dim", &geometry::FeatureGrid::dim)
        .def("at", [](const geometry::FeatureGrid& g, int i, int j, int d) {
            return g.at(i, j, d);
        });

    m.def("iou", &geometry::iou, py::arg("a"), py::arg("b"));
    m.def("nms", &geometry::nms, py::arg("candidates"), py::arg("iou_threshold"));
    m.def(
        "roi_pool",
        [](const geometry::FeatureGrid& g, const geometry::BBox& box, int out_h, int out_w) {
            const geometry::FeatureGrid pooled = geometry::roi_pool(g, box, out_h, out_w);
            std::vector<std::vector<std::vector<double>>> out(
                static_cast<std::size_t>(pooled.height));
            for (int i = 0; i < pooled.height; ++i) {
                out[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(pooled.width));
                for (int j = 0; j < pooled.width; ++j) {
                    auto& cell = out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                    cell.resize(static_cast<std::size_t>(pooled.dim));
                    for (int d = 0; d < pooled.dim; ++d)
                        cell[static_cast<std::size_t>(d)] = pooled.at(i, j, d);
                }
            }
            return out;
        },
        py::arg("grid"), py::arg("box"), py::arg("out_h"), py::arg("out_w"));
    m.def(
        "pool_region_embedding",
        [](const std::vector<geometry::FeatureGrid>& grids, const geometry::BBox& box,
           const geometry::Extent& extent) {
            return geometry::pool_region_embedding(grids, box, extent);
        },
        py::arg("grids"), py::arg("box"), py::arg("extent"));

    // synthworld
    py::class_<synthworld::Taxonomy>(m, "Taxonomy")
        .def("leaves", &synthworld::Taxonomy::leaves)
        .def("path", &synthworld::Taxonomy::path, py::arg("concept_id"));
    m.def("make_default_taxonomy", &synthworld::make_default_taxonomy, py::arg("n_roots"),
          py::arg("children_per_root"), py::arg("leaves_per_child"));

    py::class_<synthworld::ObjectAnnotation>(m, "ObjectAnnotation")
        .def_readonly("box", &synthworld::ObjectAnnotation::box)
        .def_readonly("label_path", &synthworld::ObjectAnnotation::label_path);

    py::class_<synthworld::SceneRecord>(m, "SceneRecord")
        .def_readonly("image_id", &synthworld::SceneRecord::image_id)
        .def_readonly("extent", &synthworld::SceneRecord::extent)
        .def_readonly("objects", &synthworld::SceneRecord::objects)
        .def_readonly("grids", &synthworld::SceneRecord::grids);

    py::class_<synthworld::ConceptEmbedder>(m, "ConceptEmbedder")
        .def("embed", &synthworld::ConceptEmbedder::embed, py::arg("concept_id"))
        .def("dim", &synthworld::ConceptEmbedder::dim);

    py::class_<synthworld::CorpusSpec>(m, "CorpusSpec")
        .def(py::init<>())
        .def_readwrite("n_images", &synthworld::CorpusSpec::n_images)
        .def_readwrite("concepts", &synthworld::CorpusSpec::concepts)
        .def_readwrite("min_objects", &synthworld::CorpusSpec::min_objects)
        .def_readwrite("max_objects", &synthworld::CorpusSpec::max_objects)
        .def_readwrite("dim", &synthworld::CorpusSpec::dim)
        .def_readwrite("seed", &synthworld::CorpusSpec::seed)
        .def_readwrite("noise_sigma", &synthworld::CorpusSpec::noise_sigma)
        .def_readwrite("extent", &synthworld::CorpusSpec::extent)
        .def_readwrite("grid_sizes", &synthworld::CorpusSpec::grid_sizes)
        .def_readwrite("min_object_size", &synthworld::CorpusSpec::min_object_size)
        .def_readwrite("max_object_size", &synthworld::CorpusSpec::max_object_size)
        .def_readwrite("min_aspect", &synthworld::CorpusSpec::min_aspect)
        .def_readwrite("max_aspect", &synthworld::CorpusSpec::max_aspect);

    m.def("generate_corpus", &synthworld::generate_corpus, py::arg("spec"));
    m.def("make_embedder", &synthworld::make_embedder, py::arg("spec"));
    m.def("save_annotations", &synthworld::save_annotations, py::arg("corpus"), py::arg("path"));
    m.def("load_annotations", &synthworld::load_annotations, py::arg("path"));
    m.def("save_corpus_spec", &synthworld::save_corpus_spec, py::arg("spec"), py::arg("path"));
    m.def("load_corpus_spec", &synthworld::load_corpus_spec, py::arg("path"));

    // probe
    py::class_<probe::ObjectnessProbe>(m, "ObjectnessProbe")
        .def(py::init<>())
        .def_readwrite("weight", &probe::ObjectnessProbe::weight)
        .def_readwrite("scale", &probe::ObjectnessProbe::scale)
        .def_readwrite("bias", &probe::ObjectnessProbe::bias);

    py::class_<probe::ProbeTrainConfig>(m, "ProbeTrainConfig")
        .def(py::init<>())
        .def_readwrite("lr", &probe::ProbeTrainConfig::lr)
        .def_readwrite("momentum", &probe::ProbeTrainConfig::momentum)
        .def_readwrite("epochs", &probe::ProbeTrainConfig::epochs)
        .def_readwrite("gamma", &probe::ProbeTrainConfig::gamma)
        .def_readwrite("seed", &probe::ProbeTrainConfig::seed)
        .def_readwrite("positive_iou", &probe::ProbeTrainConfig::positive_iou);

    py::class_<probe::AnchorConfig>(m, "AnchorConfig")
        .def(py::init<>())
        .def_readwrite("stride", &probe::AnchorConfig::stride)
        .def_readwrite("scales", &probe::AnchorConfig::scales);

    py::class_<probe::ProbeDataset>(m, "ProbeDataset")
        .def_readonly("dim", &probe::ProbeDataset::dim)
        .def_readonly("labels", &probe::ProbeDataset::labels);

    py::class_<probe::ProbeTrainResult>(m, "ProbeTrainResult")
        .def_readonly("probe", &probe::ProbeTrainResult::probe)
        .def_readonly("loss_history", &probe::ProbeTrainResult::loss_history);

    m.def(
        "probe_score",
        [](const probe::ObjectnessProbe& p, const std::vector<float>& e) {
            return probe::probe_score(p, e);
        },
        py::arg("probe"), py::arg("embedding"));
    m.def("soft_focal_loss", &probe::soft_focal_loss, py::arg("p"), py::arg("y"),
          py::arg("gamma"));
    m.def(
        "soft_labels",
        [](const std::vector<geometry::BBox>& proposals, const std::vector<geometry::BBox>& gts) {
            return probe::soft_labels(proposals, gts);
        },
        py::arg("proposal_boxes"), py::arg("gt_boxes"));
    m.def("build_probe_dataset", &probe::build_probe_dataset, py::arg("corpus"),
          py::arg("anchors"));
    m.def("train_probe", &probe::train_probe, py::arg("dataset"), py::arg("config"));
    m.def(
        "propose",
        [](const std::vector<geometry::FeatureGrid>& grids, const geometry::Extent& extent,
           const probe::ObjectnessProbe& p, int stride, const std::vector<double>& scales,
           double nms_iou, int k) {
            return probe::propose(grids, extent, p, stride, scales, nms_iou, k);
        },
        py::arg("grids"), py::arg("extent"), py::arg("probe"), py::arg("stride"),
        py::arg("scales"), py::arg("nms_iou"), py::arg("k"));
    m.def("save_probe", &probe::save_probe, py::arg("probe"), py::arg("trained_epochs"),
          py::arg("seed"), py::arg("path"));
    m.def("load_probe", &probe::load_probe, py::arg("path"));

    // embedstore
    py::class_<embedstore::Proposal>(m, "Proposal")
        .def_readonly("box", &embedstore::Proposal::box)
        .def_readonly("objectness", &embedstore::Proposal::objectness)
        .def_readonly("embedding", &embedstore::Proposal::embedding);

    py::class_<embedstore::ImageCacheRecord>(m, "ImageCacheRecord")
        .def_readonly("image_id", &embedstore::ImageCacheRecord::image_id)
        .def_readonly("proposals", &embedstore::ImageCacheRecord::proposals);

    py::class_<embedstore::EmbeddingStore>(m, "EmbeddingStore")
        .def("dim", &embedstore::EmbeddingStore::dim)
        .def("records", &embedstore::EmbeddingStore::records,
             py::return_value_policy::reference_internal)
        .def("total_proposals", &embedstore::EmbeddingStore::total_proposals);

    py::class_<embedstore::BuildConfig>(m, "BuildConfig")
        .def(py::init<>())
        .def_readwrite("k", &embedstore::BuildConfig::k)
        .def_readwrite("nms_iou", &embedstore::BuildConfig::nms_iou)
        .def_readwrite("stride", &embedstore::BuildConfig::stride)
        .def_readwrite("scales", &embedstore::BuildConfig::scales);

    py::class_<embedstore::QueryScores>(m, "QueryScores")
        .def_readonly("image_id", &embedstore::QueryScores::image_id)
        .def_readonly("scores", &embedstore::QueryScores::scores);

    m.def("build_store", &embedstore::build_store, py::arg("corpus"), py::arg("probe"),
          py::arg("config"));
    m.def(
        "score_query",
        [](const embedstore::EmbeddingStore& store, const std::vector<float>& q) {
            return embedstore::score_query(store, q);
        },
        py::arg("store"), py::arg("query"));
    m.def("save_store", &embedstore::save_store, py::arg("store"), py::arg("path"));
    m.def("load_store", &embedstore::load_store, py::arg("path"));

    // retrieval
    py::class_<retrieval::QuerySpec>(m, "QuerySpec")
        .def(py::init<>())
        .def_readwrite("concept_id", &retrieval::QuerySpec::concept_id)
        .def_readwrite("embedding", &retrieval::QuerySpec::embedding)
        .def_readwrite("threshold", &retrieval::QuerySpec::threshold);

    py::class_<retrieval::RetrievalResult>(m, "RetrievalResult")
        .def_readonly("concept_id", &retrieval::RetrievalResult::concept_id)
        .def_readonly("images", &retrieval::RetrievalResult::images)
        .def_readonly("per_image_max", &retrieval::RetrievalResult::per_image_max);

    py::class_<retrieval::ClassScores>(m, "ClassScores")
        .def_readonly("precision", &retrieval::ClassScores::precision)
        .def_readonly("recall", &retrieval::ClassScores::recall)
        .def_readonly("f1", &retrieval::ClassScores::f1);

    py::class_<retrieval::RetrievalReport>(m, "RetrievalReport")
        .def_readonly("per_class", &retrieval::RetrievalReport::per_class)
        .def_readonly("macro", &retrieval::RetrievalReport::macro)
        .def_readonly("federated", &retrieval::RetrievalReport::federated)
        .def("to_json", [](const retrieval::RetrievalReport& r) {
            return retrieval::report_to_json(r).dump(2);
        });

    m.def("retrieve", &retrieval::retrieve, py::arg("store"), py::arg("query"));
    m.def("evaluate_retrieval", &retrieval::evaluate_retrieval, py::arg("results"), py::arg("gt"),
          py::arg("federated"));

    // metrics
    py::class_<metrics::Detection>(m, "Detection")
        .def(py::init([](const std::string& image_id, const std::string& cls,
                         const geometry::BBox& box, double score) {
                 return metrics::Detection{image_id, cls, box, score};
             }),
             py::arg("image_id"), py::arg("cls"), py::arg("box"), py::arg("score"))
        .def_readwrite("image_id", &metrics::Detection::image_id)
        .def_readwrite("cls", &metrics::Detection::cls)
        .def_readwrite("box", &metrics::Detection::box)
        .def_readwrite("score", &metrics::Detection::score);

    py::class_<metrics::GtObject>(m, "GtObject")
        .def(py::init([](const std::string& image_id, const std::string& cls,
                         const geometry::BBox& box) {
                 return metrics::GtObject{image_id, cls, box};
             }),
             py::arg("image_id"), py::arg("cls"), py::arg("box"))
        .def_readwrite("image_id", &metrics::GtObject::image_id)
        .def_readwrite("cls", &metrics::GtObject::cls)
        .def_readwrite("box", &metrics::GtObject::box);

    py::class_<metrics::ApResult>(m, "ApResult")
        .def_readonly("per_class", &metrics::ApResult::per_class)
        .def_readonly("mean", &metrics::ApResult::mean);

    py::class_<metrics::RecallResult>(m, "RecallResult")
        .def_readonly("ar50", &metrics::RecallResult::ar50)
        .def_readonly("ar_avg", &metrics::RecallResult::ar_avg);

    m.def("average_precision", &metrics::average_precision, py::arg("detections"), py::arg("gts"),
          py::arg("iou_thresh"));
    m.def("average_recall", &metrics::average_recall, py::arg("proposals"), py::arg("gts"),
          py::arg("k"));
    m.def("top1_accuracy", &metrics::top1_accuracy, py::arg("predictions"), py::arg("gts"),
          py::arg("iou_thresh") = 0.5);

    // recret
    py::class_<recret::ToyScorer>(m, "ToyScorer")
        .def_readonly("feature_dim", &recret::ToyScorer::feature_dim)
        .def_readonly("hidden", &recret::ToyScorer::hidden)
        .def_readonly("pos_scale", &recret::ToyScorer::pos_scale);

    py::class_<recret::BoxPositionEncoding>(m, "BoxPositionEncoding")
        .def(py::init([](int dim, double scale) {
                 return recret::BoxPositionEncoding{dim, scale};
             }),
             py::arg("dim"), py::arg("scale") = 0.05)
        .def("encode", &recret::BoxPositionEncoding::encode, py::arg("box"), py::arg("extent"));

    py::class_<recret::CandidateList>(m, "CandidateList")
        .def_readonly("image_id", &recret::CandidateList::image_id)
        .def_readonly("boxes", &recret::CandidateList::boxes)
        .def_readonly("injected", &recret::CandidateList::injected);

    py::class_<recret::RecQuery>(m, "RecQuery")
        .def(py::init([](const std::string& text, const std::vector<float>& embedding) {
                 return recret::RecQuery{text, embedding};
             }),
             py::arg("text"), py::arg("embedding"));

    py::class_<recret::ScoreVector>(m, "ScoreVector")
        .def_readonly("scores", &recret::ScoreVector::scores);

    py::class_<recret::RecTask>(m, "RecTask")
        .def_readonly("image_id", &recret::RecTask::image_id)
        .def_readonly("query_text", &recret::RecTask::query_text)
        .def_readonly("query_terms", &recret::RecTask::query_terms)
        .def_readonly("gt_boxes", &recret::RecTask::gt_boxes)
        .def("is_negative", &recret::RecTask::is_negative);

    py::class_<recret::RecTrainConfig>(m, "RecTrainConfig")
        .def(py::init<>())
        .def_readwrite("lr", &recret::RecTrainConfig::lr)
        .def_readwrite("momentum", &recret::RecTrainConfig::momentum)
        .def_readwrite("epochs", &recret::RecTrainConfig::epochs)
        .def_readwrite("gamma", &recret::RecTrainConfig::gamma)
        .def_readwrite("seed", &recret::RecTrainConfig::seed)
        .def_readwrite("inject_iou", &recret::RecTrainConfig::inject_iou)
        .def_readwrite("hidden", &recret::RecTrainConfig::hidden)
        .def_readwrite("pos_scale", &recret::RecTrainConfig::pos_scale);

    py::class_<recret::RecTrainResult>(m, "RecTrainResult")
        .def_readonly("scorer", &recret::RecTrainResult::scorer)
        .def_readonly("loss_history", &recret::RecTrainResult::loss_history);

    py::class_<recret::TaskGenConfig>(m, "TaskGenConfig")
        .def(py::init<>())
        .def_readwrite("n_tasks", &recret::TaskGenConfig::n_tasks)
        .def_readwrite("negative_fraction", &recret::TaskGenConfig::negative_fraction)
        .def_readwrite("seed", &recret::TaskGenConfig::seed)
        .def_readwrite("side_fraction", &recret::TaskGenConfig::side_fraction)
        .def_readwrite("first_image", &recret::TaskGenConfig::first_image)
        .def_readwrite("last_image", &recret::TaskGenConfig::last_image)
        .def_readwrite("hard_negatives", &recret::TaskGenConfig::hard_negatives);

    m.def(
        "assemble_candidates",
        [](const synthworld::SceneRecord& record, const embedstore::ImageCacheRecord& cached,
           const std::vector<geometry::BBox>& gts, double inject_iou,
           const recret::BoxPositionEncoding& posenc) {
            return recret::assemble_candidates(record, cached, gts, inject_iou, posenc);
        },
        py::arg("record"), py::arg("store_record"), py::arg("gts"), py::arg("inject_iou"),
        py::arg("posenc"));
    m.def("mine_hard_negatives", &recret::mine_hard_negatives, py::arg("store_record"),
          py::arg("class_embeddings"), py::arg("present"), py::arg("m") = 3);
    m.def("score_candidates", &recret::score_candidates, py::arg("scorer"), py::arg("query"),
          py::arg("candidates"));
    m.def(
        "embed_query",
        [](const synthworld::ConceptEmbedder& embedder, const std::vector<std::string>& terms) {
            return recret::embed_query(embedder, terms);
        },
        py::arg("embedder"), py::arg("terms"));
    m.def("train_rec_scorer", &recret::train_rec_scorer, py::arg("corpus"), py::arg("store"),
          py::arg("tasks"), py::arg("embedder"), py::arg("config"));
    m.def(
        "decode_rec",
        [](const recret::ScoreVector& scores, const recret::CandidateList& cands,
           const std::string& mode, double t) {
            return recret::decode_rec(
                scores, cands,
                mode == "top1" ? recret::DecodeMode::top1 : recret::DecodeMode::threshold, t);
        },
        py::arg("scores"), py::arg("candidates"), py::arg("mode") = "top1", py::arg("t") = 0.5);
    m.def("make_rec_tasks", &recret::make_rec_tasks, py::arg("corpus"), py::arg("store"),
          py::arg("taxonomy"), py::arg("embedder"), py::arg("config"));
    m.def("save_rec_tasks", &recret::save_rec_tasks, py::arg("tasks"), py::arg("path"));
    m.def("load_rec_tasks", &recret::load_rec_tasks, py::arg("path"));
    m.def("save_scorer", &recret::save_scorer, py::arg("scorer"), py::arg("trained_epochs"),
          py::arg("seed"), py::arg("path"));
    m.def("load_scorer", &recret::load_scorer, py::arg("path"));
    m.def("scorer_invocation_count", &recret::scorer_invocation_count);
    m.def("reset_scorer_invocation_count", &recret::reset_scorer_invocation_count);
    m.def("grid_read_count", &geometry::grid_read_count);
    m.def("reset_grid_read_count", &geometry::reset_grid_read_count);
}
