#include "objret/retrieval.hpp"

#include <algorithm>

#include "objret/errors.hpp"

namespace objret::retrieval {

RetrievalResult retrieve(const embedstore::EmbeddingStore& store, const QuerySpec& query) {
    RetrievalResult result;
    result.concept_id = query.concept_id;
    const std::vector<embedstore::QueryScores> scored =
        embedstore::score_query(store, query.embedding);
    for (const embedstore::QueryScores& qs : scored) {
        if (qs.scores.empty()) {
            result.per_image_max[qs.image_id] = -1.0;
            continue;
        }
        const double best = *std::max_element(qs.scores.begin(), qs.scores.end());
        result.per_image_max[qs.image_id] = best;
        if (best >= query.threshold) result.images.insert(qs.image_id);
    }
    return result;
}

namespace {

ClassScores score_class(const std::set<std::string>& pred, const std::set<std::string>& gt,
                        bool federated) {
    std::size_t hits = 0;
    for (const std::string& id : pred) hits += gt.count(id);
    ClassScores s;
    if (pred.empty() && gt.empty()) {
        s.recall = 1.0;
        if (!federated) {
            s.precision = 1.0;
            s.f1 = 1.0;
        }
        return s;
    }
    const double p = pred.empty() ? 0.0 : static_cast<double>(hits) / pred.size();
    const double r = gt.empty() ? 1.0 : static_cast<double>(hits) / gt.size();
    s.recall = r;
    if (!federated) {
        s.precision = p;
        s.f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    return s;
}

}  // namespace

RetrievalReport evaluate_retrieval(const std::map<std::string, RetrievalResult>& results,
                                   const std::map<std::string, std::set<std::string>>& gt,
                                   bool federated) {
    for (const auto& [concept_id, result] : results) {
        if (!gt.count(concept_id))
            throw ValidationError("evaluate_retrieval: concept '" + concept_id + "' missing from gt");
    }
    RetrievalReport report;
    report.federated = federated;
    double sum_p = 0.0, sum_r = 0.0, sum_f1 = 0.0;
    for (const auto& [concept_id, gt_images] : gt) {
        const auto it = results.find(concept_id);
        static const std::set<std::string> kEmpty;
        const std::set<std::string>& pred = it == results.end() ? kEmpty : it->second.images;
        const ClassScores s = score_class(pred, gt_images, federated);
        sum_r += s.recall;
        if (!federated) {
            sum_p += *s.precision;
            sum_f1 += *s.f1;
        }
        report.per_class.emplace(concept_id, s);
    }
    const double n = static_cast<double>(gt.size());
    if (n > 0) {
        report.macro.recall = sum_r / n;
        if (!federated) {
            report.macro.precision = sum_p / n;
            report.macro.f1 = sum_f1 / n;
        }
    }
    return report;
}

nlohmann::ordered_json report_to_json(const RetrievalReport& report) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
    const auto class_json = [&](const ClassScores& s) {
        nlohmann::ordered_json cj;
        if (s.precision) cj["p"] = *s.precision;
        cj["r"] = s.recall;
        if (s.f1) cj["f1"] = *s.f1;
        return cj;
    };
    for (const auto& [concept_id, scores] : report.per_class)
        per_class[concept_id] = class_json(scores);
    j["per_class"] = std::move(per_class);
    j["macro"] = class_json(report.macro);
    j["federated"] = report.federated;
    j["threshold"] = report.threshold;
    return j;
}

}  // namespace objret::retrieval
