#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "objret/embedstore.hpp"

namespace objret::retrieval {

struct QuerySpec {
    std::string concept_id;
    std::vector<float> embedding;  // unit L2 norm
    double threshold = 0.2;
};

struct RetrievalResult {
    std::string concept_id;
    std::set<std::string> images;
    std::map<std::string, double> per_image_max;  // -1 sentinel: no proposals
};

struct ClassScores {
    std::optional<double> precision;  // absent under the federated rule
    double recall = 0.0;
    std::optional<double> f1;
};

struct RetrievalReport {
    std::map<std::string, ClassScores> per_class;
    ClassScores macro;
    bool federated = false;
    double threshold = 0.2;
};

// Max-over-proposals dot score per image; images whose max reaches the
// threshold form the retrieved set. Images with an empty cache record are
// never retrieved.
RetrievalResult retrieve(const embedstore::EmbeddingStore& store, const QuerySpec& query);

// Per-class precision/recall/F1 against ground-truth image sets, macro mean
// over all gt classes. Federated: recall only. A gt class with no result
// entry counts as an empty prediction.
RetrievalReport evaluate_retrieval(const std::map<std::string, RetrievalResult>& results,
                                   const std::map<std::string, std::set<std::string>>& gt,
                                   bool federated);

nlohmann::ordered_json report_to_json(const RetrievalReport& report);

}  // namespace objret::retrieval
