#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "objret/geometry.hpp"
#include "objret/probe.hpp"
#include "objret/synthworld.hpp"

namespace objret::embedstore {

using geometry::BBox;

struct Proposal {
    BBox box;                      // f32-representable coordinates
    float objectness = 0.0f;       // in [0, 1]
    std::vector<float> embedding;  // unit L2 norm
};

struct ImageCacheRecord {
    std::string image_id;
    std::vector<Proposal> proposals;  // descending objectness
};

// Per-image top-k proposal embeddings; once built, queries never go back to
// the feature grids.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(int dim) : dim_(dim) {}

    int dim() const { return dim_; }
    const std::vector<ImageCacheRecord>& records() const { return records_; }
    const ImageCacheRecord* find(const std::string& image_id) const;
    std::size_t total_proposals() const;

    // Validates dimension, objectness range, unit norm and sort order.
    void add_record(ImageCacheRecord record);

private:
    int dim_ = 0;
    std::vector<ImageCacheRecord> records_;
    std::map<std::string, std::size_t> index_;
};

struct BuildConfig {
    int k = 100;
    double nms_iou = 0.5;
    int stride = 1;
    std::vector<double> scales{8.0, 11.0, 14.5};
};

// Scores dense anchors with the probe, suppresses, truncates to top-k, and
// caches the re-normalized pooled embedding of every surviving box.
EmbeddingStore build_store(const std::vector<synthworld::SceneRecord>& corpus,
                           const probe::ObjectnessProbe& objectness, const BuildConfig& cfg);

struct QueryScores {
    std::string image_id;
    std::vector<double> scores;  // aligned with the record's proposals
};

// dot(query, embedding) for every cached proposal; f64 accumulation.
std::vector<QueryScores> score_query(const EmbeddingStore& store, std::span<const float> query);

// Bit-exact little-endian cache file:
//   magic 'WDUC' | u32 version=1 | u32 dim | u64 record count
//   per record: u16 id length + UTF-8 bytes | u32 proposal count
//   per proposal: 4 x f32 box | f32 objectness | dim x f32 embedding
void save_store(const EmbeddingStore& store, const std::string& path);
EmbeddingStore load_store(const std::string& path);

}  // namespace objret::embedstore
