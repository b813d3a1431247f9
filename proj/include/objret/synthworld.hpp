#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "objret/geometry.hpp"
#include "objret/rng.hpp"

namespace objret::synthworld {

using geometry::BBox;
using geometry::Extent;
using geometry::FeatureGrid;

struct ConceptNode {
    std::string id;                    // doubles as the label text
    std::string name;
    std::optional<std::string> parent;
    std::uint64_t embedding_seed = 0;

    friend bool operator==(const ConceptNode&, const ConceptNode&) = default;
};

// A forest of concepts, coarse roots down to instance-level leaves.
class Taxonomy {
public:
    Taxonomy() = default;
    explicit Taxonomy(std::vector<ConceptNode> nodes);

    const std::vector<ConceptNode>& nodes() const { return nodes_; }
    bool contains(const std::string& id) const { return index_.count(id) > 0; }
    const ConceptNode& node(const std::string& id) const;
    // Root-to-leaf chain of ids ending at `id`.
    std::vector<std::string> path(const std::string& id) const;
    std::vector<std::string> leaves() const;
    bool empty() const { return nodes_.empty(); }

private:
    std::vector<ConceptNode> nodes_;
    std::map<std::string, std::size_t> index_;
};

// Procedural taxonomy: `n_roots` nouns, each with `children_per_root`
// subtypes, each subtype with `leaves_per_child` attributed instances.
Taxonomy make_default_taxonomy(int n_roots, int children_per_root, int leaves_per_child);

struct ObjectAnnotation {
    BBox box;
    std::vector<std::string> label_path;  // coarse -> fine

    friend bool operator==(const ObjectAnnotation&, const ObjectAnnotation&) = default;
};

struct SceneRecord {
    std::string image_id;
    Extent extent;
    std::vector<ObjectAnnotation> objects;
    std::vector<FeatureGrid> grids;  // multi-scale, finest first
};

// Deterministic unit-norm embeddings per (concept, seed); noisy per-cell
// draws are additionally keyed by a draw index.
class ConceptEmbedder {
public:
    ConceptEmbedder(int dim, double noise_sigma, std::uint64_t seed,
                    std::vector<std::string> vocabulary);

    int dim() const { return dim_; }
    double noise_sigma() const { return noise_sigma_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<std::string>& vocabulary() const { return vocabulary_; }
    bool knows(const std::string& concept_id) const;

    // Base embedding: unit L2 norm, same vector on every call.
    std::vector<float> embed(const std::string& concept_id) const;
    // normalize(base + noise_sigma * gaussian(draw_index)); unit norm.
    std::vector<float> draw(const std::string& concept_id, std::uint64_t draw_index) const;

private:
    int dim_;
    double noise_sigma_;
    std::uint64_t seed_;
    std::vector<std::string> vocabulary_;
};

// Pseudo-concept painted into cells no object owns.
inline const std::string kBackgroundConcept = "<background>";
// Spatial-side tokens usable in composed queries.
const std::vector<std::string>& side_tokens();

struct CorpusSpec {
    int n_images = 1;
    Taxonomy concepts;
    int min_objects = 1;
    int max_objects = 4;
    int dim = 32;
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;
    Extent extent{64.0, 64.0};
    std::vector<int> grid_sizes{32, 16};  // square grids, finest first
    double min_object_size = 8.0;
    double max_object_size = 14.0;
    double min_aspect = 0.8;  // height = width * aspect, clamped to size range
    double max_aspect = 1.25;
};

// Deterministic for a fixed spec. Each object's grid region carries its leaf
// concept embedding (per-cell noisy draws); everything else carries the
// background embedding. Later objects win overlapping cells.
std::vector<SceneRecord> generate_corpus(const CorpusSpec& spec);

// Embedder whose vocabulary is the corpus taxonomy plus background and side tokens.
ConceptEmbedder make_embedder(const CorpusSpec& spec);

enum class LabelPolicy { uniform_all, last_two };

// uniform_all: uniform over the whole path; last_two: uniform over the final
// two entries (the whole path when it has a single entry).
std::string sample_label(const ObjectAnnotation& ann, LabelPolicy policy, CounterRng& rng);

// One JSON object per line:
// {image_id, width, height, objects:[{box:[x1,y1,x2,y2], labels:[...]}]}.
// Grids are not part of the file; they are regenerated from the corpus spec.
void save_annotations(const std::vector<SceneRecord>& corpus, const std::string& path);
std::vector<SceneRecord> load_annotations(const std::string& path);

// Per-spec sidecar so pipelines can regenerate grids deterministically.
void save_corpus_spec(const CorpusSpec& spec, const std::string& path);
CorpusSpec load_corpus_spec(const std::string& path);

}  // namespace objret::synthworld
