#include "objret/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "objret/errors.hpp"

namespace objret::synthworld {

using json = nlohmann::ordered_json;

Taxonomy::Taxonomy(std::vector<ConceptNode> nodes) : nodes_(std::move(nodes)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!index_.emplace(nodes_[i].id, i).second)
            throw ValidationError("taxonomy: duplicate concept id '" + nodes_[i].id + "'");
    }
    for (const ConceptNode& n : nodes_) {
        if (n.parent && !index_.count(*n.parent))
            throw ValidationError("taxonomy: unknown parent '" + *n.parent + "'");
    }
    // Forest check: walking parent links from any node must terminate.
    for (const ConceptNode& n : nodes_) {
        std::size_t steps = 0;
        const ConceptNode* cur = &n;
        while (cur->parent) {
            cur = &node(*cur->parent);
            if (++steps > nodes_.size())
                throw ValidationError("taxonomy: cycle through '" + n.id + "'");
        }
    }
}

const ConceptNode& Taxonomy::node(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("taxonomy: unknown concept '" + id + "'");
    return nodes_[it->second];
}

std::vector<std::string> Taxonomy::path(const std::string& id) const {
    std::vector<std::string> out;
    const ConceptNode* cur = &node(id);
    out.push_back(cur->id);
    while (cur->parent) {
        cur = &node(*cur->parent);
        out.push_back(cur->id);
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<std::string> Taxonomy::leaves() const {
    std::set<std::string> parents;
    for (const ConceptNode& n : nodes_)
        if (n.parent) parents.insert(*n.parent);
    std::vector<std::string> out;
    for (const ConceptNode& n : nodes_)
        if (!parents.count(n.id)) out.push_back(n.id);
    return out;
}

namespace {

const std::vector<std::string> kRootNouns = {
    "animal", "vehicle", "plant",  "tool",   "lamp",  "chair",
    "bottle", "jacket",  "drone",  "robot",  "kite",  "drum"};
const std::vector<std::string> kColors = {"red",   "yellow", "blue",  "green",
                                          "white", "black",  "orange", "purple"};

}  // namespace

const std::vector<std::string>& side_tokens() {
    static const std::vector<std::string> kSides = {"left", "right", "top", "bottom"};
    return kSides;
}

Taxonomy make_default_taxonomy(int n_roots, int children_per_root, int leaves_per_child) {
    if (n_roots < 1 || n_roots > static_cast<int>(kRootNouns.size()))
        throw ConfigError("taxonomy: n_roots must be in [1, " +
                          std::to_string(kRootNouns.size()) + "]");
    if (children_per_root < 1 || leaves_per_child < 1)
        throw ConfigError("taxonomy: children/leaves per node must be >= 1");
    std::vector<ConceptNode> nodes;
    int color = 0;
    for (int r = 0; r < n_roots; ++r) {
        const std::string& root = kRootNouns[r];
        nodes.push_back({root, root, std::nullopt, sub_seed(0, root)});
        for (int c = 0; c < children_per_root; ++c) {
            const std::string child = root + " " + static_cast<char>('a' + c);
            nodes.push_back({child, child, root, sub_seed(0, child)});
            for (int l = 0; l < leaves_per_child; ++l) {
                const std::string leaf = kColors[color % kColors.size()] + " " + child;
                ++color;
                nodes.push_back({leaf, leaf, child, sub_seed(0, leaf)});
            }
        }
    }
    return Taxonomy(std::move(nodes));
}

ConceptEmbedder::ConceptEmbedder(int dim, double noise_sigma, std::uint64_t seed,
                                 std::vector<std::string> vocabulary)
    : dim_(dim), noise_sigma_(noise_sigma), seed_(seed), vocabulary_(std::move(vocabulary)) {
    if (dim_ < 1) throw ConfigError("embedder: dim must be >= 1");
    if (noise_sigma_ < 0.0) throw ConfigError("embedder: noise_sigma must be >= 0");
}

bool ConceptEmbedder::knows(const std::string& concept_id) const {
    return std::find(vocabulary_.begin(), vocabulary_.end(), concept_id) != vocabulary_.end();
}

std::vector<float> ConceptEmbedder::embed(const std::string& concept_id) const {
    if (!knows(concept_id)) throw ValidationError("embedder: unknown concept '" + concept_id + "'");
    CounterRng rng(sub_seed(sub_seed(seed_, "embed"), concept_id));
    std::vector<float> v(static_cast<std::size_t>(dim_));
    for (float& x : v) x = static_cast<float>(rng.normal());
    geometry::l2_normalize(v);
    return v;
}

std::vector<float> ConceptEmbedder::draw(const std::string& concept_id,
                                         std::uint64_t draw_index) const {
    std::vector<float> v = embed(concept_id);
    if (noise_sigma_ == 0.0) return v;
    CounterRng rng(sub_seed(sub_seed(sub_seed(seed_, "draw"), concept_id), draw_index));
    for (float& x : v) x = static_cast<float>(x + noise_sigma_ * rng.normal());
    geometry::l2_normalize(v);
    return v;
}

ConceptEmbedder make_embedder(const CorpusSpec& spec) {
    std::vector<std::string> vocab;
    for (const ConceptNode& n : spec.concepts.nodes()) vocab.push_back(n.id);
    vocab.push_back(kBackgroundConcept);
    for (const std::string& s : side_tokens()) vocab.push_back(s);
    return ConceptEmbedder(spec.dim, spec.noise_sigma, spec.seed, std::move(vocab));
}

namespace {

struct CellRange {
    int i_lo, i_hi, j_lo, j_hi;  // inclusive
};

// Cells whose center lies within `box` dilated by one cell, in grid coords.
// Cells to paint for one object. The box's own 2x2 pooling samples sit s/4
// inside the box edge and bilinear reads reach one cell further, so a grid
// whose cell exceeds a quarter of the box needs a one-cell dilation for the
// box to pool its own embedding exactly; finer grids paint the box alone,
// which keeps off-center anchors visibly mixed.
CellRange dilated_cells(const BBox& box, const FeatureGrid& g, const Extent& extent) {
    const double sx = g.width / extent.width;
    const double sy = g.height / extent.height;
    const double dx = (1.0 / sx > box.width() / 4.0) ? 1.0 : 0.0;
    const double dy = (1.0 / sy > box.height() / 4.0) ? 1.0 : 0.0;
    const double x1 = box.x1 * sx - dx, x2 = box.x2 * sx + dx;
    const double y1 = box.y1 * sy - dy, y2 = box.y2 * sy + dy;
    CellRange r;
    r.j_lo = std::max(0, static_cast<int>(std::ceil(x1 - 0.5)));
    r.j_hi = std::min(g.width - 1, static_cast<int>(std::floor(x2 - 0.5)));
    r.i_lo = std::max(0, static_cast<int>(std::ceil(y1 - 0.5)));
    r.i_hi = std::min(g.height - 1, static_cast<int>(std::floor(y2 - 0.5)));
    return r;
}

}  // namespace

std::vector<SceneRecord> generate_corpus(const CorpusSpec& spec) {
    if (spec.n_images < 1) throw ConfigError("corpus: n_images must be >= 1");
    if (spec.concepts.empty() || spec.concepts.leaves().empty())
        throw ConfigError("corpus: empty concept set");
    if (spec.dim < 4) throw ConfigError("corpus: dim must be >= 4");
    if (spec.min_objects < 0 || spec.max_objects < spec.min_objects)
        throw ConfigError("corpus: bad objects_per_image range");
    if (spec.grid_sizes.empty()) throw ConfigError("corpus: need at least one grid size");

    const ConceptEmbedder embedder = make_embedder(spec);
    const std::vector<std::string> leaves = spec.concepts.leaves();
    const bool noiseless = spec.noise_sigma == 0.0;

    std::unordered_map<std::string, std::vector<float>> base;
    base.emplace(kBackgroundConcept, embedder.embed(kBackgroundConcept));
    for (const std::string& leaf : leaves) base.emplace(leaf, embedder.embed(leaf));

    // Objects go into jittered grid slots. Dilated paint regions of distinct
    // objects must never meet, which needs a gap of two coarse cells; keeping
    // every box one coarse cell inside its slot guarantees that for any pair.
    const int coarsest = *std::min_element(spec.grid_sizes.begin(), spec.grid_sizes.end());
    const double cell = std::max(spec.extent.width, spec.extent.height) / coarsest;
    int slots_per_side = 1;
    while (slots_per_side * slots_per_side < spec.max_objects) ++slots_per_side;
    const double slot_w = spec.extent.width / slots_per_side;
    const double slot_h = spec.extent.height / slots_per_side;
    const double size_cap = std::min(slot_w, slot_h) - 2.0 * cell;
    if (size_cap < spec.min_object_size)
        throw ConfigError("corpus: objects do not fit; shrink min_object_size or max_objects");
    const double max_size = std::min(spec.max_object_size, size_cap);

    const std::uint64_t corpus_key = sub_seed(spec.seed, "corpus");
    std::vector<SceneRecord> corpus;
    corpus.reserve(static_cast<std::size_t>(spec.n_images));
    for (int img = 0; img < spec.n_images; ++img) {
        CounterRng rng(sub_seed(corpus_key, static_cast<std::uint64_t>(img)));
        SceneRecord rec;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "img%05d", img);
        rec.image_id = idbuf;
        rec.extent = spec.extent;

        const int n_obj = static_cast<int>(rng.uniform_int(spec.min_objects, spec.max_objects));
        std::vector<int> slots(static_cast<std::size_t>(slots_per_side) * slots_per_side);
        for (std::size_t s = 0; s < slots.size(); ++s) slots[s] = static_cast<int>(s);
        for (std::size_t s = slots.size(); s > 1; --s)
            std::swap(slots[s - 1], slots[static_cast<std::size_t>(
                                       rng.uniform_int(0, static_cast<std::int64_t>(s) - 1))]);

        for (int o = 0; o < n_obj; ++o) {
            const std::string& leaf = leaves[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(leaves.size()) - 1))];
            const double w = rng.uniform(spec.min_object_size, max_size);
            const double h = std::clamp(w * rng.uniform(spec.min_aspect, spec.max_aspect), spec.min_object_size,
                                        max_size);
            const int slot = slots[static_cast<std::size_t>(o)];
            const double slot_cx = (slot % slots_per_side + 0.5) * slot_w;
            const double slot_cy = (slot / slots_per_side + 0.5) * slot_h;
            const double jx = (slot_w - w - 2.0 * cell) / 2.0;
            const double jy = (slot_h - h - 2.0 * cell) / 2.0;
            const double cx = slot_cx + rng.uniform(-jx, jx);
            const double cy = slot_cy + rng.uniform(-jy, jy);
            const BBox box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
            rec.objects.push_back({box, spec.concepts.path(leaf)});
        }

        for (std::size_t g = 0; g < spec.grid_sizes.size(); ++g) {
            const int side = spec.grid_sizes[g];
            FeatureGrid grid(side, side, spec.dim);
            const std::uint64_t grid_key =
                sub_seed(sub_seed(corpus_key, "paint"), static_cast<std::uint64_t>(img) *
                                                            spec.grid_sizes.size() + g);
            auto paint = [&](int i, int j, const std::string& concept_id) {
                double* dst = &grid.at(i, j, 0);
                if (noiseless) {
                    const std::vector<float>& v = base.at(concept_id);
                    std::copy(v.begin(), v.end(), dst);
                } else {
                    const std::uint64_t idx =
                        sub_seed(grid_key, static_cast<std::uint64_t>(i) * side + j);
                    const std::vector<float> v = embedder.draw(concept_id, idx);
                    std::copy(v.begin(), v.end(), dst);
                }
            };
            for (int i = 0; i < side; ++i)
                for (int j = 0; j < side; ++j) paint(i, j, kBackgroundConcept);
            // Painter's order: later objects overwrite overlapping cells.
            for (const ObjectAnnotation& obj : rec.objects) {
                const CellRange r = dilated_cells(obj.box, grid, spec.extent);
                for (int i = r.i_lo; i <= r.i_hi; ++i)
                    for (int j = r.j_lo; j <= r.j_hi; ++j) paint(i, j, obj.label_path.back());
            }
            rec.grids.push_back(std::move(grid));
        }
        corpus.push_back(std::move(rec));
    }
    return corpus;
}

std::string sample_label(const ObjectAnnotation& ann, LabelPolicy policy, CounterRng& rng) {
    const std::size_t n = ann.label_path.size();
    if (n == 0) throw ValidationError("sample_label: empty label path");
    if (n == 1) return ann.label_path[0];
    if (policy == LabelPolicy::last_two)
        return ann.label_path[n - 2 + static_cast<std::size_t>(rng.uniform_int(0, 1))];
    return ann.label_path[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(n) - 1))];
}

void save_annotations(const std::vector<SceneRecord>& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("annotations: cannot open '" + path + "' for writing");
    for (const SceneRecord& rec : corpus) {
        json j;
        j["image_id"] = rec.image_id;
        j["width"] = rec.extent.width;
        j["height"] = rec.extent.height;
        json objs = json::array();
        for (const ObjectAnnotation& obj : rec.objects) {
            json o;
            o["box"] = {obj.box.x1, obj.box.y1, obj.box.x2, obj.box.y2};
            o["labels"] = obj.label_path;
            objs.push_back(std::move(o));
        }
        j["objects"] = std::move(objs);
        out << j.dump() << '\n';
    }
}

std::vector<SceneRecord> load_annotations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("annotations: cannot open '" + path + "'");
    std::vector<SceneRecord> corpus;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("annotations: ") + e.what(), lineno);
        }
        SceneRecord rec;
        try {
            rec.image_id = j.at("image_id").get<std::string>();
            rec.extent.width = j.at("width").get<double>();
            rec.extent.height = j.at("height").get<double>();
            for (const json& o : j.at("objects")) {
                ObjectAnnotation obj;
                const json& b = o.at("box");
                if (!b.is_array() || b.size() != 4)
                    throw ValidationError("annotations: box must have 4 entries in '" +
                                          rec.image_id + "'");
                obj.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                           b[3].get<double>()};
                obj.label_path = o.at("labels").get<std::vector<std::string>>();
                rec.objects.push_back(std::move(obj));
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("annotations: ") + e.what(), lineno);
        }
        if (rec.extent.width <= 0 || rec.extent.height <= 0)
            throw ValidationError("annotations: non-positive extent in '" + rec.image_id + "'");
        for (const ObjectAnnotation& obj : rec.objects) {
            if (!obj.box.valid())
                throw ValidationError("annotations: invalid box in '" + rec.image_id + "'");
            if (obj.box.x1 < 0 || obj.box.y1 < 0 || obj.box.x2 > rec.extent.width ||
                obj.box.y2 > rec.extent.height)
                throw ValidationError("annotations: box outside extent in '" + rec.image_id + "'");
            if (obj.label_path.empty())
                throw ValidationError("annotations: empty label path in '" + rec.image_id + "'");
        }
        if (!seen_ids.insert(rec.image_id).second)
            throw ValidationError("annotations: duplicate image_id '" + rec.image_id + "'");
        corpus.push_back(std::move(rec));
    }
    return corpus;
}

void save_corpus_spec(const CorpusSpec& spec, const std::string& path) {
    json j;
    j["n_images"] = spec.n_images;
    j["min_objects"] = spec.min_objects;
    j["max_objects"] = spec.max_objects;
    j["dim"] = spec.dim;
    j["seed"] = spec.seed;
    j["noise_sigma"] = spec.noise_sigma;
    j["extent"] = {spec.extent.width, spec.extent.height};
    j["grid_sizes"] = spec.grid_sizes;
    j["min_object_size"] = spec.min_object_size;
    j["max_object_size"] = spec.max_object_size;
    j["min_aspect"] = spec.min_aspect;
    j["max_aspect"] = spec.max_aspect;
    json nodes = json::array();
    for (const ConceptNode& n : spec.concepts.nodes()) {
        json nj;
        nj["id"] = n.id;
        nj["name"] = n.name;
        if (n.parent) nj["parent"] = *n.parent;
        nj["embedding_seed"] = n.embedding_seed;
        nodes.push_back(std::move(nj));
    }
    j["concepts"] = std::move(nodes);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("corpus spec: cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

CorpusSpec load_corpus_spec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("corpus spec: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(std::string("corpus spec: ") + e.what());
    }
    CorpusSpec spec;
    try {
        spec.n_images = j.at("n_images").get<int>();
        spec.min_objects = j.at("min_objects").get<int>();
        spec.max_objects = j.at("max_objects").get<int>();
        spec.dim = j.at("dim").get<int>();
        spec.seed = j.at("seed").get<std::uint64_t>();
        spec.noise_sigma = j.at("noise_sigma").get<double>();
        spec.extent = {j.at("extent")[0].get<double>(), j.at("extent")[1].get<double>()};
        spec.grid_sizes = j.at("grid_sizes").get<std::vector<int>>();
        spec.min_object_size = j.at("min_object_size").get<double>();
        spec.max_object_size = j.at("max_object_size").get<double>();
        spec.min_aspect = j.at("min_aspect").get<double>();
        spec.max_aspect = j.at("max_aspect").get<double>();
        std::vector<ConceptNode> nodes;
        for (const json& nj : j.at("concepts")) {
            ConceptNode n;
            n.id = nj.at("id").get<std::string>();
            n.name = nj.at("name").get<std::string>();
            if (nj.contains("parent")) n.parent = nj.at("parent").get<std::string>();
            n.embedding_seed = nj.at("embedding_seed").get<std::uint64_t>();
            nodes.push_back(std::move(n));
        }
        spec.concepts = Taxonomy(std::move(nodes));
    } catch (const json::exception& e) {
        throw FormatError(std::string("corpus spec: ") + e.what());
    }
    return spec;
}

}  // namespace objret::synthworld
