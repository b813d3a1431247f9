#include "objret/embedstore.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "objret/errors.hpp"

namespace objret::embedstore {

const ImageCacheRecord* EmbeddingStore::find(const std::string& image_id) const {
    const auto it = index_.find(image_id);
    return it == index_.end() ? nullptr : &records_[it->second];
}

std::size_t EmbeddingStore::total_proposals() const {
    std::size_t n = 0;
    for (const ImageCacheRecord& r : records_) n += r.proposals.size();
    return n;
}

void EmbeddingStore::add_record(ImageCacheRecord record) {
    if (index_.count(record.image_id))
        throw ValidationError("store: duplicate image_id '" + record.image_id + "'");
    double prev = 2.0;
    for (const Proposal& p : record.proposals) {
        if (static_cast<int>(p.embedding.size()) != dim_)
            throw ConfigError("store: proposal dim mismatch in '" + record.image_id + "'");
        if (!(p.objectness >= 0.0f && p.objectness <= 1.0f))
            throw ValidationError("store: objectness outside [0,1] in '" + record.image_id + "'");
        const double norm = geometry::l2_norm(p.embedding);
        if (std::abs(norm - 1.0) > 1e-4)
            throw ValidationError("store: embedding not unit norm in '" + record.image_id + "'");
        if (p.objectness > prev)
            throw ValidationError("store: proposals not sorted in '" + record.image_id + "'");
        prev = p.objectness;
    }
    index_.emplace(record.image_id, records_.size());
    records_.push_back(std::move(record));
}

EmbeddingStore build_store(const std::vector<synthworld::SceneRecord>& corpus,
                           const probe::ObjectnessProbe& objectness, const BuildConfig& cfg) {
    if (cfg.k < 1) throw ConfigError("build_store: k must be >= 1");
    if (corpus.empty()) throw ConfigError("build_store: empty corpus");
    const int dim = corpus[0].grids.empty() ? 0 : corpus[0].grids[0].dim;
    if (static_cast<int>(objectness.weight.size()) != dim)
        throw ConfigError("build_store: probe dim does not match corpus dim");

    EmbeddingStore store(dim);
    for (const synthworld::SceneRecord& rec : corpus) {
        const std::vector<geometry::ScoredBox> picked =
            probe::propose(rec.grids, rec.extent, objectness, cfg.stride, cfg.scales,
                           cfg.nms_iou, cfg.k);
        ImageCacheRecord out;
        out.image_id = rec.image_id;
        out.proposals.reserve(picked.size());
        for (const geometry::ScoredBox& sb : picked) {
            Proposal p;
            // Coordinates round through f32 so the cache file round-trips
            // bit-exactly.
            p.box.x1 = static_cast<float>(sb.box.x1);
            p.box.y1 = static_cast<float>(sb.box.y1);
            p.box.x2 = static_cast<float>(sb.box.x2);
            p.box.y2 = static_cast<float>(sb.box.y2);
            p.objectness = static_cast<float>(sb.score);
            p.embedding = geometry::pool_region_embedding(rec.grids, sb.box, rec.extent);
            geometry::l2_normalize(p.embedding);
            out.proposals.push_back(std::move(p));
        }
        store.add_record(std::move(out));
    }
    return store;
}

std::vector<QueryScores> score_query(const EmbeddingStore& store, std::span<const float> query) {
    if (static_cast<int>(query.size()) != store.dim())
        throw ConfigError("score_query: query dim does not match store dim");
    std::vector<QueryScores> out;
    out.reserve(store.records().size());
    for (const ImageCacheRecord& rec : store.records()) {
        QueryScores qs;
        qs.image_id = rec.image_id;
        qs.scores.reserve(rec.proposals.size());
        for (const Proposal& p : rec.proposals)
            qs.scores.push_back(geometry::dot_f64(query, p.embedding));
        out.push_back(std::move(qs));
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'W', 'D', 'U', 'C'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "cache format is little-endian; add byte swapping for this platform");

template <typename T>
void write_raw(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("cache: truncated file");
    return v;
}

}  // namespace

void save_store(const EmbeddingStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cache: cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    write_raw<std::uint32_t>(out, kVersion);
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
    write_raw<std::uint64_t>(out, static_cast<std::uint64_t>(store.records().size()));
    for (const ImageCacheRecord& rec : store.records()) {
        if (rec.image_id.size() > 0xffff)
            throw FormatError("cache: image_id longer than 65535 bytes");
        write_raw<std::uint16_t>(out, static_cast<std::uint16_t>(rec.image_id.size()));
        out.write(rec.image_id.data(), static_cast<std::streamsize>(rec.image_id.size()));
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(rec.proposals.size()));
        for (const Proposal& p : rec.proposals) {
            write_raw<float>(out, static_cast<float>(p.box.x1));
            write_raw<float>(out, static_cast<float>(p.box.y1));
            write_raw<float>(out, static_cast<float>(p.box.x2));
            write_raw<float>(out, static_cast<float>(p.box.y2));
            write_raw<float>(out, p.objectness);
            out.write(reinterpret_cast<const char*>(p.embedding.data()),
                      static_cast<std::streamsize>(p.embedding.size() * sizeof(float)));
        }
    }
    if (!out) throw FormatError("cache: write failed for '" + path + "'");
}

EmbeddingStore load_store(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cache: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("cache: bad magic bytes");
    const std::uint32_t version = read_raw<std::uint32_t>(in);
    if (version != kVersion)
        throw FormatError("cache: unsupported version " + std::to_string(version));
    const std::uint32_t dim = read_raw<std::uint32_t>(in);
    const std::uint64_t n_records = read_raw<std::uint64_t>(in);

    EmbeddingStore store(static_cast<int>(dim));
    for (std::uint64_t r = 0; r < n_records; ++r) {
        const std::uint16_t id_len = read_raw<std::uint16_t>(in);
        std::string id(id_len, '\0');
        in.read(id.data(), id_len);
        if (!in) throw FormatError("cache: truncated file");
        ImageCacheRecord rec;
        rec.image_id = std::move(id);
        const std::uint32_t n_props = read_raw<std::uint32_t>(in);
        rec.proposals.reserve(n_props);
        for (std::uint32_t p = 0; p < n_props; ++p) {
            Proposal prop;
            prop.box.x1 = read_raw<float>(in);
            prop.box.y1 = read_raw<float>(in);
            prop.box.x2 = read_raw<float>(in);
            prop.box.y2 = read_raw<float>(in);
            prop.objectness = read_raw<float>(in);
            prop.embedding.resize(dim);
            in.read(reinterpret_cast<char*>(prop.embedding.data()),
                    static_cast<std::streamsize>(dim * sizeof(float)));
            if (!in) throw FormatError("cache: truncated file");
            rec.proposals.push_back(std::move(prop));
        }
        store.add_record(std::move(rec));
    }
    return store;
}

}  // namespace objret::embedstore
