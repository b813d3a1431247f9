#include "objret/geometry.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "objret/errors.hpp"

namespace objret::geometry {

namespace {

std::atomic<std::uint64_t> g_grid_reads{0};

// Bilinear read at continuous grid point (x, y), clamped at the border.
void bilinear_sample(const FeatureGrid& grid, double x, double y, double* out) {
    g_grid_reads.fetch_add(1, std::memory_order_relaxed);
    const double gx = std::clamp(x - 0.5, 0.0, static_cast<double>(grid.width - 1));
    const double gy = std::clamp(y - 0.5, 0.0, static_cast<double>(grid.height - 1));
    const int j0 = std::min(static_cast<int>(gx), grid.width - 2 >= 0 ? grid.width - 2 : 0);
    const int i0 = std::min(static_cast<int>(gy), grid.height - 2 >= 0 ? grid.height - 2 : 0);
    const int j1 = std::min(j0 + 1, grid.width - 1);
    const int i1 = std::min(i0 + 1, grid.height - 1);
    const double fx = gx - j0;
    const double fy = gy - i0;
    const double w00 = (1.0 - fy) * (1.0 - fx);
    const double w01 = (1.0 - fy) * fx;
    const double w10 = fy * (1.0 - fx);
    const double w11 = fy * fx;
    for (int d = 0; d < grid.dim; ++d) {
        out[d] = w00 * grid.at(i0, j0, d) + w01 * grid.at(i0, j1, d) +
                 w10 * grid.at(i1, j0, d) + w11 * grid.at(i1, j1, d);
    }
}

}  // namespace

std::uint64_t grid_read_count() { return g_grid_reads.load(std::memory_order_relaxed); }
void reset_grid_read_count() { g_grid_reads.store(0, std::memory_order_relaxed); }

bool BBox::valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x1 <= x2 && y1 <= y2;
}

BBox BBox::clipped(double w, double h) const {
    BBox c;
    c.x1 = std::clamp(x1, 0.0, w);
    c.y1 = std::clamp(y1, 0.0, h);
    c.x2 = std::clamp(x2, 0.0, w);
    c.y2 = std::clamp(y2, 0.0, h);
    return c;
}

double iou(const BBox& a, const BBox& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    const double inter = std::max(0.0, iw) * std::max(0.0, ih);
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<ScoredBox> nms(std::vector<ScoredBox> candidates, double iou_threshold) {
    std::sort(candidates.begin(), candidates.end(),
              [](const ScoredBox& a, const ScoredBox& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
                  if (a.box.y1 != b.box.y1) return a.box.y1 < b.box.y1;
                  if (a.box.x2 != b.box.x2) return a.box.x2 < b.box.x2;
                  return a.box.y2 < b.box.y2;
              });
    std::vector<ScoredBox> kept;
    for (const ScoredBox& c : candidates) {
        bool suppressed = false;
        for (const ScoredBox& k : kept) {
            if (iou(c.box, k.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(c);
    }
    return kept;
}

FeatureGrid roi_pool(const FeatureGrid& grid, const BBox& box, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ValidationError("roi_pool: output resolution must be >= 1");
    const BBox b = box.clipped(grid.width, grid.height);
    if (b.area() <= 0.0) throw ValidationError("roi_pool: degenerate region after clipping");
    FeatureGrid out(out_h, out_w, grid.dim);
    const double cw = b.width() / out_w;
    const double ch = b.height() / out_h;
    for (int i = 0; i < out_h; ++i) {
        const double y = b.y1 + (i + 0.5) * ch;
        for (int j = 0; j < out_w; ++j) {
            const double x = b.x1 + (j + 0.5) * cw;
            bilinear_sample(grid, x, y, &out.at(i, j, 0));
        }
    }
    return out;
}

std::vector<float> pool_region_embedding(std::span<const FeatureGrid> grids,
                                         const BBox& box, const Extent& extent) {
    if (grids.empty()) throw ValidationError("pool_region_embedding: no grids");
    const int dim = grids[0].dim;
    for (const FeatureGrid& g : grids) {
        if (g.dim != dim) throw ConfigError("pool_region_embedding: grids disagree on dim");
    }
    std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
    int n_samples = 0;
    for (const FeatureGrid& g : grids) {
        BBox gb;
        gb.x1 = box.x1 * g.width / extent.width;
        gb.x2 = box.x2 * g.width / extent.width;
        gb.y1 = box.y1 * g.height / extent.height;
        gb.y2 = box.y2 * g.height / extent.height;
        const FeatureGrid pooled = roi_pool(g, gb, 2, 2);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int d = 0; d < dim; ++d) acc[d] += pooled.at(i, j, d);
        n_samples += 4;
    }
    std::vector<float> out(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) out[d] = static_cast<float>(acc[d] / n_samples);
    return out;
}

double l2_norm(std::span<const float> v) {
    double s = 0.0;
    for (const float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

void l2_normalize(std::span<float> v) {
    const double n = l2_norm(v);
    if (n < 1e-12) return;
    for (float& x : v) x = static_cast<float>(x / n);
}

double dot_f64(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

}  // namespace objret::geometry
