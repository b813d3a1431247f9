#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace objret::geometry {

// Axis-aligned box over the half-open rectangle [x1,x2) x [y1,y2),
// continuous scene coordinates. area = (x2-x1)*(y2-y1).
struct BBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }

    bool valid() const;
    BBox clipped(double w, double h) const;

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct ScoredBox {
    BBox box;
    double score = 0.0;

    friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

struct Extent {
    double width = 0.0;
    double height = 0.0;

    friend bool operator==(const Extent&, const Extent&) = default;
};

// Dense (height, width, dim) feature tensor. Cell (i, j) is centered at
// continuous grid coordinates (j + 0.5, i + 0.5).
struct FeatureGrid {
    int height = 0;
    int width = 0;
    int dim = 0;
    std::vector<double> values;  // row-major, innermost = dim

    FeatureGrid() = default;
    FeatureGrid(int h, int w, int d)
        : height(h), width(w), dim(d),
          values(static_cast<std::size_t>(h) * w * d, 0.0) {}

    double& at(int i, int j, int d) {
        return values[(static_cast<std::size_t>(i) * width + j) * dim + d];
    }
    double at(int i, int j, int d) const {
        return values[(static_cast<std::size_t>(i) * width + j) * dim + d];
    }

    friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;
};

// Instrumentation: total bilinear reads of any FeatureGrid since the last
// reset. The embedding cache's query path must leave this untouched.
std::uint64_t grid_read_count();
void reset_grid_read_count();

// Intersection-over-union; 0 by convention when the union has zero area.
double iou(const BBox& a, const BBox& b);

// Greedy suppression: survivors in descending score; no surviving pair has
// IoU > iou_threshold. Ties broken by (score desc, x1 asc, y1 asc, x2, y2).
std::vector<ScoredBox> nms(std::vector<ScoredBox> candidates, double iou_threshold);

// One bilinear sample at the center of each of out_h x out_w equal sub-cells
// of `box` (box in grid coordinates). Throws ValidationError for a box with
// no area left after clipping to the grid.
FeatureGrid roi_pool(const FeatureGrid& grid, const BBox& box, int out_h, int out_w);

// 2x2 roi_pool on every grid, mean over all sub-cells and grids. `box` is in
// scene coordinates; each grid is assumed to span `extent` uniformly.
std::vector<float> pool_region_embedding(std::span<const FeatureGrid> grids,
                                         const BBox& box, const Extent& extent);

// L2 norm / in-place normalization helpers shared by the embedding modules.
double l2_norm(std::span<const float> v);
void l2_normalize(std::span<float> v);
double dot_f64(std::span<const float> a, std::span<const float> b);

}  // namespace objret::geometry
