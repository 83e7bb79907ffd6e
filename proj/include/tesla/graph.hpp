#pragma once

#include <filesystem>
#include <vector>

#include "tesla/types.hpp"

namespace tesla {

struct GraphConfig {
    int k = 32;
    double alpha = 10.0;

    void validate() const;
};

// Directed edge: message flows from an earlier (or same-frame) point into a
// later point.
struct GraphEdge {
    int src = 0;
    int dst = 0;
    double dist = 0.0;
};

struct TemporalGraph {
    int node_count = 0;
    // Edges grouped by target in canonical tie-break order; offsets[i]..
    // offsets[i+1] index the incoming edges of node i.
    std::vector<GraphEdge> edges;
    std::vector<int> offsets;  // size node_count + 1

    int in_degree(int node) const { return offsets[node + 1] - offsets[node]; }
    void validate(const std::vector<int>& frames, int k) const;
};

// Per-column (x - min) / (max - min); a constant column maps to all zeros.
// Input and output are row-major n x 4.
std::vector<double> minmax_normalize(const std::vector<double>& features, int n);

// Multiplies the temporal column (index 3) by alpha in place.
void scale_temporal(std::vector<double>& features, int n, double alpha);

// Euclidean norm over all four feature dimensions, or +inf when b sits in a
// strictly later frame than a.
double masked_distance(const double* a, int frame_a, const double* b, int frame_b);

// Canonical point ordering: by (frame, x, y, z, storage index). Returns the
// rank of each storage-order point; used for the storage-order-independent
// tie-break.
std::vector<int> canonical_ranks(const std::vector<RadarPoint>& pts);

// The temporal KNN graph of the sample's flat point sequence.
TemporalGraph temporal_knn(const GestureSample& sample, const GraphConfig& cfg);

// Same, but all points treated as frame 0 (mask vacuous, temporal feature
// constant). Used by the time-collapsed ablation.
TemporalGraph temporal_knn_points(const std::vector<RadarPoint>& pts, const GraphConfig& cfg,
                                  bool collapse_time = false);

// Edge list as CSV "src,dst,distance" for inspection.
void dump_graph_csv(const TemporalGraph& g, const std::filesystem::path& path);

}  // namespace tesla
