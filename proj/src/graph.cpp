#include "tesla/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tesla/io.hpp"

namespace tesla {

void GraphConfig::validate() const {
    if (k < 1) throw std::invalid_argument("GraphConfig: k must be >= 1");
    if (alpha < 0) throw std::invalid_argument("GraphConfig: alpha must be non-negative");
}

void TemporalGraph::validate(const std::vector<int>& frames, int k) const {
    if (static_cast<int>(offsets.size()) != node_count + 1)
        throw std::logic_error("TemporalGraph: bad offsets");
    for (int i = 0; i < node_count; ++i) {
        if (in_degree(i) > k) throw std::logic_error("TemporalGraph: in-degree exceeds k");
        for (int e = offsets[i]; e < offsets[i + 1]; ++e) {
            const auto& edge = edges[e];
            if (edge.dst != i) throw std::logic_error("TemporalGraph: edge grouped under wrong target");
            if (edge.src == edge.dst) throw std::logic_error("TemporalGraph: self-loop");
            if (frames[edge.src] > frames[edge.dst])
                throw std::logic_error("TemporalGraph: edge from a later frame");
        }
    }
}

std::vector<double> minmax_normalize(const std::vector<double>& features, int n) {
    if (n < 1 || features.size() != static_cast<size_t>(n) * 4)
        throw std::invalid_argument("minmax_normalize: bad shape");
    for (double v : features)
        if (!std::isfinite(v)) throw std::invalid_argument("minmax_normalize: non-finite input");
    std::vector<double> out(features.size());
    for (int d = 0; d < 4; ++d) {
        double lo = features[d], hi = features[d];
        for (int i = 1; i < n; ++i) {
            lo = std::min(lo, features[i * 4 + d]);
            hi = std::max(hi, features[i * 4 + d]);
        }
        double span = hi - lo;
        for (int i = 0; i < n; ++i)
            out[i * 4 + d] = span > 0 ? (features[i * 4 + d] - lo) / span : 0.0;
    }
    return out;
}

void scale_temporal(std::vector<double>& features, int n, double alpha) {
    for (int i = 0; i < n; ++i) features[i * 4 + 3] *= alpha;
}

double masked_distance(const double* a, int frame_a, const double* b, int frame_b) {
    if (frame_b > frame_a) return std::numeric_limits<double>::infinity();
    double s = 0;
    for (int d = 0; d < 4; ++d) {
        double diff = a[d] - b[d];
        s += diff * diff;
    }
    return std::sqrt(s);
}

std::vector<int> canonical_ranks(const std::vector<RadarPoint>& pts) {
    std::vector<int> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto &p = pts[a], &q = pts[b];
        if (p.frame != q.frame) return p.frame < q.frame;
        if (p.x != q.x) return p.x < q.x;
        if (p.y != q.y) return p.y < q.y;
        if (p.z != q.z) return p.z < q.z;
        return a < b;
    });
    std::vector<int> rank(pts.size());
    for (size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i);
    return rank;
}

namespace {

struct Candidate {
    double dist;
    int src;
};

// Storage-order-independent ordering of equal-distance candidates:
// (distance, frame, x, y, z, canonical rank) lexicographic.
struct TieBreak {
    const std::vector<RadarPoint>& pts;
    const std::vector<int>& rank;
    bool operator()(const Candidate& a, const Candidate& b) const {
        if (a.dist != b.dist) return a.dist < b.dist;
        const auto &p = pts[a.src], &q = pts[b.src];
        if (p.frame != q.frame) return p.frame < q.frame;
        if (p.x != q.x) return p.x < q.x;
        if (p.y != q.y) return p.y < q.y;
        if (p.z != q.z) return p.z < q.z;
        return rank[a.src] < rank[b.src];
    }
};

}  // namespace

TemporalGraph temporal_knn_points(const std::vector<RadarPoint>& pts, const GraphConfig& cfg,
                                  bool collapse_time) {
    cfg.validate();
    int n = static_cast<int>(pts.size());
    if (n < 1) throw std::invalid_argument("temporal_knn: empty sample");

    std::vector<double> raw(static_cast<size_t>(n) * 4);
    std::vector<int> frames(n);
    std::vector<RadarPoint> keyed = pts;
    for (int i = 0; i < n; ++i) {
        int frame = collapse_time ? 0 : pts[i].frame;
        raw[i * 4 + 0] = pts[i].x;
        raw[i * 4 + 1] = pts[i].y;
        raw[i * 4 + 2] = pts[i].z;
        raw[i * 4 + 3] = frame;
        frames[i] = frame;
        keyed[i].frame = frame;
    }
    auto feat = minmax_normalize(raw, n);
    scale_temporal(feat, n, cfg.alpha);
    auto rank = canonical_ranks(keyed);
    TieBreak cmp{keyed, rank};

    TemporalGraph g;
    g.node_count = n;
    g.offsets.assign(n + 1, 0);
    std::vector<Candidate> cand;
    cand.reserve(n);
    for (int i = 0; i < n; ++i) {
        cand.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double d = masked_distance(&feat[i * 4], frames[i], &feat[j * 4], frames[j]);
            if (std::isinf(d)) continue;
            cand.push_back({d, j});
        }
        int take = std::min<int>(cfg.k, static_cast<int>(cand.size()));
        if (take < static_cast<int>(cand.size()))
            std::nth_element(cand.begin(), cand.begin() + take, cand.end(), cmp);
        std::sort(cand.begin(), cand.begin() + take, cmp);
        for (int e = 0; e < take; ++e) g.edges.push_back({cand[e].src, i, cand[e].dist});
        g.offsets[i + 1] = static_cast<int>(g.edges.size());
    }
    g.validate(frames, cfg.k);
    return g;
}

TemporalGraph temporal_knn(const GestureSample& sample, const GraphConfig& cfg) {
    return temporal_knn_points(sample.flat_points(), cfg, false);
}

void dump_graph_csv(const TemporalGraph& g, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open for writing: " + path.string());
    f << "src,dst,distance\n";
    for (const auto& e : g.edges)
        f << e.src << ',' << e.dst << ',' << format_double(e.dist) << '\n';
}

}  // namespace tesla
