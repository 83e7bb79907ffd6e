#include "tesla/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tesla {

void PreprocessConfig::validate() const {
    if (target_frames < 1) throw std::invalid_argument("PreprocessConfig: S must be >= 1");
    if (target_points < 1) throw std::invalid_argument("PreprocessConfig: N must be >= 1");
    if (target_points % target_frames != 0)
        throw std::invalid_argument("PreprocessConfig: N must be divisible by S");
}

void AugmentConfig::validate() const {
    if (scale_min <= 0 || scale_max < scale_min)
        throw std::invalid_argument("AugmentConfig: bad scale range");
    if (jitter_clip < 0) throw std::invalid_argument("AugmentConfig: negative jitter clip");
    if (max_translation < 0 || jitter_sigma < 0)
        throw std::invalid_argument("AugmentConfig: negative magnitude");
}

GestureSample normalize_pose(const GestureSample& sample, const PreprocessConfig& cfg) {
    sample.validate();
    double sx = 0, sy = 0, sz = 0;
    size_t n = 0;
    for (const auto& f : sample.frames)
        for (const auto& p : f.points) {
            sx += p.x;
            sy += p.y;
            sz += p.z;
            ++n;
        }
    double cx = sx / n, cy = sy / n;
    double r = std::hypot(cx, cy);
    if (r < 1e-12) throw std::invalid_argument("normalize_pose: centroid on the z axis, azimuth undefined");

    // Azimuth measured from boresight (+y) about z; rotate so it lands on the
    // reference azimuth, then shift along boresight to the reference range.
    double az = std::atan2(cx, cy) - cfg.reference_azimuth;
    double c = std::cos(az), s = std::sin(az);
    double dy = cfg.reference_range - r;

    GestureSample out = sample;
    for (auto& f : out.frames)
        for (auto& p : f.points) {
            double x = c * p.x - s * p.y;
            double y = s * p.x + c * p.y;
            p.x = x;
            p.y = y + dy;
        }
    return out;
}

GestureSample divide_frames(const GestureSample& sample, int S) {
    sample.validate();
    if (S < 1) throw std::invalid_argument("divide_frames: S must be >= 1");
    auto pts = sample.flat_points();
    int n = static_cast<int>(pts.size());
    if (n < S)
        throw std::invalid_argument("divide_frames: too few points (" + std::to_string(n) +
                                    " < S=" + std::to_string(S) + ")");
    int per = n / S;
    GestureSample out;
    out.label = sample.label;
    out.meta = sample.meta;
    int cursor = 0;
    for (int f = 0; f < S; ++f) {
        int count = (f == S - 1) ? n - cursor : per;
        Frame frame;
        frame.index = f;
        frame.points.reserve(count);
        for (int i = 0; i < count; ++i) {
            RadarPoint p = pts[cursor++];
            p.frame = f;
            frame.points.push_back(p);
        }
        out.frames.push_back(std::move(frame));
    }
    return out;
}

namespace {

double sqdist(const Point3& a, const Point3& b) {
    double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

// Lloyd's K-means with k-means++ seeding; returns the final centroids in
// selection order. Empty clusters keep their previous centroid.
std::vector<Point3> kmeans(const std::vector<Point3>& pts, int k, uint64_t seed) {
    Rng rng(seed ^ 0x6b79636d65616e73ull);
    int n = static_cast<int>(pts.size());
    std::vector<Point3> centroids;
    centroids.reserve(k);
    centroids.push_back(pts[rng.uniform_int(0, n - 1)]);
    std::vector<double> d2(n);
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sqdist(pts[i], c));
            d2[i] = best;
            total += best;
        }
        int chosen;
        if (total <= 0) {
            chosen = static_cast<int>(rng.uniform_int(0, n - 1));
        } else {
            double u = rng.uniform() * total;
            chosen = n - 1;
            double acc = 0;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (u < acc) {
                    chosen = i;
                    break;
                }
            }
        }
        centroids.push_back(pts[chosen]);
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bestd = sqdist(pts[i], centroids[0]);
            for (int c = 1; c < k; ++c) {
                double d = sqdist(pts[i], centroids[c]);
                if (d < bestd) {
                    bestd = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<Point3> sums(k, {0, 0, 0});
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            for (int d = 0; d < 3; ++d) sums[assign[i]][d] += pts[i][d];
            ++counts[assign[i]];
        }
        for (int c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (int d = 0; d < 3; ++d) centroids[c][d] = sums[c][d] / counts[c];
    }
    return centroids;
}

}  // namespace

std::vector<Point3> resample_frame(const std::vector<Point3>& points, int m, uint64_t seed) {
    if (m < 1) throw std::invalid_argument("resample_frame: target count must be >= 1");
    if (points.empty()) throw std::invalid_argument("resample_frame: empty input");
    int n = static_cast<int>(points.size());
    if (n == m) return points;
    if (n > m) return kmeans(points, m, seed);

    // Upsample: the cheapest single-linkage merge over the current point set
    // is its closest pair; add that pair's centroid and repeat.
    std::vector<Point3> out = points;
    while (static_cast<int>(out.size()) < m) {
        int bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < out.size(); ++i)
            for (size_t j = i + 1; j < out.size(); ++j) {
                double d = sqdist(out[i], out[j]);
                if (d < best) {
                    best = d;
                    bi = static_cast<int>(i);
                    bj = static_cast<int>(j);
                }
            }
        out.push_back({(out[bi][0] + out[bj][0]) / 2, (out[bi][1] + out[bj][1]) / 2,
                       (out[bi][2] + out[bj][2]) / 2});
    }
    return out;
}

GestureSample resample_sample(const GestureSample& sample, const PreprocessConfig& cfg,
                              uint64_t seed) {
    cfg.validate();
    auto divided = divide_frames(sample, cfg.target_frames);
    int m = cfg.points_per_frame();
    GestureSample out;
    out.label = sample.label;
    out.meta = sample.meta;
    for (auto& f : divided.frames) {
        std::vector<Point3> pts;
        pts.reserve(f.points.size());
        for (const auto& p : f.points) pts.push_back({p.x, p.y, p.z});
        auto resampled = resample_frame(pts, m, seed + static_cast<uint64_t>(f.index));
        Frame frame;
        frame.index = f.index;
        for (const auto& p : resampled)
            frame.points.push_back(RadarPoint{p[0], p[1], p[2], f.index});
        out.frames.push_back(std::move(frame));
    }
    return out;
}

GestureSample augment(const GestureSample& sample, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    GestureSample out = sample;

    double tx = rng.uniform(-cfg.max_translation, cfg.max_translation);
    double ty = rng.uniform(-cfg.max_translation, cfg.max_translation);
    double tz = rng.uniform(-cfg.max_translation, cfg.max_translation);
    for (auto& f : out.frames)
        for (auto& p : f.points) {
            p.x += tx;
            p.y += ty;
            p.z += tz;
        }

    double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    if (scale != 1.0) {
        double sx = 0, sy = 0, sz = 0;
        size_t n = out.point_count();
        for (const auto& f : out.frames)
            for (const auto& p : f.points) {
                sx += p.x;
                sy += p.y;
                sz += p.z;
            }
        double cx = sx / n, cy = sy / n, cz = sz / n;
        for (auto& f : out.frames)
            for (auto& p : f.points) {
                p.x = cx + scale * (p.x - cx);
                p.y = cy + scale * (p.y - cy);
                p.z = cz + scale * (p.z - cz);
            }
    }

    auto jitter = [&] {
        double j = rng.gauss(0.0, cfg.jitter_sigma);
        return std::clamp(j, -cfg.jitter_clip, cfg.jitter_clip);
    };
    for (auto& f : out.frames)
        for (auto& p : f.points) {
            p.x += jitter();
            p.y += jitter();
            p.z += jitter();
        }

    if (cfg.shuffle)
        for (auto& f : out.frames) rng.shuffle(f.points);

    return out;
}

}  // namespace tesla
