#pragma once

#include <array>
#include <vector>

#include "tesla/rng.hpp"
#include "tesla/types.hpp"

namespace tesla {

struct PreprocessConfig {
    double reference_range = 1.5;   // meters, horizontal range of the centroid
    double reference_azimuth = 0.0; // radians about the z axis
    int target_frames = 32;         // S
    int target_points = 1024;       // N, divisible by S

    void validate() const;
    int points_per_frame() const { return target_points / target_frames; }
};

struct AugmentConfig {
    double max_translation = 0.10;              // meters, per axis
    double scale_min = 0.8, scale_max = 1.25;   // about the centroid
    double jitter_sigma = 0.01;                 // meters
    double jitter_clip = 0.03;                  // per-component clamp
    bool shuffle = true;

    void validate() const;
};

// Rotate about z so the centroid azimuth matches the reference, then translate
// along boresight so the centroid's horizontal range equals the reference
// range. Throws on a centroid at the z axis (azimuth undefined).
GestureSample normalize_pose(const GestureSample& sample, const PreprocessConfig& cfg);

// Re-chunk the flat point sequence into S frames of floor(n/S) points each,
// remainder appended to the last frame. Requires n >= S.
GestureSample divide_frames(const GestureSample& sample, int S);

using Point3 = std::array<double, 3>;

// Exactly m points: K-means centroids when downsampling, iterated
// closest-pair midpoints when upsampling, identity when |input| == m.
std::vector<Point3> resample_frame(const std::vector<Point3>& points, int m, uint64_t seed);

// divide_frames(S) then resample_frame(N/S) per frame.
GestureSample resample_sample(const GestureSample& sample, const PreprocessConfig& cfg,
                              uint64_t seed = 0);

// Training-time augmentation: translation, scaling about the centroid,
// clamped Gaussian jitter, per-frame storage shuffle. Label untouched.
GestureSample augment(const GestureSample& sample, const AugmentConfig& cfg, Rng& rng);

}  // namespace tesla
