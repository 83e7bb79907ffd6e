#pragma once

#include <string>
#include <vector>

#include "tesla/types.hpp"

namespace tesla {

// The eight gesture classes plus a random-motion filler class used by the
// streaming rejection path.
inline const std::vector<std::string>& synth_class_names() {
    static const std::vector<std::string> names = {
        "swipe-left", "swipe-right", "swipe-up", "swipe-down",
        "push",       "pull",        "circle-cw", "circle-ccw", "no-gesture"};
    return names;
}

struct SyntheticSpec {
    std::vector<std::string> classes = {"swipe-left", "swipe-right", "swipe-up", "swipe-down",
                                        "push",       "pull",        "circle-cw", "circle-ccw"};
    int frames_per_gesture = 20;
    int points_min = 5;
    int points_max = 10;
    double noise_sigma = 0.02;    // per-point sensor noise (m)
    double cluster_sigma = 0.05;  // spatial extent of the hand return around the track (m)
    double cluster_growth = 1.0;  // extent multiplier reached at the last frame (1 = constant)
    int samples_per_class = 10;
    uint64_t seed = 1;

    void validate() const;
};

// Deterministic: same spec + seed gives bit-identical output. Each sample is
// generated from an RNG substream keyed by (seed, motion family, index), so
// mirror-pair classes built from the same index are exact spatial mirrors.
std::vector<GestureSample> synth_generate(const SyntheticSpec& spec);

// Single sample, addressable independently of generation order.
GestureSample synth_sample(const SyntheticSpec& spec, const std::string& cls, int index);

}  // namespace tesla
