#include "tesla/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tesla/rng.hpp"

namespace tesla {

void SyntheticSpec::validate() const {
    if (classes.empty()) throw std::invalid_argument("SyntheticSpec: empty class set");
    const auto& known = synth_class_names();
    for (const auto& c : classes)
        if (std::find(known.begin(), known.end(), c) == known.end())
            throw std::invalid_argument("SyntheticSpec: unknown class '" + c + "'");
    if (frames_per_gesture < 2) throw std::invalid_argument("SyntheticSpec: frames must be >= 2");
    if (points_min < 1) throw std::invalid_argument("SyntheticSpec: points-per-frame min must be >= 1");
    if (points_max < points_min) throw std::invalid_argument("SyntheticSpec: points range inverted");
    if (noise_sigma < 0) throw std::invalid_argument("SyntheticSpec: negative noise sigma");
    if (cluster_sigma < 0) throw std::invalid_argument("SyntheticSpec: negative cluster sigma");
    if (cluster_growth <= 0) throw std::invalid_argument("SyntheticSpec: cluster growth must be positive");
    if (samples_per_class < 1) throw std::invalid_argument("SyntheticSpec: samples per class must be >= 1");
}

namespace {

enum class Family { SwipeX, SwipeZ, PushY, Circle, NoGesture };

struct ClassMotion {
    Family family;
    bool mirror;      // negate the family's mirror axis after generation
    double dir;       // displacement sign inside the canonical trajectory
};

ClassMotion class_motion(const std::string& cls) {
    if (cls == "swipe-right") return {Family::SwipeX, false, +1.0};
    if (cls == "swipe-left") return {Family::SwipeX, true, +1.0};
    if (cls == "swipe-up") return {Family::SwipeZ, false, +1.0};
    if (cls == "swipe-down") return {Family::SwipeZ, true, +1.0};
    if (cls == "push") return {Family::PushY, false, -1.0};
    if (cls == "pull") return {Family::PushY, false, +1.0};
    if (cls == "circle-cw") return {Family::Circle, false, +1.0};
    if (cls == "circle-ccw") return {Family::Circle, true, +1.0};
    return {Family::NoGesture, false, +1.0};
}

constexpr double kSwipeSpan = 0.6;    // meters end to end
constexpr double kCircleRadius = 0.25;

}  // namespace

GestureSample synth_sample(const SyntheticSpec& spec, const std::string& cls, int index) {
    auto motion = class_motion(cls);
    Rng rng = Rng::substream(spec.seed, {static_cast<uint64_t>(motion.family),
                                        static_cast<uint64_t>(index)});

    double cx = rng.uniform(-0.1, 0.1);
    double cy = rng.uniform(0.9, 1.5);
    double cz = rng.uniform(-0.1, 0.1);
    // Circles start near the top of the ring with a little wobble. Keeping the
    // start angle roughly fixed (instead of uniform) leaves the widening of the
    // return cluster readable as an absolute spatial cue around the ring.
    double phase = motion.family == Family::Circle ? rng.uniform(-0.3, 0.3) : 0.0;

    GestureSample sample;
    int F = spec.frames_per_gesture;
    double wx = cx, wz = cz;  // random-walk state for no-gesture
    for (int f = 0; f < F; ++f) {
        double t = static_cast<double>(f) / (F - 1);  // 0..1
        double px = cx, py = cy, pz = cz;
        switch (motion.family) {
            case Family::SwipeX: px += motion.dir * kSwipeSpan * (t - 0.5); break;
            case Family::SwipeZ: pz += motion.dir * kSwipeSpan * (t - 0.5); break;
            case Family::PushY: py += motion.dir * kSwipeSpan * (t - 0.5); break;
            case Family::Circle: {
                // Clockwise when viewed from +y (top view of the x-z plane).
                double a = phase - motion.dir * 2.0 * std::numbers::pi * t;
                px += kCircleRadius * std::cos(a);
                pz += kCircleRadius * std::sin(a);
                break;
            }
            case Family::NoGesture:
                wx += rng.gauss(0.0, 0.05);
                wz += rng.gauss(0.0, 0.05);
                px = wx;
                pz = wz;
                break;
        }
        Frame frame;
        frame.index = f;
        int count = static_cast<int>(rng.uniform_int(spec.points_min, spec.points_max));
        // The hand opens up over the course of a gesture, so the return
        // cluster widens from cluster_sigma to cluster_sigma * cluster_growth.
        double extent = spec.cluster_sigma * (1.0 + (spec.cluster_growth - 1.0) * t);
        for (int p = 0; p < count; ++p) {
            // Each return scatters off a different part of the hand, so the
            // cloud has spatial extent on top of the per-point sensor noise.
            double ox = rng.gauss(0.0, extent);
            double oy = rng.gauss(0.0, extent);
            double oz = rng.gauss(0.0, extent);
            frame.points.push_back(RadarPoint{px + ox + rng.gauss(0.0, spec.noise_sigma),
                                              py + oy + rng.gauss(0.0, spec.noise_sigma),
                                              pz + oz + rng.gauss(0.0, spec.noise_sigma), f});
        }
        sample.frames.push_back(std::move(frame));
    }

    if (motion.mirror) {
        // Mirror classes are exact axis reflections of their canonical twin.
        for (auto& fr : sample.frames)
            for (auto& p : fr.points) {
                if (motion.family == Family::SwipeZ)
                    p.z = -p.z;
                else
                    p.x = -p.x;
            }
    }

    sample.meta["class"] = cls;
    sample.meta["index"] = std::to_string(index);
    sample.meta["source"] = "synthetic";
    sample.validate();
    return sample;
}

std::vector<GestureSample> synth_generate(const SyntheticSpec& spec) {
    spec.validate();
    std::vector<GestureSample> out;
    out.reserve(spec.classes.size() * static_cast<size_t>(spec.samples_per_class));
    for (size_t c = 0; c < spec.classes.size(); ++c) {
        for (int i = 0; i < spec.samples_per_class; ++i) {
            auto s = synth_sample(spec, spec.classes[c], i);
            s.label = static_cast<int>(c);
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace tesla
