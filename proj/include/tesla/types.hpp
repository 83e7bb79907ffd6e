#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tesla {

struct RadarPoint {
    double x = 0.0;  // lateral, meters
    double y = 0.0;  // boresight, meters
    double z = 0.0;  // vertical, meters
    int frame = 0;   // non-negative frame index

    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

struct Frame {
    int index = 0;
    std::vector<RadarPoint> points;  // possibly empty
};

// One gesture: an ordered sequence of frames, each a set of 3D points.
struct GestureSample {
    std::vector<Frame> frames;  // strictly increasing indices
    std::optional<int> label;
    std::map<std::string, std::string> meta;

    size_t point_count() const {
        size_t n = 0;
        for (const auto& f : frames) n += f.points.size();
        return n;
    }

    // Points in (frame, storage) order.
    std::vector<RadarPoint> flat_points() const {
        std::vector<RadarPoint> out;
        out.reserve(point_count());
        for (const auto& f : frames)
            for (const auto& p : f.points) out.push_back(p);
        return out;
    }

    void validate() const {
        if (frames.empty()) throw std::invalid_argument("sample has no frames");
        int prev = -1;
        size_t total = 0;
        for (const auto& f : frames) {
            if (f.index <= prev) throw std::invalid_argument("frame indices not strictly increasing");
            prev = f.index;
            for (const auto& p : f.points) {
                if (p.frame != f.index) throw std::invalid_argument("point frame field mismatch");
                if (!p.finite()) throw std::invalid_argument("non-finite point coordinate");
            }
            total += f.points.size();
        }
        if (total == 0) throw std::invalid_argument("sample has no points");
    }
};

enum class Split { Train, Validation, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        default: return "test";
    }
}

struct ManifestEntry {
    std::string path;
    std::string label;
    Split split = Split::Train;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> classes;  // label -> index by position

    int class_index(const std::string& name) const {
        for (size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == name) return static_cast<int>(i);
        return -1;
    }
};

struct Dataset {
    std::vector<GestureSample> train;
    std::vector<GestureSample> validation;
    std::vector<GestureSample> test;
    std::vector<std::string> classes;

    std::vector<GestureSample>& split(Split s) {
        switch (s) {
            case Split::Train: return train;
            case Split::Validation: return validation;
            default: return test;
        }
    }
    const std::vector<GestureSample>& split(Split s) const {
        return const_cast<Dataset*>(this)->split(s);
    }
};

}  // namespace tesla
