#include "tesla/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace tesla {

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, end);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
        s += ".0";
    return s;
}

double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw LoadError("malformed number '" + s + "' in " + context);
    return v;
}

static std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

void save_sample(const GestureSample& sample, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open for writing: " + path.string());
    f << "frame,x,y,z\n";
    for (const auto& fr : sample.frames)
        for (const auto& p : fr.points)
            f << fr.index << ',' << format_double(p.x) << ',' << format_double(p.y) << ','
              << format_double(p.z) << '\n';
    if (!f) throw LoadError("write failed: " + path.string());
}

GestureSample load_sample(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("missing sample file: " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw LoadError("empty sample file: " + path.string());
    GestureSample sample;
    int row = 1;
    int prev_frame = -1;
    while (std::getline(f, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto cols = split_csv(line);
        std::string ctx = path.string() + " row " + std::to_string(row);
        if (cols.size() != 4) throw LoadError("malformed row (expected 4 columns) in " + ctx);
        int frame = static_cast<int>(parse_double(cols[0], ctx));
        if (frame < 0) throw LoadError("negative frame index in " + ctx);
        if (frame < prev_frame)
            throw LoadError("frame index decreases (got " + std::to_string(frame) + " after " +
                            std::to_string(prev_frame) + ") in " + ctx);
        RadarPoint p{parse_double(cols[1], ctx), parse_double(cols[2], ctx),
                     parse_double(cols[3], ctx), frame};
        if (!p.finite()) throw LoadError("non-finite coordinate in " + ctx);
        if (frame != prev_frame) sample.frames.push_back(Frame{frame, {}});
        sample.frames.back().points.push_back(p);
        prev_frame = frame;
    }
    if (sample.point_count() == 0) throw LoadError("sample has no points: " + path.string());
    sample.validate();
    return sample;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path,
                   const std::filesystem::path& classes_path) {
    {
        std::ofstream f(manifest_path, std::ios::binary);
        if (!f) throw LoadError("cannot open for writing: " + manifest_path.string());
        f << "path,label,split\n";
        for (const auto& e : manifest.entries)
            f << e.path << ',' << e.label << ',' << split_name(e.split) << '\n';
    }
    std::ofstream f(classes_path, std::ios::binary);
    if (!f) throw LoadError("cannot open for writing: " + classes_path.string());
    for (const auto& c : manifest.classes) f << c << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream f(manifest_path, std::ios::binary);
    if (!f) throw LoadError("missing manifest: " + manifest_path.string());
    DatasetManifest m;
    std::string line;
    if (!std::getline(f, line)) throw LoadError("empty manifest: " + manifest_path.string());
    int row = 1;
    while (std::getline(f, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto cols = split_csv(line);
        std::string ctx = manifest_path.string() + " row " + std::to_string(row);
        if (cols.size() != 3) throw LoadError("malformed row (expected 3 columns) in " + ctx);
        ManifestEntry e;
        e.path = cols[0];
        e.label = cols[1];
        if (cols[2] == "train")
            e.split = Split::Train;
        else if (cols[2] == "validation")
            e.split = Split::Validation;
        else if (cols[2] == "test")
            e.split = Split::Test;
        else
            throw LoadError("unknown split '" + cols[2] + "' in " + ctx);
        m.entries.push_back(std::move(e));
    }

    auto classes_path = manifest_path.parent_path() / "classes.txt";
    std::ifstream cf(classes_path, std::ios::binary);
    if (!cf) throw LoadError("missing class table: " + classes_path.string());
    while (std::getline(cf, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) m.classes.push_back(line);
    }
    return m;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    auto manifest = load_manifest(manifest_path);
    Dataset ds;
    ds.classes = manifest.classes;
    auto base = manifest_path.parent_path();
    for (const auto& e : manifest.entries) {
        int label = manifest.class_index(e.label);
        if (label < 0)
            throw LoadError("unknown label '" + e.label + "' for " + e.path);
        std::filesystem::path p(e.path);
        if (p.is_relative()) p = base / p;
        auto sample = load_sample(p);
        sample.label = label;
        ds.split(e.split).push_back(std::move(sample));
    }
    return ds;
}

}  // namespace tesla
