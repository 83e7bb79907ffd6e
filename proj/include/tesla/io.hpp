#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "tesla/types.hpp"

namespace tesla {

// Load/validation failures carry the offending path and, where known, the row.
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest decimal representation that round-trips the double exactly.
// Integral values keep a trailing ".0" so the column is visibly real-valued.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);

// Sample file: CSV with header "frame,x,y,z", one point per row, frame
// indices non-decreasing in file order.
void save_sample(const GestureSample& sample, const std::filesystem::path& path);
GestureSample load_sample(const std::filesystem::path& path);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path,
                   const std::filesystem::path& classes_path);
DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

// Loads every referenced sample, resolves labels via classes.txt next to the
// manifest, groups by split.
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace tesla
