#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tesla/net.hpp"

namespace tesla {

struct GradcheckReport {
    bool passed = false;
    double max_rel_error = 0.0;
    std::vector<std::string> lines;  // one per tensor
};

// Central finite differences (h = 1e-6) against the analytic gradients for
// every parameter of a tiny model at several random points. Relative error is
// |a - f| / max(|a|, |f|, 1e-5), so near-zero entries are judged absolutely.
GradcheckReport gradcheck_tiny(uint64_t seed, double tol = 1e-4, int points = 3);

// Same check for an arbitrary config and sample; used by tests.
double gradcheck_max_rel_error(const ModelConfig& cfg, const GestureSample& sample, int label,
                               ParamTable& params, std::vector<std::string>* lines = nullptr);

GestureSample gradcheck_sample(uint64_t seed);
ModelConfig gradcheck_config();

}  // namespace tesla
