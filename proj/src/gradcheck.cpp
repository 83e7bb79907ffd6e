#include "tesla/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tesla/rng.hpp"
#include "tesla/train.hpp"

namespace tesla {

ModelConfig gradcheck_config() {
    ModelConfig cfg;
    cfg.k = 3;
    cfg.alpha = 1.0;
    cfg.layers = 2;
    cfg.msg_width = 8;
    cfg.heads = 2;
    cfg.pooled_width = 16;
    cfg.hidden1 = 16;
    cfg.hidden2 = 8;
    cfg.classes = 3;
    return cfg;
}

GestureSample gradcheck_sample(uint64_t seed) {
    Rng rng = Rng::substream(seed, {0x67636B73});
    GestureSample sample;
    for (int f = 0; f < 2; ++f) {
        Frame frame;
        frame.index = f;
        for (int i = 0; i < 4; ++i)
            frame.points.push_back({rng.uniform(-1.0, 1.0), rng.uniform(0.5, 2.0),
                                    rng.uniform(-1.0, 1.0), f});
        sample.frames.push_back(frame);
    }
    sample.validate();
    return sample;
}

double gradcheck_max_rel_error(const ModelConfig& cfg, const GestureSample& sample, int label,
                               ParamTable& params, std::vector<std::string>* lines) {
    ForwardTrace trace;
    classify_forward(sample, cfg, params, trace);
    ParamTable analytic = backward(trace, label);

    const double h = 1e-6;
    double worst = 0.0;
    for (auto& [name, tensor] : params) {
        double tensor_worst = 0.0;
        auto& a = analytic.at(name);
        for (size_t i = 0; i < tensor.data.size(); ++i) {
            double saved = tensor.data[i];
            tensor.data[i] = saved + h;
            double up = cross_entropy(classify_forward(sample, cfg, params), label);
            tensor.data[i] = saved - h;
            double down = cross_entropy(classify_forward(sample, cfg, params), label);
            tensor.data[i] = saved;
            double fd = (up - down) / (2.0 * h);
            double an = a.data[i];
            double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-5});
            tensor_worst = std::max(tensor_worst, rel);
        }
        worst = std::max(worst, tensor_worst);
        if (lines) {
            std::ostringstream os;
            os << name << " max_rel " << tensor_worst;
            lines->push_back(os.str());
        }
    }
    return worst;
}

GradcheckReport gradcheck_tiny(uint64_t seed, double tol, int points) {
    ModelConfig cfg = gradcheck_config();
    GestureSample sample = gradcheck_sample(seed);
    GradcheckReport report;
    for (int p = 0; p < points; ++p) {
        ParamTable params = init_params(cfg, seed + static_cast<uint64_t>(p) + 1);
        if (p > 0) {
            // Move off the identity-transform initialization too.
            Rng rng = Rng::substream(seed, {0x70657274, static_cast<uint64_t>(p)});
            for (auto& [name, tensor] : params)
                for (auto& v : tensor.data) v += rng.uniform(-0.05, 0.05);
        }
        int label = p % cfg.classes;
        std::vector<std::string> lines;
        double worst = gradcheck_max_rel_error(cfg, sample, label, params, &lines);
        report.max_rel_error = std::max(report.max_rel_error, worst);
        if (p == 0) report.lines = std::move(lines);
    }
    report.passed = report.max_rel_error <= tol;
    return report;
}

}  // namespace tesla
