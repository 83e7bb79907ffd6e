#include "tesla/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tesla/io.hpp"
#include "tesla/rng.hpp"

namespace tesla {

void TrainConfig::validate() const {
    if (lr_init <= 0 || lr_decay <= 0 || lr_decay_period <= 0)
        throw std::invalid_argument("TrainConfig: schedule values must be positive");
    if (patience <= 0 || max_epochs <= 0 || batch_size <= 0)
        throw std::invalid_argument("TrainConfig: counters must be positive");
    if (patience > max_epochs)
        throw std::invalid_argument("TrainConfig: patience exceeds max epochs");
    augment_cfg.validate();
}

double cross_entropy(const std::vector<double>& logits, int label) {
    if (label < 0 || label >= static_cast<int>(logits.size()))
        throw std::out_of_range("cross_entropy: label out of range");
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0;
    for (double v : logits) sum += std::exp(v - mx);
    return std::log(sum) - (logits[label] - mx);
}

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
    return cfg.lr_init * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_period);
}

OptimizerState make_optimizer_state(const ModelConfig& cfg) {
    OptimizerState s;
    for (const auto& [name, shape] : param_shapes(cfg)) {
        s.m.emplace(name, Tensor(shape));
        s.v.emplace(name, Tensor(shape));
    }
    return s;
}

void adam_step(ParamTable& params, const ParamTable& grads, OptimizerState& state, double lr,
               const TrainConfig& cfg) {
    ++state.step;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end() || git->second.shape != p.shape)
            throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
        auto& m = state.m.at(name).data;
        auto& v = state.v.at(name).data;
        const auto& g = git->second.data;
        for (size_t i = 0; i < p.data.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

std::vector<GestureSample> preprocess_samples(const std::vector<GestureSample>& samples,
                                              const PreprocessConfig& cfg, uint64_t seed) {
    std::vector<GestureSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples)
        out.push_back(resample_sample(normalize_pose(s, cfg), cfg, seed));
    return out;
}

namespace {

int argmax_class(const std::vector<double>& logits) {
    int best = 0;
    for (size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = static_cast<int>(i);
    return best;
}

}  // namespace

TrainResult train(const std::vector<GestureSample>& train_split,
                  const std::vector<GestureSample>& val_split, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, const std::function<void(const EpochRow&)>& on_epoch) {
    mcfg.validate();
    tcfg.validate();
    if (train_split.empty() || val_split.empty())
        throw std::invalid_argument("train: empty train or validation split");
    for (const auto& s : train_split)
        if (!s.label) throw std::invalid_argument("train: unlabeled training sample");

    ParamTable params = init_params(mcfg, tcfg.seed);
    OptimizerState opt = make_optimizer_state(mcfg);

    TrainResult result;
    ForwardTrace trace;
    std::vector<int> order(train_split.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        double lr = lr_schedule(epoch, tcfg);
        Rng shuffle_rng = Rng::substream(tcfg.seed, {0x73687566ull, static_cast<uint64_t>(epoch)});
        shuffle_rng.shuffle(order);

        double loss_sum = 0;
        for (size_t start = 0; start < order.size(); start += tcfg.batch_size) {
            size_t end = std::min(order.size(), start + tcfg.batch_size);
            ParamTable batch_grads;
            for (const auto& [name, shape] : param_shapes(mcfg))
                batch_grads.emplace(name, Tensor(shape));

            // Fixed accumulation order over the batch for reproducibility.
            for (size_t bi = start; bi < end; ++bi) {
                int idx = order[bi];
                const GestureSample* sample = &train_split[idx];
                GestureSample augmented;
                if (tcfg.augment) {
                    Rng aug_rng = Rng::substream(
                        tcfg.seed, {0x617567ull, static_cast<uint64_t>(epoch),
                                    static_cast<uint64_t>(idx)});
                    augmented = augment(*sample, tcfg.augment_cfg, aug_rng);
                    sample = &augmented;
                }
                auto logits = classify_forward(*sample, mcfg, params, trace);
                double loss = cross_entropy(logits, *sample->label);
                if (!std::isfinite(loss))
                    throw TrainDivergence("non-finite loss at epoch " + std::to_string(epoch) +
                                          ", sample " + std::to_string(idx));
                loss_sum += loss;
                auto grads = backward(trace, *sample->label);
                double scale = 1.0 / static_cast<double>(end - start);
                for (auto& [name, g] : batch_grads) {
                    const auto& src = grads.at(name).data;
                    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += scale * src[i];
                }
            }
            adam_step(params, batch_grads, opt, lr, tcfg);
        }
        double train_loss = loss_sum / static_cast<double>(order.size());

        int correct = 0;
        for (const auto& s : val_split) {
            auto logits = classify_forward(s, mcfg, params);
            if (s.label && argmax_class(logits) == *s.label) ++correct;
        }
        double val_acc = static_cast<double>(correct) / static_cast<double>(val_split.size());

        EpochRow row{epoch, lr, train_loss, val_acc};
        result.history.push_back(row);
        if (on_epoch) on_epoch(row);

        if (result.best_epoch < 0 || val_acc > result.best_val_acc) {
            result.best_val_acc = val_acc;
            result.best_epoch = epoch;
            result.best_params = params;
        } else if (epoch - result.best_epoch >= tcfg.patience) {
            result.stopped_epoch = epoch;
            break;
        }
        result.stopped_epoch = epoch;
    }
    return result;
}

double ovr_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    size_t n = scores.size();
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] < scores[b]; });

    // Average ranks over ties, then the Mann-Whitney statistic.
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t t = i; t <= j; ++t) rank[idx[t]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0;
    int64_t p = 0;
    for (size_t t = 0; t < n; ++t)
        if (positive[t]) {
            pos_rank_sum += rank[t];
            ++p;
        }
    int64_t q = static_cast<int64_t>(n) - p;
    if (p == 0 || q == 0) return std::nan("");
    return (pos_rank_sum - static_cast<double>(p) * (p + 1) / 2.0) /
           (static_cast<double>(p) * static_cast<double>(q));
}

MetricsReport evaluate(const std::vector<GestureSample>& split, const ModelConfig& cfg,
                       const ParamTable& params) {
    if (split.empty()) throw std::invalid_argument("evaluate: empty split");
    MetricsReport rep;
    rep.confusion.assign(cfg.classes, std::vector<int64_t>(cfg.classes, 0));

    std::vector<std::vector<double>> scores;
    scores.reserve(split.size());
    classify_forward(split.front(), cfg, params);  // warm-up pass

    double total_s = 0;
    int correct = 0;
    for (const auto& s : split) {
        auto t0 = std::chrono::steady_clock::now();
        auto logits = classify_forward(s, cfg, params);
        auto t1 = std::chrono::steady_clock::now();
        total_s += std::chrono::duration<double>(t1 - t0).count();
        int pred = argmax_class(logits);
        if (s.label) {
            if (pred == *s.label) ++correct;
            rep.confusion[*s.label][pred]++;
        }
        scores.push_back(softmax(logits));
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
    rep.mean_inference_s = total_s / static_cast<double>(split.size());

    double auc_sum = 0;
    int auc_classes = 0;
    for (int c = 0; c < cfg.classes; ++c) {
        std::vector<double> s(split.size());
        std::vector<bool> pos(split.size());
        for (size_t i = 0; i < split.size(); ++i) {
            s[i] = scores[i][c];
            pos[i] = split[i].label && *split[i].label == c;
        }
        double auc = ovr_auc(s, pos);
        if (std::isnan(auc)) {
            rep.warnings.push_back("class " + std::to_string(c) +
                                   " absent from split; excluded from macro AUC");
        } else {
            auc_sum += auc;
            ++auc_classes;
        }
    }
    rep.macro_auc = auc_classes > 0 ? auc_sum / auc_classes : std::nan("");
    return rep;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRow>& history) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open for writing: " + path.string());
    f << "epoch,lr,train_loss,val_acc\n";
    for (const auto& r : history)
        f << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.train_loss) << ','
          << format_double(r.val_acc) << '\n';
}

}  // namespace tesla
