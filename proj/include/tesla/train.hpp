#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tesla/net.hpp"
#include "tesla/preprocess.hpp"
#include "tesla/types.hpp"

namespace tesla {

struct TrainConfig {
    double lr_init = 0.001;
    double lr_decay = 0.5;
    int lr_decay_period = 20;  // epochs
    int patience = 100;        // early stopping, strict improvement
    int max_epochs = 300;
    int batch_size = 16;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    uint64_t seed = 1;
    bool augment = true;
    AugmentConfig augment_cfg;

    void validate() const;
};

struct TrainDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// -log softmax(logits)[label], log-sum-exp stabilized.
double cross_entropy(const std::vector<double>& logits, int label);

std::vector<double> softmax(const std::vector<double>& logits);

// L_init * d_r ^ floor(epoch / e_r); epochs are numbered from 0.
double lr_schedule(int epoch, const TrainConfig& cfg);

struct OptimizerState {
    ParamTable m, v;  // first/second moments, shapes mirror the parameters
    int64_t step = 0;
};

OptimizerState make_optimizer_state(const ModelConfig& cfg);

// Canonical bias-corrected Adam, in place.
void adam_step(ParamTable& params, const ParamTable& grads, OptimizerState& state, double lr,
               const TrainConfig& cfg);

struct MetricsReport {
    double accuracy = 0.0;
    double macro_auc = 0.0;
    std::vector<std::vector<int64_t>> confusion;  // [true][predicted]
    double mean_inference_s = 0.0;
    std::vector<std::string> warnings;  // classes excluded from the AUC mean
};

struct EpochRow {
    int epoch;
    double lr;
    double train_loss;
    double val_acc;
};

struct TrainResult {
    ParamTable best_params;
    int best_epoch = -1;
    double best_val_acc = 0.0;
    int stopped_epoch = -1;
    std::vector<EpochRow> history;
};

// normalize_pose + resample to S x (N/S) for every sample.
std::vector<GestureSample> preprocess_samples(const std::vector<GestureSample>& samples,
                                              const PreprocessConfig& cfg, uint64_t seed = 0);

// Per-epoch seeded shuffle, per-batch augmentation, forward/backward/Adam
// with the step-decay schedule, early stopping on validation accuracy.
// Expects preprocessed samples with labels set.
TrainResult train(const std::vector<GestureSample>& train_split,
                  const std::vector<GestureSample>& val_split, const ModelConfig& mcfg,
                  const TrainConfig& tcfg,
                  const std::function<void(const EpochRow&)>& on_epoch = nullptr);

// Accuracy (argmax, ties to the lowest class index), macro one-vs-rest AUC on
// softmax scores with tie half-credit, confusion matrix, timing after one
// warm-up pass.
MetricsReport evaluate(const std::vector<GestureSample>& split, const ModelConfig& cfg,
                       const ParamTable& params);

// Rank-based one-vs-rest AUC for one class; ties get half credit.
double ovr_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRow>& history);

}  // namespace tesla
