#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tesla/graph.hpp"
#include "tesla/tensor.hpp"
#include "tesla/types.hpp"

namespace tesla {

struct ModelConfig {
    int k = 32;
    double alpha = 10.0;
    int layers = 1;          // TeslaConv layers
    int msg_width = 64;      // f_o
    int heads = 8;           // m
    int pooled_width = 1024;
    int hidden1 = 512;
    int hidden2 = 256;
    int classes = 8;
    bool use_attention = true;   // off: A(M) = M
    bool collapse_time = false;  // ablation: all points on frame 0

    int head_dim() const { return msg_width / heads; }
    void validate() const;
    GraphConfig graph_config() const { return GraphConfig{k, alpha}; }
};

// Glorot-uniform weights, zero biases; the TF-Net output layer starts at zero
// so the initial transform is the identity.
ParamTable init_params(const ModelConfig& cfg, uint64_t seed);

// Shape table implied by the config; checkpoint loading validates against it.
std::vector<std::pair<std::string, std::vector<int>>> param_shapes(const ModelConfig& cfg);

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> v;
    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
};

struct TfnetTrace {
    std::vector<int> canon_order;  // row visit order for pooling; empty = storage order
    Mat x;              // n x 3 input coordinates
    Mat z1, a1;         // n x 64
    Mat z2, a2;         // n x 128
    std::vector<double> pooled;      // 128
    std::vector<int> pool_argmax;    // canonical-first argmax rows
    std::vector<double> z3, a3;      // 64
    std::vector<double> t9;          // 9, T = I + reshape
    Mat out;            // n x 3 transformed
};

struct AttentionTrace {
    Mat q, k, v;                 // E x f_o, head blocks in columns
    std::vector<double> probs;   // softmax rows, concatenated per node/head
    std::vector<size_t> prob_offsets;  // per (node, head) into probs
    Mat concat;                  // E x f_o
};

struct LayerTrace {
    Mat h_in;           // n x d_in
    Mat u;              // E x 2*d_in edge inputs
    Mat z1, a1;         // E x f_o message hidden
    Mat msg;            // E x f_o messages (canonical per-target order)
    AttentionTrace attn;
    Mat attended;       // E x f_o, A(M)
    Mat h_out;          // n x f_o
    std::vector<int> agg_argmax;  // n x f_o, edge-row index or -1
};

struct HeadTrace {
    Mat z, a;                        // n x pooled
    std::vector<double> pooled;      // global descriptor
    std::vector<int> pool_argmax;
    std::vector<double> z1, a1, z2, a2, logits;
};

// Cached activations for exact reverse-mode gradients. Holds onto the
// parameter table it was produced with; backward rejects a mismatched one.
struct ForwardTrace {
    const ParamTable* params = nullptr;
    ModelConfig cfg;
    int n = 0;
    std::vector<int> frames;
    std::vector<int> canon_order;  // point indices in canonical order
    TemporalGraph graph;
    TfnetTrace tfnet;
    std::vector<LayerTrace> layers;
    HeadTrace head;
    std::vector<double> logits;
};

// TF-Net: shared MLP 3-64-128, max pool, MLP 128-64-9, plus identity.
// Returns transformed points and fills the trace.
void tfnet_forward(const Mat& points, const ParamTable& params, TfnetTrace& trace);

// Per-edge messages MLP([h_i || h_j - h_i]) grouped by target in canonical
// order; layer is the parameter name prefix index.
void message_forward(const Mat& h, const TemporalGraph& graph, const ParamTable& params, int layer,
                     LayerTrace& trace);

// Scaled-dot multi-head self-attention over each node's message block.
void attention_forward(const Mat& messages, const TemporalGraph& graph, const ParamTable& params,
                       int layer, const ModelConfig& cfg, AttentionTrace& trace, Mat& attended);

// One TeslaConv layer stack applied to a flat point list; convenience wrapper
// used by tests.
Mat teslaconv_forward(const GestureSample& sample, const ModelConfig& cfg,
                      const ParamTable& params);

// Full network: tfnet, L x TeslaConv, point MLP + max pool, classifier.
std::vector<double> classify_forward(const GestureSample& sample, const ModelConfig& cfg,
                                     const ParamTable& params, ForwardTrace& trace);

std::vector<double> classify_forward(const GestureSample& sample, const ModelConfig& cfg,
                                     const ParamTable& params);

// Exact gradients of cross-entropy(logits, label) for every parameter.
ParamTable backward(const ForwardTrace& trace, int label);

struct FlopCounts {
    int64_t tfnet = 0;
    int64_t message = 0;
    int64_t attn_linear = 0;     // QKV and output projections, linear in edges
    int64_t attn_quadratic = 0;  // scores + weighted sum
    int64_t head = 0;
    int64_t classifier = 0;

    int64_t edge_linear() const { return message + attn_linear; }
    int64_t total() const {
        return tfnet + message + attn_linear + attn_quadratic + head + classifier;
    }
};

// Analytic count; dense map a->b over p rows costs 2*a*b*p. Edge-dependent
// terms use the realized edge count of the sample's graph.
FlopCounts count_flops(const ModelConfig& cfg, const GestureSample& sample);

double leaky_relu(double x);
double leaky_relu_grad(double pre);

}  // namespace tesla
