#include "tesla/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tesla/rng.hpp"

#if defined(__AVX__)
#include <immintrin.h>
extern "C" __m256d _ZGVdN4v_exp(__m256d);
#endif

namespace tesla {

constexpr double kLreluSlope = 0.2;

double leaky_relu(double x) { return x >= 0 ? x : kLreluSlope * x; }
double leaky_relu_grad(double pre) { return pre >= 0 ? 1.0 : kLreluSlope; }

void ModelConfig::validate() const {
    graph_config().validate();
    if (layers < 1) throw std::invalid_argument("ModelConfig: layers must be >= 1");
    if (classes < 2) throw std::invalid_argument("ModelConfig: classes must be >= 2");
    if (heads < 1 || msg_width < 1 || msg_width % heads != 0)
        throw std::invalid_argument("ModelConfig: msg_width must be divisible by heads");
    if (pooled_width < 1 || hidden1 < 1 || hidden2 < 1)
        throw std::invalid_argument("ModelConfig: non-positive layer width");
}

std::vector<std::pair<std::string, std::vector<int>>> param_shapes(const ModelConfig& cfg) {
    std::vector<std::pair<std::string, std::vector<int>>> shapes;
    auto add = [&](const std::string& name, std::vector<int> s) {
        shapes.emplace_back(name, std::move(s));
    };
    add("tfnet.fc1.w", {3, 64});
    add("tfnet.fc1.b", {64});
    add("tfnet.fc2.w", {64, 128});
    add("tfnet.fc2.b", {128});
    add("tfnet.fc3.w", {128, 64});
    add("tfnet.fc3.b", {64});
    add("tfnet.fc4.w", {64, 9});
    add("tfnet.fc4.b", {9});
    int fo = cfg.msg_width;
    for (int l = 0; l < cfg.layers; ++l) {
        int d_in = l == 0 ? 3 : fo;
        std::string p = "conv" + std::to_string(l) + ".";
        add(p + "msg.fc1.w", {2 * d_in, fo});
        add(p + "msg.fc1.b", {fo});
        add(p + "msg.fc2.w", {fo, fo});
        add(p + "msg.fc2.b", {fo});
        if (cfg.use_attention) {
            add(p + "attn.wq", {fo, fo});
            add(p + "attn.wk", {fo, fo});
            add(p + "attn.wv", {fo, fo});
            add(p + "attn.wo", {fo, fo});
        }
    }
    add("head.point.w", {fo, cfg.pooled_width});
    add("head.point.b", {cfg.pooled_width});
    add("head.fc1.w", {cfg.pooled_width, cfg.hidden1});
    add("head.fc1.b", {cfg.hidden1});
    add("head.fc2.w", {cfg.hidden1, cfg.hidden2});
    add("head.fc2.b", {cfg.hidden2});
    add("head.fc3.w", {cfg.hidden2, cfg.classes});
    add("head.fc3.b", {cfg.classes});
    return shapes;
}

ParamTable init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng = Rng::substream(seed, {0x706172616d73ull});
    ParamTable params;
    for (const auto& [name, shape] : param_shapes(cfg)) {
        Tensor t(shape);
        bool is_weight = shape.size() == 2;
        bool zero = name == "tfnet.fc4.w";  // identity transform at start
        if (is_weight && !zero) {
            double bound = std::sqrt(6.0 / (shape[0] + shape[1]));
            for (auto& v : t.data) v = rng.uniform(-bound, bound);
        }
        params.emplace(name, std::move(t));
    }
    return params;
}

namespace {

// Reuse the backing storage across calls when the shape already matches.
void ensure(Mat& m, int rows, int cols) {
    if (m.rows != rows || m.cols != cols) m = Mat(rows, cols);
}

const Tensor& get(const ParamTable& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw std::logic_error("missing parameter: " + name);
    return it->second;
}

Tensor& get_mut(ParamTable& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw std::logic_error("missing gradient slot: " + name);
    return it->second;
}


// The per-head blocks are tiny (r <= k rows, d = f_o / m columns), far below
// where BLAS call overhead pays off, so these two kernels stay hand-rolled.
// S (r x r) = scale * A B^T over r x d row blocks with leading dimension ld;
// B is staged transposed so the inner loop runs contiguously.
void small_abt(const double* a, const double* b, int r, int d, int ld, double scale, double* s,
               std::vector<double>& scratch) {
    scratch.resize(static_cast<size_t>(d) * r);
    for (int j = 0; j < r; ++j)
        for (int c = 0; c < d; ++c)
            scratch[static_cast<size_t>(c) * r + j] = b[static_cast<size_t>(j) * ld + c];
    for (int i = 0; i < r; ++i) {
        const double* ai = a + static_cast<size_t>(i) * ld;
        double* __restrict si = s + static_cast<size_t>(i) * r;
        std::fill(si, si + r, 0.0);
        for (int c = 0; c < d; ++c) {
            double av = ai[c];
            const double* __restrict bt = scratch.data() + static_cast<size_t>(c) * r;
            for (int j = 0; j < r; ++j) si[j] += av * bt[j];
        }
        for (int j = 0; j < r; ++j) si[j] *= scale;
    }
}

// C (r x d, leading dim ldc) (+)= scale * op(P) M for an r x r P and an
// r x d M with leading dimension ldm.
void small_pm(const double* p, bool trans_p, const double* m, int r, int d, int ldm, double scale,
              double* c, int ldc, bool accumulate) {
    constexpr int kMaxHeadDim = 128;
    double acc[kMaxHeadDim];
    if (d > kMaxHeadDim) throw std::logic_error("small_pm: head dim too large");
    for (int i = 0; i < r; ++i) {
        std::fill(acc, acc + d, 0.0);
        for (int j = 0; j < r; ++j) {
            double w = scale * (trans_p ? p[static_cast<size_t>(j) * r + i]
                                        : p[static_cast<size_t>(i) * r + j]);
            const double* __restrict mj = m + static_cast<size_t>(j) * ldm;
            for (int t = 0; t < d; ++t) acc[t] += w * mj[t];
        }
        double* ci = c + static_cast<size_t>(i) * ldc;
        if (accumulate)
            for (int t = 0; t < d; ++t) ci[t] += acc[t];
        else
            for (int t = 0; t < d; ++t) ci[t] = acc[t];
    }
}

// exp(s[c] - mx) in place over one softmax row, vector lanes when available.
void exp_shift_row(double* s, int r, double mx) {
    int c = 0;
#if defined(__AVX__)
    __m256d vmx = _mm256_set1_pd(mx);
    for (; c + 4 <= r; c += 4)
        _mm256_storeu_pd(s + c, _ZGVdN4v_exp(_mm256_sub_pd(_mm256_loadu_pd(s + c), vmx)));
#endif
    for (; c < r; ++c) s[c] = std::exp(s[c] - mx);
}

// Z = X * W + b
void linear(const Mat& x, const Tensor& w, const Tensor& b, Mat& z) {
    ensure(z, x.rows, w.shape[1]);
    dgemm_rm(false, false, x.rows, w.shape[1], w.shape[0], 1.0, x.v.data(), w.ptr(), 0.0,
             z.v.data());
    for (int r = 0; r < z.rows; ++r)
        for (int c = 0; c < z.cols; ++c) z.row(r)[c] += b.data[c];
}

void lrelu_mat(const Mat& z, Mat& a) {
    ensure(a, z.rows, z.cols);
    for (size_t i = 0; i < z.v.size(); ++i) a.v[i] = leaky_relu(z.v[i]);
}

// dW += X^T dZ, db += colsum(dZ), dX = dZ W^T (dX optional)
void linear_backward(const Mat& x, const Tensor& w, const Mat& dz, Tensor& gw, Tensor& gb,
                     Mat* dx) {
    dgemm_rm(true, false, w.shape[0], w.shape[1], x.rows, 1.0, x.v.data(), dz.v.data(), 1.0,
             gw.ptr());
    for (int r = 0; r < dz.rows; ++r)
        for (int c = 0; c < dz.cols; ++c) gb.data[c] += dz.row(r)[c];
    if (dx) {
        ensure(*dx, x.rows, w.shape[0]);
        dgemm_rm(false, true, x.rows, w.shape[0], w.shape[1], 1.0, dz.v.data(), w.ptr(), 0.0,
                 dx->v.data());
    }
}

// Column-wise max over the rows listed in `order` (ties to the earliest listed
// row). Rows must be non-empty.
void colmax(const Mat& a, const std::vector<int>& order, std::vector<double>& out,
            std::vector<int>& argmax) {
    out.assign(a.cols, 0.0);
    argmax.assign(a.cols, -1);
    bool first = true;
    auto visit = [&](int r) {
        const double* row = a.row(r);
        for (int c = 0; c < a.cols; ++c) {
            if (first || row[c] > out[c]) {
                out[c] = row[c];
                argmax[c] = r;
            }
        }
        first = false;
    };
    if (order.empty())
        for (int r = 0; r < a.rows; ++r) visit(r);
    else
        for (int r : order) visit(r);
}

}  // namespace

void tfnet_forward(const Mat& points, const ParamTable& params, TfnetTrace& t) {
    t.x = points;
    linear(points, get(params, "tfnet.fc1.w"), get(params, "tfnet.fc1.b"), t.z1);
    lrelu_mat(t.z1, t.a1);
    linear(t.a1, get(params, "tfnet.fc2.w"), get(params, "tfnet.fc2.b"), t.z2);
    lrelu_mat(t.z2, t.a2);
    colmax(t.a2, t.canon_order, t.pooled, t.pool_argmax);

    const auto& w3 = get(params, "tfnet.fc3.w");
    const auto& b3 = get(params, "tfnet.fc3.b");
    t.z3.assign(64, 0.0);
    dgemm_rm(false, false, 1, 64, 128, 1.0, t.pooled.data(), w3.ptr(), 0.0, t.z3.data());
    for (int i = 0; i < 64; ++i) t.z3[i] += b3.data[i];
    t.a3.resize(64);
    for (int i = 0; i < 64; ++i) t.a3[i] = leaky_relu(t.z3[i]);

    const auto& w4 = get(params, "tfnet.fc4.w");
    const auto& b4 = get(params, "tfnet.fc4.b");
    t.t9.assign(9, 0.0);
    dgemm_rm(false, false, 1, 9, 64, 1.0, t.a3.data(), w4.ptr(), 0.0, t.t9.data());
    for (int i = 0; i < 9; ++i) t.t9[i] += b4.data[i];

    // T = I + reshape(t9); out = X * T
    double T[9];
    for (int i = 0; i < 9; ++i) T[i] = t.t9[i] + (i % 4 == 0 ? 1.0 : 0.0);
    ensure(t.out, points.rows, 3);
    dgemm_rm(false, false, points.rows, 3, 3, 1.0, points.v.data(), T, 0.0, t.out.v.data());
}

void message_forward(const Mat& h, const TemporalGraph& graph, const ParamTable& params, int layer,
                     LayerTrace& t) {
    int d = h.cols;
    int e_count = static_cast<int>(graph.edges.size());
    ensure(t.u, e_count, 2 * d);
    for (int e = 0; e < e_count; ++e) {
        const auto& edge = graph.edges[e];
        const double* hi = h.row(edge.dst);
        const double* hj = h.row(edge.src);
        double* u = t.u.row(e);
        for (int c = 0; c < d; ++c) {
            u[c] = hi[c];
            u[d + c] = hj[c] - hi[c];
        }
    }
    std::string p = "conv" + std::to_string(layer) + ".";
    linear(t.u, get(params, p + "msg.fc1.w"), get(params, p + "msg.fc1.b"), t.z1);
    lrelu_mat(t.z1, t.a1);
    linear(t.a1, get(params, p + "msg.fc2.w"), get(params, p + "msg.fc2.b"), t.msg);
}

void attention_forward(const Mat& messages, const TemporalGraph& graph, const ParamTable& params,
                       int layer, const ModelConfig& cfg, AttentionTrace& t, Mat& attended) {
    int fo = cfg.msg_width;
    int m = cfg.heads;
    int dh = cfg.head_dim();
    int e_count = messages.rows;
    std::string p = "conv" + std::to_string(layer) + ".attn.";
    const auto& wq = get(params, p + "wq");
    const auto& wk = get(params, p + "wk");
    const auto& wv = get(params, p + "wv");
    const auto& wo = get(params, p + "wo");

    ensure(t.q, e_count, fo);
    ensure(t.k, e_count, fo);
    ensure(t.v, e_count, fo);
    dgemm_rm(false, false, e_count, fo, fo, 1.0, messages.v.data(), wq.ptr(), 0.0, t.q.v.data());
    dgemm_rm(false, false, e_count, fo, fo, 1.0, messages.v.data(), wk.ptr(), 0.0, t.k.v.data());
    dgemm_rm(false, false, e_count, fo, fo, 1.0, messages.v.data(), wv.ptr(), 0.0, t.v.v.data());

    ensure(t.concat, e_count, fo);
    t.prob_offsets.assign(static_cast<size_t>(graph.node_count) * m + 1, 0);
    size_t total = 0;
    for (int i = 0; i < graph.node_count; ++i) {
        size_t r = static_cast<size_t>(graph.in_degree(i));
        for (int b = 0; b < m; ++b) {
            t.prob_offsets[static_cast<size_t>(i) * m + b] = total;
            total += r * r;
        }
    }
    t.prob_offsets.back() = total;
    if (t.probs.size() != total) t.probs.resize(total);

    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> scratch;
    for (int i = 0; i < graph.node_count; ++i) {
        int off = graph.offsets[i];
        int r = graph.in_degree(i);
        if (r == 0) continue;
        for (int b = 0; b < m; ++b) {
            const double* qb = t.q.row(off) + b * dh;
            const double* kb = t.k.row(off) + b * dh;
            const double* vb = t.v.row(off) + b * dh;
            double* pb = t.probs.data() + t.prob_offsets[static_cast<size_t>(i) * m + b];
            small_abt(qb, kb, r, dh, fo, inv_sqrt, pb, scratch);
            for (int row = 0; row < r; ++row) {
                double* s = pb + static_cast<size_t>(row) * r;
                double mx = s[0];
                for (int c = 1; c < r; ++c) mx = std::max(mx, s[c]);
                exp_shift_row(s, r, mx);
                double sum = 0;
                for (int c = 0; c < r; ++c) sum += s[c];
                double inv = 1.0 / sum;
                for (int c = 0; c < r; ++c) s[c] *= inv;
            }
            small_pm(pb, false, vb, r, dh, fo, 1.0, t.concat.row(off) + b * dh, fo, false);
        }
    }
    ensure(attended, e_count, fo);
    dgemm_rm(false, false, e_count, fo, fo, 1.0, t.concat.v.data(), wo.ptr(), 0.0,
             attended.v.data());
}

namespace {

void aggregate_max(const Mat& attended, const TemporalGraph& graph, Mat& h_out,
                   std::vector<int>& argmax) {
    int fo = attended.cols;
    ensure(h_out, graph.node_count, fo);
    argmax.assign(static_cast<size_t>(graph.node_count) * fo, -1);
    for (int i = 0; i < graph.node_count; ++i) {
        int lo = graph.offsets[i], hi = graph.offsets[i + 1];
        if (lo == hi) {  // empty neighborhood -> zero vector
            std::fill(h_out.row(i), h_out.row(i) + fo, 0.0);
            continue;
        }
        double* out = h_out.row(i);
        int* am = argmax.data() + static_cast<size_t>(i) * fo;
        for (int e = lo; e < hi; ++e) {
            const double* row = attended.row(e);
            for (int c = 0; c < fo; ++c) {
                if (e == lo || row[c] > out[c]) {
                    out[c] = row[c];
                    am[c] = e;
                }
            }
        }
    }
}

std::vector<int> canonical_order_of(const std::vector<RadarPoint>& pts) {
    auto rank = canonical_ranks(pts);
    std::vector<int> order(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) order[rank[i]] = static_cast<int>(i);
    return order;
}

}  // namespace

std::vector<double> classify_forward(const GestureSample& sample, const ModelConfig& cfg,
                                     const ParamTable& params, ForwardTrace& trace) {
    cfg.validate();
    sample.validate();
    auto pts = sample.flat_points();
    int n = static_cast<int>(pts.size());
    trace.params = &params;
    trace.cfg = cfg;
    trace.n = n;
    trace.frames.resize(n);
    for (int i = 0; i < n; ++i) trace.frames[i] = cfg.collapse_time ? 0 : pts[i].frame;
    trace.canon_order = canonical_order_of(pts);

    Mat coords(n, 3);
    for (int i = 0; i < n; ++i) {
        coords.row(i)[0] = pts[i].x;
        coords.row(i)[1] = pts[i].y;
        coords.row(i)[2] = pts[i].z;
    }
    trace.tfnet.canon_order = trace.canon_order;
    tfnet_forward(coords, params, trace.tfnet);

    // Graph on the raw (preprocessed) coordinates; node features from the
    // transformed ones.
    trace.graph = temporal_knn_points(pts, cfg.graph_config(), cfg.collapse_time);

    trace.layers.assign(cfg.layers, {});
    const Mat* h = &trace.tfnet.out;
    for (int l = 0; l < cfg.layers; ++l) {
        LayerTrace& lt = trace.layers[l];
        lt.h_in = *h;
        message_forward(lt.h_in, trace.graph, params, l, lt);
        if (cfg.use_attention)
            attention_forward(lt.msg, trace.graph, params, l, cfg, lt.attn, lt.attended);
        else
            lt.attended = lt.msg;
        aggregate_max(lt.attended, trace.graph, lt.h_out, lt.agg_argmax);
        h = &lt.h_out;
    }

    HeadTrace& ht = trace.head;
    linear(*h, get(params, "head.point.w"), get(params, "head.point.b"), ht.z);
    lrelu_mat(ht.z, ht.a);
    colmax(ht.a, trace.canon_order, ht.pooled, ht.pool_argmax);

    auto dense_vec = [&](const std::vector<double>& in, const std::string& name,
                         std::vector<double>& z) {
        const auto& w = get(params, name + ".w");
        const auto& b = get(params, name + ".b");
        z.assign(w.shape[1], 0.0);
        dgemm_rm(false, false, 1, w.shape[1], w.shape[0], 1.0, in.data(), w.ptr(), 0.0, z.data());
        for (int i = 0; i < w.shape[1]; ++i) z[i] += b.data[i];
    };
    dense_vec(ht.pooled, "head.fc1", ht.z1);
    ht.a1.resize(ht.z1.size());
    for (size_t i = 0; i < ht.z1.size(); ++i) ht.a1[i] = leaky_relu(ht.z1[i]);
    dense_vec(ht.a1, "head.fc2", ht.z2);
    ht.a2.resize(ht.z2.size());
    for (size_t i = 0; i < ht.z2.size(); ++i) ht.a2[i] = leaky_relu(ht.z2[i]);
    dense_vec(ht.a2, "head.fc3", ht.logits);

    trace.logits = ht.logits;
    return trace.logits;
}

std::vector<double> classify_forward(const GestureSample& sample, const ModelConfig& cfg,
                                     const ParamTable& params) {
    ForwardTrace trace;
    return classify_forward(sample, cfg, params, trace);
}

Mat teslaconv_forward(const GestureSample& sample, const ModelConfig& cfg,
                      const ParamTable& params) {
    ForwardTrace trace;
    classify_forward(sample, cfg, params, trace);
    return trace.layers.back().h_out;
}

ParamTable backward(const ForwardTrace& trace, int label) {
    const ModelConfig& cfg = trace.cfg;
    if (!trace.params || trace.logits.empty() ||
        static_cast<int>(trace.layers.size()) != cfg.layers)
        throw std::logic_error("backward: trace not produced by classify_forward");
    if (label < 0 || label >= cfg.classes) throw std::out_of_range("backward: label out of range");
    const ParamTable& params = *trace.params;

    ParamTable grads;
    for (const auto& [name, shape] : param_shapes(cfg)) {
        grads.emplace(name, Tensor(shape));
        if (get(params, name).shape != shape)
            throw std::logic_error("backward: parameter shape drifted since forward: " + name);
    }

    int fo = cfg.msg_width;
    int m = cfg.heads;
    int dh = cfg.head_dim();
    const HeadTrace& ht = trace.head;

    // Cross-entropy gradient on the logits.
    std::vector<double> dlogits(ht.logits.size());
    {
        double mx = *std::max_element(ht.logits.begin(), ht.logits.end());
        double sum = 0;
        for (double v : ht.logits) sum += std::exp(v - mx);
        for (size_t i = 0; i < ht.logits.size(); ++i)
            dlogits[i] = std::exp(ht.logits[i] - mx) / sum - (static_cast<int>(i) == label);
    }

    // dv_in = dz W^T, gw += v_in^T dz, gb += dz  (vector path)
    auto dense_vec_back = [&](const std::vector<double>& v_in, const std::string& name,
                              const std::vector<double>& dz, std::vector<double>& dv_in) {
        const auto& w = get(params, name + ".w");
        auto& gw = get_mut(grads, name + ".w");
        auto& gb = get_mut(grads, name + ".b");
        dgemm_rm(true, false, w.shape[0], w.shape[1], 1, 1.0, v_in.data(), dz.data(), 1.0,
                 gw.ptr());
        for (int i = 0; i < w.shape[1]; ++i) gb.data[i] += dz[i];
        dv_in.assign(w.shape[0], 0.0);
        dgemm_rm(false, true, 1, w.shape[0], w.shape[1], 1.0, dz.data(), w.ptr(), 0.0,
                 dv_in.data());
    };

    std::vector<double> da2, dz2v, da1, dz1v, dpooled;
    dense_vec_back(ht.a2, "head.fc3", dlogits, da2);
    dz2v.resize(da2.size());
    for (size_t i = 0; i < da2.size(); ++i) dz2v[i] = da2[i] * leaky_relu_grad(ht.z2[i]);
    dense_vec_back(ht.a1, "head.fc2", dz2v, da1);
    dz1v.resize(da1.size());
    for (size_t i = 0; i < da1.size(); ++i) dz1v[i] = da1[i] * leaky_relu_grad(ht.z1[i]);
    dense_vec_back(ht.pooled, "head.fc1", dz1v, dpooled);

    // Route the pooled gradient to the argmax points, then back through the
    // per-point MLP.
    Mat da(ht.a.rows, ht.a.cols);
    for (int c = 0; c < ht.a.cols; ++c)
        if (ht.pool_argmax[c] >= 0) da.row(ht.pool_argmax[c])[c] = dpooled[c];
    Mat dz(ht.z.rows, ht.z.cols);
    for (size_t i = 0; i < dz.v.size(); ++i) dz.v[i] = da.v[i] * leaky_relu_grad(ht.z.v[i]);

    const Mat& h_last = cfg.layers > 0 ? trace.layers.back().h_out : trace.tfnet.out;
    Mat dhcur;
    {
        auto& gw = get_mut(grads, "head.point.w");
        auto& gb = get_mut(grads, "head.point.b");
        linear_backward(h_last, get(params, "head.point.w"), dz, gw, gb, &dhcur);
    }

    // TeslaConv layers, last to first.
    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerTrace& lt = trace.layers[l];
        std::string p = "conv" + std::to_string(l) + ".";
        int e_count = lt.msg.rows;
        int d_in = lt.h_in.cols;

        Mat dattended(e_count, fo);
        for (int i = 0; i < trace.graph.node_count; ++i) {
            const int* am = lt.agg_argmax.data() + static_cast<size_t>(i) * fo;
            const double* g = dhcur.row(i);
            for (int c = 0; c < fo; ++c)
                if (am[c] >= 0) dattended.row(am[c])[c] += g[c];
        }

        Mat dmsg;
        if (cfg.use_attention) {
            const AttentionTrace& at = lt.attn;
            const auto& wq = get(params, p + "attn.wq");
            const auto& wk = get(params, p + "attn.wk");
            const auto& wv = get(params, p + "attn.wv");
            const auto& wo = get(params, p + "attn.wo");

            // Output projection.
            Mat dconcat(e_count, fo);
            dgemm_rm(false, true, e_count, fo, fo, 1.0, dattended.v.data(), wo.ptr(), 0.0,
                     dconcat.v.data());
            dgemm_rm(true, false, fo, fo, e_count, 1.0, at.concat.v.data(), dattended.v.data(),
                     1.0, get_mut(grads, p + "attn.wo").ptr());

            Mat dq(e_count, fo), dk(e_count, fo), dv(e_count, fo);
            double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
            std::vector<double> dp, ds, scratch;
            for (int i = 0; i < trace.graph.node_count; ++i) {
                int off = trace.graph.offsets[i];
                int r = trace.graph.in_degree(i);
                if (r == 0) continue;
                for (int b = 0; b < m; ++b) {
                    const double* pb =
                        at.probs.data() + at.prob_offsets[static_cast<size_t>(i) * m + b];
                    const double* vb = at.v.row(off) + b * dh;
                    const double* qb = at.q.row(off) + b * dh;
                    const double* kb = at.k.row(off) + b * dh;
                    const double* dhb = dconcat.row(off) + b * dh;

                    // dP = dH V^T ; dV += P^T dH
                    dp.resize(static_cast<size_t>(r) * r);
                    small_abt(dhb, vb, r, dh, fo, 1.0, dp.data(), scratch);
                    small_pm(pb, true, dhb, r, dh, fo, 1.0, dv.row(off) + b * dh, fo, true);

                    // Softmax backward per row.
                    ds.resize(static_cast<size_t>(r) * r);
                    for (int row = 0; row < r; ++row) {
                        const double* prow = pb + static_cast<size_t>(row) * r;
                        const double* dprow = dp.data() + static_cast<size_t>(row) * r;
                        double dot = 0;
                        for (int c = 0; c < r; ++c) dot += dprow[c] * prow[c];
                        double* dsrow = ds.data() + static_cast<size_t>(row) * r;
                        for (int c = 0; c < r; ++c) dsrow[c] = prow[c] * (dprow[c] - dot);
                    }

                    // dQ += dS K / sqrt(dh); dK += dS^T Q / sqrt(dh)
                    small_pm(ds.data(), false, kb, r, dh, fo, inv_sqrt, dq.row(off) + b * dh,
                             fo, true);
                    small_pm(ds.data(), true, qb, r, dh, fo, inv_sqrt, dk.row(off) + b * dh, fo,
                             true);
                }
            }

            dmsg = Mat(e_count, fo);
            dgemm_rm(false, true, e_count, fo, fo, 1.0, dq.v.data(), wq.ptr(), 0.0,
                     dmsg.v.data());
            dgemm_rm(false, true, e_count, fo, fo, 1.0, dk.v.data(), wk.ptr(), 1.0,
                     dmsg.v.data());
            dgemm_rm(false, true, e_count, fo, fo, 1.0, dv.v.data(), wv.ptr(), 1.0,
                     dmsg.v.data());
            dgemm_rm(true, false, fo, fo, e_count, 1.0, lt.msg.v.data(), dq.v.data(), 1.0,
                     get_mut(grads, p + "attn.wq").ptr());
            dgemm_rm(true, false, fo, fo, e_count, 1.0, lt.msg.v.data(), dk.v.data(), 1.0,
                     get_mut(grads, p + "attn.wk").ptr());
            dgemm_rm(true, false, fo, fo, e_count, 1.0, lt.msg.v.data(), dv.v.data(), 1.0,
                     get_mut(grads, p + "attn.wv").ptr());
        } else {
            dmsg = dattended;
        }

        // Message MLP backward.
        Mat da1m;
        linear_backward(lt.a1, get(params, p + "msg.fc2.w"), dmsg,
                        get_mut(grads, p + "msg.fc2.w"), get_mut(grads, p + "msg.fc2.b"), &da1m);
        Mat dz1m(e_count, fo);
        for (size_t i = 0; i < dz1m.v.size(); ++i)
            dz1m.v[i] = da1m.v[i] * leaky_relu_grad(lt.z1.v[i]);
        Mat du;
        linear_backward(lt.u, get(params, p + "msg.fc1.w"), dz1m,
                        get_mut(grads, p + "msg.fc1.w"), get_mut(grads, p + "msg.fc1.b"), &du);

        // Split edge-input gradients back onto node features.
        Mat dh_in(trace.n, d_in);
        for (int e = 0; e < e_count; ++e) {
            const auto& edge = trace.graph.edges[e];
            const double* g = du.row(e);
            double* gi = dh_in.row(edge.dst);
            double* gj = dh_in.row(edge.src);
            for (int c = 0; c < d_in; ++c) {
                gi[c] += g[c] - g[d_in + c];
                gj[c] += g[d_in + c];
            }
        }
        dhcur = std::move(dh_in);
    }

    // TF-Net backward; dhcur is now the gradient w.r.t. the transformed coords.
    const TfnetTrace& tf = trace.tfnet;
    {
        double T[9];
        for (int i = 0; i < 9; ++i) T[i] = tf.t9[i] + (i % 4 == 0 ? 1.0 : 0.0);
        (void)T;  // input gradients are not propagated further
        std::vector<double> dt9(9, 0.0);
        dgemm_rm(true, false, 3, 3, tf.x.rows, 1.0, tf.x.v.data(), dhcur.v.data(), 0.0, dt9.data());

        auto& gw4 = get_mut(grads, "tfnet.fc4.w");
        auto& gb4 = get_mut(grads, "tfnet.fc4.b");
        dgemm_rm(true, false, 64, 9, 1, 1.0, tf.a3.data(), dt9.data(), 1.0, gw4.ptr());
        for (int i = 0; i < 9; ++i) gb4.data[i] += dt9[i];

        std::vector<double> da3(64, 0.0);
        dgemm_rm(false, true, 1, 64, 9, 1.0, dt9.data(), get(params, "tfnet.fc4.w").ptr(), 0.0,
                 da3.data());
        std::vector<double> dz3(64);
        for (int i = 0; i < 64; ++i) dz3[i] = da3[i] * leaky_relu_grad(tf.z3[i]);

        auto& gw3 = get_mut(grads, "tfnet.fc3.w");
        auto& gb3 = get_mut(grads, "tfnet.fc3.b");
        dgemm_rm(true, false, 128, 64, 1, 1.0, tf.pooled.data(), dz3.data(), 1.0, gw3.ptr());
        for (int i = 0; i < 64; ++i) gb3.data[i] += dz3[i];

        std::vector<double> dpool(128, 0.0);
        dgemm_rm(false, true, 1, 128, 64, 1.0, dz3.data(), get(params, "tfnet.fc3.w").ptr(), 0.0,
                 dpool.data());

        Mat da2m(tf.a2.rows, tf.a2.cols);
        for (int c = 0; c < 128; ++c)
            if (tf.pool_argmax[c] >= 0) da2m.row(tf.pool_argmax[c])[c] = dpool[c];
        Mat dz2m(tf.z2.rows, tf.z2.cols);
        for (size_t i = 0; i < dz2m.v.size(); ++i)
            dz2m.v[i] = da2m.v[i] * leaky_relu_grad(tf.z2.v[i]);
        Mat da1t;
        linear_backward(tf.a1, get(params, "tfnet.fc2.w"), dz2m, get_mut(grads, "tfnet.fc2.w"),
                        get_mut(grads, "tfnet.fc2.b"), &da1t);
        Mat dz1t(tf.z1.rows, tf.z1.cols);
        for (size_t i = 0; i < dz1t.v.size(); ++i)
            dz1t.v[i] = da1t.v[i] * leaky_relu_grad(tf.z1.v[i]);
        Mat unused;
        linear_backward(tf.x, get(params, "tfnet.fc1.w"), dz1t, get_mut(grads, "tfnet.fc1.w"),
                        get_mut(grads, "tfnet.fc1.b"), nullptr);
        (void)unused;
    }

    return grads;
}

FlopCounts count_flops(const ModelConfig& cfg, const GestureSample& sample) {
    cfg.validate();
    auto pts = sample.flat_points();
    int64_t n = static_cast<int64_t>(pts.size());
    auto graph = temporal_knn_points(pts, cfg.graph_config(), cfg.collapse_time);
    int64_t e_total = static_cast<int64_t>(graph.edges.size());
    int64_t fo = cfg.msg_width;

    FlopCounts f;
    f.tfnet = 2 * 3 * 64 * n + 2 * 64 * 128 * n + 2 * 128 * 64 + 2 * 64 * 9 + 2 * 3 * 3 * n;
    for (int l = 0; l < cfg.layers; ++l) {
        int64_t d_in = l == 0 ? 3 : fo;
        f.message += 2 * (2 * d_in) * fo * e_total + 2 * fo * fo * e_total;
        if (cfg.use_attention) {
            f.attn_linear += 2 * e_total * fo * fo * 3 + 2 * e_total * fo * fo;
            for (int i = 0; i < graph.node_count; ++i) {
                int64_t r = graph.in_degree(i);
                f.attn_quadratic += 2 * r * r * fo;
            }
        }
    }
    f.head = 2 * fo * cfg.pooled_width * n;
    f.classifier = 2 * (static_cast<int64_t>(cfg.pooled_width) * cfg.hidden1 +
                        static_cast<int64_t>(cfg.hidden1) * cfg.hidden2 +
                        static_cast<int64_t>(cfg.hidden2) * cfg.classes);
    return f;
}

}  // namespace tesla
