// Release acceptance gate: every shipping criterion runs here, one verdict
// line each. The binary exits nonzero when any criterion fails, so CI treats
// this as the final word on a build.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "knn_oracle.hpp"
#include "tesla/checkpoint.hpp"
#include "tesla/gradcheck.hpp"
#include "tesla/graph.hpp"
#include "tesla/io.hpp"
#include "tesla/net.hpp"
#include "tesla/preprocess.hpp"
#include "tesla/rng.hpp"
#include "tesla/stream.hpp"
#include "tesla/synth.hpp"
#include "tesla/train.hpp"

using namespace tesla;
using tesla::testing::knn_oracle_points;
using tesla::testing::random_points;
using tesla::testing::same_edges;

namespace {

int g_failures = 0;

void verdict(int id, const std::string& what, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << what;
    if (!detail.empty()) std::cout << " [" << detail << "]";
    std::cout << std::endl;
    if (!ok) ++g_failures;
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

ModelConfig preset_tesla() { return ModelConfig{}; }

ModelConfig preset_tesla_v() {
    ModelConfig cfg;
    cfg.k = 2;
    return cfg;
}

GestureSample random_sample(Rng& rng, int frames, int points_per_frame) {
    GestureSample s;
    for (int f = 0; f < frames; ++f) {
        Frame fr;
        fr.index = f;
        for (int p = 0; p < points_per_frame; ++p)
            fr.points.push_back({rng.uniform(-0.3, 0.3), rng.uniform(1.2, 1.8),
                                 rng.uniform(-0.3, 0.3), f});
        s.frames.push_back(fr);
    }
    return s;
}

ModelConfig small_model(int classes) {
    ModelConfig cfg;
    cfg.k = 4;
    cfg.alpha = 10.0;
    cfg.layers = 1;
    cfg.msg_width = 8;
    cfg.heads = 2;
    cfg.pooled_width = 16;
    cfg.hidden1 = 16;
    cfg.hidden2 = 8;
    cfg.classes = classes;
    return cfg;
}

// The full 8-class benchmark: 600 generated gestures split 400/100/100 by a
// seeded global shuffle, then resampled to 32 frames x 32 points.
struct Benchmark {
    std::vector<GestureSample> train, val, test;
    std::vector<GestureSample> test_raw;  // pre-resampling, for the replay path
};

Benchmark build_benchmark() {
    SyntheticSpec spec;
    spec.samples_per_class = 75;
    spec.frames_per_gesture = 32;
    spec.points_min = 32;
    spec.points_max = 32;
    spec.noise_sigma = 0.003;
    spec.cluster_sigma = 0.02;
    spec.cluster_growth = 4.0;
    spec.seed = 42;
    auto all = synth_generate(spec);

    std::vector<int> order(all.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffler(Rng::substream(spec.seed, {0x73706c6974ull}).uniform_int(1, 1 << 30));
    shuffler.shuffle(order);

    Benchmark b;
    PreprocessConfig pcfg;
    std::vector<GestureSample> raw_train, raw_val, raw_test;
    for (size_t i = 0; i < order.size(); ++i) {
        auto& dst = i < 100 ? raw_val : (i < 200 ? raw_test : raw_train);
        dst.push_back(all[order[i]]);
    }
    b.test_raw = raw_test;
    b.train = preprocess_samples(raw_train, pcfg);
    b.val = preprocess_samples(raw_val, pcfg);
    b.test = preprocess_samples(raw_test, pcfg);
    return b;
}

double accuracy_of(const std::vector<StreamEvent>& events,
                   const std::vector<GestureSample>& truth) {
    if (events.size() != truth.size()) return -1.0;
    int hits = 0;
    for (size_t i = 0; i < events.size(); ++i)
        if (truth[i].label && events[i].label == *truth[i].label) ++hits;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

}  // namespace

int main(int, char** argv) {
    init_blas();
    auto cli = std::filesystem::path(argv[0]).parent_path() / "tesla_cli";

    // ---- 1: temporal KNN against the independent oracle ------------------
    {
        double t0 = now_s();
        bool ok = true;
        Rng rng(20260826);
        for (int trial = 0; trial < 500 && ok; ++trial) {
            int n = static_cast<int>(rng.uniform_int(1, 128));
            auto pts = random_points(rng, n, static_cast<int>(rng.uniform_int(1, 12)));
            GraphConfig cfg;
            cfg.k = static_cast<int>(rng.uniform_int(1, 8));
            double alphas[] = {0.0, 1.0, 10.0, 100.0};
            cfg.alpha = alphas[rng.uniform_int(0, 3)];
            ok = same_edges(temporal_knn_points(pts, cfg, false), knn_oracle_points(pts, cfg, false));
        }
        double dt = now_s() - t0;
        verdict(1, "oracle equivalence on 500 random graphs", ok && dt < 10.0,
                fmt(dt) + "s");
    }

    // ---- 2: temporal mask soundness and the large-alpha pull -------------
    {
        bool no_backward = true;
        Rng rng(31337);
        for (int trial = 0; trial < 200 && no_backward; ++trial) {
            auto pts = random_points(rng, static_cast<int>(rng.uniform_int(2, 96)),
                                     static_cast<int>(rng.uniform_int(1, 10)));
            GraphConfig cfg;
            cfg.k = static_cast<int>(rng.uniform_int(1, 8));
            cfg.alpha = rng.uniform(0.0, 50.0);
            auto g = temporal_knn_points(pts, cfg, false);
            for (const auto& e : g.edges)
                if (pts[e.src].frame > pts[e.dst].frame) no_backward = false;
        }

        // Samples shaped so every node needs exactly one cross-frame neighbor;
        // alpha=100 must pull essentially all of them from the closest
        // populated earlier frame.
        int64_t crossing = 0, nearest = 0;
        for (int trial = 0; trial < 50; ++trial) {
            GestureSample s = random_sample(rng, 16, 8);
            auto pts = s.flat_points();
            GraphConfig cfg;
            cfg.k = 8;
            cfg.alpha = 100.0;
            auto g = temporal_knn_points(pts, cfg, false);
            std::set<int> populated;
            for (const auto& p : pts) populated.insert(p.frame);
            for (const auto& e : g.edges) {
                if (pts[e.src].frame == pts[e.dst].frame) continue;
                ++crossing;
                int best = -1;
                for (int f : populated)
                    if (f < pts[e.dst].frame) best = f;
                if (pts[e.src].frame == best) ++nearest;
            }
        }
        double frac = crossing ? static_cast<double>(nearest) / static_cast<double>(crossing) : 0.0;
        verdict(2, "mask soundness and alpha=100 nearest-frame pull",
                no_backward && crossing > 0 && frac >= 0.99, "pull " + fmt(100 * frac) + "%");
    }

    // ---- 3: permutation invariance of the logits -------------------------
    {
        auto cfg = small_model(5);
        auto params = init_params(cfg, 77);
        Rng rng(78);
        double worst = 0.0;
        for (int s = 0; s < 20; ++s) {
            auto sample = random_sample(rng, 4, 6);
            auto base = classify_forward(sample, cfg, params);
            for (int shuffle = 0; shuffle < 1000; ++shuffle) {
                auto mixed = sample;
                for (auto& f : mixed.frames) rng.shuffle(f.points);
                auto logits = classify_forward(mixed, cfg, params);
                for (size_t c = 0; c < base.size(); ++c)
                    worst = std::max(worst, std::abs(logits[c] - base[c]));
            }
        }
        verdict(3, "logit invariance over 1000 shuffles x 20 samples", worst <= 1e-9,
                "max dev " + fmt(worst));
    }

    // ---- 4: analytic gradients against finite differences ----------------
    {
        auto report = gradcheck_tiny(3);
        int rc = std::system((cli.string() + " gradcheck --tiny --seed 3 > /dev/null 2>&1").c_str());
        verdict(4, "tiny-model gradcheck within 1e-4 and exit code 0",
                report.passed && report.max_rel_error <= 1e-4 && rc == 0,
                "max rel " + fmt(report.max_rel_error));
    }

    // ---- 5: attention rows are proper distributions ----------------------
    {
        bool ok = true;
        auto cfg = small_model(3);
        auto params = init_params(cfg, 99);
        Rng rng(100);
        bool saw_singleton = false;
        for (int trial = 0; trial < 20 && ok; ++trial) {
            GestureSample sample;
            if (trial == 0) {
                // Two frames, one point each: the later point has exactly one
                // candidate, so its attention row is a genuine singleton.
                Frame a, b;
                a.index = 0;
                a.points.push_back({0.1, 1.4, -0.1, 0});
                b.index = 1;
                b.points.push_back({0.0, 1.5, 0.0, 1});
                sample.frames.push_back(a);
                sample.frames.push_back(b);
            } else {
                sample = random_sample(rng, 5, 3);
            }
            ForwardTrace trace;
            classify_forward(sample, cfg, params, trace);
            const auto& g = trace.graph;
            const auto& at = trace.layers[0].attn;
            for (int i = 0; i < g.node_count && ok; ++i) {
                int r = g.in_degree(i);
                for (int b = 0; b < cfg.heads && ok; ++b) {
                    const double* pb =
                        at.probs.data() + at.prob_offsets[static_cast<size_t>(i) * cfg.heads + b];
                    for (int row = 0; row < r; ++row) {
                        double sum = 0;
                        for (int c = 0; c < r; ++c) sum += pb[static_cast<size_t>(row) * r + c];
                        if (std::abs(sum - 1.0) > 1e-12) ok = false;
                        if (r == 1) {
                            saw_singleton = true;
                            if (pb[0] != 1.0) ok = false;
                        }
                    }
                }
            }
        }
        verdict(5, "softmax rows sum to 1 within 1e-12, singleton weight exactly 1",
                ok && saw_singleton);
    }

    // ---- 6: the step decay schedule is bit-exact -------------------------
    {
        TrainConfig cfg;
        bool ok = lr_schedule(0, cfg) == 0.001 && lr_schedule(19, cfg) == 0.001 &&
                  lr_schedule(20, cfg) == 0.0005 && lr_schedule(45, cfg) == 0.00025;
        verdict(6, "lr(0,19,20,45) = (0.001, 0.001, 0.0005, 0.00025) bit-exact", ok);
    }

    // ---- 7: the 8-class benchmark under the tesla presets ----------------
    Benchmark bench = build_benchmark();
    ParamTable tesla_params;
    MetricsReport tesla_report;
    {
        auto mcfg = preset_tesla();
        TrainConfig tcfg;
        tcfg.max_epochs = 6;
        tcfg.patience = 6;
        tcfg.batch_size = 4;
        tcfg.augment = false;
        tcfg.lr_decay_period = 5;
        tcfg.seed = 5;
        double t0 = now_s();
        auto result = train(bench.train, bench.val, mcfg, tcfg);
        double train_s = now_s() - t0;
        tesla_params = result.best_params;
        tesla_report = evaluate(bench.test, mcfg, tesla_params);

        auto vcfg = preset_tesla_v();
        TrainConfig vtcfg = tcfg;
        vtcfg.max_epochs = 10;
        vtcfg.patience = 10;
        vtcfg.lr_decay_period = 10;
        auto vresult = train(bench.train, bench.val, vcfg, vtcfg);
        auto vreport = evaluate(bench.test, vcfg, vresult.best_params);

        bool ok = tesla_report.accuracy >= 0.95 && tesla_report.macro_auc >= 0.99 &&
                  train_s <= 1800.0 && result.stopped_epoch < 200 &&
                  vreport.accuracy >= tesla_report.accuracy - 0.05;
        verdict(7, "8-class benchmark: tesla >= 95% / AUC >= 0.99 in time, tesla-v within 5pt",
                ok,
                "acc " + fmt(100 * tesla_report.accuracy) + "%, auc " + fmt(tesla_report.macro_auc) +
                    ", " + fmt(train_s) + "s, tesla-v " + fmt(100 * vreport.accuracy) + "%");
    }

    // ---- 8: the mirror pair needs the temporal axis ----------------------
    {
        SyntheticSpec spec;
        spec.classes = {"swipe-left", "swipe-right"};
        spec.samples_per_class = 40;
        spec.frames_per_gesture = 10;
        spec.points_min = 20;
        spec.points_max = 40;
        spec.noise_sigma = 0.005;
        // Keep the return cluster degenerate so the mirror pair has no
        // spatial tell: the only separating signal is the motion direction.
        spec.cluster_sigma = 0.0;
        spec.seed = 7;
        auto all = synth_generate(spec);
        std::vector<GestureSample> train_raw, val_raw, test_raw;
        for (size_t i = 0; i < all.size(); ++i) {
            int slot = static_cast<int>(i % 40);
            auto& dst = slot < 30 ? train_raw : (slot < 35 ? val_raw : test_raw);
            dst.push_back(all[i]);
        }
        // 16 frames x 16 points: plenty of frame-crossing edges per node, so
        // the causal half of the graph carries a strong displacement signal.
        PreprocessConfig pcfg;
        pcfg.target_frames = 16;
        pcfg.target_points = 256;
        auto train_set = preprocess_samples(train_raw, pcfg);
        auto val_set = preprocess_samples(val_raw, pcfg);
        auto test_set = preprocess_samples(test_raw, pcfg);

        TrainConfig tcfg;
        tcfg.max_epochs = 8;
        tcfg.patience = 8;
        tcfg.batch_size = 4;
        tcfg.augment = false;
        tcfg.seed = 5;

        auto mcfg = preset_tesla();
        mcfg.classes = 2;
        auto full = train(train_set, val_set, mcfg, tcfg);
        auto full_report = evaluate(test_set, mcfg, full.best_params);

        auto flat = mcfg;
        flat.collapse_time = true;
        auto collapsed = train(train_set, val_set, flat, tcfg);
        auto flat_report = evaluate(test_set, flat, collapsed.best_params);

        bool ok = full_report.accuracy >= 0.95 && flat_report.accuracy <= 0.75 &&
                  full_report.accuracy - flat_report.accuracy >= 0.20;
        verdict(8, "mirror pair: tesla >= 95%, time-collapsed ablation <= 75%", ok,
                fmt(100 * full_report.accuracy) + "% vs " + fmt(100 * flat_report.accuracy) + "%");
    }

    // ---- 9: attention has to earn its keep -------------------------------
    {
        SyntheticSpec spec;
        spec.samples_per_class = 40;
        spec.frames_per_gesture = 10;
        spec.points_min = 20;
        spec.points_max = 40;
        spec.noise_sigma = 0.005;
        spec.cluster_sigma = 0.0;
        spec.seed = 11;
        auto all = synth_generate(spec);
        std::vector<GestureSample> train_raw, val_raw;
        for (size_t i = 0; i < all.size(); ++i)
            (i % 40 < 30 ? train_raw : val_raw).push_back(all[i]);
        PreprocessConfig pcfg;
        pcfg.target_frames = 16;
        pcfg.target_points = 256;
        auto train_set = preprocess_samples(train_raw, pcfg);
        auto val_set = preprocess_samples(val_raw, pcfg);

        ModelConfig mcfg;
        mcfg.k = 32;
        mcfg.msg_width = 32;
        mcfg.heads = 4;
        mcfg.pooled_width = 128;
        mcfg.hidden1 = 64;
        mcfg.hidden2 = 32;

        double margin_sum = 0.0;
        std::string detail;
        for (uint64_t seed : {1u, 2u, 3u}) {
            TrainConfig tcfg;
            tcfg.max_epochs = 8;
            tcfg.patience = 8;
            tcfg.batch_size = 4;
            tcfg.augment = false;
            tcfg.seed = seed;
            auto with = train(train_set, val_set, mcfg, tcfg);
            auto off_cfg = mcfg;
            off_cfg.use_attention = false;
            auto without = train(train_set, val_set, off_cfg, tcfg);
            double margin = with.best_val_acc - without.best_val_acc;
            margin_sum += margin;
            if (!detail.empty()) detail += ", ";
            detail += fmt(100 * margin) + "pt";
        }
        verdict(9, "attention-off lowers mean validation accuracy over 3 seeds", margin_sum > 0.0,
                detail);
    }

    // ---- 10: the light preset is provably and measurably cheaper ---------
    {
        // Four frames of 256 points: every node has at least k earlier-or-same
        // candidates for both presets, so realized edge counts are exactly k*n.
        Rng rng(1212);
        auto sample = random_sample(rng, 4, 256);
        auto ftesla = count_flops(preset_tesla(), sample);
        auto fv = count_flops(preset_tesla_v(), sample);
        bool counts_ok = fv.total() < ftesla.total() &&
                         ftesla.edge_linear() == 16 * fv.edge_linear();

        auto time_batch = [&](const ModelConfig& cfg, const ParamTable& params, int batch) {
            classify_forward(sample, cfg, params);  // warm-up
            double best = std::numeric_limits<double>::max();
            for (int rep = 0; rep < 3; ++rep) {
                double t0 = now_s();
                for (int b = 0; b < batch; ++b) classify_forward(sample, cfg, params);
                best = std::min(best, now_s() - t0);
            }
            return best;
        };
        auto pt = init_params(preset_tesla(), 1);
        auto pv = init_params(preset_tesla_v(), 1);
        double t1 = time_batch(preset_tesla(), pt, 1);
        double v1 = time_batch(preset_tesla_v(), pv, 1);
        double t16 = time_batch(preset_tesla(), pt, 16);
        double v16 = time_batch(preset_tesla_v(), pv, 16);
        bool latency_ok = v1 < t1 && v16 < t16;
        verdict(10, "tesla-v cheaper: flops ordered, edge terms exactly 16:1, latency ordered",
                counts_ok && latency_ok,
                "b1 " + fmt(v1) + "s vs " + fmt(t1) + "s");
    }

    // ---- 11: the segmenter state machine and streamed parity -------------
    {
        StreamConfig scfg;  // defaults: 2 / 10 / 3
        Rng rng(1313);
        auto active = [&](int points) {
            Frame f;
            for (int i = 0; i < points; ++i)
                f.points.push_back({rng.uniform(-0.2, 0.2), rng.uniform(1.3, 1.7),
                                    rng.uniform(-0.2, 0.2), 0});
            return f;
        };

        // Trace A: two active frames, ten idle, one active -> exactly one
        // emission, on the final frame, spanning the first two.
        bool traces_ok = true;
        {
            SegmenterState st;
            std::vector<int> counts = {5, 5, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 5};
            int emits = 0;
            for (size_t i = 0; i < counts.size(); ++i) {
                auto out = segmenter_step(st, active(counts[i]), scfg);
                if (out) {
                    ++emits;
                    if (i != 12 || out->frames.size() != 2 ||
                        out->meta.at("span_begin") != "0" || out->meta.at("span_end") != "1")
                        traces_ok = false;
                }
            }
            if (emits != 1) traces_ok = false;
        }
        // Trace B: a single active frame never satisfies min_frames.
        {
            SegmenterState st;
            if (segmenter_step(st, active(5), scfg)) traces_ok = false;
            for (int i = 0; i < 20; ++i)
                if (segmenter_step(st, active(1), scfg)) traces_ok = false;
        }
        // Trace C: unbroken activity never emits.
        {
            SegmenterState st;
            for (int i = 0; i < 40; ++i)
                if (segmenter_step(st, active(6), scfg)) traces_ok = false;
        }

        // Streamed replay of the benchmark test split against batch metrics.
        std::vector<Frame> replay;
        for (const auto& s : bench.test_raw) {
            for (const auto& f : s.frames) replay.push_back(f);
            for (int i = 0; i < scfg.idle_frame_delimiter + 1; ++i) replay.push_back(Frame{});
        }
        auto stream_path = std::filesystem::temp_directory_path() / "acceptance_replay.stream";
        ReplaySource::write_stream_file(stream_path, replay);
        ReplaySource source({stream_path});
        PreprocessConfig pcfg;
        auto events = stream_recognize(source, preset_tesla(), tesla_params, pcfg, scfg);
        double streamed = accuracy_of(events, bench.test_raw);
        bool parity = streamed >= 0.0 && std::abs(streamed - tesla_report.accuracy) <= 0.01;

        std::vector<Frame> idle(80);
        auto idle_path = std::filesystem::temp_directory_path() / "acceptance_idle.stream";
        ReplaySource::write_stream_file(idle_path, idle);
        ReplaySource idle_source({idle_path});
        auto idle_events = stream_recognize(idle_source, preset_tesla(), tesla_params, pcfg, scfg);

        verdict(11, "scripted segmenter traces exact, streamed parity, idle silence",
                traces_ok && parity && idle_events.empty(),
                "streamed " + fmt(100 * streamed) + "% vs batch " +
                    fmt(100 * tesla_report.accuracy) + "%");
        std::filesystem::remove(stream_path);
        std::filesystem::remove(idle_path);
    }

    // ---- 12: bit-for-bit reproducibility through the CLI -----------------
    {
        namespace fs = std::filesystem;
        auto root = fs::temp_directory_path() / "acceptance_repro";
        fs::remove_all(root);
        fs::create_directories(root);
        auto cfg_path = root / "run.cfg";
        {
            std::ofstream cfg(cfg_path);
            cfg << "k = 4\nalpha = 10\nmsg_width = 8\nheads = 2\npooled_width = 16\n"
                   "hidden1 = 16\nhidden2 = 8\ntarget_frames = 8\ntarget_points = 64\n"
                   "max_epochs = 2\npatience = 2\nbatch_size = 4\n";
        }
        std::string base = cli.string() + " --config " + cfg_path.string();
        int rc = std::system((base + " synth --classes 2 --per-class 8 --val-count 2" +
                              " --test-count 2 --out " + (root / "data").string() +
                              " > /dev/null 2>&1")
                                 .c_str());
        auto manifest = (root / "data" / "manifest.csv").string();
        for (const char* run : {"a", "b"}) {
            if (rc != 0) break;
            rc = std::system((base + " train --manifest " + manifest + " --seed 9 --threads 1" +
                              " --out " + (root / run).string() + " > /dev/null 2>&1")
                                 .c_str());
        }
        bool ok = rc == 0 &&
                  slurp(root / "a" / "checkpoint.json") == slurp(root / "b" / "checkpoint.json") &&
                  !slurp(root / "a" / "checkpoint.json").empty() &&
                  slurp(root / "a" / "metrics.csv") == slurp(root / "b" / "metrics.csv") &&
                  !slurp(root / "a" / "metrics.csv").empty();
        verdict(12, "identical seed/config/data give byte-identical artifacts", ok);
        fs::remove_all(root);
    }

    std::cout << (g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED") << " ("
              << (12 - g_failures) << "/12)" << std::endl;
    return g_failures == 0 ? 0 : 1;
}
