// Command-line front end for the gesture recognition pipeline:
// synth, train, eval, infer, stream, bench, gradcheck.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "tesla/checkpoint.hpp"
#include "tesla/gradcheck.hpp"
#include "tesla/io.hpp"
#include "tesla/net.hpp"
#include "tesla/preprocess.hpp"
#include "tesla/stream.hpp"
#include "tesla/synth.hpp"
#include "tesla/train.hpp"

namespace fs = std::filesystem;
using namespace tesla;

namespace {

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    PreprocessConfig preprocess;
    StreamConfig stream;
    int threads = 1;
    std::string preset;

    void validate() const {
        model.validate();
        train.validate();
        preprocess.validate();
        stream.validate();
    }
};

// Flat "key = value" config file; flags override file values.
void apply_config_file(RunConfig& rc, const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw LoadError("missing config file: " + path.string());
    std::string line;
    int row = 0;
    while (std::getline(f, line)) {
        ++row;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw LoadError("malformed config line " + std::to_string(row) + " in " +
                                path.string());
            continue;
        }
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        std::string ctx = path.string() + " line " + std::to_string(row);
        auto as_int = [&] { return static_cast<int>(parse_double(val, ctx)); };
        auto as_double = [&] { return parse_double(val, ctx); };
        auto as_bool = [&] {
            if (val == "true" || val == "1") return true;
            if (val == "false" || val == "0") return false;
            throw LoadError("bad boolean in " + ctx);
        };
        if (key == "k") rc.model.k = as_int();
        else if (key == "alpha") rc.model.alpha = as_double();
        else if (key == "layers") rc.model.layers = as_int();
        else if (key == "msg_width") rc.model.msg_width = as_int();
        else if (key == "heads") rc.model.heads = as_int();
        else if (key == "pooled_width") rc.model.pooled_width = as_int();
        else if (key == "hidden1") rc.model.hidden1 = as_int();
        else if (key == "hidden2") rc.model.hidden2 = as_int();
        else if (key == "classes") rc.model.classes = as_int();
        else if (key == "use_attention") rc.model.use_attention = as_bool();
        else if (key == "collapse_time") rc.model.collapse_time = as_bool();
        else if (key == "lr_init") rc.train.lr_init = as_double();
        else if (key == "lr_decay") rc.train.lr_decay = as_double();
        else if (key == "lr_decay_period") rc.train.lr_decay_period = as_int();
        else if (key == "patience") rc.train.patience = as_int();
        else if (key == "max_epochs") rc.train.max_epochs = as_int();
        else if (key == "batch_size") rc.train.batch_size = as_int();
        else if (key == "seed") rc.train.seed = static_cast<uint64_t>(as_double());
        else if (key == "augment") rc.train.augment = as_bool();
        else if (key == "max_translation") rc.train.augment_cfg.max_translation = as_double();
        else if (key == "scale_min") rc.train.augment_cfg.scale_min = as_double();
        else if (key == "scale_max") rc.train.augment_cfg.scale_max = as_double();
        else if (key == "jitter_sigma") rc.train.augment_cfg.jitter_sigma = as_double();
        else if (key == "jitter_clip") rc.train.augment_cfg.jitter_clip = as_double();
        else if (key == "shuffle") rc.train.augment_cfg.shuffle = as_bool();
        else if (key == "reference_range") rc.preprocess.reference_range = as_double();
        else if (key == "reference_azimuth") rc.preprocess.reference_azimuth = as_double();
        else if (key == "target_frames") rc.preprocess.target_frames = as_int();
        else if (key == "target_points") rc.preprocess.target_points = as_int();
        else if (key == "min_frames") rc.stream.min_frames = as_int();
        else if (key == "idle_frame_delimiter") rc.stream.idle_frame_delimiter = as_int();
        else if (key == "idle_frame_threshold") rc.stream.idle_frame_threshold = as_int();
        else if (key == "fps") rc.stream.fps = as_double();
        else if (key == "no_gesture_class") rc.stream.no_gesture_class = as_int();
        else if (key == "threads") rc.threads = as_int();
        else throw LoadError("unknown config key '" + key + "' in " + ctx);
    }
}

void apply_preset(RunConfig& rc) {
    if (rc.preset.empty()) return;
    if (rc.preset == "tesla") {
        rc.model.k = 32;
        rc.model.alpha = 10.0;
        rc.model.layers = 1;
    } else if (rc.preset == "tesla-v") {
        rc.model.k = 2;
        rc.model.alpha = 10.0;
        rc.model.layers = 1;
    } else {
        throw std::invalid_argument("unknown preset '" + rc.preset + "'");
    }
}

std::string effective_config(const RunConfig& rc) {
    std::ostringstream os;
    os << "k = " << rc.model.k << "\nalpha = " << format_double(rc.model.alpha)
       << "\nlayers = " << rc.model.layers << "\nmsg_width = " << rc.model.msg_width
       << "\nheads = " << rc.model.heads << "\npooled_width = " << rc.model.pooled_width
       << "\nhidden1 = " << rc.model.hidden1 << "\nhidden2 = " << rc.model.hidden2
       << "\nclasses = " << rc.model.classes
       << "\nuse_attention = " << (rc.model.use_attention ? "true" : "false")
       << "\ncollapse_time = " << (rc.model.collapse_time ? "true" : "false")
       << "\nlr_init = " << format_double(rc.train.lr_init)
       << "\nlr_decay = " << format_double(rc.train.lr_decay)
       << "\nlr_decay_period = " << rc.train.lr_decay_period
       << "\npatience = " << rc.train.patience << "\nmax_epochs = " << rc.train.max_epochs
       << "\nbatch_size = " << rc.train.batch_size << "\nseed = " << rc.train.seed
       << "\naugment = " << (rc.train.augment ? "true" : "false")
       << "\nreference_range = " << format_double(rc.preprocess.reference_range)
       << "\ntarget_frames = " << rc.preprocess.target_frames
       << "\ntarget_points = " << rc.preprocess.target_points
       << "\nmin_frames = " << rc.stream.min_frames
       << "\nidle_frame_delimiter = " << rc.stream.idle_frame_delimiter
       << "\nidle_frame_threshold = " << rc.stream.idle_frame_threshold
       << "\nfps = " << format_double(rc.stream.fps)
       << "\nno_gesture_class = " << rc.stream.no_gesture_class
       << "\nthreads = " << rc.threads << "\n";
    return os.str();
}

void echo_config(const RunConfig& rc, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream f(out_dir / "effective_config.txt", std::ios::binary);
    f << effective_config(rc);
}

int cmd_synth(const RunConfig& rc, const std::string& out_dir, int n_classes, int per_class,
              int val_count, int test_count, int frames, int points_min, int points_max,
              double sigma, double cluster, double cluster_growth, bool with_no_gesture) {
    SyntheticSpec spec;
    spec.classes.clear();
    const auto& names = synth_class_names();
    for (int i = 0; i < n_classes && i < 8; ++i) spec.classes.push_back(names[i]);
    if (with_no_gesture) spec.classes.push_back("no-gesture");
    spec.samples_per_class = per_class;
    spec.frames_per_gesture = frames;
    spec.points_min = points_min;
    spec.points_max = points_max;
    spec.noise_sigma = sigma;
    spec.cluster_sigma = cluster;
    spec.cluster_growth = cluster_growth;
    spec.seed = rc.train.seed;
    spec.validate();
    if (val_count + test_count >= per_class)
        throw std::invalid_argument("synth: val + test counts exhaust the per-class budget");

    fs::path out(out_dir);
    fs::create_directories(out / "samples");
    DatasetManifest manifest;
    manifest.classes = spec.classes;
    for (size_t c = 0; c < spec.classes.size(); ++c) {
        for (int i = 0; i < per_class; ++i) {
            auto sample = synth_sample(spec, spec.classes[c], i);
            sample.label = static_cast<int>(c);
            std::string rel = "samples/" + spec.classes[c] + "_" + std::to_string(i) + ".csv";
            save_sample(sample, out / rel);
            Split split = Split::Train;
            if (i < val_count)
                split = Split::Validation;
            else if (i < val_count + test_count)
                split = Split::Test;
            manifest.entries.push_back({rel, spec.classes[c], split});
        }
    }
    save_manifest(manifest, out / "manifest.csv", out / "classes.txt");
    echo_config(rc, out);
    std::cout << "wrote " << manifest.entries.size() << " samples to " << out_dir << "\n";
    return 0;
}

int cmd_train(RunConfig rc, const std::string& manifest, const std::string& out_dir) {
    auto ds = load_dataset(manifest);
    rc.model.classes = static_cast<int>(ds.classes.size());
    rc.validate();
    auto train_pp = preprocess_samples(ds.train, rc.preprocess);
    auto val_pp = preprocess_samples(ds.validation, rc.preprocess);

    fs::path out(out_dir);
    echo_config(rc, out);
    auto result = train(train_pp, val_pp, rc.model, rc.train, [](const EpochRow& r) {
        std::cout << "epoch " << r.epoch << " lr " << format_double(r.lr) << " loss "
                  << format_double(r.train_loss) << " val_acc " << format_double(r.val_acc)
                  << "\n";
    });
    save_checkpoint(out / "checkpoint.json", rc.model, result.best_params);
    write_history_csv(out / "metrics.csv", result.history);
    std::cout << "best epoch " << result.best_epoch << " val_acc "
              << format_double(result.best_val_acc) << "\n";
    return 0;
}

nlohmann::json report_to_json(const MetricsReport& rep) {
    return nlohmann::json{{"accuracy", rep.accuracy},
                          {"macro_auc", rep.macro_auc},
                          {"confusion", rep.confusion},
                          {"mean_inference_s", rep.mean_inference_s},
                          {"warnings", rep.warnings}};
}

int cmd_eval(RunConfig rc, const std::string& manifest, const std::string& checkpoint,
             const std::string& split_name_arg, const std::string& out_dir) {
    auto [cfg, params] = load_checkpoint(checkpoint);
    auto ds = load_dataset(manifest);
    Split split = split_name_arg == "train"
                      ? Split::Train
                      : (split_name_arg == "validation" ? Split::Validation : Split::Test);
    auto pp = preprocess_samples(ds.split(split), rc.preprocess);
    auto rep = evaluate(pp, cfg, params);
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";

    rc.model = cfg;
    fs::path out(out_dir);
    echo_config(rc, out);
    auto j = report_to_json(rep);
    j["config"] = nlohmann::json{{"k", cfg.k},
                                 {"alpha", cfg.alpha},
                                 {"layers", cfg.layers},
                                 {"msg_width", cfg.msg_width},
                                 {"heads", cfg.heads},
                                 {"classes", cfg.classes},
                                 {"use_attention", cfg.use_attention},
                                 {"collapse_time", cfg.collapse_time},
                                 {"split", split_name(split)}};
    std::ofstream f(out / "report.json", std::ios::binary);
    f << j.dump(2) << '\n';
    std::cout << "accuracy " << format_double(rep.accuracy) << " macro_auc "
              << format_double(rep.macro_auc) << " mean_inference_s "
              << format_double(rep.mean_inference_s) << "\n";
    return 0;
}

int cmd_infer(RunConfig rc, const std::string& checkpoint,
              const std::vector<std::string>& files) {
    auto [cfg, params] = load_checkpoint(checkpoint);
    for (const auto& file : files) {
        auto sample = load_sample(file);
        auto prepared = resample_sample(normalize_pose(sample, rc.preprocess), rc.preprocess);
        auto scores = softmax(classify_forward(prepared, cfg, params));
        int best = 0;
        for (size_t i = 1; i < scores.size(); ++i)
            if (scores[i] > scores[best]) best = static_cast<int>(i);
        std::cout << file << " label " << best << " scores [";
        for (size_t i = 0; i < scores.size(); ++i)
            std::cout << (i ? "," : "") << format_double(scores[i]);
        std::cout << "]\n";
    }
    return 0;
}

int cmd_stream(RunConfig rc, const std::string& checkpoint, const std::vector<std::string>& files,
               const std::string& out_dir, int idle_padding, bool fast_forward) {
    auto [cfg, params] = load_checkpoint(checkpoint);
    std::vector<fs::path> paths(files.begin(), files.end());
    ReplaySource source(paths, idle_padding);
    if (!fast_forward) source.set_pacing(rc.stream.fps);
    auto events = stream_recognize(source, cfg, params, rc.preprocess, rc.stream);
    fs::path out(out_dir);
    echo_config(rc, out);
    write_event_log(out / "events.jsonl", events);
    std::cout << events.size() << " events -> " << (out / "events.jsonl").string() << "\n";
    return 0;
}

int cmd_bench(RunConfig rc, const std::string& out_dir) {
    // One synthetic gesture resampled to the standard 1024-point shape.
    SyntheticSpec spec;
    spec.seed = rc.train.seed;
    spec.frames_per_gesture = 32;
    spec.points_min = 32;
    spec.points_max = 48;
    auto sample = synth_sample(spec, "circle-cw", 0);
    auto prepared = resample_sample(normalize_pose(sample, rc.preprocess), rc.preprocess);

    fs::path out(out_dir);
    echo_config(rc, out);
    std::ofstream f(out / "bench.csv", std::ios::binary);
    f << "preset,flops_total,flops_edge_linear,latency_b1_s,latency_b16_s\n";
    for (const std::string preset : {"tesla", "tesla-v"}) {
        RunConfig pc = rc;
        pc.preset = preset;
        apply_preset(pc);
        pc.model.classes = 8;
        auto params = init_params(pc.model, rc.train.seed);
        auto flops = count_flops(pc.model, prepared);

        auto time_batch = [&](int batch) {
            classify_forward(prepared, pc.model, params);  // warm-up
            double total = 0;
            const int passes = 10;
            for (int p = 0; p < passes; ++p) {
                auto t0 = std::chrono::steady_clock::now();
                for (int b = 0; b < batch; ++b) classify_forward(prepared, pc.model, params);
                auto t1 = std::chrono::steady_clock::now();
                total += std::chrono::duration<double>(t1 - t0).count();
            }
            return total / passes;
        };
        double b1 = time_batch(1);
        double b16 = time_batch(16);
        f << preset << ',' << flops.total() << ',' << flops.edge_linear() << ','
          << format_double(b1) << ',' << format_double(b16) << '\n';
        std::cout << preset << ": total_flops " << flops.total() << " edge_linear "
                  << flops.edge_linear() << " b1 " << format_double(b1) << "s b16 "
                  << format_double(b16) << "s\n";
    }
    return 0;
}

int cmd_gradcheck(bool tiny, uint64_t seed) {
    (void)tiny;  // the tiny configuration is the only supported one
    auto report = gradcheck_tiny(seed);
    for (const auto& line : report.lines) std::cout << line << "\n";
    std::cout << "max relative error " << format_double(report.max_rel_error) << "\n";
    return report.passed ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    init_blas();
    CLI::App app{"Temporal-graph gesture recognition pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    RunConfig rc;
    std::string config_file, out_dir = "out";
    uint64_t seed_flag = 0;
    bool seed_set = false;
    app.add_option("--config", config_file, "flat key=value config file");
    auto* seed_opt = app.add_option("--seed", seed_flag, "rng seed");
    app.add_option("--threads", rc.threads, "worker cap; 1 = fully serial");
    app.add_option("--preset", rc.preset, "tesla (k=32,a=10) or tesla-v (k=2,a=10)");
    app.add_option("--out", out_dir, "output directory");

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    int n_classes = 8, per_class = 10, val_count = 2, test_count = 2, frames = 20;
    int points_min = 5, points_max = 10;
    double sigma = 0.02;
    double cluster = 0.05, cluster_growth = 1.0;
    bool with_no_gesture = false;
    synth->add_option("--classes", n_classes, "number of gesture classes (max 8)");
    synth->add_option("--per-class", per_class, "samples per class");
    synth->add_option("--val-count", val_count, "per-class validation samples");
    synth->add_option("--test-count", test_count, "per-class test samples");
    synth->add_option("--frames", frames, "frames per gesture");
    synth->add_option("--points-min", points_min, "min points per frame");
    synth->add_option("--points-max", points_max, "max points per frame");
    synth->add_option("--sigma", sigma, "spatial noise sigma (m)");
    synth->add_option("--cluster", cluster, "hand-return cluster sigma (m)");
    synth->add_option("--cluster-growth", cluster_growth, "cluster sigma multiplier at the last frame");
    synth->add_flag("--with-no-gesture", with_no_gesture, "add the no-gesture class");

    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string manifest;
    train_cmd->add_option("--manifest", manifest, "dataset manifest")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string checkpoint, split_arg = "test";
    eval_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--split", split_arg, "train|validation|test");

    auto* infer_cmd = app.add_subcommand("infer", "classify sample files");
    std::vector<std::string> files;
    infer_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    infer_cmd->add_option("files", files, "sample CSV files")->required();

    auto* stream_cmd = app.add_subcommand("stream", "streaming recognition over replayed frames");
    int idle_padding = 0;
    bool fast_forward = false;
    stream_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    stream_cmd->add_option("files", files, "sample or .stream files")->required();
    stream_cmd->add_option("--fps", rc.stream.fps, "replay frame rate");
    stream_cmd->add_option("--idle-padding", idle_padding, "empty frames between files");
    stream_cmd->add_flag("--fast-forward", fast_forward, "disable real-time pacing");

    auto* bench_cmd = app.add_subcommand("bench", "flops and latency table");
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    bool tiny = false;
    gradcheck_cmd->add_flag("--tiny", tiny, "tiny model configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (!config_file.empty()) apply_config_file(rc, config_file);
        if (*seed_opt) rc.train.seed = seed_flag;
        (void)seed_set;
        apply_preset(rc);

        if (*synth)
            return cmd_synth(rc, out_dir, n_classes, per_class, val_count, test_count, frames,
                             points_min, points_max, sigma, cluster, cluster_growth,
                             with_no_gesture);
        if (*train_cmd) return cmd_train(rc, manifest, out_dir);
        if (*eval_cmd) return cmd_eval(rc, manifest, checkpoint, split_arg, out_dir);
        if (*infer_cmd) return cmd_infer(rc, checkpoint, files);
        if (*stream_cmd)
            return cmd_stream(rc, checkpoint, files, out_dir, idle_padding, fast_forward);
        if (*bench_cmd) return cmd_bench(rc, out_dir);
        if (*gradcheck_cmd) return cmd_gradcheck(tiny, rc.train.seed);
        return 1;
    } catch (const TrainDivergence& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const LoadError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
