#include "tesla/stream.hpp"

#include <chrono>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "tesla/io.hpp"
#include "tesla/train.hpp"

namespace tesla {

void StreamConfig::validate() const {
    if (min_frames < 0 || idle_frame_delimiter < 0 || idle_frame_threshold < 0)
        throw std::invalid_argument("StreamConfig: negative threshold");
    if (fps <= 0) throw std::invalid_argument("StreamConfig: fps must be positive");
}

std::optional<GestureSample> segmenter_step(SegmenterState& state, const Frame& frame,
                                            const StreamConfig& cfg) {
    std::optional<GestureSample> emitted;

    // Emit check happens before the incoming frame is classified, matching the
    // loop order of the recognition algorithm.
    if (static_cast<int>(state.buffer.size()) >= cfg.min_frames &&
        state.idle_count >= cfg.idle_frame_delimiter) {
        GestureSample sample;
        sample.meta["span_begin"] = std::to_string(state.buffer.front().index);
        sample.meta["span_end"] = std::to_string(state.buffer.back().index);
        int reindex = 0;
        for (auto& f : state.buffer) {
            Frame out;
            out.index = reindex;
            out.points = f.points;
            for (auto& p : out.points) p.frame = reindex;
            sample.frames.push_back(std::move(out));
            ++reindex;
        }
        emitted = std::move(sample);
        state.buffer.clear();
        state.idle_count = 0;
    }

    if (static_cast<int>(frame.points.size()) <= cfg.idle_frame_threshold) {
        ++state.idle_count;
    } else {
        state.idle_count = 0;
        Frame buffered;
        buffered.index = static_cast<int>(state.frame_counter);
        buffered.points = frame.points;
        for (auto& p : buffered.points) p.frame = buffered.index;
        state.buffer.push_back(std::move(buffered));
    }
    ++state.frame_counter;
    return emitted;
}

ReplaySource::ReplaySource(const std::vector<std::filesystem::path>& files, int idle_padding) {
    bool first = true;
    for (const auto& path : files) {
        if (!first)
            for (int i = 0; i < idle_padding; ++i) frames_.push_back(Frame{});
        first = false;
        std::vector<Frame> chunk;
        if (path.extension() == ".stream")
            chunk = read_stream_file(path);
        else
            chunk = load_sample(path).frames;
        for (auto& f : chunk) frames_.push_back(std::move(f));
    }
    for (size_t i = 0; i < frames_.size(); ++i) {
        frames_[i].index = static_cast<int>(i);
        for (auto& p : frames_[i].points) p.frame = frames_[i].index;
    }
}

std::vector<Frame> ReplaySource::read_stream_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("missing stream file: " + path.string());
    std::vector<Frame> frames;
    Frame cur;
    std::string line;
    int row = 0;
    while (std::getline(f, line)) {
        ++row;
        while (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            frames.push_back(std::move(cur));
            cur = Frame{};
            continue;
        }
        std::string ctx = path.string() + " row " + std::to_string(row);
        size_t c1 = line.find(',');
        size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos) throw LoadError("malformed stream row in " + ctx);
        RadarPoint p;
        p.x = parse_double(line.substr(0, c1), ctx);
        p.y = parse_double(line.substr(c1 + 1, c2 - c1 - 1), ctx);
        p.z = parse_double(line.substr(c2 + 1), ctx);
        cur.points.push_back(p);
    }
    frames.push_back(std::move(cur));
    return frames;
}

void ReplaySource::write_stream_file(const std::filesystem::path& path,
                                     const std::vector<Frame>& frames) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open for writing: " + path.string());
    for (size_t i = 0; i < frames.size(); ++i) {
        if (i) f << '\n';
        for (const auto& p : frames[i].points)
            f << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(p.z)
              << '\n';
    }
}

std::optional<Frame> ReplaySource::next() {
    if (cursor_ >= frames_.size()) return std::nullopt;
    if (pace_s_ > 0.0 && cursor_ > 0)
        std::this_thread::sleep_for(std::chrono::duration<double>(pace_s_));
    return frames_[cursor_++];
}

std::vector<StreamEvent> stream_recognize(ReplaySource& source, const ModelConfig& mcfg,
                                          const ParamTable& params, const PreprocessConfig& pcfg,
                                          const StreamConfig& cfg) {
    cfg.validate();
    if (cfg.no_gesture_class >= mcfg.classes)
        throw std::invalid_argument("stream_recognize: no-gesture class outside checkpoint range");
    std::vector<StreamEvent> events;
    SegmenterState state;
    while (auto frame = source.next()) {
        auto emitted = segmenter_step(state, *frame, cfg);
        if (!emitted) continue;
        auto t0 = std::chrono::steady_clock::now();
        GestureSample prepared = resample_sample(normalize_pose(*emitted, pcfg), pcfg);
        auto logits = classify_forward(prepared, mcfg, params);
        auto t1 = std::chrono::steady_clock::now();

        StreamEvent ev;
        auto scores = softmax(logits);
        int best = 0;
        for (size_t i = 1; i < scores.size(); ++i)
            if (scores[i] > scores[best]) best = static_cast<int>(i);
        ev.kind = best == cfg.no_gesture_class ? EventKind::Rejection : EventKind::Recognition;
        ev.label = best;
        ev.scores = std::move(scores);
        ev.span_begin = std::stoll(emitted->meta.at("span_begin"));
        ev.span_end = std::stoll(emitted->meta.at("span_end"));
        ev.timestamp_s = static_cast<double>(state.frame_counter - 1) / cfg.fps;
        ev.latency_s = std::chrono::duration<double>(t1 - t0).count();
        events.push_back(std::move(ev));
    }
    return events;
}

void write_event_log(const std::filesystem::path& path, const std::vector<StreamEvent>& events) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open for writing: " + path.string());
    for (const auto& ev : events) {
        nlohmann::json j{
            {"kind", ev.kind == EventKind::Recognition
                         ? "recognition"
                         : (ev.kind == EventKind::Rejection ? "rejection" : "heartbeat")},
            {"label", ev.label},
            {"scores", ev.scores},
            {"frame_span", {ev.span_begin, ev.span_end}},
            {"latency_s", ev.latency_s}};
        f << j.dump() << '\n';
    }
}

}  // namespace tesla
