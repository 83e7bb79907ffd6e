#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "tesla/net.hpp"
#include "tesla/preprocess.hpp"
#include "tesla/types.hpp"

namespace tesla {

struct StreamConfig {
    int min_frames = 2;
    int idle_frame_delimiter = 10;
    int idle_frame_threshold = 3;  // points
    double fps = 30.0;
    int no_gesture_class = -1;  // < 0: no rejection class

    void validate() const;
};

struct SegmenterState {
    std::vector<Frame> buffer;  // active frames only
    int idle_count = 0;
    int64_t frame_counter = 0;
};

enum class EventKind { Recognition, Rejection, Heartbeat };

struct StreamEvent {
    EventKind kind = EventKind::Heartbeat;
    int label = -1;
    std::vector<double> scores;
    int64_t span_begin = 0, span_end = 0;  // buffered frame span (inclusive counters)
    double timestamp_s = 0.0;
    double latency_s = 0.0;
};

// One step of the segmentation state machine. When the emit condition holds
// (enough buffered active frames and a full idle run), returns the buffered
// gesture and clears the buffer; the incoming frame is then classified as
// idle/active as usual.
std::optional<GestureSample> segmenter_step(SegmenterState& state, const Frame& frame,
                                            const StreamConfig& cfg);

// Ordered frame stream replayed from sample or recorded-stream files, with
// optional empty-frame padding between files.
class ReplaySource {
public:
    ReplaySource(const std::vector<std::filesystem::path>& files, int idle_padding = 0);

    // Recorded stream: per-frame CSV blocks ("x,y,z" rows) separated by blank
    // lines; an empty block is an empty frame.
    static std::vector<Frame> read_stream_file(const std::filesystem::path& path);
    static void write_stream_file(const std::filesystem::path& path,
                                  const std::vector<Frame>& frames);

    // Real-time replay: next() sleeps 1/fps between frames.
    void set_pacing(double fps) { pace_s_ = fps > 0.0 ? 1.0 / fps : 0.0; }

    std::optional<Frame> next();
    const std::vector<Frame>& frames() const { return frames_; }

private:
    std::vector<Frame> frames_;
    size_t cursor_ = 0;
    double pace_s_ = 0.0;
};

// Drives the segmenter over the stream; each emitted buffer is resampled and
// classified. Argmax == no-gesture class gives a rejection event.
std::vector<StreamEvent> stream_recognize(ReplaySource& source, const ModelConfig& mcfg,
                                          const ParamTable& params, const PreprocessConfig& pcfg,
                                          const StreamConfig& cfg);

void write_event_log(const std::filesystem::path& path, const std::vector<StreamEvent>& events);

}  // namespace tesla
