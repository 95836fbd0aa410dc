#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crop_ensemble/annotate.hpp"
#include "crop_ensemble/boxcrop.hpp"
#include "crop_ensemble/ensemble.hpp"
#include "crop_ensemble/error.hpp"
#include "crop_ensemble/infer.hpp"
#include "crop_ensemble/thread_pool.hpp"

namespace crop_ensemble {

// ---------------------------------------------------------------------------
// Detection seam

// Yields the face boxes of a frame, in native frame pixels.
class DetectionProvider {
 public:
  virtual ~DetectionProvider() = default;
  virtual std::vector<FaceBox> detect(std::size_t frame_index, const Frame& frame) = 0;
};

// Pre-computed detections. One record per line:
//   frame_index, x_a, y_a, x_b, y_b
// Commas and/or whitespace separate fields; blank lines and '#' comments are ignored.
class SidecarDetections final : public DetectionProvider {
 public:
  static SidecarDetections parse(std::istream& in) {
    SidecarDetections d;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream fields(line);
      long long idx = 0;
      std::array<int, 4> c{};
      if (!(fields >> idx)) continue;
      if (!(fields >> c[0] >> c[1] >> c[2] >> c[3]) || idx < 0)
        throw InvalidInput("detections line " + std::to_string(line_no) +
                           ": expected frame_index, x_a, y_a, x_b, y_b");
      std::string extra;
      if (fields >> extra)
        throw InvalidInput("detections line " + std::to_string(line_no) + ": trailing field '" + extra + "'");
      d.boxes_[static_cast<std::size_t>(idx)].push_back(FaceBox::from_corners(c[0], c[1], c[2], c[3]));
    }
    return d;
  }

  static SidecarDetections load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open detections file " + path.string());
    return parse(in);
  }

  std::vector<FaceBox> detect(std::size_t frame_index, const Frame&) override {
    const auto it = boxes_.find(frame_index);
    return it == boxes_.end() ? std::vector<FaceBox>{} : it->second;
  }

  std::size_t frame_count() const noexcept { return boxes_.size(); }

 private:
  std::map<std::size_t, std::vector<FaceBox>> boxes_;
};

// Same boxes on every frame; the built-in "fixed" plugin.
class FixedDetections final : public DetectionProvider {
 public:
  explicit FixedDetections(std::vector<FaceBox> boxes) : boxes_(std::move(boxes)) {}
  std::vector<FaceBox> detect(std::size_t, const Frame&) override { return boxes_; }

 private:
  std::vector<FaceBox> boxes_;
};

using DetectorFactory = std::function<std::unique_ptr<DetectionProvider>(const std::string& args)>;

inline std::vector<FaceBox> parse_boxes(const std::string& text) {
  std::vector<FaceBox> boxes;
  std::string norm = text;
  std::replace(norm.begin(), norm.end(), ';', ' ');
  std::istringstream groups(norm);
  std::string group;
  while (groups >> group) {
    std::replace(group.begin(), group.end(), ',', ' ');
    std::istringstream f(group);
    std::array<int, 4> c{};
    std::string extra;
    if (!(f >> c[0] >> c[1] >> c[2] >> c[3]) || (f >> extra))
      throw InvalidInput("box must be x_a,y_a,x_b,y_b, got '" + group + "'");
    boxes.push_back(FaceBox::from_corners(c[0], c[1], c[2], c[3]));
  }
  return boxes;
}

// Live detectors register here under a plugin identifier.
inline std::map<std::string, DetectorFactory>& detector_registry() {
  static std::map<std::string, DetectorFactory> registry{
      {"none", [](const std::string&) { return std::make_unique<FixedDetections>(std::vector<FaceBox>{}); }},
      {"fixed", [](const std::string& args) { return std::make_unique<FixedDetections>(parse_boxes(args)); }},
  };
  return registry;
}

inline bool register_detector(const std::string& name, DetectorFactory factory) {
  detector_registry()[name] = std::move(factory);
  return true;
}

enum class ProviderKind { sidecar_file, plugin };

struct DetectionProviderSpec {
  ProviderKind kind = ProviderKind::sidecar_file;
  std::string source;  // sidecar path, or "plugin-id[:args]"
};

inline std::unique_ptr<DetectionProvider> make_detection_provider(const DetectionProviderSpec& spec) {
  if (spec.kind == ProviderKind::sidecar_file)
    return std::make_unique<SidecarDetections>(SidecarDetections::load(spec.source));
  const auto colon = spec.source.find(':');
  const std::string name = spec.source.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.source.substr(colon + 1);
  const auto& registry = detector_registry();
  const auto it = registry.find(name);
  if (it == registry.end()) throw InvalidInput("unknown detector plugin '" + name + "'");
  return it->second(args);
}

// ---------------------------------------------------------------------------
// Per-frame processing

struct StageLatency {
  double detect_ms = 0.0;
  double geometry_ms = 0.0;
  double inference_ms = 0.0;
  double aggregate_ms = 0.0;
};

struct FaceResult {
  FaceBox box;                   // as detected, native pixels
  FaceBox reference_box;         // at the reference resolution
  std::optional<FaceBox> expanded;
  std::optional<BoxTriple> triple;
  std::optional<Decision> decision;  // empty when the face was skipped
  std::string skipped_reason;
};

struct FrameResult {
  std::size_t frame_index = 0;
  std::vector<FaceResult> faces;
  StageLatency latency;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace detail

struct ProcessOptions {
  VoteMode mode = VoteMode::soft_mean;
  int offset = kDefaultOffset;
  ThreadPool* pool = nullptr;  // crops fan out here when set
};

// expand_margin -> make_box_triple -> extract_and_squeeze -> classify -> aggregate
// for every box, in input order. Boxes are in native frame pixels. Faces whose
// crops degenerate are recorded as skipped; they never affect other faces.
inline FrameResult process_frame(const Frame& frame, std::span<const FaceBox> boxes,
                                 const ClassifierHandle& handle, const ProcessOptions& opts = {}) {
  validate(frame);
  FrameResult result;
  result.faces.resize(boxes.size());
  if (boxes.empty()) return result;

  auto t0 = detail::Clock::now();
  const ReferenceFrame ref = normalize_to_reference(frame, boxes);
  std::vector<std::optional<CropSet>> crops(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    FaceResult& face = result.faces[i];
    face.box = boxes[i];
    face.reference_box = ref.boxes[i];
    try {
      face.expanded = expand_margin(ref.boxes[i], ref.frame);
      face.triple = make_box_triple(*face.expanded, opts.offset);
      crops[i] = extract_and_squeeze(ref.frame, *face.triple);
    } catch (const DegenerateCrop& e) {
      face.skipped_reason = e.what();
    } catch (const InvalidInput& e) {
      face.skipped_reason = e.what();
    }
  }
  result.latency.geometry_ms = detail::ms_since(t0);

  t0 = detail::Clock::now();
  std::vector<std::array<GenderScore, 3>> scores(boxes.size());
  if (opts.pool != nullptr && opts.pool->size() > 1) {
    std::vector<std::array<std::future<GenderScore>, 3>> pending(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (!crops[i]) continue;
      for (std::size_t k = 0; k < 3; ++k)
        pending[i][k] = opts.pool->submit([&handle, &img = crops[i]->images[k]] { return handle.classify(img); });
    }
    // Wait for every task before get() can rethrow: tasks borrow `crops`.
    for (auto& face : pending)
      for (auto& f : face)
        if (f.valid()) f.wait();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (!crops[i]) continue;
      for (std::size_t k = 0; k < 3; ++k) scores[i][k] = pending[i][k].get();
    }
  } else {
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (crops[i]) scores[i] = classify_cropset(handle, *crops[i]);
  }
  result.latency.inference_ms = detail::ms_since(t0);

  t0 = detail::Clock::now();
  for (std::size_t i = 0; i < boxes.size(); ++i)
    if (crops[i]) result.faces[i].decision = aggregate(scores[i], opts.mode);
  result.latency.aggregate_ms = detail::ms_since(t0);
  return result;
}

inline void annotate(Frame& frame, const FrameResult& result) {
  for (const FaceResult& face : result.faces) {
    if (face.decision) annotate_face(frame, face.box, face.decision->label);
    else annotate_skipped(frame, face.box);
  }
}

// ---------------------------------------------------------------------------
// Video loop

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<Frame> next() = 0;
};

class VectorFrameSource final : public FrameSource {
 public:
  explicit VectorFrameSource(std::vector<Frame> frames) : frames_(std::move(frames)) {}
  std::optional<Frame> next() override {
    if (pos_ >= frames_.size()) return std::nullopt;
    return frames_[pos_++];
  }

 private:
  std::vector<Frame> frames_;
  std::size_t pos_ = 0;
};

// Deterministic synthetic frames: a noisy background plus a face-sized patch
// whose brightness varies per frame. Cycles through `distinct` pre-rendered frames.
class SyntheticFrameSource final : public FrameSource {
 public:
  SyntheticFrameSource(std::size_t count, int width, int height, std::uint64_t seed = 0,
                       std::size_t distinct = 16)
      : count_(count) {
    if (width < 1 || height < 1) throw InvalidInput("synthetic frame size must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> noise(0, 40);
    std::uniform_int_distribution<int> level(0, 255);
    for (std::size_t f = 0; f < std::max<std::size_t>(distinct, 1); ++f) {
      Frame img(width, height);
      const int base = level(rng) / 2;
      for (auto& px : img.pixels) px = static_cast<std::uint8_t>(base + noise(rng));
      // Left half and right half of the patch get independent brightness, so
      // the three crops of a face can disagree.
      const int left = level(rng), right = level(rng);
      for (int y = height / 4; y < height * 3 / 4; ++y)
        for (int x = width / 4; x < width * 3 / 4; ++x) {
          const int v = x < width / 2 ? left : right;
          std::uint8_t* p = img.at(x, y);
          p[0] = p[1] = p[2] = static_cast<std::uint8_t>(v);
        }
      frames_.push_back(std::move(img));
    }
  }

  std::optional<Frame> next() override {
    if (pos_ >= count_) return std::nullopt;
    return frames_[pos_++ % frames_.size()];
  }

  // Box covering the central patch, for use with FixedDetections.
  static FaceBox centre_box(int width, int height) {
    return FaceBox::from_corners(width * 3 / 8, height * 3 / 8, width * 5 / 8, height * 3 / 4 - 1);
  }

 private:
  std::size_t count_;
  std::vector<Frame> frames_;
  std::size_t pos_ = 0;
};

class AnnotationSink {
 public:
  virtual ~AnnotationSink() = default;
  // Throws IoError on write failure.
  virtual void write(std::size_t frame_index, const Frame& annotated) = 0;
};

class NullSink final : public AnnotationSink {
 public:
  void write(std::size_t, const Frame&) override {}
};

class MemorySink final : public AnnotationSink {
 public:
  void write(std::size_t, const Frame& annotated) override { frames.push_back(annotated); }
  std::vector<Frame> frames;
};

struct StageStats {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
};

inline StageStats summarize(std::vector<double> samples) {
  StageStats s;
  if (samples.empty()) return s;
  double total = 0.0;
  for (double v : samples) total += v;
  s.mean_ms = total / static_cast<double>(samples.size());
  std::sort(samples.begin(), samples.end());
  // nearest-rank percentile
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(samples.size())));
  s.p95_ms = samples[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

struct ThroughputReport {
  std::size_t frames = 0;
  std::size_t faces = 0;
  double wall_time = 0.0;  // seconds
  double fps = 0.0;        // frames / wall_time, detection included
  double fps_excluding_detection = 0.0;
  std::map<std::string, StageStats> per_stage;  // detect, geometry, inference, aggregate
  std::size_t parallelism = 1;
  std::string backend;
  std::string mode;
  bool complete = true;
  std::string error;
};

inline nlohmann::json to_json(const ThroughputReport& r) {
  nlohmann::json j;
  j["frames"] = r.frames;
  j["faces"] = r.faces;
  j["wall_time"] = r.wall_time;
  j["fps"] = r.fps;
  j["fps_excluding_detection"] = r.fps_excluding_detection;
  auto& stages = j["per_stage"] = nlohmann::json::object();
  for (const auto& [name, s] : r.per_stage) stages[name] = {{"mean_ms", s.mean_ms}, {"p95_ms", s.p95_ms}};
  j["parallelism"] = r.parallelism;
  j["backend"] = r.backend;
  j["mode"] = r.mode;
  j["complete"] = r.complete;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

struct RunOptions {
  VoteMode mode = VoteMode::soft_mean;
  std::size_t parallelism = 1;
  int offset = kDefaultOffset;
  std::function<void(const FrameResult&)> on_result;  // called in frame order
};

// Pulls every frame from `frames`, processes it, and writes the annotated frame
// (Man red, Woman blue) to `sink`. A sink failure stops the run and returns the
// partial report with complete = false.
inline ThroughputReport run_video(FrameSource& frames, DetectionProvider& provider,
                                  const ClassifierHandle& handle, AnnotationSink& sink,
                                  const RunOptions& opts = {}) {
  if (opts.parallelism < 1) throw ValidationError("parallelism must be at least 1");
  ThreadPool pool(opts.parallelism);
  ProcessOptions popts{opts.mode, opts.offset, &pool};

  ThroughputReport report;
  report.parallelism = opts.parallelism;
  report.backend = handle.describe();
  report.mode = to_string(opts.mode);
  std::vector<double> detect, geometry, inference, aggregate_t;
  double detect_total_s = 0.0;

  const auto start = detail::Clock::now();
  for (std::size_t index = 0;; ++index) {
    std::optional<Frame> frame = frames.next();
    if (!frame) break;

    auto t0 = detail::Clock::now();
    const std::vector<FaceBox> boxes = provider.detect(index, *frame);
    const double detect_ms = detail::ms_since(t0);

    FrameResult result = process_frame(*frame, boxes, handle, popts);
    result.frame_index = index;
    result.latency.detect_ms = detect_ms;

    annotate(*frame, result);
    try {
      sink.write(index, *frame);
    } catch (const Error& e) {
      report.complete = false;
      report.error = e.what();
    }

    ++report.frames;
    report.faces += boxes.size();
    detect_total_s += detect_ms / 1000.0;
    detect.push_back(result.latency.detect_ms);
    geometry.push_back(result.latency.geometry_ms);
    inference.push_back(result.latency.inference_ms);
    aggregate_t.push_back(result.latency.aggregate_ms);
    if (opts.on_result) opts.on_result(result);
    if (!report.complete) break;
  }
  report.wall_time = std::chrono::duration<double>(detail::Clock::now() - start).count();
  if (report.frames == 0 && report.complete) throw InvalidInput("frame source yielded no frames");

  report.fps = report.wall_time > 0.0 ? static_cast<double>(report.frames) / report.wall_time : 0.0;
  const double without_detect = report.wall_time - detect_total_s;
  report.fps_excluding_detection =
      without_detect > 0.0 ? static_cast<double>(report.frames) / without_detect : 0.0;
  report.per_stage["detect"] = summarize(std::move(detect));
  report.per_stage["geometry"] = summarize(std::move(geometry));
  report.per_stage["inference"] = summarize(std::move(inference));
  report.per_stage["aggregate"] = summarize(std::move(aggregate_t));
  return report;
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchConfig {
  std::size_t frames = 300;
  int width = 640;
  int height = 480;
  std::size_t faces_per_frame = 1;
  std::size_t parallelism = 1;
  VoteMode mode = VoteMode::soft_mean;
  std::uint64_t seed = 0;
};

inline void validate(const BenchConfig& c) {
  std::vector<std::string> problems;
  if (c.frames == 0) problems.push_back("frames must be at least 1");
  if (c.width < 1 || c.height < 1) problems.push_back("frame size must be positive");
  if (c.parallelism < 1) problems.push_back("parallelism must be at least 1");
  if (!problems.empty()) throw ValidationError("invalid bench config: " + detail::join(problems, "; "));
}

// Synthetic frames through the full loop with a null sink. Per-stage latencies
// separate box/crop geometry from inference and aggregation.
inline ThroughputReport bench(const BenchConfig& config, const ClassifierHandle& handle) {
  validate(config);
  SyntheticFrameSource source(config.frames, config.width, config.height, config.seed);
  const FaceBox centre = SyntheticFrameSource::centre_box(config.width, config.height);
  FixedDetections provider(std::vector<FaceBox>(config.faces_per_frame, centre));
  NullSink sink;
  RunOptions opts;
  opts.mode = config.mode;
  opts.parallelism = config.parallelism;
  return run_video(source, provider, handle, sink, opts);
}

}  // namespace crop_ensemble
