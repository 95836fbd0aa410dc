#include <gtest/gtest.h>

#include <sstream>
#include <thread>

#include "crop_ensemble/pipeline.hpp"

using namespace crop_ensemble;

namespace {

void paint(Frame& f, int x0, int y0, int x1, int y1, std::uint8_t v) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      auto* p = f.at(x, y);
      p[0] = p[1] = p[2] = v;
    }
}

// Detected (300,300)-(500,500) expands to (200,200)-(600,500); the left box
// (200,200)-(500,400) is painted white, so left and middle crops vote Man and
// the mostly dark right crop votes Woman.
Frame two_one_frame() {
  Frame f(816, 816, 0);
  paint(f, 200, 200, 500, 400, 255);
  return f;
}

const FaceBox kFace = FaceBox::from_corners(300, 300, 500, 500);

class InvertingClassifier final : public Classifier {
 public:
  GenderScore classify(const Image& crop) const override {
    const double p = mean_intensity(crop) / 255.0;
    return {1.0 - p, p};
  }
  bool concurrent() const noexcept override { return false; }
  std::string describe() const override { return "inverting"; }
};

std::vector<Gender> labels_of(const FrameResult& r) {
  std::vector<Gender> out;
  for (const auto& f : r.faces) out.push_back(f.decision ? f.decision->label : Gender::man);
  return out;
}

}  // namespace

TEST(ProcessFrame, NoDetectionsGiveEmptyResult) {
  const FrameResult r = process_frame(Frame(64, 48), {}, load_backend(mock_manifest()));
  EXPECT_TRUE(r.faces.empty());
}

TEST(ProcessFrame, TwoOfThreeMajorityThroughFullPipeline) {
  const std::vector<FaceBox> boxes{kFace};
  const FrameResult r =
      process_frame(two_one_frame(), boxes, load_backend(mock_manifest()), {VoteMode::hard_majority});
  ASSERT_EQ(r.faces.size(), 1u);
  const auto& face = r.faces[0];
  ASSERT_TRUE(face.decision);
  EXPECT_EQ(*face.expanded, FaceBox::from_corners(200, 200, 600, 500));
  EXPECT_EQ(face.decision->per_crop[0].argmax(), Gender::man);
  EXPECT_EQ(face.decision->per_crop[1].argmax(), Gender::man);
  EXPECT_EQ(face.decision->per_crop[2].argmax(), Gender::woman);
  EXPECT_EQ(face.decision->label, Gender::man);
  EXPECT_EQ(face.decision->aggregate, (GenderScore{2.0 / 3.0, 1.0 / 3.0}));
}

TEST(ProcessFrame, GeometryMatchesDirectBoxcropCallsAndIsModelIndependent) {
  Frame frame(640, 480);
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) frame.pixels[i] = static_cast<std::uint8_t>(i * 31 % 251);
  const std::vector<FaceBox> boxes{FaceBox::from_corners(100, 120, 220, 260), FaceBox::from_corners(400, 100, 520, 240)};

  const ClassifierHandle mock = load_backend(mock_manifest());
  const ClassifierHandle inverted(std::make_shared<InvertingClassifier>(), mock_manifest());
  const FrameResult a = process_frame(frame, boxes, mock);
  const FrameResult b = process_frame(frame, boxes, inverted);

  const ReferenceFrame ref = normalize_to_reference(frame, boxes);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const FaceBox expanded = expand_margin(ref.boxes[i], ref.frame);
    const BoxTriple triple = make_box_triple(expanded);
    const CropSet crops = extract_and_squeeze(ref.frame, triple);
    EXPECT_EQ(*a.faces[i].expanded, expanded);
    EXPECT_EQ(*a.faces[i].triple, triple);
    EXPECT_EQ(*b.faces[i].triple, triple);
    const auto direct = classify_cropset(mock, crops);
    EXPECT_EQ(a.faces[i].decision->per_crop, direct);
    EXPECT_NE(a.faces[i].decision->aggregate.p_man, b.faces[i].decision->aggregate.p_man);
  }
}

TEST(ProcessFrame, DegenerateFaceIsSkippedWithoutAffectingOthers) {
  const Frame frame = two_one_frame();
  const ClassifierHandle h = load_backend(mock_manifest());
  const std::vector<FaceBox> alone{kFace};
  const std::vector<FaceBox> mixed{FaceBox::from_corners(700, 100, 700, 200), kFace};
  const FrameResult r1 = process_frame(frame, alone, h);
  const FrameResult r2 = process_frame(frame, mixed, h);
  ASSERT_EQ(r2.faces.size(), 2u);
  EXPECT_FALSE(r2.faces[0].decision);
  EXPECT_FALSE(r2.faces[0].skipped_reason.empty());
  ASSERT_TRUE(r2.faces[1].decision);
  EXPECT_EQ(r2.faces[1].decision->aggregate, r1.faces[0].decision->aggregate);
  EXPECT_EQ(r2.faces[1].decision->per_crop, r1.faces[0].decision->per_crop);
}

TEST(ProcessFrame, ParallelFanOutMatchesSerial) {
  SyntheticFrameSource src(6, 400, 300, 3);
  const ClassifierHandle h = load_backend(mock_manifest());
  const ClassifierHandle serial_impl(std::make_shared<InvertingClassifier>(), mock_manifest());
  ThreadPool pool(3);
  const std::vector<FaceBox> boxes{SyntheticFrameSource::centre_box(400, 300), FaceBox::from_corners(10, 10, 90, 90)};
  while (auto f = src.next()) {
    for (const ClassifierHandle* handle : {&h, &serial_impl}) {
      const FrameResult s = process_frame(*f, boxes, *handle);
      const FrameResult p = process_frame(*f, boxes, *handle, {VoteMode::soft_mean, kDefaultOffset, &pool});
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        EXPECT_EQ(s.faces[i].decision->per_crop, p.faces[i].decision->per_crop);
        EXPECT_EQ(s.faces[i].decision->aggregate, p.faces[i].decision->aggregate);
      }
    }
  }
}

TEST(ProcessFrame, ClassifierErrorsPropagateFromWorkers) {
  ModelManifest m = mock_manifest();
  m.mock.rule = MockRule::fixed_table;
  ThreadPool pool(3);
  const std::vector<FaceBox> boxes{kFace};
  EXPECT_THROW(process_frame(two_one_frame(), boxes, load_backend(m), {VoteMode::soft_mean, kDefaultOffset, &pool}),
               InvalidInput);
}

// --- detections -------------------------------------------------------------

TEST(SidecarDetections, ParsesRecordsPerFrame) {
  std::istringstream in(
      "# frame, xa, ya, xb, yb\n"
      "0, 10, 20, 110, 140\n"
      "0 200 20 300 140\n"
      "\n"
      "2,5,5,50,60  # trailing comment\n");
  SidecarDetections d = SidecarDetections::parse(in);
  const Frame f(10, 10);
  EXPECT_EQ(d.detect(0, f).size(), 2u);
  EXPECT_EQ(d.detect(0, f)[1], FaceBox::from_corners(200, 20, 300, 140));
  EXPECT_TRUE(d.detect(1, f).empty());
  EXPECT_EQ(d.detect(2, f)[0], FaceBox::from_corners(5, 5, 50, 60));
}

TEST(SidecarDetections, MalformedLineReportsLineNumber) {
  std::istringstream in("0,1,2,3,4\n1,2,3\n");
  try {
    SidecarDetections::parse(in);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(SidecarDetections, MissingFileIsAnIoError) {
  EXPECT_THROW(SidecarDetections::load("/nonexistent/dets.txt"), IoError);
}

TEST(DetectorPlugins, FixedAndUnknown) {
  auto p = make_detection_provider({ProviderKind::plugin, "fixed:1,2,30,40;50,60,70,80"});
  EXPECT_EQ(p->detect(0, Frame(100, 100)).size(), 2u);
  EXPECT_THROW(make_detection_provider({ProviderKind::plugin, "cascade-cnn"}), InvalidInput);
  register_detector("test-one", [](const std::string&) {
    return std::make_unique<FixedDetections>(std::vector<FaceBox>{FaceBox::from_corners(0, 0, 9, 9)});
  });
  EXPECT_EQ(make_detection_provider({ProviderKind::plugin, "test-one"})->detect(3, Frame(20, 20)).size(), 1u);
}

// --- run_video ----------------------------------------------------------------

TEST(RunVideo, AccountsForEveryFrame) {
  SyntheticFrameSource src(100, 160, 120, 1);
  FixedDetections det({SyntheticFrameSource::centre_box(160, 120)});
  NullSink sink;
  std::vector<std::size_t> order;
  RunOptions opts;
  opts.on_result = [&](const FrameResult& r) { order.push_back(r.frame_index); };
  const ThroughputReport r = run_video(src, det, load_backend(mock_manifest()), sink, opts);
  EXPECT_EQ(r.frames, 100u);
  EXPECT_EQ(r.faces, 100u);
  EXPECT_GT(r.fps, 0.0);
  EXPECT_NEAR(r.fps, r.frames / r.wall_time, 1e-9 * r.fps);
  EXPECT_TRUE(r.complete);
  ASSERT_EQ(order.size(), 100u);
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
  for (const char* stage : {"detect", "geometry", "inference", "aggregate"}) {
    ASSERT_TRUE(r.per_stage.count(stage)) << stage;
    EXPECT_GE(r.per_stage.at(stage).mean_ms, 0.0);
    EXPECT_GE(r.per_stage.at(stage).p95_ms, 0.0);
  }
}

TEST(RunVideo, AnnotatesManRedAndWomanBlue) {
  Frame bright(816, 816, 0), dark(816, 816, 0);
  paint(bright, 150, 150, 650, 560, 250);
  paint(dark, 150, 150, 650, 560, 10);
  VectorFrameSource src({bright, dark});
  FixedDetections det({kFace});
  MemorySink sink;
  run_video(src, det, load_backend(mock_manifest()), sink);
  ASSERT_EQ(sink.frames.size(), 2u);
  const auto* man = sink.frames[0].at(kFace.a.x + 1, kFace.a.y + 50);
  const auto* woman = sink.frames[1].at(kFace.a.x + 1, kFace.a.y + 50);
  EXPECT_EQ((Rgb{man[0], man[1], man[2]}), kManColor);
  EXPECT_EQ((Rgb{woman[0], woman[1], woman[2]}), kWomanColor);
  // Outline is three pixels wide.
  const auto* inside = sink.frames[0].at(kFace.a.x + 3, kFace.a.y + 50);
  EXPECT_NE((Rgb{inside[0], inside[1], inside[2]}), kManColor);
}

TEST(RunVideo, LabelsAreIdenticalAcrossParallelism) {
  auto labels = [](std::size_t parallel) {
    SyntheticFrameSource src(30, 320, 240, 99);
    FixedDetections det({SyntheticFrameSource::centre_box(320, 240), FaceBox::from_corners(20, 20, 100, 120)});
    NullSink sink;
    std::vector<std::vector<Gender>> out;
    RunOptions opts;
    opts.parallelism = parallel;
    opts.mode = VoteMode::hard_majority;
    opts.on_result = [&](const FrameResult& r) { out.push_back(labels_of(r)); };
    run_video(src, det, load_backend(mock_manifest()), sink, opts);
    return out;
  };
  EXPECT_EQ(labels(1), labels(3));
}

class FailingSink final : public AnnotationSink {
 public:
  void write(std::size_t index, const Frame&) override {
    if (index == 4) throw IoError("disk full");
  }
};

TEST(RunVideo, SinkFailureStopsWithPartialReport) {
  SyntheticFrameSource src(10, 64, 64);
  FixedDetections det({});
  FailingSink sink;
  const ThroughputReport r = run_video(src, det, load_backend(mock_manifest()), sink);
  EXPECT_FALSE(r.complete);
  EXPECT_EQ(r.frames, 5u);
  EXPECT_NE(r.error.find("disk full"), std::string::npos);
  EXPECT_EQ(to_json(r)["complete"], false);
}

TEST(RunVideo, EmptySourceIsAnError) {
  VectorFrameSource src({});
  FixedDetections det({});
  NullSink sink;
  EXPECT_THROW(run_video(src, det, load_backend(mock_manifest()), sink), InvalidInput);
}

// --- bench ------------------------------------------------------------------

TEST(Bench, ZeroFramesIsInvalid) {
  BenchConfig c;
  c.frames = 0;
  EXPECT_THROW(bench(c, load_backend(mock_manifest())), ValidationError);
}

TEST(Bench, ReportsGeometrySeparatelyFromInference) {
  BenchConfig c;
  c.frames = 40;
  const ThroughputReport r = bench(c, load_backend(mock_manifest()));
  EXPECT_EQ(r.frames, 40u);
  EXPECT_GT(r.per_stage.at("geometry").mean_ms, 0.0);
  EXPECT_GT(r.per_stage.at("inference").mean_ms, 0.0);
  EXPECT_GE(r.fps_excluding_detection, r.fps);
  const auto j = to_json(r);
  EXPECT_TRUE(j["per_stage"].contains("geometry"));
  EXPECT_TRUE(j["per_stage"]["inference"].contains("p95_ms"));
}

TEST(Bench, ParallelInferenceIsNotSlowerThanSerial) {
  if (std::thread::hardware_concurrency() < 3)
    GTEST_SKIP() << "needs at least 3 hardware threads, have " << std::thread::hardware_concurrency();
  BenchConfig c;
  c.frames = 200;
  const ClassifierHandle h = load_backend(mock_manifest());
  c.parallelism = 1;
  const double serial = bench(c, h).per_stage.at("inference").mean_ms;
  c.parallelism = 3;
  const double parallel = bench(c, h).per_stage.at("inference").mean_ms;
  EXPECT_LE(parallel / serial, 1.0);
}

TEST(Summarize, NearestRankPercentile) {
  std::vector<double> v;
  for (int i = 1; i <= 20; ++i) v.push_back(i);
  const StageStats s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean_ms, 10.5);
  EXPECT_DOUBLE_EQ(s.p95_ms, 19.0);
  EXPECT_DOUBLE_EQ(summarize({7.0}).p95_ms, 7.0);
}
