#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "crop_ensemble/datakit.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace crop_ensemble;

namespace {

std::vector<ImageRecord> grid_manifest(int subjects, int per_subject, Source source = Source::adience) {
  std::vector<ImageRecord> out;
  for (int s = 0; s < subjects; ++s)
    for (int i = 0; i < per_subject; ++i)
      out.push_back({"s" + std::to_string(s) + "/" + std::to_string(i) + ".jpg", "s" + std::to_string(s),
                     s % 2 ? Gender::woman : Gender::man, source, std::nullopt, ""});
  return out;
}

std::vector<Prediction> predictions(std::size_t correct, std::size_t total, Source source = Source::adience) {
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < total; ++i) {
    ImageRecord r{"img" + std::to_string(i), "s", i % 2 ? Gender::man : Gender::woman, source, Split::test, ""};
    const Gender wrong = r.label == Gender::man ? Gender::woman : Gender::man;
    out.push_back({r, i < correct ? r.label : wrong});
  }
  return out;
}

class MemoryStore final : public ImageStore {
 public:
  std::map<std::string, Image> files;
  std::size_t writes = 0;
  Image read(const std::string& path) override {
    const auto it = files.find(path);
    if (it == files.end() || it->second.empty()) throw IoError("cannot decode " + path);
    return it->second;
  }
  void write(const std::string& path, const Image& img) override {
    ++writes;
    files[path] = img;
  }
};

}  // namespace

// --- manifest ---------------------------------------------------------------

TEST(Manifest, ReadWriteAndExclusion) {
  std::istringstream in(
      R"({"path":"a.jpg","subject_id":"p1","label":"Man","source":"Adience","split":null})"
      "\n"
      R"({"path":"b.jpg","subject_id":"p2","label":"Woman","source":"LFW","split":"test","note":"x"})"
      "\n"
      R"({"path":"c.jpg","subject_id":"p3","label":"unknown","source":"LFW"})"
      "\n\n");
  const Manifest m = read_manifest(in);
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.excluded, 1u);
  EXPECT_EQ(m.records[1].split, Split::test);
  EXPECT_EQ(m.records[1].source, Source::lfw);
  std::ostringstream out;
  write_manifest(out, m.records);
  std::istringstream again(out.str());
  EXPECT_EQ(read_manifest(again).records, m.records);
}

TEST(Manifest, MalformedLineIsAValidationError) {
  std::istringstream in("{\"path\": \n");
  EXPECT_THROW(read_manifest(in), ValidationError);
}

// --- split ------------------------------------------------------------------

TEST(SplitTargets, LargestRemainderMatchesPublishedCounts) {
  const std::array<double, 3> f{0.50, 0.15, 0.35};
  EXPECT_EQ(split_targets(26580, f), (std::array<std::size_t, 3>{13290, 3987, 9303}));
  EXPECT_EQ(split_targets(13233, f), (std::array<std::size_t, 3>{6616, 1985, 4632}));
  EXPECT_EQ(split_targets(100, f), (std::array<std::size_t, 3>{50, 15, 35}));
}

TEST(Split, TenSubjectsOfTen) {
  const auto out = split(grid_manifest(10, 10), SplitSpec{{0.5, 0.15, 0.35}, true, 17});
  EXPECT_TRUE(oracle::subject_disjoint(out));
  EXPECT_EQ(oracle::split_counts(out, Source::adience), (std::array<std::size_t, 3>{50, 20, 30}));
  std::map<Split, std::set<std::string>> subjects;
  for (const auto& r : out) subjects[*r.split].insert(r.subject_id);
  EXPECT_EQ(subjects[Split::train].size(), 5u);
  EXPECT_EQ(subjects[Split::val].size(), 2u);
  EXPECT_EQ(subjects[Split::test].size(), 3u);
}

TEST(Split, SeedSelectsWhichSubjects) {
  const auto a = split(grid_manifest(10, 10), SplitSpec{{0.5, 0.15, 0.35}, true, 1});
  const auto b = split(grid_manifest(10, 10), SplitSpec{{0.5, 0.15, 0.35}, true, 1});
  EXPECT_EQ(a, b);
  bool differs = false;
  for (std::uint64_t seed = 2; seed < 10 && !differs; ++seed)
    differs = split(grid_manifest(10, 10), SplitSpec{{0.5, 0.15, 0.35}, true, seed}) != a;
  EXPECT_TRUE(differs);
}

TEST(Split, ReproducesPublishedCountsWhenGranularityPermits) {
  auto records = synthetic::manifest(Source::adience, 26580, 30, 1);
  const auto lfw = synthetic::manifest(Source::lfw, 13233, 12, 2);
  records.insert(records.end(), lfw.begin(), lfw.end());
  const auto out = split(records, SplitSpec{});
  EXPECT_TRUE(oracle::subject_disjoint(out));
  EXPECT_EQ(oracle::split_counts(out, Source::adience), (std::array<std::size_t, 3>{13290, 3987, 9303}));
  EXPECT_EQ(oracle::split_counts(out, Source::lfw), (std::array<std::size_t, 3>{6616, 1985, 4632}));
}

TEST(Split, FractionFidelityOnRandomManifests) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t total = 20 + rng() % 3000;
    const int max_size = 1 + static_cast<int>(rng() % 40);
    auto records = synthetic::manifest(Source::other, total, max_size, static_cast<unsigned>(rng()), rng() % 5);
    std::map<std::string, std::size_t> sizes;
    for (const auto& r : records) ++sizes[r.subject_id];
    std::size_t biggest = 0;
    for (const auto& [id, n] : sizes) biggest = std::max(biggest, n);
    if (biggest * 2 > total) continue;

    const SplitSpec spec{{0.5, 0.15, 0.35}, true, static_cast<std::uint64_t>(trial)};
    const auto out = split(records, spec);
    ASSERT_TRUE(oracle::subject_disjoint(out));
    ASSERT_EQ(out, split(records, spec));
    const auto counts = oracle::split_counts(out, Source::other);
    for (std::size_t k = 0; k < 3; ++k) {
      const double actual = static_cast<double>(counts[k]) / static_cast<double>(total);
      ASSERT_LE(std::abs(actual - spec.fractions[k]), static_cast<double>(biggest) / static_cast<double>(total) + 1e-12)
          << "trial " << trial << " split " << k;
    }
  }
}

TEST(Split, EmptyInputIsAValidationError) {
  EXPECT_THROW(split({}, SplitSpec{}), ValidationError);
}

TEST(Split, DominantSubjectIsInfeasible) {
  auto records = grid_manifest(1, 60);
  const auto rest = grid_manifest(4, 10);
  for (auto r : rest) {
    r.subject_id = "other-" + r.subject_id;
    records.push_back(r);
  }
  try {
    split(records, SplitSpec{});
    FAIL() << "expected InfeasibleSplit";
  } catch (const InfeasibleSplit& e) {
    EXPECT_EQ(e.subject(), "s0");
  }
}

TEST(Split, RequiresSubjectIds) {
  auto records = grid_manifest(3, 3);
  records[4].subject_id.clear();
  EXPECT_THROW(split(records, SplitSpec{}), ValidationError);
}

TEST(Split, SpecValidation) {
  EXPECT_THROW(split(grid_manifest(3, 3), SplitSpec{{0.5, 0.5, 0.5}, true, 0}), ValidationError);
  EXPECT_THROW(split(grid_manifest(3, 3), SplitSpec{{0.5, 0.15, 0.35}, false, 0}), ValidationError);
}

// --- evaluate ---------------------------------------------------------------

TEST(Evaluate, AdienceTestSetArithmetic) {
  const EvalReport r = evaluate(predictions(8447, 9303));
  EXPECT_EQ(r.correct, 8447u);
  EXPECT_EQ(r.total, 9303u);
  EXPECT_EQ(format_accuracy(r.accuracy), "90.8");
}

TEST(Evaluate, LfwTestSetArithmetic) {
  EXPECT_EQ(format_accuracy(evaluate(predictions(4414, 4632, Source::lfw)).accuracy), "95.3");
}

TEST(Evaluate, NothingCorrect) {
  const EvalReport r = evaluate(predictions(0, 17));
  EXPECT_EQ(r.accuracy, 0.0);
  EXPECT_EQ(format_accuracy(r.accuracy), "0.0");
}

TEST(Evaluate, EmptyIsAValidationError) {
  EXPECT_THROW(evaluate(std::vector<Prediction>{}), ValidationError);
}

TEST(Evaluate, PerSourceBreakdownAndDecisionOverload) {
  auto preds = predictions(3, 4, Source::adience);
  const auto lfw = predictions(1, 2, Source::lfw);
  preds.insert(preds.end(), lfw.begin(), lfw.end());
  const EvalReport r = evaluate(preds);
  EXPECT_EQ(r.per_source.at(Source::adience).correct, 3u);
  EXPECT_EQ(r.per_source.at(Source::lfw).total, 2u);
  EXPECT_NEAR(r.accuracy, 100.0 * 4 / 6, 1e-12);

  std::vector<std::pair<ImageRecord, Decision>> pairs;
  for (const auto& p : preds) {
    Decision d;
    d.label = p.predicted;
    pairs.emplace_back(p.record, d);
  }
  EXPECT_EQ(evaluate(pairs).correct, r.correct);
  EXPECT_EQ(to_json(r)["per_source"]["LFW"]["accuracy_text"], "50.0");
}

TEST(Evaluate, AccuracyTimesTotalRoundsToCorrect) {
  std::mt19937 rng(4);
  for (int i = 0; i < 500; ++i) {
    const std::size_t total = 1 + rng() % 20000;
    const std::size_t correct = rng() % (total + 1);
    const EvalReport r = evaluate(predictions(correct, total));
    ASSERT_EQ(static_cast<std::size_t>(std::llround(r.accuracy / 100.0 * static_cast<double>(total))), correct);
  }
}

// --- prepare_lfw ------------------------------------------------------------

TEST(PrepareLfw, RescalesToReferenceAndRecordsProvenance) {
  MemoryStore store;
  store.files["lfw/a.png"] = Image(250, 250, 90);
  std::vector<ImageRecord> recs{{"lfw/a.png", "a", Gender::man, Source::lfw, std::nullopt, ""}};
  const PrepareReport r = prepare_lfw(recs, store, "out");
  EXPECT_EQ(r.rescaled, 1u);
  EXPECT_EQ(r.records[0].path, "out/a.png");
  EXPECT_NE(r.records[0].note.find("250x250->816x816"), std::string::npos);
  EXPECT_EQ(store.files.at("out/a.png").width, 816);
  EXPECT_EQ(store.files.at("out/a.png").height, 816);
}

TEST(PrepareLfw, ReferenceSizedInputIsUntouched) {
  MemoryStore store;
  store.files["b.png"] = Image(816, 816, 3);
  std::vector<ImageRecord> recs{{"b.png", "b", Gender::woman, Source::lfw, std::nullopt, ""}};
  const PrepareReport r = prepare_lfw(recs, store);
  EXPECT_EQ(r.pre_normalized, 1u);
  EXPECT_EQ(store.writes, 0u);
  EXPECT_EQ(r.records[0].path, "b.png");
  EXPECT_EQ(r.records[0].note, kPreNormalizedNote);
}

TEST(PrepareLfw, CorruptFileIsIsolated) {
  MemoryStore store;
  std::vector<ImageRecord> recs;
  for (int i = 0; i < 100; ++i) {
    const std::string p = "lfw/" + std::to_string(i) + ".png";
    store.files[p] = i == 37 ? Image() : Image(250, 250, static_cast<std::uint8_t>(i));
    recs.push_back({p, std::to_string(i), Gender::man, Source::lfw, std::nullopt, ""});
  }
  recs.push_back({"adience/x.png", "x", Gender::man, Source::adience, std::nullopt, ""});
  const PrepareReport r = prepare_lfw(recs, store, "out");
  EXPECT_EQ(r.rescaled, 99u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].path, "lfw/37.png");
  EXPECT_EQ(r.records.back().path, "adience/x.png");
  EXPECT_EQ(r.records[37].path, "lfw/37.png");
}

TEST(PrepareLfw, SecondPassChangesNothing) {
  MemoryStore store;
  std::vector<ImageRecord> recs;
  for (int i = 0; i < 5; ++i) {
    store.files["in/" + std::to_string(i) + ".png"] = Image(250, 250, 40);
    recs.push_back({"in/" + std::to_string(i) + ".png", "p", Gender::woman, Source::lfw, std::nullopt, ""});
  }
  const PrepareReport first = prepare_lfw(recs, store, "out");
  const std::size_t writes = store.writes;
  const PrepareReport second = prepare_lfw(first.records, store, "out");
  EXPECT_EQ(second.records, first.records);
  EXPECT_EQ(store.writes, writes);
  EXPECT_EQ(second.pre_normalized, 5u);
}
