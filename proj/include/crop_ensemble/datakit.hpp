#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crop_ensemble/boxcrop.hpp"
#include "crop_ensemble/ensemble.hpp"
#include "crop_ensemble/error.hpp"
#include "crop_ensemble/image.hpp"
#include "crop_ensemble/score.hpp"

namespace crop_ensemble {

enum class Source { adience, lfw, other };
enum class Split { train = 0, val = 1, test = 2 };

inline constexpr std::array<Split, 3> kSplits{Split::train, Split::val, Split::test};

inline const char* to_string(Source s) {
  switch (s) {
    case Source::adience: return "Adience";
    case Source::lfw: return "LFW";
    case Source::other: return "Other";
  }
  return "Other";
}

inline Source parse_source(std::string_view s) {
  if (s == "Adience" || s == "adience") return Source::adience;
  if (s == "LFW" || s == "lfw") return Source::lfw;
  return Source::other;
}

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val" || s == "validation") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

struct ImageRecord {
  std::string path;
  std::string subject_id;
  Gender label = Gender::man;
  Source source = Source::other;
  std::optional<Split> split;
  std::string note;  // provenance, e.g. from prepare_lfw

  bool operator==(const ImageRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Manifest: one JSON object per line with path, subject_id, label, source,
// split and optional note.

struct Manifest {
  std::vector<ImageRecord> records;
  std::size_t excluded = 0;  // unlabeled or ambiguous lines
};

inline nlohmann::json to_json(const ImageRecord& r) {
  nlohmann::json j{{"path", r.path}, {"subject_id", r.subject_id}, {"label", to_string(r.label)},
                   {"source", to_string(r.source)}};
  j["split"] = r.split ? nlohmann::json(to_string(*r.split)) : nlohmann::json(nullptr);
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline Manifest read_manifest(std::istream& in) {
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto label = parse_gender(j.value("label", std::string()));
    const auto path = j.value("path", std::string());
    if (!label || path.empty()) {
      ++m.excluded;
      continue;
    }
    ImageRecord r;
    r.path = path;
    r.label = *label;
    r.subject_id = j.contains("subject_id") && !j["subject_id"].is_null()
                       ? (j["subject_id"].is_string() ? j["subject_id"].get<std::string>()
                                                      : j["subject_id"].dump())
                       : std::string();
    r.source = parse_source(j.value("source", std::string("Other")));
    if (j.contains("split") && j["split"].is_string()) {
      r.split = parse_split(j["split"].get<std::string>());
      if (!r.split)
        throw ValidationError("manifest line " + std::to_string(line_no) + ": unknown split '" +
                              j["split"].get<std::string>() + "'");
    }
    r.note = j.value("note", std::string());
    m.records.push_back(std::move(r));
  }
  return m;
}

inline Manifest load_manifest_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return read_manifest(in);
}

inline void write_manifest(std::ostream& out, std::span<const ImageRecord> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline void save_manifest_file(const std::filesystem::path& path, std::span<const ImageRecord> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  write_manifest(out, records);
  if (!out) throw IoError("write failed for manifest " + path.string());
}

// ---------------------------------------------------------------------------
// Subject-disjoint split

struct SplitSpec {
  std::array<double, 3> fractions{0.50, 0.15, 0.35};  // train, val, test
  bool subject_disjoint = true;
  std::uint64_t seed = 0;
};

inline void validate(const SplitSpec& s) {
  double total = 0.0;
  for (double f : s.fractions) {
    if (f < 0.0) throw ValidationError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  if (!s.subject_disjoint) throw ValidationError("subject_disjoint must be true");
}

// Per-split image targets for `total` images: floors of the exact shares, with
// the leftover images given to the largest fractional remainders.
inline std::array<std::size_t, 3> split_targets(std::size_t total, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> target{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(total) * fractions[k];
    target[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[k] = exact - static_cast<double>(target[k]);
    assigned += target[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % 3, ++assigned) ++target[order[i]];
  return target;
}

// Assigns whole subjects to train/val/test, separately per source. Subjects go
// in descending image-count order (equal counts in seeded random order) to the
// most-underfilled split that still has room for them, else to the
// most-underfilled split overall.
inline std::vector<ImageRecord> split(std::vector<ImageRecord> records, const SplitSpec& spec) {
  validate(spec);
  if (records.empty()) throw ValidationError("cannot split an empty record list");

  std::map<Source, std::map<std::string, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].subject_id.empty())
      throw ValidationError("record " + records[i].path + " has no subject_id");
    groups[records[i].source][records[i].subject_id].push_back(i);
  }

  std::mt19937_64 rng(spec.seed);
  for (auto& [source, subjects] : groups) {
    std::size_t total = 0;
    for (const auto& [id, idx] : subjects) total += idx.size();
    for (const auto& [id, idx] : subjects)
      if (idx.size() * 2 > total)
        throw InfeasibleSplit(id, "subject " + id + " owns " + std::to_string(idx.size()) + " of " +
                                      std::to_string(total) + " " + to_string(source) +
                                      " images; no subject-disjoint split is possible");

    std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> order;
    order.reserve(subjects.size());
    for (const auto& entry : subjects) order.push_back(&entry);
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(),
                     [](auto* a, auto* b) { return a->second.size() > b->second.size(); });

    const auto target = split_targets(total, spec.fractions);
    std::array<long long, 3> deficit{};
    for (std::size_t k = 0; k < 3; ++k) deficit[k] = static_cast<long long>(target[k]);

    for (const auto* subject : order) {
      const auto size = static_cast<long long>(subject->second.size());
      std::optional<std::size_t> best;
      for (std::size_t k = 0; k < 3; ++k)
        if (deficit[k] >= size && (!best || deficit[k] > deficit[*best])) best = k;
      if (!best) {
        best = 0;
        for (std::size_t k = 1; k < 3; ++k)
          if (deficit[k] > deficit[*best]) best = k;
      }
      deficit[*best] -= size;
      for (std::size_t i : subject->second) records[i].split = kSplits[*best];
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Tally {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const noexcept {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  }
};

struct EvalReport {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;  // percent
  std::map<Source, Tally> per_source;
};

// Percentage with one decimal, e.g. "90.8".
inline std::string format_accuracy(double percent) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << percent;
  return os.str();
}

struct Prediction {
  ImageRecord record;
  Gender predicted = Gender::man;
};

inline EvalReport evaluate(std::span<const Prediction> predictions) {
  if (predictions.empty()) throw ValidationError("no predictions to evaluate");
  EvalReport r;
  for (const auto& p : predictions) {
    const bool hit = p.predicted == p.record.label;
    auto& t = r.per_source[p.record.source];
    ++t.total;
    ++r.total;
    if (hit) {
      ++t.correct;
      ++r.correct;
    }
  }
  r.accuracy = 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

inline EvalReport evaluate(std::span<const std::pair<ImageRecord, Decision>> predictions) {
  std::vector<Prediction> flat;
  flat.reserve(predictions.size());
  for (const auto& [record, decision] : predictions) flat.push_back({record, decision.label});
  return evaluate(flat);
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j{{"correct", r.correct},
                   {"total", r.total},
                   {"accuracy", r.accuracy},
                   {"accuracy_text", format_accuracy(r.accuracy)}};
  auto& per = j["per_source"] = nlohmann::json::object();
  for (const auto& [source, t] : r.per_source)
    per[to_string(source)] = {{"correct", t.correct},
                              {"total", t.total},
                              {"accuracy", t.accuracy()},
                              {"accuracy_text", format_accuracy(t.accuracy())}};
  return j;
}

// ---------------------------------------------------------------------------
// LFW preparation

// Image file access used by prepare_lfw; read throws IoError for unreadable files.
class ImageStore {
 public:
  virtual ~ImageStore() = default;
  virtual Image read(const std::string& path) = 0;
  virtual void write(const std::string& path, const Image& img) = 0;
};

struct RecordError {
  std::string path;
  std::string message;
};

struct PrepareReport {
  std::vector<ImageRecord> records;
  std::size_t rescaled = 0;
  std::size_t pre_normalized = 0;
  std::vector<RecordError> errors;
};

inline constexpr const char* kPreNormalizedNote = "pre-normalized 816x816";

// Output location of a rescaled image: `out_dir`/<name> when given, else
// <stem>_816<ext> next to the input.
inline std::string rescaled_path(const std::string& path, const std::filesystem::path& out_dir) {
  const std::filesystem::path p(path);
  if (!out_dir.empty()) return (out_dir / p.filename()).string();
  return (p.parent_path() / (p.stem().string() + "_816" + p.extension().string())).string();
}

// Rescales every LFW image to the reference resolution and points the record
// at the rewritten file, with a provenance note. Images already at the
// reference size are left untouched. Unreadable images are reported per record
// and the pass continues. Running it on its own output changes nothing.
inline PrepareReport prepare_lfw(std::vector<ImageRecord> records, ImageStore& store,
                                 const std::filesystem::path& out_dir = {}) {
  PrepareReport report;
  for (auto& r : records) {
    if (r.source != Source::lfw) continue;
    try {
      const Image img = store.read(r.path);
      validate(img);
      if (img.width == kReferenceSize && img.height == kReferenceSize) {
        ++report.pre_normalized;
        if (r.note.empty()) r.note = kPreNormalizedNote;
        continue;
      }
      const Image scaled = resize_bilinear(img, kReferenceSize, kReferenceSize);
      const std::string out = rescaled_path(r.path, out_dir);
      store.write(out, scaled);
      r.note = "rescaled " + std::to_string(img.width) + "x" + std::to_string(img.height) +
               "->816x816 bilinear from " + r.path;
      r.path = out;
      ++report.rescaled;
    } catch (const Error& e) {
      report.errors.push_back({r.path, e.what()});
    }
  }
  report.records = std::move(records);
  return report;
}

}  // namespace crop_ensemble
