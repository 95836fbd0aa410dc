#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crop_ensemble/boxcrop.hpp"
#include "crop_ensemble/error.hpp"
#include "crop_ensemble/image.hpp"
#include "crop_ensemble/score.hpp"

namespace crop_ensemble {

enum class ChannelOrder { rgb, bgr };
enum class BackendKind { neural, mock };
enum class OutputKind { probabilities, logits };
enum class MockRule { mean_intensity_threshold, fixed_table };

struct Normalization {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> scale{1.0, 1.0, 1.0};
};

struct MockSpec {
  MockRule rule = MockRule::mean_intensity_threshold;
  double threshold = 128.0;
  std::map<std::string, GenderScore> table;  // crop digest -> score
};

// Binds a serialized network to its input and class-order contract. Inputs are
// converted as (pixel - mean[c]) * scale[c] in manifest channel order.
struct ModelManifest {
  std::filesystem::path model_path;
  int input_size = kCropSize;
  ChannelOrder channel_order = ChannelOrder::rgb;
  Normalization normalization;
  std::vector<Gender> class_order{Gender::man, Gender::woman};
  BackendKind backend_kind = BackendKind::mock;
  OutputKind output = OutputKind::probabilities;
  std::string input_name;  // empty: the graph's first input
  MockSpec mock;
};

namespace detail {

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline GenderScore score_from_json(const nlohmann::json& j) {
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  if (j.is_object()) return {j.at("p_man").get<double>(), j.at("p_woman").get<double>()};
  throw ValidationError("score must be [p_man, p_woman] or {p_man, p_woman}");
}

}  // namespace detail

// Collects every violated manifest invariant; empty when valid.
inline std::vector<std::string> manifest_problems(const ModelManifest& m) {
  std::vector<std::string> problems;
  if (m.input_size != kCropSize) problems.push_back("input_size must be 224");
  if (m.class_order.size() != 2 ||
      !std::is_permutation(m.class_order.begin(), m.class_order.end(), kCanonicalOrder.begin()))
    problems.push_back("class_order must be a permutation of [Man, Woman]");
  for (double s : m.normalization.scale)
    if (!std::isfinite(s) || s == 0.0) problems.push_back("normalization.scale must be finite and non-zero");
  if (m.backend_kind == BackendKind::neural && m.model_path.empty())
    problems.push_back("model_path is required for neural backends");
  if (m.backend_kind == BackendKind::mock) {
    if (m.mock.rule == MockRule::mean_intensity_threshold &&
        (m.mock.threshold < 0.0 || m.mock.threshold > 255.0))
      problems.push_back("mock.threshold must lie in [0, 255]");
    for (const auto& [key, s] : m.mock.table)
      if (!s.is_valid()) problems.push_back("mock.table entry " + key + " is not a valid score");
  }
  return problems;
}

inline void validate(const ModelManifest& m) {
  const auto problems = manifest_problems(m);
  if (!problems.empty()) throw ValidationError("invalid model manifest: " + detail::join(problems, "; "));
}

// Parses a manifest. Relative model paths resolve against `base_dir`. Every
// malformed or missing field is reported in one ValidationError.
inline ModelManifest manifest_from_json(const nlohmann::json& j,
                                        const std::filesystem::path& base_dir = {}) {
  ModelManifest m;
  std::vector<std::string> problems;
  auto field = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const nlohmann::json::exception& e) {
      problems.push_back(std::string(name) + ": " + e.what());
    } catch (const Error& e) {
      problems.push_back(std::string(name) + ": " + e.what());
    }
  };
  if (!j.is_object()) throw ValidationError("model manifest must be a JSON object");

  field("backend_kind", [&] {
    const auto kind = j.value("backend_kind", std::string("neural"));
    if (kind == "neural") m.backend_kind = BackendKind::neural;
    else if (kind == "mock") m.backend_kind = BackendKind::mock;
    else throw ValidationError("must be neural or mock");
  });
  field("model_path", [&] {
    if (j.contains("model_path")) {
      std::filesystem::path p = j.at("model_path").get<std::string>();
      m.model_path = (p.is_relative() && !base_dir.empty()) ? base_dir / p : p;
    }
  });
  field("input_size", [&] { m.input_size = j.at("input_size").get<int>(); });
  field("channel_order", [&] {
    const auto order = j.at("channel_order").get<std::string>();
    if (order == "RGB") m.channel_order = ChannelOrder::rgb;
    else if (order == "BGR") m.channel_order = ChannelOrder::bgr;
    else throw ValidationError("must be RGB or BGR");
  });
  field("normalization", [&] {
    if (!j.contains("normalization")) {
      if (m.backend_kind == BackendKind::neural) throw ValidationError("missing");
      return;
    }
    const auto& n = j.at("normalization");
    const auto mean = n.at("mean").get<std::vector<double>>();
    const auto scale = n.at("scale").get<std::vector<double>>();
    if (mean.size() != 3 || scale.size() != 3)
      throw ValidationError("mean and scale must have 3 entries");
    std::copy(mean.begin(), mean.end(), m.normalization.mean.begin());
    std::copy(scale.begin(), scale.end(), m.normalization.scale.begin());
  });
  field("class_order", [&] {
    m.class_order.clear();
    for (const auto& s : j.at("class_order").get<std::vector<std::string>>()) {
      const auto g = parse_gender(s);
      if (!g) throw ValidationError("unknown label '" + s + "'");
      m.class_order.push_back(*g);
    }
  });
  field("output", [&] {
    const auto out = j.value("output", std::string("probabilities"));
    if (out == "probabilities") m.output = OutputKind::probabilities;
    else if (out == "logits") m.output = OutputKind::logits;
    else throw ValidationError("must be probabilities or logits");
  });
  field("input_name", [&] { m.input_name = j.value("input_name", std::string()); });
  field("mock", [&] {
    if (!j.contains("mock")) return;
    const auto& mk = j.at("mock");
    const auto rule = mk.value("rule", std::string("mean_intensity_threshold"));
    if (rule == "mean_intensity_threshold") m.mock.rule = MockRule::mean_intensity_threshold;
    else if (rule == "fixed_table") m.mock.rule = MockRule::fixed_table;
    else throw ValidationError("unknown mock rule '" + rule + "'");
    m.mock.threshold = mk.value("threshold", 128.0);
    if (mk.contains("table"))
      for (const auto& [key, val] : mk.at("table").items()) m.mock.table[key] = detail::score_from_json(val);
  });

  if (problems.empty()) {
    problems = manifest_problems(m);
  } else {
    for (auto& p : manifest_problems(m))
      if (std::find(problems.begin(), problems.end(), p) == problems.end()) problems.push_back(p);
  }
  if (!problems.empty()) throw ValidationError("invalid model manifest: " + detail::join(problems, "; "));
  return m;
}

inline nlohmann::json to_json(const ModelManifest& m) {
  nlohmann::json j;
  j["model_path"] = m.model_path.string();
  j["input_size"] = m.input_size;
  j["channel_order"] = m.channel_order == ChannelOrder::rgb ? "RGB" : "BGR";
  j["normalization"] = {{"mean", m.normalization.mean}, {"scale", m.normalization.scale}};
  auto& order = j["class_order"] = nlohmann::json::array();
  for (Gender g : m.class_order) order.push_back(to_string(g));
  j["backend_kind"] = m.backend_kind == BackendKind::neural ? "neural" : "mock";
  j["output"] = m.output == OutputKind::logits ? "logits" : "probabilities";
  if (!m.input_name.empty()) j["input_name"] = m.input_name;
  if (m.backend_kind == BackendKind::mock) {
    auto& mk = j["mock"];
    mk["rule"] = m.mock.rule == MockRule::fixed_table ? "fixed_table" : "mean_intensity_threshold";
    mk["threshold"] = m.mock.threshold;
    if (!m.mock.table.empty()) {
      auto& t = mk["table"] = nlohmann::json::object();
      for (const auto& [key, s] : m.mock.table) t[key] = {s.p_man, s.p_woman};
    }
  }
  return j;
}

inline ModelManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open model manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError("model manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

// Maps a raw per-class output vector (in manifest class order) to a score,
// applying softmax when the graph ends in logits.
inline GenderScore score_from_outputs(std::span<const double> raw, const ModelManifest& m) {
  if (raw.size() != 2)
    throw InvalidInput("classifier produced " + std::to_string(raw.size()) + " outputs, expected 2");
  std::array<double, 2> p{raw[0], raw[1]};
  if (m.output == OutputKind::logits) {
    const double hi = std::max(p[0], p[1]);
    p[0] = std::exp(p[0] - hi);
    p[1] = std::exp(p[1] - hi);
  } else {
    p[0] = std::max(p[0], 0.0);
    p[1] = std::max(p[1], 0.0);
  }
  const double total = p[0] + p[1];
  if (!(total > 0.0) || !std::isfinite(total)) throw InvalidInput("classifier outputs are not normalizable");
  GenderScore s;
  for (std::size_t i = 0; i < 2; ++i) {
    if (m.class_order[i] == Gender::man) s.p_man = p[i] / total;
    else s.p_woman = p[i] / total;
  }
  return s;
}

// NCHW float tensor for one crop, channel order and normalization per manifest.
inline std::vector<float> to_input_tensor(const Image& crop, const ModelManifest& m) {
  const std::size_t plane = static_cast<std::size_t>(crop.width) * crop.height;
  std::vector<float> t(plane * 3);
  for (int c = 0; c < 3; ++c) {
    const int src_c = m.channel_order == ChannelOrder::rgb ? c : 2 - c;
    const double mean = m.normalization.mean[static_cast<std::size_t>(c)];
    const double scale = m.normalization.scale[static_cast<std::size_t>(c)];
    float* out = t.data() + plane * static_cast<std::size_t>(c);
    for (std::size_t i = 0; i < plane; ++i)
      out[i] = static_cast<float>((crop.pixels[i * 3 + static_cast<std::size_t>(src_c)] - mean) * scale);
  }
  return t;
}

class Classifier {
 public:
  virtual ~Classifier() = default;
  // `crop` is already validated as kCropSize square.
  virtual GenderScore classify(const Image& crop) const = 0;
  // True when classify may be called from several threads at once.
  virtual bool concurrent() const noexcept = 0;
  virtual std::string describe() const = 0;
};

// Deterministic stand-in for a trained network.
//   mean_intensity_threshold: p_man = mean pixel intensity / 255.
//   fixed_table: score looked up by crop digest; unknown digests are an error.
class MockClassifier final : public Classifier {
 public:
  explicit MockClassifier(ModelManifest manifest) : manifest_(std::move(manifest)) {}

  GenderScore classify(const Image& crop) const override {
    GenderScore s;
    if (manifest_.mock.rule == MockRule::fixed_table) {
      const auto key = digest(crop);
      const auto it = manifest_.mock.table.find(key);
      if (it == manifest_.mock.table.end())
        throw InvalidInput("mock table has no entry for crop digest " + key);
      s = it->second;
    } else {
      const double p = mean_intensity(crop) / 255.0;
      s = {p, 1.0 - p};
    }
    return s;
  }
  bool concurrent() const noexcept override { return true; }
  std::string describe() const override {
    return manifest_.mock.rule == MockRule::fixed_table ? "mock:table" : "mock:threshold";
  }

 private:
  ModelManifest manifest_;
};

using BackendFactory = std::function<std::shared_ptr<const Classifier>(const ModelManifest&)>;

inline std::map<BackendKind, BackendFactory>& backend_registry() {
  static std::map<BackendKind, BackendFactory> registry{
      {BackendKind::mock,
       [](const ModelManifest& m) { return std::make_shared<const MockClassifier>(m); }}};
  return registry;
}

inline bool register_backend(BackendKind kind, BackendFactory factory) {
  backend_registry()[kind] = std::move(factory);
  return true;
}

// Shared, copyable handle. Serial backends are guarded by an internal lock, so
// callers never coordinate among themselves.
class ClassifierHandle {
 public:
  ClassifierHandle() = default;
  ClassifierHandle(std::shared_ptr<const Classifier> impl, ModelManifest manifest)
      : impl_(std::move(impl)),
        manifest_(std::make_shared<const ModelManifest>(std::move(manifest))),
        lock_(std::make_shared<std::mutex>()) {}

  explicit operator bool() const noexcept { return impl_ != nullptr; }
  bool concurrent() const noexcept { return impl_ && impl_->concurrent(); }
  const ModelManifest& manifest() const { return *manifest_; }
  std::string describe() const { return impl_ ? impl_->describe() : "none"; }

  GenderScore classify(const Image& crop) const {
    if (!impl_) throw InvalidInput("classifier handle is empty");
    if (crop.width != kCropSize || crop.height != kCropSize ||
        crop.pixels.size() != static_cast<std::size_t>(kCropSize) * kCropSize * 3)
      throw InvalidInput("crop must be 224x224x3, got " + std::to_string(crop.width) + "x" +
                         std::to_string(crop.height));
    if (impl_->concurrent()) return validated(impl_->classify(crop));
    std::lock_guard guard(*lock_);
    return validated(impl_->classify(crop));
  }

 private:
  std::shared_ptr<const Classifier> impl_;
  std::shared_ptr<const ModelManifest> manifest_;
  std::shared_ptr<std::mutex> lock_;
};

inline ClassifierHandle load_backend(const ModelManifest& manifest) {
  validate(manifest);
  if (manifest.backend_kind == BackendKind::neural && !std::filesystem::exists(manifest.model_path))
    throw LoadError("model file " + manifest.model_path.string() + " does not exist");
  const auto& registry = backend_registry();
  const auto it = registry.find(manifest.backend_kind);
  if (it == registry.end())
    throw LoadError("neural backend not available in this build (include crop_ensemble/onnx_backend.hpp)");
  return ClassifierHandle(it->second(manifest), manifest);
}

inline GenderScore classify_crop(const ClassifierHandle& handle, const Image& crop) {
  return handle.classify(crop);
}

inline std::array<GenderScore, 3> classify_cropset(const ClassifierHandle& handle, const CropSet& crops) {
  return {handle.classify(crops.images[0]), handle.classify(crops.images[1]),
          handle.classify(crops.images[2])};
}

inline ModelManifest mock_manifest(double threshold = 128.0) {
  ModelManifest m;
  m.backend_kind = BackendKind::mock;
  m.mock.threshold = threshold;
  return m;
}

// Model selector used by the command line:
//   mock                     threshold rule, threshold 128
//   mock:threshold=T         threshold rule
//   mock:table=PATH          fixed-table rule, PATH holds {digest: [p_man, p_woman]}
//   anything else            path to a model manifest JSON file
inline ModelManifest manifest_from_selector(const std::string& selector) {
  if (selector == "mock") return mock_manifest();
  if (selector.rfind("mock:", 0) == 0) {
    const std::string arg = selector.substr(5);
    const auto eq = arg.find('=');
    if (eq == std::string::npos) throw ValidationError("bad mock selector '" + selector + "'");
    const std::string key = arg.substr(0, eq);
    const std::string value = arg.substr(eq + 1);
    ModelManifest m = mock_manifest();
    if (key == "threshold") {
      try {
        std::size_t used = 0;
        m.mock.threshold = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw ValidationError("mock threshold must be a number, got '" + value + "'");
      }
    } else if (key == "table") {
      std::ifstream in(value);
      if (!in) throw LoadError("cannot open mock table " + value);
      nlohmann::json t;
      try {
        in >> t;
      } catch (const nlohmann::json::parse_error& e) {
        throw LoadError("mock table " + value + " is not valid JSON: " + e.what());
      }
      m.mock.rule = MockRule::fixed_table;
      for (const auto& [digest_key, val] : t.items()) m.mock.table[digest_key] = detail::score_from_json(val);
    } else {
      throw ValidationError("unknown mock option '" + key + "'");
    }
    validate(m);
    return m;
  }
  return load_manifest(selector);
}

}  // namespace crop_ensemble
