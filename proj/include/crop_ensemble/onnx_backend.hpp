#pragma once

// Neural backend: executes an ONNX operator graph through OpenCV's dnn module.
// Including this header registers the backend for BackendKind::neural.

#include <memory>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "crop_ensemble/infer.hpp"

namespace crop_ensemble {

class OnnxClassifier final : public Classifier {
 public:
  explicit OnnxClassifier(ModelManifest manifest) : manifest_(std::move(manifest)) {
    try {
      net_ = cv::dnn::readNetFromONNX(manifest_.model_path.string());
    } catch (const cv::Exception& e) {
      throw LoadError("cannot load ONNX model " + manifest_.model_path.string() + ": " + e.what());
    }
    if (net_.empty()) throw LoadError("ONNX model " + manifest_.model_path.string() + " is empty");
    net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
  }

  GenderScore classify(const Image& crop) const override {
    auto tensor = to_input_tensor(crop, manifest_);
    const int shape[] = {1, 3, crop.height, crop.width};
    const cv::Mat blob(4, shape, CV_32F, tensor.data());
    cv::Mat out;
    try {
      net_.setInput(blob, manifest_.input_name);
      out = net_.forward();
    } catch (const cv::Exception& e) {
      throw Error(std::string("ONNX inference failed: ") + e.what());
    }
    const cv::Mat flat = out.reshape(1, 1);
    std::vector<double> raw;
    raw.reserve(flat.total());
    for (int i = 0; i < static_cast<int>(flat.total()); ++i) raw.push_back(flat.at<float>(0, i));
    return score_from_outputs(raw, manifest_);
  }

  // cv::dnn::Net keeps per-forward state; callers are serialized by the handle.
  bool concurrent() const noexcept override { return false; }
  std::string describe() const override { return "onnx:" + manifest_.model_path.filename().string(); }

 private:
  ModelManifest manifest_;
  mutable cv::dnn::Net net_;
};

inline const bool kOnnxBackendRegistered = register_backend(
    BackendKind::neural,
    [](const ModelManifest& m) { return std::make_shared<const OnnxClassifier>(m); });

}  // namespace crop_ensemble
