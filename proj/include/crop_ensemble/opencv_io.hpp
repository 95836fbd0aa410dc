#pragma once

// File and video IO through OpenCV (imgcodecs, videoio).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "crop_ensemble/datakit.hpp"
#include "crop_ensemble/error.hpp"
#include "crop_ensemble/image.hpp"
#include "crop_ensemble/pipeline.hpp"

namespace crop_ensemble {

inline Image from_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  if (bgr.channels() == 1) cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  else if (bgr.channels() == 4) cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
  else cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (rgb.depth() != CV_8U) rgb.convertTo(rgb, CV_8U);
  Image img(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y)
    std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3, img.at(0, y));
  return img;
}

inline cv::Mat to_mat(const Image& img) {
  validate(img);
  cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

inline Image read_image(const std::filesystem::path& path) {
  cv::Mat m;
  try {
    m = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw IoError("cannot read image " + path.string() + ": " + e.what());
  }
  if (m.empty()) throw IoError("cannot read image " + path.string());
  return from_mat(m);
}

inline void write_image(const std::filesystem::path& path, const Image& img) {
  bool ok = false;
  try {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    ok = cv::imwrite(path.string(), to_mat(img));
  } catch (const cv::Exception& e) {
    throw IoError("cannot write image " + path.string() + ": " + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write image " + path.string());
}

class FileImageStore final : public ImageStore {
 public:
  Image read(const std::string& path) override { return read_image(path); }
  void write(const std::string& path, const Image& img) override { write_image(path, img); }
};

inline bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm" ||
         ext == ".pgm" || ext == ".tif" || ext == ".tiff";
}

// Image files of a directory in lexicographic order.
class DirectoryFrameSource final : public FrameSource {
 public:
  explicit DirectoryFrameSource(const std::filesystem::path& dir) {
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
      if (entry.is_regular_file() && is_image_file(entry.path())) files_.push_back(entry.path());
    if (ec) throw IoError("cannot list frame directory " + dir.string() + ": " + ec.message());
    if (files_.empty()) throw IoError("frame directory " + dir.string() + " holds no images");
    std::sort(files_.begin(), files_.end());
  }

  std::optional<Frame> next() override {
    if (pos_ >= files_.size()) return std::nullopt;
    return read_image(files_[pos_++]);
  }

 private:
  std::vector<std::filesystem::path> files_;
  std::size_t pos_ = 0;
};

class VideoFileFrameSource final : public FrameSource {
 public:
  explicit VideoFileFrameSource(const std::filesystem::path& path) : capture_(path.string()) {
    if (!capture_.isOpened()) throw IoError("cannot open video " + path.string());
  }

  std::optional<Frame> next() override {
    cv::Mat m;
    if (!capture_.read(m) || m.empty()) return std::nullopt;
    return from_mat(m);
  }

 private:
  cv::VideoCapture capture_;
};

inline std::unique_ptr<FrameSource> open_frame_source(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return std::make_unique<DirectoryFrameSource>(path);
  if (!std::filesystem::exists(path)) throw IoError("frame source " + path.string() + " does not exist");
  return std::make_unique<VideoFileFrameSource>(path);
}

// Numbered frames frame_000000.png, frame_000001.png, ... in `dir`.
class ImageSequenceSink final : public AnnotationSink {
 public:
  explicit ImageSequenceSink(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(std::size_t frame_index, const Frame& annotated) override {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06zu.png", frame_index);
    write_image(dir_ / name, annotated);
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace crop_ensemble
