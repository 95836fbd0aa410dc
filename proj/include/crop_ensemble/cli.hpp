#pragma once

// Command-line front end: prepare, crop, classify, video, bench, evaluate.
// Structured results go to stdout (or --out), diagnostics to stderr.
// Exit status: 0 success, 1 runtime failure, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crop_ensemble/crop_ensemble.hpp"
#include "crop_ensemble/onnx_backend.hpp"
#include "crop_ensemble/opencv_io.hpp"

namespace crop_ensemble::cli {

inline nlohmann::json box_json(const FaceBox& b) { return {b.a.x, b.a.y, b.b.x, b.b.y}; }

inline nlohmann::json score_json(const GenderScore& s) {
  return {{"p_man", s.p_man}, {"p_woman", s.p_woman}};
}

inline nlohmann::json decision_json(const Decision& d) {
  nlohmann::json j{{"label", to_string(d.label)}, {"aggregate", score_json(d.aggregate)},
                   {"mode", d.single ? "single" : to_string(d.mode)}, {"tie", d.tie}};
  if (!d.single) {
    j["per_crop"] = {{"left", score_json(d.per_crop[0])},
                     {"middle", score_json(d.per_crop[1])},
                     {"right", score_json(d.per_crop[2])}};
  }
  return j;
}

inline nlohmann::json triple_json(const BoxTriple& t) {
  return {{"left", box_json(t.left)}, {"middle", box_json(t.middle)}, {"right", box_json(t.right)},
          {"delta", t.delta}};
}

// Writes `j` to the --out file when given, else to `out`.
inline void emit(const nlohmann::json& j, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw IoError("cannot write " + out_path);
  f << j.dump(2) << '\n';
}

// Decision for a single face without the two-box ensemble: the expanded box
// squeezed to one crop.
inline Decision single_crop_for(const Frame& frame, const FaceBox& native_box, const ClassifierHandle& handle) {
  const ReferenceFrame ref = normalize_to_reference(frame, std::span<const FaceBox>(&native_box, 1));
  const FaceBox expanded = expand_margin(ref.boxes[0], ref.frame);
  return single_crop_decision(handle.classify(squeeze_region(ref.frame, expanded, "single")));
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Two-box three-crop face classification toolkit", "crop_ensemble"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "0.1.0");

  // prepare
  std::string manifest_path, out_path, lfw_dir;
  std::uint64_t seed = 0;
  bool skip_lfw = false;
  auto* prepare = app.add_subcommand("prepare", "Rescale LFW images and assign subject-disjoint splits");
  prepare->add_option("--manifest", manifest_path, "Input manifest (JSON lines)")->required()->check(CLI::ExistingFile);
  prepare->add_option("--out", out_path, "Output manifest path")->required();
  prepare->add_option("--seed", seed, "Split seed");
  prepare->add_option("--lfw-dir", lfw_dir, "Directory for rescaled LFW images (default: next to originals)");
  prepare->add_flag("--skip-lfw", skip_lfw, "Do not rescale LFW images");

  // shared options
  std::string image_path, model = "mock", mode_name = "soft", detections_path, detector, video_path, fps_report;
  std::vector<std::string> box_args;
  bool no_expand = false, single = false;
  int offset = kDefaultOffset;
  std::size_t parallel = 1;

  auto* crop = app.add_subcommand("crop", "Show the two boxes and three crops for a face box");
  crop->add_option("--image", image_path, "Input image")->required()->check(CLI::ExistingFile);
  crop->add_option("--box", box_args, "Face box x_a,y_a,x_b,y_b (native pixels)")->required();
  crop->add_flag("--no-expand", no_expand, "Treat --box as an already expanded box");
  crop->add_option("--offset", offset, "Nominal two-box offset at 816x816")->check(CLI::NonNegativeNumber);
  crop->add_option("--out", out_path, "Directory for left/middle/right crop images");

  auto* classify = app.add_subcommand("classify", "Classify the faces of one image end to end");
  classify->add_option("--image", image_path, "Input image")->required()->check(CLI::ExistingFile);
  classify->add_option("--box", box_args, "Face box x_a,y_a,x_b,y_b; repeatable")->required();
  classify->add_option("--model", model, "mock, mock:threshold=T, mock:table=FILE, or a model manifest");
  classify->add_option("--mode", mode_name, "Aggregation mode")->check(CLI::IsMember({"soft", "hard"}));
  classify->add_flag("--single-crop", single, "Ablation: classify the expanded box as one crop");
  classify->add_option("--parallel", parallel, "Workers for crop classification")->check(CLI::PositiveNumber);
  classify->add_option("--out", out_path, "Write the annotated image here");

  auto* video = app.add_subcommand("video", "Process a video or frame directory and annotate it");
  video->add_option("--video", video_path, "Video file or directory of frames")->required();
  auto* det_opt = video->add_option("--detections", detections_path, "Sidecar detections file");
  video->add_option("--detector", detector, "Detector plugin id[:args]")->excludes(det_opt);
  video->add_option("--model", model, "Model selector");
  video->add_option("--mode", mode_name, "Aggregation mode")->check(CLI::IsMember({"soft", "hard"}));
  video->add_option("--parallel", parallel, "Workers for crop classification")->check(CLI::PositiveNumber);
  video->add_option("--out", out_path, "Directory for annotated frames");
  video->add_option("--fps-report", fps_report, "Write the throughput report JSON here");

  BenchConfig bench_cfg;
  auto* bench_cmd = app.add_subcommand("bench", "Throughput benchmark on synthetic frames");
  bench_cmd->add_option("--frames", bench_cfg.frames, "Number of frames");
  bench_cmd->add_option("--width", bench_cfg.width, "Frame width");
  bench_cmd->add_option("--height", bench_cfg.height, "Frame height");
  bench_cmd->add_option("--faces", bench_cfg.faces_per_frame, "Faces per frame");
  bench_cmd->add_option("--parallel", parallel, "Workers for crop classification")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--model", model, "Model selector");
  bench_cmd->add_option("--mode", mode_name, "Aggregation mode")->check(CLI::IsMember({"soft", "hard"}));
  bench_cmd->add_option("--seed", seed, "Synthetic frame seed");
  bench_cmd->add_option("--fps-report,--out", fps_report, "Write the throughput report JSON here");

  std::string predictions_path;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Accuracy of predictions against a manifest");
  evaluate_cmd->add_option("--manifest", manifest_path, "Ground-truth manifest")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--predictions", predictions_path, "Predictions JSON: [{path, label}, ...]")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--out", out_path, "Write the report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const VoteMode mode = parse_vote_mode(mode_name);

    if (*prepare) {
      Manifest manifest = load_manifest_file(manifest_path);
      nlohmann::json summary;
      std::vector<ImageRecord> records = std::move(manifest.records);
      if (!skip_lfw) {
        FileImageStore store;
        PrepareReport prep = prepare_lfw(std::move(records), store, lfw_dir);
        records = std::move(prep.records);
        summary["lfw"] = {{"rescaled", prep.rescaled}, {"pre_normalized", prep.pre_normalized}};
        auto& errs = summary["lfw"]["errors"] = nlohmann::json::array();
        for (const auto& e : prep.errors) {
          errs.push_back({{"path", e.path}, {"message", e.message}});
          err << "prepare: " << e.path << ": " << e.message << '\n';
        }
      }
      SplitSpec spec;
      spec.seed = seed;
      records = split(std::move(records), spec);
      save_manifest_file(out_path, records);
      std::map<std::string, std::map<std::string, std::size_t>> counts;
      for (const auto& r : records) ++counts[to_string(r.source)][to_string(*r.split)];
      summary["counts"] = counts;
      summary["excluded"] = manifest.excluded;
      summary["manifest"] = out_path;
      out << summary.dump(2) << '\n';
      return 0;
    }

    if (*crop) {
      const Frame frame = read_image(image_path);
      const auto boxes = parse_boxes(box_args.front());
      if (boxes.size() != 1 || box_args.size() != 1) throw InvalidInput("crop takes exactly one --box");
      const ReferenceFrame ref = normalize_to_reference(frame, boxes);
      const FaceBox expanded = no_expand ? ref.boxes[0] : expand_margin(ref.boxes[0], ref.frame);
      const BoxTriple triple = make_box_triple(expanded, offset);
      nlohmann::json j{{"reference_size", kReferenceSize},
                       {"input_box", box_json(boxes[0])},
                       {"expanded", box_json(expanded)}};
      j.update(triple_json(triple));
      if (!out_path.empty()) {
        const CropSet crops = extract_and_squeeze(ref.frame, triple);
        const std::filesystem::path dir(out_path);
        const char* names[] = {"left.png", "middle.png", "right.png"};
        for (std::size_t k = 0; k < 3; ++k) write_image(dir / names[k], crops.images[k]);
        Frame vis = ref.frame;
        draw_outline(vis, triple.left, kManColor);
        draw_outline(vis, triple.right, kWomanColor);
        draw_outline(vis, triple.middle, Rgb{0, 255, 0});
        write_image(dir / "boxes.png", vis);
        j["crops"] = {(dir / names[0]).string(), (dir / names[1]).string(), (dir / names[2]).string()};
      }
      out << j.dump(2) << '\n';
      return 0;
    }

    if (*classify) {
      Frame frame = read_image(image_path);
      std::vector<FaceBox> boxes;
      for (const auto& arg : box_args)
        for (const auto& b : parse_boxes(arg)) boxes.push_back(b);
      const ClassifierHandle handle = load_backend(manifest_from_selector(model));
      nlohmann::json faces = nlohmann::json::array();
      if (single) {
        for (const auto& b : boxes) {
          const Decision d = single_crop_for(frame, b, handle);
          faces.push_back({{"box", box_json(b)}, {"decision", decision_json(d)}});
          annotate_face(frame, b, d.label);
        }
      } else {
        ThreadPool pool(parallel);
        const FrameResult result = process_frame(frame, boxes, handle, {mode, kDefaultOffset, &pool});
        for (const auto& f : result.faces) {
          nlohmann::json fj{{"box", box_json(f.box)}};
          if (f.expanded) fj["expanded"] = box_json(*f.expanded);
          if (f.triple) fj["crops"] = triple_json(*f.triple);
          if (f.decision) fj["decision"] = decision_json(*f.decision);
          else fj["skipped"] = f.skipped_reason;
          faces.push_back(std::move(fj));
        }
        annotate(frame, result);
      }
      if (!out_path.empty()) write_image(out_path, frame);
      out << nlohmann::json{{"model", handle.describe()}, {"faces", faces}}.dump(2) << '\n';
      return 0;
    }

    if (*video) {
      if (detections_path.empty() && detector.empty())
        throw InvalidInput("video needs --detections or --detector");
      auto source = open_frame_source(video_path);
      auto provider = make_detection_provider(
          detections_path.empty() ? DetectionProviderSpec{ProviderKind::plugin, detector}
                                  : DetectionProviderSpec{ProviderKind::sidecar_file, detections_path});
      const ClassifierHandle handle = load_backend(manifest_from_selector(model));
      std::unique_ptr<AnnotationSink> sink;
      if (out_path.empty()) sink = std::make_unique<NullSink>();
      else sink = std::make_unique<ImageSequenceSink>(out_path);
      RunOptions opts;
      opts.mode = mode;
      opts.parallelism = parallel;
      nlohmann::json labels = nlohmann::json::array();
      opts.on_result = [&labels](const FrameResult& r) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& f : r.faces) row.push_back(f.decision ? to_string(f.decision->label) : "skipped");
        labels.push_back(std::move(row));
      };
      const ThroughputReport report = run_video(*source, *provider, handle, *sink, opts);
      const nlohmann::json rj = to_json(report);
      if (!fps_report.empty()) emit(rj, fps_report, out);
      out << nlohmann::json{{"report", rj}, {"labels", labels}}.dump(2) << '\n';
      if (!report.complete) {
        err << "video: run stopped early: " << report.error << '\n';
        return 1;
      }
      return 0;
    }

    if (*bench_cmd) {
      bench_cfg.parallelism = parallel;
      bench_cfg.mode = mode;
      bench_cfg.seed = seed;
      const ClassifierHandle handle = load_backend(manifest_from_selector(model));
      const ThroughputReport report = bench(bench_cfg, handle);
      emit(to_json(report), fps_report, out);
      return 0;
    }

    if (*evaluate_cmd) {
      const Manifest manifest = load_manifest_file(manifest_path);
      std::map<std::string, const ImageRecord*> by_path;
      for (const auto& r : manifest.records) by_path[r.path] = &r;
      std::ifstream in(predictions_path);
      nlohmann::json preds;
      try {
        in >> preds;
      } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("predictions file is not valid JSON: " + std::string(e.what()));
      }
      if (!preds.is_array()) throw ValidationError("predictions must be a JSON array");
      std::vector<Prediction> flat;
      for (const auto& p : preds) {
        const auto path = p.at("path").get<std::string>();
        const auto it = by_path.find(path);
        if (it == by_path.end()) throw ValidationError("prediction for unknown path " + path);
        const auto label = parse_gender(p.at("label").get<std::string>());
        if (!label) throw ValidationError("prediction for " + path + " has an unknown label");
        flat.push_back({*it->second, *label});
      }
      nlohmann::json j = to_json(evaluate(flat));
      j["unpredicted"] = manifest.records.size() - flat.size();
      emit(j, out_path, out);
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace crop_ensemble::cli
