#include "pvst/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "json.hpp"
#include "pvst/error.hpp"
#include "pvst/simd/kernels.hpp"

namespace pvst {

namespace fs = std::filesystem;
using nlohmann::json;

std::string frame_name(const char* pattern, int a, int b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

std::vector<int> required_gaps(const JobConfig& cfg) {
  std::set<int> gaps(cfg.long_term.begin(), cfg.long_term.end());
  gaps.insert(1);
  return {gaps.begin(), gaps.end()};
}

namespace {

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw Error(ErrorKind::kConfig, std::string(what) + " is required");
  if (!fs::exists(p)) throw Error(ErrorKind::kMissingFile, std::string(what) + " not found", p.string());
}

std::set<std::string> layer_set(const std::map<std::string, double>& m) {
  std::set<std::string> out;
  for (const auto& [l, w] : m) out.insert(l);
  return out;
}

std::map<std::string, MaskStack> masks_per_layer(const MaskStack& full,
                                                 const std::set<std::string>& layers) {
  std::map<std::string, MaskStack> out;
  for (const auto& l : layers) {
    const auto [h, w] = layer_extent(l, full.height, full.width);
    out.emplace(l, downsample_masks(full, h, w));
  }
  return out;
}

}  // namespace

SequenceInputs load_sequence_inputs(const JobConfig& cfg) {
  cfg.validate();
  SequenceInputs in;
  require_file(cfg.content_dir, "content_dir");
  require_file(cfg.style, "style");
  in.style = load_image(cfg.style);

  const fs::path dir(cfg.content_dir);
  for (int n = cfg.first_frame; cfg.last_frame < 0 || n <= cfg.last_frame; ++n) {
    const fs::path p = dir / frame_name("frame_%05d.png", n);
    if (cfg.last_frame < 0 && !fs::exists(p)) {
      if (n == cfg.first_frame) throw Error(ErrorKind::kMissingFile, "no content frames", p.string());
      break;
    }
    Image f = load_image(p);
    if (!in.frames.empty() && !f.same_shape(in.frames.front())) {
      throw Error(ErrorKind::kShapeMismatch, "frame size differs from the first frame", p.string());
    }
    in.frames.push_back(std::move(f));
    in.frame_numbers.push_back(n);
  }

  const bool segmented = !cfg.seg_dir.empty() || !cfg.style_seg.empty();
  if (segmented) {
    require_file(cfg.style_seg, "style_seg");
    require_file(cfg.seg_dir, "seg_dir");
    in.style_labels = load_label_map(cfg.style_seg);
    if (in.style_labels->height != in.style.height() || in.style_labels->width != in.style.width()) {
      throw Error(ErrorKind::kShapeMismatch, "style label map size differs from style image",
                  cfg.style_seg);
    }
    for (std::size_t i = 0; i < in.frames.size(); ++i) {
      const fs::path p = fs::path(cfg.seg_dir) / frame_name("frame_%05d_seg.png", in.frame_numbers[i]);
      LabelMap m = load_label_map(p);
      if (m.height != in.frames[i].height() || m.width != in.frames[i].width()) {
        throw Error(ErrorKind::kShapeMismatch, "label map size differs from frame", p.string());
      }
      in.frame_labels.push_back(std::move(m));
    }
    if (!cfg.vocab.empty()) {
      require_file(cfg.vocab, "vocab");
      in.vocab = load_vocabulary(cfg.vocab);
    }
  }

  if (in.frames.size() > 1) {
    require_file(cfg.flow_dir, "flow_dir");
    const fs::path fdir(cfg.flow_dir);
    const auto gaps = required_gaps(cfg);
    for (int i = 1; i < static_cast<int>(in.frames.size()); ++i) {
      for (int j : gaps) {
        if (i - j < 0) continue;
        const int a = in.frame_numbers[i];
        const int b = in.frame_numbers[i - j];
        const fs::path bwd = fdir / frame_name("backward_%05d_%05d.flo", a, b);
        const fs::path fwd = fdir / frame_name("forward_%05d_%05d.flo", b, a);
        require_file(bwd, "backward flow");
        require_file(fwd, "forward flow");
        TemporalLink link{read_flo(bwd), {}};
        const FlowField forward = read_flo(fwd);
        if (link.backward.height != in.frames[i].height() ||
            link.backward.width != in.frames[i].width()) {
          throw Error(ErrorKind::kShapeMismatch, "flow size differs from frame", bwd.string());
        }
        link.weights = consistency_weights(forward, link.backward, cfg.consistency);
        in.links.emplace(std::make_pair(i, j), std::move(link));
      }
    }
  }
  return in;
}

NetworkWeights load_network(const JobConfig& cfg) {
  if (cfg.weights.empty()) return seeded_weights(cfg.seed);
  require_file(cfg.weights, "weights");
  return load_weights(cfg.weights);
}

StyleContext prepare_style(const JobConfig& cfg, const NetworkWeights& net,
                           const SequenceInputs& inputs) {
  StyleContext sc;
  sc.net = &net;
  sc.weights = cfg.loss_weights();
  sc.segmented = inputs.style_labels.has_value();
  const std::set<std::string> style_layers = layer_set(sc.weights.style);

  MaskStack style_masks;
  if (sc.segmented) {
    if (inputs.vocab) {
      sc.vocab = *inputs.vocab;
    } else {
      std::set<int> ids(inputs.style_labels->labels.begin(), inputs.style_labels->labels.end());
      for (const LabelMap& m : inputs.frame_labels) ids.insert(m.labels.begin(), m.labels.end());
      for (int id : ids) {
        sc.vocab.ids.push_back(id);
        sc.vocab.names.push_back(std::to_string(id));
      }
    }
    style_masks = masks_from_labels(*inputs.style_labels, sc.vocab);
  } else {
    style_masks = uniform_mask(inputs.style.height(), inputs.style.width());
    sc.vocab = style_masks.vocab;
  }

  const ActivationSet acts = forward(net, inputs.style, style_layers);
  sc.targets = style_targets(acts, masks_per_layer(style_masks, style_layers));
  return sc;
}

std::shared_ptr<const SparseSymmetric> LaplacianCache::get(const Image& frame,
                                                           MattingParams params) const {
  if (dir_.empty()) return std::make_shared<SparseSymmetric>(build_matting_laplacian(frame, params));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const int dims[2] = {frame.height(), frame.width()};
  mix(dims, sizeof dims);
  mix(frame.values().data(), frame.values().size_bytes());
  char name[96];
  std::snprintf(name, sizeof name, "lap_%016llx_%s_r%d.bin", static_cast<unsigned long long>(h),
                format_double(params.eps).c_str(), params.radius);
  const fs::path path = dir_ / name;
  if (fs::exists(path)) {
    auto cached = std::make_shared<SparseSymmetric>(load_laplacian(path));
    if (cached->dimension() == static_cast<std::size_t>(frame.pixels())) return cached;
  }
  auto built = std::make_shared<SparseSymmetric>(build_matting_laplacian(frame, params));
  fs::create_directories(dir_);
  save_laplacian(*built, path);
  return built;
}

FrameContext build_frame_context(int index, const SequenceInputs& inputs, const StyleContext& style,
                                 const JobConfig& cfg, const std::vector<Image>& outputs,
                                 const LaplacianCache& cache) {
  if (index < 0 || index >= static_cast<int>(inputs.frames.size())) {
    throw Error(ErrorKind::kInvalidArgument, "frame index out of range");
  }
  if (static_cast<int>(outputs.size()) < index) {
    throw Error(ErrorKind::kInvalidArgument, "earlier frames have not been stylized");
  }
  FrameContext ctx;
  ctx.index = index;
  ctx.content = inputs.frames[index];
  ctx.content_acts = forward(*style.net, ctx.content, layer_set(style.weights.content));
  if (style.weights.lambda != 0.0) ctx.laplacian = cache.get(ctx.content, cfg.matting);

  const MaskStack full = style.segmented
                             ? masks_from_labels(inputs.frame_labels.at(index), style.vocab)
                             : uniform_mask(ctx.content.height(), ctx.content.width());
  ctx.masks = masks_per_layer(full, layer_set(style.weights.style));

  std::vector<int> gaps;
  std::vector<Image> warped;
  std::vector<PixelWeights> weights;
  for (int j : style.weights.long_term) {
    if (index - j < 0) continue;
    auto it = inputs.links.find({index, j});
    if (it == inputs.links.end()) {
      throw Error(ErrorKind::kMissingFile,
                  "no flow for frame " + std::to_string(index) + " gap " + std::to_string(j));
    }
    WarpResult w = backward_warp(outputs[index - j], it->second.backward);
    PixelWeights c = it->second.weights;
    for (std::size_t p = 0; p < c.w.size(); ++p) c.w[p] *= w.valid.w[p];
    gaps.push_back(j);
    warped.push_back(std::move(w.warped));
    weights.push_back(std::move(c));
  }
  std::vector<PixelWeights> longterm = long_term_weights(weights);
  for (std::size_t k = 0; k < gaps.size(); ++k) {
    ctx.temporal.push_back({gaps[k], std::move(warped[k]), std::move(longterm[k])});
  }
  return ctx;
}

Image initial_guess(int index, const SequenceInputs& inputs, const std::vector<Image>& outputs) {
  const Image& content = inputs.frames.at(index);
  if (index == 0) return content;
  auto it = inputs.links.find({index, 1});
  if (it == inputs.links.end()) {
    throw Error(ErrorKind::kMissingFile, "no flow to the previous frame for " + std::to_string(index));
  }
  const WarpResult w = backward_warp(outputs.at(index - 1), it->second.backward);
  PixelGrid init(content.height(), content.width(), 3);
  for (int y = 0; y < content.height(); ++y) {
    for (int x = 0; x < content.width(); ++x) {
      const double v = w.valid.at(y, x);
      for (int c = 0; c < 3; ++c) {
        init.at(y, x, c) = v * w.warped.at(y, x, c) + (1.0 - v) * content.at(y, x, c);
      }
    }
  }
  return Image::clamped(init);
}

FrameResult stylize_frame(const FrameContext& ctx, const StyleContext& style, const JobConfig& cfg,
                          const Image& init) {
  LossContext lc;
  lc.net = style.net;
  lc.content = &ctx.content_acts;
  lc.style = &style.targets;
  lc.masks = &ctx.masks;
  lc.laplacian = ctx.laplacian.get();
  lc.temporal = ctx.temporal;
  const Objective objective = [&](const Image& x) {
    TotalLoss t = total_loss(x, lc, style.weights);
    return Evaluation{t.value, std::move(t.grad), std::move(t.breakdown)};
  };
  OptimizerParams params = cfg.optimizer;
  params.iterations = ctx.index == 0 ? cfg.iterations_first : cfg.iterations;
  try {
    MinimizeResult r = minimize(objective, init, params);
    FrameResult out{std::move(r.image), std::move(r.trace), {}};
    out.final_loss = out.trace.breakdowns.back().second;
    return out;
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("frame ") + std::to_string(ctx.index) + ": " + e.what(),
                e.subject());
  }
}

TemporalError temporal_error(const std::vector<Image>& frames, const std::vector<FlowField>& flows,
                             const std::vector<PixelWeights>& weights) {
  if (frames.empty() || flows.size() + 1 != frames.size() || weights.size() != flows.size()) {
    throw Error(ErrorKind::kShapeMismatch, "temporal_error needs one flow and weight map per pair");
  }
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t k = 0; k < flows.size(); ++k) {
    const Image& cur = frames[k + 1];
    if (!weights[k].same_shape(PixelWeights(cur.height(), cur.width(), 0.0))) {
      throw Error(ErrorKind::kShapeMismatch, "weight map size differs from frame");
    }
    PixelWeights valid;
    const PixelGrid warped = backward_warp(frames[k].to_grid(), flows[k], &valid);
    double num = 0.0;
    double den = 0.0;
    for (int y = 0; y < cur.height(); ++y) {
      for (int x = 0; x < cur.width(); ++x) {
        const double c = weights[k].at(y, x) * valid.at(y, x);
        if (c == 0.0) continue;
        double d2 = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          const double d = cur.at(y, x, ch) - warped.at(y, x, ch);
          d2 += d * d;
        }
        num += c * d2;
        den += c;
      }
    }
    if (den > 0.0) {
      sum += num / den;
      ++pairs;
    }
  }
  return pairs > 0 ? TemporalError{sum / pairs, false} : TemporalError{0.0, true};
}

SequenceResult stylize_sequence(const JobConfig& cfg, const NetworkWeights& net,
                                const SequenceInputs& inputs, const FrameCallback& on_frame,
                                std::vector<Image> completed, const LaplacianCache& cache) {
  const StyleContext style = prepare_style(cfg, net, inputs);
  SequenceResult result;
  result.outputs = std::move(completed);
  const int n = static_cast<int>(inputs.frames.size());
  for (int i = static_cast<int>(result.outputs.size()); i < n; ++i) {
    const FrameContext ctx = build_frame_context(i, inputs, style, cfg, result.outputs, cache);
    FrameResult fr = stylize_frame(ctx, style, cfg, initial_guess(i, inputs, result.outputs));
    result.outputs.push_back(fr.image);
    if (on_frame) on_frame(i, fr);
    result.frames.push_back(std::move(fr));
  }

  if (n > 1) {
    std::vector<FlowField> flows;
    std::vector<PixelWeights> weights;
    for (int i = 1; i < n; ++i) {
      const TemporalLink& link = inputs.links.at({i, 1});
      flows.push_back(link.backward);
      weights.push_back(link.weights);
    }
    result.temporal_error = temporal_error(result.outputs, flows, weights);
  } else {
    result.temporal_error = {0.0, true};
  }
  return result;
}

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'V', 'C', 'K'};

void save_checkpoint(const Image& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open for writing", path.string());
  const std::int32_t dims[2] = {img.height(), img.width()};
  out.write(kCheckpointMagic, 4);
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(img.values().data()),
            static_cast<std::streamsize>(img.values().size_bytes()));
  if (!out) throw Error(ErrorKind::kIo, "write failed", path.string());
}

Image load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "checkpoint not found", path.string());
  char magic[4];
  std::int32_t dims[2];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || !std::equal(magic, magic + 4, kCheckpointMagic) || dims[0] < 1 || dims[1] < 1) {
    throw Error(ErrorKind::kMalformedHeader, "bad checkpoint", path.string());
  }
  std::vector<double> v(static_cast<std::size_t>(dims[0]) * dims[1] * 3);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw Error(ErrorKind::kTruncated, "checkpoint data", path.string());
  return Image(dims[0], dims[1], std::move(v));
}

json loss_json(const LossBreakdown& b) {
  return {{"total", b.total},
          {"content", b.content},
          {"style", b.style},
          {"photorealism", b.photorealism},
          {"temporal", b.temporal}};
}

void write_json(const json& j, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorKind::kIo, "cannot open for writing", tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::kIo, "write failed", tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open manifest", path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kMalformedHeader, e.what(), path.string());
  }
}

}  // namespace

std::vector<fs::path> run_video_job(const JobConfig& cfg, const NetworkWeights& net,
                                    const SequenceInputs& inputs, bool resume) {
  if (cfg.output_dir.empty()) throw Error(ErrorKind::kConfig, "output_dir is required");
  const fs::path out_dir(cfg.output_dir);
  const fs::path manifest_path = out_dir / "run.json";
  const fs::path ckpt_dir = out_dir / "checkpoints";

  json manifest;
  std::vector<Image> completed;
  if (resume && fs::exists(manifest_path)) {
    manifest = read_json(manifest_path);
    if (manifest.value("config_hash", std::string()) != cfg.hash()) {
      throw Error(ErrorKind::kConfig, "configuration differs from the run being resumed",
                  manifest_path.string());
    }
    const int last = manifest.value("last_completed", -1);
    for (int i = 0; i <= last && i < static_cast<int>(inputs.frames.size()); ++i) {
      completed.push_back(load_checkpoint(ckpt_dir / frame_name("state_%05d.bin", inputs.frame_numbers[i])));
    }
    json frames = json::array();
    for (const auto& f : manifest.value("frames", json::array())) {
      if (f.value("position", 0) < static_cast<int>(completed.size())) frames.push_back(f);
    }
    manifest["frames"] = frames;
  } else {
    json config = json::object();
    for (const auto& [k, v] : cfg.entries()) config[k] = v;
    manifest = {{"format", "pvst-run-1"},
                {"config", config},
                {"config_hash", cfg.hash()},
                {"kernels", std::string(simd::isa_name(simd::active().isa))},
                {"frames", json::array()},
                {"last_completed", -1}};
  }
  fs::create_directories(ckpt_dir);
  if (!cfg.trace_dir.empty()) fs::create_directories(cfg.trace_dir);
  manifest["status"] = "running";
  manifest.erase("error");
  write_json(manifest, manifest_path);

  std::vector<fs::path> written;
  for (std::size_t i = 0; i < completed.size(); ++i) {
    written.push_back(out_dir / frame_name("styled_%05d.png", inputs.frame_numbers[i]));
  }
  auto on_frame = [&](int i, const FrameResult& fr) {
    const int number = inputs.frame_numbers[i];
    const fs::path png = out_dir / frame_name("styled_%05d.png", number);
    save_image(fr.image, png);
    save_checkpoint(fr.image, ckpt_dir / frame_name("state_%05d.bin", number));
    if (!cfg.trace_dir.empty()) {
      write_trace_csv(fr.trace, (fs::path(cfg.trace_dir) / frame_name("trace_%05d.csv", number)).string());
    }
    written.push_back(png);
    manifest["frames"].push_back({{"position", i},
                                  {"frame", number},
                                  {"output", png.filename().string()},
                                  {"iterations", fr.trace.iterations},
                                  {"stop", fr.trace.stop == StopReason::kConverged ? "converged" : "budget"},
                                  {"temporal_terms", fr.final_loss.temporal_terms},
                                  {"loss", loss_json(fr.final_loss)}});
    manifest["last_completed"] = i;
    write_json(manifest, manifest_path);
    std::cerr << "frame " << number << ": " << fr.trace.iterations << " iterations, loss "
              << fr.final_loss.total << '\n';
  };

  try {
    const SequenceResult r =
        stylize_sequence(cfg, net, inputs, on_frame, std::move(completed), LaplacianCache(cfg.laplacian_cache));
    manifest["status"] = "complete";
    manifest["temporal_error"] = r.temporal_error.value;
    manifest["temporal_error_vacuous"] = r.temporal_error.vacuous;
    write_json(manifest, manifest_path);
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    write_json(manifest, manifest_path);
    throw;
  }
  return written;
}

JobConfig config_from_manifest(const fs::path& path) {
  const json manifest = read_json(path);
  if (!manifest.contains("config") || !manifest["config"].is_object()) {
    throw Error(ErrorKind::kMalformedHeader, "manifest has no config section", path.string());
  }
  JobConfig cfg;
  for (const auto& [k, v] : manifest["config"].items()) {
    if (!v.is_string()) throw Error(ErrorKind::kMalformedHeader, "config values must be strings", k);
    cfg.set(k, v.get<std::string>());
  }
  return cfg;
}

}  // namespace pvst
