// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "oracles.hpp"
#include "pvst/cli.hpp"
#include "pvst/error.hpp"
#include "pvst/gradcheck.hpp"
#include "pvst/pipeline.hpp"
#include "scene.hpp"
#include "tempdir.hpp"

using namespace pvst;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Eigen::MatrixXd densify(const SparseSymmetric& L) {
  const auto n = static_cast<Eigen::Index>(L.dimension());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < L.dimension(); ++i) {
    for (std::size_t k = L.row_offsets()[i]; k < L.row_offsets()[i + 1]; ++k) {
      d(static_cast<Eigen::Index>(i), L.columns()[k]) = L.values()[k];
    }
  }
  return d;
}

// 1. Finite-difference gradient suite on 8x8 fixtures.
Verdict gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string detail;
  for (const GradcheckReport& r : run_gradcheck(8, 7)) {
    worst = std::max(worst, r.max_rel_error);
    detail += r.term + "=" + fmt("%.2e", r.max_rel_error) + " ";
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0, detail + fmt("(%.1fs)", secs)};
}

// 2. Sparse Laplacian against the dense oracle, plus PSD and the eps sweep.
Verdict laplacian_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double max_entry = 0.0, max_row = 0.0, min_eig = INFINITY;
  bool monotone = true;
  for (int k = 0; k < 20; ++k) {
    const int h = 3 + k % 4;
    const int w = 3 + (k / 4) % 4;
    const double eps = k % 2 == 0 ? 1e-2 : 1e-5;
    const Image img = oracle::random_image(h, w, rng);
    const SparseSymmetric L = build_matting_laplacian(img, {eps, 1});
    const Eigen::MatrixXd D = densify(L);
    max_entry = std::max(max_entry, (D - oracle::dense_laplacian(img, eps, 1)).cwiseAbs().maxCoeff());
    max_row = std::max(max_row, D.rowwise().sum().cwiseAbs().maxCoeff());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(D).eigenvalues().minCoeff());

    double coef[3][4];
    for (auto& row : coef) {
      for (double& v : row) v = rng.uniform(-0.1, 0.1);
    }
    std::vector<double> px(img.size());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          px[(static_cast<std::size_t>(y) * w + x) * 3 + c] = 0.5 + coef[c][3] + coef[c][0] * img.at(y, x, 0) +
                                                              coef[c][1] * img.at(y, x, 1) +
                                                              coef[c][2] * img.at(y, x, 2);
        }
      }
    }
    const Image recolored(h, w, std::move(px));
    double previous = INFINITY;
    for (double e : {1e-2, 1e-4, 1e-6}) {
      const double q = photorealism_loss(build_matting_laplacian(img, {e, 1}), recolored).value;
      monotone = monotone && q < previous;
      previous = q;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = max_entry < 1e-10 && max_row < 1e-9 && min_eig >= -1e-8 && monotone && secs < 60.0;
  return {pass, fmt("max|L-dense|=%.2e max|rowsum|=%.2e min eig=%.2e ", max_entry, max_row, min_eig) +
                    (monotone ? "eps sweep monotone" : "eps sweep NOT monotone") + fmt(" (%.1fs)", secs)};
}

// 3. gamma = lambda = 0 with one all-ones mask equals the Gatys form.
Verdict reduction_identity() {
  Rng rng(77);
  double worst = 0.0;
  for (int f = 0; f < 5; ++f) {
    const NetworkWeights net = seeded_weights(100 + f);
    const int n = 8 + 4 * f;
    const Image content = oracle::random_image(n, n, rng), style = oracle::random_image(n, n, rng),
                output = oracle::random_image(n, n, rng);
    LossWeights w;
    w.gamma = 0.0;
    w.lambda = 0.0;
    std::set<std::string> style_layers;
    std::map<std::string, MaskStack> masks;
    for (const auto& [l, b] : w.style) {
      style_layers.insert(l);
      const auto [lh, lw] = layer_extent(l, n, n);
      masks.emplace(l, downsample_masks(uniform_mask(n, n), lh, lw));
    }
    const StyleTargets targets = style_targets(forward(net, style, style_layers), masks);
    const ActivationSet ca = forward(net, content, {"relu2_2"});
    LossContext ctx;
    ctx.net = &net;
    ctx.content = &ca;
    ctx.style = &targets;
    ctx.masks = &masks;
    const double got = total_loss(output, ctx, w).value;
    const double ref = oracle::gatys_loss(net, output, content, style, w.content, w.style, w.tau);
    worst = std::max(worst, std::abs(got - ref) / std::abs(ref));
  }
  return {worst < 1e-10, fmt("max relative difference %.2e over 5 fixtures", worst)};
}

struct SceneRuns {
  SequenceResult with_temporal;
  SequenceResult without_temporal;
  double seconds = 0.0;
};

SceneRuns run_scene() {
  const testing::MovingSquareScene scene;
  JobConfig cfg;
  cfg.iterations_first = 200;
  cfg.iterations = 200;
  const NetworkWeights net = seeded_weights(cfg.seed);
  const SequenceInputs inputs = scene.inputs(cfg.long_term);
  const auto t0 = Clock::now();
  SceneRuns r;
  cfg.gamma = 200.0;
  r.with_temporal = stylize_sequence(cfg, net, inputs);
  cfg.gamma = 0.0;
  r.without_temporal = stylize_sequence(cfg, net, inputs);
  r.seconds = seconds_since(t0);
  return r;
}

// 4. Temporal term halves the temporal error on the moving-square scene.
Verdict temporal_experiment(const SceneRuns& r) {
  const double a = r.with_temporal.temporal_error.value;
  const double b = r.without_temporal.temporal_error.value;
  return {a < 0.5 * b && r.seconds < 600.0,
          fmt("temporal_error gamma=200: %.4e, gamma=0: %.4e, ratio %.3f (%.0fs)", a, b, a / b, r.seconds)};
}

// 5. Long-term guard: term counts per frame and c_long against a pixel loop.
Verdict long_term_guard(const SceneRuns& r) {
  std::vector<int> counts;
  for (const FrameResult& f : r.with_temporal.frames) counts.push_back(f.trace.breakdowns.back().second.temporal_terms);
  const std::vector<int> expected{0, 1, 2, 2, 3};

  const testing::MovingSquareScene scene;
  JobConfig cfg;
  const NetworkWeights net = seeded_weights(cfg.seed);
  const SequenceInputs inputs = scene.inputs(cfg.long_term);
  const StyleContext style = prepare_style(cfg, net, inputs);
  bool exact = true;
  for (int i = 1; i < scene.frames; ++i) {
    const FrameContext ctx =
        build_frame_context(i, inputs, style, cfg, r.with_temporal.outputs, LaplacianCache{});
    std::vector<PixelWeights> raw;
    for (const auto& term : ctx.temporal) {
      const auto& link = inputs.links.at({i, term.gap});
      PixelWeights c = link.weights;
      const WarpResult w = backward_warp(r.with_temporal.outputs[i - term.gap], link.backward);
      for (int y = 0; y < scene.size; ++y) {
        for (int x = 0; x < scene.size; ++x) c.at(y, x) *= w.valid.at(y, x);
      }
      raw.push_back(c);
    }
    for (std::size_t j = 0; j < ctx.temporal.size(); ++j) {
      for (int y = 0; y < scene.size; ++y) {
        for (int x = 0; x < scene.size; ++x) {
          double claimed = 0.0;
          for (std::size_t k = 0; k < j; ++k) claimed += raw[k].at(y, x);
          exact = exact && ctx.temporal[j].weights.at(y, x) == std::max(raw[j].at(y, x) - claimed, 0.0);
        }
      }
    }
  }
  std::string shown;
  for (int c : counts) shown += std::to_string(c) + " ";
  return {counts == expected && exact,
          "terms per frame: " + shown + (exact ? "c_long exact" : "c_long MISMATCH")};
}

// 6. Pixels with all-zero temporal weights get exactly zero temporal gradient.
Verdict disocclusion_liberty(const SceneRuns& r) {
  const testing::MovingSquareScene scene;
  JobConfig cfg;
  const NetworkWeights net = seeded_weights(cfg.seed);
  const SequenceInputs inputs = scene.inputs(cfg.long_term);
  const StyleContext style = prepare_style(cfg, net, inputs);
  Rng rng(6);
  double worst = 0.0;
  int masked = 0;
  for (int i = 1; i < scene.frames; ++i) {
    const FrameContext ctx = build_frame_context(i, inputs, style, cfg, r.with_temporal.outputs, LaplacianCache{});
    LossContext lc;
    lc.temporal = ctx.temporal;
    LossWeights w = cfg.loss_weights();
    w.content.clear();
    w.tau = 0.0;
    w.lambda = 0.0;
    const TotalLoss t = total_loss(oracle::random_image(scene.size, scene.size, rng), lc, w);
    for (int y = 0; y < scene.size; ++y) {
      for (int x = 0; x < scene.size; ++x) {
        bool zero = true;
        for (const auto& term : ctx.temporal) zero = zero && term.weights.at(y, x) == 0.0;
        if (!zero) continue;
        ++masked;
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(t.grad.at(y, x, c)));
      }
    }
  }
  return {masked > 0 && worst == 0.0, fmt("%.0f masked pixels, max |temporal grad| = %.1e", masked, worst)};
}

// 7. write then read is the identity for every file format.
Verdict round_trips() {
  testing::TempDir dir;
  Rng rng(7);
  int failures = 0;
  for (int t = 0; t < 50; ++t) {
    const int h = 1 + static_cast<int>(rng.below(12));
    const int w = 1 + static_cast<int>(rng.below(12));

    FlowField f(h, w);
    for (float& v : f.uv) v = static_cast<float>(rng.uniform(-50, 50));
    write_flo(f, dir / "f.flo");
    const FlowField fb = read_flo(dir / "f.flo");
    failures += !(fb.height == h && fb.width == w && std::memcmp(fb.uv.data(), f.uv.data(), f.uv.size() * 4) == 0);

    NetworkWeights net = seeded_weights(rng.next());
    for (auto& l : net.layers) {
      for (float& b : l.bias) b = static_cast<float>(rng.normal());
    }
    save_weights(net, dir / "w.pvst");
    failures += !(load_weights(dir / "w.pvst") == net);

    std::vector<double> px(static_cast<std::size_t>(h) * w * 3);
    for (double& v : px) v = static_cast<double>(rng.below(256)) / 255.0;
    const Image img(h, w, px);
    for (const char* name : {"i.png", "i.ppm"}) {
      save_image(img, dir / name);
      failures += !(load_image(dir / name) == img);
    }

    LabelMap m{h, w, std::vector<int>(static_cast<std::size_t>(h) * w)};
    for (int& v : m.labels) v = static_cast<int>(rng.below(256));
    save_label_map(m, dir / "l.png");
    failures += !(load_label_map(dir / "l.png") == m);
  }
  return {failures == 0, fmt("%.0f mismatches over 50 fixtures x 5 formats", failures)};
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// 8. Re-running stylize-video from a manifest reproduces every output bit for bit.
Verdict determinism() {
  testing::TempDir dir;
  const testing::MovingSquareScene scene;
  scene.write(dir / "in", {1, 2, 4});
  std::ostringstream out, err;
  const auto run = [&](std::vector<std::string> argv) { return cli::main_entry(argv, out, err); };
  int code = run({"stylize-video", "--content-dir", (dir / "in").string(), "--flow-dir", (dir / "in").string(),
                  "--style", (dir / "in" / "style.png").string(), "--output-dir", (dir / "a").string(),
                  "--iterations-first", "40", "--iterations", "25"});
  code |= run({"stylize-video", "--manifest", (dir / "a" / "run.json").string(), "--output-dir", (dir / "b").string()});
  code |= run({"stylize-video", "--manifest", (dir / "a" / "run.json").string(), "--output-dir", (dir / "c").string()});
  if (code != 0) return {false, "stylize-video failed: " + err.str()};
  int compared = 0, differing = 0;
  for (int i = 0; i < scene.frames; ++i) {
    for (const std::string& rel : {frame_name("styled_%05d.png", i), "checkpoints/" + frame_name("state_%05d.bin", i)}) {
      const std::string a = file_bytes(dir / "a" / rel);
      differing += a.empty() || a != file_bytes(dir / "b" / rel) || a != file_bytes(dir / "c" / rel);
      ++compared;
    }
  }
  return {differing == 0, fmt("%.0f of %.0f output files differ across three runs", differing, compared)};
}

}  // namespace

int main() {
  bool all = true;
  const auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    all = all && v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << id << "  " << name << "  " << v.detail << std::endl;
  };
  report(1, "gradient suite", gradient_suite);
  report(2, "matting Laplacian oracle", laplacian_oracle);
  report(3, "reduction identity", reduction_identity);
  SceneRuns runs;
  std::string scene_error;
  try {
    runs = run_scene();
  } catch (const std::exception& e) {
    scene_error = e.what();
  }
  const auto scene_check = [&](Verdict (*f)(const SceneRuns&)) {
    return [&, f] { return scene_error.empty() ? f(runs) : Verdict{false, "scene run failed: " + scene_error}; };
  };
  report(4, "temporal consistency experiment", scene_check(temporal_experiment));
  report(5, "long-term guard", scene_check(long_term_guard));
  report(6, "disocclusion liberty", scene_check(disocclusion_liberty));
  report(7, "format round trips", round_trips);
  report(8, "determinism from manifest", determinism);
  return all ? 0 : 1;
}
