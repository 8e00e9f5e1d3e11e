#include "pvst/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "pvst/error.hpp"
#include "pvst/gradcheck.hpp"
#include "pvst/pipeline.hpp"

namespace pvst::cli {

namespace fs = std::filesystem;

namespace {

std::string flag_for(const std::string& key) {
  std::string flag = key;
  std::replace(flag.begin(), flag.end(), '_', '-');
  return flag;
}

const char* kUsageHint = "run with --help for usage";

// Holds CLI11 option storage for one subcommand.
struct Sub {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> keys;   // config key -> value
  std::map<std::string, std::string> extra;  // subcommand flag -> value
  std::string config_path;
  bool print_config = false;
};

void add_config_options(Sub& s) {
  s.app->add_option("--config", s.config_path, "flat key = value configuration file");
  s.app->add_flag("--print-config", s.print_config, "print the effective configuration and exit");
  for (const auto& key : config_keys()) {
    s.app->add_option("--" + flag_for(key), s.keys[key], "config key '" + key + "'");
  }
}

void add_extra(Sub& s, const std::string& name, const std::string& help, bool required = false) {
  auto* opt = s.app->add_option("--" + name, s.extra[name], help);
  if (required) opt->required();
}

}  // namespace

Command parse(const std::vector<std::string>& argv) {
  CLI::App app{"Photorealistic video style transfer", "pvst"};
  app.require_subcommand(1);
  std::map<std::string, std::unique_ptr<Sub>> subs;
  auto make = [&](CLI::App* parent, const std::string& name, const std::string& desc) {
    auto s = std::make_unique<Sub>();
    s->app = parent->add_subcommand(name, desc);
    Sub* raw = s.get();
    subs[name] = std::move(s);
    return raw;
  };

  Sub* stylize = make(&app, "stylize", "stylize a single image");
  add_config_options(*stylize);
  add_extra(*stylize, "content", "content image (.png/.ppm)");
  add_extra(*stylize, "out", "output image path");
  add_extra(*stylize, "content-seg", "content label map (8-bit gray PNG)");
  add_extra(*stylize, "trace", "write the optimisation trace as CSV");

  Sub* video = make(&app, "stylize-video", "stylize a frame sequence");
  add_config_options(*video);
  add_extra(*video, "manifest", "reproduce the configuration recorded in a run manifest");
  bool resume = false;
  video->app->add_flag("--resume", resume, "continue after the last completed frame");

  Sub* grad = make(&app, "gradcheck", "finite-difference check of every loss term");
  add_config_options(*grad);
  add_extra(*grad, "size", "fixture side length (default 8)");

  Sub* lap = make(&app, "laplacian", "dump the matting Laplacian of an image as triplets");
  add_config_options(*lap);
  add_extra(*lap, "image", "input image", true);
  add_extra(*lap, "out", "output triplet file (default stdout)");

  Sub* metrics = make(&app, "metrics", "temporal error of a stylized sequence");
  add_config_options(*metrics);
  add_extra(*metrics, "frames", "directory of stylized frames", true);
  add_extra(*metrics, "flows", "directory of backward/forward flows (default: --frames)");
  add_extra(*metrics, "pattern", "frame file pattern (default styled_%05d.png)");

  auto* flow = app.add_subcommand("flow", "optical-flow utilities");
  flow->require_subcommand(1);
  auto synth_owner = std::make_unique<Sub>();
  Sub* synth = synth_owner.get();
  synth->app = flow->add_subcommand("synth", "write a constant translation flow");
  add_extra(*synth, "dx", "horizontal displacement", true);
  add_extra(*synth, "dy", "vertical displacement", true);
  add_extra(*synth, "size", "HxW", true);
  add_extra(*synth, "out", "output .flo path", true);
  subs["flow synth"] = std::move(synth_owner);

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  Command cmd;
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    cmd.name = "help";
    cmd.help_text = app.help();
    for (const auto& [name, s] : subs) {
      if (s->app->parsed()) cmd.help_text = s->app->help();
    }
    return cmd;
  } catch (const CLI::ParseError& e) {
    throw UsageError(std::string(e.what()) + "; " + kUsageHint);
  }

  for (const auto& [name, s] : subs) {
    if (!s->app->parsed()) continue;
    cmd.name = name;
    cmd.print_config = s->print_config;
    cmd.resume = resume;
    for (const auto& [k, v] : s->extra) {
      if (s->app->count("--" + k) > 0) cmd.args[k] = v;
    }
    try {
      if (auto it = cmd.args.find("manifest"); it != cmd.args.end()) {
        cmd.config = config_from_manifest(it->second);
      }
      if (!s->config_path.empty()) cmd.config.load_file(s->config_path);
    } catch (const Error& e) {
      throw UsageError(std::string(e.what()) + "; " + kUsageHint);
    }
    for (const auto& key : config_keys()) {
      if (s->keys.count(key) == 0 || s->app->count("--" + flag_for(key)) == 0) continue;
      try {
        cmd.config.set(key, s->keys[key]);
      } catch (const Error& e) {
        throw UsageError("--" + flag_for(key) + ": " + e.what() + "; " + kUsageHint);
      }
    }
    if (name == "stylize") {
      if (!cmd.args.count("content") || !cmd.args.count("out") || cmd.config.style.empty()) {
        if (!cmd.print_config) {
          throw UsageError("stylize requires --content, --style and --out; " + std::string(kUsageHint));
        }
      }
    }
  }
  return cmd;
}

namespace {

std::string decimal(double v) {
  std::string s = format_double(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

int parse_int_arg(const Command& cmd, const std::string& name, int fallback) {
  auto it = cmd.args.find(name);
  if (it == cmd.args.end()) return fallback;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(name);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfig, "expected an integer, got '" + it->second + "'", "--" + name);
  }
}

double parse_double_arg(const Command& cmd, const std::string& name) {
  const std::string& text = cmd.args.at(name);
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(name);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfig, "expected a number, got '" + text + "'", "--" + name);
  }
}

void require_input(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::kMissingFile, "input not found", path);
}

// Validation happens in `validate`; `execute` may write files. Errors from the
// first map to exit 1, from the second to exit 2.
template <typename Validate, typename Execute>
int phased(std::ostream& err, Validate validate, Execute execute) {
  try {
    validate();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }
  try {
    return execute();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

int run_stylize(const Command& cmd, std::ostream& err) {
  JobConfig cfg = cmd.config;
  SequenceInputs inputs;
  NetworkWeights net;
  return phased(
      err,
      [&] {
        cfg.validate();
        require_input(cmd.args.at("content"));
        require_input(cfg.style);
        inputs.style = load_image(cfg.style);
        inputs.frames.push_back(load_image(cmd.args.at("content")));
        inputs.frame_numbers.push_back(0);
        const bool seg = cmd.args.count("content-seg") > 0;
        if (seg != !cfg.style_seg.empty()) {
          throw Error(ErrorKind::kConfig, "--content-seg and --style-seg must be given together");
        }
        if (seg) {
          inputs.style_labels = load_label_map(cfg.style_seg);
          inputs.frame_labels.push_back(load_label_map(cmd.args.at("content-seg")));
          if (!cfg.vocab.empty()) inputs.vocab = load_vocabulary(cfg.vocab);
        }
        net = load_network(cfg);
        const fs::path out(cmd.args.at("out"));
        if (!out.parent_path().empty() && !fs::is_directory(out.parent_path())) {
          throw Error(ErrorKind::kMissingFile, "output directory does not exist",
                      out.parent_path().string());
        }
      },
      [&] {
        const SequenceResult r =
            stylize_sequence(cfg, net, inputs, {}, {}, LaplacianCache(cfg.laplacian_cache));
        save_image(r.outputs.front(), cmd.args.at("out"));
        if (auto it = cmd.args.find("trace"); it != cmd.args.end()) {
          write_trace_csv(r.frames.front().trace, it->second);
        }
        err << "stylized in " << r.frames.front().trace.iterations << " iterations, loss "
            << r.frames.front().final_loss.total << '\n';
        return kOk;
      });
}

int run_video(const Command& cmd, std::ostream& err) {
  SequenceInputs inputs;
  NetworkWeights net;
  return phased(
      err,
      [&] {
        if (cmd.config.output_dir.empty()) throw Error(ErrorKind::kConfig, "output_dir is required");
        inputs = load_sequence_inputs(cmd.config);
        net = load_network(cmd.config);
      },
      [&] {
        const auto written = run_video_job(cmd.config, net, inputs, cmd.resume);
        err << "wrote " << written.size() << " frames to " << cmd.config.output_dir << '\n';
        return kOk;
      });
}

int run_gradcheck_cmd(const Command& cmd, std::ostream& out, std::ostream& err) {
  int size = 8;
  return phased(
      err,
      [&] {
        size = parse_int_arg(cmd, "size", 8);
        if (size < 8) throw Error(ErrorKind::kConfig, "fixture must be at least 8x8", "--size");
      },
      [&] {
        bool ok = true;
        for (const auto& r : run_gradcheck(size, cmd.config.seed)) {
          const bool pass = r.max_rel_error < kGradcheckTolerance;
          ok = ok && pass;
          out << r.term << ' ' << r.max_rel_error << ' ' << (pass ? "pass" : "FAIL") << '\n';
        }
        return ok ? kOk : kRuntimeFailure;
      });
}

int run_laplacian(const Command& cmd, std::ostream& out, std::ostream& err) {
  Image img;
  return phased(
      err,
      [&] {
        require_input(cmd.args.at("image"));
        img = load_image(cmd.args.at("image"));
        if (!(cmd.config.matting.eps > 0.0)) throw Error(ErrorKind::kConfig, "must be positive", "--eps");
        const int side = 2 * cmd.config.matting.radius + 1;
        if (cmd.config.matting.radius < 1 || img.height() < side || img.width() < side) {
          throw Error(ErrorKind::kConfig, "image smaller than one matting window", "--radius");
        }
      },
      [&] {
        const SparseSymmetric L = build_matting_laplacian(img, cmd.config.matting);
        if (auto it = cmd.args.find("out"); it != cmd.args.end()) {
          std::ofstream file(it->second);
          if (!file) throw Error(ErrorKind::kIo, "cannot open for writing", it->second);
          write_triplets(L, file);
        } else {
          write_triplets(L, out);
        }
        return kOk;
      });
}

int run_metrics(const Command& cmd, std::ostream& out, std::ostream& err) {
  std::vector<Image> frames;
  std::vector<FlowField> flows;
  std::vector<PixelWeights> weights;
  return phased(
      err,
      [&] {
        const fs::path dir(cmd.args.at("frames"));
        const fs::path flow_dir(cmd.args.count("flows") ? cmd.args.at("flows") : cmd.args.at("frames"));
        const std::string pattern =
            cmd.args.count("pattern") ? cmd.args.at("pattern") : std::string("styled_%05d.png");
        if (!fs::is_directory(dir)) throw Error(ErrorKind::kMissingFile, "not a directory", dir.string());
        const int first = cmd.config.first_frame;
        for (int n = first; cmd.config.last_frame < 0 || n <= cmd.config.last_frame; ++n) {
          const fs::path p = dir / frame_name(pattern.c_str(), n);
          if (!fs::exists(p)) {
            if (cmd.config.last_frame >= 0 || n == first) {
              throw Error(ErrorKind::kMissingFile, "frame not found", p.string());
            }
            break;
          }
          frames.push_back(load_image(p));
          if (n == first) continue;
          const fs::path bwd = flow_dir / frame_name("backward_%05d_%05d.flo", n, n - 1);
          const fs::path fwd = flow_dir / frame_name("forward_%05d_%05d.flo", n - 1, n);
          require_input(bwd.string());
          flows.push_back(read_flo(bwd));
          if (fs::exists(fwd)) {
            weights.push_back(consistency_weights(read_flo(fwd), flows.back(), cmd.config.consistency));
          } else {
            weights.emplace_back(flows.back().height, flows.back().width, 1.0);
          }
        }
      },
      [&] {
        const TemporalError te = temporal_error(frames, flows, weights);
        if (te.vacuous) err << "warning: no pair carries positive weight; temporal error is 0\n";
        out << decimal(te.value) << '\n';
        return kOk;
      });
}

int run_flow_synth(const Command& cmd, std::ostream& err) {
  int h = 0, w = 0;
  double dx = 0.0, dy = 0.0;
  return phased(
      err,
      [&] {
        dx = parse_double_arg(cmd, "dx");
        dy = parse_double_arg(cmd, "dy");
        const std::string& size = cmd.args.at("size");
        const auto x = size.find_first_of("xX");
        try {
          if (x == std::string::npos) throw std::invalid_argument(size);
          std::size_t p1 = 0, p2 = 0;
          h = std::stoi(size.substr(0, x), &p1);
          w = std::stoi(size.substr(x + 1), &p2);
          if (p1 != x || p2 != size.size() - x - 1 || h < 1 || w < 1) throw std::invalid_argument(size);
        } catch (const std::exception&) {
          throw Error(ErrorKind::kConfig, "expected HxW, got '" + size + "'", "--size");
        }
      },
      [&] {
        write_flo(synth_translation_flow(h, w, dx, dy), cmd.args.at("out"));
        return kOk;
      });
}

}  // namespace

int run(const Command& cmd, std::ostream& out, std::ostream& err) {
  if (cmd.name == "help") {
    out << cmd.help_text;
    return kOk;
  }
  if (cmd.print_config) {
    out << cmd.config.to_lines();
    return kOk;
  }
  if (cmd.name == "stylize") return run_stylize(cmd, err);
  if (cmd.name == "stylize-video") return run_video(cmd, err);
  if (cmd.name == "gradcheck") return run_gradcheck_cmd(cmd, out, err);
  if (cmd.name == "laplacian") return run_laplacian(cmd, out, err);
  if (cmd.name == "metrics") return run_metrics(cmd, out, err);
  if (cmd.name == "flow synth") return run_flow_synth(cmd, err);
  err << "error: unknown command '" << cmd.name << "'\n";
  return kValidationError;
}

int main_entry(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Command cmd;
  try {
    cmd = parse(argv);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }
  return run(cmd, out, err);
}

}  // namespace pvst::cli
