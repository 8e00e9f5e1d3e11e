#include "pvst/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pvst/error.hpp"
#include "pvst/network.hpp"

namespace pvst {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(value)};
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad(std::string_view key, std::string_view value, const char* expected) {
  throw Error(ErrorKind::kConfig,
              "invalid value '" + std::string(value) + "', expected " + expected, std::string(key));
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) bad(key, text, "a number");
  return v;
}

long long parse_int(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) bad(key, text, "an integer");
  return v;
}

std::vector<double> parse_doubles(std::string_view key, std::string_view text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_double(key, item));
  if (out.empty()) bad(key, text, "a comma-separated list of numbers");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>) {
      out += format_double(v[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += v[i];
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

std::map<std::string, double> layer_weights(const std::vector<std::string>& layers,
                                            const std::vector<double>& weights, const char* key) {
  if (weights.size() != 1 && weights.size() != layers.size()) {
    throw Error(ErrorKind::kConfig, "needs one value or one per layer", key);
  }
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out[layers[i]] = weights.size() == 1 ? weights[0] : weights[i];
  }
  return out;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "content_dir", "style", "style_seg", "seg_dir", "flow_dir", "weights", "output_dir",
      "vocab", "laplacian_cache", "trace_dir", "first_frame", "last_frame", "seed",
      "content_layers", "alpha", "style_layers", "beta", "tau", "gamma", "lambda", "long_term",
      "style_norm", "optimizer", "step_size", "iterations_first", "iterations", "beta1", "beta2",
      "tolerance", "patience", "lbfgs_history", "log_every", "eps", "radius", "occlusion_ratio",
      "occlusion_bias", "boundary_ratio", "boundary_bias"};
  return keys;
}

void JobConfig::set(std::string_view key, std::string_view raw) {
  const std::string value = trim(raw);
  auto str = [&](std::string& field) { field = value; };
  auto num = [&](double& field) { field = parse_double(key, value); };
  auto integer = [&](int& field) { field = static_cast<int>(parse_int(key, value)); };

  if (key == "content_dir") return str(content_dir);
  if (key == "style") return str(style);
  if (key == "style_seg") return str(style_seg);
  if (key == "seg_dir") return str(seg_dir);
  if (key == "flow_dir") return str(flow_dir);
  if (key == "weights") return str(weights);
  if (key == "output_dir") return str(output_dir);
  if (key == "vocab") return str(vocab);
  if (key == "laplacian_cache") return str(laplacian_cache);
  if (key == "trace_dir") return str(trace_dir);
  if (key == "first_frame") return integer(first_frame);
  if (key == "last_frame") return integer(last_frame);
  if (key == "seed") {
    const long long s = parse_int(key, value);
    if (s < 0) bad(key, value, "a non-negative integer");
    seed = static_cast<std::uint64_t>(s);
    return;
  }
  if (key == "content_layers" || key == "style_layers") {
    auto layers = split_list(value);
    if (layers.empty()) bad(key, value, "a comma-separated list of layer names");
    for (const auto& l : layers) {
      try {
        layer_index(l);
      } catch (const Error&) {
        bad(key, value, "layer names among relu1_1, relu1_2, relu2_1, relu2_2, relu3_1");
      }
    }
    (key == "content_layers" ? content_layers : style_layers) = std::move(layers);
    return;
  }
  if (key == "alpha") {
    alpha = parse_doubles(key, value);
    return;
  }
  if (key == "beta") {
    beta = parse_doubles(key, value);
    return;
  }
  if (key == "tau") return num(tau);
  if (key == "gamma") return num(gamma);
  if (key == "lambda") return num(lambda);
  if (key == "long_term") {
    long_term.clear();
    for (const auto& item : split_list(value)) long_term.push_back(static_cast<int>(parse_int(key, item)));
    return;
  }
  if (key == "style_norm") {
    if (value == "mask") {
      style_norm = StyleNorm::kMaskMass;
    } else if (value == "channels") {
      style_norm = StyleNorm::kChannels;
    } else {
      bad(key, value, "'mask' or 'channels'");
    }
    return;
  }
  if (key == "optimizer") {
    if (value == "adam") {
      optimizer.method = Method::kAdam;
    } else if (value == "lbfgs") {
      optimizer.method = Method::kLbfgs;
    } else {
      bad(key, value, "'adam' or 'lbfgs'");
    }
    return;
  }
  if (key == "step_size") return num(optimizer.step_size);
  if (key == "iterations_first") return integer(iterations_first);
  if (key == "iterations") return integer(iterations);
  if (key == "beta1") return num(optimizer.beta1);
  if (key == "beta2") return num(optimizer.beta2);
  if (key == "tolerance") return num(optimizer.tolerance);
  if (key == "patience") return integer(optimizer.patience);
  if (key == "lbfgs_history") return integer(optimizer.history);
  if (key == "log_every") return integer(optimizer.log_every);
  if (key == "eps") return num(matting.eps);
  if (key == "radius") return integer(matting.radius);
  if (key == "occlusion_ratio") return num(consistency.occlusion_ratio);
  if (key == "occlusion_bias") return num(consistency.occlusion_bias);
  if (key == "boundary_ratio") return num(consistency.boundary_ratio);
  if (key == "boundary_bias") return num(consistency.boundary_bias);
  throw Error(ErrorKind::kConfig, "unknown key", std::string(key));
}

void JobConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open config", path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kConfig, "line " + std::to_string(lineno) + " lacks '='", path.string());
    }
    set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
  }
}

LossWeights JobConfig::loss_weights() const {
  LossWeights w;
  w.content = layer_weights(content_layers, alpha, "alpha");
  w.style = layer_weights(style_layers, beta, "beta");
  w.tau = tau;
  w.gamma = gamma;
  w.lambda = lambda;
  w.long_term = long_term;
  w.style_norm = style_norm;
  return w;
}

void JobConfig::validate() const {
  pvst::validate(loss_weights());
  OptimizerParams p = optimizer;
  p.iterations = std::min(iterations_first, iterations);
  pvst::validate(p);
  if (!(matting.eps > 0.0)) throw Error(ErrorKind::kConfig, "must be positive", "eps");
  if (matting.radius < 1) throw Error(ErrorKind::kConfig, "must be at least 1", "radius");
  if (first_frame < 0) throw Error(ErrorKind::kConfig, "must be non-negative", "first_frame");
  if (last_frame >= 0 && last_frame < first_frame) {
    throw Error(ErrorKind::kConfig, "frame range is empty", "last_frame");
  }
}

std::vector<std::pair<std::string, std::string>> JobConfig::entries() const {
  return {
      {"content_dir", content_dir},
      {"style", style},
      {"style_seg", style_seg},
      {"seg_dir", seg_dir},
      {"flow_dir", flow_dir},
      {"weights", weights},
      {"output_dir", output_dir},
      {"vocab", vocab},
      {"laplacian_cache", laplacian_cache},
      {"trace_dir", trace_dir},
      {"first_frame", std::to_string(first_frame)},
      {"last_frame", std::to_string(last_frame)},
      {"seed", std::to_string(seed)},
      {"content_layers", join(content_layers)},
      {"alpha", join(alpha)},
      {"style_layers", join(style_layers)},
      {"beta", join(beta)},
      {"tau", format_double(tau)},
      {"gamma", format_double(gamma)},
      {"lambda", format_double(lambda)},
      {"long_term", join(long_term)},
      {"style_norm", style_norm == StyleNorm::kMaskMass ? "mask" : "channels"},
      {"optimizer", optimizer.method == Method::kAdam ? "adam" : "lbfgs"},
      {"step_size", format_double(optimizer.step_size)},
      {"iterations_first", std::to_string(iterations_first)},
      {"iterations", std::to_string(iterations)},
      {"beta1", format_double(optimizer.beta1)},
      {"beta2", format_double(optimizer.beta2)},
      {"tolerance", format_double(optimizer.tolerance)},
      {"patience", std::to_string(optimizer.patience)},
      {"lbfgs_history", std::to_string(optimizer.history)},
      {"log_every", std::to_string(optimizer.log_every)},
      {"eps", format_double(matting.eps)},
      {"radius", std::to_string(matting.radius)},
      {"occlusion_ratio", format_double(consistency.occlusion_ratio)},
      {"occlusion_bias", format_double(consistency.occlusion_bias)},
      {"boundary_ratio", format_double(consistency.boundary_ratio)},
      {"boundary_bias", format_double(consistency.boundary_bias)},
  };
}

std::string JobConfig::to_lines() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

std::string JobConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_lines()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pvst
