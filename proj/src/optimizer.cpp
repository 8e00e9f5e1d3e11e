#include "pvst/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>

#include "pvst/error.hpp"
#include "pvst/rng.hpp"

namespace pvst {

void validate(const OptimizerParams& p) {
  if (!(p.step_size > 0.0)) throw Error(ErrorKind::kConfig, "must be positive", "step_size");
  if (!(p.beta1 > 0.0 && p.beta1 < 1.0)) throw Error(ErrorKind::kConfig, "must be in (0,1)", "beta1");
  if (!(p.beta2 > 0.0 && p.beta2 < 1.0)) throw Error(ErrorKind::kConfig, "must be in (0,1)", "beta2");
  if (p.iterations < 1) throw Error(ErrorKind::kConfig, "must be at least 1", "iterations");
  if (p.history < 1) throw Error(ErrorKind::kConfig, "must be at least 1", "lbfgs_history");
  if (!(p.tolerance >= 0.0)) throw Error(ErrorKind::kConfig, "must be non-negative", "tolerance");
}

namespace {

Image project(int h, int w, const std::vector<double>& x) {
  std::vector<double> v(x.size());
  std::transform(x.begin(), x.end(), v.begin(), [](double a) { return std::clamp(a, 0.0, 1.0); });
  return Image(h, w, std::move(v));
}

Evaluation evaluate(const Objective& f, const Image& x, int iteration) {
  Evaluation e = f(x);
  bool finite = std::isfinite(e.value) && e.grad.size() == x.size();
  if (finite) {
    for (double g : e.grad.values()) {
      if (!std::isfinite(g)) {
        finite = false;
        break;
      }
    }
  }
  if (!finite) {
    throw Error(ErrorKind::kNonFinite,
                "objective returned a non-finite value or gradient at iteration " +
                    std::to_string(iteration));
  }
  return e;
}

// Tracks the early-stop rule: `patience` consecutive relative changes below tolerance.
class ConvergenceMonitor {
 public:
  explicit ConvergenceMonitor(const OptimizerParams& p) : p_(p) {}

  bool update(double value) {
    if (has_prev_) {
      const double change = std::abs(value - prev_) / std::max(std::abs(prev_), 1e-300);
      const bool flat = value == prev_ || change < p_.tolerance;
      quiet_ = flat ? quiet_ + 1 : 0;
    }
    prev_ = value;
    has_prev_ = true;
    return quiet_ >= p_.patience;
  }

 private:
  const OptimizerParams& p_;
  double prev_ = 0.0;
  bool has_prev_ = false;
  int quiet_ = 0;
};

void record(OptimizationTrace& trace, const Evaluation& e, int k, const OptimizerParams& p) {
  trace.values.push_back(e.value);
  trace.iterations = k + 1;
  if (k == 0 || (p.log_every > 0 && k % p.log_every == 0)) {
    trace.breakdowns.emplace_back(k, e.breakdown);
  }
}

void record_last(OptimizationTrace& trace, const Evaluation& e, int k) {
  if (trace.breakdowns.empty() || trace.breakdowns.back().first != k) {
    trace.breakdowns.emplace_back(k, e.breakdown);
  }
}

MinimizeResult adam(const Objective& f, const Image& init, const OptimizerParams& p) {
  const int h = init.height();
  const int w = init.width();
  std::vector<double> x(init.values().begin(), init.values().end());
  std::vector<double> m(x.size(), 0.0);
  std::vector<double> v(x.size(), 0.0);
  MinimizeResult r;
  ConvergenceMonitor monitor(p);
  Image current = init;
  double b1t = 1.0;
  double b2t = 1.0;
  for (int k = 0; k < p.iterations; ++k) {
    const Evaluation e = evaluate(f, current, k);
    record(r.trace, e, k, p);
    const bool converged = monitor.update(e.value);
    if (converged || k + 1 == p.iterations) {
      r.trace.stop = converged ? StopReason::kConverged : StopReason::kIterationBudget;
      record_last(r.trace, e, k);
      break;
    }
    b1t *= p.beta1;
    b2t *= p.beta2;
    auto g = e.grad.values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g[i];
      v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - b1t);
      const double vhat = v[i] / (1.0 - b2t);
      x[i] = std::clamp(x[i] - p.step_size * mhat / (std::sqrt(vhat) + 1e-8), 0.0, 1.0);
    }
    current = project(h, w, x);
  }
  r.image = std::move(current);
  return r;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

MinimizeResult lbfgs(const Objective& f, const Image& init, const OptimizerParams& p) {
  const int h = init.height();
  const int w = init.width();
  const std::size_t n = init.size();
  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> memory;
  MinimizeResult r;
  ConvergenceMonitor monitor(p);

  Image current = init;
  std::vector<double> x(init.values().begin(), init.values().end());
  Evaluation e = evaluate(f, current, 0);
  for (int k = 0;; ++k) {
    record(r.trace, e, k, p);
    const bool converged = monitor.update(e.value);
    if (converged || k + 1 == p.iterations) {
      r.trace.stop = converged ? StopReason::kConverged : StopReason::kIterationBudget;
      record_last(r.trace, e, k);
      break;
    }
    std::vector<double> g(e.grad.values().begin(), e.grad.values().end());

    // Two-loop recursion for d = -H g.
    std::vector<double> q = g;
    std::vector<double> alpha(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      alpha[i] = memory[i].rho * dot(memory[i].s, q);
      for (std::size_t t = 0; t < n; ++t) q[t] -= alpha[i] * memory[i].y[t];
    }
    double gamma = 1.0;
    if (!memory.empty()) gamma = dot(memory.back().s, memory.back().y) / dot(memory.back().y, memory.back().y);
    for (double& t : q) t *= gamma;
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const double beta = memory[i].rho * dot(memory[i].y, q);
      for (std::size_t t = 0; t < n; ++t) q[t] += memory[i].s[t] * (alpha[i] - beta);
    }
    std::vector<double> d(n);
    for (std::size_t t = 0; t < n; ++t) d[t] = -q[t];
    if (dot(d, g) >= 0.0) {
      memory.clear();
      for (std::size_t t = 0; t < n; ++t) d[t] = -g[t];
    }
    double a = 1.0;
    if (memory.empty()) {
      double gmax = 0.0;
      for (double t : g) gmax = std::max(gmax, std::abs(t));
      a = gmax > 0.0 ? p.step_size / gmax : 1.0;
    }

    // Backtracking on the projected path with an Armijo condition.
    std::vector<double> xn(n);
    Image candidate;
    Evaluation en;
    bool accepted = false;
    for (int tries = 0; tries < 30; ++tries, a *= 0.5) {
      double decrease = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        xn[t] = std::clamp(x[t] + a * d[t], 0.0, 1.0);
        decrease += g[t] * (xn[t] - x[t]);
      }
      candidate = project(h, w, xn);
      en = evaluate(f, candidate, k + 1);
      if (en.value <= e.value + 1e-4 * decrease) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      r.trace.stop = StopReason::kConverged;
      record_last(r.trace, e, k);
      break;
    }
    Pair pr{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t t = 0; t < n; ++t) {
      pr.s[t] = xn[t] - x[t];
      pr.y[t] = en.grad.values()[t] - g[t];
    }
    const double sy = dot(pr.s, pr.y);
    if (sy > 1e-12) {
      pr.rho = 1.0 / sy;
      memory.push_back(std::move(pr));
      if (static_cast<int>(memory.size()) > p.history) memory.pop_front();
    }
    x = xn;
    current = std::move(candidate);
    e = std::move(en);
  }
  r.image = std::move(current);
  return r;
}

}  // namespace

MinimizeResult minimize(const Objective& objective, const Image& init, const OptimizerParams& p) {
  validate(p);
  return p.method == Method::kAdam ? adam(objective, init, p) : lbfgs(objective, init, p);
}

double finite_diff_check(const Objective& objective, const Image& point, double step, int samples,
                         std::uint64_t seed) {
  if (!(step > 0.0)) throw Error(ErrorKind::kInvalidArgument, "finite-difference step must be positive");
  const Evaluation base = objective(point);
  const std::size_t n = point.size();
  auto values = point.values();

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    if (values[i] - step >= 0.0 && values[i] + step <= 1.0) candidates.push_back(i);
  }
  if (static_cast<int>(candidates.size()) > samples) {
    Rng rng(seed);
    for (int i = 0; i < samples; ++i) {
      const std::size_t j = i + rng.below(candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(samples);
    std::sort(candidates.begin(), candidates.end());
  }

  double worst = 0.0;
  std::vector<double> buffer(values.begin(), values.end());
  for (std::size_t idx : candidates) {
    const double orig = buffer[idx];
    buffer[idx] = orig + step;
    const double up = objective(Image(point.height(), point.width(), buffer)).value;
    buffer[idx] = orig - step;
    const double down = objective(Image(point.height(), point.width(), buffer)).value;
    buffer[idx] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = base.grad.values()[idx];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

void write_trace_csv(const OptimizationTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot open for writing", path);
  out.precision(17);
  out << "iteration,total,content,style,photorealism,temporal\n";
  for (const auto& [k, b] : trace.breakdowns) {
    out << k << ',' << trace.values[k] << ',' << b.content << ',' << b.style << ','
        << b.photorealism << ',' << b.temporal << '\n';
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed", path);
}

}  // namespace pvst
