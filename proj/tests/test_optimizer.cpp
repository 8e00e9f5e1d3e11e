#include <cmath>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "pvst/error.hpp"
#include "pvst/gradcheck.hpp"
#include "pvst/optimizer.hpp"
#include "tempdir.hpp"

using namespace pvst;

namespace {

Objective bowl(const Image& target, std::vector<Image>* visited = nullptr) {
  return [target, visited](const Image& x) {
    if (visited) visited->push_back(x);
    Evaluation e;
    e.grad = PixelGrid(x.height(), x.width(), 3);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = x.values()[k] - target.values()[k];
      e.value += d * d;
      e.grad.values()[k] = 2.0 * d;
    }
    return e;
  };
}

}  // namespace

TEST_CASE("Adam minimises a convex bowl") {
  Rng rng(1);
  const Image target = oracle::random_image(6, 6, rng);
  const Image init = oracle::random_image(6, 6, rng);
  OptimizerParams p;
  p.method = Method::kAdam;
  p.iterations = 500;
  const MinimizeResult r = minimize(bowl(target), init, p);
  CHECK(r.trace.values.back() < 1e-4 * r.trace.values.front());
  CHECK(static_cast<int>(r.trace.values.size()) == r.trace.iterations);
}

TEST_CASE("L-BFGS minimises a convex bowl") {
  Rng rng(2);
  const Image target = oracle::random_image(5, 5, rng);
  OptimizerParams p;
  p.method = Method::kLbfgs;
  p.iterations = 100;
  const MinimizeResult r = minimize(bowl(target), Image(5, 5, 0.5), p);
  CHECK(r.trace.values.back() < 1e-8 * r.trace.values.front());
}

TEST_CASE("every iterate stays inside the box") {
  Rng rng(3);
  // Target outside [0,1] pulls iterates against the bounds.
  std::vector<double> t(48);
  for (double& v : t) v = rng.uniform();
  Image target(4, 4, t);
  for (Method m : {Method::kAdam, Method::kLbfgs}) {
    std::vector<Image> visited;
    const Objective pull = [&](const Image& x) {
      visited.push_back(x);
      Evaluation e;
      e.grad = PixelGrid(4, 4, 3);
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x.values()[k] - (k % 2 ? 1.5 : -0.5);
        e.value += d * d;
        e.grad.values()[k] = 2 * d;
      }
      return e;
    };
    OptimizerParams p;
    p.method = m;
    p.iterations = 60;
    minimize(pull, target, p);
    for (const Image& x : visited) {
      for (double v : x.values()) CHECK((v >= 0.0 && v <= 1.0));
    }
  }
}

TEST_CASE("starting at the minimum stops early") {
  Rng rng(4);
  const Image target = oracle::random_image(4, 4, rng);
  for (Method m : {Method::kAdam, Method::kLbfgs}) {
    OptimizerParams p;
    p.method = m;
    const MinimizeResult r = minimize(bowl(target), target, p);
    CHECK(r.trace.stop == StopReason::kConverged);
    CHECK(r.trace.iterations == p.patience + 1);
    CHECK(r.image == target);
  }
}

TEST_CASE("runs are deterministic") {
  GradcheckFixture fx(8, 3);
  for (Method m : {Method::kAdam, Method::kLbfgs}) {
    OptimizerParams p;
    p.method = m;
    p.iterations = 15;
    const MinimizeResult a = minimize(fx.objective("total"), fx.output, p);
    const MinimizeResult b = minimize(fx.objective("total"), fx.output, p);
    CHECK(a.trace.values == b.trace.values);
    CHECK(a.image == b.image);
  }
}

TEST_CASE("non-finite objective is reported with the iteration") {
  int calls = 0;
  const Objective bad = [&](const Image& x) {
    Evaluation e{1.0, PixelGrid(x.height(), x.width(), 3, 0.1), {}};
    if (++calls == 3) e.value = NAN;
    return e;
  };
  OptimizerParams p;
  p.method = Method::kAdam;
  try {
    minimize(bad, Image(2, 2, 0.5), p);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNonFinite);
    CHECK(std::string(e.what()).find("iteration 2") != std::string::npos);
  }
  calls = 0;
  p.method = Method::kLbfgs;
  CHECK_THROWS_AS(minimize(bad, Image(2, 2, 0.5), p), Error);
}

TEST_CASE("parameter validation") {
  OptimizerParams p;
  p.step_size = 0.0;
  CHECK_THROWS_AS(validate(p), Error);
  p = OptimizerParams{};
  p.beta1 = 1.0;
  CHECK_THROWS_AS(validate(p), Error);
  p = OptimizerParams{};
  p.iterations = 0;
  CHECK_THROWS_AS(validate(p), Error);
}

TEST_CASE("finite-difference harness") {
  Rng rng(5);
  const Image target = oracle::random_image(5, 5, rng);
  const Image point = oracle::random_image(5, 5, rng, 0.1, 0.9);
  CHECK(finite_diff_check(bowl(target), point, 1e-4) < 1e-8);

  GradcheckFixture fx(8, 9);
  CHECK(finite_diff_check(fx.objective("total"), fx.output, kGradcheckStep) < 1e-4);

  const Objective total = fx.objective("total");
  const Objective doubled = [&](const Image& x) {
    Evaluation e = total(x);
    e.grad *= 2.0;
    return e;
  };
  CHECK(finite_diff_check(doubled, fx.output, kGradcheckStep) > 0.3);
}

TEST_CASE("trace CSV") {
  pvst::testing::TempDir dir;
  GradcheckFixture fx(8, 2);
  OptimizerParams p;
  p.iterations = 12;
  p.log_every = 5;
  const MinimizeResult r = minimize(fx.objective("total"), fx.output, p);
  std::vector<int> logged;
  for (const auto& [k, b] : r.trace.breakdowns) logged.push_back(k);
  CHECK(logged == std::vector<int>{0, 5, 10, 11});
  write_trace_csv(r.trace, (dir / "t.csv").string());
  std::ifstream f(dir / "t.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "iteration,total,content,style,photorealism,temporal");
  int rows = 0;
  for (std::string line; std::getline(f, line);) ++rows;
  CHECK(rows == 4);
}
