#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "pvst/image.hpp"
#include "pvst/network.hpp"
#include "pvst/rng.hpp"

// Independent brute-force reference implementations. They share no code with
// the library beyond its plain data types.
namespace pvst::oracle {

Image random_image(int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0);

// Dense Laplacian: loops over interior windows and every pixel pair, inverting
// the regularised covariance with Eigen.
Eigen::MatrixXd dense_laplacian(const Image& img, double eps, int radius);

// Channel-major pixel vector of channel c.
Eigen::VectorXd channel_vector(const Image& img, int c);

// Direct nested-loop convolution network; returns every relu output as
// [channel][y][x] flattened, keyed by layer name.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;
  double& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
};
std::map<std::string, Tensor> naive_forward(const NetworkWeights& net, const Image& img);

// 1x1 kernels copying input channel 0 through every layer, one channel wide.
NetworkWeights identity_network();

// Plain Gram matrix of the features (no masking).
Eigen::MatrixXd plain_gram(const Tensor& t);

// Gatys-form loss: sum_l alpha_l/(2 C H W) ||F - P||^2 +
// tau sum_l beta_l/(2 (C H W)^2) ||G(F) - G(S)||^2.
double gatys_loss(const NetworkWeights& net, const Image& output, const Image& content,
                  const Image& style, const std::map<std::string, double>& alpha,
                  const std::map<std::string, double>& beta, double tau);

}  // namespace pvst::oracle
