#pragma once

#include "common.hpp"
#include "rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace dxs {

// One trainable tensor with its gradient accumulator (biases are 1-row
// matrices so every parameter shares the same shape machinery).
struct Param {
  MatX value;
  MatX grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Fills w with a gain-scaled orthogonal matrix (orthonormal rows or columns,
// whichever fit), deterministically from the generator.
void orthogonal_init(MatX& w, double gain, Rng& rng);

// Batched affine map y = x W + b; rows of x are samples.
class LinearLayer {
 public:
  LinearLayer(int input_dim, int output_dim, double gain, Rng& rng);

  MatX forward(const MatX& input, bool cache);
  // Accumulates parameter gradients from the cached input and returns the
  // gradient with respect to that input.
  MatX backward(const MatX& grad_output);

  Param weight;  // input_dim x output_dim
  Param bias;    // 1 x output_dim

 private:
  MatX input_cache_;
};

MatX elu(const MatX& x);
// dy/dx expressed through the forward output: 1 where y > 0, y + 1 elsewhere.
MatX elu_backward(const MatX& grad_output, const MatX& output);

// Feed-forward network with ELU between hidden layers and a linear head.
class Mlp {
 public:
  Mlp(int input_dim, const std::vector<int>& hidden, int output_dim, double head_gain, Rng& rng);

  // Throws NonFinite when activations overflow. cache=true records the
  // intermediates consumed by backward().
  MatX forward(const MatX& input, bool cache);
  MatX backward(const MatX& grad_output);

  std::vector<Param*> params();
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }

 private:
  int input_dim_ = 0;
  int output_dim_ = 0;
  std::vector<LinearLayer> layers_;
  std::vector<MatX> activation_cache_;  // ELU outputs per hidden layer
};

double global_grad_norm(const std::vector<Param*>& params);
// Scales all gradients so their global L2 norm is at most max_norm; returns
// the pre-clip norm.
double clip_grad_norm(const std::vector<Param*>& params, double max_norm);

// Adam optimizer over an explicit parameter list; state is positional, so the
// list must be stable across steps.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const std::vector<Param*>& params, double lr);
  void reset();

  int64_t steps_taken() const { return t_; }

 private:
  double beta1_;
  double beta2_;
  double eps_;
  int64_t t_ = 0;
  std::vector<MatX> m_;
  std::vector<MatX> v_;
};

// Raw little-endian parameter (de)serialization used by checkpoints.
void write_matrix(std::ostream& out, const MatX& m);
MatX read_matrix(std::istream& in);

}  // namespace dxs
