#include "nn.hpp"

#include <Eigen/QR>

#include <cmath>
#include <istream>
#include <ostream>

namespace dxs {

void orthogonal_init(MatX& w, double gain, Rng& rng) {
  const Eigen::Index rows = w.rows();
  const Eigen::Index cols = w.cols();
  const Eigen::Index major = std::max(rows, cols);
  const Eigen::Index minor = std::min(rows, cols);

  MatX gaussian(major, minor);
  for (Eigen::Index r = 0; r < major; ++r) {
    for (Eigen::Index c = 0; c < minor; ++c) gaussian(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<MatX> qr(gaussian);
  MatX q = qr.householderQ() * MatX::Identity(major, minor);
  const MatX r_mat = qr.matrixQR().topRows(minor).triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < minor; ++c) {
    if (r_mat(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  w = gain * (rows >= cols ? q : MatX(q.transpose()));
}

LinearLayer::LinearLayer(int input_dim, int output_dim, double gain, Rng& rng) {
  weight.value.resize(input_dim, output_dim);
  orthogonal_init(weight.value, gain, rng);
  weight.zero_grad();
  bias.value = MatX::Zero(1, output_dim);
  bias.zero_grad();
}

MatX LinearLayer::forward(const MatX& input, bool cache) {
  if (input.cols() != weight.value.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "linear layer input width mismatch");
  }
  if (cache) input_cache_ = input;
  return (input * weight.value).rowwise() + bias.value.row(0);
}

MatX LinearLayer::backward(const MatX& grad_output) {
  if (input_cache_.rows() != grad_output.rows()) {
    throw Error(ErrorCode::Internal, "linear backward without matching cached forward");
  }
  weight.grad.noalias() += input_cache_.transpose() * grad_output;
  bias.grad.row(0) += grad_output.colwise().sum();
  return grad_output * weight.value.transpose();
}

MatX elu(const MatX& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

MatX elu_backward(const MatX& grad_output, const MatX& output) {
  return grad_output.array() * output.unaryExpr([](double y) {
                                       return y > 0.0 ? 1.0 : y + 1.0;
                                     }).array();
}

Mlp::Mlp(int input_dim, const std::vector<int>& hidden, int output_dim, double head_gain,
         Rng& rng)
    : input_dim_(input_dim), output_dim_(output_dim) {
  int width = input_dim;
  for (int h : hidden) {
    layers_.emplace_back(width, h, std::sqrt(2.0), rng);
    width = h;
  }
  layers_.emplace_back(width, output_dim, head_gain, rng);
}

MatX Mlp::forward(const MatX& input, bool cache) {
  if (cache) activation_cache_.clear();
  MatX h = input;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    h = elu(layers_[i].forward(h, cache));
    if (cache) activation_cache_.push_back(h);
  }
  MatX out = layers_.back().forward(h, cache);
  if (!out.allFinite()) {
    throw Error(ErrorCode::NonFinite, "network activations overflowed");
  }
  return out;
}

MatX Mlp::backward(const MatX& grad_output) {
  MatX g = layers_.back().backward(grad_output);
  for (std::size_t i = layers_.size() - 1; i-- > 0;) {
    g = elu_backward(g, activation_cache_[i]);
    g = layers_[i].backward(g);
  }
  return g;
}

std::vector<Param*> Mlp::params() {
  std::vector<Param*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

double global_grad_norm(const std::vector<Param*>& params) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<Param*>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Param* p : params) p->grad *= scale;
  }
  return norm;
}

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<Param*>& params, double lr) {
  if (m_.empty()) {
    for (const Param* p : params) {
      m_.emplace_back(MatX::Zero(p->value.rows(), p->value.cols()));
      v_.emplace_back(MatX::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) {
    throw Error(ErrorCode::DimensionMismatch, "optimizer state does not match parameter list");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param* p = params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p->grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    const MatX m_hat = m_[i] / bc1;
    const MatX v_hat = v_[i] / bc2;
    p->value.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps_);
  }
}

void Adam::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
}

void write_matrix(std::ostream& out, const MatX& m) {
  const int64_t rows = m.rows();
  const int64_t cols = m.cols();
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

MatX read_matrix(std::istream& in) {
  int64_t rows = 0;
  int64_t cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in || rows < 0 || cols < 0 || rows > (1 << 24) || cols > (1 << 24)) {
    throw Error(ErrorCode::Io, "corrupt matrix header in checkpoint stream");
  }
  MatX m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(r, c) = v;
    }
  }
  if (!in) throw Error(ErrorCode::Io, "truncated matrix payload in checkpoint stream");
  return m;
}

}  // namespace dxs
