#pragma once

// Minimal dense-layer toolkit on Eigen: layers keep no activations, callers
// hold the forward tape and hand it back to backward().

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace semap::nn {

using Matrix = Eigen::MatrixXd;

struct ParamRef {
  std::string name;
  Matrix* value;
  Matrix* grad;
};

/// y = x W + b with samples as rows.
struct Linear {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
  Matrix grad_weight;
  Matrix grad_bias;

  Linear() = default;
  Linear(int in, int out)
      : weight(Matrix::Zero(in, out)),
        bias(Matrix::Zero(1, out)),
        grad_weight(Matrix::Zero(in, out)),
        grad_bias(Matrix::Zero(1, out)) {}

  int in() const { return static_cast<int>(weight.rows()); }
  int out() const { return static_cast<int>(weight.cols()); }

  Matrix forward(const Matrix& x) const {
    Matrix y = x * weight;
    y.rowwise() += bias.row(0);
    return y;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy) {
    grad_weight.noalias() += x.transpose() * dy;
    grad_bias += dy.colwise().sum();
    return dy * weight.transpose();
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", &weight, &grad_weight});
    out.push_back({prefix + ".bias", &bias, &grad_bias});
  }
};

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

inline Matrix relu_backward(const Matrix& pre, const Matrix& dy) {
  return (pre.array() > 0.0).select(dy, 0.0);
}

/// Orthogonal initialisation scaled by `gain`, zero bias.
template <typename Rng>
void orthogonal_init(Linear& layer, double gain, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int rows = layer.in(), cols = layer.out();
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  Matrix a(big, small);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < small; ++j) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(big, small);
  // Sign fix makes the distribution uniform over orthogonal matrices.
  Matrix r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  layer.weight = gain * (rows >= cols ? q : Matrix(q.transpose()));
  layer.bias.setZero();
}

inline void zero_grad(std::vector<ParamRef>& params) {
  for (auto& p : params) p.grad->setZero();
}

inline double grad_norm(const std::vector<ParamRef>& params) {
  double sq = 0;
  for (const auto& p : params) sq += p.grad->squaredNorm();
  return std::sqrt(sq);
}

/// Scales gradients so their global norm is at most max_norm.
inline void clip_grad_norm(std::vector<ParamRef>& params, double max_norm) {
  double norm = grad_norm(params);
  if (max_norm > 0 && norm > max_norm) {
    double scale = max_norm / (norm + 1e-12);
    for (auto& p : params) *p.grad *= scale;
  }
}

class Adam {
 public:
  explicit Adam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double learning_rate() const { return lr_; }
  long steps() const { return step_; }

  /// Descends along the stored gradients.
  void step(std::vector<ParamRef>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
        v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (size_t i = 0; i < params.size(); ++i) {
      const Matrix& g = *params[i].grad;
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
      params[i].value->array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

  // Moment access for checkpoints.
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(long s) { step_ = s; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace semap::nn
