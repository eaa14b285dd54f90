#include "sarlora/lstm.hpp"

#include <cmath>
#include <stdexcept>

namespace sarlora::nn {

namespace {

// Weights are copied into Eigen-owned storage. Eigen's vectorized kernels
// pick their peeling from the operand address, so products over Maps of
// arbitrary heap buffers can differ in the last bit from run to run.
struct LstmWeights {
  Matrix wx;
  Matrix wh;
  Vector b;

  LstmWeights(const double* p, const LstmShape& s)
      : wx(Eigen::Map<const Matrix>(p, 4 * s.hidden, s.input)),
        wh(Eigen::Map<const Matrix>(p + 4 * s.hidden * s.input, 4 * s.hidden, s.hidden)),
        b(Eigen::Map<const Vector>(p + s.bias_offset(), 4 * s.hidden)) {}
};

}  // namespace

void lstm_forward(const double* params, const LstmShape& shape, std::vector<Matrix> inputs, LstmCache& cache) {
  const int hsz = shape.hidden;
  const LstmWeights w(params, shape);
  const Eigen::Index batch = inputs.empty() ? 0 : inputs.front().cols();
  const std::size_t steps = inputs.size();

  cache.x = std::move(inputs);
  cache.gates.resize(steps);
  cache.c.resize(steps + 1);
  cache.tanh_c.resize(steps);
  cache.h.resize(steps + 1);
  cache.c[0] = Matrix::Zero(hsz, batch);
  cache.h[0] = Matrix::Zero(hsz, batch);

  for (std::size_t t = 0; t < steps; ++t) {
    if (cache.x[t].rows() != shape.input || cache.x[t].cols() != batch)
      throw std::invalid_argument("lstm_forward: input shape mismatch");
    Matrix z = w.wx * cache.x[t];
    z.noalias() += w.wh * cache.h[t];
    z.colwise() += w.b;
    // i, f, o use the logistic function; the cell candidate uses tanh.
    z.topRows(2 * hsz) = z.topRows(2 * hsz).unaryExpr([](double v) { return sigmoid(v); });
    z.middleRows(2 * hsz, hsz) = z.middleRows(2 * hsz, hsz).array().tanh();
    z.bottomRows(hsz) = z.bottomRows(hsz).unaryExpr([](double v) { return sigmoid(v); });

    const auto i = z.topRows(hsz).array();
    const auto f = z.middleRows(hsz, hsz).array();
    const auto g = z.middleRows(2 * hsz, hsz).array();
    const auto o = z.bottomRows(hsz).array();
    cache.c[t + 1] = (f * cache.c[t].array() + i * g).matrix();
    cache.tanh_c[t] = cache.c[t + 1].array().tanh().matrix();
    cache.h[t + 1] = (o * cache.tanh_c[t].array()).matrix();
    cache.gates[t] = std::move(z);
  }
}

void lstm_backward(const double* params, const LstmShape& shape, const LstmCache& cache, const Matrix& grad_final,
                   double* grad, std::vector<Matrix>* grad_inputs) {
  const int hsz = shape.hidden;
  const LstmWeights w(params, shape);
  Matrix gwx = Matrix::Zero(4 * hsz, shape.input);
  Matrix gwh = Matrix::Zero(4 * hsz, hsz);
  Vector gb = Vector::Zero(4 * hsz);

  const std::size_t steps = cache.x.size();
  if (grad_inputs) grad_inputs->assign(steps, Matrix());

  Matrix dh = grad_final;
  Matrix dc = Matrix::Zero(hsz, grad_final.cols());
  Matrix dz(4 * hsz, grad_final.cols());
  for (std::size_t s = steps; s-- > 0;) {
    const auto& z = cache.gates[s];
    const auto i = z.topRows(hsz).array();
    const auto f = z.middleRows(hsz, hsz).array();
    const auto g = z.middleRows(2 * hsz, hsz).array();
    const auto o = z.bottomRows(hsz).array();
    const auto tc = cache.tanh_c[s].array();

    dc.array() += dh.array() * o * (1.0 - tc * tc);
    dz.topRows(hsz) = (dc.array() * g * i * (1.0 - i)).matrix();
    dz.middleRows(hsz, hsz) = (dc.array() * cache.c[s].array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * hsz, hsz) = (dc.array() * i * (1.0 - g * g)).matrix();
    dz.bottomRows(hsz) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dc.array() *= f;

    gwx.noalias() += dz * cache.x[s].transpose();
    gwh.noalias() += dz * cache.h[s].transpose();
    gb.noalias() += dz.rowwise().sum();
    if (grad_inputs) (*grad_inputs)[s].noalias() = w.wx.transpose() * dz;
    dh.noalias() = w.wh.transpose() * dz;
  }
  // Plain additions are exact regardless of alignment.
  Eigen::Map<Matrix>(grad, 4 * hsz, shape.input) += gwx;
  Eigen::Map<Matrix>(grad + 4 * hsz * shape.input, 4 * hsz, hsz) += gwh;
  Eigen::Map<Vector>(grad + shape.bias_offset(), 4 * hsz) += gb;
}

}  // namespace sarlora::nn
