#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace sarlora::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Single-layer LSTM over column batches. Parameters live in a caller-owned
// flat buffer laid out as [W_x (4h x in) | W_h (4h x h) | b (4h)], column
// major, gate rows ordered input, forget, cell, output.
struct LstmShape {
  int input = 0;
  int hidden = 0;

  std::size_t param_count() const {
    const auto g = static_cast<std::size_t>(4 * hidden);
    return g * static_cast<std::size_t>(input) + g * static_cast<std::size_t>(hidden) + g;
  }
  std::size_t bias_offset() const { return param_count() - static_cast<std::size_t>(4 * hidden); }
};

struct LstmCache {
  std::vector<Matrix> x;       // inputs, one (in x B) per step
  std::vector<Matrix> gates;   // activated gates (4h x B)
  std::vector<Matrix> c;       // cell states, c[0] is the zero initial state
  std::vector<Matrix> tanh_c;  // tanh(c[t+1])
  std::vector<Matrix> h;       // hidden states, h[0] is the zero initial state

  const Matrix& final_hidden() const { return h.back(); }
};

// Runs the recurrence from a zero state. Takes ownership of the inputs.
void lstm_forward(const double* params, const LstmShape& shape, std::vector<Matrix> inputs, LstmCache& cache);

// Back-propagates dL/dh_final through the unrolled recurrence. Parameter
// gradients are accumulated into grad (same layout as params). When
// grad_inputs is non-null it receives dL/dx per step.
void lstm_backward(const double* params, const LstmShape& shape, const LstmCache& cache, const Matrix& grad_final,
                   double* grad, std::vector<Matrix>* grad_inputs);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace sarlora::nn
