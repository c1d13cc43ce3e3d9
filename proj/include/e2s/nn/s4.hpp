#pragma once

#include <torch/torch.h>

#include "e2s/nn/layers.hpp"

namespace e2s::nn {

// Eigenvalues of the normal part of the HiPPO-LegS matrix of size
// state_dim, one from each conjugate pair (positive imaginary part),
// ordered by increasing frequency. Complex double, [state_dim / 2].
torch::Tensor legs_diagonal_spectrum(int64_t state_dim);

// Diagonal state-space model, one independent system per channel:
//
//   s'(t) = A s(t) + B u(t),   y(t) = 2 Re(C s(t))
//
// with complex diagonal A (Re A < 0), discretised by zero-order hold with a
// learned per-channel timescale dt. Only one mode of each conjugate pair is
// stored; the factor 2 Re(.) accounts for its partner.
class S4KernelImpl : public torch::nn::Module {
 public:
  S4KernelImpl(int64_t channels, int64_t state_dim, double dt_min, double dt_max);

  struct Discrete {
    torch::Tensor a;  // exp(dt A), complex [H, M]
    torch::Tensor b;  // (exp(dt A) - 1) / A * B
    torch::Tensor c;  // C
  };

  torch::Tensor continuous_a() const;  // complex [H, M]
  torch::Tensor dt() const;            // [H]
  Discrete discretize() const;

  // Convolution kernel K[h, l] = 2 Re sum_m C dB dA^l, [H, length].
  torch::Tensor forward(int64_t length) const;

  int64_t channels() const { return channels_; }
  int64_t modes() const { return modes_; }

  torch::Tensor log_dt;      // [H]
  torch::Tensor a_real_log;  // [H, M], Re A = -exp(a_real_log)
  torch::Tensor a_imag;      // [H, M]
  torch::Tensor b;           // [H, M, 2] (real, imag)
  torch::Tensor c;           // [H, M, 2]

 private:
  int64_t channels_;
  int64_t modes_;
};
TORCH_MODULE(S4Kernel);

// y[b, h, t] = sum_{j <= t} kernel[h, j] * u[b, h, t - j], computed by FFT.
torch::Tensor causal_convolution(const torch::Tensor& u, const torch::Tensor& kernel);

// S4 layer: state-space convolution plus skip term, GLU output projection,
// dropout, residual connection and layer norm.
class S4BlockImpl : public torch::nn::Module {
 public:
  S4BlockImpl(int64_t channels, int64_t state_dim, double dt_min, double dt_max,
              double dropout);

  // Kernel convolution only, without skip, activation or normalisation.
  torch::Tensor ssm(const torch::Tensor& u) const;

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);

  S4Kernel kernel{nullptr};

 private:
  torch::Tensor skip_;
  torch::nn::Conv1d output_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
  ChannelLayerNorm norm_{nullptr};
};
TORCH_MODULE(S4Block);

}  // namespace e2s::nn
