#include "e2s/nn/s4.hpp"

#include <cmath>
#include <stdexcept>

namespace e2s::nn {

torch::Tensor legs_diagonal_spectrum(int64_t state_dim) {
  if (state_dim < 2 || state_dim % 2 != 0) {
    throw std::invalid_argument("S4 state dimension must be even and >= 2");
  }
  // A + P P^T of HiPPO-LegS = -1/2 I + skew-symmetric part.
  auto s = torch::zeros({state_dim, state_dim}, torch::kDouble);
  auto acc = s.accessor<double, 2>();
  for (int64_t n = 0; n < state_dim; ++n) {
    for (int64_t k = 0; k < state_dim; ++k) {
      const double g = std::sqrt((2.0 * n + 1.0) * (2.0 * k + 1.0));
      if (n > k) acc[n][k] = -0.5 * g;
      else if (n < k) acc[n][k] = 0.5 * g;
      else acc[n][k] = -0.5;
    }
  }
  auto eig = at::linalg_eigvals(s);
  auto imag = torch::imag(eig);
  auto order = torch::argsort(imag, 0, /*descending=*/false);
  auto sorted = eig.index_select(0, order);
  // Upper half of the sorted spectrum holds the positive-frequency modes.
  return sorted.narrow(0, state_dim / 2, state_dim / 2).contiguous();
}

S4KernelImpl::S4KernelImpl(int64_t channels, int64_t state_dim, double dt_min,
                           double dt_max)
    : channels_(channels), modes_(state_dim / 2) {
  const auto spectrum = legs_diagonal_spectrum(state_dim);
  const auto re = torch::real(spectrum).to(torch::kFloat);
  const auto im = torch::imag(spectrum).to(torch::kFloat);

  log_dt = register_parameter(
      "log_dt", torch::rand({channels}) * (std::log(dt_max) - std::log(dt_min)) +
                    std::log(dt_min));
  a_real_log = register_parameter(
      "a_real_log", torch::log(-re).unsqueeze(0).repeat({channels, 1}).contiguous());
  a_imag = register_parameter("a_imag", im.unsqueeze(0).repeat({channels, 1}).contiguous());
  auto b_init = torch::zeros({channels, modes_, 2});
  b_init.select(2, 0).fill_(1.0);
  b = register_parameter("b", b_init);
  c = register_parameter("c", torch::randn({channels, modes_, 2}) * std::sqrt(0.5));
}

torch::Tensor S4KernelImpl::continuous_a() const {
  return torch::complex(-torch::exp(a_real_log), a_imag);
}

torch::Tensor S4KernelImpl::dt() const { return torch::exp(log_dt); }

S4KernelImpl::Discrete S4KernelImpl::discretize() const {
  const auto a = continuous_a();
  const auto dt_a = a * dt().unsqueeze(1);
  const auto da = torch::exp(dt_a);
  const auto db = (da - 1.0) / a * torch::view_as_complex(b.contiguous());
  return {da, db, torch::view_as_complex(c.contiguous())};
}

torch::Tensor S4KernelImpl::forward(int64_t length) const {
  const auto a = continuous_a();
  const auto dt_a = a * dt().unsqueeze(1);
  const auto db = (torch::exp(dt_a) - 1.0) / a * torch::view_as_complex(b.contiguous());
  const auto coeff = torch::view_as_complex(c.contiguous()) * db;
  const auto steps = torch::arange(length, log_dt.options());
  const auto powers = torch::exp(dt_a.unsqueeze(-1) * steps);  // [H, M, L]
  return 2.0 * torch::real((coeff.unsqueeze(-1) * powers).sum(1));
}

torch::Tensor causal_convolution(const torch::Tensor& u, const torch::Tensor& kernel) {
  const int64_t length = u.size(-1);
  const int64_t n = 2 * length;
  const auto uf = torch::fft::rfft(u, n);
  const auto kf = torch::fft::rfft(kernel.narrow(-1, 0, length), n);
  return torch::fft::irfft(uf * kf, n).narrow(-1, 0, length);
}

S4BlockImpl::S4BlockImpl(int64_t channels, int64_t state_dim, double dt_min,
                         double dt_max, double dropout) {
  kernel = register_module("kernel", S4Kernel(channels, state_dim, dt_min, dt_max));
  skip_ = register_parameter("skip", torch::randn({channels}));
  output_ = register_module(
      "output", torch::nn::Conv1d(torch::nn::Conv1dOptions(channels, 2 * channels, 1)));
  dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
  norm_ = register_module("norm", ChannelLayerNorm(channels));
}

torch::Tensor S4BlockImpl::ssm(const torch::Tensor& u) const {
  return causal_convolution(u, kernel->forward(u.size(-1)));
}

torch::Tensor S4BlockImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const auto u = x * mask;
  auto y = ssm(u) + skip_.view({1, -1, 1}) * u;
  y = torch::glu(output_(y), 1);
  y = dropout_(y);
  return norm_(x + y) * mask;
}

}  // namespace e2s::nn
