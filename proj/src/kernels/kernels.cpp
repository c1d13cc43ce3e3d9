#include "e2s/kernels/kernels.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace e2s::kernels {

namespace {

// Steady-state section states for a unit step, scaled by the DC gain of the
// sections in front of each one.
std::vector<std::pair<double, double>> step_states(std::span<const Biquad> sos) {
  std::vector<std::pair<double, double>> zi;
  zi.reserve(sos.size());
  double scale = 1.0;
  for (const Biquad& s : sos) {
    const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double z2 = s.b2 - s.a2 * gain;
    const double z1 = s.b1 - s.a1 * gain + z2;
    zi.emplace_back(z1 * scale, z2 * scale);
    scale *= gain;
  }
  return zi;
}

void sosfilt(std::span<const Biquad> sos,
             const std::vector<std::pair<double, double>>& zi,
             std::vector<double>& x) {
  if (x.empty()) return;
  const double x0 = x.front();
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const Biquad& s = sos[k];
    double z1 = zi[k].first * x0;
    double z2 = zi[k].second * x0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

// reverse -> filter -> reverse -> filter
void forward_backward(std::span<const Biquad> sos,
                      const std::vector<std::pair<double, double>>& zi,
                      std::vector<double>& x) {
  sosfilt(sos, zi, x);
  std::reverse(x.begin(), x.end());
  sosfilt(sos, zi, x);
  std::reverse(x.begin(), x.end());
}

fftw_plan r2c_plan(int n) {
  static std::mutex mutex;
  static std::map<int, fftw_plan> plans;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  std::vector<double> in(static_cast<std::size_t>(n));
  std::vector<fftw_complex> out(static_cast<std::size_t>(n / 2 + 1));
  fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.data(), out.data(),
                                        FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (plan == nullptr) throw std::runtime_error("fftw planning failed");
  plans.emplace(n, plan);
  return plan;
}

void stft_frame(fftw_plan plan, std::span<const double> padded,
                std::span<const double> window, int hop, std::size_t frame,
                std::vector<double>& buf, std::vector<fftw_complex>& spec,
                Matrix& out) {
  const std::size_t n_fft = window.size();
  const std::size_t offset = frame * static_cast<std::size_t>(hop);
  for (std::size_t i = 0; i < n_fft; ++i) buf[i] = padded[offset + i] * window[i];
  fftw_execute_dft_r2c(plan, buf.data(), spec.data());
  for (std::size_t k = 0; k < out.rows(); ++k) {
    out(k, frame) = std::hypot(spec[k][0], spec[k][1]);
  }
}

// Sinc taps around input position t. They depend only on t, so one set
// serves every row.
struct Taps {
  std::ptrdiff_t lo = 0;
  std::vector<double> w;
  double norm = 0.0;
};

void resample_taps(std::size_t size, double t, const SincKernel& kernel, Taps& taps) {
  const auto n = static_cast<std::ptrdiff_t>(size);
  taps.lo = std::max<std::ptrdiff_t>(
      0, static_cast<std::ptrdiff_t>(std::ceil(t - kernel.half_width)));
  const auto hi = std::min<std::ptrdiff_t>(
      n - 1, static_cast<std::ptrdiff_t>(std::floor(t + kernel.half_width)));
  taps.w.clear();
  taps.norm = 0.0;
  for (std::ptrdiff_t i = taps.lo; i <= hi; ++i) {
    taps.w.push_back(sinc_weight(kernel, t - static_cast<double>(i)));
    taps.norm += taps.w.back();
  }
}

double apply_taps(std::span<const double> x, const Taps& taps) {
  double acc = 0.0;
  for (std::size_t k = 0; k < taps.w.size(); ++k) {
    acc += taps.w[k] * x[static_cast<std::size_t>(taps.lo) + k];
  }
  return taps.norm != 0.0 ? acc / taps.norm : 0.0;
}

std::vector<double> dct_table(std::size_t n, std::size_t first, std::size_t count) {
  std::vector<double> table(count * n);
  const double dn = static_cast<double>(n);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t k = first + r;
    const double scale = k == 0 ? std::sqrt(1.0 / dn) : std::sqrt(2.0 / dn);
    for (std::size_t i = 0; i < n; ++i) {
      table[r * n + i] =
          scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                           (2.0 * static_cast<double>(i) + 1.0) / (2.0 * dn));
    }
  }
  return table;
}

double s4_point(std::span<const std::complex<double>> coeff,
                std::span<const std::complex<double>> dt_a, std::size_t h,
                std::size_t modes, std::size_t l) {
  std::complex<double> acc{0.0, 0.0};
  const double step = static_cast<double>(l);
  for (std::size_t n = 0; n < modes; ++n) {
    acc += coeff[h * modes + n] * std::exp(dt_a[h * modes + n] * step);
  }
  return 2.0 * acc.real();
}

// Samples until the slowest pole has decayed to 1e-3, at least the usual
// 3 * (2 * sections + 1).
std::size_t settle_length(std::span<const Biquad> sos) {
  double r_max = 0.0;
  for (const Biquad& s : sos) {
    const double disc = s.a1 * s.a1 - 4.0 * s.a2;
    double r;
    if (disc < 0.0) {
      r = std::sqrt(std::max(0.0, s.a2));
    } else {
      const double q = std::sqrt(disc);
      r = 0.5 * std::max(std::abs(-s.a1 + q), std::abs(-s.a1 - q));
    }
    r_max = std::max(r_max, r);
  }
  std::size_t len = 3 * (2 * sos.size() + 1);
  if (r_max > 0.0 && r_max < 1.0) {
    len = std::max(len, static_cast<std::size_t>(std::ceil(std::log(1e-3) / std::log(r_max))));
  }
  return len;
}

}  // namespace

void sosfiltfilt(std::span<const Biquad> sos, std::span<double> x, Extension mode) {
  const std::size_t n = x.size();
  if (n == 0 || sos.empty()) return;
  const std::size_t padlen = std::min(settle_length(sos), n - 1);

  std::vector<double> ext(n + 2 * padlen);
  const bool odd = mode == Extension::Odd;
  for (std::size_t i = 0; i < padlen; ++i) {
    ext[i] = odd ? 2.0 * x[0] - x[padlen - i] : x[padlen - i];
    ext[n + padlen + i] = odd ? 2.0 * x[n - 1] - x[n - 2 - i] : x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(padlen));

  const auto zi = step_states(sos);

  // Average of forward-backward and backward-forward passes: reversing the
  // input reverses the output exactly, including the edge transients.
  std::vector<double> fb = ext;
  forward_backward(sos, zi, fb);
  std::vector<double> bf(ext.rbegin(), ext.rend());
  forward_backward(sos, zi, bf);
  std::reverse(bf.begin(), bf.end());

  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 0.5 * (fb[padlen + i] + bf[padlen + i]);
  }
}

double sinc_weight(const SincKernel& k, double t) {
  const double r = t / k.half_width;
  if (std::abs(r) >= 1.0) return 0.0;
  const double arg = std::numbers::pi * k.cutoff * t;
  const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
  const double window = std::cyl_bessel_i(0.0, k.beta * std::sqrt(1.0 - r * r)) /
                        std::cyl_bessel_i(0.0, k.beta);
  return k.cutoff * sinc * window;
}

namespace serial {

void sosfiltfilt_rows(std::span<const Biquad> sos, Matrix& rows, Extension ext) {
  for (std::size_t r = 0; r < rows.rows(); ++r) sosfiltfilt(sos, rows.row(r), ext);
}

void resample_rows(const Matrix& in, double step, const SincKernel& kernel,
                   Matrix& out) {
  Taps taps;
  for (std::size_t m = 0; m < out.cols(); ++m) {
    resample_taps(in.cols(), static_cast<double>(m) * step, kernel, taps);
    for (std::size_t r = 0; r < in.rows(); ++r) out(r, m) = apply_taps(in.row(r), taps);
  }
}

void stft_magnitude(std::span<const double> padded, std::span<const double> window,
                    int hop, Matrix& out) {
  const int n_fft = static_cast<int>(window.size());
  fftw_plan plan = r2c_plan(n_fft);
  std::vector<double> buf(window.size());
  std::vector<fftw_complex> spec(window.size() / 2 + 1);
  for (std::size_t f = 0; f < out.cols(); ++f) {
    stft_frame(plan, padded, window, hop, f, buf, spec, out);
  }
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double w = a(i, k);
      if (w == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += w * src[j];
    }
  }
}

void dct2_ortho_columns(const Matrix& in, std::size_t first, Matrix& out) {
  const std::size_t n = in.rows();
  const auto table = dct_table(n, first, out.rows());
  for (std::size_t f = 0; f < in.cols(); ++f) {
    for (std::size_t r = 0; r < out.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += table[r * n + i] * in(i, f);
      out(r, f) = acc;
    }
  }
}

void column_distances(const Matrix& a, const Matrix& b, std::span<double> out) {
  for (std::size_t f = 0; f < a.cols(); ++f) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.rows(); ++k) {
      const double d = a(k, f) - b(k, f);
      acc += d * d;
    }
    out[f] = std::sqrt(acc);
  }
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) return std::nan("");
  return cov / std::sqrt(va * vb);
}

void s4_vandermonde(std::span<const std::complex<double>> coeff,
                    std::span<const std::complex<double>> dt_a, std::size_t modes,
                    Matrix& out) {
  for (std::size_t h = 0; h < out.rows(); ++h) {
    for (std::size_t l = 0; l < out.cols(); ++l) {
      out(h, l) = s4_point(coeff, dt_a, h, modes, l);
    }
  }
}

}  // namespace serial

namespace parallel {

void sosfiltfilt_rows(std::span<const Biquad> sos, Matrix& rows, Extension ext) {
  const auto n = static_cast<std::ptrdiff_t>(rows.rows());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    sosfiltfilt(sos, rows.row(static_cast<std::size_t>(r)), ext);
  }
}

void resample_rows(const Matrix& in, double step, const SincKernel& kernel,
                   Matrix& out) {
  const auto rows = static_cast<std::ptrdiff_t>(in.rows());
  const auto cols = static_cast<std::ptrdiff_t>(out.cols());
#pragma omp parallel
  {
    Taps taps;
#pragma omp for schedule(static)
    for (std::ptrdiff_t m = 0; m < cols; ++m) {
      const auto um = static_cast<std::size_t>(m);
      resample_taps(in.cols(), static_cast<double>(m) * step, kernel, taps);
      for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const auto ur = static_cast<std::size_t>(r);
        out(ur, um) = apply_taps(in.row(ur), taps);
      }
    }
  }
}

void stft_magnitude(std::span<const double> padded, std::span<const double> window,
                    int hop, Matrix& out) {
  const int n_fft = static_cast<int>(window.size());
  fftw_plan plan = r2c_plan(n_fft);
  const auto frames = static_cast<std::ptrdiff_t>(out.cols());
#pragma omp parallel
  {
    std::vector<double> buf(window.size());
    std::vector<fftw_complex> spec(window.size() / 2 + 1);
#pragma omp for schedule(static)
    for (std::ptrdiff_t f = 0; f < frames; ++f) {
      stft_frame(plan, padded, window, hop, static_cast<std::size_t>(f), buf, spec, out);
    }
  }
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto dst = out.row(i);
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double w = a(i, k);
      if (w == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += w * src[j];
    }
  }
}

void dct2_ortho_columns(const Matrix& in, std::size_t first, Matrix& out) {
  const std::size_t n = in.rows();
  const auto table = dct_table(n, first, out.rows());
  const auto cols = static_cast<std::ptrdiff_t>(in.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ff = 0; ff < cols; ++ff) {
    const auto f = static_cast<std::size_t>(ff);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += table[r * n + i] * in(i, f);
      out(r, f) = acc;
    }
  }
}

void column_distances(const Matrix& a, const Matrix& b, std::span<double> out) {
  const auto cols = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ff = 0; ff < cols; ++ff) {
    const auto f = static_cast<std::size_t>(ff);
    double acc = 0.0;
    for (std::size_t k = 0; k < a.rows(); ++k) {
      const double d = a(k, f) - b(k, f);
      acc += d * d;
    }
    out[f] = std::sqrt(acc);
  }
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<std::ptrdiff_t>(a.size());
  double sa = 0.0, sb = 0.0;
#pragma omp parallel for reduction(+ : sa, sb) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    sa += a[static_cast<std::size_t>(i)];
    sb += b[static_cast<std::size_t>(i)];
  }
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
#pragma omp parallel for reduction(+ : cov, va, vb) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double da = a[static_cast<std::size_t>(i)] - ma;
    const double db = b[static_cast<std::size_t>(i)] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) return std::nan("");
  return cov / std::sqrt(va * vb);
}

void s4_vandermonde(std::span<const std::complex<double>> coeff,
                    std::span<const std::complex<double>> dt_a, std::size_t modes,
                    Matrix& out) {
  const auto rows = static_cast<std::ptrdiff_t>(out.rows());
  const auto cols = static_cast<std::ptrdiff_t>(out.cols());
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t h = 0; h < rows; ++h) {
    for (std::ptrdiff_t l = 0; l < cols; ++l) {
      out(static_cast<std::size_t>(h), static_cast<std::size_t>(l)) =
          s4_point(coeff, dt_a, static_cast<std::size_t>(h), modes,
                   static_cast<std::size_t>(l));
    }
  }
}

}  // namespace parallel

}  // namespace e2s::kernels
