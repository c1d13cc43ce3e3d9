#pragma once

// Data-parallel inner loops shared by the DSP front end, the evaluation
// metrics and the S4 kernel check. Every kernel exists twice:
//
//   kernels::serial::*    plain loops, kept as the reference for tests
//   kernels::parallel::*  OpenMP version used by the library
//
// Both produce identical results for the row/column-parallel kernels; the
// reductions (pearson) may differ in the last bits when more than one
// thread is used.

#include <complex>
#include <cstddef>
#include <span>

#include "e2s/matrix.hpp"

namespace e2s::kernels {

// Second-order section in transposed direct form II, a0 normalised to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

// Kaiser-windowed sinc interpolator, in units of input samples.
struct SincKernel {
  double cutoff = 1.0;      // relative to the input Nyquist rate, (0, 1]
  double half_width = 16.0; // taps on either side of the output instant
  double beta = 8.6;        // Kaiser shape
};

// How the signal is continued past its ends before filtering. Odd keeps
// value and slope continuous (best for narrow band-stop sections); even has
// no level step, which slow high-pass sections would otherwise ring on.
enum class Extension { Odd, Even };

// Filters one 1-D signal in place, zero phase. The pad runs until the
// slowest pole has decayed to 1e-3. Used by both variants of
// sosfiltfilt_rows.
void sosfiltfilt(std::span<const Biquad> sos, std::span<double> x,
                 Extension ext = Extension::Odd);

// Weight of the interpolator at distance `t` input samples.
double sinc_weight(const SincKernel& k, double t);

namespace serial {

// Zero-phase cascade filtering of every row of `rows`, in place.
void sosfiltfilt_rows(std::span<const Biquad> sos, Matrix& rows,
                      Extension ext = Extension::Odd);

// Band-limited resampling of each row to out.cols() samples; output sample m
// sits at input position m * step.
void resample_rows(const Matrix& in, double step, const SincKernel& kernel,
                   Matrix& out);

// |FFT| of hop-spaced windowed frames of an already padded signal. The FFT
// size is window.size(); out must be [n_fft/2+1 x n_frames].
void stft_magnitude(std::span<const double> padded,
                    std::span<const double> window, int hop, Matrix& out);

// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);

// Orthonormal DCT-II down each column, keeping coefficients
// [first, first + out.rows()).
void dct2_ortho_columns(const Matrix& in, std::size_t first, Matrix& out);

// Euclidean distance between matching columns of a and b.
void column_distances(const Matrix& a, const Matrix& b, std::span<double> out);

// Pearson correlation; NaN when either input has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

// out[h, l] = 2 Re sum_n coeff[h, n] * exp(dt_a[h, n] * l), for l < out.cols().
void s4_vandermonde(std::span<const std::complex<double>> coeff,
                    std::span<const std::complex<double>> dt_a,
                    std::size_t modes, Matrix& out);

}  // namespace serial

// Same contracts as serial::.
namespace parallel {

void sosfiltfilt_rows(std::span<const Biquad> sos, Matrix& rows,
                      Extension ext = Extension::Odd);
void resample_rows(const Matrix& in, double step, const SincKernel& kernel,
                   Matrix& out);
void stft_magnitude(std::span<const double> padded,
                    std::span<const double> window, int hop, Matrix& out);
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void dct2_ortho_columns(const Matrix& in, std::size_t first, Matrix& out);
void column_distances(const Matrix& a, const Matrix& b, std::span<double> out);
double pearson(std::span<const double> a, std::span<const double> b);
void s4_vandermonde(std::span<const std::complex<double>> coeff,
                    std::span<const std::complex<double>> dt_a,
                    std::size_t modes, Matrix& out);

}  // namespace parallel

}  // namespace e2s::kernels
