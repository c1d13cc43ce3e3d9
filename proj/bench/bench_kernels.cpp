// Serial reference vs OpenMP kernels on sizes close to what the library
// sees (128-channel EEG, 22.05 kHz audio, 80-band mels).
//
//   build/bench/e2s_bench --benchmark_filter=Resample
//   OMP_NUM_THREADS=4 build/bench/e2s_bench

#include <benchmark/benchmark.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "e2s/kernels/kernels.hpp"

using namespace e2s;
namespace k = e2s::kernels;

namespace {

Matrix noise(std::size_t r, std::size_t c, uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (auto& v : m.data()) v = g(rng);
  return m;
}

const std::vector<k::Biquad> kSos{{0.0675, 0.135, 0.0675, -1.143, 0.413},
                                  {1.0, -2.0, 1.0, -1.99, 0.9901}};

template <auto Fn>
void Filter(benchmark::State& st) {
  const auto x = noise(128, static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    auto y = x;
    Fn(kSos, y, k::Extension::Odd);
    benchmark::DoNotOptimize(y.data().data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(x.data().size()));
}

template <auto Fn>
void Resample(benchmark::State& st) {
  // 1000 Hz -> 256 Hz
  const auto x = noise(128, static_cast<std::size_t>(st.range(0)));
  const double step = 1000.0 / 256.0;
  Matrix out(128, static_cast<std::size_t>(static_cast<double>(x.cols()) / step));
  const k::SincKernel kernel{256.0 / 1000.0, 16.0, 8.6};
  for (auto _ : st) {
    Fn(x, step, kernel, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}

template <auto Fn>
void Stft(benchmark::State& st) {
  const auto sig = noise(1, static_cast<std::size_t>(st.range(0)));
  std::vector<double> win(1024);
  for (std::size_t i = 0; i < win.size(); ++i) win[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / 1024.0);
  Matrix out(513, (sig.cols() - 1024) / 256 + 1);
  for (auto _ : st) {
    Fn(sig.data(), win, 256, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}

template <auto Fn>
void Matmul(benchmark::State& st) {
  // mel filterbank applied to a power spectrogram
  const auto fb = noise(80, 513, 2);
  const auto spec = noise(513, static_cast<std::size_t>(st.range(0)), 3);
  Matrix out(80, spec.cols());
  for (auto _ : st) {
    Fn(fb, spec, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}

template <auto Fn>
void Dct(benchmark::State& st) {
  const auto mel = noise(80, static_cast<std::size_t>(st.range(0)));
  Matrix out(13, mel.cols());
  for (auto _ : st) {
    Fn(mel, 1, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}

template <auto Fn>
void Distances(benchmark::State& st) {
  const auto a = noise(13, static_cast<std::size_t>(st.range(0)), 4);
  const auto b = noise(13, a.cols(), 5);
  std::vector<double> out(a.cols());
  for (auto _ : st) {
    Fn(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void Pearson(benchmark::State& st) {
  const auto a = noise(1, static_cast<std::size_t>(st.range(0)), 6);
  const auto b = noise(1, a.cols(), 7);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(a.data(), b.data()));
}

template <auto Fn>
void Vandermonde(benchmark::State& st) {
  const std::size_t h = 256, modes = 32;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::complex<double>> coeff(h * modes), dta(h * modes);
  for (std::size_t i = 0; i < coeff.size(); ++i) {
    coeff[i] = {g(rng), g(rng)};
    dta[i] = {-0.01 * std::abs(g(rng)), g(rng)};
  }
  Matrix out(h, static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    Fn(coeff, dta, modes, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}

}  // namespace

BENCHMARK(Filter<k::serial::sosfiltfilt_rows>)->Name("Filter/serial")->Arg(1 << 14)->Arg(1 << 16);
BENCHMARK(Filter<k::parallel::sosfiltfilt_rows>)->Name("Filter/parallel")->Arg(1 << 14)->Arg(1 << 16);
BENCHMARK(Resample<k::serial::resample_rows>)->Name("Resample/serial")->Arg(1 << 14)->Arg(1 << 16);
BENCHMARK(Resample<k::parallel::resample_rows>)->Name("Resample/parallel")->Arg(1 << 14)->Arg(1 << 16);
BENCHMARK(Stft<k::serial::stft_magnitude>)->Name("Stft/serial")->Arg(22050)->Arg(22050 * 8);
BENCHMARK(Stft<k::parallel::stft_magnitude>)->Name("Stft/parallel")->Arg(22050)->Arg(22050 * 8);
BENCHMARK(Matmul<k::serial::matmul>)->Name("MelMatmul/serial")->Arg(87)->Arg(690);
BENCHMARK(Matmul<k::parallel::matmul>)->Name("MelMatmul/parallel")->Arg(87)->Arg(690);
BENCHMARK(Dct<k::serial::dct2_ortho_columns>)->Name("Dct/serial")->Arg(690)->Arg(6900);
BENCHMARK(Dct<k::parallel::dct2_ortho_columns>)->Name("Dct/parallel")->Arg(690)->Arg(6900);
BENCHMARK(Distances<k::serial::column_distances>)->Name("Distances/serial")->Arg(690)->Arg(6900);
BENCHMARK(Distances<k::parallel::column_distances>)->Name("Distances/parallel")->Arg(690)->Arg(6900);
BENCHMARK(Pearson<k::serial::pearson>)->Name("Pearson/serial")->Arg(80 * 690);
BENCHMARK(Pearson<k::parallel::pearson>)->Name("Pearson/parallel")->Arg(80 * 690);
BENCHMARK(Vandermonde<k::serial::s4_vandermonde>)->Name("S4Vandermonde/serial")->Arg(768)->Arg(4096);
BENCHMARK(Vandermonde<k::parallel::s4_vandermonde>)->Name("S4Vandermonde/parallel")->Arg(768)->Arg(4096);

BENCHMARK_MAIN();
