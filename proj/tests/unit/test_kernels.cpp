#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "e2s/kernels/kernels.hpp"

using namespace e2s;
namespace k = e2s::kernels;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (auto& v : m.data()) v = g(rng);
  return m;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("serial and parallel agree") {
  const auto a = random_matrix(17, 600, 1);
  const auto b = random_matrix(600, 9, 2);

  SUBCASE("sosfiltfilt rows") {
    const std::vector<k::Biquad> sos{{0.2, 0.4, 0.2, -0.5, 0.3}, {1.0, -2.0, 1.0, -1.9, 0.905}};
    for (auto ext : {k::Extension::Odd, k::Extension::Even}) {
      auto s = a, p = a;
      k::serial::sosfiltfilt_rows(sos, s, ext);
      k::parallel::sosfiltfilt_rows(sos, p, ext);
      CHECK(s == p);
    }
  }
  SUBCASE("resample") {
    Matrix s(17, 250), p(17, 250);
    k::SincKernel sk{0.4, 16.0, 8.6};
    k::serial::resample_rows(a, 2.4, sk, s);
    k::parallel::resample_rows(a, 2.4, sk, p);
    CHECK(s == p);
  }
  SUBCASE("stft magnitude") {
    std::vector<double> sig(a.data().begin(), a.data().begin() + 4096);
    std::vector<double> win(256);
    for (std::size_t i = 0; i < win.size(); ++i) win[i] = 0.5 - 0.5 * std::cos(2 * M_PI * i / 256.0);
    Matrix s(129, (4096 - 256) / 64 + 1), p(129, (4096 - 256) / 64 + 1);
    k::serial::stft_magnitude(sig, win, 64, s);
    k::parallel::stft_magnitude(sig, win, 64, p);
    CHECK(s == p);
  }
  SUBCASE("matmul, dct and distances") {
    Matrix s(17, 9), p(17, 9);
    k::serial::matmul(a, b, s);
    k::parallel::matmul(a, b, p);
    CHECK(s == p);
    Matrix ds(12, 600), dp(12, 600);
    k::serial::dct2_ortho_columns(a, 1, ds);
    k::parallel::dct2_ortho_columns(a, 1, dp);
    CHECK(ds == dp);
    const auto c = random_matrix(17, 600, 3);
    std::vector<double> vs(600), vp(600);
    k::serial::column_distances(a, c, vs);
    k::parallel::column_distances(a, c, vp);
    CHECK(vs == vp);
  }
  SUBCASE("pearson") {
    std::span<const double> x(a.data().data(), 5000), y(a.data().data() + 5000, 5000);
    CHECK(k::parallel::pearson(x, y) == doctest::Approx(k::serial::pearson(x, y)).epsilon(1e-12));
    CHECK(k::serial::pearson(x, x) == doctest::Approx(1.0));
    std::vector<double> flat(10, 2.0);
    CHECK(std::isnan(k::serial::pearson(flat, std::span(x.data(), 10))));
  }
  SUBCASE("s4 vandermonde") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::complex<double>> coeff(6 * 8), dta(6 * 8);
    for (std::size_t i = 0; i < coeff.size(); ++i) {
      coeff[i] = {g(rng), g(rng)};
      dta[i] = {-0.05 * std::abs(g(rng)), g(rng)};
    }
    Matrix s(6, 100), p(6, 100);
    k::serial::s4_vandermonde(coeff, dta, 8, s);
    k::parallel::s4_vandermonde(coeff, dta, 8, p);
    CHECK(s == p);
    // direct evaluation of one entry
    std::complex<double> acc = 0.0;
    for (int n = 0; n < 8; ++n) acc += coeff[8 + n] * std::exp(dta[8 + n] * 7.0);
    CHECK(s(1, 7) == doctest::Approx(2.0 * acc.real()).epsilon(1e-10));
  }
}

TEST_CASE("zero-phase filter of a constant is constant") {
  const std::vector<k::Biquad> lp{{0.0675, 0.135, 0.0675, -1.143, 0.413}};
  std::vector<double> x(300, 3.0);
  k::sosfiltfilt(lp, x);
  for (double v : x) CHECK(v == doctest::Approx(3.0).epsilon(1e-6));
}

}  // TEST_SUITE
