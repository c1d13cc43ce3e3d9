#include <doctest.h>

#include <cmath>
#include <numbers>

#include "e2s/error.hpp"
#include "e2s/nn/connector.hpp"
#include "e2s/nn/eeg_module.hpp"
#include "fixtures.hpp"

using namespace e2s;

namespace {

nn::ConnectorConfig small_connector(int64_t dim = 4) {
  nn::ConnectorConfig c;
  c.embed_dim = dim;
  c.latent_dim = dim;
  c.prenet_hidden = 16;
  c.prenet_layers = 1;
  c.prenet_ffn = 32;
  c.flow_layers = 3;
  c.flow_hidden = 8;
  c.flow_wavenet_layers = 2;
  return c;
}

// Zero-initialised output layers make the flow an identity; give every
// parameter a random value instead.
void randomize(torch::nn::Module& m, double scale = 0.3) {
  torch::NoGradGuard g;
  for (auto& p : m.parameters()) p.copy_(torch::randn_like(p) * scale);
}

torch::Tensor ones_mask(int64_t b, int64_t t, torch::Dtype d = torch::kFloat) {
  return torch::ones({b, 1, t}, d);
}

}  // namespace

TEST_SUITE("connector") {

TEST_CASE("prenet shapes, determinism and width check") {
  torch::manual_seed(1);
  nn::ConnectorConfig cfg;
  nn::Prenet prenet(cfg);
  prenet->eval();
  auto e = torch::randn({1, 192, 87});
  auto p = prenet->forward(e, ones_mask(1, 87));
  CHECK(p.mean.sizes() == torch::IntArrayRef({1, 192, 87}));
  CHECK(p.log_scale.sizes() == torch::IntArrayRef({1, 192, 87}));
  auto again = prenet->forward(e, ones_mask(1, 87));
  CHECK(torch::equal(p.mean, again.mean));
  CHECK(torch::equal(p.log_scale, again.log_scale));
  CHECK_THROWS_AS(prenet->forward(torch::randn({1, 96, 87}), ones_mask(1, 87)), ConfigError);
}

TEST_CASE("no gradient crosses the prenet into the EEG encoder") {
  torch::manual_seed(2);
  nn::EegEncoderConfig ec;
  ec.n_channels_in = 4;
  ec.hidden_dim = 16;
  ec.embed_dim = 8;
  ec.s4_state_dim = 8;
  nn::EegAutoencoder eeg(ec);
  nn::Prenet prenet(small_connector(8));
  auto enc = eeg->encode(torch::randn({1, 4, 60}), torch::full({1}, 60, torch::kLong));
  auto p = prenet->forward(enc.embedding, enc.frame_mask);
  (p.mean.sum() + p.log_scale.exp().sum()).backward();
  for (const auto& w : eeg->parameters()) {
    CHECK((!w.grad().defined() || w.grad().abs().max().item<double>() == 0.0));
  }
  bool prenet_grad = false;
  for (const auto& w : prenet->parameters()) prenet_grad |= w.grad().defined();
  CHECK(prenet_grad);
}

TEST_CASE("zero-initialised flow is the identity") {
  auto cfg = small_connector(6);
  for (int64_t k : {3, 4}) {
    cfg.flow_layers = k;
    nn::Flow flow(cfg);
    auto z = torch::randn({2, 6, 9});
    auto [w, logdet] = flow->forward(z, ones_mask(2, 9));
    // every layer flips the channel axis first
    auto expect = k % 2 ? z.flip(1) : z;
    CHECK(torch::allclose(w, expect));
    CHECK(logdet.abs().max().item<double>() == 0.0);
    CHECK(torch::allclose(flow->inverse(w, ones_mask(2, 9)), z));
  }
}

TEST_CASE("log-determinant matches the numerical Jacobian") {
  for (int draw = 0; draw < 10; ++draw) {
    torch::manual_seed(10 + draw);
    nn::Flow flow(small_connector(4));
    flow->to(torch::kDouble);
    randomize(*flow);
    auto z = torch::randn({1, 4, 1}, torch::kDouble);
    auto mask = ones_mask(1, 1, torch::kDouble);
    const double analytic = flow->forward(z, mask).second.item<double>();

    torch::NoGradGuard g;
    auto jac = torch::empty({4, 4}, torch::kDouble);
    const double h = 1e-6;
    for (int64_t j = 0; j < 4; ++j) {
      auto zp = z.clone(), zm = z.clone();
      zp[0][j][0] += h;
      zm[0][j][0] -= h;
      jac.select(1, j).copy_((flow->forward(zp, mask).first - flow->forward(zm, mask).first).view({4}) /
                             (2 * h));
    }
    const double numeric = std::log(std::abs(torch::linalg_det(jac).item<double>()));
    CHECK(std::abs(analytic - numeric) < 1e-4);
  }
}

TEST_CASE("flow inverse round trip on random parameters") {
  for (int draw = 0; draw < 10; ++draw) {
    torch::manual_seed(30 + draw);
    nn::Flow flow(small_connector(8));
    randomize(*flow);
    auto z = torch::randn({2, 8, 20});
    auto mask = ones_mask(2, 20);
    mask[1].narrow(1, 15, 5).zero_();
    z = z * mask;
    torch::NoGradGuard g;
    auto w = flow->forward(z, mask).first;
    CHECK((flow->inverse(w, mask) - z).abs().max().item<double>() < 1e-4);
    auto w2 = torch::randn_like(z) * mask;
    CHECK((flow->forward(flow->inverse(w2, mask), mask).first - w2).abs().max().item<double>() < 1e-4);
  }
}

TEST_CASE("one coupling layer inverts to (w - t) / s") {
  torch::manual_seed(4);
  nn::AffineCoupling layer(6, 8, 3, 1, 2);
  randomize(*layer);
  torch::NoGradGuard g;
  auto mask = ones_mask(1, 7);
  auto w = torch::randn({1, 6, 7});
  auto w_a = w.narrow(1, 0, 3);
  auto w_b = w.narrow(1, 3, 3);
  auto [t, log_s] = layer->statistics(w_a, mask);
  auto expect_b = (w_b - t) / log_s.exp();
  auto x = layer->inverse(w, mask);
  CHECK(torch::allclose(x.narrow(1, 0, 3), w_a));
  CHECK((x.narrow(1, 3, 3) - expect_b).abs().max().item<double>() < 1e-5);
  auto [y, logdet] = layer->forward(x, mask);
  CHECK((y - w).abs().max().item<double>() < 1e-5);
  CHECK((logdet - log_s.sum(1)).abs().max().item<double>() < 1e-5);
}

TEST_CASE("KL Monte Carlo against closed forms") {
  torch::manual_seed(5);
  auto cfg = small_connector(2);
  cfg.flow_layers = 2;  // two flips cancel
  nn::Flow flow(cfg);
  const int64_t draws = 10000;
  auto mask = ones_mask(1, draws);

  auto posterior = [&](const torch::Tensor& mean, const torch::Tensor& log_scale) {
    nn::GaussianLatent q;
    q.mean = mean;
    q.log_scale = log_scale;
    q.eps = torch::randn_like(mean);
    q.sample = mean + log_scale.exp() * q.eps;
    q.mask = mask;
    return q;
  };
  auto estimate = [&](const nn::GaussianLatent& q, const nn::PriorSequence& p) {
    auto terms = nn::kl_terms(q, p, flow);
    auto per_draw = (terms.log_q - terms.log_p).sum(1).view({-1}).to(torch::kDouble) / 2.0 -
                    terms.logdet.view({-1}).to(torch::kDouble) / 2.0;
    const double mean = per_draw.mean().item<double>();
    const double se = per_draw.std().item<double>() / std::sqrt(static_cast<double>(draws));
    return std::pair{mean, se};
  };

  {
    auto mean = torch::randn({1, 2, 1}).expand({1, 2, draws}).contiguous();
    auto ls = (torch::randn({1, 2, 1}) * 0.3).expand({1, 2, draws}).contiguous();
    auto q = posterior(mean, ls);
    nn::PriorSequence p{mean, ls, mask};
    auto [est, se] = estimate(q, p);
    CHECK(std::abs(est) <= 3 * se + 1e-6);
    CHECK(nn::kl_loss(q, p, flow).item<double>() == doctest::Approx(est).epsilon(1e-4).scale(1.0));
  }
  {
    auto q = posterior(torch::zeros({1, 2, draws}), torch::zeros({1, 2, draws}));
    nn::PriorSequence p{torch::ones({1, 2, draws}), torch::zeros({1, 2, draws}), mask};
    auto [est, se] = estimate(q, p);
    CHECK(std::abs(est - 0.5) < 3 * se);
  }
  {
    auto q = posterior(torch::full({1, 2, draws}, 0.3), torch::full({1, 2, draws}, -0.2));
    nn::PriorSequence p{torch::full({1, 2, draws}, -0.4), torch::full({1, 2, draws}, 0.5), mask};
    auto [est, se] = estimate(q, p);
    CHECK(est + 3 * se >= 0.0);
  }

  nn::GaussianLatent q = posterior(torch::zeros({1, 2, 5}), torch::zeros({1, 2, 5}));
  q.mask = ones_mask(1, 5);
  nn::PriorSequence p{torch::zeros({1, 2, 6}), torch::zeros({1, 2, 6}), ones_mask(1, 6)};
  CHECK_THROWS_AS(nn::kl_loss(q, p, flow), AlignmentError);
}

TEST_CASE("frame alignment is linear interpolation") {
  auto x = torch::tensor({0.0F, 1.0F, 2.0F, 9.0F}).view({1, 1, 4});
  auto y = nn::align_to_frames(x, torch::tensor({3}), torch::tensor({5}), 6);
  auto expect = torch::tensor({0.0F, 0.5F, 1.0F, 1.5F, 2.0F, 0.0F}).view({1, 1, 6});
  CHECK(torch::allclose(y, expect));
  auto same = nn::align_to_frames(x, torch::tensor({4}), torch::tensor({4}), 4);
  CHECK(torch::equal(same, x));
  CHECK_THROWS_AS(nn::align_to_frames(x, torch::tensor({0}), torch::tensor({5}), 6), AlignmentError);
}

TEST_CASE("prior sampling at zero temperature returns the mean") {
  nn::PriorSequence p{torch::randn({1, 4, 6}), torch::randn({1, 4, 6}), ones_mask(1, 6)};
  CHECK(torch::equal(nn::sample_prior(p, 0.0), p.mean));
}

}  // TEST_SUITE
