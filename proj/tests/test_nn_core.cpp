#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "genrecnn/nn/ops.hpp"
#include "genrecnn/nn/optimizer.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace genrecnn;

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
  std::mt19937_64 rng(1);
  const auto input = oracles::random_tensor<float>({1, 4, 5}, rng);
  Tensor w({1, 1, 1, 1});
  w[0] = 1.0f;
  Tensor b({1});
  const auto out = nn::conv2d_forward(input, w, b);
  REQUIRE(out.shape == input.shape);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == input[i]);
}

TEST_CASE("conv2d: zero input passes the bias through") {
  Tensor input({2, 5, 6});
  Tensor w({3, 2, 3, 3});
  Tensor b({3});
  b[0] = 0.5f;
  b[1] = -1.25f;
  b[2] = 2.0f;
  const auto out = nn::conv2d_forward(input, w, b);
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t i = 0; i < out.shape[1]; ++i) {
      for (std::size_t j = 0; j < out.shape[2]; ++j) {
        CHECK(out.at3(o, i, j) == b[o]);
      }
    }
  }
}

TEST_CASE("conv2d: matches the brute-force oracle on 50 random shapes") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> ch(1, 4), ker(1, 3), extra(0, 5);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t c_in = ch(rng), c_out = ch(rng);
    const std::size_t kh = ker(rng), kw = ker(rng);
    const std::size_t h = kh + extra(rng), w = kw + extra(rng);
    const auto input = oracles::random_tensor<float>({c_in, h, w}, rng);
    const auto weights =
        oracles::random_tensor<float>({c_out, c_in, kh, kw}, rng);
    const auto biases = oracles::random_tensor<float>({c_out}, rng);

    const auto got = nn::conv2d_forward(input, weights, biases);
    const auto want = oracles::conv2d_bruteforce(input, weights, biases);
    REQUIRE(got.shape == want.shape);
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::abs(got[i] - want[i]) < 1e-6f);
    }
  }
}

TEST_CASE("conv2d: shape errors are rejected") {
  Tensor input({2, 4, 4});
  Tensor w({1, 3, 3, 3});  // expects 3 input channels
  Tensor b({1});
  CHECK_THROWS_AS(nn::conv2d_forward(input, w, b), ShapeError);
  Tensor w2({1, 2, 5, 3});  // kernel taller than input
  CHECK_THROWS_AS(nn::conv2d_forward(input, w2, b), ShapeError);
}

TEST_CASE("conv2d backward: zero upstream gradient zeroes everything") {
  std::mt19937_64 rng(2);
  const auto input = oracles::random_tensor<float>({2, 5, 5}, rng);
  const auto weights = oracles::random_tensor<float>({3, 2, 3, 3}, rng);
  Tensor grad_out({3, 3, 3});
  const auto grads = nn::conv2d_backward(input, weights, grad_out);
  for (float v : grads.input.data) CHECK(v == 0.0f);
  for (float v : grads.weights.data) CHECK(v == 0.0f);
  for (float v : grads.biases.data) CHECK(v == 0.0f);
}

TEST_CASE("conv2d backward: bias gradient is the grad_out plane sum") {
  std::mt19937_64 rng(3);
  const auto input = oracles::random_tensor<float>({1, 5, 6}, rng);
  const auto weights = oracles::random_tensor<float>({2, 1, 3, 3}, rng);
  const auto grad_out = oracles::random_tensor<float>({2, 3, 4}, rng);
  const auto grads = nn::conv2d_backward(input, weights, grad_out);
  for (std::size_t o = 0; o < 2; ++o) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 4; ++j) sum += grad_out.at3(o, i, j);
    }
    CHECK(grads.biases[o] == doctest::Approx(sum).epsilon(1e-5));
  }
}

TEST_CASE("conv2d backward: finite-difference check over 20 random instances") {
  std::mt19937_64 rng(1234);
  for (int inst = 0; inst < 20; ++inst) {
    const auto res = gradcheck::check_conv2d_instance(rng);
    CHECK(res.worst() < gradcheck::kMaxRelError);
  }
}

TEST_CASE("conv2d: translation equivariance on padded input") {
  std::mt19937_64 rng(7);
  const std::size_t pad = 3, core_h = 6, core_w = 7;
  const auto core = oracles::random_tensor<float>({1, core_h, core_w}, rng);
  const auto weights = oracles::random_tensor<float>({2, 1, 3, 3}, rng);
  const auto biases = oracles::random_tensor<float>({2}, rng);

  auto embed = [&](std::size_t dy, std::size_t dx) {
    Tensor big({1, core_h + 2 * pad, core_w + 2 * pad});
    for (std::size_t i = 0; i < core_h; ++i) {
      for (std::size_t j = 0; j < core_w; ++j) {
        big.at3(0, i + dy, j + dx) = core.at3(0, i, j);
      }
    }
    return big;
  };

  const auto out0 = nn::conv2d_forward(embed(0, 0), weights, biases);
  const std::size_t dy = 2, dx = 3;
  const auto out1 = nn::conv2d_forward(embed(dy, dx), weights, biases);

  // The nonzero region moves by exactly (dy, dx); compare the overlap.
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i + dy < out0.shape[1]; ++i) {
      for (std::size_t j = 0; j + dx < out0.shape[2]; ++j) {
        CHECK(out1.at3(o, i + dy, j + dx) == out0.at3(o, i, j));
      }
    }
  }
}

TEST_CASE("maxpool: constant input, global-max example, brute-force shapes") {
  Tensor constant({1, 4, 8});
  constant.fill(3.5f);
  const auto pooled = nn::maxpool_forward(constant, 2, 4);
  CHECK(pooled.output.shape == std::vector<std::size_t>{1, 2, 2});
  for (float v : pooled.output.data) CHECK(v == 3.5f);

  Tensor small({1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  const auto global = nn::maxpool_forward(small, 2, 4);
  CHECK(global.output.shape == std::vector<std::size_t>{1, 1, 1});
  CHECK(global.output[0] == 8.0f);

  std::mt19937_64 rng(11);
  const auto input = oracles::random_tensor<float>({3, 7, 9}, rng);
  const auto got = nn::maxpool_forward(input, 2, 4);
  CHECK(got.output.shape == std::vector<std::size_t>{3, 3, 2});
  const auto want = oracles::maxpool_bruteforce(input, 2, 4);
  for (std::size_t i = 0; i < got.output.size(); ++i) {
    CHECK(got.output[i] == want[i]);
  }
}

TEST_CASE("maxpool: 50 random instances match the windowed-max oracle") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> ch(1, 4), pool(1, 4), extra(0, 6);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t ph = pool(rng), pw = pool(rng);
    const std::size_t c = ch(rng), h = ph + extra(rng), w = pw + extra(rng);
    const auto input = oracles::random_tensor<float>({c, h, w}, rng);
    const auto got = nn::maxpool_forward(input, ph, pw);
    const auto want = oracles::maxpool_bruteforce(input, ph, pw);
    REQUIRE(got.output.shape == want.shape);
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got.output[i] == want[i]);
    }
  }
}

TEST_CASE("maxpool backward: routing, mass conservation, tie-breaking") {
  std::mt19937_64 rng(31);
  const auto input = oracles::random_tensor<float>({2, 6, 8}, rng);
  const auto fwd = nn::maxpool_forward(input, 2, 4);

  Tensor ones(fwd.output.shape);
  ones.fill(1.0f);
  const auto routed = nn::maxpool_backward(fwd.argmax, input.shape, ones);
  // Exactly one 1 per pooling window, total mass preserved.
  double mass = 0.0;
  for (float v : routed.data) {
    CHECK((v == 0.0f || v == 1.0f));
    mass += v;
  }
  CHECK(mass == doctest::Approx(static_cast<double>(fwd.output.size())));

  const auto grad_out = oracles::random_tensor<float>(fwd.output.shape, rng);
  const auto grad_in = nn::maxpool_backward(fwd.argmax, input.shape, grad_out);
  double sum_in = 0.0, sum_out = 0.0;
  for (float v : grad_in.data) sum_in += v;
  for (float v : grad_out.data) sum_out += v;
  CHECK(sum_in == doctest::Approx(sum_out).epsilon(1e-5));

  // Ties go to the first occurrence in row-major order.
  Tensor tied({1, 2, 2});
  tied.fill(7.0f);
  const auto tie_fwd = nn::maxpool_forward(tied, 2, 2);
  CHECK(tie_fwd.argmax[0] == 0);
}

TEST_CASE("maxpool backward: finite-difference check at non-tied points") {
  std::mt19937_64 rng(4321);
  for (int inst = 0; inst < 20; ++inst) {
    CHECK(gradcheck::check_maxpool_instance(rng) < gradcheck::kMaxRelError);
  }
}

TEST_CASE("dense: identity weights, zero input, dot-product oracle") {
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at2(i, i) = 1.0f;
  Tensor zero_b({3});
  Tensor input({3}, {0.5f, -1.0f, 2.0f});
  const auto out = nn::dense_forward(input, eye, zero_b);
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == input[i]);

  Tensor zeros({3});
  Tensor biases({3}, {1.0f, 2.0f, 3.0f});
  std::mt19937_64 rng(5);
  const auto w = oracles::random_tensor<float>({3, 3}, rng);
  const auto from_zero = nn::dense_forward(zeros, w, biases);
  for (std::size_t i = 0; i < 3; ++i) CHECK(from_zero[i] == biases[i]);

  // Double-precision instance against the naive loop oracle at 1e-12.
  std::mt19937_64 rng64(6);
  const auto in64 = oracles::random_tensor<double>({3}, rng64);
  const auto w64 = oracles::random_tensor<double>({4, 3}, rng64);
  const auto b64 = oracles::random_tensor<double>({4}, rng64);
  const auto got = nn::dense_forward(in64, w64, b64);
  const auto want = oracles::dense_bruteforce(in64, w64, b64);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(std::abs(got[i] - want[i]) < 1e-12);
  }
}

TEST_CASE("dense: 50 random float shapes against the oracle") {
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<std::size_t> dim(1, 16);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = dim(rng), m = dim(rng);
    const auto input = oracles::random_tensor<float>({n}, rng);
    const auto w = oracles::random_tensor<float>({m, n}, rng);
    const auto b = oracles::random_tensor<float>({m}, rng);
    const auto got = nn::dense_forward(input, w, b);
    const auto want = oracles::dense_bruteforce(input, w, b);
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::abs(got[i] - want[i]) < 1e-6f);
    }
  }
}

TEST_CASE("dense backward: finite-difference check over 20 random instances") {
  std::mt19937_64 rng(777);
  for (int inst = 0; inst < 20; ++inst) {
    const auto res = gradcheck::check_dense_instance(rng);
    CHECK(res.worst() < gradcheck::kMaxRelError);
  }
}

TEST_CASE("relu: examples and gradient") {
  Tensor input({3}, {-1.0f, 0.0f, 2.0f});
  const auto out = nn::relu(input);
  CHECK(out[0] == 0.0f);
  CHECK(out[1] == 0.0f);
  CHECK(out[2] == 2.0f);

  Tensor negative({4}, {-3.0f, -0.5f, -1e-6f, -100.0f});
  const auto neg_out = nn::relu(negative);
  for (float v : neg_out.data) CHECK(v == 0.0f);
  Tensor ones({4});
  ones.fill(1.0f);
  const auto neg_grad = nn::relu_backward(negative, ones);
  for (float v : neg_grad.data) CHECK(v == 0.0f);

  std::mt19937_64 rng(88);
  for (int inst = 0; inst < 20; ++inst) {
    CHECK(gradcheck::check_relu_instance(rng) < gradcheck::kMaxRelError);
  }
}

TEST_CASE("softmax: symmetry, shift invariance, closed form, range") {
  Tensor uniform({10});
  uniform.fill(0.7f);
  const auto u = nn::softmax(uniform);
  for (float v : u.data) CHECK(v == doctest::Approx(0.1).epsilon(1e-6));

  std::mt19937_64 rng(99);
  const auto logits = oracles::random_tensor<float>({7}, rng, -3.0, 3.0);
  auto shifted = logits;
  for (auto& v : shifted.data) v += 5.0f;
  const auto p1 = nn::softmax(logits);
  const auto p2 = nn::softmax(shifted);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-6));
  }

  // [0, ln 3] -> [1/4, 3/4].
  Tensor two({2}, {0.0f, std::log(3.0f)});
  const auto p = nn::softmax(two);
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-6));

  // Sums to 1 within 1e-12 in double, entries in (0, 1).
  std::mt19937_64 rng64(100);
  for (int inst = 0; inst < 50; ++inst) {
    const auto z = oracles::random_tensor<double>({10}, rng64, -30.0, 30.0);
    const auto probs = nn::softmax(z);
    double sum = 0.0;
    for (double v : probs.data) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("cross entropy: exact values and the p - onehot gradient") {
  Tensor certain({4});
  certain[2] = 1.0f;
  CHECK(nn::cross_entropy_loss(certain, 2) == 0.0f);

  Tensor uniform({10});
  uniform.fill(0.1f);
  CHECK(nn::cross_entropy_loss(uniform, 3) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-6));

  CHECK_THROWS_AS(nn::cross_entropy_loss(uniform, 10), DomainError);

  // Combined softmax + CE gradient equals p - onehot and matches finite
  // differences in double.
  std::mt19937_64 rng(123);
  for (int inst = 0; inst < 20; ++inst) {
    CHECK(gradcheck::check_softmax_ce_instance(rng) < gradcheck::kMaxRelError);
  }
  const auto z = oracles::random_tensor<double>({6}, rng, -2.0, 2.0);
  const auto probs = nn::softmax(z);
  TensorT<double> grad;
  nn::softmax_cross_entropy_grad_into(probs, 4, grad);
  for (std::size_t i = 0; i < 6; ++i) {
    const double want = probs[i] - (i == 4 ? 1.0 : 0.0);
    CHECK(std::abs(grad[i] - want) < 1e-12);
  }
}

TEST_CASE("loss is nonnegative and L2 strictly increases it for nonzero weights") {
  std::mt19937_64 rng(321);
  for (int inst = 0; inst < 10; ++inst) {
    const auto z = oracles::random_tensor<double>({10}, rng, -4.0, 4.0);
    std::uniform_int_distribution<std::size_t> pick(0, 9);
    const double loss =
        nn::softmax_cross_entropy_loss_from_logits(z, pick(rng));
    CHECK(loss >= 0.0);
  }

  nn::LayerParamsT<float> layer;
  layer.allocate({4, 4}, {4});
  std::mt19937_64 rng2(11);
  nn::kaiming_uniform_init(layer, 4, rng2);
  const std::vector<const nn::LayerParamsT<float>*> layers{&layer};
  CHECK(nn::l2_penalty(layers, 0.1) > 0.0);
  CHECK(nn::l2_penalty(layers, 0.0) == 0.0);
}

TEST_CASE("dropout: identity cases and Monte-Carlo survivor mean") {
  Tensor input({8});
  for (std::size_t i = 0; i < 8; ++i) input[i] = static_cast<float>(i + 1);
  std::mt19937_64 rng(55);

  const auto no_rate = nn::dropout(input, 0.0, true, rng);
  for (std::size_t i = 0; i < 8; ++i) CHECK(no_rate.output[i] == input[i]);

  const auto inference = nn::dropout(input, 0.7, false, rng);
  for (std::size_t i = 0; i < 8; ++i) CHECK(inference.output[i] == input[i]);
  CHECK(inference.kept.empty());

  // Inverted dropout keeps the expectation: mean over 10^5 trials within 2%.
  Tensor constant({4});
  constant.fill(2.0f);
  const double rate = 0.3;
  std::vector<double> sums(4, 0.0);
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    const auto r = nn::dropout(constant, rate, true, rng);
    for (std::size_t i = 0; i < 4; ++i) sums[i] += r.output[i];
  }
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(sums[i] / trials == doctest::Approx(2.0).epsilon(0.02));
  }
}

TEST_CASE("dropout backward: gradient passes only where units survived") {
  Tensor input({6});
  input.fill(1.0f);
  std::mt19937_64 rng(77);
  const auto fwd = nn::dropout(input, 0.5, true, rng);
  Tensor grad_out({6});
  grad_out.fill(1.0f);
  Tensor grad_in;
  nn::dropout_backward_into(fwd.kept, 0.5, grad_out, grad_in);
  for (std::size_t i = 0; i < 6; ++i) {
    if (fwd.kept[i]) {
      CHECK(grad_in[i] == 2.0f);  // 1 / (1 - 0.5)
    } else {
      CHECK(grad_in[i] == 0.0f);
    }
  }
}

TEST_CASE("sgd_step: no-op, one-step arithmetic, convex descent") {
  nn::SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.0;
  cfg.l2_lambda = 0.0;

  nn::LayerParamsT<float> p;
  p.allocate({1}, {1});
  nn::SgdVelocityT<float> vel;

  // Zero gradients, zero velocity: parameters unchanged.
  p.weights[0] = 1.0f;
  nn::sgd_step(p, vel, cfg);
  CHECK(p.weights[0] == 1.0f);

  // w = 1, grad = 0.5, lr = 0.1 -> w = 0.95.
  p.weight_grads[0] = 0.5f;
  nn::sgd_step(p, vel, cfg);
  CHECK(p.weights[0] == doctest::Approx(0.95).epsilon(1e-7));

  // Quadratic bowl 0.5 * w^2: gradient w, loss decreases monotonically after
  // the first step.
  nn::LayerParamsT<double> bowl;
  bowl.allocate({1}, {1});
  bowl.weights[0] = 5.0;
  nn::SgdVelocityT<double> bowl_vel;
  nn::SgdConfig bowl_cfg;
  bowl_cfg.learning_rate = 0.05;
  bowl_cfg.momentum = 0.0;
  bowl_cfg.l2_lambda = 0.0;
  double prev_loss = 0.5 * bowl.weights[0] * bowl.weights[0];
  for (int step = 0; step < 100; ++step) {
    bowl.weight_grads[0] = bowl.weights[0];
    nn::sgd_step(bowl, bowl_vel, bowl_cfg);
    const double loss = 0.5 * bowl.weights[0] * bowl.weights[0];
    if (step > 0) CHECK(loss < prev_loss);
    prev_loss = loss;
  }
  CHECK(prev_loss < 1e-3);  // 0.5 * (5 * 0.95^100)^2
}

TEST_CASE("sgd_step: L2 decays weights even with zero data gradient") {
  nn::LayerParamsT<float> p;
  p.allocate({4}, {4});
  std::mt19937_64 rng(31);
  nn::kaiming_uniform_init(p, 4, rng);
  p.zero_grads();

  nn::SgdConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.momentum = 0.9;
  cfg.l2_lambda = 1e-2;
  nn::SgdVelocityT<float> vel;

  auto norm = [&] {
    double acc = 0.0;
    for (float w : p.weights.data) acc += static_cast<double>(w) * w;
    return std::sqrt(acc);
  };
  double prev = norm();
  for (int step = 0; step < 10; ++step) {
    nn::sgd_step(p, vel, cfg);
    const double now = norm();
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("sgd config validation") {
  nn::SgdConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.dropout_rate_fc = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  nn::SgdConfig good;
  CHECK_NOTHROW(good.validate());
}
