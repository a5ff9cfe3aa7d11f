#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "gapfill/adam.hpp"
#include "gapfill/checkpoint.hpp"
#include "gapfill/rng.hpp"
#include "gapfill/tensor.hpp"
#include "support.hpp"

using namespace gapfill;
using testsupport::max_grad_rel_error;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  return Tensor::randn(std::move(shape), rng, 1.0, requires_grad);
}

}  // namespace

TEST_CASE("matmul forward") {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor r = matmul(eye, a);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.data()[i] == a.data()[i]);

  const Tensor row({1, 2}, {1, 2});
  const Tensor col({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == 11.0);

  // random 5x7 * 7x3 against the naive triple loop
  Rng rng(11);
  const Tensor x = random_tensor({5, 7}, rng, false);
  const Tensor y = random_tensor({7, 3}, rng, false);
  const Tensor z = matmul(x, y);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 7; ++k) acc += x.data()[i * 7 + k] * y.data()[k * 3 + j];
      CHECK(std::abs(z.data()[i * 3 + j] - acc) < 1e-12);
    }

  CHECK_THROWS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})));
}

TEST_CASE("softmax values and invariances") {
  const Tensor uniform = softmax(Tensor({1, 3}, {0, 0, 0}), 1);
  for (double v : uniform.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const Tensor stable = softmax(Tensor({1, 2}, {1000, 0}), 1);
  CHECK(stable.data()[0] == doctest::Approx(1.0));
  CHECK(stable.data()[1] >= 0.0);

  // exp-normalized oracle for [1,2,3]
  const Tensor s = softmax(Tensor({1, 3}, {1, 2, 3}), 1);
  const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  const double denom = e1 + e2 + e3;
  CHECK(std::abs(s.data()[0] - e1 / denom) < 1e-12);
  CHECK(std::abs(s.data()[1] - e2 / denom) < 1e-12);
  CHECK(std::abs(s.data()[2] - e3 / denom) < 1e-12);

  Rng rng(3);
  const Tensor x = random_tensor({6, 5}, rng, false);
  const Tensor sm = softmax(x, 1);
  for (std::size_t i = 0; i < 6; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 5; ++j) row += sm.data()[i * 5 + j];
    CHECK(std::abs(row - 1.0) < 1e-12);
  }
  // shift invariance along the softmax axis
  const Tensor shifted = softmax(add_scalar(x, 7.25), 1);
  for (std::size_t i = 0; i < sm.numel(); ++i)
    CHECK(std::abs(sm.data()[i] - shifted.data()[i]) < 1e-12);
}

TEST_CASE("gelu exact-erf values") {
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(std::abs(gelu(Tensor::scalar(1.0)).item() - 0.8413447460685429) < 1e-9);
  CHECK(gelu(Tensor::scalar(20.0)).item() == doctest::Approx(20.0));
  CHECK(std::abs(gelu(Tensor::scalar(-20.0)).item()) < 1e-12);
}

TEST_CASE("backward basics") {
  Tensor w({3}, {1, 2, 3}, true);
  backward(sum(w));
  for (double g : w.grad()) CHECK(g == 1.0);
  w.zero_grad();

  Tensor w2({2}, {1, 2}, true);
  backward(sum(mul(w2, w2)));
  CHECK(w2.grad()[0] == doctest::Approx(2.0));
  CHECK(w2.grad()[1] == doctest::Approx(4.0));

  CHECK_THROWS(backward(Tensor({2}, {1, 2}, true)));  // non-scalar loss
}

TEST_CASE("gradient accumulates over repeated parents") {
  Tensor x({1, 2}, {1.0, -2.0}, true);
  backward(sum(add(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(2.0));
  x.zero_grad();

  // the positional-encoding tiling pattern: same tensor concatenated twice
  std::vector<Tensor> tiles{x, x};
  backward(sum(concat(tiles, 0)));
  CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("finite-difference gradient checks per op") {
  Rng rng(42);
  auto check = [&](Tensor& p, const std::function<Tensor()>& loss) {
    CHECK(max_grad_rel_error(p, loss) < 1e-4);
  };

  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    check(a, [&] { return sum(matmul(a, b)); });
    check(b, [&] { return sum(mul(matmul(a, b), matmul(a, b))); });

    Tensor c = random_tensor({3, 4}, rng);
    check(c, [&] { return sum(mul(add(a, c), sub(a, c))); });
    check(c, [&] { return mean(mul(c, c)); });
    check(c, [&] { return sum(scale(c, 1.7)); });
    check(c, [&] { return sum(add_scalar(mul(c, c), 3.0)); });
    check(c, [&] { return sum(mul(transpose(c), transpose(c))); });
    check(c, [&] { return sum(mul(reshape(c, {4, 3}), reshape(c, {4, 3}))); });
    check(c, [&] { return sum(gelu(c)); });
    check(c, [&] { return sum(mul(softmax(c, 1), softmax(c, 1))); });
    check(c, [&] { return sum(slice(c, 1, 1, 3)); });

    Tensor v = random_tensor({4}, rng);
    check(v, [&] { return sum(mul(add_rowvec(a, v), add_rowvec(a, v))); });

    Tensor pos = random_tensor({8, 5}, rng);
    check(pos, [&] {
      std::vector<Tensor> parts{slice(pos, 0, 0, 4), slice(pos, 0, 4, 8)};
      return sum(mul(concat(parts, 1), concat(parts, 1)));
    });

    Tensor logit = random_tensor({2, 3}, rng);
    check(logit, [&] { return sum(elem_log(softmax(logit, 1))); });

    Tensor gamma = random_tensor({4}, rng);
    Tensor beta = random_tensor({4}, rng);
    Tensor xs = random_tensor({6, 4}, rng);
    check(xs, [&] { return sum(mul(layer_norm(xs, gamma, beta), layer_norm(xs, gamma, beta))); });
    check(gamma, [&] { return sum(mul(layer_norm(xs, gamma, beta), xs)); });
    check(beta, [&] { return sum(mul(layer_norm(xs, gamma, beta), xs)); });

    BatchNormState bn;
    check(xs, [&] { return sum(mul(batch_norm(xs, gamma, beta, bn, true), xs)); });
    check(gamma, [&] { return sum(mul(batch_norm(xs, gamma, beta, bn, true), xs)); });

    Tensor table = random_tensor({5, 3}, rng);
    const std::vector<std::size_t> rows{0, 2, 2, 4};
    check(table, [&] {
      return sum(mul(lookup_rows(table, rows), lookup_rows(table, rows)));
    });
  }
}

TEST_CASE("batch_norm semantics") {
  Rng rng(7);
  Tensor x = random_tensor({8, 4}, rng, false);
  Tensor gamma = Tensor({4}, {1, 1, 1, 1});
  Tensor beta = Tensor::zeros({4});
  BatchNormState state;
  const Tensor y = batch_norm(x, gamma, beta, state, true);

  // two-pass mean/variance oracle with the population convention
  for (std::size_t j = 0; j < 4; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < 8; ++i) mu += x.data()[i * 4 + j];
    mu /= 8.0;
    double var = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      const double d = x.data()[i * 4 + j] - mu;
      var += d * d;
    }
    var /= 8.0;
    double out_mean = 0.0, out_var = 0.0;
    for (std::size_t i = 0; i < 8; ++i) out_mean += y.data()[i * 4 + j];
    out_mean /= 8.0;
    for (std::size_t i = 0; i < 8; ++i) {
      const double d = y.data()[i * 4 + j] - out_mean;
      out_var += d * d;
    }
    out_var /= 8.0;
    CHECK(std::abs(out_mean) < 1e-6);
    CHECK(out_var == doctest::Approx(1.0).epsilon(1e-4));
    for (std::size_t i = 0; i < 8; ++i) {
      const double want = (x.data()[i * 4 + j] - mu) / std::sqrt(var + state.eps);
      CHECK(std::abs(y.data()[i * 4 + j] - want) < 1e-10);
    }
    // running stats: momentum blend of the unbiased batch variance
    CHECK(state.running_mean[j] == doctest::Approx(0.9 * 0.0 + 0.1 * mu));
    CHECK(state.running_var[j] == doctest::Approx(0.9 * 1.0 + 0.1 * var * 8.0 / 7.0));
  }
  CHECK(state.updates == 1);

  // constant feature column collapses to beta
  Tensor xc({4, 1}, {2, 2, 2, 2});
  Tensor g1({1}, {1.0});
  Tensor b1({1}, {0.5});
  BatchNormState s2;
  const Tensor yc = batch_norm(xc, g1, b1, s2, true);
  for (double v : yc.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-6));

  // eval mode normalizes with running stats, not batch stats
  const Tensor ye = batch_norm(x, gamma, beta, state, false);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t i = 0; i < 8; ++i) {
      const double want = (x.data()[i * 4 + j] - state.running_mean[j]) /
                          std::sqrt(state.running_var[j] + state.eps);
      CHECK(std::abs(ye.data()[i * 4 + j] - want) < 1e-10);
    }

  CHECK_THROWS(batch_norm(Tensor::zeros({1, 4}), gamma, beta, state, true));
}

TEST_CASE("dropout") {
  Rng rng(5);
  Tensor x = random_tensor({10, 10}, rng, false);
  const Tensor eval_out = dropout(x, 0.5, rng, false);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(eval_out.data()[i] == x.data()[i]);

  const Tensor keep_all = dropout(x, 0.0, rng, true);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(keep_all.data()[i] == x.data()[i]);

  // inverted dropout: E[out] == in. 10^4 draws, 3 sigma bound.
  const double p = 0.3;
  const int n = 10000;
  Tensor ones({1, 1}, {1.0});
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += dropout(ones, p, rng, true).item();
  const double mean = acc / n;
  const double sigma = std::sqrt(p / (1.0 - p) / n);  // var of one inverted-dropout draw
  CHECK(std::abs(mean - 1.0) < 3.0 * sigma);
}

TEST_CASE("finite checks flag") {
  CHECK(finite_checks_enabled());
  // log of a non-positive value is a domain error regardless of the flag
  CHECK_THROWS_AS(elem_log(Tensor::zeros({1, 2})), std::domain_error);

  // overflow to inf trips the check and names the op
  const Tensor huge = Tensor::full({1, 2}, 1e308);
  try {
    scale(huge, 10.0);
    FAIL("expected a finite-check failure");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("scale") != std::string::npos);
  }

  set_finite_checks(false);
  CHECK(!finite_checks_enabled());
  CHECK(std::isinf(scale(huge, 10.0).data()[0]));
  set_finite_checks(true);
  CHECK(finite_checks_enabled());
}

TEST_CASE("rng determinism and distributions") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next() == b.next());
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
  }
  Rng c(100);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(c.bounded(7) < 7);
    const auto r = c.range(3, 5);
    CHECK(r >= 3);
    CHECK(r <= 5);
  }
  double mean = 0.0, m2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = c.normal();
    mean += z;
    m2 += z * z;
  }
  mean /= n;
  m2 /= n;
  CHECK(std::abs(mean) < 0.02);
  CHECK(m2 - mean * mean == doctest::Approx(1.0).epsilon(0.03));

  int hits = 0;
  for (int i = 0; i < n; ++i) hits += c.bernoulli(0.3);
  CHECK(static_cast<double>(hits) / n == doctest::Approx(0.3).epsilon(0.05));

  Rng d1(12), d2(12);
  const Tensor t1 = Tensor::randn({4, 4}, d1);
  const Tensor t2 = Tensor::randn({4, 4}, d2);
  for (std::size_t i = 0; i < t1.numel(); ++i) CHECK(t1.data()[i] == t2.data()[i]);
}

TEST_CASE("adam steps") {
  AdamConfig cfg;

  SUBCASE("zero gradient leaves parameters untouched") {
    std::vector<double> p{1.5, -2.0};
    std::vector<double> g{0.0, 0.0};
    std::vector<double> m(2, 0.0), v(2, 0.0);
    adam_step(p, g, m, v, 1, cfg);
    CHECK(p[0] == 1.5);
    CHECK(p[1] == -2.0);
  }

  SUBCASE("first step with unit gradient moves by about -lr") {
    std::vector<double> p{0.0};
    std::vector<double> g{1.0};
    std::vector<double> m(1, 0.0), v(1, 0.0);
    adam_step(p, g, m, v, 1, cfg);
    CHECK(p[0] == doctest::Approx(-cfg.learning_rate).epsilon(1e-6));
  }

  SUBCASE("moment buffers must match the parameter size") {
    std::vector<double> p{0.0};
    std::vector<double> g{1.0, 2.0};
    std::vector<double> m(1, 0.0), v(1, 0.0);
    CHECK_THROWS(adam_step(p, g, m, v, 1, cfg));
    std::vector<double> g1{1.0}, empty;
    CHECK_THROWS(adam_step(p, g1, empty, v, 1, cfg));
    CHECK_THROWS(adam_step(p, g1, m, v, 0, cfg));  // steps are 1-based
  }

  SUBCASE("ten steps on w^2 match a scripted oracle") {
    double w = 1.7, m = 0.0, v = 0.0;
    for (int step = 1; step <= 10; ++step) {
      const double g = 2.0 * w;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double mh = m / (1.0 - std::pow(cfg.beta1, step));
      const double vh = v / (1.0 - std::pow(cfg.beta2, step));
      w -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    }

    Tensor wt({1}, {1.7}, true);
    AdamOptimizer opt({wt}, cfg);
    for (int i = 0; i < 10; ++i) {
      backward(mul(wt, wt));
      opt.step();
      opt.zero_grad();
    }
    CHECK(std::abs(wt.data()[0] - w) < 1e-10);
    CHECK(opt.step_count() == 10);
  }
}

TEST_CASE("checkpoint container round trip") {
  const auto dir = testsupport::scratch_dir("checkpoint");
  Rng rng(21);
  Checkpoint out;
  out.engine_version = "0.1.0";
  out.config_hash = fnv1a_hash("some-config");
  out.metadata = "{\"kind\":\"test\"}";
  const Tensor a = Tensor::randn({3, 5}, rng);
  const Tensor b = Tensor::randn({7}, rng);
  out.add("layer.weight", a);
  out.add("layer.bias", b);
  save_checkpoint(out, dir / "model.ckpt");

  const Checkpoint in = load_checkpoint(dir / "model.ckpt");
  CHECK(in.engine_version == out.engine_version);
  CHECK(in.config_hash == out.config_hash);
  CHECK(in.metadata == out.metadata);
  REQUIRE(in.entries.size() == 2);
  const Tensor a2 = in.tensor("layer.weight");
  REQUIRE(a2.shape() == Shape{3, 5});
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a2.data()[i] == a.data()[i]);
  CHECK(in.find("missing") == nullptr);
  CHECK_THROWS(in.tensor("missing"));
}

TEST_CASE("fnv1a test vectors") {
  CHECK(fnv1a_hash("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a_hash("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a_hash("foobar") == 0x85944171f73967e8ULL);
}
