#include <doctest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "wsk/kernels.hpp"
#include "wsk/rng.hpp"
#include "wsk/tensor.hpp"

using namespace wsk;
using namespace wsk_test;
namespace k = wsk::kernels;

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), Error);
  CHECK_THROWS_AS(Tensor({2, 0}), Error);
  CHECK_THROWS_AS(Tensor(std::vector<std::size_t>{}), Error);
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
}

TEST_CASE("conv2d zero input gives zero output") {
  Rng rng(1);
  const Tensor input({2, 4, 4});
  const Tensor filters = random_tensor({3, 2, 3, 3}, rng);
  const Tensor out = k::conv2d(input, filters, 1, 1);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("conv2d identity 1x1 kernel reproduces the input") {
  Rng rng(2);
  const Tensor input = random_tensor({1, 3, 3}, rng);
  Tensor filt({1, 1, 1, 1});
  filt[0] = 1.0;
  const Tensor out = k::conv2d(input, filt, 1, 0);
  CHECK(bitwise_equal(out, input));
}

TEST_CASE("conv2d 2x2 worked example") {
  const Tensor input = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  const Tensor filt = Tensor::from({1, 1, 2, 2}, {1, 0, 0, 1});
  const Tensor out = k::conv2d(input, filt, 1, 0);
  REQUIRE(out.size() == 1);
  // oracle: 1*1 + 2*0 + 3*0 + 4*1
  CHECK(out[0] == 5.0);
}

TEST_CASE("conv2d matches the brute-force oracle over shapes and strides") {
  Rng rng(3);
  const struct {
    std::size_t c, H, W, g, kh, kw;
    int stride, pad;
  } cases[] = {
      {1, 5, 5, 1, 3, 3, 1, 0}, {3, 8, 8, 4, 3, 3, 1, 1}, {2, 7, 6, 3, 2, 4, 1, 2},
      {4, 9, 9, 2, 3, 3, 2, 1}, {2, 8, 8, 5, 1, 1, 2, 0}, {3, 16, 16, 8, 3, 3, 1, 1},
  };
  for (const auto& cs : cases) {
    const Tensor input = random_tensor({cs.c, cs.H, cs.W}, rng);
    const Tensor filters = random_tensor({cs.g, cs.c, cs.kh, cs.kw}, rng);
    const Tensor got = k::conv2d(input, filters, cs.stride, cs.pad);
    const Tensor want = conv2d_oracle(input, filters, cs.stride, cs.pad);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d is linear in the input") {
  Rng rng(4);
  const Tensor a = random_tensor({2, 6, 6}, rng);
  const Tensor b = random_tensor({2, 6, 6}, rng);
  const Tensor f = random_tensor({3, 2, 3, 3}, rng);
  const double alpha = 0.7, beta = -1.3;
  Tensor mixed({2, 6, 6});
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = alpha * a[i] + beta * b[i];
  const Tensor lhs = k::conv2d(mixed, f, 1, 1);
  const Tensor ca = k::conv2d(a, f, 1, 1);
  const Tensor cb = k::conv2d(b, f, 1, 1);
  for (std::size_t i = 0; i < lhs.size(); ++i)
    CHECK(lhs[i] == doctest::Approx(alpha * ca[i] + beta * cb[i]).epsilon(1e-9));
}

TEST_CASE("conv2d output channels follow filter order exactly") {
  Rng rng(5);
  const Tensor input = random_tensor({3, 6, 6}, rng);
  const Tensor filters = random_tensor({4, 3, 3, 3}, rng);
  const Tensor base = k::conv2d(input, filters, 1, 1);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tensor shuffled(filters.shape());
  const std::size_t block = 3 * 3 * 3;
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(filters.data() + perm[i] * block, block, shuffled.data() + i * block);
  const Tensor moved = k::conv2d(input, shuffled, 1, 1);
  const std::size_t plane = base.extent(1) * base.extent(2);
  for (std::size_t gch = 0; gch < perm.size(); ++gch)
    for (std::size_t i = 0; i < plane; ++i)
      CHECK(moved[gch * plane + i] == base[perm[gch] * plane + i]);
}

TEST_CASE("conv2d shape errors name the offending axes") {
  const Tensor input({2, 4, 4});
  const Tensor filters({1, 3, 3, 3});
  try {
    k::conv2d(input, filters, 1, 1);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::shape_mismatch);
    CHECK(std::string(e.what()).find("axis 1") != std::string::npos);
    CHECK(std::string(e.what()).find("axis 0") != std::string::npos);
  }
}

TEST_CASE("conv2d_grad zero upstream gives zero gradients") {
  Rng rng(6);
  const Tensor input = random_tensor({2, 5, 5}, rng);
  const Tensor filters = random_tensor({3, 2, 3, 3}, rng);
  const Tensor up({3, 5, 5});
  const k::ConvGrads grads = k::conv2d_grad(input, filters, up, 1, 1);
  for (std::size_t i = 0; i < grads.input.size(); ++i) CHECK(grads.input[i] == 0.0);
  for (std::size_t i = 0; i < grads.filters.size(); ++i) CHECK(grads.filters[i] == 0.0);
}

TEST_CASE("conv2d_grad identity kernel passes upstream through") {
  Rng rng(7);
  const Tensor input = random_tensor({1, 4, 4}, rng);
  Tensor filt({1, 1, 1, 1});
  filt[0] = 1.0;
  const Tensor up = random_tensor({1, 4, 4}, rng);
  const k::ConvGrads grads = k::conv2d_grad(input, filt, up, 1, 0);
  CHECK(bitwise_equal(grads.input, up));
}

TEST_CASE("conv2d gradients match central finite differences") {
  Rng rng(8);
  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 5; ++trial) {
    Tensor input = random_tensor({2, 4, 4}, rng);
    Tensor filters = random_tensor({2, 2, 2, 2}, rng);
    const int stride = trial % 2 + 1;
    const int pad = trial % 2;
    const Tensor out = k::conv2d(input, filters, stride, pad);
    Tensor up = random_tensor(out.shape(), rng);
    const k::ConvGrads grads = k::conv2d_grad(input, filters, up, stride, pad);
    auto loss = [&]() {
      const Tensor o = k::conv2d(input, filters, stride, pad);
      double acc = 0.0;
      for (std::size_t i = 0; i < o.size(); ++i) acc += o[i] * up[i];
      return acc;
    };
    // 20 random coordinates of each tensor per trial -> 100+ points total.
    for (int p = 0; p < 10; ++p) {
      const std::size_t ii = rng.below(input.size());
      const double saved = input[ii];
      input[ii] = saved + h;
      const double up_val = loss();
      input[ii] = saved - h;
      const double dn_val = loss();
      input[ii] = saved;
      CHECK(rel_error((up_val - dn_val) / (2 * h), grads.input[ii]) <= 1e-6);
      ++checked;

      const std::size_t fi = rng.below(filters.size());
      const double fsaved = filters[fi];
      filters[fi] = fsaved + h;
      const double fup = loss();
      filters[fi] = fsaved - h;
      const double fdn = loss();
      filters[fi] = fsaved;
      CHECK(rel_error((fup - fdn) / (2 * h), grads.filters[fi]) <= 1e-6);
      ++checked;
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("serial and parallel conv kernels agree bitwise") {
  Rng rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t c = 1 + rng.below(4);
    const std::size_t g = 1 + rng.below(6);
    const std::size_t H = 4 + rng.below(12);
    const std::size_t kh = 1 + rng.below(3);
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int pad = static_cast<int>(rng.below(3));
    if (H + 2 * pad < kh) continue;
    const Tensor input = random_tensor({c, H, H}, rng);
    const Tensor filters = random_tensor({g, c, kh, kh}, rng);
    const Tensor a = k::serial::conv2d(input, filters, stride, pad);
    const Tensor b = k::par::conv2d(input, filters, stride, pad);
    CHECK(bitwise_equal(a, b));
    const Tensor up = random_tensor(a.shape(), rng);
    const k::ConvGrads ga = k::serial::conv2d_grad(input, filters, up, stride, pad, true);
    const k::ConvGrads gb = k::par::conv2d_grad(input, filters, up, stride, pad, true);
    CHECK(bitwise_equal(ga.input, gb.input));
    CHECK(bitwise_equal(ga.filters, gb.filters));
  }
}

TEST_CASE("frobenius inner product") {
  Rng rng(10);
  const Tensor a = random_tensor({2, 3}, rng);
  SUBCASE("zero case") {
    const Tensor z({2, 3});
    CHECK(k::frobenius_inner(z, a) == 0.0);
  }
  SUBCASE("self product is the squared norm") {
    double norm2 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) norm2 += a[i] * a[i];
    CHECK(k::frobenius_inner(a, a) == doctest::Approx(norm2).epsilon(1e-12));
    CHECK(k::frobenius_inner(a, a) >= 0.0);
  }
  SUBCASE("worked example") {
    const Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
    const Tensor y = Tensor::from({2, 2}, {1, 0, 0, 1});
    CHECK(k::frobenius_inner(x, y) == 5.0);  // oracle: 1*1 + 2*0 + 3*0 + 4*1
  }
  SUBCASE("symmetric bilinear form") {
    const Tensor b = random_tensor({2, 3}, rng);
    const Tensor c = random_tensor({2, 3}, rng);
    CHECK(k::frobenius_inner(a, b) == k::frobenius_inner(b, a));
    Tensor combo({2, 3});
    const double alpha = 1.7, beta = -0.4;
    for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = alpha * a[i] + beta * b[i];
    CHECK(k::frobenius_inner(combo, c) ==
          doctest::Approx(alpha * k::frobenius_inner(a, c) + beta * k::frobenius_inner(b, c))
              .epsilon(1e-9));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(k::frobenius_inner(a, Tensor({3, 2})), Error);
  }
}

TEST_CASE("dense, relu, gap and their gradients") {
  Rng rng(11);
  const Tensor x = random_tensor({4}, rng);
  const Tensor w = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({3}, rng);
  const Tensor z = k::dense(x, w, b);
  for (std::size_t i = 0; i < 3; ++i) {
    double want = b[i];
    for (std::size_t j = 0; j < 4; ++j) want += w.at(i, j) * x[j];
    CHECK(z[i] == doctest::Approx(want).epsilon(1e-12));
  }

  const Tensor up = random_tensor({3}, rng);
  const k::DenseGrads dg = k::dense_grad(x, w, up);
  const double h = 1e-6;
  for (std::size_t j = 0; j < 4; ++j) {
    Tensor xx = x;
    xx[j] += h;
    const Tensor zu = k::dense(xx, w, b);
    xx[j] -= 2 * h;
    const Tensor zd = k::dense(xx, w, b);
    double fd = 0;
    for (std::size_t i = 0; i < 3; ++i) fd += up[i] * (zu[i] - zd[i]) / (2 * h);
    CHECK(rel_error(fd, dg.input[j]) <= 1e-6);
  }

  const Tensor pre = Tensor::from({4}, {-1.0, 0.0, 2.0, -0.5});
  const Tensor r = k::relu(pre);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);
  const Tensor rup = Tensor::from({4}, {1.0, 1.0, 1.0, 1.0});
  const Tensor rg = k::relu_grad(pre, rup);
  CHECK(rg[0] == 0.0);
  CHECK(rg[2] == 1.0);

  const Tensor fm = Tensor::from({2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
  const Tensor pooled = k::global_avg_pool(fm);
  CHECK(pooled[0] == doctest::Approx(2.5));
  CHECK(pooled[1] == doctest::Approx(25.0));
  const Tensor pup = Tensor::from({2}, {4.0, 8.0});
  const Tensor pg = k::global_avg_pool_grad(pup, 2, 2);
  CHECK(pg.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(pg.at(1, 1, 1) == doctest::Approx(2.0));
}

TEST_CASE("softmax and cross entropy") {
  SUBCASE("equal logits give uniform probabilities") {
    const Tensor logits({5});
    const Tensor p = k::softmax(logits);
    for (std::size_t i = 0; i < 5; ++i) CHECK(p[i] == doctest::Approx(0.2).epsilon(1e-12));
    double sum = 0;
    for (std::size_t i = 0; i < 5; ++i) sum += p[i];
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
  SUBCASE("hand-evaluated exponentials") {
    const Tensor logits = Tensor::from({2}, {std::log(1.0), std::log(3.0)});
    const Tensor p = k::softmax(logits);
    CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("perfect prediction has zero loss") {
    const Tensor probs = Tensor::from({3}, {0.0, 1.0, 0.0});
    const Tensor onehot = Tensor::from({3}, {0.0, 1.0, 0.0});
    CHECK(k::cross_entropy(probs, onehot) == 0.0);
  }
  SUBCASE("non-normalized probs are a contract violation") {
    const Tensor probs = Tensor::from({2}, {0.7, 0.7});
    const Tensor onehot = Tensor::from({2}, {1.0, 0.0});
    try {
      k::cross_entropy(probs, onehot);
      FAIL("expected contract violation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::contract_violation);
    }
  }
  SUBCASE("softmax cross entropy gradient is probs minus target") {
    Rng rng(12);
    const Tensor logits = random_tensor({4}, rng);
    const Tensor probs = k::softmax(logits);
    Tensor onehot({4});
    onehot[2] = 1.0;
    const Tensor g = k::softmax_cross_entropy_grad(probs, onehot);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(g[i] == probs[i] - onehot[i]);
  }
}

TEST_CASE("non-finite values are rejected by public kernels") {
  Tensor bad({1, 2, 2});
  bad[0] = std::numeric_limits<double>::infinity();
  const Tensor filt = Tensor::from({1, 1, 1, 1}, {1.0});
  CHECK_THROWS_AS(k::conv2d(bad, filt, 1, 0), Error);
}

TEST_CASE("rng determinism and shuffle") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(7);
  auto perm = c.permutation(10);
  std::vector<bool> seen(10, false);
  for (std::size_t v : perm) {
    CHECK(v < 10);
    CHECK(!seen[v]);
    seen[v] = true;
  }
}
