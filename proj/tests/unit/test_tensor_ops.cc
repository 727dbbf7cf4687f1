#include <cmath>
#include <memory>
#include <numeric>

#include "doctest.h"
#include "isofed/errors.h"
#include "isofed/ops.h"
#include "isofed/tensor.h"
#include "oracles.h"

using namespace isofed;
using isofed::testing::random_tensor;

namespace {

void require_close(std::span<const double> got, std::span<const double> want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::fabs(got[i] - want[i]) <= tol);
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("tensor construction checks sizes") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
    Tensor t = Tensor::full({2, 2}, 1.5);
    CHECK(t.numel() == 4);
    CHECK(t.data()[3] == 1.5);
    CHECK_THROWS(t.item());
    CHECK(Tensor::scalar(2.0).item() == 2.0);
  }

  TEST_CASE("conv2d of ones is 25") {
    Tensor x = Tensor::full({1, 1, 5, 5}, 1.0);
    Tensor k = Tensor::full({1, 1, 5, 5}, 1.0);
    Tensor out = ops::conv2d(x, k, Tensor::zeros({1}));
    CHECK(out.shape() == Shape{1, 1, 1, 1});
    CHECK(out.item() == 25.0);
  }

  TEST_CASE("conv2d with zero kernel and bias is zero") {
    CounterRng rng(3);
    Tensor x = random_tensor({2, 3, 9, 8}, rng);
    Tensor out = ops::conv2d(x, Tensor::zeros({4, 3, 5, 5}), Tensor::zeros({4}));
    CHECK(out.shape() == Shape{2, 4, 5, 4});
    for (double v : out.data()) CHECK(v == 0.0);
  }

  TEST_CASE("conv2d matches nested-loop oracle") {
    CounterRng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x = random_tensor({1, 1, 6, 6}, rng);
      Tensor k = random_tensor({1, 1, 5, 5}, rng);
      Tensor b = random_tensor({1}, rng);
      require_close(ops::conv2d(x, k, b).data(), testing::brute_conv2d(x, k, b), 1e-12);
    }
    // Several samples and channels, enough to span more than one im2col chunk.
    Tensor x = random_tensor({70, 3, 12, 10}, rng);
    Tensor k = random_tensor({4, 3, 5, 5}, rng);
    Tensor b = random_tensor({4}, rng);
    require_close(ops::conv2d(x, k, b).data(), testing::brute_conv2d(x, k, b), 1e-12);
  }

  TEST_CASE("conv2d rejects bad shapes") {
    CounterRng rng(1);
    Tensor x = random_tensor({1, 2, 6, 6}, rng);
    CHECK_THROWS_AS(ops::conv2d(x, Tensor::zeros({1, 3, 5, 5}), Tensor::zeros({1})), ShapeError);
    CHECK_THROWS_AS(ops::conv2d(x, Tensor::zeros({1, 2, 5, 5}), Tensor::zeros({2})), ShapeError);
    CHECK_THROWS_AS(ops::conv2d(random_tensor({1, 2, 4, 6}, rng), Tensor::zeros({1, 2, 5, 5}),
                                Tensor::zeros({1})),
                    ShapeError);
    CHECK_THROWS_AS(ops::conv2d(Tensor::zeros({2, 6, 6}), Tensor::zeros({1, 2, 5, 5}),
                                Tensor::zeros({1})),
                    ShapeError);
  }

  TEST_CASE("maxpool examples") {
    Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(ops::maxpool2x2(x).item() == 4.0);
    Tensor c = Tensor::full({2, 3, 4, 6}, -0.25);
    Tensor pooled = ops::maxpool2x2(c);
    CHECK(pooled.shape() == Shape{2, 3, 2, 3});
    for (double v : pooled.data()) CHECK(v == -0.25);
    CounterRng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor r = random_tensor({1, 1, 4, 4}, rng);
      require_close(ops::maxpool2x2(r).data(), testing::brute_maxpool(r), 0.0);
    }
    CHECK_THROWS_AS(ops::maxpool2x2(Tensor::zeros({1, 1, 3, 4})), ShapeError);
  }

  TEST_CASE("maxpool routes tied gradient to first cell in scan order") {
    Tensor x = Tensor::full({1, 1, 2, 2}, 1.0, true);
    Tape tape;
    {
      GradTape rec(tape);
      tape.backward(ops::sum(ops::maxpool2x2(x)));
    }
    CHECK(x.grad() == std::vector<double>{1, 0, 0, 0});
  }

  TEST_CASE("linear examples") {
    CounterRng rng(5);
    Tensor x = random_tensor({3, 4}, rng);
    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
    Tensor id = ops::linear(x, Tensor({4, 4}, eye), Tensor::zeros({4}));
    require_close(id.data(), x.data(), 0.0);

    Tensor b({2}, {0.5, -1.5});
    Tensor rows = ops::linear(x, Tensor::zeros({4, 2}), b);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(rows.data()[2 * i] == 0.5);
      CHECK(rows.data()[2 * i + 1] == -1.5);
    }

    for (int trial = 0; trial < 10; ++trial) {
      Tensor a = random_tensor({2, 3}, rng);
      Tensor w = random_tensor({3, 2}, rng);
      Tensor bias = random_tensor({2}, rng);
      require_close(ops::linear(a, w, bias).data(), testing::brute_linear(a, w, bias), 1e-12);
    }
    CHECK_THROWS_AS(ops::linear(x, Tensor::zeros({3, 2}), Tensor::zeros({2})), ShapeError);
  }

  TEST_CASE("linear is bitwise independent of buffer alignment") {
    auto once = [](int jitter) {
      // Shift the heap so the tensors below land at different addresses.
      std::vector<std::unique_ptr<char[]>> junk;
      for (int i = 0; i < jitter; ++i) junk.emplace_back(new char[8 * (i + 1)]);
      CounterRng rng(1);
      Tensor x = random_tensor({64, 256}, rng, -1, 1, true);
      Tensor w = random_tensor({256, 128}, rng, -1, 1, true);
      Tensor b = random_tensor({128}, rng, -1, 1, true);
      Tape tape;
      {
        GradTape rec(tape);
        Tensor y = ops::linear(x, w, b);
        tape.backward(ops::sum(ops::mul(y, y)));
      }
      std::vector<double> all = x.grad();
      for (const auto& g : {w.grad(), b.grad()}) all.insert(all.end(), g.begin(), g.end());
      return all;
    };
    const auto ref = once(0);
    for (int j = 1; j < 12; ++j) CHECK(once(j) == ref);
  }

  TEST_CASE("softmax rows are on the simplex") {
    Tensor eq = Tensor::full({2, 7}, 3.0);
    const Tensor flat = ops::softmax(eq);
    for (double v : flat.data()) CHECK(v == doctest::Approx(1.0 / 7).epsilon(1e-15));
    CounterRng rng(9);
    Tensor z = random_tensor({50, 6}, rng, -500, 500);
    Tensor p = ops::softmax(z);
    for (std::size_t r = 0; r < 50; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 6; ++k) {
        const double v = p.data()[r * 6 + k];
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::fabs(s - 1.0) <= 1e-9);
    }
    CHECK_THROWS_AS(ops::softmax(z, 2), ShapeError);
    CHECK_THROWS_AS(ops::softmax(z, -3), ShapeError);
  }

  TEST_CASE("log_softmax agrees with log of softmax") {
    CounterRng rng(4);
    Tensor z = random_tensor({5, 4}, rng, -5, 5);
    Tensor p = ops::softmax(z, 0);
    Tensor lp = ops::log_softmax(z, 0);
    for (std::size_t i = 0; i < 20; ++i)
      CHECK(lp.data()[i] == doctest::Approx(std::log(p.data()[i])).epsilon(1e-12));
  }

  TEST_CASE("mse and nll closed forms") {
    CounterRng rng(2);
    Tensor a = random_tensor({4, 3}, rng);
    CHECK(ops::mse_loss(a, a).item() == 0.0);
    Tensor b = Tensor::zeros({4, 3});
    double expect = 0.0;
    for (double v : a.data()) expect += v * v;
    CHECK(ops::mse_loss(a, b).item() == doctest::Approx(expect / 4).epsilon(1e-14));

    for (std::size_t n : {2u, 8u, 11u}) {
      Tensor logp = Tensor::full({3, n}, std::log(1.0 / double(n)));
      std::vector<int> labels = {0, int(n) - 1, 1};
      CHECK(ops::nll_loss(logp, labels).item() ==
            doctest::Approx(std::log(double(n))).epsilon(1e-14));
    }
    Tensor logp = Tensor::full({2, 3}, -1.0);
    CHECK_THROWS_AS(ops::nll_loss(logp, std::vector<int>{0, 3}), Error);
    CHECK_THROWS_AS(ops::nll_loss(logp, std::vector<int>{-1, 0}), Error);
    CHECK_THROWS_AS(ops::nll_loss(logp, std::vector<int>{0}), ShapeError);
  }

  TEST_CASE("sharpen examples") {
    Tensor p({1, 2}, {0.8, 0.2});
    Tensor q = ops::sharpen(p, 0.5);
    // 0.64 / 0.68 and 0.04 / 0.68
    CHECK(q.data()[0] == doctest::Approx(0.94117647058823529).epsilon(1e-15));
    CHECK(q.data()[1] == doctest::Approx(0.05882352941176470).epsilon(1e-14));
    CHECK_THROWS_AS(ops::sharpen(Tensor::zeros({1, 3}), 0.5), Error);
    CHECK_THROWS_AS(ops::sharpen(Tensor({1, 2}, {0.5, 0.6}), 0.5), Error);
    CHECK_THROWS_AS(ops::sharpen(Tensor({1, 2}, {1.2, -0.2}), 0.5), Error);
    CHECK_THROWS_AS(ops::sharpen(p, 0.0), Error);
  }

  TEST_CASE("backward basics") {
    CounterRng rng(8);
    Tensor w = random_tensor({2, 3, 2}, rng, -1, 1, true);
    Tape tape;
    {
      GradTape rec(tape);
      tape.backward(ops::sum(w));
    }
    for (double g : w.grad()) CHECK(g == 1.0);

    Tensor v = Tensor::scalar(1.75, true);
    Tape t2;
    {
      GradTape rec(t2);
      t2.backward(ops::mse_loss(v, Tensor::scalar(0.0)));
    }
    CHECK(v.grad()[0] == doctest::Approx(3.5).epsilon(1e-15));
  }

  TEST_CASE("backward accumulates across calls until zeroed") {
    Tensor w = Tensor::full({3}, 2.0, true);
    for (int i = 0; i < 2; ++i) {
      Tape tape;
      GradTape rec(tape);
      tape.backward(ops::sum(ops::mul(w, w)));
    }
    for (double g : w.grad()) CHECK(g == 8.0);
    w.zero_grad();
    for (double g : w.grad()) CHECK(g == 0.0);
  }

  TEST_CASE("backward rejects non-scalar and unrecorded losses") {
    Tensor w = Tensor::full({3}, 2.0, true);
    Tape tape;
    GradTape rec(tape);
    Tensor y = ops::scale(w, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
    Tensor c = Tensor::scalar(1.0);
    CHECK_THROWS_AS(tape.backward(c), Error);
  }

  TEST_CASE("no recording outside a tape or under NoGradGuard") {
    Tensor w = Tensor::full({3}, 2.0, true);
    Tape tape;
    {
      GradTape rec(tape);
      {
        NoGradGuard guard;
        Tensor y = ops::sum(ops::mul(w, w));
        CHECK_FALSE(y.requires_grad());
      }
      CHECK(tape.size() == 0);
      Tensor y = ops::sum(w);
      CHECK(tape.size() == 1);
    }
    CHECK(active_tape() == nullptr);
  }

  TEST_CASE("xlogx is zero at zero") {
    Tensor x({3}, {0.0, 1.0, 0.5});
    Tensor y = ops::xlogx(x);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[1] == 0.0);
    CHECK(y.data()[2] == doctest::Approx(0.5 * std::log(0.5)));
  }
}
