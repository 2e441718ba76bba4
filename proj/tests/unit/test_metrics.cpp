#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ssvi/error.hpp"
#include "ssvi/metrics.hpp"
#include "support/oracles.hpp"

using namespace ssvi;

TEST_CASE("ECE of a perfectly calibrated synthetic stream is small") {
  oracle::SplitMix64 g(41);
  const std::size_t n = 1'000'000;
  std::vector<double> conf(n);
  std::vector<std::uint8_t> ok(n);
  for (std::size_t i = 0; i < n; ++i) {
    conf[i] = g.uniform(0.5, 1.0);
    ok[i] = g.uniform() < conf[i] ? 1 : 0;
  }
  CHECK(ece(conf, ok) < 0.01);
}

TEST_CASE("ECE trivial cases and errors") {
  const std::vector<double> ones(10, 1.0);
  CHECK(ece(ones, std::vector<std::uint8_t>(10, 1)) == 0.0);
  CHECK(ece(ones, std::vector<std::uint8_t>(10, 0)) == 1.0);
  CHECK_THROWS_AS(ece(std::vector<double>{}, std::vector<std::uint8_t>{}), Error);
  try {
    ece(std::vector<double>{}, std::vector<std::uint8_t>{});
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_input);
  }
  CHECK_THROWS_AS(ece(std::vector<double>{0.5}, std::vector<std::uint8_t>{1, 0}), Error);
}

TEST_CASE("ECE by hand over two bins") {
  // Bin [0.6, 0.667): conf 0.6, 0.62, acc 1/2; bin [0.933, 1]: conf 0.95, acc 1.
  const std::vector<double> conf{0.6, 0.62, 0.95};
  const std::vector<std::uint8_t> ok{1, 0, 1};
  const double expect = (2.0 / 3.0) * std::abs(0.5 - 0.61) + (1.0 / 3.0) * 0.05;
  CHECK(ece(conf, ok) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("ECE is invariant to permutation") {
  oracle::SplitMix64 g(42);
  std::vector<double> conf(500);
  std::vector<std::uint8_t> ok(500);
  for (std::size_t i = 0; i < 500; ++i) {
    conf[i] = g.uniform();
    ok[i] = g.uniform() < 0.7;
  }
  const double base = ece(conf, ok);
  std::vector<std::size_t> perm(500);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 499; i > 0; --i) std::swap(perm[i], perm[g.next() % (i + 1)]);
  std::vector<double> c2;
  std::vector<std::uint8_t> o2;
  for (auto p : perm) {
    c2.push_back(conf[p]);
    o2.push_back(ok[p]);
  }
  CHECK(ece(c2, o2) == doctest::Approx(base).epsilon(1e-13));
}

TEST_CASE("single-bin ECE is linear in the merge of two streams") {
  // With one bin, ECE = |acc - conf|, so a merged stream whose parts err in
  // the same direction has the size-weighted average of the parts' ECEs.
  const EceConfig one{1};
  const std::vector<double> ca{0.9, 0.8, 0.7}, cb{0.6, 0.95};
  const std::vector<std::uint8_t> oa{1, 0, 0}, ob{0, 1};
  std::vector<double> cm(ca);
  cm.insert(cm.end(), cb.begin(), cb.end());
  std::vector<std::uint8_t> om(oa);
  om.insert(om.end(), ob.begin(), ob.end());
  const double merged = ece(cm, om, one);
  CHECK(merged == doctest::Approx((3.0 * ece(ca, oa, one) + 2.0 * ece(cb, ob, one)) / 5.0).epsilon(1e-14));
}

TEST_CASE("criterion IoU") {
  CHECK(criterion_iou({1, 2, 3}, {3, 1, 2}) == 1.0);
  CHECK(criterion_iou({1, 2}, {3, 4}) == 0.0);
  CHECK(criterion_iou({1, 2, 3}, {2, 3, 4}) == 0.5);
  CHECK(criterion_iou({}, {}) == 1.0);
  CHECK(criterion_iou({}, {1}) == 0.0);
  oracle::SplitMix64 g(43);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> a, b;
    for (int i = 0; i < 8; ++i) a.push_back(g.next() % 12);
    for (int i = 0; i < 8; ++i) b.push_back(g.next() % 12);
    CHECK(criterion_iou(a, b) == criterion_iou(b, a));
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    CHECK((criterion_iou(a, b) == 1.0) == (a == b));
  }
}

TEST_CASE("accuracy and NLL") {
  Matrix onehot = Matrix::Identity(3, 3);
  const std::vector<int> labels{0, 1, 2};
  const AccuracyNll a = accuracy_nll(onehot, labels);
  CHECK(a.accuracy == 1.0);
  CHECK(a.nll == doctest::Approx(0.0).scale(1.0));

  const Matrix uniform = Matrix::Constant(10, 4, 0.1);
  CHECK(accuracy_nll(uniform, std::vector<int>{0, 3, 9, 2}).nll == doctest::Approx(std::log(10.0)).epsilon(1e-14));

  Matrix p(3, 3);
  p << 0.7, 0.2, 0.1,
       0.2, 0.5, 0.3,
       0.1, 0.3, 0.6;
  const AccuracyNll h = accuracy_nll(p, std::vector<int>{0, 2, 2});
  CHECK(h.accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(std::abs(h.nll - (-(std::log(0.7) + std::log(0.3) + std::log(0.6)) / 3.0)) <= 1e-12);

  Matrix zero = Matrix::Zero(2, 1);
  zero(1, 0) = 1.0;
  CHECK(accuracy_nll(zero, std::vector<int>{0}).nll == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(accuracy_nll(p, std::vector<int>{0, 1}), Error);
  CHECK_THROWS_AS(accuracy_nll(p, std::vector<int>{0, 1, 3}), Error);
}

TEST_CASE("calibration inputs") {
  Matrix p(2, 2);
  p << 0.8, 0.3,
       0.2, 0.7;
  const Calibration c = calibration_inputs(p, std::vector<int>{0, 0});
  CHECK(c.confidence == std::vector<double>{0.8, 0.7});
  CHECK(c.correct == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("FLOPs accounting") {
  const std::vector<int> widths{2, 32, 32, 2};
  const std::size_t d = 2 * 32 + 32 * 32 + 32 * 2;
  const FlopsModel dense = flops_estimate(widths, d, 128, 5000);
  CHECK(dense.ratio() == 1.0);
  CHECK(dense.sparse_total() == dense.dense_total());
  // forward 2 passes, backward twice forward
  CHECK(dense.dense_per_step() == doctest::Approx(2.0 * 3.0 * static_cast<double>(d) * 128));

  const FlopsModel sparse = flops_estimate(widths, static_cast<std::size_t>(std::llround(0.1 * d)), 128, 5000);
  CHECK(std::abs(sparse.ratio() - 0.10) <= 0.01);

  const FlopsModel doubled = flops_estimate(widths, 115, 128, 10000);
  CHECK(doubled.sparse_total() == 2.0 * flops_estimate(widths, 115, 128, 5000).sparse_total());

  double prev = 2.0;
  for (double sp : {0.0, 0.5, 0.8, 0.9, 0.95, 0.99}) {
    const auto s = static_cast<std::size_t>(std::llround((1 - sp) * d));
    const double r = flops_estimate(widths, s, 128, 5000).ratio();
    CHECK(r <= prev);
    prev = r;
  }
}
