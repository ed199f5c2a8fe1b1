#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <set>

#include "dscl/layers.hpp"
#include "dscl/metrics.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace dscl;

namespace {

FixationMap random_fixations(int rows, int cols, int n, Rng& rng) {
  std::vector<std::pair<int, int>> pts;
  for (int i = 0; i < n; ++i)
    pts.emplace_back(rng.uniform_int(0, rows - 1), rng.uniform_int(0, cols - 1));
  return FixationMap::from_points(rows, cols, std::move(pts));
}

}  // namespace

TEST_CASE("nss of a fully fixated map is zero") {
  Rng rng(81);
  auto s = testutil::rand_tensor({4, 4}, rng);
  std::vector<std::pair<int, int>> all;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) all.emplace_back(r, c);
  auto f = FixationMap::from_points(4, 4, all);
  CHECK(std::abs(nss(s, f)) < 1e-12);
}

TEST_CASE("nss closed-form example") {
  Tensor<double> s({2, 2}, {1, 0, 0, 0});
  auto f = FixationMap::from_points(2, 2, {{0, 0}});
  // mean 1/4, population sd sqrt(3)/4, NSS = (3/4)/(sqrt(3)/4) = sqrt(3)
  CHECK(nss(s, f) == doctest::Approx(1.7320508075688772).epsilon(1e-12));
}

TEST_CASE("nss of a blurred single fixation is its standardized peak") {
  auto f = FixationMap::from_points(15, 15, {{7, 7}});
  auto d = fixation_density(f, 1.5);
  const double v = nss(d, f);
  CHECK(v > 0.0);
  // oracle: standardize the density and read the peak
  CHECK(v == doctest::Approx(oracles::nss_oracle(d, f)).epsilon(1e-12));
}

TEST_CASE("nss rejects degenerate inputs") {
  auto f = FixationMap::from_points(3, 3, {{1, 1}});
  CHECK_THROWS_AS(nss(Tensor<double>::full({3, 3}, 0.7), f), NumericError);
  Rng rng(82);
  auto s = testutil::rand_tensor({3, 3}, rng);
  FixationMap empty;
  empty.rows = empty.cols = 3;
  CHECK_THROWS_AS(nss(s, empty), DataError);
}

TEST_CASE("cc is 1 for positive affine maps and -1 for negated") {
  Rng rng(83);
  auto d = testutil::rand_tensor({5, 6}, rng);
  Tensor<double> s(d.shape());
  for (size_t i = 0; i < d.size(); ++i) s[i] = 2.5 * d[i] + 0.3;
  CHECK(cc(s, d) == doctest::Approx(1.0).epsilon(1e-12));
  for (size_t i = 0; i < d.size(); ++i) s[i] = -d[i];
  CHECK(cc(s, d) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("cc hand-computed example") {
  Tensor<double> s({2, 2}, {1, 2, 3, 4});
  Tensor<double> d({2, 2}, {4, 3, 2, 1});
  CHECK(cc(s, d) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(cc(s, d) == doctest::Approx(oracles::cc_oracle(s, d)).epsilon(1e-12));
}

TEST_CASE("cc rejects constant maps") {
  Rng rng(84);
  auto s = testutil::rand_tensor({3, 3}, rng);
  CHECK_THROWS_AS(cc(s, Tensor<double>::full({3, 3}, 1.0)), NumericError);
  CHECK_THROWS_AS(cc(Tensor<double>::full({3, 3}, 1.0), s), NumericError);
}

TEST_CASE("fixation density: central bump with peak 1") {
  auto f = FixationMap::from_points(21, 21, {{10, 10}});
  const double sigma = 2.0;
  auto d = fixation_density(f, sigma);
  CHECK(d[size_t(10) * 21 + 10] == doctest::Approx(1.0).epsilon(1e-12));
  // kernel evaluation oracle at a nearby offset
  const int size = gaussian_kernel_size(sigma);
  const int r = size / 2;
  double z = 0;
  for (int i = -r; i <= r; ++i) z += std::exp(-i * i / (2 * sigma * sigma));
  auto g1 = [&](int i) { return std::exp(-i * i / (2 * sigma * sigma)) / z; };
  const double expect = g1(1) * g1(2) / (g1(0) * g1(0));
  CHECK(d[size_t(11) * 21 + 12] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("fixation density: two far-apart bumps both peak near 1") {
  auto f = FixationMap::from_points(40, 40, {{8, 8}, {31, 31}});
  auto d = fixation_density(f, 1.5);
  CHECK(d[size_t(8) * 40 + 8] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(d[size_t(31) * 40 + 31] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("fixation density rejects an empty set") {
  FixationMap empty;
  empty.rows = empty.cols = 8;
  CHECK_THROWS_AS(fixation_density(empty, 1.0), DataError);
}

TEST_CASE("auc_judd: perfect separation scores 1") {
  Rng rng(85);
  Tensor<double> s({4, 4});
  for (size_t i = 0; i < s.size(); ++i) s[i] = rng.uniform(0.0, 0.4);
  auto f = random_fixations(4, 4, 4, rng);
  for (auto [r, c] : f.points) s[size_t(r) * 4 + c] = rng.uniform(0.6, 1.0);
  CHECK(auc_judd(s, f) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("auc_judd: constant map scores one half") {
  auto f = FixationMap::from_points(4, 4, {{0, 1}, {2, 3}});
  CHECK(auc_judd(Tensor<double>::full({4, 4}, 0.2), f) ==
        doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("auc_judd equals the brute-force sweep on random instances") {
  Rng rng(86);
  for (int it = 0; it < 20; ++it) {
    auto s = testutil::rand_tensor({8, 8}, rng, 0.0, 1.0);
    auto f = random_fixations(8, 8, 6, rng);
    CHECK(std::abs(auc_judd(s, f) - oracles::auc_oracle(s, f)) < 1e-12);
  }
}

TEST_CASE("auc_judd rejects degenerate fixation sets") {
  Rng rng(87);
  auto s = testutil::rand_tensor({2, 2}, rng);
  std::vector<std::pair<int, int>> all{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  auto f = FixationMap::from_points(2, 2, all);
  CHECK_THROWS_AS(auc_judd(s, f), DataError);
}

TEST_CASE("auc is invariant under strictly monotonic transforms") {
  Rng rng(88);
  for (int it = 0; it < 10; ++it) {
    auto s = testutil::rand_tensor({8, 8}, rng, -1.0, 1.0);
    auto f = random_fixations(8, 8, 7, rng);
    const double base = auc_judd(s, f);
    Tensor<double> e(s.shape()), c(s.shape());
    for (size_t i = 0; i < s.size(); ++i) {
      e[i] = std::exp(s[i]);
      c[i] = s[i] * s[i] * s[i];
    }
    CHECK(std::abs(auc_judd(e, f) - base) < 1e-12);
    CHECK(std::abs(auc_judd(c, f) - base) < 1e-12);
  }
}

TEST_CASE("nss and cc are invariant under positive affine transforms") {
  Rng rng(89);
  for (int it = 0; it < 10; ++it) {
    auto s = testutil::rand_tensor({8, 8}, rng);
    auto d = testutil::rand_tensor({8, 8}, rng, 0.0, 1.0);
    auto f = random_fixations(8, 8, 5, rng);
    Tensor<double> t(s.shape());
    const double a = rng.uniform(0.1, 3.0), b = rng.uniform(-2.0, 2.0);
    for (size_t i = 0; i < s.size(); ++i) t[i] = a * s[i] + b;
    CHECK(std::abs(nss(t, f) - nss(s, f)) < 1e-10);
    CHECK(std::abs(cc(t, d) - cc(s, d)) < 1e-10);
    CHECK(cc(s, d) == doctest::Approx(cc(d, s)).epsilon(1e-12));
    CHECK(std::abs(cc(s, d)) <= 1.0 + 1e-12);
  }
}

TEST_CASE("sauc under the null is close to one half") {
  // the trapezoid convention has a small upward bias of 1/(2(P+1)) under
  // the null, so enough fixations keep the mean inside the band
  Rng rng(90);
  double acc = 0;
  int trials = 0;
  for (int it = 0; it < 12; ++it) {
    auto s = testutil::rand_tensor({16, 16}, rng, 0.0, 1.0);
    auto f = random_fixations(16, 16, 30, rng);
    std::vector<FixationMap> others;
    for (int k = 0; k < 8; ++k) others.push_back(random_fixations(16, 16, 30, rng));
    acc += sauc(s, f, others, 25, uint64_t(1000 + it));
    ++trials;
  }
  CHECK(std::abs(acc / trials - 0.5) < 0.03);
}

TEST_CASE("sauc with perfectly ranked positives scores 1") {
  Rng rng(91);
  Tensor<double> s({6, 6});
  for (size_t i = 0; i < s.size(); ++i) s[i] = rng.uniform(0.0, 0.4);
  auto f = FixationMap::from_points(6, 6, {{1, 1}, {2, 4}, {4, 2}});
  for (auto [r, c] : f.points) s[size_t(r) * 6 + c] = rng.uniform(0.8, 1.0);
  std::vector<FixationMap> others;
  for (int k = 0; k < 4; ++k) others.push_back(random_fixations(6, 6, 6, rng));
  CHECK(sauc(s, f, others, 20, 7) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sauc is deterministic for a fixed seed") {
  Rng rng(92);
  auto s = testutil::rand_tensor({10, 10}, rng, 0.0, 1.0);
  auto f = random_fixations(10, 10, 6, rng);
  std::vector<FixationMap> others;
  for (int k = 0; k < 5; ++k) others.push_back(random_fixations(10, 10, 8, rng));
  const double a = sauc(s, f, others, 25, 42);
  const double b = sauc(s, f, others, 25, 42);
  CHECK(a == b);
  const double c = sauc(s, f, others, 25, 43);
  CHECK(a != c);  // different seed, different subsamples
}

TEST_CASE("sauc requires enough negatives") {
  Rng rng(93);
  auto s = testutil::rand_tensor({4, 4}, rng);
  auto f = random_fixations(4, 4, 6, rng);
  std::vector<FixationMap> others{FixationMap::from_points(4, 4, {{0, 0}})};
  CHECK_THROWS_AS(sauc(s, f, others, 5, 1), DataError);
}

TEST_CASE("sauc equals the mean of per-split brute-force AUCs") {
  Rng rng(94);
  auto s = testutil::rand_tensor({12, 12}, rng, 0.0, 1.0);
  auto f = random_fixations(12, 12, 8, rng);
  std::vector<FixationMap> others;
  for (int k = 0; k < 6; ++k) others.push_back(random_fixations(12, 12, 9, rng));
  const uint64_t seed = 99;
  const int splits = 12;
  const auto pool = sauc_negative_pool(f, others);
  double mean = 0;
  for (int k = 0; k < splits; ++k) {
    auto idx = sauc_sample_indices(int(pool.size()), f.count(), seed, k);
    std::vector<std::pair<int, int>> negs;
    for (int i : idx) negs.push_back(pool[size_t(i)]);
    mean += oracles::auc_oracle(s, f, &negs);
  }
  mean /= splits;
  CHECK(std::abs(sauc(s, f, others, splits, seed) - mean) < 1e-12);
}

TEST_CASE("center bias: sauc corrects what auc_judd rewards") {
  // center-Gaussian saliency, center-biased fixations everywhere
  const int n = 25;
  Tensor<double> s({n, n});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double dr = r - 12.0, dc = c - 12.0;
      s[size_t(r) * n + c] = std::exp(-(dr * dr + dc * dc) / (2 * 16.0));
    }
  Rng rng(95);
  auto central = [&](int m, Rng& r2) {
    std::vector<std::pair<int, int>> pts;
    while (int(pts.size()) < m) {
      const int rr = int(std::lround(r2.normal(12, 2.5)));
      const int cc2 = int(std::lround(r2.normal(12, 2.5)));
      if (rr >= 0 && rr < n && cc2 >= 0 && cc2 < n) pts.emplace_back(rr, cc2);
    }
    return FixationMap::from_points(n, n, pts);
  };
  auto f = central(10, rng);
  std::vector<FixationMap> others;
  for (int k = 0; k < 10; ++k) others.push_back(central(10, rng));
  const double plain = auc_judd(s, f);
  const double shuffled = sauc(s, f, others, 50, 5);
  CHECK(plain > 0.8);
  CHECK(shuffled < plain);  // the ordering, not a value
}

TEST_CASE("fixation CSV round trip and validation") {
  auto f = FixationMap::from_points(10, 12, {{0, 0}, {3, 7}, {9, 11}, {3, 7}});
  CHECK(f.count() == 3);  // duplicate collapsed
  save_fixations_csv("fix_test.csv", f);
  auto back = load_fixations_csv("fix_test.csv", 10, 12);
  CHECK(back.points == f.points);
  std::remove("fix_test.csv");

  CHECK_THROWS_AS(FixationMap::from_points(4, 4, {{4, 0}}), DataError);
  {
    std::ofstream os("fix_bad.csv");
    os << "1,2\nnot-a-line\n";
  }
  CHECK_THROWS_AS(load_fixations_csv("fix_bad.csv", 8, 8), DataError);
  std::remove("fix_bad.csv");
}
