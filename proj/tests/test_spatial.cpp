#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dscl/spatial_context.hpp"
#include "testutil.hpp"

using namespace dscl;
using testutil::swap_channel_halves;

namespace {

double weighted_sum(const Tensor<double>& t, const Tensor<double>& w) {
  REQUIRE(t.same_shape(w));
  double s = 0;
  for (size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

Tensor<double> rot180(const Tensor<double>& t) { return flip_lr(flip_ud(t)); }

template <typename P>
Tensor<double> pack(P& params) {
  std::vector<double> flat;
  params.visit([&](const char*, Tensor<double>& t) {
    flat.insert(flat.end(), t.vec().begin(), t.vec().end());
  });
  const int n = int(flat.size());
  return Tensor<double>({n}, std::move(flat));
}

template <typename P>
void unpack(const Tensor<double>& flat, P& params) {
  size_t pos = 0;
  params.visit([&](const char*, Tensor<double>& t) {
    std::copy(flat.vec().begin() + long(pos),
              flat.vec().begin() + long(pos + t.size()), t.vec().begin());
    pos += t.size();
  });
}

}  // namespace

TEST_CASE("width-1 row scan gives identical halves") {
  Rng rng(41);
  const int n = 4;
  auto p = make_lstm_params<double>(n, 3, 0, rng);
  auto map = testutil::rand_tensor({5, 1, 3}, rng);
  auto out = row_scan_bidirectional(map, p);
  for (int y = 0; y < 5; ++y)
    for (int k = 0; k < n; ++k)
      CHECK(out.at3(y, 0, k) == out.at3(y, 0, n + k));
}

TEST_CASE("zero parameters give identically zero hidden maps") {
  Rng rng(42);
  auto p = make_lstm_params<double>(4, 2, 0, rng);
  p.visit([](const char*, Tensor<double>& t) {
    std::fill(t.vec().begin(), t.vec().end(), 0.0);
  });
  auto map = testutil::rand_tensor({3, 6, 2}, rng);
  auto out = row_scan_bidirectional(map, p);
  CHECK(max_abs(out) == 0.0);
}

TEST_CASE("left-right flip equivariance of the row scan") {
  Rng rng(43);
  for (int seed = 0; seed < 5; ++seed) {
    Rng prng(uint64_t(100 + seed));
    auto p = make_lstm_params<double>(5, 3, 0, prng);
    auto map = testutil::rand_tensor({4, 7, 3}, rng);
    auto a = row_scan_bidirectional(map, p);
    auto b = row_scan_bidirectional(flip_lr(map), p);
    CHECK(max_abs_diff(b, flip_lr(swap_channel_halves(a))) < 1e-12);
  }
}

TEST_CASE("column scan equals transposed row scan") {
  Rng rng(44);
  auto p = make_lstm_params<double>(4, 6, 0, rng);
  auto map = testutil::rand_tensor({5, 3, 6}, rng);
  auto a = column_scan_bidirectional(map, p);
  auto b = transpose_hw(row_scan_bidirectional(transpose_hw(map), p));
  CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("height-1 column scan gives identical halves") {
  Rng rng(45);
  const int n = 3;
  auto p = make_lstm_params<double>(n, 2, 0, rng);
  auto map = testutil::rand_tensor({1, 6, 2}, rng);
  auto out = column_scan_bidirectional(map, p);
  for (int x = 0; x < 6; ++x)
    for (int k = 0; k < n; ++k)
      CHECK(out.at3(0, x, k) == out.at3(0, x, n + k));
}

TEST_CASE("up-down flip equivariance of the column scan") {
  Rng rng(46);
  for (int seed = 0; seed < 5; ++seed) {
    Rng prng(uint64_t(200 + seed));
    auto p = make_lstm_params<double>(4, 3, 0, prng);
    auto map = testutil::rand_tensor({6, 4, 3}, rng);
    auto a = column_scan_bidirectional(map, p);
    auto b = column_scan_bidirectional(flip_ud(map), p);
    CHECK(max_abs_diff(b, flip_ud(swap_channel_halves(a))) < 1e-12);
  }
}

TEST_CASE("1x1 map reduces to two chained single LSTM steps") {
  Rng rng(47);
  const int n = 4, m = 3;
  auto p = make_slstm_params<double>(n, m, 0, rng);
  auto map = testutil::rand_tensor({1, 1, m}, rng);
  auto out = slstm_forward(map, p);
  CHECK(out.shape() == std::vector<int>{1, 1, 2 * n});

  // direct two-step oracle
  std::vector<double> x(map.vec());
  auto s1 = lstm_step(x, LstmState<double>::zero(n), p.horizontal);
  std::vector<double> mid(s1.h);
  mid.insert(mid.end(), s1.h.begin(), s1.h.end());
  auto s2 = lstm_step(mid, LstmState<double>::zero(n), p.vertical);
  for (int k = 0; k < n; ++k) {
    CHECK(out.at3(0, 0, k) == doctest::Approx(s2.h[size_t(k)]).epsilon(1e-15));
    CHECK(out.at3(0, 0, n + k) == doctest::Approx(s2.h[size_t(k)]).epsilon(1e-15));
  }
}

TEST_CASE("slstm output is 2N channels at the input spatial size") {
  Rng rng(48);
  auto p = make_slstm_params<double>(8, 8, 0, rng);
  auto map = testutil::rand_tensor({16, 16, 8}, rng);
  auto out = slstm_forward(map, p);
  CHECK(out.shape() == std::vector<int>{16, 16, 16});
}

TEST_CASE("180-degree rotation composite identity of the slstm") {
  // composition of the two flip equivariances: rotating the input rotates
  // the output once the intermediate and final half swaps are applied
  Rng rng(49);
  for (int seed = 0; seed < 5; ++seed) {
    Rng prng(uint64_t(300 + seed));
    auto p = make_slstm_params<double>(4, 3, 0, prng);
    auto map = testutil::rand_tensor({5, 6, 3}, rng);
    auto rotated = slstm_forward(rot180(map), p);
    auto mid = row_scan_bidirectional(map, p.horizontal);
    auto expect = rot180(swap_channel_halves(
        column_scan_bidirectional(swap_channel_halves(mid), p.vertical)));
    CHECK(max_abs_diff(rotated, expect) < 1e-12);
    // and the first stage alone obeys the plain flip rule under rotation
    auto mid_rot = row_scan_bidirectional(rot180(map), p.horizontal);
    CHECK(max_abs_diff(mid_rot, rot180(swap_channel_halves(mid))) < 1e-12);
  }
}

TEST_CASE("dsclstm with zero scene projections equals the dslstm") {
  Rng rng(50);
  const int n = 4, m = 3, sdim = 5;
  auto p = make_dsclstm_params<double>(2, n, m, sdim, rng);
  auto map = testutil::rand_tensor({4, 5, m}, rng);
  std::vector<double> scene = testutil::rand_vec(sdim, rng);

  auto zeroed = p;
  for (auto& layer : zeroed.layers)
    for (auto* lp : {&layer.horizontal, &layer.vertical})
      for (auto* w : {&lp->w_si, &lp->w_sf, &lp->w_so, &lp->w_sg})
        std::fill(w->vec().begin(), w->vec().end(), 0.0);

  auto with_scene = dsclstm_forward(map, scene, zeroed);
  auto without = dsclstm_forward(map, std::vector<double>{}, zeroed);
  CHECK(max_abs_diff(with_scene, without) == 0.0);
}

TEST_CASE("perturbations reach the opposite corner") {
  Rng rng(51);
  const int n = 8, m = 4;
  auto p = make_dsclstm_params<double>(2, n, m, 0, rng);
  auto map = testutil::rand_tensor({16, 16, m}, rng);
  std::vector<double> none;
  auto base = dsclstm_forward(map, none, p);
  auto perturbed = map;
  perturbed.at3(0, 0, 0) += 1e-3;
  auto out = dsclstm_forward(perturbed, none, p);
  double delta = 0;
  for (int k = 0; k < 2 * n; ++k)
    delta = std::max(delta, std::abs(out.at3(15, 15, k) - base.at3(15, 15, k)));
  CHECK(delta > 1e-8);
}

TEST_CASE("distinct scene vectors modulate every location") {
  Rng rng(52);
  const int n = 6, m = 4, sdim = 8;
  auto p = make_dsclstm_params<double>(2, n, m, sdim, rng);
  auto map = testutil::rand_tensor({16, 16, m}, rng);
  auto s1 = testutil::rand_vec(sdim, rng);
  auto s2 = testutil::rand_vec(sdim, rng);
  auto a = dsclstm_forward(map, s1, p);
  auto b = dsclstm_forward(map, s2, p);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      double d = 0;
      for (int k = 0; k < 2 * n; ++k)
        d = std::max(d, std::abs(a.at3(y, x, k) - b.at3(y, x, k)));
      CHECK(d > 1e-6);
    }
}

TEST_CASE("shared-parameter gradients are the sum of per-direction gradients") {
  Rng rng(53);
  const int n = 4, m = 3;
  auto p = make_lstm_params<double>(n, m, 0, rng);
  auto map = testutil::rand_tensor({3, 5, m}, rng);
  ScanCache<double> cache;
  auto out = row_scan_bidirectional(map, p, static_cast<const std::vector<double>*>(nullptr), &cache);
  auto dout = testutil::rand_tensor(out.shape(), rng);

  auto gfull = lstm_params_like(p);
  row_scan_backward(map, out, p, static_cast<const std::vector<double>*>(nullptr), cache, dout, gfull, static_cast<std::vector<double>*>(nullptr));

  // zero one half of dout to isolate each direction's contribution
  auto dfwd = dout, dbwd = dout;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x)
      for (int k = 0; k < n; ++k) {
        dfwd.at3(y, x, n + k) = 0.0;
        dbwd.at3(y, x, k) = 0.0;
      }
  auto ga = lstm_params_like(p), gb = lstm_params_like(p);
  row_scan_backward(map, out, p, static_cast<const std::vector<double>*>(nullptr), cache, dfwd, ga, static_cast<std::vector<double>*>(nullptr));
  row_scan_backward(map, out, p, static_cast<const std::vector<double>*>(nullptr), cache, dbwd, gb, static_cast<std::vector<double>*>(nullptr));

  std::vector<Tensor<double>*> full, a, b;
  gfull.visit([&](const char*, Tensor<double>& t) { full.push_back(&t); });
  ga.visit([&](const char*, Tensor<double>& t) { a.push_back(&t); });
  gb.visit([&](const char*, Tensor<double>& t) { b.push_back(&t); });
  for (size_t i = 0; i < full.size(); ++i)
    for (size_t j = 0; j < full[i]->size(); ++j)
      CHECK((*full[i])[j] ==
            doctest::Approx((*a[i])[j] + (*b[i])[j]).epsilon(1e-12));
}

TEST_CASE("row scan backward matches finite differences") {
  Rng rng(54);
  const int n = 3, m = 2, sdim = 2;
  auto p = make_lstm_params<double>(n, m, sdim, rng);
  auto map = testutil::rand_tensor({2, 4, m}, rng);
  std::vector<double> scene = testutil::rand_vec(sdim, rng);
  auto wts = testutil::rand_tensor({2, 4, 2 * n}, rng);

  ScanCache<double> cache;
  auto out = row_scan_bidirectional(map, p, &scene, &cache);
  auto grads = lstm_params_like(p);
  std::vector<double> dscene(size_t(sdim), 0.0);
  auto dmap = row_scan_backward(map, out, p, &scene, cache, wts, grads, &dscene);

  auto f_map = [&](const Tensor<double>& x) {
    return weighted_sum(row_scan_bidirectional(x, p, &scene), wts);
  };
  CHECK(grad_rel_error(dmap, finite_diff_gradient(f_map, map)) < 1e-4);

  auto flat = pack(p);
  auto f_params = [&](const Tensor<double>& t) {
    auto q = p;
    unpack(t, q);
    return weighted_sum(row_scan_bidirectional(map, q, &scene), wts);
  };
  CHECK(grad_rel_error(pack(grads), finite_diff_gradient(f_params, flat)) < 1e-4);

  Tensor<double> st({sdim}, scene);
  auto f_scene = [&](const Tensor<double>& t) {
    std::vector<double> s(t.vec());
    return weighted_sum(row_scan_bidirectional(map, p, &s), wts);
  };
  CHECK(grad_rel_error(Tensor<double>({sdim}, dscene),
                       finite_diff_gradient(f_scene, st)) < 1e-4);
}

TEST_CASE("full dsclstm backward matches finite differences") {
  Rng rng(55);
  const int n = 6, m = 4, sdim = 3;
  auto p = make_dsclstm_params<double>(2, n, m, sdim, rng);
  auto map = testutil::rand_tensor({6, 6, m}, rng);
  std::vector<double> scene = testutil::rand_vec(sdim, rng);
  auto wts = testutil::rand_tensor({6, 6, 2 * n}, rng);

  DsclstmCache<double> cache;
  dsclstm_forward(map, scene, p, &cache);
  auto grads = dsclstm_params_like(p);
  std::vector<double> dscene(size_t(sdim), 0.0);
  auto dmap = dsclstm_backward(map, scene, p, cache, wts, grads, &dscene);

  auto f_map = [&](const Tensor<double>& x) {
    return weighted_sum(dsclstm_forward(x, scene, p), wts);
  };
  CHECK(grad_rel_error(dmap, finite_diff_gradient(f_map, map)) < 1e-4);

  auto flat = pack(p);
  auto f_params = [&](const Tensor<double>& t) {
    auto q = p;
    unpack(t, q);
    return weighted_sum(dsclstm_forward(map, scene, q), wts);
  };
  CHECK(grad_rel_error(pack(grads), finite_diff_gradient(f_params, flat)) < 1e-4);

  Tensor<double> st({sdim}, scene);
  auto f_scene = [&](const Tensor<double>& t) {
    std::vector<double> s(t.vec());
    return weighted_sum(dsclstm_forward(map, s, p), wts);
  };
  CHECK(grad_rel_error(Tensor<double>({sdim}, dscene),
                       finite_diff_gradient(f_scene, st)) < 1e-4);
}

TEST_CASE("dsclstm validates depth and dims") {
  Rng rng(56);
  CHECK_THROWS_AS(make_dsclstm_params<double>(0, 4, 3, 0, rng), ConfigError);
  CHECK_THROWS_AS(make_dsclstm_params<double>(5, 4, 3, 0, rng), ConfigError);
  auto p = make_lstm_params<double>(4, 3, 0, rng);
  auto bad = testutil::rand_tensor({3, 3, 5}, rng);
  CHECK_THROWS_AS(row_scan_bidirectional(bad, p), DimError);
  std::vector<double> scene{1.0, 2.0};
  auto map = testutil::rand_tensor({3, 3, 3}, rng);
  CHECK_THROWS_AS(row_scan_bidirectional(map, p, &scene), ConfigError);
}
