#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmforge/kernels.hpp"
#include "mmforge/rng.hpp"

using namespace mmforge;
namespace k = mmforge::kern;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

bool close(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

bool close_vec(const std::vector<double>& a, const std::vector<double>& b, double tol = 1e-12) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!close(a[i], b[i], tol)) return false;
  }
  return true;
}

// Backend selection scoped to one check; restores the previous backend.
struct BackendGuard {
  explicit BackendGuard(k::Backend b) : prev(k::active_backend()) { REQUIRE(k::set_backend(b)); }
  ~BackendGuard() { k::set_backend(prev); }
  k::Backend prev;
};

}  // namespace

TEST_CASE("dot matches a plain loop across remainder sizes") {
  Rng rng(11);
  for (std::size_t n = 1; n <= 19; ++n) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);
    double want = 0.0;
    for (std::size_t i = 0; i < n; ++i) want += a[i] * b[i];
    CHECK(close(k::dot(a.data(), b.data(), n), want));
  }
  CHECK(k::dot(nullptr, nullptr, 0) == 0.0);
}

TEST_CASE("matvec matches a plain loop, with and without bias") {
  Rng rng(12);
  for (std::size_t rows : {1u, 3u, 8u, 13u}) {
    for (std::size_t cols : {1u, 4u, 9u, 16u}) {
      const auto w = random_vec(rng, rows * cols);
      const auto x = random_vec(rng, cols);
      const auto bias = random_vec(rng, rows);
      std::vector<double> want(rows, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) want[r] += w[r * cols + c] * x[c];
        want[r] += bias[r];
      }
      std::vector<double> got(rows, -7.0);
      k::matvec(w.data(), rows, cols, x.data(), bias.data(), got.data());
      CHECK(close_vec(got, want));

      for (std::size_t r = 0; r < rows; ++r) want[r] -= bias[r];
      k::matvec(w.data(), rows, cols, x.data(), nullptr, got.data());
      CHECK(close_vec(got, want));
    }
  }
}

TEST_CASE("matvec_t_acc accumulates the transpose product") {
  Rng rng(13);
  const std::size_t rows = 5, cols = 7;
  const auto w = random_vec(rng, rows * cols);
  const auto gy = random_vec(rng, rows);
  auto gx = random_vec(rng, cols);
  auto want = gx;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) want[c] += w[r * cols + c] * gy[r];
  }
  k::matvec_t_acc(w.data(), rows, cols, gy.data(), gx.data());
  CHECK(close_vec(gx, want));
}

TEST_CASE("outer_acc accumulates the outer product") {
  Rng rng(14);
  const std::size_t rows = 4, cols = 6;
  auto gw = random_vec(rng, rows * cols);
  const auto gy = random_vec(rng, rows);
  const auto x = random_vec(rng, cols);
  auto want = gw;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) want[r * cols + c] += gy[r] * x[c];
  }
  k::outer_acc(gw.data(), rows, cols, gy.data(), x.data());
  CHECK(close_vec(gw, want));
}

TEST_CASE("axpy, sum_sq, and scale match plain loops") {
  Rng rng(15);
  for (std::size_t n : {1u, 2u, 7u, 12u, 17u}) {
    const auto x = random_vec(rng, n);
    auto y = random_vec(rng, n);
    auto want = y;
    for (std::size_t i = 0; i < n; ++i) want[i] += 0.37 * x[i];
    k::axpy(n, 0.37, x.data(), y.data());
    CHECK(close_vec(y, want));

    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += x[i] * x[i];
    CHECK(close(k::sum_sq(x.data(), n), ss));

    auto z = x;
    auto wz = x;
    for (std::size_t i = 0; i < n; ++i) wz[i] *= -1.25;
    k::scale(z.data(), n, -1.25);
    CHECK(close_vec(z, wz));
  }
}

TEST_CASE("adam_update matches the elementwise recurrence") {
  Rng rng(16);
  const std::size_t n = 11;
  auto p = random_vec(rng, n);
  auto m = random_vec(rng, n);
  auto v = random_vec(rng, n);
  for (auto& x : v) x = std::abs(x);
  const auto g = random_vec(rng, n);
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 - std::pow(b1, 3), bc2 = 1.0 - std::pow(b2, 3);

  auto wp = p, wm = m, wv = v;
  for (std::size_t i = 0; i < n; ++i) {
    wm[i] = b1 * wm[i] + (1.0 - b1) * g[i];
    wv[i] = b2 * wv[i] + (1.0 - b2) * g[i] * g[i];
    wp[i] -= lr * (wm[i] / bc1) / (std::sqrt(wv[i] / bc2) + eps);
  }
  k::adam_update(n, p.data(), m.data(), v.data(), g.data(), lr, b1, b2, eps, bc1, bc2);
  CHECK(close_vec(p, wp));
  CHECK(close_vec(m, wm));
  CHECK(close_vec(v, wv));
}

TEST_CASE("backend control") {
  CHECK(k::backend_available(k::Backend::Scalar));
  CHECK(k::set_backend(k::Backend::Scalar));
  CHECK(k::active_backend() == k::Backend::Scalar);
  if (!k::backend_available(k::Backend::Avx2)) {
    CHECK_FALSE(k::set_backend(k::Backend::Avx2));
    CHECK(k::active_backend() == k::Backend::Scalar);
  }
  CHECK(k::backend_name(k::Backend::Scalar) == std::string("scalar"));
  CHECK(k::backend_name(k::Backend::Avx2) == std::string("avx2"));
}

TEST_CASE("vector backends agree with scalar within relative tolerance") {
  if (!k::backend_available(k::Backend::Avx2)) return;

  Rng rng(17);
  for (std::size_t rows : {1u, 5u, 8u, 33u}) {
    for (std::size_t cols : {1u, 3u, 16u, 29u}) {
      const auto w = random_vec(rng, rows * cols);
      const auto x = random_vec(rng, cols);
      const auto bias = random_vec(rng, rows);
      const auto gy = random_vec(rng, rows);
      const auto base_gx = random_vec(rng, cols);
      const auto base_gw = random_vec(rng, rows * cols);

      std::vector<double> y_s(rows), y_v(rows);
      auto gx_s = base_gx, gx_v = base_gx;
      auto gw_s = base_gw, gw_v = base_gw;
      double dot_s, dot_v, ss_s, ss_v;
      {
        BackendGuard g(k::Backend::Scalar);
        k::matvec(w.data(), rows, cols, x.data(), bias.data(), y_s.data());
        k::matvec_t_acc(w.data(), rows, cols, gy.data(), gx_s.data());
        k::outer_acc(gw_s.data(), rows, cols, gy.data(), x.data());
        dot_s = k::dot(w.data(), w.data(), rows * cols);
        ss_s = k::sum_sq(w.data(), rows * cols);
      }
      {
        BackendGuard g(k::Backend::Avx2);
        k::matvec(w.data(), rows, cols, x.data(), bias.data(), y_v.data());
        k::matvec_t_acc(w.data(), rows, cols, gy.data(), gx_v.data());
        k::outer_acc(gw_v.data(), rows, cols, gy.data(), x.data());
        dot_v = k::dot(w.data(), w.data(), rows * cols);
        ss_v = k::sum_sq(w.data(), rows * cols);
      }
      CHECK(close_vec(y_s, y_v));
      CHECK(close_vec(gx_s, gx_v));
      CHECK(close_vec(gw_s, gw_v));
      CHECK(close(dot_s, dot_v));
      CHECK(close(ss_s, ss_v));
    }
  }

  const std::size_t n = 23;
  auto p_s = random_vec(rng, n);
  auto m_s = random_vec(rng, n);
  auto v_s = random_vec(rng, n);
  for (auto& x : v_s) x = std::abs(x);
  auto p_v = p_s, m_v = m_s, v_v = v_s;
  const auto g = random_vec(rng, n);
  {
    BackendGuard bg(k::Backend::Scalar);
    k::adam_update(n, p_s.data(), m_s.data(), v_s.data(), g.data(), 1e-3, 0.9, 0.999, 1e-8,
                   0.1, 0.001999);
  }
  {
    BackendGuard bg(k::Backend::Avx2);
    k::adam_update(n, p_v.data(), m_v.data(), v_v.data(), g.data(), 1e-3, 0.9, 0.999, 1e-8,
                   0.1, 0.001999);
  }
  CHECK(close_vec(p_s, p_v));
  CHECK(close_vec(m_s, m_v));
  CHECK(close_vec(v_s, v_v));
}
