#include <doctest.h>

#include <cmath>

#include "eflab/autodiff.hpp"
#include "eflab/errors.hpp"
#include "eflab/rng.hpp"

using namespace eflab;
using ad::Matrix;

namespace {
Matrix random(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// f(W, x) = sum(tanh(W x + b) * 2) + mean over rows of a table
double build(ad::Tape& T, std::vector<Matrix> const& p, ad::Var& root) {
  auto const W = T.parameter(p[0], 0, "W");
  auto const b = T.parameter(p[1], 1, "b");
  auto const E = T.parameter(p[2], 2, "E");
  auto const x = T.row(E, 1);
  auto const h = T.tanh(T.add(T.matmul(W, x), b));
  std::array<ad::Var, 2> parts{h, T.row(E, 0)};
  auto const cat = T.concat(parts);
  auto const s = T.scale(cat, 2.0);
  auto const sq = T.custom({s}, T.value(s).array().square().matrix().colwise().sum(),
                           [](ad::Tape& t, std::size_t self) {
                             auto const in = t.input(self, 0);
                             t.grad_of(in.id) += 2.0 * t.value(in) * t.grad_out(self)(0, 0);
                           },
                           "sumsq");
  std::array<ad::Var, 2> terms{sq, T.constant(Matrix::Constant(1, 1, 0.25))};
  root = T.sum(terms);
  return T.value(root)(0, 0);
}
}  // namespace

TEST_CASE("tape gradients match central differences") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Matrix> p{random(3, 4, rng), random(3, 1, rng), random(2, 4, rng)};
    ad::Tape T;
    ad::Var root;
    build(T, p, root);
    T.backward(root);
    std::vector<Matrix> g(3);
    T.parameter_grads(g);
    for (std::size_t k = 0; k < p.size(); ++k) {
      for (Eigen::Index i = 0; i < p[k].size(); ++i) {
        double const h = 1e-6;
        auto pp = p, pm = p;
        pp[k].data()[i] += h;
        pm[k].data()[i] -= h;
        ad::Tape a, b;
        ad::Var ra, rb;
        double const fd = (build(a, pp, ra) - build(b, pm, rb)) / (2 * h);
        CHECK(std::abs(fd - g[k].data()[i]) <= 1e-6 + 1e-6 * std::abs(fd));
      }
    }
  }
}

TEST_CASE("mean and shared inputs accumulate") {
  ad::Tape T;
  auto const a = T.parameter(Matrix::Constant(2, 1, 1.0), 0, "a");
  std::array<ad::Var, 3> parts{a, a, T.scale(a, 3.0)};
  auto const m = T.mean(parts);
  auto const s = T.custom({m}, T.value(m).colwise().sum(),
                          [](ad::Tape& t, std::size_t self) {
                            t.grad_of(t.input(self, 0).id).array() += t.grad_out(self)(0, 0);
                          },
                          "sum");
  T.backward(s);
  std::vector<Matrix> g(1);
  T.parameter_grads(g);
  CHECK(g[0](0, 0) == doctest::Approx(5.0 / 3.0));
  CHECK(g[0](1, 0) == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("non-finite gradient names the node") {
  ad::Tape T;
  auto const a = T.parameter(Matrix::Constant(1, 1, 1.0), 0, "a");
  auto const bad = T.custom({a}, Matrix::Constant(1, 1, 0.0),
                            [](ad::Tape& t, std::size_t self) {
                              t.grad_of(t.input(self, 0).id)(0, 0) += t.grad_out(self)(0, 0) * INFINITY;
                            },
                            "exploding");
  try {
    T.backward(bad);
    FAIL("expected a NumericError");
  } catch (NumericError const& e) {
    CHECK(std::string(e.what()).find("(a)") != std::string::npos);
  }
}
