#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "umx/model.hpp"

#include <cmath>
#include <numbers>

using namespace umx;
using namespace umx::model;

namespace {

struct Scene {
  forward::Grid2D grid;
  forward::ArrayGeometry geometry;
  TissueModel tissues;
  DebyeParameters coupling{10.0, 0.0, 1e-12, 0.1};
  MixtureField prior;
};

// 8x8 imaging patch in a 44x44 grid, six antennas around it.
Scene small_scene(oracle::Rng& rng) {
  Scene s;
  s.grid.nx = s.grid.ny = 44;
  s.grid.cell_size = 0.002;
  s.grid.imaging_mask.assign(s.grid.cell_count(), 0);
  for (int j = 18; j < 26; ++j)
    for (int i = 18; i < 26; ++i) s.grid.imaging_mask[s.grid.index(i, j)] = 1;
  for (int a = 0; a < 6; ++a) {
    const double th = 2 * std::numbers::pi * a / 6;
    s.geometry.transmitters.push_back(s.grid.position(static_cast<int>(std::lround(21.5 + 9 * std::cos(th))),
                                                      static_cast<int>(std::lround(21.5 + 9 * std::sin(th)))));
  }
  s.geometry.receivers = s.geometry.transmitters;
  s.geometry.frequencies = {6e8, 1.2e9};
  s.prior = MixtureField(64, 3);
  for (std::size_t n = 0; n < 64; ++n) {
    const double a = rng.uniform(0.1, 0.9);
    s.prior(n, 0) = a;
    s.prior(n, 1) = 1.0 - a;
  }
  return s;
}

forward::PermittivityMap scene_permittivity(const Scene& s, const MixtureField& z) {
  return build_permittivity(s.grid, z, s.tissues, s.coupling, s.geometry.frequencies);
}

}  // namespace

TEST_CASE("Debye permittivity") {
  const DebyeParameters d{4.0, 10.0, 1e-11, 0.5};
  const double f = 1e9, w = 2 * std::numbers::pi * f;
  const cplx expect = 4.0 + 10.0 / cplx(1.0, w * 1e-11) + 0.5 / cplx(0.0, w * forward::kVacuumPermittivity);
  CHECK(std::abs(d.permittivity(f) - expect) < 1e-12 * std::abs(expect));
  CHECK(d.permittivity(f).imag() < 0.0);
  CHECK_THROWS_AS((DebyeParameters{0.5, 1.0, 1e-11, 0.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DebyeParameters{2.0, -1.0, 1e-11, 0.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DebyeParameters{2.0, 1.0, 0.0, 0.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DebyeParameters{2.0, 1.0, 1e-11, -0.1}.validate()), std::invalid_argument);

  TissueModel t;
  CHECK_NOTHROW(t.validate({5e8, 1e9, 1.5e9}));
  // Default contrast between cancer and high-water tissue is of order 10%.
  for (double f2 : {5e8, 1e9, 1.5e9}) {
    const double c = std::abs(t.permittivity(2, f2)) / std::abs(t.permittivity(0, f2)) - 1.0;
    CHECK(c > 0.03);
    CHECK(c < 0.3);
  }
  TissueModel flipped = t;
  flipped.tissues[2] = flipped.tissues[1];
  flipped.tissues[1] = t.tissues[2];
  CHECK_THROWS_AS(flipped.validate({1e9}), std::invalid_argument);
}

TEST_CASE("mixture permittivity") {
  const TissueModel t;
  const double f = 9e8;
  MixtureField z(3, 3);
  z(0, 0) = 1.0;
  z(1, 0) = 0.5;
  z(1, 1) = 0.5;
  z(2, 2) = 1.0;
  const auto eps = mixture_permittivity(z, t, f);
  CHECK(eps[0] == t.permittivity(0, f));
  CHECK(std::abs(eps[1] - 0.5 * (t.permittivity(0, f) + t.permittivity(1, f))) < 1e-14 * std::abs(eps[1]));
  CHECK(eps[2] == t.permittivity(2, f));

  oracle::Rng rng(51);
  MixtureField r(200, 3);
  for (std::size_t n = 0; n < 200; ++n) {
    const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), s = a + b + c;
    r(n, 0) = a / s;
    r(n, 1) = b / s;
    r(n, 2) = 1.0 - a / s - b / s;
  }
  const auto got = mixture_permittivity(r, t, f);
  const cplx e0 = t.permittivity(0, f), e1 = t.permittivity(1, f), e2 = t.permittivity(2, f);
  for (std::size_t n = 0; n < 200; ++n) {
    double re = 0.0, im = 0.0;
    for (std::size_t m = 0; m < 3; ++m) {
      re += r(n, m) * t.permittivity(m, f).real();
      im += r(n, m) * t.permittivity(m, f).imag();
    }
    CHECK(std::abs(got[n] - cplx(re, im)) < 1e-12 * std::abs(got[n]));

    // Barycentric coordinates in the triangle of the three tissue values.
    const cplx p = got[n] - e2, u = e0 - e2, w = e1 - e2;
    const double det = u.real() * w.imag() - u.imag() * w.real();
    const double l0 = (p.real() * w.imag() - p.imag() * w.real()) / det;
    const double l1 = (u.real() * p.imag() - u.imag() * p.real()) / det;
    CHECK(l0 >= -1e-9);
    CHECK(l1 >= -1e-9);
    CHECK(l0 + l1 <= 1.0 + 1e-9);
  }

  MixtureField bad(1, 3);
  bad(0, 0) = 0.7;
  CHECK_THROWS_AS(mixture_permittivity(bad, t, f), std::invalid_argument);
  bad(0, 1) = 0.5;
  bad(0, 2) = -0.2;
  CHECK_THROWS_AS(mixture_permittivity(bad, t, f), std::invalid_argument);
}

TEST_CASE("mixture stacking round trip") {
  MixtureField z(3, 3);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t r = 0; r < 3; ++r) z(n, r) = 10.0 * static_cast<double>(r) + static_cast<double>(n);
  const RealVector s = z.stacked();
  CHECK(s[4] == 11.0);
  CHECK(s[StackShape{3, 3}.index(2, 1)] == 21.0);
  CHECK(MixtureField::from_stacked(s, {3, 3}) == z);
  CHECK_THROWS_AS(MixtureField::from_stacked(s, {4, 3}), std::invalid_argument);
}

TEST_CASE("Born operator") {
  oracle::Rng rng(52);
  const Scene s = small_scene(rng);
  const auto eps = scene_permittivity(s, s.prior);
  const auto table = forward::background_fields(s.grid, s.geometry, eps);
  const auto op = assemble_jacobian(table, s.tissues, s.grid, OperatorStorage::kMatrixFree);
  const auto dense = assemble_jacobian(table, s.tissues, s.grid, OperatorStorage::kDense);
  REQUIRE(op->rows() == 72);
  REQUIRE(op->cols() == 192);
  const Eigen::MatrixXcd a = op->to_dense();
  CHECK((dense->to_dense() - a).norm() <= 1e-14 * a.norm());

  SUBCASE("entries follow the reciprocity form") {
    const auto cells = s.grid.imaging_cells();
    for (std::size_t f = 0; f < 2; ++f) {
      const double k0 = forward::wavenumber(s.geometry.frequencies[f]);
      for (std::size_t tx : {0u, 3u})
        for (std::size_t rx : {1u, 3u})
          for (std::size_t n : {0u, 27u, 63u})
            for (std::size_t r = 0; r < 3; ++r) {
              const cplx want = k0 * k0 * 4e-6 * table.transmitter_field(f, tx)[cells[n]] *
                                table.receiver_field(f, rx)[cells[n]] *
                                s.tissues.permittivity(r, s.geometry.frequencies[f]);
              const cplx got = a(static_cast<Eigen::Index>(s.geometry.measurement_index(f, tx, rx)),
                                 static_cast<Eigen::Index>(r * 64 + n));
              CHECK(std::abs(got - want) <= 1e-12 * std::abs(want));
            }
    }
  }

  SUBCASE("adjoint identity") {
    for (int trial = 0; trial < 10; ++trial) {
      const ComplexVector x = rng.complex_vector(192), y = rng.complex_vector(72);
      const cplx lhs = y.dot(op->apply(x));
      const cplx rhs = op->adjoint(y).dot(x);
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));
    }
  }

  SUBCASE("linearity") {
    const ComplexVector x = rng.complex_vector(192), z = rng.complex_vector(192);
    const cplx alpha(0.3, -1.2), beta(-2.0, 0.5);
    const ComplexVector lhs = op->apply(alpha * x + beta * z);
    CHECK((lhs - alpha * op->apply(x) - beta * op->apply(z)).norm() <= 1e-12 * lhs.norm());
    const RealVector v = rng.real_vector(192);
    CHECK((op->apply_real(v) - a * v.cast<cplx>()).norm() <= 1e-12 * (a * v.cast<cplx>()).norm());
    CHECK((op->adjoint_real(lhs) - (a.adjoint() * lhs).real()).norm() <= 1e-12 * lhs.norm() * a.norm());
  }

  SUBCASE("blocks are scaled copies of the first") {
    for (std::size_t f = 0; f < 2; ++f) {
      const double freq = s.geometry.frequencies[f];
      const auto rows = Eigen::seqN(static_cast<Eigen::Index>(f * 36), 36);
      const Eigen::MatrixXcd a1 = a(rows, Eigen::seqN(0, 64));
      for (std::size_t r = 1; r < 3; ++r) {
        const cplx ratio = s.tissues.permittivity(r, freq) / s.tissues.permittivity(0, freq);
        const Eigen::MatrixXcd ar = a(rows, Eigen::seqN(static_cast<Eigen::Index>(r * 64), 64));
        CHECK((ar - ratio * a1).norm() <= 1e-12 * ar.norm());
      }
    }
  }

  SUBCASE("doubling the cell area doubles every entry") {
    const auto& born = dynamic_cast<const BornOperator&>(*op);
    const BornOperator twice(s.geometry.frequencies, 6, 6, born.pixel_fields(), s.tissues,
                             s.grid.cell_size * std::sqrt(2.0));
    CHECK((twice.to_dense() - 2.0 * a).norm() <= 1e-13 * a.norm());
  }

  SUBCASE("finite-difference check against the full solver") {
    const ComplexVector y0 = forward::simulate_measurements(s.grid, s.geometry, eps);
    const RealVector v = s.prior.stacked();
    int good = 0;
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t n = static_cast<std::size_t>(rng.integer(0, 63));
      MixtureField z = s.prior;
      z(n, 0) += 1e-4;
      z(n, 1) -= 1e-4;
      const ComplexVector y1 = forward::simulate_measurements(s.grid, s.geometry, scene_permittivity(s, z));
      const ComplexVector predicted = op->apply_real(z.stacked() - v);
      const double rel = (y1 - y0 - predicted).norm() / predicted.norm();
      good += rel < 0.01;
    }
    CHECK(good == 5);
  }
}

TEST_CASE("Jacobian assembly rejects incomplete tables") {
  oracle::Rng rng(53);
  const Scene s = small_scene(rng);
  const forward::BackgroundFieldTable empty(6, 6, s.geometry.frequencies);
  CHECK_THROWS_AS(assemble_jacobian(empty, s.tissues, s.grid), InvalidState);
}

TEST_CASE("adjusted measurements and Born error") {
  oracle::Rng rng(54);
  const Eigen::MatrixXcd a = rng.complex_matrix(10, 6);
  const DenseOperator op(a);
  const ComplexVector y = rng.complex_vector(10), y_prior = rng.complex_vector(10);
  const RealVector v = rng.real_vector(6);
  CHECK((adjusted_measurements(y_prior, y_prior, op, v) - a * v.cast<cplx>()).norm() < 1e-14);
  CHECK((adjusted_measurements(y, y_prior, op, RealVector::Zero(6)) - (y - y_prior)).norm() == 0.0);
  ComplexVector expect(10);
  for (Eigen::Index m = 0; m < 10; ++m) {
    cplx acc = y[m] - y_prior[m];
    for (Eigen::Index k = 0; k < 6; ++k) acc += a(m, k) * v[k];
    expect[m] = acc;
  }
  CHECK((adjusted_measurements(y, y_prior, op, v) - expect).norm() < 1e-13);
  CHECK_THROWS_AS(adjusted_measurements(y, rng.complex_vector(9), op, v), std::invalid_argument);
  CHECK_THROWS_AS(adjusted_measurements(y, y_prior, op, rng.real_vector(5)), std::invalid_argument);

  CHECK(born_error(y_prior, y_prior, op, v, v) == 0.0);
  CHECK(born_error(y, y_prior, op, v, v) ==
        doctest::Approx((y - y_prior).norm() / expect.norm()).epsilon(1e-12));
  const RealVector z_true = rng.real_vector(6);
  const ComplexVector y_born = y_prior + a * (z_true - v).cast<cplx>();
  CHECK(born_error(y_born, y_prior, op, v, z_true) < 1e-14);
  CHECK_THROWS_AS(born_error(y_prior, y_prior, DenseOperator(Eigen::MatrixXcd::Zero(10, 6)), v, v),
                  std::domain_error);
}

TEST_CASE("geometry hash") {
  oracle::Rng rng(55);
  Scene s = small_scene(rng);
  const auto h0 = geometry_hash(s.grid, s.geometry);
  CHECK(geometry_hash(s.grid, s.geometry) == h0);
  s.geometry.frequencies[1] = 1.25e9;
  CHECK(geometry_hash(s.grid, s.geometry) != h0);
  Scene t = small_scene(rng);
  t.grid.imaging_mask[0] = 1;
  CHECK(geometry_hash(t.grid, t.geometry) != h0);
}
