#include "ttns/tucker_integrator.hpp"

#include <gtest/gtest.h>

#include "support/test_util.hpp"

using namespace ttns;
namespace tu = ttns::testutil;

namespace {

TuckerState random_tucker(const std::vector<Index>& phys, const std::vector<Index>& ranks,
                          std::mt19937_64& eng) {
  std::vector<Index> core_dims{1};
  core_dims.insert(core_dims.end(), ranks.begin(), ranks.end());
  DenseTensor core = tu::random_tensor(core_dims, eng);
  core *= Complex(1.0 / frobenius_norm(core), 0.0);
  std::vector<Matrix> bases;
  for (std::size_t i = 0; i < phys.size(); ++i)
    bases.push_back(qr_thin(tu::random_matrix(phys[i], ranks[i], eng)).q);
  return TuckerState{core, bases};
}

/// Hermitian single-mode fields: F(Y) = scale * (Y x_1 H_1 + ... + Y x_d H_d).
TensorField mode_sum_field(std::vector<Matrix> hs, Complex scale) {
  return [hs = std::move(hs), scale](double, const DenseTensor& y) {
    DenseTensor out(y.dims());
    for (std::size_t i = 0; i < hs.size(); ++i)
      out += mode_product(y, static_cast<int>(i) + 1, hs[i]);
    out *= scale;
    return out;
  };
}

Matrix random_hermitian(Index n, std::mt19937_64& eng) {
  Matrix a = tu::random_matrix(n, n, eng);
  return (a + a.adjoint()) / 2.0;
}

}  // namespace

TEST(PhiBasis, ZeroFieldKeepsRangeAndRank) {
  auto eng = tu::rng(501);
  TuckerState s = random_tucker({4, 3}, {2, 2}, eng);
  TensorField zero = [](double, const DenseTensor& y) { return DenseTensor(y.dims()); };
  BasisUpdate b = phi_basis(s, 1, zero, 0.0, 0.1, OdeConfig{});
  EXPECT_EQ(b.u_hat.cols(), 2);
  const Matrix& u0 = s.bases[0];
  EXPECT_LT((b.u_hat * b.u_hat.adjoint() - u0 * u0.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
  // m_hat is unitary when no augmentation happened
  EXPECT_LT((b.m_hat.adjoint() * b.m_hat - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PhiBasis, OldRangeContainedInAugmented) {
  auto eng = tu::rng(502);
  TuckerState s = random_tucker({5, 4, 3}, {2, 2, 2}, eng);
  TensorField f = mode_sum_field({random_hermitian(5, eng), random_hermitian(4, eng),
                                  random_hermitian(3, eng)},
                                 Complex(0.0, -1.0));
  for (int i = 1; i <= 3; ++i) {
    BasisUpdate b = phi_basis(s, i, f, 0.0, 0.05, OdeConfig{});
    const Matrix& u0 = s.bases[static_cast<std::size_t>(i - 1)];
    EXPECT_LT((u0 - b.u_hat * (b.u_hat.adjoint() * u0)).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_LE(b.u_hat.cols(), 2 * u0.cols());
  }
}

TEST(PhiBasis, MatchesDenseGalerkinSubproblem) {
  auto eng = tu::rng(503);
  TuckerState s = random_tucker({4, 3}, {2, 2}, eng);
  TensorField f =
      mode_sum_field({random_hermitian(4, eng), random_hermitian(3, eng)}, Complex(0.0, -1.0));
  const int i = 1;
  const double t1 = 0.05;
  OdeConfig ode{OdeMethod::rk4, 4};

  // independent dense route: build V from the same starting data, integrate
  // the projected equation for the full tensor, then read K back off
  QrResult qr = qr_thin(matricize(s.core, i).transpose());
  DenseTensor t = tensorize(qr.q.transpose(), i, {1, qr.q.cols(), s.core.dim(2)});
  t = mode_product(t, 2, s.bases[1]);
  Matrix v = matricize(t, i).transpose();
  DenseTensor y0 = tucker_reconstruct(s);
  OdeField projected = [&](double time, const DenseTensor& y) {
    DenseTensor fy = f(time, y);
    Matrix proj = matricize(fy, i) * v.conjugate() * v.transpose();
    return tensorize(proj, i, y.dims());
  };
  DenseTensor y1 = ode_solve(projected, y0, 0.0, t1, ode);
  Matrix k_oracle = matricize(y1, i) * v.conjugate();
  Matrix u_oracle = orthonormal_range(hcat(k_oracle, s.bases[0]));

  BasisUpdate b = phi_basis(s, i, f, 0.0, t1, ode);
  ASSERT_EQ(b.u_hat.cols(), u_oracle.cols());
  EXPECT_LT((b.u_hat * b.u_hat.adjoint() - u_oracle * u_oracle.adjoint()).cwiseAbs().maxCoeff(),
            1e-10);
}

TEST(PhiZero, TrivialSubflowReturnsIdentities) {
  auto eng = tu::rng(504);
  TuckerState s = random_tucker({3, 3}, {2, 2}, eng);
  auto [u0, m0] = phi_zero_is_trivial(s);
  EXPECT_TRUE(u0.isIdentity(1e-15));
  EXPECT_TRUE(m0.isIdentity(1e-15));
  // r0 = 1: the identities are 1x1
  EXPECT_EQ(u0.rows(), 1);
}

TEST(PhiZero, ModeZeroAugmentationHasExactRank) {
  // extended state with r0 = 2: (K_0(t1), I) always has rank exactly r0
  auto eng = tu::rng(505);
  std::vector<Index> core_dims{2, 2, 2};
  DenseTensor core = tu::random_tensor(core_dims, eng);
  TuckerState s{core, {qr_thin(tu::random_matrix(4, 2, eng)).q, qr_thin(tu::random_matrix(3, 2, eng)).q}};
  TensorField f =
      mode_sum_field({random_hermitian(4, eng), random_hermitian(3, eng)}, Complex(0.0, -1.0));
  // K0 ODE: K0(t) in C^{r0 x r0}, fields projected through V0
  QrResult qr = qr_thin(matricize(s.core, 0).transpose());
  DenseTensor t = tensorize(qr.q.transpose(), 0, {qr.q.cols(), 2, 2});
  t = mode_product(t, 1, s.bases[0]);
  t = mode_product(t, 2, s.bases[1]);
  Matrix v = matricize(t, 0).transpose();
  OdeField k_field = [&](double time, const DenseTensor& k) {
    Matrix km = matricize(k, 0);
    DenseTensor y = tensorize((km * v.transpose()), 0, {2, 4, 3});
    Matrix rhs = matricize(f(time, y), 0) * v.conjugate();
    return tensorize(rhs, 0, std::vector<Index>{2, 2});
  };
  Matrix k0 = Matrix::Identity(2, 2) * qr.r.transpose();
  DenseTensor k1 = ode_solve(k_field, tensorize(k0, 0, {2, 2}), 0.0, 0.05, OdeConfig{});
  Matrix aug = hcat(matricize(k1, 0), Matrix::Identity(2, 2));
  SvdResult svd = svd_reduced(aug);
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < svd.sigma.size(); ++k)
    if (svd.sigma(k) > 1e-12 * svd.sigma(0)) ++rank;
  EXPECT_EQ(rank, 2);
}

TEST(PsiCore, ZeroFieldReproducesStart) {
  auto eng = tu::rng(506);
  TuckerState s = random_tucker({4, 3}, {2, 2}, eng);
  TensorField zero = [](double, const DenseTensor& y) { return DenseTensor(y.dims()); };
  std::vector<Matrix> u_hats, m_hats;
  for (int i = 1; i <= 2; ++i) {
    BasisUpdate b = phi_basis(s, i, zero, 0.0, 0.1, OdeConfig{});
    u_hats.push_back(b.u_hat);
    m_hats.push_back(b.m_hat);
  }
  CoreUpdate c = psi_core(s.core, u_hats, m_hats, zero, 0.0, 0.1, OdeConfig{});
  EXPECT_LT(tu::max_abs_diff(c.c_hat1, c.c_hat0), 1e-15);
  // reconstructed augmented start equals the input state
  TuckerState aug{c.c_hat0, u_hats};
  EXPECT_LT(tu::rel_err(tucker_reconstruct(aug), tucker_reconstruct(s)), 1e-12);
}

TEST(PsiCore, AugmentedStartEqualsInputState) {
  auto eng = tu::rng(507);
  TuckerState s = random_tucker({4, 4, 3}, {2, 2, 3}, eng);
  TensorField f = mode_sum_field({random_hermitian(4, eng), random_hermitian(4, eng),
                                  random_hermitian(3, eng)},
                                 Complex(0.0, -1.0));
  std::vector<Matrix> u_hats, m_hats;
  for (int i = 1; i <= 3; ++i) {
    BasisUpdate b = phi_basis(s, i, f, 0.0, 0.02, OdeConfig{});
    u_hats.push_back(b.u_hat);
    m_hats.push_back(b.m_hat);
  }
  CoreUpdate c = psi_core(s.core, u_hats, m_hats, f, 0.0, 0.02, OdeConfig{});
  TuckerState aug{c.c_hat0, u_hats};
  EXPECT_LT(tu::rel_err(tucker_reconstruct(aug), tucker_reconstruct(s)), 1e-11);
}

TEST(PsiCore, SchrodingerFieldKeepsCoreNorm) {
  auto eng = tu::rng(508);
  TuckerState s = random_tucker({4, 3}, {2, 2}, eng);
  TensorField f =
      mode_sum_field({random_hermitian(4, eng), random_hermitian(3, eng)}, Complex(0.0, -1.0));
  std::vector<Matrix> u_hats, m_hats;
  for (int i = 1; i <= 2; ++i) {
    BasisUpdate b = phi_basis(s, i, f, 0.0, 0.01, OdeConfig{});
    u_hats.push_back(b.u_hat);
    m_hats.push_back(b.m_hat);
  }
  CoreUpdate c = psi_core(s.core, u_hats, m_hats, f, 0.0, 0.01, OdeConfig{});
  EXPECT_NEAR(frobenius_norm(c.c_hat1), frobenius_norm(c.c_hat0), 1e-9);
}

TEST(PsiCore, MatchesDenseSubspaceOracle) {
  auto eng = tu::rng(509);
  TuckerState s = random_tucker({4, 3}, {2, 2}, eng);
  TensorField f =
      mode_sum_field({random_hermitian(4, eng), random_hermitian(3, eng)}, Complex(0.0, -1.0));
  OdeConfig ode{OdeMethod::rk4, 2};
  std::vector<Matrix> u_hats, m_hats;
  for (int i = 1; i <= 2; ++i) {
    BasisUpdate b = phi_basis(s, i, f, 0.0, 0.05, ode);
    u_hats.push_back(b.u_hat);
    m_hats.push_back(b.m_hat);
  }
  CoreUpdate c = psi_core(s.core, u_hats, m_hats, f, 0.0, 0.05, ode);
  // dense oracle: integrate the projected equation for the full tensor in
  // the fixed augmented subspace, starting from the projected initial state
  OdeField projected = [&](double time, const DenseTensor& y) {
    DenseTensor fy = f(time, y);
    for (int i = 1; i <= 2; ++i) {
      fy = mode_product(fy, i, u_hats[static_cast<std::size_t>(i - 1)].adjoint());
      fy = mode_product(fy, i, u_hats[static_cast<std::size_t>(i - 1)]);
    }
    return fy;
  };
  DenseTensor y0 = tucker_reconstruct(s);
  for (int i = 1; i <= 2; ++i) {
    y0 = mode_product(y0, i, u_hats[static_cast<std::size_t>(i - 1)].adjoint());
    y0 = mode_product(y0, i, u_hats[static_cast<std::size_t>(i - 1)]);
  }
  DenseTensor y1 = ode_solve(projected, y0, 0.0, 0.05, ode);
  TuckerState result{c.c_hat1, u_hats};
  EXPECT_LT(tu::rel_err(tucker_reconstruct(result), y1), 1e-11);
}

TEST(TuckerStep, ZeroFieldWithLooseThetaReproducesState) {
  auto eng = tu::rng(510);
  TuckerState s = random_tucker({4, 3, 2}, {2, 2, 2}, eng);
  TensorField zero = [](double, const DenseTensor& y) { return DenseTensor(y.dims()); };
  TuckerStepResult r = tucker_step(s, zero, 0.0, 0.1, 1e-12, OdeConfig{});
  EXPECT_LT(tu::rel_err(tucker_reconstruct(r.state), tucker_reconstruct(s)), 1e-11);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(r.state.core.dim(i + 1), s.core.dim(i + 1));
}

TEST(TuckerStep, RankBoundAndNormConservation) {
  auto eng = tu::rng(511);
  TuckerState s = random_tucker({4, 4}, {2, 2}, eng);
  TensorField f =
      mode_sum_field({random_hermitian(4, eng), random_hermitian(4, eng)}, Complex(0.0, -1.0));
  TuckerStepResult r = tucker_step(s, f, 0.0, 0.01, 1e-10, OdeConfig{});
  for (int i = 0; i < 2; ++i) EXPECT_LE(r.state.core.dim(i + 1), 2 * s.core.dim(i + 1));
  const double n0 = frobenius_norm(tucker_reconstruct(s));
  const double n1 = frobenius_norm(tucker_reconstruct(r.state));
  EXPECT_GE(n1, n0 - r.truncation.certified_bound() - 1e-9);
  EXPECT_LE(n1, n0 + 1e-9);
}

TEST(TuckerStep, ExactnessOnPolynomialPath) {
  auto eng = tu::rng(512);
  // A(t) = C(t) x1 U1(t) x2 U2 with degree-1 factors: total degree 2, so the
  // quadrature inside one RK4 step is exact
  const Index n1 = 4, n2 = 3, r1 = 2, r2 = 2;
  DenseTensor c0 = tu::random_tensor({1, r1, r2}, eng);
  DenseTensor c1 = tu::random_tensor({1, r1, r2}, eng);
  c1 *= Complex(0.3, 0.0);
  Matrix u1_0 = qr_thin(tu::random_matrix(n1, r1, eng)).q;
  Matrix w = tu::random_matrix(n1, r1, eng) * 0.2;
  Matrix u2 = qr_thin(tu::random_matrix(n2, r2, eng)).q;
  auto path = [&](double t) {
    DenseTensor c = c0;
    DenseTensor ct = c1;
    ct *= Complex(t, 0.0);
    c += ct;
    Matrix u1 = u1_0 + t * w;
    DenseTensor a = mode_product(c, 1, u1);
    return mode_product(a, 2, u2);
  };
  auto derivative = [&](double t) {
    Matrix u1 = u1_0 + t * w;
    DenseTensor c = c0;
    DenseTensor ct = c1;
    ct *= Complex(t, 0.0);
    c += ct;
    DenseTensor term1 = mode_product(mode_product(c1, 1, u1), 2, u2);
    DenseTensor term2 = mode_product(mode_product(c, 1, w), 2, u2);
    return term1 + term2;
  };
  TensorField f = [&](double t, const DenseTensor&) { return derivative(t); };

  // factorized orthonormal starting value of tree rank (2,2)
  TuckerState s;
  {
    QrResult q1 = qr_thin(u1_0);
    DenseTensor core = mode_product(c0, 1, q1.r);
    s = TuckerState{core, {q1.q, u2}};
  }
  const double h = 0.1;
  TuckerStepResult r = tucker_step(s, f, 0.0, h, 1e-12, OdeConfig{});
  DenseTensor want = path(h);
  EXPECT_LT(tu::rel_err(tucker_reconstruct(r.state), want), 1e-8);
}
