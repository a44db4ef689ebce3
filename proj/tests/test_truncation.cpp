#include "ttns/truncation.hpp"

#include <gtest/gtest.h>

#include "support/test_util.hpp"

using namespace ttns;
namespace tu = ttns::testutil;

namespace {

double dense_error(const TTN& a, const TTN& b) {
  DenseTensor da = to_full(a);
  DenseTensor db = to_full(b);
  da -= db;
  return frobenius_norm(da);
}

}  // namespace

TEST(Truncate, ThetaZeroKeepsState) {
  auto eng = tu::rng(401);
  auto tree = std::make_shared<Tree>(Tree::parse("((1,2),(3,4))", 2));
  TTN x = random_ttn(tree, uniform_compatible_rank(*tree, 2), 44);
  auto [y, report] = truncate(x, TruncationOptions{0.0, 0, {}, false});
  EXPECT_LT(dense_error(x, y), 1e-12);
  EXPECT_TRUE(report.certificate_valid());
  EXPECT_EQ(report.tail_sum, 0.0);
  (void)eng;
}

TEST(Truncate, ConstructedSmallSingularValueIsCut) {
  // root core (1,2,2) built from a 2x2 matrix with singular values (1, 1e-9)
  auto eng = tu::rng(402);
  auto tree = std::make_shared<Tree>(Tree::star({2, 2}));
  Matrix u = qr_thin(tu::random_matrix(2, 2, eng)).q;
  Matrix v = qr_thin(tu::random_matrix(2, 2, eng)).q;
  Eigen::Vector2d sv(1.0, 1e-9);
  Matrix c = u * sv.asDiagonal() * v.adjoint();
  TTN x(tree);
  DenseTensor core({1, 2, 2});
  for (Index a = 0; a < 2; ++a)
    for (Index b = 0; b < 2; ++b) core.at({0, a, b}) = c(a, b);
  x.core(tree->root()) = core;
  for (int l : tree->leaves()) x.basis(l) = Matrix::Identity(2, 2);

  auto [y, report] = truncate(x, TruncationOptions{1e-8, 0, {}, false});
  for (int l : tree->leaves()) EXPECT_EQ(y.rank(l), 1);
  const double err = dense_error(x, y);
  EXPECT_LE(err, report.certified_bound());
  EXPECT_GT(err, 0.0);
}

TEST(Truncate, TailsNeverExceedTheta) {
  auto eng = tu::rng(403);
  for (int rep = 0; rep < 20; ++rep) {
    auto tree = std::make_shared<Tree>(tu::random_tree(4 + static_cast<int>(eng() % 3), 2, eng));
    TTN x = random_ttn(tree, tu::random_rank(*tree, 4, eng), 500 + rep);
    const double theta = rep % 2 == 0 ? 1e-2 : 1e-6;
    auto [y, report] = truncate(x, TruncationOptions{theta, 0, {}, false});
    for (const auto& e : report.entries) EXPECT_LE(e.tail, theta);
    EXPECT_TRUE(is_orthonormal(x));
    (void)y;
  }
}

TEST(Truncate, CertifiedBoundHoldsOnRandomStates) {
  auto eng = tu::rng(404);
  for (int rep = 0; rep < 40; ++rep) {
    const int d = 4 + static_cast<int>(eng() % 3);
    auto tree = std::make_shared<Tree>(tu::random_tree(d, 2, eng));
    TTN x = random_ttn(tree, tu::random_rank(*tree, 4, eng), 900 + rep);
    if (rep % 3 == 0) x.core(tree->root()) *= Complex(5.0, 0.0);  // non-unit norm
    const double theta = rep % 2 == 0 ? 1e-2 : 1e-4;
    auto [y, report] = truncate(x, TruncationOptions{theta, 0, {}, false});
    ASSERT_TRUE(report.certificate_valid());
    EXPECT_LE(dense_error(x, y), report.certified_bound())
        << "tree " << tree->to_literal() << " theta " << theta;
  }
}

TEST(Truncate, RootRescaledBoundHolds) {
  auto eng = tu::rng(405);
  for (int rep = 0; rep < 10; ++rep) {
    auto tree = std::make_shared<Tree>(tu::random_tree(5, 2, eng));
    TTN x = random_ttn(tree, tu::random_rank(*tree, 3, eng), 950 + rep);
    x.core(tree->root()) *= Complex(7.0, 0.0);
    const double theta = 1e-3;
    auto [y, report] = truncate(x, TruncationOptions{theta, 0, {}, true});
    EXPECT_TRUE(report.root_rescaled);
    EXPECT_NEAR(report.certified_bound(), tree->vertex_count() * theta, 1e-15);
    EXPECT_LE(dense_error(x, y), report.certified_bound());
  }
}

TEST(Truncate, RankCapBindsAndVoidsCertificate) {
  auto eng = tu::rng(406);
  auto tree = std::make_shared<Tree>(Tree::parse("((1,2),(3,4))", 2));
  TreeRank rank = uniform_compatible_rank(*tree, 4);
  TTN x = random_ttn(tree, rank, 77);
  auto [y, report] = truncate(x, TruncationOptions{0.0, 1, {}, false});
  EXPECT_TRUE(report.cap_hit);
  EXPECT_FALSE(report.certificate_valid());
  EXPECT_TRUE(std::isnan(report.certified_bound()));
  for (int v = 1; v < tree->node_count(); ++v) EXPECT_EQ(y.rank(v), 1);
}

TEST(Truncate, PerNodeCapsApply) {
  auto tree = std::make_shared<Tree>(Tree::parse("((1,2),(3,4))", 2));
  TreeRank rank = uniform_compatible_rank(*tree, 4);
  TTN x = random_ttn(tree, rank, 78);
  std::vector<Index> caps(static_cast<std::size_t>(tree->node_count()), 64);
  const int left = tree->child(tree->root(), 0);
  caps[static_cast<std::size_t>(left)] = 2;
  auto [y, report] = truncate(x, TruncationOptions{0.0, 0, caps, false});
  EXPECT_EQ(y.rank(left), 2);
  EXPECT_TRUE(report.cap_hit);
}

TEST(Truncate, RankFloorKeepsOneDirection) {
  // every singular value below theta: ranks fall to 1, not 0
  auto tree = std::make_shared<Tree>(Tree::star({2, 2}));
  TTN x(tree);
  DenseTensor core({1, 2, 2});
  core.at({0, 0, 0}) = 1e-12;
  core.at({0, 1, 1}) = 1e-13;
  x.core(tree->root()) = core;
  for (int l : tree->leaves()) x.basis(l) = Matrix::Identity(2, 2);
  auto [y, report] = truncate(x, TruncationOptions{1e-3, 0, {}, false});
  for (int l : tree->leaves()) EXPECT_EQ(y.rank(l), 1);
  (void)report;
}

TEST(Truncate, ReportTailSumMatchesEntries) {
  auto eng = tu::rng(407);
  auto tree = std::make_shared<Tree>(tu::random_tree(5, 2, eng));
  TTN x = random_ttn(tree, tu::random_rank(*tree, 4, eng), 321);
  auto [y, report] = truncate(x, TruncationOptions{1e-3, 0, {}, false});
  double sum = 0.0;
  for (const auto& e : report.entries) sum += e.tail;
  EXPECT_NEAR(report.tail_sum, sum, 1e-15);
  EXPECT_EQ(report.vertex_count, tree->vertex_count());
  (void)y;
}

TEST(Truncate, NegativeThetaRejected) {
  auto tree = std::make_shared<Tree>(Tree::parse("(1,2)", 2));
  TTN x = random_ttn(tree, uniform_compatible_rank(*tree, 2), 1);
  EXPECT_THROW(truncate(x, TruncationOptions{-1.0, 0, {}, false}), std::invalid_argument);
}
