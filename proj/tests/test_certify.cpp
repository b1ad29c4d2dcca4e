#include <gtest/gtest.h>

#include "kcone/certify.hpp"
#include "test_util.hpp"

using namespace kcone;
using kcone::test::diag;
using kcone::test::vec;

namespace {

QuadraticCone saddle() { return make_quadratic_cone(diag({-1, -1, 1})); }

VectorField minus_p(double half_width = 2.0) {
  return make_linear_field(-diag({-1, -1, 1}), Domain::cube(3, -half_width, half_width));
}

VectorField zero_field() { return make_linear_field(Matrix::Zero(3, 3), Domain::cube(3, -2, 2)); }

// Stable rotation-contraction in (x1, x2) with strong decay in x3. At lambda = 2.5
// every pair margin equals -1.5.
Matrix spiral_matrix() {
  Matrix a(3, 3);
  a << -1, -2, 0, 2, -1, 0, 0, 0, -4;
  return a;
}

// Draws x, y from `sample_domain` until x - y is in the cone.
std::pair<Vector, Vector> ordered_pair(Rng& rng, const Domain& sample_domain, const QuadraticCone& c) {
  for (;;) {
    Vector x = sample_domain.sample(rng), y = sample_domain.sample(rng);
    if (c.margin(x - y) < -1e-3) return {x, y};
  }
}

}  // namespace

TEST(PairMargin, Examples) {
  const QuadraticCone c = saddle();
  EXPECT_DOUBLE_EQ(pair_margin(minus_p(), c, 0.0, vec({1, 0, 0}), Vector::Zero(3)), -1.0);
  EXPECT_EQ(pair_margin(zero_field(), c, 0.0, vec({1, 0.5, 0}), vec({0, 0, 1})), 0.0);
  const VectorField minus_id = make_linear_field(-Matrix::Identity(3, 3), Domain::cube(3, -2, 2));
  EXPECT_EQ(pair_margin(minus_id, c, 1.0, vec({1, 0.5, -0.25}), vec({0, 0.75, 1})), 0.0);
}

TEST(PairMargin, Errors) {
  const QuadraticCone c = saddle();
  EXPECT_THROW_CODE(pair_margin(minus_p(), c, 0.0, vec({1, 0, 0}), vec({1, 0, 0})), Errc::IdenticalPoints);
  EXPECT_THROW_CODE(pair_margin(minus_p(), c, 0.0, vec({3, 0, 0}), Vector::Zero(3)), Errc::DomainViolation);
  EXPECT_THROW_CODE(pair_margin(minus_p(), c, 0.0, vec({1, 0}), vec({0, 0})), Errc::DimensionMismatch);
}

TEST(PairMargin, ScaleAndShiftInvariance) {
  const QuadraticCone c = saddle();
  const VectorField f = make_linear_field(spiral_matrix(), Domain::cube(3, -20, 20));
  Rng rng(3);
  const Domain inner = Domain::cube(3, -2, 2);
  for (int k = 0; k < 200; ++k) {
    const Vector x = inner.sample(rng), y = inner.sample(rng), shift = inner.sample(rng);
    const double m = pair_margin(f, c, 1.5, x, y);
    EXPECT_NEAR(pair_margin(f, c, 1.5, x + shift, y + shift), m, 1e-12);
    const double a = rng.uniform(0.2, 5.0);
    EXPECT_NEAR(pair_margin(f, c, 1.5, a * x, a * y), m, 1e-12);
  }
}

TEST(CertifySampled, Examples) {
  const QuadraticCone c = saddle();
  const auto r = certify_sampled(minus_p(), c, 0.0, Domain::cube(3, -2, 2), 10000, 1);
  EXPECT_TRUE(r.passed());
  EXPECT_NEAR(r.worst_margin, -1.0, 1e-10);
  EXPECT_EQ(r.n_samples + r.n_skipped, 10000u);
  EXPECT_TRUE(Domain::cube(3, -2, 2).contains(r.worst_x));
  EXPECT_TRUE(Domain::cube(3, -2, 2).contains(r.worst_y));

  const auto z = certify_sampled(zero_field(), c, 0.0, Domain::cube(3, -2, 2), 1000, 1);
  EXPECT_FALSE(z.passed());
  EXPECT_EQ(z.worst_margin, 0.0);
}

TEST(CertifySampled, HopfCylinder) {
  const VectorField f = make_hopf_cylinder(1.0, 4.0);
  const auto r = certify_sampled(f, saddle(), 3.5, f.domain, 20000, 9);
  EXPECT_TRUE(r.passed()) << r.worst_margin;
  EXPECT_LT(r.worst_margin, -0.1);
  // Without enough lambda the x3 direction breaks the condition.
  EXPECT_FALSE(certify_sampled(f, saddle(), 1.0, f.domain, 20000, 9).passed());
}

TEST(CertifySampled, DeterministicAcrossThreadCounts) {
  const VectorField f = make_hopf_cylinder(1.0, 4.0);
  const auto a = certify_sampled(f, saddle(), 3.5, f.domain, 5000, 4);
  const auto s = detail::sweep_pairs(f, saddle(), 3.5, f.domain, 5000, 4);
  // sequential recomputation in index order
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 5000; ++i) worst = std::max(worst, pair_margin(f, saddle(), 3.5, s.xs[i], s.ys[i]));
  EXPECT_EQ(a.worst_margin, worst);
  const auto b = certify_sampled(f, saddle(), 3.5, f.domain, 5000, 4);
  EXPECT_EQ(a.worst_margin, b.worst_margin);
  EXPECT_EQ(a.worst_x, b.worst_x);
}

TEST(CertifySampled, Errors) {
  const QuadraticCone c = saddle();
  EXPECT_THROW_CODE(certify_sampled(minus_p(), c, 0.0, Domain::cube(3, -2, 2), 0, 1), Errc::InvalidParameter);
  const Domain point = Domain::box(Vector::Constant(3, 0.5), Vector::Constant(3, 0.5));
  EXPECT_THROW_CODE(certify_sampled(minus_p(), c, 0.0, point, 10, 1), Errc::AllPairsDegenerate);
  EXPECT_THROW_CODE(certify_sampled(minus_p(), c, 0.0, Domain::cube(3, -5, 5), 10, 1), Errc::DomainViolation);
}

TEST(CertifySmith, Examples) {
  const QuadraticCone c = saddle();
  const Domain box = Domain::cube(3, -2, 2);
  const auto ok = certify_smith(minus_p(), c, 0.0, 0.5, box, 5000, 2);
  EXPECT_TRUE(ok.passed());
  EXPECT_NEAR(ok.epsilon_star, 1.0, 1e-10);
  EXPECT_FALSE(certify_smith(minus_p(), c, 0.0, 1.5, box, 5000, 2).passed());
  EXPECT_FALSE(certify_smith(zero_field(), c, 0.0, 1e-6, box, 5000, 2).passed());
  EXPECT_THROW_CODE(certify_smith(minus_p(), c, 0.0, 0.0, box, 10, 2), Errc::InvalidParameter);
}

TEST(CertifySmith, ImpliesSampled) {
  const VectorField f = make_hopf_cylinder(1.0, 4.0);
  for (double lambda : {2.0, 3.0, 3.5, 3.9}) {
    for (double eps : {1e-3, 0.05, 0.2, 0.5}) {
      const auto s = certify_smith(f, saddle(), lambda, eps, f.domain, 2000, 5);
      if (s.passed()) {
        EXPECT_TRUE(certify_sampled(f, saddle(), lambda, f.domain, 2000, 5).passed());
      }
    }
  }
}

TEST(CertifyLinear, Examples) {
  const QuadraticCone c = saddle();
  const Matrix p = c.matrix();
  const auto r = certify_linear(-p, c, 0.0);
  EXPECT_TRUE(r.passed());
  EXPECT_NEAR(r.worst_margin, -2.0, 1e-12);

  const auto z = certify_linear(Matrix::Zero(3, 3), c, 0.0);
  EXPECT_FALSE(z.passed());
  EXPECT_NEAR(z.worst_margin, 0.0, 1e-15);

  const auto f = certify_linear(-p, c, 4.0);
  EXPECT_FALSE(f.passed());
  EXPECT_NEAR(f.worst_margin, 2.0, 1e-12);

  EXPECT_TRUE(certify_linear(spiral_matrix(), c, 4.0).passed());
  EXPECT_NEAR(certify_linear(spiral_matrix(), c, 4.0).worst_margin, -2.0, 1e-12);
  EXPECT_NEAR(certify_linear(spiral_matrix(), c, 2.5).epsilon_star, 1.5, 1e-12);
  const VectorField spiral = make_linear_field(spiral_matrix(), Domain::cube(3, -2, 2));
  EXPECT_NEAR(certify_sampled(spiral, c, 2.5, spiral.domain, 1000, 1).worst_margin, -1.5, 1e-12);
  EXPECT_THROW_CODE(certify_linear(Matrix::Zero(2, 2), c, 0.0), Errc::DimensionMismatch);
}

// For F = A x the sampled margin is d^T M' d / (2|d|^2) with M' = PA + A^T P + 2 lambda P,
// which is the linear test evaluated at 2 lambda.
TEST(CertifyLinear, AgreesWithSampledVerdict) {
  Rng rng(17);
  const Domain box = Domain::cube(3, -2, 2);
  int passes = 0, fails = 0;
  for (int k = 0; k < 40; ++k) {
    const QuadraticCone c = k % 2 ? saddle() : make_quadratic_cone(diag({-1, 2, 3}));
    const Matrix a = test::random_symmetric(rng, 3) * 0.5 - rng.uniform(0.0, 2.0) * c.matrix();
    const double lambda = rng.uniform(-1.0, 3.0);
    const auto lin = certify_linear(a, c, 2.0 * lambda);
    const VectorField f = make_linear_field(a, box);
    const auto smp = certify_sampled(f, c, lambda, box, 10000, static_cast<std::uint64_t>(k));
    const SymEig e = sym_eig(c.matrix() * a + a.transpose() * c.matrix() + 2.0 * lambda * c.matrix());
    EXPECT_LE(smp.worst_margin, 0.5 * e.values(2) + 1e-12);
    EXPECT_GE(smp.worst_margin, 0.5 * e.values(0) - 1e-12);
    EXPECT_NEAR(certify_linear(a, c, lambda).epsilon_star, -0.5 * e.values(2), 1e-12);
    // sampling cannot resolve a top eigenvalue that sits right at zero
    if (std::abs(lin.worst_margin) < 0.05) continue;
    EXPECT_EQ(lin.passed(), smp.passed()) << "case " << k << " max eig " << lin.worst_margin;
    (lin.passed() ? passes : fails)++;
  }
  EXPECT_GT(passes, 0);
  EXPECT_GT(fails, 0);
}

TEST(CertifyLinear, AtZeroLambdaMatchesPairMarginIdentity) {
  Rng rng(23);
  const QuadraticCone c = make_quadratic_cone(diag({-1, -2, 3}));
  const Domain box = Domain::cube(3, -2, 2);
  for (int k = 0; k < 20; ++k) {
    const Matrix a = test::random_symmetric(rng, 3) - c.matrix();
    const VectorField f = make_linear_field(a, box);
    const Matrix m = c.matrix() * a + a.transpose() * c.matrix();
    for (int j = 0; j < 20; ++j) {
      const Vector x = box.sample(rng), y = box.sample(rng);
      const Vector d = x - y;
      EXPECT_NEAR(pair_margin(f, c, 0.0, x, y), 0.5 * d.dot(m * d) / d.squaredNorm(), 1e-12);
    }
  }
}

TEST(CyclicFeedback, GoodwinPassesNegativeLoop) {
  const VectorField f = make_cyclic_feedback(3, CyclicKind::SmoothGoodwin);
  const auto r = check_cyclic_feedback(f, {-1, 1, 1}, Domain::cube(3, 0.05, 3), 1000, 1);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.feedback_sign, -1);
  EXPECT_FALSE(check_cyclic_feedback(f, {-1, -1, 1}, Domain::cube(3, 0.05, 3), 1000, 1).passed());
  EXPECT_FALSE(check_cyclic_feedback(f, {1, 1, 1}, Domain::cube(3, 0.05, 3), 1000, 1).passed());
  EXPECT_EQ(check_cyclic_feedback(f, {1, 1, 1}, Domain::cube(3, 0.05, 3), 10, 1).feedback_sign, 1);
}

TEST(CyclicFeedback, CouplingForm) {
  std::vector<Coupling> g = {
      [](double self, double prev) { return 1.0 / (1.0 + std::pow(prev, 4)) - self; },
      [](double self, double prev) { return prev - self; },
      [](double self, double prev) { return prev - self; }};
  const Domain box = Domain::cube(3, 0.05, 3);
  EXPECT_TRUE(check_cyclic_feedback(g, {-1, 1, 1}, box, 1000, 3).passed());
  const auto bad = check_cyclic_feedback(g, {-1, -1, 1}, box, 100, 3);
  EXPECT_FALSE(bad.passed());
  EXPECT_NEAR(bad.worst_margin, 1.0, 1e-8);  // -delta * d(x1 - x2)/dx1 = +1
}

TEST(CyclicFeedback, DeclaredSignsHoldForEveryBuiltIn) {
  for (auto kind : {CyclicKind::SmoothGoodwin, CyclicKind::GlassPwl}) {
    for (int n : {3, 4, 6}) {
      const VectorField f = make_cyclic_feedback(n, kind);
      EXPECT_TRUE(check_cyclic_feedback(f, f.deltas, f.domain, 500, 8).passed()) << n;
    }
  }
}

TEST(CyclicFeedback, Errors) {
  const VectorField f = make_cyclic_feedback(3, CyclicKind::SmoothGoodwin);
  EXPECT_THROW_CODE(check_cyclic_feedback(f, {1, 1}, f.domain, 10, 1), Errc::DimensionMismatch);
  EXPECT_THROW_CODE(check_cyclic_feedback(f, {1, 0, 1}, f.domain, 10, 1), Errc::InvalidParameter);
  std::vector<Coupling> g = {[](double, double p) { return std::log(p); },
                             [](double s, double p) { return p - s; },
                             [](double s, double p) { return p - s; }};
  EXPECT_THROW_CODE(check_cyclic_feedback(g, {1, 1, 1}, Domain::cube(3, -1, 1), 200, 1),
                    Errc::NonFiniteDerivative);
}

TEST(ScanLambda, FindsPassingRange) {
  const VectorField f = make_hopf_cylinder(1.0, 4.0);
  const auto s = scan_lambda(f, saddle(), 0.0, 5.0, 0.5, f.domain, 4000, 3);
  EXPECT_EQ(s.reports.size(), 11u);
  // Above c = 4 the x3 direction violates the condition; small lambda loses to the
  // planar expansion near the origin.
  ASSERT_FALSE(s.passing.empty());
  EXPECT_NE(std::find(s.passing.begin(), s.passing.end(), 3.5), s.passing.end());
  for (double l : s.passing) {
    EXPECT_GT(l, 1.0);
    EXPECT_LE(l, 4.0);
  }
  EXPECT_THROW_CODE(scan_lambda(f, saddle(), 1.0, 0.0, 0.5, f.domain, 10, 3), Errc::InvalidParameter);
}

TEST(DecayAudit, LinearSaddleClosedForm) {
  const QuadraticCone c = saddle();
  const VectorField f = minus_p(5.0);
  const auto r = decay_audit(f, c, 0.0, vec({1, 0, 0}), Vector::Zero(3), 1.0);
  EXPECT_TRUE(r.decreasing);
  EXPECT_EQ(r.verdict, Verdict::Pass);
  for (std::size_t j = 0; j < r.times.size(); ++j) {
    EXPECT_NEAR(r.g[j], -std::exp(2.0 * r.times[j]), 1e-8 * std::exp(2.0 * r.times[j]));
  }
}

TEST(DecayAudit, FailsWithoutContraction) {
  const QuadraticCone c = saddle();
  const auto r = decay_audit(zero_field(), c, 1.0, vec({0, 0, 1}), Vector::Zero(3), 1.0);
  EXPECT_FALSE(r.decreasing);
  EXPECT_EQ(r.verdict, Verdict::Fail);
  EXPECT_EQ(r.first_violation, 0);
  for (std::size_t j = 0; j < r.times.size(); ++j) EXPECT_NEAR(r.g[j], std::exp(2.0 * r.times[j]), 1e-12);
}

TEST(DecayAudit, Errors) {
  const QuadraticCone c = saddle();
  EXPECT_THROW_CODE(decay_audit(minus_p(), c, 0.0, vec({1, 0, 0}), vec({1, 0, 0}), 1.0), Errc::IdenticalPoints);
  EXPECT_THROW_CODE(decay_audit(minus_p(), c, 0.0, vec({1, 0, 0}), Vector::Zero(3), 3.0), Errc::DomainExit);
}

TEST(DecayAudit, HoldsWhereverSampledCertificatePasses) {
  struct Case {
    VectorField f;
    double lambda;
    Domain start;
  };
  const VectorField hopf = make_hopf_cylinder(1.0, 4.0);
  const std::vector<Case> cases = {
      {make_linear_field(spiral_matrix(), Domain::cube(3, -3, 3)), 2.5, Domain::cube(3, -2, 2)},
      {hopf, 3.5, hopf.domain}};
  for (const Case& cs : cases) {
    ASSERT_TRUE(certify_sampled(cs.f, saddle(), cs.lambda, cs.f.domain, 10000, 1).passed());
    Rng rng(99);
    for (int k = 0; k < 20; ++k) {
      const Vector x = cs.start.sample(rng), y = cs.start.sample(rng);
      const auto r = decay_audit(cs.f, saddle(), cs.lambda, x, y, 5.0);
      EXPECT_EQ(r.verdict, Verdict::Pass) << "pair " << k << " violation at " << r.first_violation;
    }
  }
}

TEST(StrongMonotonicity, OrderedPairsStayStronglyOrdered) {
  const VectorField hopf = make_hopf_cylinder(1.0, 4.0);
  const VectorField lin = make_linear_field(spiral_matrix(), Domain::cube(3, -3, 3));
  const QuadraticCone c = saddle();
  Rng rng(5);
  for (const auto& [f, start] : {std::pair{lin, Domain::cube(3, -2, 2)}, std::pair{hopf, hopf.domain}}) {
    for (int k = 0; k < 100; ++k) {
      const auto [x, y] = ordered_pair(rng, start, c);
      const auto r = decay_audit(f, c, (f.family == FieldFamily::Linear ? 2.5 : 3.5), x, y, 5.0);
      ASSERT_TRUE(r.initially_ordered);
      EXPECT_TRUE(r.strongly_ordered_after) << k;
      for (std::size_t j = 1; j < r.times.size(); ++j) EXPECT_LT(r.margin[j], -c.band());
    }
  }
}
