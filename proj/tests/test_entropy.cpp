#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <abimhd/entropy.hpp>

#include "support.hpp"

using namespace abimhd;
using namespace testsupport;

namespace {

using EMat = Eigen::Matrix<double, 10, 10>;

EMat to_eigen(const Mat10& m)
{
    EMat e;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) e(i, j) = m[i * 10 + j];
    return e;
}

Mat10 random_symmetric(std::mt19937_64& rng, double scale)
{
    std::normal_distribution<double> nd(0.0, scale);
    Mat10 m{};
    for (int i = 0; i < 10; ++i)
        for (int j = i; j < 10; ++j) m[i * 10 + j] = m[j * 10 + i] = nd(rng);
    return m;
}

// Shift needed at one point, from the Schur complement against the fixed 2I block.
double schur_shift(const Mat10& m, double c)
{
    EMat e = to_eigen(m);
    Eigen::Matrix4d S = e.topLeftCorner<4, 4>() - e.topRightCorner<4, 6>() * e.bottomLeftCorner<6, 4>() / (2.0 - c);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(S);
    return c - es.eigenvalues()(0);
}

DmhdState smooth_dmhd(GridSpec g, double amp = 1.0)
{
    DmhdState s;
    s.h = ScalarField::sample(g, [&](double x, double y, double) {
        return 1.0 + 0.2 * amp * std::sin(two_pi * x) * std::cos(two_pi * y);
    });
    s.B = VectorField3::sample(g, [&](double x, double y, double z) {
        return Vec3{0.3 * amp * std::sin(two_pi * z), 0.2 * amp * std::cos(two_pi * x),
                    0.5 + 0.2 * amp * std::sin(two_pi * y)};
    });
    return s;
}

Field4 unit_u(GridSpec g) { return {ScalarField(g, 1.0), ScalarField(g), ScalarField(g), ScalarField(g)}; }

} // namespace

TEST(Jacobi, MatchesDenseEigensolver)
{
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        Mat10 m = random_symmetric(rng, trial % 2 ? 5.0 : 0.1);
        auto r = jacobi_eigen<10>(m);
        Eigen::SelfAdjointEigenSolver<EMat> es(to_eigen(m));
        for (int i = 0; i < 10; ++i) EXPECT_NEAR(r.values[i], es.eigenvalues()(i), 1e-11 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()));
        EMat V;
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) V(i, j) = r.vectors[i * 10 + j];
        Eigen::Matrix<double, 10, 1> lam;
        for (int i = 0; i < 10; ++i) lam(i) = r.values[i];
        EXPECT_LE((to_eigen(m) * V - V * lam.asDiagonal()).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Jacobi, DiagonalInputNeedsNoSweep)
{
    Mat10 m{};
    for (int i = 0; i < 10; ++i) m[i * 11] = 10 - i;
    auto r = jacobi_eigen<10>(m);
    EXPECT_EQ(r.sweeps, 0);
    EXPECT_EQ(r.values[0], 1.0);
    EXPECT_EQ(r.values[9], 10.0);
}

TEST(Jacobi, CholeskyTestAgreesWithSmallestEigenvalue)
{
    std::mt19937_64 rng(4);
    int above = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Mat10 m = random_symmetric(rng, 0.3);
        for (int i = 0; i < 10; ++i) m[i * 11] += 1.0;
        double lo = Eigen::SelfAdjointEigenSolver<EMat>(to_eigen(m)).eigenvalues()(0);
        for (double c : {lo - 1e-6, lo + 1e-6}) {
            EXPECT_EQ(cholesky_above<10>(m, c), c < lo) << trial;
            above += c < lo;
        }
    }
    EXPECT_EQ(above, 200);
}

TEST(QMatrix, ConstantFrameIsBlockDiagonal)
{
    GridSpec g(8);
    TestFieldFrame f = trivial_frame(g);
    f.b_star = VectorField3(g, 0.3);
    f.v_star = VectorField3(g, -0.2);
    QMatrixField Q = q_matrix(f);
    for (const auto& m : Q.q) {
        for (int i = 0; i < 10; ++i) {
            for (int j = 0; j < 10; ++j) {
                double expect = (i == j && i >= 4) ? 2.0 : 0.0;
                EXPECT_LE(std::abs(m[i * 10 + j] - expect), 1e-13);
            }
        }
    }
}

TEST(QMatrix, ShearFrameMatchesHandAssembly)
{
    GridSpec g(16);
    TestFieldFrame f = trivial_frame(g);
    f.v_star[0] = ScalarField::sample(g, [](double, double y, double) { return std::sin(two_pi * y); });
    QMatrixField Q = q_matrix(f);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
    for (int s = 0; s < 10; ++s) {
        std::size_t p = pick(rng);
        double y = g.point(p)[1];
        double dv = two_pi * std::cos(two_pi * y);  // d_y v_x
        Mat10 expect{};
        expect[1 * 10 + 2] = expect[2 * 10 + 1] = -dv;
        for (int i = 4; i < 10; ++i) expect[i * 11] = 2.0;
        for (int k = 0; k < 100; ++k) EXPECT_NEAR(Q.q[p][k], expect[k], 1e-11);
    }
}

TEST(QMatrix, SymmetricWithExactLowerBlock)
{
    GridSpec g(8);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        QMatrixField Q = q_matrix(RandomFrameFamily(seed).frame(g, 0.3));
        for (const auto& m : Q.q) {
            for (int i = 0; i < 10; ++i)
                for (int j = 0; j < 10; ++j) EXPECT_LE(std::abs(m[i * 10 + j] - m[j * 10 + i]), 1e-14);
            for (int i = 4; i < 10; ++i)
                for (int j = 4; j < 10; ++j) EXPECT_EQ(m[i * 10 + j], i == j ? 2.0 : 0.0);
        }
    }
}

TEST(R0, ConstantFrameValues)
{
    GridSpec g(4);
    std::vector<TestFieldFrame> frames{trivial_frame(g)};
    EXPECT_NEAR(r0(frames, R0Target::identity), 1.0, 1e-10);
    EXPECT_NEAR(r0(frames, R0Target::two_minus_delta, 0.5), 1.5, 1e-10);
    EXPECT_GE(r0(frames, R0Target::identity), 1.0);
}

TEST(R0, ShearFrameMatchesSchurOracle)
{
    GridSpec g(8);
    TestFieldFrame f = trivial_frame(g);
    f.v_star[0] = ScalarField::sample(g, [](double, double y, double) { return std::sin(two_pi * y); });
    f.b_star[2] = ScalarField::sample(g, [](double x, double, double) { return 0.5 * std::cos(two_pi * x); });
    QMatrixField Q = q_matrix(f);
    for (double c : {1.0, 1.5}) {
        double oracle = 0.0;
        for (const auto& m : Q.q) oracle = std::max(oracle, schur_shift(m, c));
        double got = r0({f}, c == 1.0 ? R0Target::identity : R0Target::two_minus_delta, 2.0 - c);
        EXPECT_NEAR(got, oracle, 1e-8);
        EXPECT_GE(got, oracle - 1e-12);
    }
}

TEST(R0, ScanOverRandomTrajectoryIsFeasibleAndTight)
{
    GridSpec g(8);
    RandomFrameFamily fam(11, 0.4);
    std::vector<TestFieldFrame> frames;
    for (int k = 0; k < 3; ++k) frames.push_back(fam.frame(g, 0.05 * k));
    double r = r0(frames);
    double worst = 1e300;
    double oracle = 0.0;
    for (const auto& f : frames) {
        for (const auto& m : q_matrix(f).q) {
            EMat e = to_eigen(shifted(m, r));
            worst = std::min(worst, Eigen::SelfAdjointEigenSolver<EMat>(e).eigenvalues()(0));
            oracle = std::max(oracle, schur_shift(m, 1.0));
        }
    }
    EXPECT_GE(worst, 1.0 - 1e-12);
    EXPECT_NEAR(r, oracle, 1e-8);
}

TEST(R0, LargeEntriesStillBracketed)
{
    GridSpec g(4);
    TestFieldFrame f = trivial_frame(g);
    f.b_star[0] = ScalarField::sample(g, [](double, double y, double) { return 3.0 * std::sin(two_pi * y); });
    double oracle = 0.0;
    for (const auto& m : q_matrix(f).q) oracle = std::max(oracle, schur_shift(m, 1.0));
    EXPECT_NEAR(r0({f}), oracle, 1e-8);
}

TEST(LOperator, TrivialFrameGivesZero)
{
    Field10 L = l_operator(trivial_frame(GridSpec(8)));
    for (const auto& c : L) EXPECT_EQ(sup_norm(c), 0.0);
}

TEST(LOperator, VanishesOnDmhdSolution)
{
    DmhdState s = smooth_dmhd(GridSpec(32));
    Field10 L = l_operator(frame_from_dmhd(s, 0.0));
    double m = 0.0;
    for (const auto& c : L) m = std::max(m, sup_norm(c));
    EXPECT_LE(m, 1e-4);
}

TEST(LOperator, MatchesFiniteDifferencesAtSecondOrder)
{
    double err[2];
    int idx = 0;
    for (int n : {32, 64}) {
        GridSpec g(n);
        TestFieldFrame f = RandomFrameFamily(5).frame(g, 0.1);
        Field10 L = l_operator(f);
        const auto& tau = f.h_star_inv;
        ScalarField div_v = fd_partial(f.v_star[0], 0) + fd_partial(f.v_star[1], 1) + fd_partial(f.v_star[2], 2);
        double e = 0.0;
        ScalarField Lh = f.dt_h_star_inv - tau * div_v;
        for (int j = 0; j < 3; ++j) Lh += f.v_star[j] * fd_partial(tau, j);
        e = std::max(e, max_diff(Lh, L[0]));
        for (int i = 0; i < 3; ++i) {
            ScalarField LB = f.dt_b_star[i];
            ScalarField LP = f.v_star[i] - tau * fd_partial(tau, i);
            for (int j = 0; j < 3; ++j) {
                LB += f.v_star[j] * fd_partial(f.b_star[i], j);
                LB -= f.b_star[j] * fd_partial(f.v_star[i], j);
                LP -= f.b_star[j] * fd_partial(f.b_star[i], j);
            }
            int a = (i + 1) % 3, b = (i + 2) % 3;
            LB += tau * (fd_partial(f.d_star[b], a) - fd_partial(f.d_star[a], b));
            ScalarField LD = f.d_star[i] - tau * (fd_partial(f.b_star[b], a) - fd_partial(f.b_star[a], b));
            e = std::max({e, max_diff(LB, L[1 + i]), max_diff(LD, L[4 + i]), max_diff(LP, L[7 + i])});
        }
        err[idx++] = e;
    }
    EXPECT_LT(err[1], err[0] / 3.5);
}

TEST(Decomposition, HoldsOnRandomFrames)
{
    GridSpec g(16);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        TestFieldFrame f = RandomFrameFamily(100 + seed).frame(g, 0.2);
        QMatrixField Q = q_matrix(f);
        Field10 L = l_operator(f);
        const auto& tau = f.h_star_inv;
        ScalarField first = div(cross(f.d_star, f.b_star) - tau * f.v_star);
        VectorField3 second = grad(dot(f.b_star, f.v_star));
        VectorField3 half_grad = grad(tau * tau + dot(f.b_star, f.b_star));
        double worst = 0.0;
        for (std::size_t p = 0; p < g.size(); ++p) {
            std::array<double, 10> w{tau.v[p]};
            for (int i = 0; i < 3; ++i) {
                w[1 + i] = f.b_star[i].v[p];
                w[4 + i] = f.d_star[i].v[p];
                w[7 + i] = f.v_star[i].v[p];
            }
            std::array<double, 10> rhs;
            rhs[0] = L[0].v[p] - f.dt_h_star_inv.v[p] + first.v[p];
            for (int i = 0; i < 3; ++i) {
                rhs[1 + i] = L[1 + i].v[p] - f.dt_b_star[i].v[p] - second[i].v[p];
                rhs[4 + i] = L[4 + i].v[p] + f.d_star[i].v[p];
                rhs[7 + i] = L[7 + i].v[p] + f.v_star[i].v[p] + 0.5 * half_grad[i].v[p];
            }
            for (int i = 0; i < 10; ++i) {
                double qw = 0.0;
                for (int j = 0; j < 10; ++j) qw += Q.q[p][i * 10 + j] * w[j];
                worst = std::max(worst, std::abs(qw - rhs[i]));
            }
        }
        EXPECT_LE(worst, 1e-8) << "seed " << seed;
    }
}

TEST(Lambda, ReferenceValues)
{
    GridSpec g(4);
    EXPECT_DOUBLE_EQ(lambda(ScalarField(g, 1.0), unit_u(g)), 0.5);
    EXPECT_DOUBLE_EQ(lambda(ScalarField(g, 2.0), unit_u(g)), 0.25);
    ScalarField half = ScalarField::sample(g, [](double x, double, double) { return x < 0.5 ? 0.0 : 1.0; });
    EXPECT_TRUE(std::isinf(lambda(half, unit_u(g))));
    Field4 zero{ScalarField(g), ScalarField(g), ScalarField(g), ScalarField(g)};
    EXPECT_DOUBLE_EQ(lambda(half, zero), 0.0);
}

TEST(Lambda, NegativeDensityRejected)
{
    GridSpec g(4);
    ScalarField rho(g, 1.0);
    rho.v[g.index(1, 2, 3)] = -0.5;
    try {
        lambda(rho, unit_u(g));
        FAIL();
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("(1,2,3)"), std::string::npos);
    }
}

TEST(Lambda, DualLowerBound)
{
    std::mt19937_64 rng(21);
    GridSpec g(8);
    ScalarField rho = random_field(g, rng, 2, 0.3, 1.0);
    Field4 U;
    for (auto& c : U) c = random_field(g, rng, 2, 0.5);
    double lam = lambda(rho, U);

    DualPair opt{ScalarField(g), {ScalarField(g), ScalarField(g), ScalarField(g), ScalarField(g)}};
    for (std::size_t p = 0; p < g.size(); ++p) {
        double u2 = 0.0;
        for (int i = 0; i < 4; ++i) {
            opt.A[i].v[p] = U[i].v[p] / rho.v[p];
            u2 += opt.A[i].v[p] * opt.A[i].v[p];
        }
        opt.a.v[p] = -0.5 * u2;
    }
    EXPECT_NEAR(lambda_dual_lower_bound(rho, U, {opt}), lam, 1e-12);

    DualPair zero{ScalarField(g), opt.A};
    for (auto& c : zero.A) c = ScalarField(g);
    EXPECT_EQ(lambda_dual_lower_bound(rho, U, {zero}), 0.0);

    std::vector<DualPair> family;
    for (int k = 0; k < 50; ++k) {
        DualPair pr{ScalarField(g), {}};
        for (auto& c : pr.A) c = random_field(g, rng, 2, 1.0);
        std::uniform_real_distribution<double> slack(0.0, 0.5);
        for (std::size_t p = 0; p < g.size(); ++p) {
            double a2 = 0.0;
            for (const auto& c : pr.A) a2 += c.v[p] * c.v[p];
            pr.a.v[p] = -0.5 * a2 - slack(rng);
        }
        EXPECT_LE(lambda_dual_lower_bound(rho, U, {pr}), lam + 1e-12);
        family.push_back(std::move(pr));
    }
    EXPECT_LE(lambda_dual_lower_bound(rho, U, family), lam + 1e-12);

    DualPair bad = family[0];
    bad.a.v[g.index(2, 0, 1)] = 1.0;
    try {
        lambda_dual_lower_bound(rho, U, {bad});
        FAIL();
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("(2,0,1)"), std::string::npos);
    }
}

TEST(LambdaTilde, ReferenceValues)
{
    GridSpec g(4);
    QMatrixField I{g, std::vector<Mat10>(g.size())};
    for (auto& m : I.q) {
        m.fill(0.0);
        for (int i = 0; i < 10; ++i) m[i * 11] = 1.0;
    }
    Field10 W;
    for (auto& c : W) c = ScalarField(g);
    ScalarField rho(g, 1.0);
    EXPECT_EQ(lambda_tilde({0.0, 1.0}, {rho, rho}, {W, W}, {I, I}, 0.0, 1.0), 0.0);
    W[5] = ScalarField(g, 1.0);
    EXPECT_NEAR(lambda_tilde({0.0, 0.5, 1.0}, {rho, rho, rho}, {W, W, W}, {I, I, I}, 0.0, 1.0), 0.5, 1e-15);
}

TEST(LambdaTilde, MatchesRefinedQuadrature)
{
    GridSpec g(4);
    RandomFrameFamily fam(8);
    auto rho_at = [&](double t) {
        return ScalarField::sample(g, [&](double x, double y, double) {
            return 1.0 + 0.3 * std::sin(two_pi * x + t) * std::cos(two_pi * y);
        });
    };
    auto W_at = [&](double t) {
        Field10 W;
        for (int i = 0; i < 10; ++i) {
            W[i] = ScalarField::sample(g, [&](double x, double, double z) {
                return std::cos(two_pi * (x + 0.1 * i) + (1 + i) * t) * std::sin(two_pi * z + 0.3 * i);
            });
        }
        return W;
    };
    const int K = 2001;
    std::vector<double> ts;
    std::vector<ScalarField> rho;
    std::vector<Field10> W;
    std::vector<QMatrixField> Q;
    for (int k = 0; k < K; ++k) {
        double t = double(k) / (K - 1);
        ts.push_back(t);
        rho.push_back(rho_at(t));
        W.push_back(W_at(t));
        Q.push_back(q_matrix(fam.frame(g, t)));
    }
    double got = lambda_tilde(ts, rho, W, Q, 0.0, 1.0);

    // Composite Simpson on a finer grid with Eigen quadratic forms.
    const int M = 8000;
    double oracle = 0.0;
    for (int k = 0; k <= M; ++k) {
        double t = double(k) / M;
        double wgt = (k == 0 || k == M) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        ScalarField r = rho_at(t);
        Field10 w = W_at(t);
        QMatrixField q = q_matrix(fam.frame(g, t));
        double s = 0.0;
        for (std::size_t p = 0; p < g.size(); ++p) {
            Eigen::Matrix<double, 10, 1> x;
            for (int i = 0; i < 10; ++i) x(i) = w[i].v[p];
            s += x.dot(to_eigen(q.q[p]) * x) / (2.0 * r.v[p]);
        }
        oracle += wgt * s / double(g.size());
    }
    oracle /= 3.0 * M;
    EXPECT_NEAR(got, oracle, 1e-6);
}

TEST(Slack, TrivialSolutionAgainstTrivialFrame)
{
    GridSpec g(8);
    AbiState s{ScalarField(g, 1.0), VectorField3(g), VectorField3(g), VectorField3(g)};
    std::vector<double> ts{0.0, 0.1, 0.2};
    std::vector<AbiState> sol(3, s);
    std::vector<TestFieldFrame> frames(3, trivial_frame(g));
    EntropyReport rep = dissipative_slack(ts, sol, frames, 1.5);
    for (double x : rep.slack_t) EXPECT_EQ(x, 0.0);
    EXPECT_NEAR(rep.r0, 1.0, 1e-10);
    EXPECT_THROW(dissipative_slack(ts, sol, frames, 0.5), InvalidArgument);
}

TEST(Slack, DmhdRunAgainstRandomFramesAndCorruption)
{
    GridSpec g(16);
    DmhdState s = smooth_dmhd(g, 0.5);
    const double E0 = energy(s);
    const int steps = 40;
    const double dt = 0.5 * dmhd_max_dt(s);
    std::vector<double> ts;
    std::vector<AbiState> sol, bad;
    dmhd_run(s, dt, steps, [&](int, double t, const DmhdState& x) {
        ts.push_back(t);
        sol.push_back(dmhd_as_abi(x));
        AbiState y = sol.back();
        y.P[0] += ScalarField(g, 0.1);
        bad.push_back(std::move(y));
    });
    RandomFrameFamily fam(77, 0.1);
    std::vector<TestFieldFrame> frames;
    for (double t : ts) frames.push_back(fam.frame(g, t));
    double rr = r0(frames);
    EntropyReport rep = dissipative_slack(ts, sol, frames, rr, {rr});
    EXPECT_LE(rep.max_slack(), 1e-3 * E0);
    EntropyReport corrupted = dissipative_slack(ts, bad, frames, rr, {rr});
    EXPECT_GT(corrupted.max_slack(), 0.0);
    EXPECT_GT(corrupted.max_slack(), 100.0 * std::abs(rep.max_slack()));

    std::ostringstream os;
    write_entropy_csv(os, rep);
    EXPECT_EQ(os.str().rfind("t,lambda,lambda_tilde_cum,R,slack\n", 0), 0u);
    EXPECT_NE(os.str().find("# r_used="), std::string::npos);
}

TEST(Identity, DmhdSolutionBothSidesSmall)
{
    GridSpec g(32);
    DmhdState s = smooth_dmhd(g);
    IdentitySample smp{0.0, dmhd_as_abi(s), dmhd_rhs(s).B};
    IdentityTerms r = identity_residual_check(smp, RandomFrameFamily(3).frame(g, 0.0));
    EXPECT_LE(std::abs(r.rhs), 1e-4 * r.scale());
    EXPECT_LE(r.relative_gap(), 1e-3);
}

TEST(Identity, FrameEqualToFieldsGivesZeroRhs)
{
    GridSpec g(16);
    std::mt19937_64 rng(5);
    AbiState s{random_field(g, rng, 2, 0.2, 1.0), project_solenoidal(random_vector(g, rng, 2, 0.3)),
               random_vector(g, rng, 2, 0.2), random_vector(g, rng, 2, 0.2)};
    ScalarField ih = reciprocal(s.h);
    TestFieldFrame f{0.0, ih, ih * s.B, ih * s.D, ih * s.P, ScalarField(g), VectorField3(g)};
    IdentitySample smp{0.0, s, random_vector(g, rng, 2, 0.1)};
    IdentityTerms r = identity_residual_check(smp, f);
    EXPECT_EQ(r.rhs, 0.0);
}

TEST(Identity, ResidualRecoveryFrame)
{
    GridSpec g(32);
    std::mt19937_64 rng(9);
    AbiState s{random_field(g, rng, 1, 0.2, 1.0), project_solenoidal(random_vector(g, rng, 1, 0.3)),
               random_vector(g, rng, 1, 0.2), random_vector(g, rng, 1, 0.2)};
    VectorField3 dtB = project_solenoidal(random_vector(g, rng, 1, 0.2));
    Residuals res = identity_residuals(s, dtB);
    ScalarField ih = reciprocal(s.h);
    TestFieldFrame f = RandomFrameFamily(4).frame(g, 0.0);
    f.b_star = ih * s.B - res.phi_B;
    f.d_star = ih * s.D - res.psi_D;
    f.v_star = ih * s.P - res.phi_P;
    IdentityTerms r = identity_residual_check({0.0, s, dtB}, f);
    double squares = integrate(dot(res.phi_B, res.phi_B) + dot(res.psi_D, res.psi_D) + dot(res.phi_P, res.phi_P));
    EXPECT_NEAR(r.rhs, squares, 1e-12 * squares);
    EXPECT_GT(r.rhs, 0.0);
    EXPECT_LE(r.relative_gap(), 1e-3);
}
