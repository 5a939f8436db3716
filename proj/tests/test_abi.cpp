#include <random>

#include <gtest/gtest.h>

#include <abimhd/abi.hpp>

#include "support.hpp"

using namespace abimhd;
using namespace testsupport;

namespace {

AbiState smooth_consistent(GridSpec g, double amp = 1.0)
{
    VectorField3 B = VectorField3::sample(g, [&](double x, double y, double z) {
        return Vec3{amp * 0.2 * std::sin(two_pi * z), amp * 0.3 * std::cos(two_pi * x), 0.1 + amp * 0.2 * std::sin(two_pi * y)};
    });
    VectorField3 D = VectorField3::sample(g, [&](double x, double y, double z) {
        return Vec3{amp * 0.1 * std::cos(two_pi * y), amp * 0.2 * std::sin(two_pi * z), amp * 0.15 * std::cos(two_pi * x)};
    });
    return abi_consistent_state(B, D);
}

double state_diff(const AbiState& a, const AbiState& b)
{
    return std::max({max_diff(a.h, b.h), max_diff(a.B, b.B), max_diff(a.D, b.D), max_diff(a.P, b.P)});
}

AbiState constant_state(GridSpec g, double h, Vec3 B, Vec3 D, Vec3 P)
{
    AbiState s = AbiState::zeros(g);
    s.h = ScalarField(g, h);
    for (int a = 0; a < 3; ++a) {
        s.B[a] = ScalarField(g, B[a]);
        s.D[a] = ScalarField(g, D[a]);
        s.P[a] = ScalarField(g, P[a]);
    }
    return s;
}

} // namespace

TEST(AbiRhs, ConstantStateIsStationary)
{
    GridSpec g(8);
    AbiState s = constant_state(g, 2.0, {0.1, -0.2, 0.3}, {0.5, 0.0, 1.0}, {0.2, 0.2, -0.4});
    AbiState r = abi_rhs(s);
    EXPECT_LE(state_magnitude(r), 1e-13);
}

TEST(AbiStep, ConsistentConstantStateUnchanged)
{
    GridSpec g(8);
    Vec3 B{0.3, -0.4, 0.5};
    double h = std::sqrt(1.0 + 0.09 + 0.16 + 0.25);
    AbiState s = constant_state(g, h, B, {0, 0, 0}, {0, 0, 0});
    EXPECT_LE(state_magnitude(abi_rhs(s)), 1e-13);
    AbiState next = abi_step(s, 0.9 * abi_max_dt(s));
    EXPECT_LE(state_diff(next, s), 1e-12);
}

TEST(AbiRhs, MatchesFiniteDifferenceFluxes)
{
    double err[2];
    int idx = 0;
    for (int n : {32, 64}) {
        GridSpec g(n);
        AbiState s = constant_state(g, 1.2, {0.1, 0.2, 0.3}, {0.0, 0.1, 0.0}, {0.05, 0.0, 0.1});
        s.B[2] = ScalarField::sample(g, [](double x, double y, double) { return 0.3 + 0.2 * std::sin(two_pi * (x + y)); });
        AbiState r = abi_rhs(s);
        // finite-difference evaluation of the same fluxes
        ScalarField ih = reciprocal(s.h);
        VectorField3 fB = ih * (cross(s.B, s.P) + s.D);
        auto fd_curl = [](const VectorField3& F) {
            return VectorField3(fd_partial(F[2], 1) - fd_partial(F[1], 2), fd_partial(F[0], 2) - fd_partial(F[2], 0),
                                fd_partial(F[1], 0) - fd_partial(F[0], 1));
        };
        VectorField3 dB = fd_curl(fB);
        dB *= -1.0;
        VectorField3 dP(g);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                ScalarField T(g);
                for (std::size_t p = 0; p < g.size(); ++p) {
                    T.v[p] = (s.P[i].v[p] * s.P[j].v[p] - s.B[i].v[p] * s.B[j].v[p] - s.D[i].v[p] * s.D[j].v[p]
                              - (i == j ? 1.0 : 0.0)) * ih.v[p];
                }
                dP[i] -= fd_partial(T, j);
            }
        }
        err[idx++] = std::max(max_diff(r.B, dB), max_diff(r.P, dP));
    }
    EXPECT_LT(err[1], err[0] / 3.5);
    EXPECT_LT(err[1], 1e-2);
}

TEST(AbiStep, FourthOrderInTime)
{
    GridSpec g(16);
    AbiState s0 = smooth_consistent(g);
    double T = 0.02;
    auto run = [&](int steps) { return abi_run(s0, T / steps, steps); };
    AbiState a = run(4), b = run(8), c = run(16);
    double order = std::log2(state_diff(a, b) / state_diff(b, c));
    EXPECT_NEAR(order, 4.0, 0.3);
}

TEST(AbiStep, RejectsCflViolationWithSuggestion)
{
    GridSpec g(16);
    AbiState s = smooth_consistent(g);
    double dt_max = abi_max_dt(s);
    try {
        abi_step(s, 2.0 * dt_max);
        FAIL();
    } catch (const StepRejected& e) {
        EXPECT_DOUBLE_EQ(e.suggested_dt, dt_max);
    }
}

TEST(AbiConstraints, ConsistentAndCorrupted)
{
    GridSpec g(8);
    Vec3 B{0.3, 0.0, 0.0}, D{0.0, 0.2, 0.0};
    Vec3 P{D[1] * B[2] - D[2] * B[1], D[2] * B[0] - D[0] * B[2], D[0] * B[1] - D[1] * B[0]};
    double h = std::sqrt(1.0 + 0.09 + 0.04 + P[2] * P[2]);
    AbiState s = constant_state(g, h, B, D, P);
    ConstraintNorms c = abi_constraints(s);
    EXPECT_LE(c.p_cross, 1e-12);
    EXPECT_LE(c.h_consistency, 1e-12);
    EXPECT_LE(c.div_B, 1e-12);
    EXPECT_LE(c.div_D, 1e-12);

    for (double& x : s.P[1].v) x += 1.0;
    EXPECT_NEAR(abi_constraints(s).p_cross, 1.0, 1e-12);
}

TEST(AbiEntropy, ReferenceValues)
{
    GridSpec g(8);
    EXPECT_DOUBLE_EQ(abi_entropy(constant_state(g, 1.0, {0, 0, 0}, {0, 0, 0}, {0, 0, 0})), 0.5);
    EXPECT_DOUBLE_EQ(abi_entropy(constant_state(g, 2.0, {0, 0, 0}, {0, 0, 0}, {0, 0, 0})), 0.25);
}

TEST(AbiEntropy, MatchesRefinedQuadrature)
{
    double e16 = abi_entropy(smooth_consistent(GridSpec(16)));
    double e48 = abi_entropy(smooth_consistent(GridSpec(48)));
    EXPECT_NEAR(e16, e48, 1e-8);
}

TEST(NcRhs, ConstantStatesAreStationary)
{
    GridSpec g(8);
    NonConsState s{ScalarField(g, 0.7), VectorField3(ScalarField(g, 0.1), ScalarField(g, 0.2), ScalarField(g, 0.0)),
                   VectorField3(ScalarField(g, -0.3), ScalarField(g, 0.0), ScalarField(g, 0.4)),
                   VectorField3(ScalarField(g, 0.0), ScalarField(g, 0.5), ScalarField(g, 0.1))};
    NonConsState r = nc_rhs(s);
    EXPECT_LE(std::max({sup_norm(r.tau), max_abs(r.b), max_abs(r.d), max_abs(r.v)}), 1e-13);

    // string reduction: constant b, v with b.v = 0 and |b|^2 + |v|^2 = 1
    NonConsState st{ScalarField(g), VectorField3(ScalarField(g, 0.6), ScalarField(g, 0.0), ScalarField(g, 0.0)),
                    VectorField3(g), VectorField3(ScalarField(g, 0.0), ScalarField(g, 0.8), ScalarField(g, 0.0))};
    NonConsState rs = nc_rhs(st, Reduction::string);
    EXPECT_LE(std::max({sup_norm(rs.tau), max_abs(rs.b), max_abs(rs.d), max_abs(rs.v)}), 1e-13);
}

TEST(NcRhs, ReductionsZeroTheDroppedFields)
{
    std::mt19937_64 rng(3);
    GridSpec g(16);
    NonConsState s{random_field(g, rng, 2, 0.2, 1.0), random_vector(g, rng, 2, 0.3), random_vector(g, rng, 2, 0.3),
                   random_vector(g, rng, 2, 0.3)};
    NonConsState st = nc_rhs(apply_reduction(s, Reduction::string), Reduction::string);
    EXPECT_EQ(sup_norm(st.tau), 0.0);
    EXPECT_EQ(max_abs(st.d), 0.0);
    EXPECT_GT(max_abs(st.b), 0.0);
    NonConsState sb = nc_rhs(apply_reduction(s, Reduction::burgers), Reduction::burgers);
    EXPECT_EQ(sup_norm(sb.tau), 0.0);
    EXPECT_EQ(max_abs(sb.b), 0.0);
    EXPECT_EQ(max_abs(sb.d), 0.0);
    EXPECT_GT(max_abs(sb.v), 0.0);
}

TEST(NcRhs, ChainRuleMatchesConservativeForm)
{
    GridSpec g(32);
    AbiState s = smooth_consistent(g, 0.5);
    NonConsState nc = to_noncons(s);
    AbiState via_nc = abi_rate_from_nc(nc, nc_rhs(nc));
    AbiState direct = abi_rhs(s);
    EXPECT_LE(state_diff(via_nc, direct), 1e-8);
}

TEST(NcStep, BurgersMatchesCharacteristics)
{
    GridSpec g(64);
    NonConsState s{ScalarField(g), VectorField3(g), VectorField3(g), VectorField3(g)};
    s.v[0] = ScalarField::sample(g, [](double x, double, double) { return std::sin(two_pi * x); });
    double t = 0.05;
    int steps = 25;
    for (int k = 0; k < steps; ++k) s = nc_step(s, t / steps, Reduction::burgers);
    // oracle: v(x, t) = sin(2 pi xi) where x = xi + t sin(2 pi xi)
    double err = 0.0;
    for (int i = 0; i < g.n; ++i) {
        double x = double(i) / g.n, xi = x;
        for (int it = 0; it < 50; ++it) {
            double f = xi + t * std::sin(two_pi * xi) - x;
            xi -= f / (1.0 + t * two_pi * std::cos(two_pi * xi));
        }
        err = std::max(err, std::abs(s.v[0].v[g.index(i, 0, 0)] - std::sin(two_pi * xi)));
    }
    EXPECT_LE(err, 1e-6);
}

TEST(GalileanBoost, ZeroVelocityAndConstantState)
{
    GridSpec g(8);
    AbiState s = smooth_consistent(g);
    EXPECT_EQ(state_diff(galilean_boost(s, {0, 0, 0}, 0.3), s), 0.0);

    AbiState c = constant_state(g, 2.0, {0.1, 0, 0}, {0, 0.2, 0}, {0.3, 0, 0});
    AbiState b = galilean_boost(c, {0.5, -1.0, 0.25}, 0.7);
    EXPECT_LE(max_diff(b.h, c.h), 1e-13);
    EXPECT_LE(max_diff(b.B, c.B), 1e-13);
    EXPECT_NEAR(b.P[0].v[3], 0.3 - 1.0, 1e-13);
    EXPECT_NEAR(b.P[1].v[3], 2.0, 1e-13);
    EXPECT_NEAR(b.P[2].v[3], -0.5, 1e-13);
}

TEST(GalileanBoost, CommutesWithEvolutionShortRun)
{
    GridSpec g(16);
    AbiState s0 = smooth_consistent(g);
    Vec3 V{0.3, -0.2, 0.1};
    double T = 0.01;
    int steps = 20;
    double dt = T / steps;
    AbiState evolve_boost = galilean_boost(abi_run(s0, dt, steps), V, T);
    AbiState boost_evolve = abi_run(galilean_boost(s0, V, 0.0), dt, steps);
    EXPECT_LE(state_diff(evolve_boost, boost_evolve), 1e-6);
}

TEST(AbiRun, BlowUpDetectorFires)
{
    BlowUpDetector d(1.0);
    EXPECT_NO_THROW(d.check(9.0, 0.1));
    EXPECT_THROW(d.check(11.0, 0.1), BlowUp);
    EXPECT_THROW(d.check(std::nan(""), 0.1), BlowUp);
}
