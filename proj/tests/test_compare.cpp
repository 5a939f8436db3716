#include <gtest/gtest.h>

#include <sstream>

#include <abimhd/compare.hpp>

#include "support.hpp"

using namespace abimhd;
using testsupport::max_diff;

namespace {

std::vector<double> grid_times(int count, double dt)
{
    std::vector<double> t(count);
    for (int j = 0; j < count; ++j) t[j] = j * dt;
    return t;
}

struct AbiTrajectory {
    std::vector<double> t;
    std::vector<AbiState> s;
};

AbiTrajectory abi_from_rest(GridSpec g, double dt, int steps)
{
    auto [h, B] = single_mode_data(g);
    AbiTrajectory tr;
    abi_run({h, B, VectorField3(g), VectorField3(g)}, dt, steps, [&](int, double t, const AbiState& s) {
        tr.t.push_back(t);
        tr.s.push_back(s);
    });
    return tr;
}

} // namespace

TEST(FitRate, RecoversCubic)
{
    std::vector<double> t, e;
    for (int i = 1; i <= 10; ++i) {
        t.push_back(0.01 * i);
        e.push_back(5.0 * std::pow(0.01 * i, 3));
    }
    RateFit f = fit_rate(t, e);
    EXPECT_NEAR(f.slope, 3.0, 1e-10);
    EXPECT_NEAR(std::exp(f.intercept), 5.0, 1e-8);
    EXPECT_LT(f.residual, 1e-12);
}

TEST(FitRate, RecoversQuartic)
{
    std::vector<double> t, e;
    for (int i = 1; i <= 10; ++i) {
        t.push_back(0.01 * i);
        e.push_back(2.0 * std::pow(0.01 * i, 4));
    }
    EXPECT_NEAR(fit_rate(t, e).slope, 4.0, 1e-10);
}

TEST(FitRate, ExcludesSamplesNearFloor)
{
    std::vector<double> t, e;
    for (int i = 1; i <= 10; ++i) {
        t.push_back(0.01 * i);
        e.push_back(std::pow(0.01 * i, 3));
    }
    RateFit f = fit_rate(t, e, 1e-6);  // 10x floor = 1e-5 drops t <= 0.02
    EXPECT_EQ(f.excluded, 2);
    EXPECT_EQ(f.t.size(), 8u);
    EXPECT_NEAR(f.slope, 3.0, 1e-10);
}

TEST(FitRate, RefusesWhenEverythingIsAtFloor)
{
    std::vector<double> t{0.01, 0.02, 0.03, 0.04, 0.05}, e{1e-15, 2e-15, 1e-15, 3e-15, 0.0};
    try {
        fit_rate(t, e, 1e-14);
        FAIL() << "expected a refusal";
    } catch (const InvalidArgument& ex) {
        EXPECT_NE(std::string(ex.what()).find("only 0 of 5"), std::string::npos);
    }
    EXPECT_THROW(fit_rate({0.1, 0.2, 0.3}, {1.0, 2.0, 3.0}), InvalidArgument);
}

TEST(Rescale, StationaryTrajectoryGivesConstantFrames)
{
    GridSpec g(8);
    AbiState rest{ScalarField(g, 1.0), VectorField3(g), VectorField3(g), VectorField3(g)};
    auto frames = rescaled_test_fields(grid_times(5, 1e-3), std::vector<AbiState>(5, rest));
    ASSERT_EQ(frames.size(), 5u);
    for (const auto& f : frames) {
        EXPECT_LT(max_diff(f.h_star_inv, ScalarField(g, 1.0)), 1e-15);
        EXPECT_LT(sup_norm(f.d_star), 1e-15);
        EXPECT_LT(sup_norm(f.v_star), 1e-15);
        EXPECT_LT(sup_norm(f.dt_h_star_inv), 1e-12);
        EXPECT_LT(sup_norm(f.dt_b_star), 1e-12);
    }
    EXPECT_NEAR(frames[4].t, 0.5 * 4e-3 * 4e-3, 1e-20);
}

TEST(Rescale, LinearDisplacementGivesConstantD)
{
    GridSpec g(8);
    std::mt19937_64 rng(3);
    VectorField3 c = testsupport::random_vector(g, rng, 1, 1.0);
    ScalarField h(g, 2.0);
    auto t = grid_times(6, 2e-3);
    std::vector<AbiState> traj;
    for (double s : t) traj.push_back({h, VectorField3(g), (2.0 * s) * c, VectorField3(g)});
    for (const auto& f : rescaled_test_fields(t, traj)) EXPECT_LT(max_diff(f.d_star, c), 1e-12);
}

TEST(Rescale, ThetaDerivativeOfQuadraticDensity)
{
    // h'(t) = 1 + t^2 gives h*(theta) = 1 + 2 theta.
    GridSpec g(8);
    auto t = grid_times(21, 5e-3);
    std::vector<AbiState> traj;
    for (double s : t) traj.push_back({ScalarField(g, 1.0 + s * s), VectorField3(g), VectorField3(g), VectorField3(g)});
    auto frames = rescaled_test_fields(t, traj);
    for (const auto& f : frames) {
        double exact = -2.0 / ((1.0 + 2.0 * f.t) * (1.0 + 2.0 * f.t));
        EXPECT_NEAR(f.dt_h_star_inv.v[0], exact, 1e-5) << f.t;
    }
}

TEST(Rescale, LimitAtThetaZeroIsFirstOrderInTheta)
{
    GridSpec g(16);
    AbiTrajectory tr = abi_from_rest(g, 5e-4, 160);
    auto frames = rescaled_test_fields(tr.t, tr.s);
    auto gap = [&](std::size_t j) { return max_diff(frames[j].v_star, frames[0].v_star); };
    ASSERT_GT(sup_norm(frames[0].v_star), 1e-3);
    // t = 0.02, 0.04, 0.08: theta quadruples at each step
    double r1 = gap(80) / gap(40), r2 = gap(160) / gap(80);
    EXPECT_NEAR(r1, 4.0, 0.5);
    EXPECT_NEAR(r2, 4.0, 0.5);
    EXPECT_LT(gap(1), 1e-4);
}

TEST(Rescale, RejectsCoarseStartAndBadInput)
{
    GridSpec g(8);
    AbiState rest{ScalarField(g, 1.0), VectorField3(g), VectorField3(g), VectorField3(g)};
    std::vector<AbiState> four(4, rest);
    try {
        rescaled_test_fields(grid_times(4, 0.05), four);
        FAIL() << "coarse sampling accepted";
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("at most"), std::string::npos);
    }
    EXPECT_THROW(rescaled_test_fields({0.0, 1e-3, 3e-3, 4e-3}, four), InvalidArgument);
    EXPECT_THROW(rescaled_test_fields({0.0, 1e-3}, {rest, rest}), InvalidArgument);
    EXPECT_THROW(rescaled_test_fields({1e-3, 2e-3, 3e-3}, {rest, rest, rest}), InvalidArgument);
}

TEST(ErrorCurves, IdenticalTrivialRunsVanish)
{
    GridSpec g(8);
    CompareConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_end = 0.02;
    CompareReport r = compare_run(ScalarField(g, 1.0), VectorField3(g), cfg, {}, false);
    ASSERT_EQ(r.series.t.size(), 21u);
    for (std::size_t i = 0; i < r.series.t.size(); ++i) {
        EXPECT_EQ(r.series.err_h[i], 0.0);
        EXPECT_EQ(r.series.err_B[i], 0.0);
        EXPECT_EQ(r.series.cum_err_D[i], 0.0);
        EXPECT_EQ(r.series.cum_err_P[i], 0.0);
    }
}

TEST(ErrorCurves, RejectsMisalignedOrMismatchedInput)
{
    GridSpec g(8), g2(16);
    AbiState a{ScalarField(g, 1.0), VectorField3(g), VectorField3(g), VectorField3(g)};
    DmhdState d{ScalarField(g, 1.0), VectorField3(g)};
    DmhdState d2{ScalarField(g2, 1.0), VectorField3(g2)};
    EXPECT_THROW(error_curves({0.0}, {a}, {0.0}, {d2}), InvalidArgument);
    EXPECT_THROW(error_curves({0.0, 0.1}, {a, a}, {0.0, 0.1}, {d, d}), InvalidArgument);
    EXPECT_NO_THROW(error_curves({0.0, 0.1}, {a, a}, {0.0, 0.005}, {d, d}));
}

TEST(ErrorCurves, CumulativeTermsMatchOfflineTrapezoid)
{
    GridSpec g(8);
    CompareConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_end = 0.01;
    std::vector<double> t, th, pointwise;
    auto [h0, B0] = single_mode_data(g);
    CompareReport r = compare_run(h0, B0, cfg, [&](double s, const AbiState& a, double theta, const DmhdState& d) {
        t.push_back(s);
        th.push_back(theta);
        pointwise.push_back(l1_norm(a.D - s * dmhd_as_abi(d).D));
    }, false);
    double acc = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) acc += 0.5 * (t[i] - t[i - 1]) * (pointwise[i] + pointwise[i - 1]);
    EXPECT_NEAR(r.series.cum_err_D.back(), acc, 1e-15 + 1e-12 * acc);
}

// Starting from D = P = 0 the ABI solution is even in t for (h, B) and odd
// for (D, P), so the (h, B) mismatch with the time-changed DMHD solution
// begins at t^4 and the accumulated (D, P) mismatch at t^4 as well.
TEST(ErrorCurves, SmallTimeScaling)
{
    GridSpec g(16);
    CompareConfig cfg;
    cfg.dt = 5e-4;
    cfg.t_end = 0.02;
    CompareReport r = compare_run(single_mode_data(g).first, single_mode_data(g).second, cfg, {}, false);
    const auto& s = r.series;
    std::size_t i1 = 20, i2 = 40;  // t = 0.01, 0.02
    double rh = s.err_h[i2] / s.err_h[i1];
    double rB = s.err_B[i2] / s.err_B[i1];
    double rD = s.cum_err_D[i2] / s.cum_err_D[i1];
    double rP = s.cum_err_P[i2] / s.cum_err_P[i1];
    EXPECT_NEAR(rh, 16.0, 0.3 * 16.0);
    EXPECT_NEAR(rB, 16.0, 0.3 * 16.0);
    EXPECT_NEAR(rD, 16.0, 0.3 * 16.0);
    EXPECT_NEAR(rP, 16.0, 0.3 * 16.0);
    // the cubic bound holds with a shrinking constant
    EXPECT_LT(s.err_h[i2] / std::pow(s.t[i2], 3), s.err_h[i1] / std::pow(s.t[i1], 3) * 2.5);
}

TEST(ErrorCurves, CsvLayout)
{
    CompareReport r;
    r.series.t = {0.0, 0.1};
    r.series.err_h = {0.0, 1e-3};
    r.series.err_B = {0.0, 2e-3};
    r.series.cum_err_D = {0.0, 3e-4};
    r.series.cum_err_P = {0.0, 4e-4};
    r.h.slope = 3.0;
    std::ostringstream os;
    write_compare_csv(os, r);
    std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "t,err_h,err_B,cum_err_D,cum_err_P");
    EXPECT_NE(s.find("0.10000000000000001,0.001,0.002,0.00029999999999999997,0.00040000000000000002"),
              std::string::npos);
    EXPECT_NE(s.find("# slope_h=3 "), std::string::npos);
}
