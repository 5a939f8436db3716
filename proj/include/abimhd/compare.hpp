#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "abi.hpp"
#include "dmhd.hpp"
#include "entropy.hpp"
#include "fields.hpp"

namespace abimhd {

// Least-squares slope of log(error) against log(t).
struct RateFit {
    std::vector<double> t;
    std::vector<double> error;
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // rms of the log-space residual
    int excluded = 0;       // samples dropped at or below 10x the floor
};

inline RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& error, double floor = 0.0)
{
    if (t.size() != error.size()) throw InvalidArgument("fit_rate: time and error series differ in length");
    RateFit f;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] > 0.0 && error[i] > 10.0 * floor && error[i] > 0.0) {
            f.t.push_back(t[i]);
            f.error.push_back(error[i]);
        } else {
            ++f.excluded;
        }
    }
    if (f.t.size() < 4) {
        std::ostringstream os;
        os.precision(17);
        os << "fit_rate: only " << f.t.size() << " of " << t.size()
           << " samples lie above 10x the error floor " << floor << "; need at least 4";
        throw InvalidArgument(os.str());
    }
    const double n = double(f.t.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < f.t.size(); ++i) {
        double x = std::log(f.t[i]), y = std::log(f.error[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double den = n * sxx - sx * sx;
    if (!(den > 0.0)) throw InvalidArgument("fit_rate: sample times are not distinct");
    f.slope = (n * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / n;
    double r2 = 0.0;
    for (std::size_t i = 0; i < f.t.size(); ++i) {
        double r = std::log(f.error[i]) - f.intercept - f.slope * std::log(f.t[i]);
        r2 += r * r;
    }
    f.residual = std::sqrt(r2 / n);
    return f;
}

struct RescaleOptions {
    double max_first_spacing = 1e-2;  // t_1 - t_0 allowed for the limits at theta = 0
    double h_floor = default_h_floor;
};

namespace detail {

// Derivative at x[i] of the quadratic through three neighbouring samples.
template <class F>
F three_point_derivative(const std::vector<double>& x, const std::vector<const F*>& f, std::size_t i)
{
    std::size_t a, b, c;
    if (i == 0) {
        a = 0, b = 1, c = 2;
    } else if (i + 1 == x.size()) {
        a = i - 2, b = i - 1, c = i;
    } else {
        a = i - 1, b = i, c = i + 1;
    }
    const double xi = x[i];
    double wa = ((xi - x[b]) + (xi - x[c])) / ((x[a] - x[b]) * (x[a] - x[c]));
    double wb = ((xi - x[a]) + (xi - x[c])) / ((x[b] - x[a]) * (x[b] - x[c]));
    double wc = ((xi - x[a]) + (xi - x[b])) / ((x[c] - x[a]) * (x[c] - x[b]));
    // weights sum to zero; differencing against f[i] keeps constants exact
    F r = wa * (*f[a] - *f[i]);
    r += wb * (*f[b] - *f[i]);
    r += wc * (*f[c] - *f[i]);
    return r;
}

} // namespace detail

// Test fields in the slow time theta = t^2/2 built from an ABI trajectory
// started from D = P = 0:
//   h* = h'(t),  b* = b'(t),  d* = d'(t)/t,  v* = v'(t)/t,
// with d*, v* at theta = 0 the one-sided t-derivatives of d', v'.
// Frames sit at theta_j = t_j^2/2; theta derivatives are three-point
// differences on that grid.
inline std::vector<TestFieldFrame> rescaled_test_fields(const std::vector<double>& times,
                                                        const std::vector<AbiState>& traj,
                                                        const RescaleOptions& opt = {})
{
    if (times.size() != traj.size()) throw InvalidArgument("rescaled_test_fields: times and states differ in length");
    if (times.size() < 3) throw InvalidArgument("rescaled_test_fields: need at least 3 samples");
    if (times[0] != 0.0) throw InvalidArgument("rescaled_test_fields: trajectory must start at t = 0");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) throw InvalidArgument("rescaled_test_fields: times must increase");
    }
    if (times[1] > opt.max_first_spacing || std::abs((times[2] - times[1]) - times[1]) > 1e-9 * times[1]) {
        std::ostringstream os;
        os.precision(17);
        os << "rescaled_test_fields: insufficient sampling near t = 0 (first spacings " << times[1] << ", "
           << times[2] - times[1] << "); need two equal spacings of at most " << opt.max_first_spacing;
        throw InvalidArgument(os.str());
    }

    const std::size_t m = times.size();
    std::vector<ScalarField> tau(m);
    std::vector<VectorField3> b(m), d(m), v(m);
    for (std::size_t j = 0; j < m; ++j) {
        tau[j] = reciprocal(traj[j].h, opt.h_floor);
        b[j] = tau[j] * traj[j].B;
        d[j] = tau[j] * traj[j].D;
        v[j] = tau[j] * traj[j].P;
    }

    std::vector<TestFieldFrame> frames(m);
    for (std::size_t j = 0; j < m; ++j) {
        TestFieldFrame& f = frames[j];
        f.t = 0.5 * times[j] * times[j];
        f.h_star_inv = tau[j];
        f.b_star = b[j];
        if (j == 0) {
            const double dt = times[1];
            f.d_star = (1.0 / (2.0 * dt)) * (4.0 * d[1] - 3.0 * d[0] - d[2]);
            f.v_star = (1.0 / (2.0 * dt)) * (4.0 * v[1] - 3.0 * v[0] - v[2]);
        } else {
            f.d_star = (1.0 / times[j]) * d[j];
            f.v_star = (1.0 / times[j]) * v[j];
        }
    }
    std::vector<double> theta(m);
    std::vector<const ScalarField*> tp(m);
    std::vector<const VectorField3*> bp(m);
    for (std::size_t j = 0; j < m; ++j) {
        theta[j] = frames[j].t;
        tp[j] = &tau[j];
        bp[j] = &b[j];
    }
    for (std::size_t j = 0; j < m; ++j) {
        frames[j].dt_h_star_inv = detail::three_point_derivative(theta, tp, j);
        frames[j].dt_b_star = detail::three_point_derivative(theta, bp, j);
    }
    return frames;
}

struct ErrorSeries {
    std::vector<double> t, err_h, err_B, cum_err_D, cum_err_P;
};

// Running accumulator for the four error curves; each sample pairs the ABI
// state at t with the DMHD state at theta = t^2/2.
class ErrorAccumulator {
public:
    explicit ErrorAccumulator(double h_floor = default_h_floor) : h_floor_(h_floor) {}

    void add(double t, const AbiState& abi, double theta, const DmhdState& dmhd)
    {
        if (!(abi.grid() == dmhd.grid())) throw InvalidArgument("error_curves: grid mismatch");
        if (std::abs(theta - 0.5 * t * t) > 1e-12 * std::max(1.0, theta)) {
            std::ostringstream os;
            os.precision(17);
            os << "error_curves: DMHD sample at theta = " << theta << " does not match t^2/2 = " << 0.5 * t * t;
            throw InvalidArgument(os.str());
        }
        if (!out_.t.empty() && !(t > out_.t.back())) throw InvalidArgument("error_curves: times must increase");
        AbiState closed = dmhd_as_abi(dmhd, h_floor_);
        double eD = l1_norm(abi.D - t * closed.D);
        double eP = l1_norm(abi.P - t * closed.P);
        double cD = 0.0, cP = 0.0;
        if (!out_.t.empty()) {
            double ds = t - out_.t.back();
            cD = out_.cum_err_D.back() + 0.5 * ds * (last_D_ + eD);
            cP = out_.cum_err_P.back() + 0.5 * ds * (last_P_ + eP);
        }
        last_D_ = eD;
        last_P_ = eP;
        out_.t.push_back(t);
        out_.err_h.push_back(l1_norm(abi.h - dmhd.h));
        out_.err_B.push_back(l1_norm(abi.B - dmhd.B));
        out_.cum_err_D.push_back(cD);
        out_.cum_err_P.push_back(cP);
    }

    const ErrorSeries& series() const { return out_; }

private:
    double h_floor_;
    double last_D_ = 0.0, last_P_ = 0.0;
    ErrorSeries out_;
};

inline ErrorSeries error_curves(const std::vector<double>& times, const std::vector<AbiState>& abi,
                                const std::vector<double>& thetas, const std::vector<DmhdState>& dmhd)
{
    if (times.size() != abi.size() || thetas.size() != dmhd.size() || times.size() != thetas.size()) {
        throw InvalidArgument("error_curves: trajectories have different lengths");
    }
    ErrorAccumulator acc;
    for (std::size_t j = 0; j < times.size(); ++j) acc.add(times[j], abi[j], thetas[j], dmhd[j]);
    return acc.series();
}

struct CompareConfig {
    double dt = 5e-4;          // ABI step; DMHD lands on every t^2/2
    double t_end = 0.1;
    double dmhd_dt_cap = 1e-4;
    double fit_t_min = 0.01;
    double fit_t_max = 0.1;
    double floor = 0.0;
    AbiStepOptions abi;
    DmhdStepOptions dmhd;

    void validate() const
    {
        auto bad = [](const std::string& w) { throw ConfigError("compare: " + w); };
        if (!(dt > 0.0)) bad("dt must be positive");
        if (!(t_end > 0.0)) bad("t_end must be positive");
        if (!(dmhd_dt_cap > 0.0)) bad("dmhd_dt_cap must be positive");
        if (!(fit_t_min > 0.0 && fit_t_max > fit_t_min)) bad("fit window must satisfy 0 < fit_t_min < fit_t_max");
    }
};

struct CompareReport {
    ErrorSeries series;
    RateFit h, B, D, P;
};

inline RateFit fit_window(const std::vector<double>& t, const std::vector<double>& e, double lo, double hi,
                          double floor)
{
    std::vector<double> ts, es;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] >= lo * (1.0 - 1e-12) && t[i] <= hi * (1.0 + 1e-12)) {
            ts.push_back(t[i]);
            es.push_back(e[i]);
        }
    }
    return fit_rate(ts, es, floor);
}

inline void fit_all(CompareReport& r, const CompareConfig& cfg)
{
    const auto& s = r.series;
    r.h = fit_window(s.t, s.err_h, cfg.fit_t_min, cfg.fit_t_max, cfg.floor);
    r.B = fit_window(s.t, s.err_B, cfg.fit_t_min, cfg.fit_t_max, cfg.floor);
    r.D = fit_window(s.t, s.cum_err_D, cfg.fit_t_min, cfg.fit_t_max, cfg.floor);
    r.P = fit_window(s.t, s.cum_err_P, cfg.fit_t_min, cfg.fit_t_max, cfg.floor);
}

// Runs ABI from (h0, B0, 0, 0) and DMHD from (h0, B0) in lockstep. The
// observer sees each aligned pair; the fit is skipped when `fit` is false.
inline CompareReport compare_run(const ScalarField& h0, const VectorField3& B0, const CompareConfig& cfg,
                                 const std::function<void(double, const AbiState&, double, const DmhdState&)>& observe = {},
                                 bool fit = true)
{
    cfg.validate();
    const GridSpec g = h0.grid;
    AbiState a{h0, B0, VectorField3(g), VectorField3(g)};
    DmhdState d{h0, B0};
    const int steps = int(std::llround(cfg.t_end / cfg.dt));
    if (std::abs(steps * cfg.dt - cfg.t_end) > 1e-9 * cfg.t_end) {
        throw ConfigError("compare: t_end must be a whole number of dt steps");
    }
    BlowUpDetector abi_guard(state_magnitude(a)), dmhd_guard(dmhd_magnitude(d));
    ErrorAccumulator acc(cfg.abi.h_floor);
    acc.add(0.0, a, 0.0, d);
    if (observe) observe(0.0, a, 0.0, d);
    double theta = 0.0;
    for (int k = 1; k <= steps; ++k) {
        double t = k * cfg.dt;
        double th = 0.5 * t * t;
        a = abi_step(a, cfg.dt, cfg.abi);
        d = dmhd_advance(d, theta, th, cfg.dmhd_dt_cap, cfg.dmhd);
        theta = th;
        abi_guard.check(state_magnitude(a), t);
        dmhd_guard.check(dmhd_magnitude(d), th);
        acc.add(t, a, th, d);
        if (observe) observe(t, a, th, d);
    }
    CompareReport r;
    r.series = acc.series();
    if (fit) fit_all(r, cfg);
    return r;
}

inline void write_compare_csv(std::ostream& os, const CompareReport& r, bool with_slopes = true)
{
    os.precision(17);
    os << "t,err_h,err_B,cum_err_D,cum_err_P\n";
    const auto& s = r.series;
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        os << s.t[i] << ',' << s.err_h[i] << ',' << s.err_B[i] << ',' << s.cum_err_D[i] << ',' << s.cum_err_P[i]
           << '\n';
    }
    if (with_slopes) {
        os << "# slope_h=" << r.h.slope << " slope_B=" << r.B.slope << " slope_D=" << r.D.slope
           << " slope_P=" << r.P.slope << '\n';
    }
}

// Smooth single-mode data used by the rate study.
inline std::pair<ScalarField, VectorField3> single_mode_data(GridSpec g, double h_amp = 0.2, double b_amp = 0.3)
{
    ScalarField h = ScalarField::sample(g, [&](double x, double, double) { return 1.0 + h_amp * std::cos(two_pi * x); });
    VectorField3 B(ScalarField(g),
                   ScalarField::sample(g, [&](double x, double, double) { return b_amp * std::cos(two_pi * x); }),
                   ScalarField(g));
    return {h, B};
}

} // namespace abimhd
