#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "fields.hpp"

namespace abimhd {

struct AbiState {
    ScalarField h;
    VectorField3 B, D, P;

    const GridSpec& grid() const { return h.grid; }

    static AbiState zeros(GridSpec g) { return {ScalarField(g), VectorField3(g), VectorField3(g), VectorField3(g)}; }

    // this + s * rate
    AbiState plus(double s, const AbiState& rate) const
    {
        AbiState r = *this;
        for (std::size_t i = 0; i < h.v.size(); ++i) r.h.v[i] += s * rate.h.v[i];
        for (int a = 0; a < 3; ++a) {
            for (std::size_t i = 0; i < h.v.size(); ++i) {
                r.B[a].v[i] += s * rate.B[a].v[i];
                r.D[a].v[i] += s * rate.D[a].v[i];
                r.P[a].v[i] += s * rate.P[a].v[i];
            }
        }
        return r;
    }

    std::vector<ScalarField> components() const
    {
        return {h, B[0], B[1], B[2], D[0], D[1], D[2], P[0], P[1], P[2]};
    }
};

struct NonConsState {
    ScalarField tau;
    VectorField3 b, d, v;

    const GridSpec& grid() const { return tau.grid; }

    NonConsState plus(double s, const NonConsState& rate) const
    {
        NonConsState r = *this;
        for (std::size_t i = 0; i < tau.v.size(); ++i) r.tau.v[i] += s * rate.tau.v[i];
        for (int a = 0; a < 3; ++a) {
            for (std::size_t i = 0; i < tau.v.size(); ++i) {
                r.b[a].v[i] += s * rate.b[a].v[i];
                r.d[a].v[i] += s * rate.d[a].v[i];
                r.v[a].v[i] += s * rate.v[a].v[i];
            }
        }
        return r;
    }
};

enum class Reduction { none, string, burgers };

// Largest absolute entry over every field; used by the blow-up detectors.
inline double state_magnitude(const AbiState& s)
{
    return std::max({sup_norm(s.h), max_abs(s.B), max_abs(s.D), max_abs(s.P)});
}

class BlowUpDetector {
public:
    explicit BlowUpDetector(double initial, double factor = 10.0) : limit_(factor * std::max(initial, 1e-300)) {}

    void check(double magnitude, double t) const
    {
        if (!(magnitude <= limit_)) {
            std::ostringstream os;
            os.precision(17);
            os << "blow-up detector: sup norm " << magnitude << " exceeds " << limit_ << " at t = " << t;
            throw BlowUp(os.str());
        }
    }

private:
    double limit_;
};

inline AbiState abi_rhs(const AbiState& s, double h_floor = default_h_floor)
{
    const GridSpec g = s.grid();
    ScalarField ih = reciprocal(s.h, h_floor);
    VectorField3 BxP = cross(s.B, s.P);
    VectorField3 DxP = cross(s.D, s.P);
    VectorField3 fluxB(g), fluxD(g);
    std::array<VectorField3, 3> T{VectorField3(g), VectorField3(g), VectorField3(g)};
    for (std::size_t p = 0; p < g.size(); ++p) {
        double w = ih.v[p];
        for (int a = 0; a < 3; ++a) {
            fluxB[a].v[p] = (BxP[a].v[p] + s.D[a].v[p]) * w;
            fluxD[a].v[p] = (DxP[a].v[p] - s.B[a].v[p]) * w;
            for (int b = 0; b < 3; ++b) {
                double t = s.P[a].v[p] * s.P[b].v[p] - s.B[a].v[p] * s.B[b].v[p] - s.D[a].v[p] * s.D[b].v[p];
                if (a == b) t -= 1.0;
                T[a][b].v[p] = t * w;
            }
        }
    }
    AbiState r;
    r.h = div(s.P);
    r.h *= -1.0;
    r.B = curl(fluxB, Dealias::two_thirds);
    r.B *= -1.0;
    r.D = curl(fluxD, Dealias::two_thirds);
    r.D *= -1.0;
    r.P = div_rows(T, Dealias::two_thirds);
    r.P *= -1.0;
    return r;
}

inline double abi_max_dt(const AbiState& s, double cfl = 0.4)
{
    double speed = 0.0;
    for (std::size_t p = 0; p < s.h.v.size(); ++p) {
        double ih = 1.0 / s.h.v[p];
        Vec3 B = s.B.at(p), D = s.D.at(p), P = s.P.at(p);
        auto len = [](const Vec3& x) { return std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]); };
        speed = std::max(speed, (len(P) + len(B) + len(D) + 1.0) * ih);
    }
    return cfl * s.grid().dx() / (1.0 + speed);
}

namespace detail {

inline void check_step(double dt, double dt_max, const char* what)
{
    if (!(dt > 0.0)) throw InvalidArgument(std::string(what) + ": dt must be positive");
    if (dt > dt_max * (1.0 + 1e-12)) {
        std::ostringstream os;
        os.precision(17);
        os << what << ": dt = " << dt << " exceeds the stability bound; use dt <= " << dt_max;
        throw StepRejected(os.str(), dt_max);
    }
}

template <class State, class Rhs>
State rk4(const State& s, double dt, Rhs&& rhs)
{
    State k1 = rhs(s);
    State k2 = rhs(s.plus(0.5 * dt, k1));
    State k3 = rhs(s.plus(0.5 * dt, k2));
    State k4 = rhs(s.plus(dt, k3));
    return s.plus(dt / 6.0, k1).plus(dt / 3.0, k2).plus(dt / 3.0, k3).plus(dt / 6.0, k4);
}

} // namespace detail

struct AbiStepOptions {
    double h_floor = default_h_floor;
    double cfl = 0.4;
};

inline AbiState abi_step(const AbiState& s, double dt, const AbiStepOptions& opt = {})
{
    require_positive(s.h, opt.h_floor);
    detail::check_step(dt, abi_max_dt(s, opt.cfl), "abi_step");
    AbiState next = detail::rk4(s, dt, [&](const AbiState& x) { return abi_rhs(x, opt.h_floor); });
    require_positive(next.h, opt.h_floor);
    return next;
}

struct ConstraintNorms {
    double p_cross = 0.0;   // |P - D x B|
    double h_consistency = 0.0;
    double div_B = 0.0;
    double div_D = 0.0;
};

inline ConstraintNorms abi_constraints(const AbiState& s)
{
    ConstraintNorms c;
    VectorField3 DxB = cross(s.D, s.B);
    for (std::size_t p = 0; p < s.h.v.size(); ++p) {
        for (int a = 0; a < 3; ++a) c.p_cross = std::max(c.p_cross, std::abs(s.P[a].v[p] - DxB[a].v[p]));
        Vec3 B = s.B.at(p), D = s.D.at(p), P = s.P.at(p);
        double q = 1.0;
        for (int a = 0; a < 3; ++a) q += B[a] * B[a] + D[a] * D[a] + P[a] * P[a];
        c.h_consistency = std::max(c.h_consistency, std::abs(s.h.v[p] - std::sqrt(q)));
    }
    c.div_B = sup_norm(div(s.B));
    c.div_D = sup_norm(div(s.D));
    return c;
}

inline double abi_entropy(const AbiState& s, double h_floor = default_h_floor)
{
    require_positive(s.h, h_floor);
    ScalarField e(s.grid());
    for (std::size_t p = 0; p < e.v.size(); ++p) {
        double q = 1.0;
        for (int a = 0; a < 3; ++a) {
            q += s.B[a].v[p] * s.B[a].v[p] + s.D[a].v[p] * s.D[a].v[p] + s.P[a].v[p] * s.P[a].v[p];
        }
        e.v[p] = q / (2.0 * s.h.v[p]);
    }
    return integrate(e);
}

// Maximum of |P/h| over the grid.
inline double abi_max_velocity(const AbiState& s)
{
    double m = 0.0;
    for (std::size_t p = 0; p < s.h.v.size(); ++p) {
        Vec3 P = s.P.at(p);
        m = std::max(m, std::sqrt(P[0] * P[0] + P[1] * P[1] + P[2] * P[2]) / s.h.v[p]);
    }
    return m;
}

// Consistent data from a divergence-free pair (B, D): P = D x B, h from the
// algebraic closure.
inline AbiState abi_consistent_state(const VectorField3& B, const VectorField3& D)
{
    AbiState s;
    s.B = B;
    s.D = D;
    s.P = cross(D, B);
    s.h = ScalarField(B.grid());
    for (std::size_t p = 0; p < s.h.v.size(); ++p) {
        double q = 1.0;
        for (int a = 0; a < 3; ++a) {
            q += s.B[a].v[p] * s.B[a].v[p] + s.D[a].v[p] * s.D[a].v[p] + s.P[a].v[p] * s.P[a].v[p];
        }
        s.h.v[p] = std::sqrt(q);
    }
    return s;
}

// x -> x + V t, P -> P - V h.
inline AbiState galilean_boost(const AbiState& s, const Vec3& V, double t)
{
    Vec3 shift{V[0] * t, V[1] * t, V[2] * t};
    bool moved = shift[0] != 0.0 || shift[1] != 0.0 || shift[2] != 0.0;
    AbiState r = moved ? AbiState{translate(s.h, shift), translate(s.B, shift), translate(s.D, shift),
                                  translate(s.P, shift)}
                       : s;
    for (int a = 0; a < 3; ++a) {
        for (std::size_t p = 0; p < r.h.v.size(); ++p) r.P[a].v[p] -= V[a] * r.h.v[p];
    }
    return r;
}

// ---------------------------------------------------------------------------
// Non-conservative form in (tau, b, d, v) = (1, B, D, P) / h.

inline NonConsState to_noncons(const AbiState& s, double h_floor = default_h_floor)
{
    ScalarField tau = reciprocal(s.h, h_floor);
    return {tau, tau * s.B, tau * s.D, tau * s.P};
}

inline AbiState from_noncons(const NonConsState& s, double floor = default_h_floor)
{
    ScalarField h = reciprocal(s.tau, floor);
    return {h, h * s.b, h * s.d, h * s.v};
}

namespace detail {

// (a . grad) F given the Jacobian of F, no truncation.
inline VectorField3 directional(const VectorField3& a, const std::array<VectorField3, 3>& J)
{
    VectorField3 r(a.grid());
    for (int i = 0; i < 3; ++i) {
        for (std::size_t p = 0; p < r.grid().size(); ++p) {
            r[i].v[p] = a[0].v[p] * J[i][0].v[p] + a[1].v[p] * J[i][1].v[p] + a[2].v[p] * J[i][2].v[p];
        }
    }
    return r;
}

} // namespace detail

inline NonConsState nc_rhs(const NonConsState& s, Reduction red = Reduction::none)
{
    const GridSpec g = s.grid();
    const std::size_t N = g.size();
    NonConsState r{ScalarField(g), VectorField3(g), VectorField3(g), VectorField3(g)};

    auto Jv = jacobian(s.v);
    VectorField3 dv = detail::directional(s.v, Jv);
    dv *= -1.0;
    if (red == Reduction::burgers) {
        r.v = dealias(dv);
        return r;
    }

    auto Jb = jacobian(s.b);
    VectorField3 db = detail::directional(s.b, Jv) - detail::directional(s.v, Jb);
    dv += detail::directional(s.b, Jb);

    if (red == Reduction::none) {
        auto Jd = jacobian(s.d);
        VectorField3 curl_d = curl(s.d), curl_b = curl(s.b);
        VectorField3 grad_tau = grad(s.tau);
        ScalarField div_v = div(s.v);
        VectorField3 dd = detail::directional(s.d, Jv) - detail::directional(s.v, Jd);
        dv += detail::directional(s.d, Jd);
        for (std::size_t p = 0; p < N; ++p) {
            double tau = s.tau.v[p];
            for (int a = 0; a < 3; ++a) {
                db[a].v[p] -= tau * curl_d[a].v[p];
                dd[a].v[p] += tau * curl_b[a].v[p];
                dv[a].v[p] += tau * grad_tau[a].v[p];
            }
            r.tau.v[p] = -(s.v[0].v[p] * grad_tau[0].v[p] + s.v[1].v[p] * grad_tau[1].v[p]
                           + s.v[2].v[p] * grad_tau[2].v[p])
                         + tau * div_v.v[p];
        }
        r.tau = dealias(r.tau);
        r.d = dealias(dd);
    }
    r.b = dealias(db);
    r.v = dealias(dv);
    return r;
}

// Chain rule back to the conservative variables.
inline AbiState abi_rate_from_nc(const NonConsState& s, const NonConsState& ds)
{
    const GridSpec g = s.grid();
    AbiState r = AbiState::zeros(g);
    for (std::size_t p = 0; p < g.size(); ++p) {
        double h = 1.0 / s.tau.v[p];
        double dh = -ds.tau.v[p] * h * h;
        r.h.v[p] = dh;
        for (int a = 0; a < 3; ++a) {
            r.B[a].v[p] = ds.b[a].v[p] * h + s.b[a].v[p] * dh;
            r.D[a].v[p] = ds.d[a].v[p] * h + s.d[a].v[p] * dh;
            r.P[a].v[p] = ds.v[a].v[p] * h + s.v[a].v[p] * dh;
        }
    }
    return r;
}

inline NonConsState apply_reduction(NonConsState s, Reduction red)
{
    const GridSpec g = s.grid();
    if (red != Reduction::none) {
        s.tau = ScalarField(g);
        s.d = VectorField3(g);
    }
    if (red == Reduction::burgers) s.b = VectorField3(g);
    return s;
}

inline double nc_max_dt(const NonConsState& s, double cfl = 0.4)
{
    double speed = 0.0;
    for (std::size_t p = 0; p < s.tau.v.size(); ++p) {
        auto len = [](const Vec3& x) { return std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]); };
        speed = std::max(speed, len(s.v.at(p)) + len(s.b.at(p)) + len(s.d.at(p)) + std::abs(s.tau.v[p]));
    }
    return cfl * s.grid().dx() / (1.0 + speed);
}

inline NonConsState nc_step(const NonConsState& s0, double dt, Reduction red = Reduction::none, double cfl = 0.4)
{
    NonConsState s = apply_reduction(s0, red);
    detail::check_step(dt, nc_max_dt(s, cfl), "nc_step");
    return detail::rk4(s, dt, [&](const NonConsState& x) { return nc_rhs(x, red); });
}

// Fixed-step run with the blow-up detector; the observer sees every state
// including the initial one.
inline AbiState abi_run(const AbiState& s0, double dt, int steps,
                        const std::function<void(int, double, const AbiState&)>& observe = {},
                        const AbiStepOptions& opt = {})
{
    BlowUpDetector detector(state_magnitude(s0));
    AbiState s = s0;
    if (observe) observe(0, 0.0, s);
    for (int k = 1; k <= steps; ++k) {
        s = abi_step(s, dt, opt);
        double t = k * dt;
        detector.check(state_magnitude(s), t);
        if (observe) observe(k, t, s);
    }
    return s;
}

} // namespace abimhd
