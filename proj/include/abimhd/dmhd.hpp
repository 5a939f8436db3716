#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "abi.hpp"
#include "fields.hpp"

namespace abimhd {

struct DmhdState {
    ScalarField h;
    VectorField3 B;

    const GridSpec& grid() const { return h.grid; }

    DmhdState plus(double s, const DmhdState& rate) const
    {
        DmhdState r = *this;
        for (std::size_t i = 0; i < h.v.size(); ++i) r.h.v[i] += s * rate.h.v[i];
        for (int a = 0; a < 3; ++a) {
            for (std::size_t i = 0; i < h.v.size(); ++i) r.B[a].v[i] += s * rate.B[a].v[i];
        }
        return r;
    }
};

struct Constitutive {
    VectorField3 D, P;
};

// D = curl(B/h), P = div(B (x) B / h) + grad(1/h).
inline Constitutive constitutive(const DmhdState& s, double h_floor = default_h_floor)
{
    const GridSpec g = s.grid();
    ScalarField ih = reciprocal(s.h, h_floor);
    VectorField3 b = ih * s.B;
    std::array<VectorField3, 3> T{VectorField3(g), VectorField3(g), VectorField3(g)};
    for (int a = 0; a < 3; ++a) {
        for (int c = 0; c < 3; ++c) {
            for (std::size_t p = 0; p < g.size(); ++p) T[a][c].v[p] = s.B[a].v[p] * b[c].v[p];
        }
    }
    Constitutive out{curl(b, Dealias::two_thirds), div_rows(T, Dealias::two_thirds)};
    out.P += grad(ih, Dealias::two_thirds);
    return out;
}

inline DmhdState dmhd_rhs(const DmhdState& s, const Constitutive& c, double h_floor = default_h_floor)
{
    ScalarField ih = reciprocal(s.h, h_floor);
    VectorField3 flux = cross(s.B, c.P);
    flux += c.D;
    flux = ih * flux;
    DmhdState r{div(c.P), curl(flux, Dealias::two_thirds)};
    r.h *= -1.0;
    r.B *= -1.0;
    return r;
}

inline DmhdState dmhd_rhs(const DmhdState& s, double h_floor = default_h_floor)
{
    return dmhd_rhs(s, constitutive(s, h_floor), h_floor);
}

struct DmhdStepOptions {
    double h_floor = default_h_floor;
    double c_par = 0.15;
};

inline double dmhd_max_dt(const DmhdState& s, double c_par = DmhdStepOptions{}.c_par)
{
    double hmin = min_value(s.h);
    double bmax = 0.0;
    for (std::size_t p = 0; p < s.h.v.size(); ++p) {
        Vec3 B = s.B.at(p);
        bmax = std::max(bmax, std::sqrt(B[0] * B[0] + B[1] * B[1] + B[2] * B[2]) / s.h.v[p]);
    }
    double dx = s.grid().dx();
    return c_par * dx * dx * hmin * hmin / ((1.0 + bmax) * (1.0 + bmax));
}

inline DmhdState dmhd_step(const DmhdState& s, double dt, const DmhdStepOptions& opt = {})
{
    require_positive(s.h, opt.h_floor);
    detail::check_step(dt, dmhd_max_dt(s, opt.c_par), "dmhd_step");
    DmhdState next = detail::rk4(s, dt, [&](const DmhdState& x) { return dmhd_rhs(x, opt.h_floor); });
    require_positive(next.h, opt.h_floor);
    return next;
}

inline double dmhd_magnitude(const DmhdState& s) { return std::max(sup_norm(s.h), max_abs(s.B)); }

// Uniform substeps from t0 to t1, each no larger than dt_cap or the current
// stability bound. Lands on t1 exactly.
inline DmhdState dmhd_advance(DmhdState s, double t0, double t1, double dt_cap, const DmhdStepOptions& opt = {})
{
    double span = t1 - t0;
    if (span < 0.0) throw InvalidArgument("dmhd_advance: t1 < t0");
    while (span > 0.0) {
        double cap = std::min(dt_cap, dmhd_max_dt(s, opt.c_par));
        int steps = std::max(1, int(std::ceil(span / cap - 1e-9)));
        double dt = span / steps;
        s = dmhd_step(s, dt, opt);
        span -= dt;
        if (span < 1e-15 * std::max(1.0, std::abs(t1))) break;
    }
    return s;
}

inline double energy(const DmhdState& s, double h_floor = default_h_floor)
{
    require_positive(s.h, h_floor);
    ScalarField e(s.grid());
    for (std::size_t p = 0; p < e.v.size(); ++p) {
        Vec3 B = s.B.at(p);
        e.v[p] = (1.0 + B[0] * B[0] + B[1] * B[1] + B[2] * B[2]) / (2.0 * s.h.v[p]);
    }
    return integrate(e);
}

inline double dissipation(const DmhdState& s, const Constitutive& c, double h_floor = default_h_floor)
{
    require_positive(s.h, h_floor);
    ScalarField e(s.grid());
    for (std::size_t p = 0; p < e.v.size(); ++p) {
        Vec3 D = c.D.at(p), P = c.P.at(p);
        double q = 0.0;
        for (int a = 0; a < 3; ++a) q += D[a] * D[a] + P[a] * P[a];
        e.v[p] = q / s.h.v[p];
    }
    return integrate(e);
}

inline double dissipation(const DmhdState& s, double h_floor = default_h_floor)
{
    return dissipation(s, constitutive(s, h_floor), h_floor);
}

// r_k = (E_{k+1} - E_k)/dt + (diss_k + diss_{k+1})/2
inline std::vector<double> energy_balance_residual(const std::vector<double>& energies,
                                                  const std::vector<double>& dissipations, double dt)
{
    if (energies.size() != dissipations.size()) throw InvalidArgument("series length mismatch");
    std::vector<double> r;
    for (std::size_t k = 0; k + 1 < energies.size(); ++k) {
        r.push_back((energies[k + 1] - energies[k]) / dt + 0.5 * (dissipations[k] + dissipations[k + 1]));
    }
    return r;
}

inline std::vector<double> energy_balance_residual(const std::vector<DmhdState>& traj, double dt)
{
    std::vector<double> E, Q;
    for (const auto& s : traj) {
        E.push_back(energy(s));
        Q.push_back(dissipation(s));
    }
    return energy_balance_residual(E, Q, dt);
}

struct DmhdDiagnostics {
    double t, energy, dissipation, mass, div_B, min_h;
};

inline DmhdDiagnostics dmhd_diagnostics(const DmhdState& s, double t)
{
    return {t, energy(s), dissipation(s), integrate(s.h), sup_norm(div(s.B)), min_value(s.h)};
}

inline DmhdState dmhd_run(const DmhdState& s0, double dt, int steps,
                          const std::function<void(int, double, const DmhdState&)>& observe = {},
                          const DmhdStepOptions& opt = {})
{
    BlowUpDetector detector(dmhd_magnitude(s0));
    DmhdState s = s0;
    if (observe) observe(0, 0.0, s);
    for (int k = 1; k <= steps; ++k) {
        s = dmhd_step(s, dt, opt);
        detector.check(dmhd_magnitude(s), k * dt);
        if (observe) observe(k, k * dt, s);
    }
    return s;
}

// ABI fields implied by a DMHD state at rescaled time (D, P from the closure).
inline AbiState dmhd_as_abi(const DmhdState& s, double h_floor = default_h_floor)
{
    Constitutive c = constitutive(s, h_floor);
    return {s.h, s.B, c.D, c.P};
}

} // namespace abimhd
