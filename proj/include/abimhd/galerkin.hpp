#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abi.hpp"
#include "fields.hpp"
#include "parallel.hpp"

namespace abimhd {

using Wavevector = std::array<int, 3>;
using Coeffs = Eigen::VectorXd;

// Half lattice: one representative of every +-k pair, zero excluded.
inline bool in_half_lattice(const Wavevector& k)
{
    if (k[0] != 0) return k[0] > 0;
    if (k[1] != 0) return k[1] > 0;
    return k[2] > 0;
}

inline int norm2(const Wavevector& k) { return k[0] * k[0] + k[1] * k[1] + k[2] * k[2]; }

// First N half-lattice wavevectors ordered by |k|^2, then lexicographically.
// Each k carries sqrt2 sin(2 pi k.x) and sqrt2 cos(2 pi k.x); a coefficient
// vector holds 3 components x 2N functions, index comp*2N + 2i (+1 for cos).
class BasisSpec {
public:
    explicit BasisSpec(int N) : N_(N)
    {
        if (N < 1) throw InvalidArgument("basis: N must be >= 1");
        for (int R = 1; int(k_.size()) < N; ++R) {
            k_.clear();
            for (int a = -R; a <= R; ++a)
                for (int b = -R; b <= R; ++b)
                    for (int c = -R; c <= R; ++c) {
                        Wavevector k{a, b, c};
                        if (in_half_lattice(k) && norm2(k) <= R * R) k_.push_back(k);
                    }
        }
        std::sort(k_.begin(), k_.end(), [](const Wavevector& x, const Wavevector& y) {
            return norm2(x) != norm2(y) ? norm2(x) < norm2(y) : x < y;
        });
        k_.resize(N);
    }

    int N() const { return N_; }
    const std::vector<Wavevector>& wavevectors() const { return k_; }
    int dim() const { return 6 * N_; }
    int block() const { return 2 * N_; }
    int index(int comp, int i, bool cosine) const { return comp * 2 * N_ + 2 * i + (cosine ? 1 : 0); }

    int max_component() const
    {
        int m = 0;
        for (const auto& k : k_)
            for (int a : k) m = std::max(m, std::abs(a));
        return m;
    }

    // (4 pi^2 |k|^2)^l for each of the 2N functions
    Eigen::VectorXd hyper_diagonal(int l) const
    {
        Eigen::VectorXd d(block());
        for (int i = 0; i < N_; ++i) {
            double lam = std::pow(two_pi * two_pi * norm2(k_[i]), l);
            d(2 * i) = d(2 * i + 1) = lam;
        }
        return d;
    }

    void check_grid(const GridSpec& g) const
    {
        if (2 * max_component() >= g.n) {
            std::ostringstream os;
            os << "basis with N = " << N_ << " needs a grid with n > " << 2 * max_component();
            throw InvalidArgument(os.str());
        }
    }

private:
    int N_;
    std::vector<Wavevector> k_;
};

namespace detail {

inline int wrap_index(int k, int n) { return ((k % n) + n) % n; }

// Grid DFT coefficient at any integer wavevector (periodic in n).
inline cplx spectral_value(const Spectrum& s, const Wavevector& k)
{
    int n = s.grid.n;
    int i = wrap_index(k[0], n), j = wrap_index(k[1], n), l = wrap_index(k[2], n);
    if (l <= n / 2) return s.c[s.index(i, j, l)];
    return std::conj(s.c[s.index(wrap_index(-k[0], n), wrap_index(-k[1], n), wrap_index(-k[2], n))]);
}

inline void set_mode(Spectrum& s, const Wavevector& k, cplx val)
{
    int n = s.grid.n;
    auto put = [&](const Wavevector& q, cplx x) {
        s.c[s.index(wrap_index(q[0], n), wrap_index(q[1], n), q[2])] = x;
    };
    Wavevector m{-k[0], -k[1], -k[2]};
    if (k[2] > 0) {
        put(k, val);
    } else if (k[2] < 0) {
        put(m, std::conj(val));
    } else {
        put(k, val);
        put(m, std::conj(val));
    }
}

} // namespace detail

inline VectorField3 synthesize(const BasisSpec& basis, GridSpec g, const Coeffs& c)
{
    basis.check_grid(g);
    if (c.size() != basis.dim()) throw InvalidArgument("synthesize: coefficient length mismatch");
    VectorField3 F(g);
    const double r2 = std::sqrt(0.5);
    for (int comp = 0; comp < 3; ++comp) {
        Spectrum s(g);
        for (int i = 0; i < basis.N(); ++i) {
            double sn = c(basis.index(comp, i, false)), cs = c(basis.index(comp, i, true));
            detail::set_mode(s, basis.wavevectors()[i], r2 * cplx(cs, -sn));
        }
        F[comp] = inverse(s);
    }
    return F;
}

// L2 inner products with every basis function (grid quadrature).
inline Coeffs project(const BasisSpec& basis, const VectorField3& f)
{
    basis.check_grid(f.grid());
    Coeffs c(basis.dim());
    const double r2 = std::sqrt(2.0);
    for (int comp = 0; comp < 3; ++comp) {
        Spectrum s = forward(f[comp]);
        for (int i = 0; i < basis.N(); ++i) {
            cplx v = detail::spectral_value(s, basis.wavevectors()[i]);
            c(basis.index(comp, i, false)) = -r2 * v.imag();
            c(basis.index(comp, i, true)) = r2 * v.real();
        }
    }
    return c;
}

// <rho u, w> on X_N. The 2N x 2N block is shared by the three components.
class MassOperator {
public:
    MassOperator(const BasisSpec& basis, const ScalarField& rho) : basis_(&basis)
    {
        basis.check_grid(rho.grid);
        min_rho_ = min_value(rho);
        if (!(min_rho_ > 0.0)) {
            std::ostringstream os;
            os.precision(17);
            os << "mass operator: density lower bound must be positive (min = " << min_rho_ << ")";
            throw InvalidArgument(os.str());
        }
        Spectrum s = forward(rho);
        const auto& k = basis.wavevectors();
        const int N = basis.N();
        G_.resize(2 * N, 2 * N);
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < N; ++j) {
                Wavevector dm{k[i][0] - k[j][0], k[i][1] - k[j][1], k[i][2] - k[j][2]};
                Wavevector sm{k[i][0] + k[j][0], k[i][1] + k[j][1], k[i][2] + k[j][2]};
                cplx a = detail::spectral_value(s, dm), b = detail::spectral_value(s, sm);
                G_(2 * i, 2 * j) = a.real() - b.real();
                G_(2 * i + 1, 2 * j + 1) = a.real() + b.real();
                G_(2 * i, 2 * j + 1) = -b.imag() - a.imag();
                G_(2 * i + 1, 2 * j) = -b.imag() + a.imag();
            }
        }
        llt_.compute(G_);
        if (llt_.info() != Eigen::Success) {
            throw PositivityViolation("mass operator lost positive definiteness");
        }
    }

    const Eigen::MatrixXd& gram() const { return G_; }
    double min_density() const { return min_rho_; }

    Coeffs apply(const Coeffs& c) const
    {
        Coeffs r(c.size());
        const int b = basis_->block();
        for (int comp = 0; comp < 3; ++comp) r.segment(comp * b, b) = G_ * c.segment(comp * b, b);
        return r;
    }

    Coeffs solve(const Coeffs& chi) const
    {
        Coeffs r(chi.size());
        const int b = basis_->block();
        for (int comp = 0; comp < 3; ++comp) r.segment(comp * b, b) = llt_.solve(chi.segment(comp * b, b));
        return r;
    }

private:
    const BasisSpec* basis_;
    double min_rho_ = 0.0;
    Eigen::MatrixXd G_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

inline Coeffs mass_apply(const BasisSpec& basis, const ScalarField& rho, const Coeffs& c)
{
    return MassOperator(basis, rho).apply(c);
}

inline Coeffs mass_solve(const BasisSpec& basis, const ScalarField& rho, const Coeffs& chi)
{
    return MassOperator(basis, rho).solve(chi);
}

// ---------------------------------------------------------------------------
// Configuration and state

enum class Splitting { automatic, on, off };

struct GalerkinConfig {
    int N = 7;
    double eps = 0.1;
    int l = 8;
    double dt = 1e-3;
    double T = 0.01;
    int grid_n = 0;  // 0: smallest even n resolving quadratic products of the basis
    Splitting splitting = Splitting::automatic;
    bool picard = false;
    double picard_tol = 1e-10;
    int picard_max_iter = 50;
    double sigma = 0.005;
    double h_floor = default_h_floor;

    std::vector<std::string> validate() const
    {
        if (N < 1) throw ConfigError("galerkin: N must be >= 1");
        if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("galerkin: eps must lie in (0, 1)");
        if (l < 1) throw ConfigError("galerkin: l must be >= 1");
        if (!(dt > 0.0)) throw ConfigError("galerkin: dt must be positive");
        if (!(T >= 0.0)) throw ConfigError("galerkin: T must be nonnegative");
        if (!(sigma > 0.0)) throw ConfigError("galerkin: sigma must be positive");
        if (!(picard_tol > 0.0) || picard_max_iter < 1) throw ConfigError("galerkin: bad Picard tolerance or cap");
        if (grid_n != 0 && (grid_n < 4 || grid_n % 2)) throw ConfigError("galerkin: grid n must be even and >= 4");
        std::vector<std::string> warn;
        if (l < 8) warn.push_back("galerkin: hyperviscosity order l = " + std::to_string(l) + " is below 8");
        return warn;
    }

    GridSpec grid(const BasisSpec& basis) const
    {
        if (grid_n) return GridSpec(grid_n);
        int n = 4 * basis.max_component() + 2;
        n += n % 2;
        return GridSpec(std::max(8, n));
    }
};

struct GalerkinState {
    double t = 0.0;
    ScalarField h;
    VectorField3 B;
    Coeffs d_coeffs, v_coeffs;
};

struct GalerkinRates {
    ScalarField h;
    VectorField3 B;
    Coeffs d_coeffs, v_coeffs;
};

namespace detail {

// Evolved variables: density, field and the momenta M[h]c of d and v.
struct MomentumState {
    ScalarField h;
    VectorField3 B;
    Coeffs md, mv;

    MomentumState plus(double s, const MomentumState& r) const
    {
        MomentumState x = *this;
        for (std::size_t i = 0; i < h.v.size(); ++i) x.h.v[i] += s * r.h.v[i];
        for (int a = 0; a < 3; ++a)
            for (std::size_t i = 0; i < h.v.size(); ++i) x.B[a].v[i] += s * r.B[a].v[i];
        x.md += s * r.md;
        x.mv += s * r.mv;
        return x;
    }
};

struct Flux {
    ScalarField dh;
    VectorField3 dB;
    Coeffs Fd, Fv;  // projected weak-form sources, hyperviscosity excluded
};

inline std::array<VectorField3, 3> outer(const VectorField3& a, const VectorField3& b, const ScalarField& w)
{
    const GridSpec g = a.grid();
    std::array<VectorField3, 3> T{VectorField3(g), VectorField3(g), VectorField3(g)};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) T[i][j] = w * (a[i] * b[j]);
    return T;
}

// Transport of (h, B) by (d, v) plus the projected right-hand sides of the
// regularized momentum equations. md = J[h d] is passed in so that the
// relaxation term is exact on X_N.
inline Flux flux(const BasisSpec& basis, const GalerkinConfig& cfg, const ScalarField& h, const VectorField3& B,
                 const Coeffs& cd, const Coeffs& cv, const Coeffs& md, const Coeffs& mv)
{
    const GridSpec g = h.grid;
    ScalarField ih = reciprocal(h, cfg.h_floor);
    VectorField3 d = synthesize(basis, g, cd), v = synthesize(basis, g, cv);
    VectorField3 b = ih * B;
    const double inv_eps = 1.0 / cfg.eps;

    Flux f;
    f.dh = div(h * v);
    f.dh *= -1.0;
    f.dB = curl(cross(B, v) + d);
    f.dB *= -1.0;

    auto dv = outer(d, v, h), vd = outer(v, d, h);
    for (int i = 0; i < 3; ++i) dv[i] -= vd[i];
    VectorField3 S = div_rows(dv);
    S *= -1.0;
    S += inv_eps * curl(b);
    f.Fd = project(basis, S) - inv_eps * md;

    auto Jd = jacobian(d);
    VectorField3 Nf = div_rows(outer(v, v, h));
    Nf *= -1.0;
    for (int i = 0; i < 3; ++i) {
        ScalarField adv(g);
        for (int j = 0; j < 3; ++j) adv += d[j] * Jd[i][j];
        Nf[i] += h * adv;
    }
    Nf += inv_eps * (div_rows(outer(B, B, ih)) + grad(ih));
    f.Fv = project(basis, Nf) - inv_eps * mv;
    return f;
}

inline Coeffs hyper_apply(const Eigen::VectorXd& lam, const Coeffs& c)
{
    Coeffs r(c.size());
    const int b = int(lam.size());
    for (int comp = 0; comp < 3; ++comp) r.segment(comp * b, b) = lam.cwiseProduct(c.segment(comp * b, b));
    return r;
}

} // namespace detail

inline GalerkinRates galerkin_rhs(const BasisSpec& basis, const GalerkinState& s, const GalerkinConfig& cfg)
{
    require_positive(s.h, cfg.h_floor);
    MassOperator M(basis, s.h);
    Coeffs md = M.apply(s.d_coeffs), mv = M.apply(s.v_coeffs);
    detail::Flux f = detail::flux(basis, cfg, s.h, s.B, s.d_coeffs, s.v_coeffs, md, mv);
    Eigen::VectorXd lam = basis.hyper_diagonal(cfg.l);
    // d/dt (G c) = F - Lambda c  =>  c' = G^{-1}(F - Lambda c - M[dh] c)
    auto mass_rate = [&](const Coeffs& c) { return project(basis, f.dh * synthesize(basis, s.h.grid, c)); };
    GalerkinRates r;
    r.h = f.dh;
    r.B = f.dB;
    r.d_coeffs = M.solve(f.Fd - detail::hyper_apply(lam, s.d_coeffs) - mass_rate(s.d_coeffs));
    r.v_coeffs = M.solve(f.Fv - detail::hyper_apply(lam, s.v_coeffs) - mass_rate(s.v_coeffs));
    return r;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct GalerkinDiagnostics {
    double t = 0.0;
    double lambda_n = 0.0;
    double dissipation = 0.0;   // int h(|v|^2 + |d|^2), rate
    double hyperviscous = 0.0;  // eps int |grad^l v|^2 + |grad^l d|^2, rate
    double dissipation_cum = 0.0;
    double hyperviscous_cum = 0.0;
    double min_h = 0.0;
};

inline GalerkinDiagnostics galerkin_diagnostics(const BasisSpec& basis, const GalerkinConfig& cfg,
                                                const GalerkinState& s)
{
    MassOperator M(basis, s.h);
    ScalarField ih = reciprocal(s.h, cfg.h_floor);
    double field = 0.0;
    for (std::size_t p = 0; p < ih.v.size(); ++p) {
        Vec3 B = s.B.at(p);
        field += (1.0 + B[0] * B[0] + B[1] * B[1] + B[2] * B[2]) * ih.v[p] * 0.5;
    }
    field /= double(ih.v.size());
    double kin = s.v_coeffs.dot(M.apply(s.v_coeffs)) + s.d_coeffs.dot(M.apply(s.d_coeffs));
    Eigen::VectorXd lam = basis.hyper_diagonal(cfg.l);
    double hyp = s.v_coeffs.dot(detail::hyper_apply(lam, s.v_coeffs)) + s.d_coeffs.dot(detail::hyper_apply(lam, s.d_coeffs));
    GalerkinDiagnostics d;
    d.t = s.t;
    d.lambda_n = field + 0.5 * cfg.eps * kin;
    d.dissipation = kin;
    d.hyperviscous = cfg.eps * hyp;
    d.min_h = min_value(s.h);
    return d;
}

// H^4-type spectral norms of the initial data; logged only.
struct InitialDataBounds {
    double min_h = 0.0, max_h = 0.0, h_sobolev = 0.0, B_sobolev = 0.0;
};

inline double sobolev_norm(const ScalarField& f, int order)
{
    Spectrum s = forward(f);
    int n = f.grid.n;
    double acc = 0.0;
    detail::for_each_mode(f.grid, [&](std::size_t idx, int k1, int k2, int k3) {
        double w = (k3 == 0 || 2 * k3 == n) ? 1.0 : 2.0;
        double kk = two_pi * two_pi * double(k1 * k1 + k2 * k2 + k3 * k3);
        acc += w * std::pow(1.0 + kk, order) * std::norm(s.c[idx]);
    });
    return std::sqrt(acc);
}

inline InitialDataBounds initial_data_bounds(const ScalarField& h0, const VectorField3& B0)
{
    InitialDataBounds b;
    b.min_h = min_value(h0);
    b.max_h = max_value(h0);
    b.h_sobolev = sobolev_norm(h0, 4);
    double s = 0.0;
    for (int a = 0; a < 3; ++a) s += std::pow(sobolev_norm(B0[a], 4), 2);
    b.B_sobolev = std::sqrt(s);
    return b;
}

// ---------------------------------------------------------------------------
// Method of lines

namespace detail {

// Exact flow of d/dt(G c) = -Lambda c for frozen G: m(t) = G X exp(-mu t) X^T m.
inline Eigen::MatrixXd hyper_propagator(const MassOperator& M, const Eigen::VectorXd& lam, double t)
{
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(lam.asDiagonal().toDenseMatrix(), M.gram());
    if (es.info() != Eigen::Success) throw NumericalAbort("hyperviscous substep: eigen-decomposition failed");
    const Eigen::MatrixXd& X = es.eigenvectors();
    Eigen::VectorXd decay = (-t * es.eigenvalues().array()).exp();
    return M.gram() * X * decay.asDiagonal() * X.transpose();
}

inline void apply_block(const Eigen::MatrixXd& E, Coeffs& m)
{
    const int b = int(E.rows());
    for (int comp = 0; comp < 3; ++comp) m.segment(comp * b, b) = E * m.segment(comp * b, b);
}

} // namespace detail

class GalerkinStepper {
public:
    GalerkinStepper(const BasisSpec& basis, const GalerkinConfig& cfg) : basis_(basis), cfg_(cfg)
    {
        lam_ = basis.hyper_diagonal(cfg.l);
    }

    bool split_for(const ScalarField& h) const
    {
        if (cfg_.splitting == Splitting::on) return true;
        if (cfg_.splitting == Splitting::off) return false;
        return cfg_.dt * lam_.maxCoeff() / min_value(h) > 1.0;
    }

    detail::MomentumState to_momentum(const GalerkinState& s) const
    {
        MassOperator M(basis_, s.h);
        return {s.h, s.B, M.apply(s.d_coeffs), M.apply(s.v_coeffs)};
    }

    GalerkinState from_momentum(const detail::MomentumState& m, double t) const
    {
        MassOperator M(basis_, m.h);
        return {t, m.h, m.B, M.solve(m.md), M.solve(m.mv)};
    }

    detail::MomentumState rates(const detail::MomentumState& m, bool with_hyper) const
    {
        require_positive(m.h, cfg_.h_floor);
        MassOperator M(basis_, m.h);
        Coeffs cd = M.solve(m.md), cv = M.solve(m.mv);
        detail::Flux f = detail::flux(basis_, cfg_, m.h, m.B, cd, cv, m.md, m.mv);
        if (with_hyper) {
            f.Fd -= detail::hyper_apply(lam_, cd);
            f.Fv -= detail::hyper_apply(lam_, cv);
        }
        return {f.dh, f.dB, f.Fd, f.Fv};
    }

    detail::MomentumState step(const detail::MomentumState& m, double dt) const
    {
        if (!split_for(m.h)) {
            return detail::rk4(m, dt, [&](const detail::MomentumState& x) { return rates(x, true); });
        }
        detail::MomentumState x = m;
        hyper_substep(x, 0.5 * dt);
        x = detail::rk4(x, dt, [&](const detail::MomentumState& y) { return rates(y, false); });
        hyper_substep(x, 0.5 * dt);
        return x;
    }

private:
    void hyper_substep(detail::MomentumState& x, double t) const
    {
        Eigen::MatrixXd E = detail::hyper_propagator(MassOperator(basis_, x.h), lam_, t);
        detail::apply_block(E, x.md);
        detail::apply_block(E, x.mv);
    }

    const BasisSpec& basis_;
    GalerkinConfig cfg_;
    Eigen::VectorXd lam_;
};

struct GalerkinRun {
    GalerkinState final_state;
    std::vector<GalerkinDiagnostics> diagnostics;
    std::vector<std::string> warnings;
};

inline GalerkinState galerkin_initial_state(const BasisSpec& basis, const ScalarField& h0, const VectorField3& B0,
                                            const VectorField3& D0, const VectorField3& P0)
{
    require_positive(h0);
    MassOperator M(basis, h0);
    return {0.0, h0, B0, M.solve(project(basis, D0)), M.solve(project(basis, P0))};
}

inline double galerkin_magnitude(const GalerkinState& s)
{
    return std::max({sup_norm(s.h), max_abs(s.B), s.d_coeffs.cwiseAbs().maxCoeff(), s.v_coeffs.cwiseAbs().maxCoeff()});
}

inline GalerkinRun galerkin_run(const ScalarField& h0, const VectorField3& B0, const VectorField3& D0,
                                const VectorField3& P0, const GalerkinConfig& cfg,
                                const std::function<void(const GalerkinState&, const GalerkinDiagnostics&)>& observe = {})
{
    GalerkinRun run;
    run.warnings = cfg.validate();
    BasisSpec basis(cfg.N);
    GalerkinStepper stepper(basis, cfg);
    GalerkinState s = galerkin_initial_state(basis, h0, B0, D0, P0);
    detail::MomentumState m = stepper.to_momentum(s);

    const int steps = int(std::ceil(cfg.T / cfg.dt - 1e-9));
    const double dt = steps ? cfg.T / steps : 0.0;
    BlowUpDetector detector(std::max(galerkin_magnitude(s), 1.0));

    GalerkinDiagnostics d = galerkin_diagnostics(basis, cfg, s);
    run.diagnostics.push_back(d);
    if (observe) observe(s, d);
    for (int k = 1; k <= steps; ++k) {
        m = stepper.step(m, dt);
        s = stepper.from_momentum(m, k * dt);
        GalerkinDiagnostics dn = galerkin_diagnostics(basis, cfg, s);
        const GalerkinDiagnostics& prev = run.diagnostics.back();
        dn.dissipation_cum = prev.dissipation_cum + 0.5 * dt * (prev.dissipation + dn.dissipation);
        dn.hyperviscous_cum = prev.hyperviscous_cum + 0.5 * dt * (prev.hyperviscous + dn.hyperviscous);
        detector.check(galerkin_magnitude(s), s.t);
        run.diagnostics.push_back(dn);
        if (observe) observe(s, dn);
    }
    run.final_state = s;
    return run;
}

// ---------------------------------------------------------------------------
// Characteristics

struct PointSample {
    Vec3 v{};
    std::array<Vec3, 3> grad_v{};  // grad_v[i][j] = d_j v_i
    Vec3 curl_d{};

    double div_v() const { return grad_v[0][0] + grad_v[1][1] + grad_v[2][2]; }
};

// (d, v) given as coefficient samples on a time grid, linear in time between samples.
class CoefficientTrajectory {
public:
    CoefficientTrajectory(const BasisSpec& basis, std::vector<double> t, std::vector<Coeffs> d, std::vector<Coeffs> v)
        : basis_(&basis), t_(std::move(t)), d_(std::move(d)), v_(std::move(v))
    {
        if (t_.empty() || t_.size() != d_.size() || t_.size() != v_.size()) {
            throw InvalidArgument("coefficient trajectory: inconsistent sample counts");
        }
    }

    PointSample sample(double t, const Vec3& x) const
    {
        std::size_t k = 0;
        double w = 0.0;
        if (t_.size() > 1) {
            auto it = std::upper_bound(t_.begin(), t_.end(), t);
            k = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - t_.begin(), 1) - 1, t_.size() - 2);
            w = (t - t_[k]) / (t_[k + 1] - t_[k]);
        }
        const auto& kv = basis_->wavevectors();
        const int N = basis_->N();
        const double r2 = std::sqrt(2.0);
        PointSample ps;
        std::array<Vec3, 3> grad_d{};
        for (int i = 0; i < N; ++i) {
            double th = two_pi * (kv[i][0] * x[0] + kv[i][1] * x[1] + kv[i][2] * x[2]);
            double sn = std::sin(th), cs = std::cos(th);
            for (int comp = 0; comp < 3; ++comp) {
                int is = basis_->index(comp, i, false), ic = basis_->index(comp, i, true);
                auto coef = [&](const std::vector<Coeffs>& c, int idx) {
                    return w == 0.0 ? c[k](idx) : (1.0 - w) * c[k](idx) + w * c[k + 1](idx);
                };
                double vs = coef(v_, is), vc = coef(v_, ic), ds = coef(d_, is), dc = coef(d_, ic);
                ps.v[comp] += r2 * (vs * sn + vc * cs);
                double gv = r2 * two_pi * (vs * cs - vc * sn);
                double gd = r2 * two_pi * (ds * cs - dc * sn);
                for (int j = 0; j < 3; ++j) {
                    ps.grad_v[comp][j] += gv * kv[i][j];
                    grad_d[comp][j] += gd * kv[i][j];
                }
            }
        }
        ps.curl_d = {grad_d[2][1] - grad_d[1][2], grad_d[0][2] - grad_d[2][0], grad_d[1][0] - grad_d[0][1]};
        return ps;
    }

private:
    const BasisSpec* basis_;
    std::vector<double> t_;
    std::vector<Coeffs> d_, v_;
};

namespace detail {

inline Vec3 axpy(const Vec3& a, double s, const Vec3& b) { return {a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]}; }

inline int substeps(double span, double dt) { return std::max(1, int(std::ceil(std::abs(span) / dt - 1e-9))); }

// Integrate X' = v(tau, X), I' = div v from tau = s to tau = t.
template <class Provider>
std::pair<Vec3, double> trace(const Provider& P, double s, double t, Vec3 x, double dt)
{
    int n = substeps(t - s, dt);
    double h = (t - s) / n;
    double I = 0.0;
    double tau = s;
    for (int k = 0; k < n; ++k) {
        PointSample a = P.sample(tau, x);
        PointSample b = P.sample(tau + 0.5 * h, axpy(x, 0.5 * h, a.v));
        PointSample c = P.sample(tau + 0.5 * h, axpy(x, 0.5 * h, b.v));
        PointSample d = P.sample(tau + h, axpy(x, h, c.v));
        for (int i = 0; i < 3; ++i) x[i] += h / 6.0 * (a.v[i] + 2.0 * b.v[i] + 2.0 * c.v[i] + d.v[i]);
        I += h / 6.0 * (a.div_v() + 2.0 * b.div_v() + 2.0 * c.div_v() + d.div_v());
        tau = s + (k + 1) * h;
    }
    return {x, I};
}

} // namespace detail

// Phi(t, s, x): position at time t of the particle sitting at x at time s.
template <class Provider>
Vec3 flow_map(const Provider& P, double t, double s, const Vec3& x, double dt)
{
    Vec3 y = detail::trace(P, s, t, x, dt).first;
    for (double& c : y) c = wrap_unit(c);
    return y;
}

struct TransportResult {
    ScalarField h;
    VectorField3 B;
    double div_B = 0.0;
};

// h(t) from the explicit characteristic formula.
template <class Provider>
ScalarField transport_h(const Provider& P, const ModeExpansion& h0, double t, GridSpec g, double dt)
{
    ScalarField h(g);
    parallel_for(g.size(), [&](std::size_t p) {
        auto [x0, I] = detail::trace(P, t, 0.0, g.point(p), dt);
        // I = -int_0^t div v along the path
        h.v[p] = eval_at(h0, x0) * std::exp(I);
    }, 16);
    return h;
}

// B(t) from the G ODE carried along the forward characteristic.
template <class Provider>
TransportResult transport(const Provider& P, const ModeExpansion& h0, const std::array<ModeExpansion, 3>& B0, double t,
                          GridSpec g, double dt)
{
    TransportResult r{ScalarField(g), VectorField3(g), 0.0};
    parallel_for(g.size(), [&](std::size_t p) {
        auto [x0, I] = detail::trace(P, t, 0.0, g.point(p), dt);
        r.h.v[p] = eval_at(h0, x0) * std::exp(I);

        // Y = (X, J, G): X' = v, J' = div v, G' = grad v . G - curl d e^J
        Vec3 X = x0;
        double J = 0.0;
        Vec3 G{eval_at(B0[0], x0), eval_at(B0[1], x0), eval_at(B0[2], x0)};
        int n = detail::substeps(t, dt);
        double h = t / n;
        struct Rate {
            Vec3 x;
            double j;
            Vec3 g;
        };
        auto rate = [&](double tau, const Vec3& x, double j, const Vec3& gg) {
            PointSample s = P.sample(tau, x);
            Rate out{s.v, s.div_v(), {}};
            double e = std::exp(j);
            for (int i = 0; i < 3; ++i) {
                out.g[i] = s.grad_v[i][0] * gg[0] + s.grad_v[i][1] * gg[1] + s.grad_v[i][2] * gg[2] - s.curl_d[i] * e;
            }
            return out;
        };
        for (int k = 0; k < n; ++k) {
            double tau = k * h;
            Rate a = rate(tau, X, J, G);
            Rate b = rate(tau + 0.5 * h, detail::axpy(X, 0.5 * h, a.x), J + 0.5 * h * a.j, detail::axpy(G, 0.5 * h, a.g));
            Rate c = rate(tau + 0.5 * h, detail::axpy(X, 0.5 * h, b.x), J + 0.5 * h * b.j, detail::axpy(G, 0.5 * h, b.g));
            Rate d = rate(tau + h, detail::axpy(X, h, c.x), J + h * c.j, detail::axpy(G, h, c.g));
            for (int i = 0; i < 3; ++i) {
                X[i] += h / 6.0 * (a.x[i] + 2.0 * b.x[i] + 2.0 * c.x[i] + d.x[i]);
                G[i] += h / 6.0 * (a.g[i] + 2.0 * b.g[i] + 2.0 * c.g[i] + d.g[i]);
            }
            J += h / 6.0 * (a.j + 2.0 * b.j + 2.0 * c.j + d.j);
        }
        double e = std::exp(-J);
        r.B.set(p, {G[0] * e, G[1] * e, G[2] * e});
    }, 16);
    r.div_B = sup_norm(div(r.B));
    return r;
}

template <class Provider>
TransportResult transport_B(const Provider& P, const ModeExpansion& h0, const std::array<ModeExpansion, 3>& B0,
                            double t, GridSpec g, double dt)
{
    return transport(P, h0, B0, t, g, dt);
}

inline std::array<ModeExpansion, 3> expand(const VectorField3& F)
{
    return {ModeExpansion::from_field(F[0]), ModeExpansion::from_field(F[1]), ModeExpansion::from_field(F[2])};
}

// ---------------------------------------------------------------------------
// Picard iteration z -> K[z] on short subintervals, restarted until T.

struct PicardSegment {
    double t0 = 0.0, sigma = 0.0;
    int halvings = 0;
    std::vector<double> residuals;
};

struct PicardResult {
    std::vector<GalerkinState> states;  // every time sample, segment ends not repeated
    std::vector<PicardSegment> segments;
};

namespace detail {

struct PicardTrial {
    bool converged = false;
    std::vector<double> residuals;
    std::vector<GalerkinState> states;
};

inline PicardTrial picard_segment(const BasisSpec& basis, const GalerkinConfig& cfg, const GalerkinState& start,
                                  const Coeffs& md0, const Coeffs& mv0, double sigma)
{
    const GridSpec g = start.h.grid;
    const int M = detail::substeps(sigma, cfg.dt);
    const double step = sigma / M;
    ModeExpansion h0 = ModeExpansion::from_field(start.h);
    auto B0 = expand(start.B);
    Eigen::VectorXd lam = basis.hyper_diagonal(cfg.l);

    std::vector<double> tl(M + 1);
    for (int j = 0; j <= M; ++j) tl[j] = j * step;
    std::vector<Coeffs> zd(M + 1, start.d_coeffs), zv(M + 1, start.v_coeffs);

    PicardTrial out;
    int rising = 0;
    for (int it = 0; it < cfg.picard_max_iter; ++it) {
        CoefficientTrajectory P(basis, tl, zd, zv);
        std::vector<ScalarField> hs(M + 1);
        std::vector<VectorField3> Bs(M + 1);
        hs[0] = start.h;
        Bs[0] = start.B;
        for (int j = 1; j <= M; ++j) {
            TransportResult tr = transport(P, h0, B0, tl[j], g, step);
            hs[j] = std::move(tr.h);
            Bs[j] = std::move(tr.B);
        }
        std::vector<Coeffs> nd(M + 1), nv(M + 1);
        Coeffs acc_d = md0, acc_v = mv0;
        Coeffs prev_d, prev_v;
        double res = 0.0;
        for (int j = 0; j <= M; ++j) {
            MassOperator G(basis, hs[j]);
            Coeffs md = G.apply(zd[j]), mv = G.apply(zv[j]);
            Flux f = flux(basis, cfg, hs[j], Bs[j], zd[j], zv[j], md, mv);
            Coeffs Fd = f.Fd - hyper_apply(lam, zd[j]);
            Coeffs Fv = f.Fv - hyper_apply(lam, zv[j]);
            if (j > 0) {
                acc_d += 0.5 * step * (prev_d + Fd);
                acc_v += 0.5 * step * (prev_v + Fv);
            }
            prev_d = Fd;
            prev_v = Fv;
            nd[j] = G.solve(acc_d);
            nv[j] = G.solve(acc_v);
            res = std::max(res, std::sqrt((nd[j] - zd[j]).squaredNorm() + (nv[j] - zv[j]).squaredNorm()));
        }
        zd = std::move(nd);
        zv = std::move(nv);
        if (!out.residuals.empty() && res > out.residuals.back()) {
            ++rising;
        } else {
            rising = 0;
        }
        out.residuals.push_back(res);
        if (res <= cfg.picard_tol) {
            out.converged = true;
            for (int j = 0; j <= M; ++j) {
                out.states.push_back({start.t + tl[j], hs[j], Bs[j], zd[j], zv[j]});
            }
            // h, B at the sample times follow the converged z
            CoefficientTrajectory Pf(basis, tl, zd, zv);
            for (int j = 1; j <= M; ++j) {
                TransportResult tr = transport(Pf, h0, B0, tl[j], g, step);
                out.states[j].h = std::move(tr.h);
                out.states[j].B = std::move(tr.B);
            }
            return out;
        }
        if (rising >= 3) return out;
    }
    return out;
}

} // namespace detail

inline PicardResult picard_iterate(const ScalarField& h0, const VectorField3& B0, const VectorField3& D0,
                                   const VectorField3& P0, const GalerkinConfig& cfg)
{
    cfg.validate();
    BasisSpec basis(cfg.N);
    PicardResult res;
    GalerkinState s = galerkin_initial_state(basis, h0, B0, D0, P0);
    Coeffs md = project(basis, D0), mv = project(basis, P0);
    res.states.push_back(s);
    double sigma = cfg.sigma;
    int total_halvings = 0;
    while (s.t < cfg.T - 1e-12) {
        double span = std::min(sigma, cfg.T - s.t);
        PicardSegment seg{s.t, span, 0, {}};
        detail::PicardTrial trial;
        for (;;) {
            trial = detail::picard_segment(basis, cfg, s, md, mv, span);
            seg.residuals.insert(seg.residuals.end(), trial.residuals.begin(), trial.residuals.end());
            if (trial.converged) break;
            if (++total_halvings > 20) {
                std::ostringstream os;
                os.precision(17);
                os << "picard: no contraction at t = " << s.t << " after 20 halvings of sigma";
                throw NumericalAbort(os.str());
            }
            ++seg.halvings;
            span *= 0.5;
            sigma = span;
        }
        seg.sigma = span;
        res.segments.push_back(seg);
        for (std::size_t j = 1; j < trial.states.size(); ++j) res.states.push_back(trial.states[j]);
        s = trial.states.back();
        MassOperator M(basis, s.h);
        md = M.apply(s.d_coeffs);
        mv = M.apply(s.v_coeffs);
    }
    return res;
}

} // namespace abimhd
