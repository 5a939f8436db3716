#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include "abi.hpp"
#include "dmhd.hpp"
#include "fields.hpp"
#include "jacobi.hpp"

namespace abimhd {

inline constexpr double infinite_marker = std::numeric_limits<double>::infinity();
inline constexpr double default_u_floor = 1e-12;

// Test field w* = (1/h*, b*, d*, v*) at one instant plus the time
// derivatives of its first two blocks.
struct TestFieldFrame {
    double t = 0.0;
    ScalarField h_star_inv;
    VectorField3 b_star, d_star, v_star;
    ScalarField dt_h_star_inv;
    VectorField3 dt_b_star;

    const GridSpec& grid() const { return h_star_inv.grid; }
};

// Slot order: 0 scalar, 1-3 B, 4-6 D, 7-9 P.
using Mat10 = std::array<double, 100>;
using Field4 = std::array<ScalarField, 4>;
using Field10 = std::array<ScalarField, 10>;

struct QMatrixField {
    GridSpec grid;
    std::vector<Mat10> q;
};

namespace slot {
inline constexpr int h = 0, B = 1, D = 4, P = 7;
}

inline QMatrixField q_matrix(const TestFieldFrame& f)
{
    const GridSpec g = f.grid();
    ScalarField div_v = div(f.v_star);
    VectorField3 curl_d = curl(f.d_star), curl_b = curl(f.b_star);
    auto Jv = jacobian(f.v_star);  // Jv[i][j] = d_j v_i
    auto Jb = jacobian(f.b_star);

    QMatrixField Q{g, std::vector<Mat10>(g.size())};
    parallel_for(g.size(), [&](std::size_t p) {
        Mat10& m = Q.q[p];
        m.fill(0.0);
        auto set = [&](int i, int j, double x) {
            m[i * 10 + j] = x;
            m[j * 10 + i] = x;
        };
        set(0, 0, -2.0 * div_v.v[p]);
        for (int i = 0; i < 3; ++i) {
            set(0, slot::B + i, curl_d[i].v[p]);
            set(0, slot::D + i, -curl_b[i].v[p]);
            for (int j = 0; j < 3; ++j) {
                if (j >= i) set(slot::B + i, slot::B + j, -(Jv[i][j].v[p] + Jv[j][i].v[p]));
                set(slot::B + i, slot::P + j, Jb[i][j].v[p] - Jb[j][i].v[p]);
            }
            m[(slot::D + i) * 11] = 2.0;
            m[(slot::P + i) * 11] = 2.0;
        }
    });
    return Q;
}

// Q + r I_{10:4}
inline Mat10 shifted(const Mat10& q, double r)
{
    Mat10 m = q;
    for (int i = 0; i < 4; ++i) m[i * 11] += r;
    return m;
}

enum class R0Target { identity, two_minus_delta };

struct R0Result {
    double r0 = 0.0;
    double bracket_max = 0.0;
    std::size_t bisected_points = 0;
};

namespace detail {

inline double max_abs_entry(const Mat10& m)
{
    double x = 0.0;
    for (double e : m) x = std::max(x, std::abs(e));
    return x;
}

// A bracket end that is always feasible: Schur complement bound with the
// fixed 2I lower block; never below 1 + 10 max|Q|.
inline double r_upper(const Mat10& m, double c)
{
    double a = max_abs_entry(m);
    return std::max(1.0 + 10.0 * a, c + 1.0 + 4.0 * a + 12.0 * a * a / (2.0 - c));
}

inline bool feasible(const Mat10& m, double r, double c)
{
    const Mat10 q = shifted(m, r);
    return cholesky_above<10>(q, c) || min_eigenvalue<10>(q) >= c;
}

} // namespace detail

// Smallest r (bisection tolerance tol, rounded up) with
// Q(t,x) + r I_{10:4} >= c I_10 at every sampled (t,x).
class R0Accumulator {
public:
    R0Accumulator(R0Target target, double delta = 0.5, double tol = 1e-10) : tol_(tol)
    {
        if (target == R0Target::identity) {
            c_ = 1.0;
        } else {
            if (!(delta > 0.0 && delta < 2.0)) throw InvalidArgument("r0: delta must lie in (0, 2)");
            c_ = 2.0 - delta;
        }
    }

    void add(const QMatrixField& Q)
    {
        const std::size_t N = Q.q.size();
        std::vector<char> bad(N, 0);
        double r_now = r_;
        parallel_for(N, [&](std::size_t p) { bad[p] = detail::feasible(Q.q[p], r_now, c_) ? 0 : 1; }, 64);
        for (std::size_t p = 0; p < N; ++p) {
            if (!bad[p]) continue;
            const Mat10& m = Q.q[p];
            if (detail::feasible(m, r_, c_)) continue;
            double lo = r_, hi = detail::r_upper(m, c_);
            bracket_max_ = std::max(bracket_max_, hi);
            if (!detail::feasible(m, hi, c_)) {
                throw NumericalAbort("r0: no feasible shift below the bracket end; Q assembly is corrupted");
            }
            while (hi - lo > tol_) {
                double mid = 0.5 * (lo + hi);
                (detail::feasible(m, mid, c_) ? hi : lo) = mid;
            }
            r_ = hi;
            ++bisected_;
        }
    }

    void add(const TestFieldFrame& f) { add(q_matrix(f)); }

    R0Result result() const { return {r_, bracket_max_, bisected_}; }

private:
    double c_ = 1.0;
    double tol_;
    double r_ = 0.0;
    double bracket_max_ = 0.0;
    std::size_t bisected_ = 0;
};

inline double r0(const std::vector<TestFieldFrame>& frames, R0Target target = R0Target::identity, double delta = 0.5)
{
    if (frames.empty()) throw InvalidArgument("r0: empty frame trajectory");
    R0Accumulator acc(target, delta);
    for (const auto& f : frames) acc.add(f);
    return acc.result().r0;
}

// (L_h, L_B, L_D, L_P) as a 10-slot field.
inline Field10 l_operator(const TestFieldFrame& f)
{
    const GridSpec g = f.grid();
    ScalarField div_v = div(f.v_star);
    VectorField3 grad_tau = grad(f.h_star_inv);
    VectorField3 curl_d = curl(f.d_star), curl_b = curl(f.b_star);
    auto Jv = jacobian(f.v_star);
    auto Jb = jacobian(f.b_star);

    Field10 L;
    for (auto& x : L) x = ScalarField(g);
    parallel_for(g.size(), [&](std::size_t p) {
        double tau = f.h_star_inv.v[p];
        Vec3 v = f.v_star.at(p), b = f.b_star.at(p), d = f.d_star.at(p);
        L[0].v[p] = f.dt_h_star_inv.v[p] - tau * div_v.v[p]
                    + v[0] * grad_tau[0].v[p] + v[1] * grad_tau[1].v[p] + v[2] * grad_tau[2].v[p];
        for (int i = 0; i < 3; ++i) {
            double v_grad_b = 0.0, b_grad_v = 0.0, b_grad_b = 0.0;
            for (int j = 0; j < 3; ++j) {
                v_grad_b += v[j] * Jb[i][j].v[p];
                b_grad_v += b[j] * Jv[i][j].v[p];
                b_grad_b += b[j] * Jb[i][j].v[p];
            }
            L[slot::B + i].v[p] = f.dt_b_star[i].v[p] + v_grad_b - b_grad_v + tau * curl_d[i].v[p];
            L[slot::D + i].v[p] = d[i] - tau * curl_b[i].v[p];
            L[slot::P + i].v[p] = v[i] - b_grad_b - tau * grad_tau[i].v[p];
        }
    });
    return L;
}

// Closed form of the convex functional for densities: int |U|^2 / (2 rho),
// +infinity when rho vanishes where U does not.
inline double lambda(const ScalarField& rho, const Field4& U, double rho_floor = default_h_floor,
                     double u_floor = default_u_floor)
{
    double s = 0.0;
    bool infinite = false;
    for (std::size_t p = 0; p < rho.v.size(); ++p) {
        double r = rho.v[p];
        if (r < 0.0) {
            std::ostringstream os;
            os.precision(17);
            os << "lambda: negative density " << r << " at grid index " << describe_point(rho.grid, p);
            throw InvalidArgument(os.str());
        }
        double u2 = 0.0;
        for (const auto& c : U) u2 += c.v[p] * c.v[p];
        if (r > rho_floor) {
            s += u2 / (2.0 * r);
        } else if (std::sqrt(u2) > u_floor) {
            infinite = true;
        }
    }
    return infinite ? infinite_marker : s / double(rho.v.size());
}

struct DualPair {
    ScalarField a;
    Field4 A;
};

// max over the family of int a rho + A . U; each pair must satisfy a + |A|^2/2 <= 0.
inline double lambda_dual_lower_bound(const ScalarField& rho, const Field4& U, const std::vector<DualPair>& pairs)
{
    if (pairs.empty()) throw InvalidArgument("lambda_dual_lower_bound: empty family");
    double best = -infinite_marker;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& pr = pairs[k];
        double s = 0.0;
        for (std::size_t p = 0; p < rho.v.size(); ++p) {
            double A2 = 0.0, AU = 0.0;
            for (int i = 0; i < 4; ++i) {
                A2 += pr.A[i].v[p] * pr.A[i].v[p];
                AU += pr.A[i].v[p] * U[i].v[p];
            }
            double a = pr.a.v[p];
            if (a + 0.5 * A2 > 1e-12 * (1.0 + std::abs(a))) {
                std::ostringstream os;
                os.precision(17);
                os << "lambda_dual_lower_bound: pair " << k << " infeasible at grid index "
                   << describe_point(rho.grid, p) << " (a + |A|^2/2 = " << a + 0.5 * A2 << ")";
                throw InvalidArgument(os.str());
            }
            s += a * rho.v[p] + AU;
        }
        best = std::max(best, s / double(rho.v.size()));
    }
    return best;
}

// int W^T (Q + r I_{10:4}) W / (2 rho) at one instant.
inline double quadratic_density_integral(const ScalarField& rho, const Field10& W, const QMatrixField& Q, double r = 0.0,
                                         double rho_floor = default_h_floor, double w_floor = default_u_floor)
{
    const std::size_t N = rho.v.size();
    std::vector<double> vals(N);
    std::vector<char> inf(N, 0);
    parallel_for(N, [&](std::size_t p) {
        std::array<double, 10> w;
        double w2 = 0.0;
        for (int i = 0; i < 10; ++i) {
            w[i] = W[i].v[p];
            w2 += w[i] * w[i];
        }
        const Mat10& m = Q.q[p];
        double qf = 0.0;
        for (int i = 0; i < 10; ++i) {
            double row = 0.0;
            for (int j = 0; j < 10; ++j) row += m[i * 10 + j] * w[j];
            if (i < 4) row += r * w[i];
            qf += w[i] * row;
        }
        if (rho.v[p] > rho_floor) {
            vals[p] = qf / (2.0 * rho.v[p]);
        } else {
            vals[p] = 0.0;
            inf[p] = std::sqrt(w2) > w_floor;
        }
    });
    double s = 0.0;
    for (std::size_t p = 0; p < N; ++p) {
        if (inf[p]) return infinite_marker;
        s += vals[p];
    }
    return s / double(N);
}

// Trapezoid in time over the samples with s <= t_k <= t.
inline double lambda_tilde(const std::vector<double>& times, const std::vector<ScalarField>& rho,
                           const std::vector<Field10>& W, const std::vector<QMatrixField>& Q, double s, double t)
{
    if (times.size() != rho.size() || times.size() != W.size() || times.size() != Q.size()) {
        throw InvalidArgument("lambda_tilde: trajectories must share the time axis");
    }
    double acc = 0.0;
    double prev_t = 0.0, prev_v = 0.0;
    bool have_prev = false;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < s - 1e-14 || times[k] > t + 1e-14) continue;
        double v = quadratic_density_integral(rho[k], W[k], Q[k]);
        if (std::isinf(v)) return infinite_marker;
        if (have_prev) acc += 0.5 * (times[k] - prev_t) * (prev_v + v);
        prev_t = times[k];
        prev_v = v;
        have_prev = true;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Relative-entropy bookkeeping against one test field.

// U~ = (1 - h/h*, B - h b*) and W~ = (U~, D - h d*, P - h v*).
inline Field10 modulated_fields(const AbiState& s, const TestFieldFrame& f)
{
    const GridSpec g = s.grid();
    Field10 W;
    for (auto& x : W) x = ScalarField(g);
    for (std::size_t p = 0; p < g.size(); ++p) {
        double h = s.h.v[p];
        W[0].v[p] = 1.0 - h * f.h_star_inv.v[p];
        for (int i = 0; i < 3; ++i) {
            W[slot::B + i].v[p] = s.B[i].v[p] - h * f.b_star[i].v[p];
            W[slot::D + i].v[p] = s.D[i].v[p] - h * f.d_star[i].v[p];
            W[slot::P + i].v[p] = s.P[i].v[p] - h * f.v_star[i].v[p];
        }
    }
    return W;
}

inline Field4 head4(const Field10& W) { return {W[0], W[1], W[2], W[3]}; }

inline double dot_integral(const Field10& a, const Field10& b)
{
    const std::size_t N = a[0].v.size();
    double s = 0.0;
    for (std::size_t p = 0; p < N; ++p) {
        for (int i = 0; i < 10; ++i) s += a[i].v[p] * b[i].v[p];
    }
    return s / double(N);
}

struct EntropyReport {
    double r_used = 0.0;
    double r0 = 0.0;
    std::vector<double> t, lambda_t, lambda_tilde_cum, R_t, slack_t;
    double holder_quotient = 0.0;

    double max_slack() const
    {
        double m = -infinite_marker;
        for (double x : slack_t) m = std::max(m, x);
        return m;
    }
};

struct SlackOptions {
    std::optional<double> known_r0;  // skip the bisection when already certified
};

inline double holder_distance(const AbiState& a, const AbiState& b)
{
    return l1_norm(a.h - b.h) + l1_norm(a.B - b.B);
}

inline EntropyReport dissipative_slack(const std::vector<double>& times, const std::vector<AbiState>& solution,
                                       const std::vector<TestFieldFrame>& frames, double r,
                                       const SlackOptions& opt = {})
{
    const std::size_t K = times.size();
    if (K == 0 || solution.size() != K || frames.size() != K) {
        throw InvalidArgument("dissipative_slack: solution, frames and times must have equal nonzero length");
    }
    EntropyReport rep;
    rep.r0 = opt.known_r0 ? *opt.known_r0 : r0(frames, R0Target::identity);
    if (r < rep.r0) {
        std::ostringstream os;
        os.precision(17);
        os << "dissipative_slack: r = " << r << " is below r0 = " << rep.r0;
        throw InvalidArgument(os.str());
    }
    rep.r_used = r;

    double cum_q = 0.0, cum_l = 0.0, prev_q = 0.0, prev_l = 0.0, lambda0 = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double t = times[k];
        const double w = std::exp(-r * t);
        Field10 W = modulated_fields(solution[k], frames[k]);
        double lam = lambda(solution[k].h, head4(W));
        double q = w * quadratic_density_integral(solution[k].h, W, q_matrix(frames[k]), r);
        double l = w * dot_integral(W, l_operator(frames[k]));
        if (k == 0) {
            lambda0 = lam;
        } else {
            double dt = t - times[k - 1];
            cum_q += 0.5 * dt * (prev_q + q);
            cum_l += 0.5 * dt * (prev_l + l);
        }
        prev_q = q;
        prev_l = l;
        rep.t.push_back(t);
        rep.lambda_t.push_back(lam);
        rep.lambda_tilde_cum.push_back(cum_q);
        rep.R_t.push_back(cum_l);
        rep.slack_t.push_back(k == 0 ? 0.0 : w * lam + cum_q + cum_l - lambda0);
        if (k > 0) {
            double d0 = holder_distance(solution[k], solution[0]) / std::sqrt(t - times[0]);
            double d1 = holder_distance(solution[k], solution[k - 1]) / std::sqrt(t - times[k - 1]);
            rep.holder_quotient = std::max({rep.holder_quotient, d0, d1});
        }
    }
    return rep;
}

inline void write_entropy_csv(std::ostream& os, const EntropyReport& rep)
{
    os.precision(17);
    os << "t,lambda,lambda_tilde_cum,R,slack\n";
    for (std::size_t k = 0; k < rep.t.size(); ++k) {
        os << rep.t[k] << ',' << rep.lambda_t[k] << ',' << rep.lambda_tilde_cum[k] << ',' << rep.R_t[k] << ','
           << rep.slack_t[k] << '\n';
    }
    os << "# r_used=" << rep.r_used << " r0=" << rep.r0 << " holder_quotient=" << rep.holder_quotient << '\n';
}

// ---------------------------------------------------------------------------
// Instantaneous form of the general identity with residuals.

struct IdentitySample {
    double t = 0.0;
    AbiState fields;   // (h, B, D, P) with div B = 0; dh/dt is taken as -div P
    VectorField3 dt_B;
};

struct IdentityTerms {
    double t = 0.0;
    double dE_dt = 0.0, q_term = 0.0, l_term = 0.0;
    double lhs = 0.0, rhs = 0.0;

    double scale() const { return std::max({std::abs(dE_dt), std::abs(q_term), std::abs(l_term), std::abs(rhs)}); }
    double relative_gap() const { return std::abs(lhs - rhs) / std::max(scale(), 1e-300); }
};

struct Residuals {
    VectorField3 phi_B, psi_D, phi_P;
};

inline Residuals identity_residuals(const AbiState& s, const VectorField3& dt_B)
{
    ScalarField ih = reciprocal(s.h);
    VectorField3 b = ih * s.B;
    const GridSpec g = s.grid();
    std::array<VectorField3, 3> T{VectorField3(g), VectorField3(g), VectorField3(g)};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) T[i][j] = s.B[i] * b[j];
    Residuals r;
    r.phi_B = dt_B + curl(ih * (s.D + cross(s.B, s.P)));
    r.psi_D = s.D - curl(b);
    r.phi_P = s.P - div_rows(T) - grad(ih);
    return r;
}

inline IdentityTerms identity_residual_check(const IdentitySample& smp, const TestFieldFrame& f)
{
    const AbiState& s = smp.fields;
    const GridSpec g = s.grid();
    ScalarField dt_h = div(s.P);
    dt_h *= -1.0;

    Field10 W = modulated_fields(s, f);
    IdentityTerms out;
    out.t = smp.t;

    double dE = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
        double h = s.h.v[p], dh = dt_h.v[p];
        double du0 = -dh * f.h_star_inv.v[p] - h * f.dt_h_star_inv.v[p];
        double u2 = W[0].v[p] * W[0].v[p];
        double udu = W[0].v[p] * du0;
        for (int i = 0; i < 3; ++i) {
            double du = smp.dt_B[i].v[p] - dh * f.b_star[i].v[p] - h * f.dt_b_star[i].v[p];
            u2 += W[1 + i].v[p] * W[1 + i].v[p];
            udu += W[1 + i].v[p] * du;
        }
        dE += udu / h - u2 * dh / (2.0 * h * h);
    }
    out.dE_dt = dE / double(g.size());
    out.q_term = quadratic_density_integral(s.h, W, q_matrix(f));
    out.l_term = dot_integral(W, l_operator(f));
    out.lhs = out.dE_dt + out.q_term + out.l_term;

    Residuals res = identity_residuals(s, smp.dt_B);
    ScalarField ih = reciprocal(s.h);
    double rhs = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
        for (int i = 0; i < 3; ++i) {
            rhs += res.phi_B[i].v[p] * (s.B[i].v[p] * ih.v[p] - f.b_star[i].v[p])
                   + res.psi_D[i].v[p] * (s.D[i].v[p] * ih.v[p] - f.d_star[i].v[p])
                   + res.phi_P[i].v[p] * (s.P[i].v[p] * ih.v[p] - f.v_star[i].v[p]);
        }
    }
    out.rhs = rhs / double(g.size());
    return out;
}

inline std::vector<IdentityTerms> identity_residual_check(const std::vector<IdentitySample>& samples,
                                                          const std::vector<TestFieldFrame>& frames)
{
    if (samples.size() != frames.size()) throw InvalidArgument("identity check: sample/frame count mismatch");
    std::vector<IdentityTerms> out;
    for (std::size_t k = 0; k < samples.size(); ++k) out.push_back(identity_residual_check(samples[k], frames[k]));
    return out;
}

// ---------------------------------------------------------------------------
// Frames built from solver output.

// The DMHD solution read as a test field; time derivatives from the exact rhs.
inline TestFieldFrame frame_from_dmhd(const DmhdState& s, double t)
{
    Constitutive c = constitutive(s);
    DmhdState r = dmhd_rhs(s, c);
    ScalarField ih = reciprocal(s.h);
    TestFieldFrame f;
    f.t = t;
    f.h_star_inv = ih;
    f.b_star = ih * s.B;
    f.d_star = ih * c.D;
    f.v_star = ih * c.P;
    f.dt_h_star_inv = ScalarField(s.grid());
    f.dt_b_star = VectorField3(s.grid());
    for (std::size_t p = 0; p < ih.v.size(); ++p) {
        double w = ih.v[p], dh = r.h.v[p];
        f.dt_h_star_inv.v[p] = -dh * w * w;
        for (int i = 0; i < 3; ++i) f.dt_b_star[i].v[p] = r.B[i].v[p] * w - s.B[i].v[p] * dh * w * w;
    }
    return f;
}

inline TestFieldFrame trivial_frame(GridSpec g, double t = 0.0)
{
    return {t, ScalarField(g, 1.0), VectorField3(g), VectorField3(g), VectorField3(g), ScalarField(g), VectorField3(g)};
}

// Smooth time-dependent frame: each field is a short sum of travelling modes
// with analytic time derivatives.
class RandomFrameFamily {
public:
    RandomFrameFamily(std::uint64_t seed, double amplitude = 0.2, int modes = 3) : amp_(amplitude)
    {
        std::uint64_t x = seed * 0x9E3779B97F4A7C15ull + 0x12345;
        auto next = [&]() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            return double(x >> 11) / double(1ull << 53);
        };
        for (int f = 0; f < 10; ++f) {
            for (int m = 0; m < modes; ++m) {
                Term t;
                for (int a = 0; a < 3; ++a) t.k[a] = int(next() * 3.0) - 1;
                if (t.k[0] == 0 && t.k[1] == 0 && t.k[2] == 0) t.k[m % 3] = 1;
                t.a = 2.0 * next() - 1.0;
                t.phase = two_pi * next();
                t.omega = 4.0 * (2.0 * next() - 1.0);
                terms_[f].push_back(t);
            }
        }
    }

    TestFieldFrame frame(GridSpec g, double t) const
    {
        TestFieldFrame f;
        f.t = t;
        ScalarField s0 = eval(0, g, t, false);
        f.h_star_inv = ScalarField(g);
        f.dt_h_star_inv = ScalarField(g);
        ScalarField ds0 = eval(0, g, t, true);
        for (std::size_t p = 0; p < g.size(); ++p) {
            f.h_star_inv.v[p] = 1.0 + 0.5 * s0.v[p];
            f.dt_h_star_inv.v[p] = 0.5 * ds0.v[p];
        }
        f.b_star = VectorField3(eval(1, g, t, false), eval(2, g, t, false), eval(3, g, t, false));
        f.dt_b_star = VectorField3(eval(1, g, t, true), eval(2, g, t, true), eval(3, g, t, true));
        f.d_star = VectorField3(eval(4, g, t, false), eval(5, g, t, false), eval(6, g, t, false));
        f.v_star = VectorField3(eval(7, g, t, false), eval(8, g, t, false), eval(9, g, t, false));
        return f;
    }

private:
    struct Term {
        std::array<int, 3> k;
        double a, phase, omega;
    };

    ScalarField eval(int field, GridSpec g, double t, bool derivative) const
    {
        return ScalarField::sample(g, [&](double x, double y, double z) {
            double s = 0.0;
            for (const auto& tm : terms_[field]) {
                double th = two_pi * (tm.k[0] * x + tm.k[1] * y + tm.k[2] * z) + tm.omega * t + tm.phase;
                s += derivative ? amp_ * tm.a * tm.omega * std::cos(th) : amp_ * tm.a * std::sin(th);
            }
            return s;
        });
    }

    double amp_;
    std::array<std::vector<Term>, 10> terms_;
};

} // namespace abimhd
