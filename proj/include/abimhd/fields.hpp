#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <fftw3.h>

#include "errors.hpp"
#include "parallel.hpp"

namespace abimhd {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double default_h_floor = 1e-8;

struct GridSpec {
    int n = 0;

    GridSpec() = default;
    explicit GridSpec(int n_per_axis) : n(n_per_axis)
    {
        if (n < 4 || n % 2 != 0) {
            throw InvalidArgument("grid size must be even and >= 4, got " + std::to_string(n));
        }
    }

    std::size_t size() const { return std::size_t(n) * n * n; }
    double dx() const { return 1.0 / n; }
    std::size_t index(int i, int j, int k) const { return (std::size_t(i) * n + j) * n + k; }
    std::array<int, 3> ijk(std::size_t idx) const
    {
        int k = int(idx % n);
        int j = int((idx / n) % n);
        int i = int(idx / (std::size_t(n) * n));
        return {i, j, k};
    }
    Vec3 point(std::size_t idx) const
    {
        auto [i, j, k] = ijk(idx);
        return {double(i) / n, double(j) / n, double(k) / n};
    }
    bool operator==(const GridSpec&) const = default;
};

inline std::string describe_point(const GridSpec& g, std::size_t idx)
{
    auto [i, j, k] = g.ijk(idx);
    std::ostringstream os;
    os << "(" << i << "," << j << "," << k << ")";
    return os.str();
}

struct ScalarField {
    GridSpec grid;
    std::vector<double> v;

    ScalarField() = default;
    explicit ScalarField(GridSpec g, double fill = 0.0) : grid(g), v(g.size(), fill) {}

    template <class Fn>
    static ScalarField sample(GridSpec g, Fn&& fn)
    {
        ScalarField f(g);
        for (std::size_t i = 0; i < f.v.size(); ++i) {
            Vec3 x = g.point(i);
            f.v[i] = fn(x[0], x[1], x[2]);
        }
        return f;
    }

    std::size_t size() const { return v.size(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    ScalarField& operator+=(const ScalarField& o)
    {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o)
    {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
        return *this;
    }
    ScalarField& operator*=(double a)
    {
        for (double& x : v) x *= a;
        return *this;
    }
};

struct VectorField3 {
    std::array<ScalarField, 3> c;

    VectorField3() = default;
    explicit VectorField3(GridSpec g, double fill = 0.0)
        : c{ScalarField(g, fill), ScalarField(g, fill), ScalarField(g, fill)} {}
    VectorField3(ScalarField x, ScalarField y, ScalarField z) : c{std::move(x), std::move(y), std::move(z)}
    {
        if (!(c[0].grid == c[1].grid && c[1].grid == c[2].grid)) {
            throw InvalidArgument("vector components on different grids");
        }
    }

    template <class Fn>
    static VectorField3 sample(GridSpec g, Fn&& fn)
    {
        VectorField3 F(g);
        for (std::size_t i = 0; i < g.size(); ++i) {
            Vec3 x = g.point(i);
            Vec3 val = fn(x[0], x[1], x[2]);
            for (int a = 0; a < 3; ++a) F.c[a].v[i] = val[a];
        }
        return F;
    }

    const GridSpec& grid() const { return c[0].grid; }
    ScalarField& operator[](int a) { return c[a]; }
    const ScalarField& operator[](int a) const { return c[a]; }
    Vec3 at(std::size_t i) const { return {c[0].v[i], c[1].v[i], c[2].v[i]}; }
    void set(std::size_t i, const Vec3& x)
    {
        for (int a = 0; a < 3; ++a) c[a].v[i] = x[a];
    }

    VectorField3& operator+=(const VectorField3& o)
    {
        for (int a = 0; a < 3; ++a) c[a] += o.c[a];
        return *this;
    }
    VectorField3& operator-=(const VectorField3& o)
    {
        for (int a = 0; a < 3; ++a) c[a] -= o.c[a];
        return *this;
    }
    VectorField3& operator*=(double s)
    {
        for (auto& x : c) x *= s;
        return *this;
    }
};

inline ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
inline ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
inline ScalarField operator*(double s, ScalarField a) { return a *= s; }
inline ScalarField operator*(const ScalarField& a, const ScalarField& b)
{
    ScalarField r(a.grid);
    for (std::size_t i = 0; i < r.v.size(); ++i) r.v[i] = a.v[i] * b.v[i];
    return r;
}
inline VectorField3 operator+(VectorField3 a, const VectorField3& b) { return a += b; }
inline VectorField3 operator-(VectorField3 a, const VectorField3& b) { return a -= b; }
inline VectorField3 operator*(double s, VectorField3 a) { return a *= s; }
inline VectorField3 operator*(const ScalarField& f, const VectorField3& F)
{
    return VectorField3(f * F[0], f * F[1], f * F[2]);
}

inline ScalarField dot(const VectorField3& a, const VectorField3& b)
{
    ScalarField r(a.grid());
    for (std::size_t i = 0; i < r.v.size(); ++i) {
        r.v[i] = a[0].v[i] * b[0].v[i] + a[1].v[i] * b[1].v[i] + a[2].v[i] * b[2].v[i];
    }
    return r;
}

inline VectorField3 cross(const VectorField3& a, const VectorField3& b)
{
    VectorField3 r(a.grid());
    for (std::size_t i = 0; i < a.grid().size(); ++i) {
        r[0].v[i] = a[1].v[i] * b[2].v[i] - a[2].v[i] * b[1].v[i];
        r[1].v[i] = a[2].v[i] * b[0].v[i] - a[0].v[i] * b[2].v[i];
        r[2].v[i] = a[0].v[i] * b[1].v[i] - a[1].v[i] * b[0].v[i];
    }
    return r;
}

inline double sup_norm(const ScalarField& f)
{
    double m = 0.0;
    for (double x : f.v) m = std::max(m, std::abs(x));
    return m;
}
inline double sup_norm(const VectorField3& F)
{
    double m = 0.0;
    for (std::size_t i = 0; i < F.grid().size(); ++i) {
        Vec3 x = F.at(i);
        m = std::max(m, std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
    }
    return m;
}
// Largest absolute component value; cheaper and what the blow-up detectors use.
inline double max_abs(const VectorField3& F)
{
    return std::max({sup_norm(F[0]), sup_norm(F[1]), sup_norm(F[2])});
}

inline double min_value(const ScalarField& f)
{
    double m = f.v.empty() ? 0.0 : f.v[0];
    for (double x : f.v) m = std::min(m, x);
    return m;
}
inline double max_value(const ScalarField& f)
{
    double m = f.v.empty() ? 0.0 : f.v[0];
    for (double x : f.v) m = std::max(m, x);
    return m;
}

// Mean over the grid = integral over the unit torus.
inline double integrate(const ScalarField& f)
{
    double s = 0.0;
    for (double x : f.v) s += x;
    return s / double(f.v.size());
}

inline double l1_norm(const ScalarField& f)
{
    double s = 0.0;
    for (double x : f.v) s += std::abs(x);
    return s / double(f.v.size());
}
// Pointwise Euclidean length, integrated.
inline double l1_norm(const VectorField3& F)
{
    double s = 0.0;
    for (std::size_t i = 0; i < F.grid().size(); ++i) {
        Vec3 x = F.at(i);
        s += std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    }
    return s / double(F.grid().size());
}

inline void require_finite(const ScalarField& f, const char* what)
{
    for (std::size_t i = 0; i < f.v.size(); ++i) {
        if (!std::isfinite(f.v[i])) {
            throw InvalidArgument(std::string(what) + ": non-finite value at grid index "
                                  + describe_point(f.grid, i));
        }
    }
}
inline void require_finite(const VectorField3& F, const char* what)
{
    for (int a = 0; a < 3; ++a) require_finite(F[a], what);
}

inline void require_positive(const ScalarField& h, double floor = default_h_floor)
{
    for (std::size_t i = 0; i < h.v.size(); ++i) {
        if (!(h.v[i] > floor)) {
            std::ostringstream os;
            os.precision(17);
            os << "positivity guard: h = " << h.v[i] << " at grid index " << describe_point(h.grid, i)
               << " (floor " << floor << ")";
            throw PositivityViolation(os.str());
        }
    }
}

inline ScalarField reciprocal(const ScalarField& h, double floor = default_h_floor)
{
    require_positive(h, floor);
    ScalarField r(h.grid);
    for (std::size_t i = 0; i < r.v.size(); ++i) r.v[i] = 1.0 / h.v[i];
    return r;
}

inline VectorField3 divide(const VectorField3& F, const ScalarField& h, double floor = default_h_floor)
{
    require_positive(h, floor);
    VectorField3 r(h.grid);
    for (int a = 0; a < 3; ++a) {
        for (std::size_t i = 0; i < h.v.size(); ++i) r[a].v[i] = F[a].v[i] / h.v[i];
    }
    return r;
}

// ---------------------------------------------------------------------------
// Spectral layer. Half-spectrum layout (n, n, n/2+1); forward transform is
// normalized so that the zero mode holds the mean.

struct Spectrum {
    GridSpec grid;
    std::vector<cplx> c;

    Spectrum() = default;
    explicit Spectrum(GridSpec g) : grid(g), c(std::size_t(g.n) * g.n * (g.n / 2 + 1)) {}

    int nz() const { return grid.n / 2 + 1; }
    std::size_t index(int i, int j, int k) const { return (std::size_t(i) * grid.n + j) * nz() + k; }
};

inline int wavenumber(int i, int n) { return i <= n / 2 ? i : i - n; }

namespace detail {

struct FftPlans {
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
};

inline FftPlans& plans_for(int n)
{
    static std::mutex mtx;
    static std::map<int, std::unique_ptr<FftPlans>> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto& slot = cache[n];
    if (!slot) {
        slot = std::make_unique<FftPlans>();
        std::vector<double> r(std::size_t(n) * n * n);
        std::vector<cplx> s(std::size_t(n) * n * (n / 2 + 1));
        auto* sc = reinterpret_cast<fftw_complex*>(s.data());
        unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        slot->fwd = fftw_plan_dft_r2c_3d(n, n, n, r.data(), sc, flags);
        slot->inv = fftw_plan_dft_c2r_3d(n, n, n, sc, r.data(), flags);
    }
    return *slot;
}

} // namespace detail

inline Spectrum forward(const ScalarField& f)
{
    Spectrum s(f.grid);
    auto& p = detail::plans_for(f.grid.n);
    std::vector<double> in = f.v;
    fftw_execute_dft_r2c(p.fwd, in.data(), reinterpret_cast<fftw_complex*>(s.c.data()));
    double scale = 1.0 / double(f.grid.size());
    for (auto& x : s.c) x *= scale;
    return s;
}

inline ScalarField inverse(const Spectrum& s)
{
    ScalarField f(s.grid);
    auto& p = detail::plans_for(s.grid.n);
    std::vector<cplx> in = s.c;  // c2r overwrites its input
    fftw_execute_dft_c2r(p.inv, reinterpret_cast<fftw_complex*>(in.data()), f.v.data());
    return f;
}

enum class Dealias { none, two_thirds };

inline bool kept_by_two_thirds(int k, int n) { return 3 * std::abs(k) < n; }

namespace detail {

// Visit every stored mode with its signed wavevector.
template <class Fn>
void for_each_mode(const GridSpec& g, Fn&& fn)
{
    int n = g.n;
    int nz = n / 2 + 1;
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i) {
        int k1 = wavenumber(i, n);
        for (int j = 0; j < n; ++j) {
            int k2 = wavenumber(j, n);
            for (int k = 0; k < nz; ++k, ++idx) fn(idx, k1, k2, k);
        }
    }
}

inline void apply_mask(Spectrum& s, Dealias d)
{
    if (d == Dealias::none) return;
    int n = s.grid.n;
    for_each_mode(s.grid, [&](std::size_t idx, int k1, int k2, int k3) {
        if (!(kept_by_two_thirds(k1, n) && kept_by_two_thirds(k2, n) && kept_by_two_thirds(k3, n))) {
            s.c[idx] = 0.0;
        }
    });
}

// i*2*pi*k along one axis; the Nyquist mode is dropped for odd derivatives.
inline cplx ik(int k, int n)
{
    if (2 * std::abs(k) == n) return 0.0;
    return cplx(0.0, two_pi * k);
}

inline Spectrum derivative(const Spectrum& s, int axis)
{
    Spectrum r(s.grid);
    int n = s.grid.n;
    for_each_mode(s.grid, [&](std::size_t idx, int k1, int k2, int k3) {
        int k = axis == 0 ? k1 : axis == 1 ? k2 : k3;
        r.c[idx] = ik(k, n) * s.c[idx];
    });
    return r;
}

inline void add_derivative(Spectrum& acc, const Spectrum& s, int axis, double sign = 1.0)
{
    int n = s.grid.n;
    for_each_mode(s.grid, [&](std::size_t idx, int k1, int k2, int k3) {
        int k = axis == 0 ? k1 : axis == 1 ? k2 : k3;
        acc.c[idx] += sign * ik(k, n) * s.c[idx];
    });
}

} // namespace detail

inline Spectrum forward(const ScalarField& f, Dealias d)
{
    Spectrum s = forward(f);
    detail::apply_mask(s, d);
    return s;
}

inline ScalarField dealias(const ScalarField& f) { return inverse(forward(f, Dealias::two_thirds)); }
inline VectorField3 dealias(const VectorField3& F)
{
    return VectorField3(dealias(F[0]), dealias(F[1]), dealias(F[2]));
}

// Shared derivative ops. `d` truncates the input spectrum first, which is how
// products feed into derivatives without an extra transform pair.
inline VectorField3 grad(const ScalarField& f, Dealias d = Dealias::none)
{
    require_finite(f, "grad");
    Spectrum s = forward(f, d);
    return VectorField3(inverse(detail::derivative(s, 0)), inverse(detail::derivative(s, 1)),
                        inverse(detail::derivative(s, 2)));
}

inline ScalarField partial(const ScalarField& f, int axis, Dealias d = Dealias::none)
{
    require_finite(f, "partial");
    return inverse(detail::derivative(forward(f, d), axis));
}

inline VectorField3 curl(const VectorField3& F, Dealias d = Dealias::none)
{
    require_finite(F, "curl");
    Spectrum s0 = forward(F[0], d), s1 = forward(F[1], d), s2 = forward(F[2], d);
    Spectrum r0(F.grid()), r1(F.grid()), r2(F.grid());
    detail::add_derivative(r0, s2, 1);
    detail::add_derivative(r0, s1, 2, -1.0);
    detail::add_derivative(r1, s0, 2);
    detail::add_derivative(r1, s2, 0, -1.0);
    detail::add_derivative(r2, s1, 0);
    detail::add_derivative(r2, s0, 1, -1.0);
    return VectorField3(inverse(r0), inverse(r1), inverse(r2));
}

inline ScalarField div(const VectorField3& F, Dealias d = Dealias::none)
{
    require_finite(F, "div");
    Spectrum acc(F.grid());
    for (int a = 0; a < 3; ++a) detail::add_derivative(acc, forward(F[a], d), a);
    return inverse(acc);
}

// Row-wise divergence: result_i = sum_j d_j T[i][j].
inline VectorField3 div_rows(const std::array<VectorField3, 3>& T, Dealias d = Dealias::none)
{
    return VectorField3(div(T[0], d), div(T[1], d), div(T[2], d));
}

// J[i][j] = d_j F_i.
inline std::array<VectorField3, 3> jacobian(const VectorField3& F, Dealias d = Dealias::none)
{
    return {grad(F[0], d), grad(F[1], d), grad(F[2], d)};
}

// (a . grad) F with the product dealiased.
inline VectorField3 advect(const VectorField3& a, const VectorField3& F)
{
    auto J = jacobian(F);
    VectorField3 r(F.grid());
    for (int i = 0; i < 3; ++i) {
        for (std::size_t p = 0; p < r.grid().size(); ++p) {
            r[i].v[p] = a[0].v[p] * J[i][0].v[p] + a[1].v[p] * J[i][1].v[p] + a[2].v[p] * J[i][2].v[p];
        }
    }
    return dealias(r);
}

inline ScalarField hyper_laplacian(const ScalarField& f, int l)
{
    if (l < 1) throw InvalidArgument("hyper_laplacian order must be >= 1");
    require_finite(f, "hyper_laplacian");
    Spectrum s = forward(f);
    detail::for_each_mode(s.grid, [&](std::size_t idx, int k1, int k2, int k3) {
        double k2sum = double(k1) * k1 + double(k2) * k2 + double(k3) * k3;
        s.c[idx] *= std::pow(two_pi * two_pi * k2sum, l);
    });
    return inverse(s);
}
inline VectorField3 hyper_laplacian(const VectorField3& F, int l)
{
    return VectorField3(hyper_laplacian(F[0], l), hyper_laplacian(F[1], l), hyper_laplacian(F[2], l));
}

// f(x) -> f(x + shift) by a phase factor on every mode.
inline ScalarField translate(const ScalarField& f, const Vec3& shift)
{
    Spectrum s = forward(f);
    detail::for_each_mode(s.grid, [&](std::size_t idx, int k1, int k2, int k3) {
        double phase = two_pi * (k1 * shift[0] + k2 * shift[1] + k3 * shift[2]);
        s.c[idx] *= std::polar(1.0, phase);
    });
    return inverse(s);
}
inline VectorField3 translate(const VectorField3& F, const Vec3& shift)
{
    return VectorField3(translate(F[0], shift), translate(F[1], shift), translate(F[2], shift));
}

// Leray projection onto divergence-free fields with the mean kept.
inline VectorField3 project_solenoidal(const VectorField3& F)
{
    GridSpec g = F.grid();
    std::array<Spectrum, 3> s{forward(F[0]), forward(F[1]), forward(F[2])};
    detail::for_each_mode(g, [&](std::size_t idx, int k1, int k2, int k3) {
        double k[3] = {double(k1), double(k2), double(k3)};
        double kk = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if (kk == 0.0) return;
        cplx kd = k[0] * s[0].c[idx] + k[1] * s[1].c[idx] + k[2] * s[2].c[idx];
        for (int a = 0; a < 3; ++a) s[a].c[idx] -= k[a] * kd / kk;
    });
    return VectorField3(inverse(s[0]), inverse(s[1]), inverse(s[2]));
}

// ---------------------------------------------------------------------------
// Explicit trigonometric expansion: value = Re sum_m c_m exp(2 pi i k_m . x),
// with conjugate partners folded in through weights.

class ModeExpansion {
public:
    struct Mode {
        std::array<int, 3> k;
        cplx c;
    };

    ModeExpansion() = default;
    explicit ModeExpansion(std::vector<Mode> modes) : modes_(std::move(modes)) {}

    static ModeExpansion from_field(const ScalarField& f, double rel_drop = 0.0)
    {
        Spectrum s = forward(f);
        int n = f.grid.n;
        double cmax = 0.0;
        for (auto& x : s.c) cmax = std::max(cmax, std::abs(x));
        std::vector<Mode> modes;
        detail::for_each_mode(f.grid, [&](std::size_t idx, int k1, int k2, int k3) {
            cplx c = s.c[idx];
            if (std::abs(c) == 0.0 || std::abs(c) < rel_drop * cmax) return;
            bool partner_stored = (k3 == 0 || 2 * k3 == n);
            modes.push_back({{k1, k2, k3}, partner_stored ? c : 2.0 * c});
        });
        return ModeExpansion(std::move(modes));
    }

    const std::vector<Mode>& modes() const { return modes_; }

    double value(const Vec3& x) const
    {
        double s = 0.0;
        for (const auto& m : modes_) {
            double th = two_pi * (m.k[0] * x[0] + m.k[1] * x[1] + m.k[2] * x[2]);
            s += m.c.real() * std::cos(th) - m.c.imag() * std::sin(th);
        }
        return s;
    }

    Vec3 gradient(const Vec3& x) const
    {
        Vec3 g{0.0, 0.0, 0.0};
        for (const auto& m : modes_) {
            double th = two_pi * (m.k[0] * x[0] + m.k[1] * x[1] + m.k[2] * x[2]);
            // d/dx Re(c e^{i th}) = Re(c i 2 pi k e^{i th})
            double re = -(m.c.real() * std::sin(th) + m.c.imag() * std::cos(th));
            for (int a = 0; a < 3; ++a) g[a] += two_pi * m.k[a] * re;
        }
        return g;
    }

private:
    std::vector<Mode> modes_;
};

inline double wrap_unit(double x)
{
    double r = x - std::floor(x);
    return r >= 1.0 ? 0.0 : r;
}

inline double eval_at(const ModeExpansion& F, Vec3 x)
{
    for (double& c : x) c = wrap_unit(c);
    return F.value(x);
}

} // namespace abimhd
