#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "entropy.hpp"
#include "fields.hpp"
#include "snapshot.hpp"

namespace abimhd {

inline constexpr double gaussian_tail_tolerance = 1e-16;

// Number of periodic images per axis so the neglected Gaussian tail is below
// round-off.
inline int periodization_shells(double eps)
{
    return int(std::ceil(1.0 + eps * std::sqrt(2.0 * std::log(1.0 / gaussian_tail_tolerance))));
}

inline void check_mollifier_width(double eps)
{
    if (!(eps > 0.0 && eps < 1.0)) {
        std::ostringstream os;
        os.precision(17);
        os << "mollifier width must lie in (0, 1), got " << eps;
        throw InvalidArgument(os.str());
    }
}

// One axis of the periodized standard Gaussian of width eps.
inline double periodized_gaussian_1d(double x, double eps, int shells)
{
    const double norm = 1.0 / (eps * std::sqrt(2.0 * std::numbers::pi));
    double s = 0.0;
    for (int k = -shells; k <= shells; ++k) {
        double y = (x + k) / eps;
        s += std::exp(-0.5 * y * y);
    }
    return norm * s;
}

// Relative error of the grid quadrature of the periodized Gaussian: the first
// aliased Fourier coefficient exp(-2 pi^2 eps^2 n^2), three axes, both signs.
inline double gaussian_quadrature_error(int n, double eps)
{
    return 6.0 * std::exp(-2.0 * std::numbers::pi * std::numbers::pi * eps * eps * double(n) * n);
}

// Smallest even grid size resolving the kernel to `tol` in mass.
inline int required_grid_for(double eps, double tol = 1e-12)
{
    double need = std::sqrt(std::log(6.0 / tol) / 2.0) / (std::numbers::pi * eps);
    int n = int(std::ceil(need));
    return std::max(4, n + (n % 2));
}

// rho_eps(x - center) sampled on the grid; separable product of three 1-D sums.
inline ScalarField periodized_gaussian(GridSpec g, double eps, const Vec3& center = {0.0, 0.0, 0.0})
{
    check_mollifier_width(eps);
    if (gaussian_quadrature_error(g.n, eps) > 1e-12) {
        std::ostringstream os;
        os << "grid n = " << g.n << " under-resolves the mollifier of width " << eps
           << "; need n >= " << required_grid_for(eps);
        throw InvalidArgument(os.str());
    }
    const int K = periodization_shells(eps);
    std::array<std::vector<double>, 3> axis;
    for (int a = 0; a < 3; ++a) {
        axis[a].resize(g.n);
        for (int i = 0; i < g.n; ++i) {
            double x = double(i) / g.n - center[a];
            x -= std::round(x);
            axis[a][i] = periodized_gaussian_1d(x, eps, K);
        }
    }
    ScalarField r(g);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            for (int k = 0; k < g.n; ++k) r.v[g.index(i, j, k)] = axis[0][i] * axis[1][j] * axis[2][k];
    return r;
}

struct ScalarAtom {
    Vec3 x;
    double m;
};

struct VectorAtom {
    Vec3 x;
    std::array<double, 4> m;  // slot 0 pairs with the Lebesgue component of U
};

// h0 and U0 = (Lebesgue, B0) as grid densities plus finitely many atoms.
struct RoughInitialData {
    GridSpec grid;
    ScalarField h_density;
    Field4 U_density;
    std::vector<ScalarAtom> h_atoms;
    std::vector<VectorAtom> U_atoms;

    static RoughInitialData uniform(GridSpec g, double h = 1.0)
    {
        RoughInitialData d;
        d.grid = g;
        d.h_density = ScalarField(g, h);
        d.U_density = {ScalarField(g, 1.0), ScalarField(g), ScalarField(g), ScalarField(g)};
        return d;
    }

    static RoughInitialData from_density(const ScalarField& h, const VectorField3& B)
    {
        RoughInitialData d = uniform(h.grid, 0.0);
        d.h_density = h;
        for (int a = 0; a < 3; ++a) d.U_density[1 + a] = B[a];
        return d;
    }

    double total_mass() const
    {
        double m = integrate(h_density);
        for (const auto& a : h_atoms) m += a.m;
        return m;
    }

    VectorField3 B_density() const { return VectorField3(U_density[1], U_density[2], U_density[3]); }

    void validate() const
    {
        for (std::size_t p = 0; p < h_density.v.size(); ++p) {
            if (h_density.v[p] < 0.0) {
                throw InvalidArgument("initial density is negative at grid index " + describe_point(grid, p));
            }
        }
        for (std::size_t i = 0; i < h_atoms.size(); ++i) {
            if (h_atoms[i].m < 0.0) {
                throw InvalidArgument("atom " + std::to_string(i) + " carries negative h mass");
            }
        }
        if (!(total_mass() > 0.0)) throw InvalidArgument("initial data has no positive h mass");
    }
};

// Text format:
//   # comment
//   grid <n>                 required unless a density snapshot is given
//   uniform <h>              constant h density, U density (1, 0, 0, 0)
//   density <path>           snapshot with (h, B1, B2, B3) or (h, L, B1, B2, B3)
//   atoms <count>            followed by exactly <count> atom lines
//   x y z m                  h atom
//   x y z m1 m2 m3 m4        U atom
// Relative density paths resolve against `base_dir`.
inline RoughInitialData parse_rough_initial_data(std::istream& in, const std::string& base_dir = ".")
{
    auto fail = [](int line, const std::string& what) {
        throw ConfigError("initial data line " + std::to_string(line) + ": " + what);
    };
    std::optional<int> grid_n;
    std::optional<double> uniform_h;
    std::optional<Snapshot> snap;
    std::vector<ScalarAtom> h_atoms;
    std::vector<VectorAtom> U_atoms;
    int expected = -1, seen = 0, lineno = 0;

    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto c = line.find('#'); c != std::string::npos) line.erase(c);
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;

        auto number = [&](const std::string& s) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s, &used);
            } catch (const std::exception&) {
                fail(lineno, "not a number: '" + s + "'");
            }
            if (used != s.size() || !std::isfinite(v)) fail(lineno, "not a finite number: '" + s + "'");
            return v;
        };

        if (expected >= 0 && seen < expected) {
            if (tok.size() != 4 && tok.size() != 7) fail(lineno, "atom lines need 4 or 7 numbers");
            Vec3 x{number(tok[0]), number(tok[1]), number(tok[2])};
            if (tok.size() == 4) {
                h_atoms.push_back({x, number(tok[3])});
            } else {
                U_atoms.push_back({x, {number(tok[3]), number(tok[4]), number(tok[5]), number(tok[6])}});
            }
            ++seen;
            continue;
        }
        const std::string& key = tok[0];
        if (key == "atoms") {
            if (expected >= 0) fail(lineno, "duplicate atoms header");
            if (tok.size() != 2) fail(lineno, "expected 'atoms <count>'");
            double c = number(tok[1]);
            if (c < 0 || c != std::floor(c)) fail(lineno, "atom count must be a nonnegative integer");
            expected = int(c);
        } else if (key == "grid") {
            if (tok.size() != 2) fail(lineno, "expected 'grid <n>'");
            grid_n = int(number(tok[1]));
        } else if (key == "uniform") {
            if (tok.size() != 2) fail(lineno, "expected 'uniform <h>'");
            uniform_h = number(tok[1]);
        } else if (key == "density") {
            if (tok.size() != 2) fail(lineno, "expected 'density <path>'");
            std::string path = tok[1];
            if (!path.empty() && path[0] != '/') path = base_dir + "/" + path;
            try {
                snap = read_snapshot(path);
            } catch (const std::exception& e) {
                fail(lineno, e.what());
            }
            if (snap->components.size() != 4 && snap->components.size() != 5) {
                fail(lineno, "density snapshot needs 4 or 5 components");
            }
        } else {
            fail(lineno, "unknown directive '" + key + "'");
        }
    }
    if (expected < 0) fail(lineno, "missing 'atoms <count>' header");
    if (seen != expected) {
        fail(lineno, "expected " + std::to_string(expected) + " atom lines, found " + std::to_string(seen));
    }
    if (snap && uniform_h) fail(lineno, "'density' and 'uniform' are exclusive");

    RoughInitialData d;
    if (snap) {
        if (grid_n && *grid_n != snap->grid.n) fail(lineno, "grid size disagrees with the density snapshot");
        d = RoughInitialData::uniform(snap->grid, 0.0);
        const auto& c = snap->components;
        d.h_density = c[0];
        if (c.size() == 5) {
            for (int a = 0; a < 4; ++a) d.U_density[a] = c[1 + a];
        } else {
            for (int a = 0; a < 3; ++a) d.U_density[1 + a] = c[1 + a];
        }
    } else {
        if (!grid_n) fail(lineno, "no grid size: give 'grid <n>' or a density snapshot");
        GridSpec g;
        try {
            g = GridSpec(*grid_n);
        } catch (const InvalidArgument& e) {
            fail(lineno, e.what());
        }
        d = RoughInitialData::uniform(g, uniform_h.value_or(0.0));
    }
    d.h_atoms = std::move(h_atoms);
    d.U_atoms = std::move(U_atoms);
    return d;
}

inline RoughInitialData load_rough_initial_data(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open initial data file " + path);
    std::string dir = ".";
    if (auto s = path.find_last_of('/'); s != std::string::npos) dir = path.substr(0, s);
    return parse_rough_initial_data(in, dir);
}

struct Mollified {
    double eps = 0.0;
    ScalarField h;
    Field4 U;
    double mass = 0.0;
    double div_B = 0.0;  // sup norm, reported only

    VectorField3 B() const { return VectorField3(U[1], U[2], U[3]); }
};

namespace detail {

inline ScalarField convolve(const ScalarField& f, const Spectrum& kernel_hat)
{
    Spectrum s = forward(f);
    for (std::size_t i = 0; i < s.c.size(); ++i) s.c[i] *= kernel_hat.c[i];
    return inverse(s);
}

} // namespace detail

// Grid-quadrature convolution with the periodized Gaussian, computed as a
// spectral product; atoms become translated copies of the kernel.
inline Mollified mollify(const RoughInitialData& data, double eps)
{
    data.validate();
    const GridSpec g = data.grid;
    ScalarField kernel = periodized_gaussian(g, eps);
    Spectrum khat = forward(kernel);

    Mollified out;
    out.eps = eps;
    out.h = detail::convolve(data.h_density, khat);
    for (int a = 0; a < 4; ++a) out.U[a] = detail::convolve(data.U_density[a], khat);
    for (const auto& at : data.h_atoms) {
        if (at.m != 0.0) out.h += at.m * periodized_gaussian(g, eps, at.x);
    }
    for (const auto& at : data.U_atoms) {
        ScalarField k = periodized_gaussian(g, eps, at.x);
        for (int a = 0; a < 4; ++a) {
            if (at.m[a] != 0.0) out.U[a] += at.m[a] * k;
        }
    }
    out.mass = integrate(out.h);
    out.div_B = sup_norm(div(out.B()));
    return out;
}

// The convex functional of the unmollified measures: absolutely continuous
// part by the density formula, U atoms must sit on h atoms.
inline double lambda_reference(const RoughInitialData& data, double atom_tol = 1e-12)
{
    double ref = lambda(data.h_density, data.U_density);
    if (std::isinf(ref)) return ref;
    for (const auto& u : data.U_atoms) {
        double u2 = 0.0;
        for (double c : u.m) u2 += c * c;
        if (u2 == 0.0) continue;
        double hm = 0.0;
        for (const auto& h : data.h_atoms) {
            Vec3 d;
            for (int a = 0; a < 3; ++a) d[a] = wrap_unit(h.x[a] - u.x[a] + 0.5) - 0.5;
            if (std::abs(d[0]) <= atom_tol && std::abs(d[1]) <= atom_tol && std::abs(d[2]) <= atom_tol) hm += h.m;
        }
        if (!(hm > 0.0)) return infinite_marker;
        ref += u2 / (2.0 * hm);
    }
    return ref;
}

struct MonotonicityReport {
    std::vector<double> eps;
    std::vector<double> values;
    std::vector<double> masses;
    std::vector<double> div_B;
    double reference = 0.0;
    double max_excess = 0.0;   // max(value - reference), -inf for an infinite reference
    double max_wiggle = 0.0;   // largest decrease while eps shrinks

    bool bounded(double tol = 1e-10) const { return std::isinf(reference) || max_excess <= tol; }
    bool increasing(double tol = 1e-6) const { return max_wiggle <= tol; }
};

// Lambda of the mollified data along a schedule, sorted by decreasing eps.
inline MonotonicityReport lambda_monotonicity_check(const RoughInitialData& data, std::vector<double> schedule)
{
    if (schedule.empty()) throw InvalidArgument("lambda_monotonicity_check: empty schedule");
    std::sort(schedule.begin(), schedule.end(), std::greater<>());
    MonotonicityReport r;
    r.reference = lambda_reference(data);
    r.max_excess = -infinite_marker;
    for (double e : schedule) {
        Mollified m = mollify(data, e);
        double v = lambda(m.h, m.U);
        if (!r.values.empty()) r.max_wiggle = std::max(r.max_wiggle, r.values.back() - v);
        r.eps.push_back(e);
        r.values.push_back(v);
        r.masses.push_back(m.mass);
        r.div_B.push_back(m.div_B);
        if (!std::isinf(r.reference)) r.max_excess = std::max(r.max_excess, v - r.reference);
    }
    return r;
}

using TestFunction = std::function<double(const Vec3&)>;

// Ten smooth periodic test functions: low trigonometric modes and a
// positive bump.
inline std::vector<TestFunction> weak_star_test_functions()
{
    std::vector<TestFunction> f;
    const double tp = two_pi;
    f.push_back([](const Vec3&) { return 1.0; });
    f.push_back([tp](const Vec3& x) { return std::cos(tp * x[0]); });
    f.push_back([tp](const Vec3& x) { return std::sin(tp * x[1]); });
    f.push_back([tp](const Vec3& x) { return std::cos(tp * (x[0] + x[2])); });
    f.push_back([tp](const Vec3& x) { return std::sin(tp * (x[0] - 2.0 * x[1])); });
    f.push_back([tp](const Vec3& x) { return std::cos(2.0 * tp * x[2]) * std::sin(tp * x[0]); });
    f.push_back([tp](const Vec3& x) { return std::exp(std::cos(tp * x[0]) + std::sin(tp * x[1])); });
    f.push_back([tp](const Vec3& x) { return 1.0 / (2.0 + std::sin(tp * (x[0] + x[1] + x[2]))); });
    f.push_back([tp](const Vec3& x) { return std::cos(tp * x[0]) * std::cos(tp * x[1]) * std::cos(tp * x[2]); });
    f.push_back([tp](const Vec3& x) {
        return std::exp(-(3.0 - std::cos(tp * x[0]) - std::cos(tp * x[1]) - std::cos(tp * x[2])));
    });
    return f;
}

// <h0, f> with the density part by grid quadrature and atoms exactly.
inline double pair_with(const RoughInitialData& data, const TestFunction& f)
{
    ScalarField fs = ScalarField::sample(data.grid, [&](double x, double y, double z) { return f({x, y, z}); });
    double s = integrate(data.h_density * fs);
    for (const auto& a : data.h_atoms) s += a.m * f(a.x);
    return s;
}

inline std::vector<double> weak_star_errors(const RoughInitialData& data, const Mollified& m,
                                            const std::vector<TestFunction>& tests)
{
    std::vector<double> err;
    for (const auto& f : tests) {
        ScalarField fs = ScalarField::sample(data.grid, [&](double x, double y, double z) { return f({x, y, z}); });
        err.push_back(std::abs(integrate(m.h * fs) - pair_with(data, f)));
    }
    return err;
}

} // namespace abimhd
