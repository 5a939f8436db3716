#pragma once

#include <cmath>
#include <random>

#include <abimhd/fields.hpp>

namespace testsupport {

using namespace abimhd;

// Random real trigonometric polynomial with |k_i| <= kmax and amplitude amp.
inline ScalarField random_field(GridSpec g, std::mt19937_64& rng, int kmax = 2, double amp = 1.0, double mean = 0.0)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    struct Term { int k1, k2, k3; double a, b; };
    std::vector<Term> terms;
    for (int k1 = -kmax; k1 <= kmax; ++k1)
        for (int k2 = -kmax; k2 <= kmax; ++k2)
            for (int k3 = 0; k3 <= kmax; ++k3) {
                if (k3 == 0 && (k2 < 0 || (k2 == 0 && k1 <= 0))) continue;
                double decay = 1.0 / (1.0 + k1 * k1 + k2 * k2 + k3 * k3);
                terms.push_back({k1, k2, k3, amp * decay * u(rng), amp * decay * u(rng)});
            }
    return ScalarField::sample(g, [&](double x, double y, double z) {
        double s = mean;
        for (const auto& t : terms) {
            double th = two_pi * (t.k1 * x + t.k2 * y + t.k3 * z);
            s += t.a * std::cos(th) + t.b * std::sin(th);
        }
        return s;
    });
}

inline VectorField3 random_vector(GridSpec g, std::mt19937_64& rng, int kmax = 2, double amp = 1.0)
{
    return VectorField3(random_field(g, rng, kmax, amp), random_field(g, rng, kmax, amp),
                        random_field(g, rng, kmax, amp));
}

inline double max_diff(const ScalarField& a, const ScalarField& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

inline double max_diff(const VectorField3& a, const VectorField3& b)
{
    return std::max({max_diff(a[0], b[0]), max_diff(a[1], b[1]), max_diff(a[2], b[2])});
}

// Second-order centered difference along one axis, periodic.
inline ScalarField fd_partial(const ScalarField& f, int axis)
{
    const GridSpec g = f.grid;
    ScalarField r(g);
    for (std::size_t p = 0; p < g.size(); ++p) {
        auto ijk = g.ijk(p);
        auto up = ijk, dn = ijk;
        up[axis] = (up[axis] + 1) % g.n;
        dn[axis] = (dn[axis] + g.n - 1) % g.n;
        r.v[p] = (f.v[g.index(up[0], up[1], up[2])] - f.v[g.index(dn[0], dn[1], dn[2])]) * g.n / 2.0;
    }
    return r;
}

} // namespace testsupport
