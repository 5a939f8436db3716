#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace abimhd {

// Cyclic Jacobi for small dense symmetric matrices (row-major N*N).
// Iterates until the off-diagonal Frobenius norm is <= tol * max(1, ||A||_F).
template <int N>
struct JacobiResult {
    std::array<double, N> values;         // ascending
    std::array<double, N * N> vectors;    // column j is the eigenvector of values[j]
    int sweeps = 0;
};

template <int N>
JacobiResult<N> jacobi_eigen(std::array<double, N * N> a, double tol = 1e-13, int max_sweeps = 60)
{
    std::array<double, N * N> v{};
    for (int i = 0; i < N; ++i) v[i * N + i] = 1.0;

    double scale = 0.0;
    for (double x : a) scale += x * x;
    scale = std::max(1.0, std::sqrt(scale));

    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < N; ++p)
            for (int q = p + 1; q < N; ++q) off += 2.0 * a[p * N + q] * a[p * N + q];
        if (std::sqrt(off) <= tol * scale) break;

        for (int p = 0; p < N - 1; ++p) {
            for (int q = p + 1; q < N; ++q) {
                double apq = a[p * N + q];
                if (apq == 0.0) continue;
                double theta = (a[q * N + q] - a[p * N + p]) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < N; ++k) {
                    double akp = a[k * N + p], akq = a[k * N + q];
                    a[k * N + p] = c * akp - s * akq;
                    a[k * N + q] = s * akp + c * akq;
                }
                for (int k = 0; k < N; ++k) {
                    double apk = a[p * N + k], aqk = a[q * N + k];
                    a[p * N + k] = c * apk - s * aqk;
                    a[q * N + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < N; ++k) {
                    double vkp = v[k * N + p], vkq = v[k * N + q];
                    v[k * N + p] = c * vkp - s * vkq;
                    v[k * N + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::array<int, N> order;
    for (int i = 0; i < N; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) { return a[x * N + x] < a[y * N + y]; });
    JacobiResult<N> r;
    r.sweeps = sweep;
    for (int j = 0; j < N; ++j) {
        r.values[j] = a[order[j] * N + order[j]];
        for (int k = 0; k < N; ++k) r.vectors[k * N + j] = v[k * N + order[j]];
    }
    return r;
}

// True when A - c I admits a Cholesky factorization with positive pivots.
template <int N>
bool cholesky_above(std::array<double, N * N> a, double c)
{
    for (int i = 0; i < N; ++i) a[i * N + i] -= c;
    for (int j = 0; j < N; ++j) {
        double d = a[j * N + j];
        for (int k = 0; k < j; ++k) d -= a[j * N + k] * a[j * N + k];
        if (!(d > 0.0)) return false;
        d = std::sqrt(d);
        a[j * N + j] = d;
        for (int i = j + 1; i < N; ++i) {
            double s = a[i * N + j];
            for (int k = 0; k < j; ++k) s -= a[i * N + k] * a[j * N + k];
            a[i * N + j] = s / d;
        }
    }
    return true;
}

template <int N>
double min_eigenvalue(const std::array<double, N * N>& a)
{
    return jacobi_eigen<N>(a).values[0];
}

} // namespace abimhd
