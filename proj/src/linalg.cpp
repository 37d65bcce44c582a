#include "loft/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "loft/errors.hpp"

namespace loft {

namespace {

double offdiag_norm(const std::vector<double>& a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            s += a[i * n + j] * a[i * n + j];
        }
    }
    return std::sqrt(2.0 * s);
}

} // namespace

std::vector<double> symmetric_eigenvalues(const std::vector<double>& a_in, std::size_t n) {
    if (a_in.size() != n * n) {
        throw DimensionError("symmetric_eigenvalues: matrix size mismatch");
    }
    std::vector<double> a = a_in;
    double scale = 0.0;
    for (double v : a) {
        scale = std::max(scale, std::abs(v));
    }
    if (scale == 0.0) {
        return std::vector<double>(n, 0.0);
    }
    const double tol = 1e-14 * scale * static_cast<double>(n);

    for (int sweep = 0; sweep < 100 && offdiag_norm(a, n) > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) <= 1e-300) {
                    continue;
                }
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }

    std::vector<double> evals(n);
    for (std::size_t i = 0; i < n; ++i) {
        evals[i] = a[i * n + i];
    }
    std::sort(evals.begin(), evals.end());
    return evals;
}

double smallest_eigenvalue_power(const std::vector<double>& a, std::size_t n) {
    if (a.size() != n * n) {
        throw DimensionError("smallest_eigenvalue_power: matrix size mismatch");
    }
    if (n == 1) {
        return a[0];
    }
    // Gershgorin: lambda_max <= max_i sum_j |a_ij|.
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row += std::abs(a[i * n + j]);
        }
        mu = std::max(mu, row);
    }
    if (mu == 0.0) {
        return 0.0;
    }
    mu *= 1.0 + 1e-12;

    // Power iteration on B = mu*I - A; its top eigenvalue is mu - lambda_min.
    std::vector<double> v(n), bv(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = 1.0 + 1e-3 * static_cast<double>(i + 1); // deterministic, not axis-aligned
    }
    double rho_prev = 0.0;
    const std::size_t max_iters = 200000;
    for (std::size_t it = 0; it < max_iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = mu * v[i];
            const double* row = &a[i * n];
            for (std::size_t j = 0; j < n; ++j) {
                s -= row[j] * v[j];
            }
            bv[i] = s;
        }
        double nv = 0.0;
        double rho = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nv += bv[i] * bv[i];
            rho += bv[i] * v[i];
        }
        nv = std::sqrt(nv);
        if (nv == 0.0) {
            return mu; // A v = mu v exactly; lambda_min = ... degenerate, report mu - 0
        }
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = bv[i] / nv;
        }
        if (it > 2 * n && std::abs(rho - rho_prev) <= 1e-13 * std::max(1.0, std::abs(rho))) {
            rho_prev = rho;
            break;
        }
        rho_prev = rho;
    }
    return mu - rho_prev;
}

double max_abs_offdiag_asymmetry(const std::vector<double>& a, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            m = std::max(m, std::abs(a[i * n + j] - a[j * n + i]));
        }
    }
    return m;
}

} // namespace loft
