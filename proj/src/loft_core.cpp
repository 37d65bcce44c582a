#include "loft/loft_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "loft/errors.hpp"

namespace loft {

std::vector<std::uint8_t> MaskMatrix::column(std::size_t s) const {
    std::vector<std::uint8_t> col(m);
    for (std::size_t r = 0; r < m; ++r) {
        col[r] = bits[r * S + s];
    }
    return col;
}

std::size_t MaskMatrix::row_sum(std::size_t r) const {
    std::size_t acc = 0;
    for (std::size_t s = 0; s < S; ++s) {
        acc += bits[r * S + s];
    }
    return acc;
}

MaskMatrix sample_masks(std::size_t m, std::size_t S, double xi, MaskMode mode, Rng& rng) {
    if (S < 1) {
        throw ConfigError("sample_masks: S must be >= 1");
    }
    MaskMatrix out;
    out.m = m;
    out.S = S;
    out.mode = mode;
    out.xi = xi;
    out.bits.assign(m * S, 0);
    if (mode == MaskMode::bernoulli) {
        if (xi <= 0.0 || xi > 1.0) {
            throw ConfigError("sample_masks: xi must lie in (0, 1]");
        }
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t s = 0; s < S; ++s) {
                out.bits[r * S + s] = rng.uniform() < xi ? 1 : 0;
            }
        }
    } else {
        std::vector<std::size_t> perm(m);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        // chunk the permutation into S nearly equal parts
        const std::size_t base = m / S;
        const std::size_t extra = m % S;
        std::size_t pos = 0;
        for (std::size_t s = 0; s < S; ++s) {
            const std::size_t len = base + (s < extra ? 1 : 0);
            for (std::size_t k = 0; k < len; ++k) {
                out.bits[perm[pos + k] * S + s] = 1;
            }
            pos += len;
        }
    }
    return out;
}

LoftStepResult loft_step(const TheoryModelState& state, const MaskMatrix& masks,
                         bool materialize_u_tilde) {
    if (masks.m != state.m) {
        throw DimensionError("loft_step: mask rows " + std::to_string(masks.m) +
                             " != m = " + std::to_string(state.m));
    }
    const std::size_t m = state.m;
    const std::size_t d = state.d;

    LoftStepResult out;
    out.report.normalizer.resize(m);
    out.report.activity.resize(m);
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t rs = masks.row_sum(r);
        out.report.normalizer[r] = static_cast<double>(std::max<std::size_t>(rs, 1));
        out.report.activity[r] = rs >= 1 ? 1.0 : 0.0;
    }

    // Canonical form: sum the surrogate gradients of all subnetworks, then
    // scale row r by Nperp_r / N_r.
    std::vector<double> gsum(m * d, 0.0);
    std::vector<double> u_tilde;
    if (materialize_u_tilde) {
        u_tilde.assign(m * state.n, 0.0);
    }
    for (std::size_t s = 0; s < masks.S; ++s) {
        const std::vector<std::uint8_t> col = masks.column(s);
        const std::vector<double> gs = grad_subnetwork(state, col);
        for (std::size_t idx = 0; idx < gsum.size(); ++idx) {
            gsum[idx] += gs[idx];
        }
        if (materialize_u_tilde) {
            const std::vector<double> us = forward_subnetwork(state, col);
            for (std::size_t r = 0; r < m; ++r) {
                if (!col[r]) {
                    continue;
                }
                for (std::size_t i = 0; i < state.n; ++i) {
                    u_tilde[r * state.n + i] += us[i];
                }
            }
        }
    }
    for (std::size_t r = 0; r < m; ++r) {
        const double scale = out.report.activity[r] / out.report.normalizer[r];
        for (std::size_t k = 0; k < d; ++k) {
            gsum[r * d + k] *= scale;
        }
        if (materialize_u_tilde) {
            for (std::size_t i = 0; i < state.n; ++i) {
                u_tilde[r * state.n + i] *= scale;
            }
        }
    }
    check_finite(gsum, "loft_step gradient");

    out.W_next = state.W;
    for (std::size_t idx = 0; idx < gsum.size(); ++idx) {
        out.W_next[idx] -= state.eta * gsum[idx];
    }
    out.report.g = std::move(gsum);
    out.report.u_tilde = std::move(u_tilde);
    return out;
}

std::vector<double> loft_gradient_mixed_form(const TheoryModelState& state,
                                             const MaskMatrix& masks) {
    if (masks.m != state.m) {
        throw DimensionError("loft_gradient_mixed_form: mask rows != m");
    }
    const std::size_t m = state.m;
    const std::size_t n = state.n;
    const std::size_t d = state.d;

    // Subnetwork outputs u^(s,i), then the mixed per-filter targets
    // u~_r^(i) = (Nperp_r/N_r) sum_s m_r^(s) u^(s,i).
    std::vector<std::vector<double>> u_sub(masks.S);
    for (std::size_t s = 0; s < masks.S; ++s) {
        u_sub[s] = forward_subnetwork(state, masks.column(s));
    }
    std::vector<double> grad(m * d, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t rs = masks.row_sum(r);
        if (rs == 0) {
            continue;
        }
        const double scale = 1.0 / static_cast<double>(rs); // Nperp=1, N=rs
        std::vector<double> mixed(n, 0.0);
        for (std::size_t s = 0; s < masks.S; ++s) {
            if (!masks.at(r, s)) {
                continue;
            }
            for (std::size_t i = 0; i < n; ++i) {
                mixed[i] += u_sub[s][i];
            }
        }
        const double* wr = state.w_row(r);
        const double* ar = state.a_row(r);
        double* gr = &grad[r * d];
        for (std::size_t i = 0; i < n; ++i) {
            const double res = scale * mixed[i] - state.data.y[i];
            for (std::size_t j = 0; j < state.p; ++j) {
                const double* col = state.data.column(i, j);
                double z = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    z += col[k] * wr[k];
                }
                if (z >= 0.0) {
                    const double coef = res * ar[j];
                    for (std::size_t k = 0; k < d; ++k) {
                        gr[k] += coef * col[k];
                    }
                }
            }
        }
    }
    return grad;
}

std::vector<double> gd_step(const TheoryModelState& state) {
    const double theta = theta_hit_probability(state.xi, state.S);
    const double scale = theta / state.xi;
    const std::vector<double> grad = grad_full(state);
    std::vector<double> next = state.W;
    for (std::size_t idx = 0; idx < next.size(); ++idx) {
        next[idx] -= state.eta * (scale * grad[idx]);
    }
    return next;
}

double theta_hit_probability(double xi, std::size_t S) {
    return 1.0 - std::pow(1.0 - xi, static_cast<double>(S));
}

namespace {

double binomial_pmf(std::size_t k, std::size_t n, double p) {
    double c = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
        c *= static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
    return c * std::pow(p, static_cast<double>(k)) * std::pow(1.0 - p, static_cast<double>(n - k));
}

} // namespace

double exact_nu_sq_offdiag(double xi, std::size_t S) {
    const double theta = theta_hit_probability(xi, S);
    double inv_b = 0.0; // E[1/B; B >= 1] for B ~ Bin(S, xi)
    for (std::size_t b = 1; b <= S; ++b) {
        inv_b += binomial_pmf(b, S, xi) / static_cast<double>(b);
    }
    return xi * xi * theta + xi * (1.0 - xi) * inv_b;
}

MomentTable mask_moments(double xi, std::size_t S, std::size_t trials, Rng& rng) {
    if (trials < 10000) {
        throw ConfigError("mask_moments: trials must be >= 10^4");
    }
    if (xi <= 0.0 || xi > 1.0) {
        throw ConfigError("mask_moments: xi must lie in (0, 1]");
    }
    const double theta = theta_hit_probability(xi, S);

    // Each trial draws one pair of mask rows (r, r'). Second and fourth
    // powers are tracked for the standard errors of the two estimates.
    double sum_nu_off = 0.0, sum_nu2_off = 0.0, sum_nu4_off = 0.0;
    double sum_nu_diag = 0.0, sum_nu2_diag = 0.0, sum_nu4_diag = 0.0;
    double sum_active = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        std::size_t row_r = 0, both = 0;
        for (std::size_t s = 0; s < S; ++s) {
            const bool mr = rng.uniform() < xi;
            const bool mo = rng.uniform() < xi;
            row_r += mr ? 1 : 0;
            both += (mr && mo) ? 1 : 0;
        }
        const double nperp = row_r >= 1 ? 1.0 : 0.0;
        const double normalizer = static_cast<double>(std::max<std::size_t>(row_r, 1));
        const double nu_off = nperp / normalizer * static_cast<double>(both);
        const double nu_diag = nperp / normalizer * static_cast<double>(row_r);
        sum_nu_off += nu_off;
        sum_nu2_off += nu_off * nu_off;
        sum_nu4_off += nu_off * nu_off * nu_off * nu_off;
        sum_nu_diag += nu_diag;
        sum_nu2_diag += nu_diag * nu_diag;
        sum_nu4_diag += nu_diag * nu_diag * nu_diag * nu_diag;
        sum_active += nperp;
    }
    const double inv_t = 1.0 / static_cast<double>(trials);
    auto stderr_of = [&](double mean, double sum_sq) {
        const double var = std::max(0.0, sum_sq * inv_t - mean * mean);
        return std::sqrt(var * inv_t);
    };

    MomentTable table;
    table.xi = xi;
    table.S = S;
    table.theta = theta;
    table.trials = trials;

    const double mean_nu_off = sum_nu_off * inv_t;
    const double mean_nu2_off = sum_nu2_off * inv_t;
    const double mean_nu_diag = sum_nu_diag * inv_t;
    const double mean_nu2_diag = sum_nu2_diag * inv_t;
    const double mean_active = sum_active * inv_t;

    const double paper_nu2_off = xi * xi * theta * theta +
                                 theta * theta * (1.0 - xi) / static_cast<double>(S);

    table.rows.push_back({"E[nu] r!=r'", mean_nu_off, stderr_of(mean_nu_off, sum_nu2_off),
                          xi * theta, xi * theta});
    table.rows.push_back({"E[nu^2] r!=r'", mean_nu2_off, stderr_of(mean_nu2_off, sum_nu4_off),
                          paper_nu2_off, exact_nu_sq_offdiag(xi, S)});
    table.rows.push_back({"E[nu] r=r'", mean_nu_diag, stderr_of(mean_nu_diag, sum_nu2_diag),
                          theta, theta});
    table.rows.push_back({"E[nu^2] r=r'", mean_nu2_diag, stderr_of(mean_nu2_diag, sum_nu4_diag),
                          theta, theta});
    table.rows.push_back({"P(Nperp=1)", mean_active,
                          std::sqrt(std::max(0.0, mean_active * (1.0 - mean_active)) * inv_t),
                          theta, theta});
    return table;
}

DeviationReport run_paired_trajectories(const TheoryConfig& cfg, const TheoryDataset& data,
                                        MaskMode mode) {
    TheoryModelState loft_state = init_theory_model(cfg, data);
    TheoryModelState gd_state = loft_state; // shared W_0

    DeviationReport rep;
    rep.lambda0 = loft_state.lambda0;
    rep.eta = loft_state.eta;
    rep.loss_curve.reserve(cfg.T + 1);
    rep.weight_dev_curve.reserve(cfg.T + 1);
    rep.drift_curve.reserve(cfg.T + 1);
    rep.output_dev_curve.reserve(cfg.T);

    const std::vector<double> W0 = loft_state.W;
    double initial_loss = 0.0;

    auto record = [&](std::size_t t) {
        const std::vector<double> u = forward_full(loft_state);
        const std::vector<double> u_hat = forward_full(gd_state);
        const double loss = squared_residual(u, loft_state.data.y);
        double wdev = 0.0;
        for (std::size_t idx = 0; idx < loft_state.W.size(); ++idx) {
            const double dv = loft_state.W[idx] - gd_state.W[idx];
            wdev += dv * dv;
        }
        double drift = 0.0;
        for (std::size_t r = 0; r < loft_state.m; ++r) {
            double row = 0.0;
            for (std::size_t k = 0; k < loft_state.d; ++k) {
                const double dv = loft_state.W[r * loft_state.d + k] - W0[r * loft_state.d + k];
                row += dv * dv;
            }
            drift = std::max(drift, std::sqrt(row));
        }
        double odev = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double dv = u[i] - u_hat[i];
            odev += dv * dv;
        }
        rep.loss_curve.push_back(loss);
        rep.weight_dev_curve.push_back(wdev);
        rep.drift_curve.push_back(drift);
        if (t < cfg.T) {
            rep.output_dev_curve.push_back(odev);
        }
        if (t == 0) {
            initial_loss = loss;
        } else if (initial_loss > 0.0 && loss > 1e6 * initial_loss) {
            throw NumericError("run_paired_trajectories: divergence at t = " + std::to_string(t) +
                               " (loss " + std::to_string(loss) + ", eta " +
                               std::to_string(loft_state.eta) + ", lambda0 " +
                               std::to_string(loft_state.lambda0) + ")");
        }
    };

    for (std::size_t t = 0; t < cfg.T; ++t) {
        record(t);
        Rng mask_rng = Rng::derive(cfg.seed, {stream::kMasks, t});
        const MaskMatrix masks = sample_masks(cfg.m, cfg.S, cfg.xi, mode, mask_rng);
        LoftStepResult step = loft_step(loft_state, masks);
        std::vector<double> gd_next = gd_step(gd_state);
        loft_state.W = std::move(step.W_next);
        gd_state.W = std::move(gd_next);
    }
    record(cfg.T);

    rep.weight_dev = rep.weight_dev_curve.back();
    rep.output_dev_sum = 0.0;
    for (double v : rep.output_dev_curve) {
        rep.output_dev_sum += v;
    }
    rep.weight_drift = *std::max_element(rep.drift_curve.begin(), rep.drift_curve.end());
    return rep;
}

} // namespace loft
