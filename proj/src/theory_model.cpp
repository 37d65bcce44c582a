#include "loft/theory_model.hpp"

#include <cmath>
#include <string>

#include "loft/errors.hpp"
#include "loft/linalg.hpp"

namespace loft {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

double dot(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        s += a[k] * b[k];
    }
    return s;
}

} // namespace

double TheoryConfig::effective_kappa() const {
    return kappa > 0.0 ? kappa : 1.0 / std::sqrt(static_cast<double>(n));
}

void TheoryConfig::validate() const {
    if (m == 0 || n == 0 || d_hat == 0 || p == 0) {
        throw ConfigError("theory config: m, n, d_hat, p must be positive");
    }
    if (xi <= 0.0 || xi > 1.0) {
        throw ConfigError("theory config: xi must lie in (0, 1]");
    }
    if (S < 1) {
        throw ConfigError("theory config: S must be >= 1");
    }
    if (kappa < 0.0) {
        throw ConfigError("theory config: kappa must be >= 0");
    }
    if (eta_coeff <= 0.0) {
        throw ConfigError("theory config: eta_coeff must be positive");
    }
    if (label_bound <= 0.0) {
        throw ConfigError("theory config: label bound must be positive");
    }
    PatchSpec::square(q); // validates q
}

TheoryDataset synthetic_theory_dataset(const TheoryConfig& cfg, std::uint64_t seed,
                                       std::size_t h, std::size_t w) {
    if (h * w != cfg.p) {
        throw ConfigError("synthetic_theory_dataset: h*w = " + std::to_string(h * w) +
                          " does not match p = " + std::to_string(cfg.p));
    }
    Rng rng = Rng::derive(seed, {stream::kDataset});
    std::vector<Tensor> images;
    images.reserve(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        Tensor img = Tensor::zeros({cfg.d_hat, h, w});
        for (double& v : img.data) {
            v = rng.normal();
        }
        images.push_back(std::move(img));
    }
    NormalizedDataset normalized = normalize_dataset(std::move(images), cfg.q);

    Rng label_rng = Rng::derive(seed, {stream::kLabels});
    TheoryDataset out;
    out.images = std::move(normalized.samples);
    out.q = cfg.q;
    out.labels.reserve(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        out.labels.push_back(label_rng.uniform(-cfg.label_bound, cfg.label_bound));
    }
    return out;
}

PatchedData patch_dataset(const TheoryDataset& data) {
    if (data.images.empty()) {
        throw DataError("patch_dataset: empty dataset");
    }
    const PatchSpec spec = PatchSpec::square(data.q);
    PatchedData out;
    out.n = data.images.size();
    Tensor first = patch(data.images[0], spec);
    out.d = first.shape[0];
    out.p = first.shape[1];
    out.xhat.resize(out.n * out.p * out.d);
    out.y = data.labels;
    for (std::size_t i = 0; i < out.n; ++i) {
        Tensor xh = (i == 0) ? std::move(first) : patch(data.images[i], spec);
        if (xh.shape[0] != out.d || xh.shape[1] != out.p) {
            throw DimensionError("patch_dataset: inconsistent sample shapes");
        }
        // transpose (d, p) -> column-contiguous (p, d)
        for (std::size_t j = 0; j < out.p; ++j) {
            for (std::size_t k = 0; k < out.d; ++k) {
                out.xhat[(i * out.p + j) * out.d + k] = xh(k, j);
            }
        }
    }
    return out;
}

double gaussian_joint_halfspace(const double* v1, const double* v2, std::size_t d) {
    const double n1 = std::sqrt(dot(v1, v1, d));
    const double n2 = std::sqrt(dot(v2, v2, d));
    if (n1 == 0.0 || n2 == 0.0) {
        return 0.0; // zero-norm patches contribute nothing to the kernel
    }
    double rho = dot(v1, v2, d) / (n1 * n2);
    rho = std::min(1.0, std::max(-1.0, rho));
    return (kPi - std::acos(rho)) / (2.0 * kPi);
}

InfiniteNtk ntk_infinite(const PatchedData& data) {
    const std::size_t n = data.n;
    const std::size_t p = data.p;
    const std::size_t d = data.d;
    InfiniteNtk out;
    out.n = n;
    out.H.assign(n * n, 0.0);
    const double inv_p2 = 1.0 / (static_cast<double>(p) * static_cast<double>(p));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ii = i; ii < n; ++ii) {
            double acc = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                const double* v1 = data.column(i, j);
                const double* v2 = data.column(ii, j);
                const double ip = dot(v1, v2, d);
                if (ip == 0.0) {
                    continue;
                }
                acc += ip * gaussian_joint_halfspace(v1, v2, d);
            }
            out.H[i * n + ii] = inv_p2 * acc;
            out.H[ii * n + i] = inv_p2 * acc;
        }
    }
    const std::vector<double> evals = symmetric_eigenvalues(out.H, n);
    out.lambda0 = evals.front();
    if (out.lambda0 <= 1e-12) {
        throw DataError("ntk_infinite: degenerate kernel, lambda0 = " +
                        std::to_string(out.lambda0) +
                        " (data must be distinct and non-parallel)");
    }
    return out;
}

TheoryModelState init_theory_model(const TheoryConfig& cfg, const TheoryDataset& data) {
    cfg.validate();
    if (data.images.size() != cfg.n) {
        throw ConfigError("init_theory_model: dataset has " + std::to_string(data.images.size()) +
                          " samples, config expects " + std::to_string(cfg.n));
    }
    const double target = 1.0 / std::sqrt(static_cast<double>(cfg.q));
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const double norm = frobenius_norm(data.images[i]);
        if (std::abs(norm - target) > 1e-9) {
            throw DataError("init_theory_model: sample " + std::to_string(i) +
                            " not normalized to q^{-1/2} (norm " + std::to_string(norm) + ")");
        }
        if (std::abs(data.labels[i]) > cfg.label_bound + 1e-12) {
            throw DataError("init_theory_model: label " + std::to_string(i) +
                            " exceeds the configured bound");
        }
    }

    TheoryModelState state;
    state.m = cfg.m;
    state.p = cfg.p;
    state.n = cfg.n;
    state.S = cfg.S;
    state.xi = cfg.xi;
    state.kappa = cfg.effective_kappa();
    state.label_bound = cfg.label_bound;
    state.data = patch_dataset(data);
    state.d = state.data.d;
    if (state.data.p != cfg.p) {
        throw ConfigError("init_theory_model: patched pixel count " + std::to_string(state.data.p) +
                          " does not match config p = " + std::to_string(cfg.p));
    }

    const InfiniteNtk kernel = ntk_infinite(state.data);
    state.lambda0 = kernel.lambda0;
    state.eta = cfg.eta_coeff * state.lambda0 /
                (static_cast<double>(cfg.n) * static_cast<double>(cfg.n));

    Rng winit = Rng::derive(cfg.seed, {stream::kInit, 0});
    state.W.resize(cfg.m * state.d);
    for (double& v : state.W) {
        v = state.kappa == 0.0 ? 0.0 : state.kappa * winit.normal();
    }
    Rng ainit = Rng::derive(cfg.seed, {stream::kInit, 1});
    const double a_scale = 1.0 / (static_cast<double>(cfg.p) * std::sqrt(static_cast<double>(cfg.m)));
    state.a.resize(cfg.m * cfg.p);
    for (double& v : state.a) {
        v = static_cast<double>(ainit.sign()) * a_scale;
    }
    return state;
}

std::vector<double> forward_full(const TheoryModelState& state) {
    std::vector<double> u(state.n, 0.0);
    for (std::size_t r = 0; r < state.m; ++r) {
        const double* wr = state.w_row(r);
        const double* ar = state.a_row(r);
        for (std::size_t i = 0; i < state.n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < state.p; ++j) {
                const double z = dot(state.data.column(i, j), wr, state.d);
                if (z > 0.0) {
                    acc += ar[j] * z;
                }
            }
            u[i] += acc;
        }
    }
    for (double& v : u) {
        v *= state.xi;
    }
    return u;
}

std::vector<double> forward_subnetwork(const TheoryModelState& state,
                                       const std::vector<std::uint8_t>& mask_col) {
    if (mask_col.size() != state.m) {
        throw DimensionError("forward_subnetwork: mask length " + std::to_string(mask_col.size()) +
                             " != m = " + std::to_string(state.m));
    }
    std::vector<double> u(state.n, 0.0);
    for (std::size_t r = 0; r < state.m; ++r) {
        if (!mask_col[r]) {
            continue;
        }
        const double* wr = state.w_row(r);
        const double* ar = state.a_row(r);
        for (std::size_t i = 0; i < state.n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < state.p; ++j) {
                const double z = dot(state.data.column(i, j), wr, state.d);
                if (z > 0.0) {
                    acc += ar[j] * z;
                }
            }
            u[i] += acc;
        }
    }
    return u;
}

namespace {

// Shared gradient kernel: rows r with coefficient scale_r = 0 are skipped.
// grad_r = scale_r * sum_i sum_j res_i * a_rj * x_i^(j) * 1{<x_i^(j), w_r> >= 0}
void accumulate_gradient(const TheoryModelState& state, const std::vector<double>& residual,
                         const std::vector<double>& row_scale, std::vector<double>& grad) {
    grad.assign(state.m * state.d, 0.0);
    for (std::size_t r = 0; r < state.m; ++r) {
        const double scale = row_scale[r];
        if (scale == 0.0) {
            continue;
        }
        const double* wr = state.w_row(r);
        const double* ar = state.a_row(r);
        double* gr = &grad[r * state.d];
        for (std::size_t i = 0; i < state.n; ++i) {
            const double res = residual[i];
            for (std::size_t j = 0; j < state.p; ++j) {
                const double* col = state.data.column(i, j);
                const double z = dot(col, wr, state.d);
                if (z >= 0.0) {
                    const double coef = scale * res * ar[j];
                    for (std::size_t k = 0; k < state.d; ++k) {
                        gr[k] += coef * col[k];
                    }
                }
            }
        }
    }
}

} // namespace

std::vector<double> grad_subnetwork(const TheoryModelState& state,
                                    const std::vector<std::uint8_t>& mask_col) {
    const std::vector<double> u_sub = forward_subnetwork(state, mask_col);
    std::vector<double> residual(state.n);
    for (std::size_t i = 0; i < state.n; ++i) {
        residual[i] = u_sub[i] - state.data.y[i];
    }
    std::vector<double> row_scale(state.m);
    for (std::size_t r = 0; r < state.m; ++r) {
        row_scale[r] = mask_col[r] ? 1.0 : 0.0;
    }
    std::vector<double> grad;
    accumulate_gradient(state, residual, row_scale, grad);
    return grad;
}

std::vector<double> grad_full(const TheoryModelState& state) {
    const std::vector<double> u = forward_full(state);
    std::vector<double> residual(state.n);
    for (std::size_t i = 0; i < state.n; ++i) {
        residual[i] = u[i] - state.data.y[i];
    }
    std::vector<double> row_scale(state.m, state.xi);
    std::vector<double> grad;
    accumulate_gradient(state, residual, row_scale, grad);
    return grad;
}

std::vector<double> ntk_finite(const TheoryModelState& state) {
    const std::size_t n = state.n;
    std::vector<double> H(n * n, 0.0);
    // Per-filter gradient feature phi_r(i) = sum_j a_rj x_i^(j) 1{x_i^(j); w_r};
    // H = sum_r Phi_r Phi_r^T, a Gram accumulation, hence symmetric PSD.
    std::vector<double> phi(n * state.d);
    for (std::size_t r = 0; r < state.m; ++r) {
        const double* wr = state.w_row(r);
        const double* ar = state.a_row(r);
        phi.assign(n * state.d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* phir = &phi[i * state.d];
            for (std::size_t j = 0; j < state.p; ++j) {
                const double* col = state.data.column(i, j);
                if (dot(col, wr, state.d) >= 0.0) {
                    const double arj = ar[j];
                    for (std::size_t k = 0; k < state.d; ++k) {
                        phir[k] += arj * col[k];
                    }
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t ii = i; ii < n; ++ii) {
                const double v = dot(&phi[i * state.d], &phi[ii * state.d], state.d);
                H[i * n + ii] += v;
                if (ii != i) {
                    H[ii * n + i] += v;
                }
            }
        }
    }
    return H;
}

double squared_residual(const std::vector<double>& u, const std::vector<double>& y) {
    if (u.size() != y.size()) {
        throw DimensionError("squared_residual: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double r = u[i] - y[i];
        s += r * r;
    }
    return s;
}

} // namespace loft
