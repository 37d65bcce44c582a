#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "loft/rng.hpp"
#include "loft/tensor.hpp"

namespace loft {

// Configuration for the one-hidden-layer CNN used in the trajectory
// experiments. d = q * d_hat is derived; eta is set to eta_coeff*lambda0/n^2
// once the infinite-width kernel has been computed.
struct TheoryConfig {
    std::size_t m = 256;   // filters
    std::size_t n = 8;     // samples
    std::size_t d_hat = 1; // input channels
    std::size_t p = 16;    // pixels (h*w of the image)
    std::size_t q = 9;     // patch size
    double kappa = 0.0;    // init scale; 0 means default 1/sqrt(n)
    double xi = 1.0;       // mask probability
    double eta_coeff = 1.0;
    std::size_t S = 1;      // subnetworks
    std::size_t T = 100;    // global iterations
    double delta = 0.1;     // failure-probability parameter, reporting only
    double label_bound = 1.0;
    std::uint64_t seed = 1;

    std::size_t d() const { return q * d_hat; }
    double effective_kappa() const;
    void validate() const;
};

struct TheoryDataset {
    std::vector<Tensor> images; // each (d_hat, h, w), normalized to |x|_F = q^{-1/2}
    std::vector<double> labels; // |y_i| <= label_bound
    std::size_t q = 1;
};

// Gaussian images normalized per the data assumption, labels uniform in
// [-C, C]. Deterministic under (seed).
TheoryDataset synthetic_theory_dataset(const TheoryConfig& cfg, std::uint64_t seed,
                                       std::size_t h, std::size_t w);

// Patched dataset: xhat is n x p x d with the column vectors x^(j) of each
// sample stored contiguously (length d).
struct PatchedData {
    std::size_t n = 0, p = 0, d = 0;
    std::vector<double> xhat;
    std::vector<double> y;

    const double* column(std::size_t i, std::size_t j) const {
        return &xhat[(i * p + j) * d];
    }
};

PatchedData patch_dataset(const TheoryDataset& data);

struct InfiniteNtk {
    std::vector<double> H; // n x n
    std::size_t n = 0;
    double lambda0 = 0.0;
};

// Infinite-width NTK from the arc-cosine identity: the Gaussian expectation
// E[1{<v1,w>>=0} 1{<v2,w>>=0}] equals (pi - arccos(rho))/(2*pi) with rho the
// cosine similarity of v1 and v2. lambda0 is the smallest eigenvalue; a
// value <= 1e-12 raises a degenerate-kernel error.
InfiniteNtk ntk_infinite(const PatchedData& data);

// The closed-form Gaussian expectation above, exposed for validation.
double gaussian_joint_halfspace(const double* v1, const double* v2, std::size_t d);

struct TheoryModelState {
    std::size_t m = 0, d = 0, p = 0, n = 0;
    std::size_t S = 1;
    double xi = 1.0;
    double kappa = 0.0;
    double eta = 0.0;
    double lambda0 = 0.0;
    double label_bound = 1.0;
    std::vector<double> W; // m x d
    std::vector<double> a; // m x p, entries +-1/(p*sqrt(m))
    PatchedData data;

    const double* w_row(std::size_t r) const { return &W[r * d]; }
    double* w_row(std::size_t r) { return &W[r * d]; }
    const double* a_row(std::size_t r) const { return &a[r * p]; }
};

// Initializes W with rows ~ N(0, kappa^2 I) and a with uniform signs scaled
// by 1/(p*sqrt(m)); patches the dataset, computes the infinite NTK and sets
// eta = eta_coeff*lambda0/n^2. Rejects unnormalized data.
TheoryModelState init_theory_model(const TheoryConfig& cfg, const TheoryDataset& data);

// u^(i) = xi * sum_r sum_j a_rj sigma(<x_i^(j), w_r>)
std::vector<double> forward_full(const TheoryModelState& state);

// Subnetwork output: filters with mask 0 contribute nothing (no xi scaling).
std::vector<double> forward_subnetwork(const TheoryModelState& state,
                                       const std::vector<std::uint8_t>& mask_col);

// Surrogate gradient of the masked subnetwork, rows with mask 0 are zero.
// The indicator convention includes equality: 1{<x,w> >= 0}.
std::vector<double> grad_subnetwork(const TheoryModelState& state,
                                    const std::vector<std::uint8_t>& mask_col);

// Gradient of the xi-scaled full network.
std::vector<double> grad_full(const TheoryModelState& state);

// Finite-width NTK H(t): Gram matrix of the per-filter gradient features.
std::vector<double> ntk_finite(const TheoryModelState& state);

double squared_residual(const std::vector<double>& u, const std::vector<double>& y);

} // namespace loft
