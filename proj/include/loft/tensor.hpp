#pragma once

#include <cstddef>
#include <vector>

namespace loft {

// Dense row-major tensor of 64-bit floats. Value semantics throughout; all
// public operations on tensors are pure functions of their inputs.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> s);

    std::size_t numel() const { return data.size(); }
    std::size_t dim(std::size_t i) const;
    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t i, std::size_t j);
    double operator()(std::size_t i, std::size_t j) const;
    double& operator()(std::size_t i, std::size_t j, std::size_t k);
    double operator()(std::size_t i, std::size_t j, std::size_t k) const;
    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l);
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const;
};

double frobenius_norm(const Tensor& t);
double sum(const Tensor& t);
Tensor relu(const Tensor& t);

// Throws NumericError if any entry is NaN or infinite.
void check_finite(const Tensor& t, const char* what);
void check_finite(const std::vector<double>& v, const char* what);

// Square patch geometry: q pixels per patch (odd perfect square), boundary
// zero padding of width pad = (sqrt(q)-1)/2, stride fixed at 1.
struct PatchSpec {
    std::size_t q = 1;
    std::size_t pad = 0;

    static PatchSpec square(std::size_t q);
    std::size_t side() const { return 2 * pad + 1; }
};

// Patching operator: x is a (channels, h, w) image (or (channels, p) with
// q = 1); the result has shape (q*channels, p) with p = h*w. Column j holds
// the q spatial neighbors of pixel j for every channel, zeros outside the
// image. Row layout is channel-major: row = c*q + (dy+pad)*side + (dx+pad).
Tensor patch(const Tensor& x, const PatchSpec& spec);

// 2-D convolution, 3x3 kernels, stride 1, zero padding 1.
// input: (c_in, h, w); filters: (c_out, c_in, 3, 3) -> (c_out, h, w).
Tensor conv2d_forward(const Tensor& input, const Tensor& filters);

struct ConvGrads {
    Tensor grad_input;
    Tensor grad_filters;
};

// Adjoint of conv2d_forward: grad_filters is the correlation of the input
// with grad_out; grad_input is the full (transposed) convolution of grad_out
// with the filters.
ConvGrads conv2d_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_out);

struct NormalizedDataset {
    std::vector<Tensor> samples;
    // Number of exactly-identical sample pairs found after normalization.
    // Non-zero values are reported by callers as a duplicate-data warning.
    std::size_t duplicate_pairs = 0;
};

// Rescales every sample to Frobenius norm q^{-1/2} exactly (to 1e-12).
// Zero-norm samples are rejected; pairwise distinctness is checked and the
// number of duplicate pairs reported.
NormalizedDataset normalize_dataset(std::vector<Tensor> samples, std::size_t q);

} // namespace loft
