#include "loft/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "loft/errors.hpp"

namespace loft {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) {
        n *= s;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor: shape product " + std::to_string(shape_numel(shape)) +
                             " != data length " + std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
    const std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape.size()) {
        throw DimensionError("tensor: dim index out of range");
    }
    return shape[i];
}

double& Tensor::operator()(std::size_t i, std::size_t j) {
    return data[i * shape[1] + j];
}
double Tensor::operator()(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
}
double& Tensor::operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
}
double Tensor::operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
}
double& Tensor::operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
}
double Tensor::operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
}

double frobenius_norm(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.data) {
        acc += v * v;
    }
    return std::sqrt(acc);
}

double sum(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.data) {
        acc += v;
    }
    return acc;
}

Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (double& v : out.data) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(what) + ": non-finite entry");
        }
    }
}

void check_finite(const Tensor& t, const char* what) {
    check_finite(t.data, what);
}

PatchSpec PatchSpec::square(std::size_t q) {
    if (q == 0 || q % 2 == 0) {
        throw ConfigError("patch spec: q must be odd and >= 1, got " + std::to_string(q));
    }
    std::size_t side = 1;
    while (side * side < q) {
        side += 2;
    }
    if (side * side != q) {
        throw ConfigError("patch spec: q must be an odd perfect square, got " + std::to_string(q));
    }
    PatchSpec spec;
    spec.q = q;
    spec.pad = (side - 1) / 2;
    return spec;
}

Tensor patch(const Tensor& x, const PatchSpec& spec) {
    if (x.shape.size() == 2) {
        if (spec.q != 1) {
            throw DimensionError("patch: 2-d input (channels, pixels) only supports q = 1");
        }
        return x;
    }
    if (x.shape.size() != 3) {
        throw DimensionError("patch: expected (channels, h, w) input");
    }
    const std::size_t d_hat = x.shape[0];
    const std::size_t h = x.shape[1];
    const std::size_t w = x.shape[2];
    const std::size_t p = h * w;
    const std::size_t q = spec.q;
    const std::size_t side = spec.side();
    const long pad = static_cast<long>(spec.pad);

    Tensor out = Tensor::zeros({q * d_hat, p});
    for (std::size_t c = 0; c < d_hat; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                const std::size_t col = y * w + xx;
                for (long dy = -pad; dy <= pad; ++dy) {
                    const long sy = static_cast<long>(y) + dy;
                    if (sy < 0 || sy >= static_cast<long>(h)) {
                        continue;
                    }
                    for (long dx = -pad; dx <= pad; ++dx) {
                        const long sx = static_cast<long>(xx) + dx;
                        if (sx < 0 || sx >= static_cast<long>(w)) {
                            continue;
                        }
                        const std::size_t row = c * q +
                            static_cast<std::size_t>(dy + pad) * side +
                            static_cast<std::size_t>(dx + pad);
                        out(row, col) = x(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                    }
                }
            }
        }
    }
    check_finite(out, "patch");
    return out;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& filters) {
    if (input.shape.size() != 3) {
        throw DimensionError("conv2d: input must be (c_in, h, w)");
    }
    if (filters.shape.size() != 4 || filters.shape[2] != 3 || filters.shape[3] != 3) {
        throw DimensionError("conv2d: filters must be (c_out, c_in, 3, 3)");
    }
    if (filters.shape[1] != input.shape[0]) {
        throw DimensionError("conv2d: input has " + std::to_string(input.shape[0]) +
                             " channels, filters expect " + std::to_string(filters.shape[1]));
    }
    const std::size_t c_in = input.shape[0];
    const std::size_t h = input.shape[1];
    const std::size_t w = input.shape[2];
    const std::size_t c_out = filters.shape[0];

    Tensor out = Tensor::zeros({c_out, h, w});
    for (std::size_t o = 0; o < c_out; ++o) {
        for (std::size_t c = 0; c < c_in; ++c) {
            for (std::size_t u = 0; u < 3; ++u) {
                for (std::size_t v = 0; v < 3; ++v) {
                    const double fv = filters(o, c, u, v);
                    if (fv == 0.0) {
                        continue;
                    }
                    const long oy = static_cast<long>(u) - 1;
                    const long ox = static_cast<long>(v) - 1;
                    const long y0 = std::max<long>(0, -oy);
                    const long y1 = std::min<long>(static_cast<long>(h), static_cast<long>(h) - oy);
                    const long x0 = std::max<long>(0, -ox);
                    const long x1 = std::min<long>(static_cast<long>(w), static_cast<long>(w) - ox);
                    for (long y = y0; y < y1; ++y) {
                        const double* in_row = &input.data[(c * h + static_cast<std::size_t>(y + oy)) * w];
                        double* out_row = &out.data[(o * h + static_cast<std::size_t>(y)) * w];
                        for (long xx = x0; xx < x1; ++xx) {
                            out_row[xx] += fv * in_row[xx + ox];
                        }
                    }
                }
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_out) {
    if (grad_out.shape.size() != 3 || grad_out.shape[0] != filters.shape[0] ||
        grad_out.shape[1] != input.shape[1] || grad_out.shape[2] != input.shape[2]) {
        throw DimensionError("conv2d_backward: grad_out shape mismatch");
    }
    if (filters.shape[1] != input.shape[0]) {
        throw DimensionError("conv2d_backward: channel mismatch");
    }
    const std::size_t c_in = input.shape[0];
    const std::size_t h = input.shape[1];
    const std::size_t w = input.shape[2];
    const std::size_t c_out = filters.shape[0];

    ConvGrads grads;
    grads.grad_input = Tensor::zeros(input.shape);
    grads.grad_filters = Tensor::zeros(filters.shape);

    for (std::size_t o = 0; o < c_out; ++o) {
        for (std::size_t c = 0; c < c_in; ++c) {
            for (std::size_t u = 0; u < 3; ++u) {
                for (std::size_t v = 0; v < 3; ++v) {
                    const long oy = static_cast<long>(u) - 1;
                    const long ox = static_cast<long>(v) - 1;
                    const long y0 = std::max<long>(0, -oy);
                    const long y1 = std::min<long>(static_cast<long>(h), static_cast<long>(h) - oy);
                    const long x0 = std::max<long>(0, -ox);
                    const long x1 = std::min<long>(static_cast<long>(w), static_cast<long>(w) - ox);
                    double gf = 0.0;
                    const double fv = filters(o, c, u, v);
                    for (long y = y0; y < y1; ++y) {
                        const double* in_row = &input.data[(c * h + static_cast<std::size_t>(y + oy)) * w];
                        const double* go_row = &grad_out.data[(o * h + static_cast<std::size_t>(y)) * w];
                        double* gi_row = &grads.grad_input.data[(c * h + static_cast<std::size_t>(y + oy)) * w];
                        for (long xx = x0; xx < x1; ++xx) {
                            gf += go_row[xx] * in_row[xx + ox];
                            gi_row[xx + ox] += fv * go_row[xx];
                        }
                    }
                    grads.grad_filters(o, c, u, v) = gf;
                }
            }
        }
    }
    return grads;
}

NormalizedDataset normalize_dataset(std::vector<Tensor> samples, std::size_t q) {
    const double target = 1.0 / std::sqrt(static_cast<double>(q));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double norm = frobenius_norm(samples[i]);
        if (norm == 0.0) {
            throw DataError("normalize_dataset: sample " + std::to_string(i) + " has zero norm");
        }
        const double scale = target / norm;
        for (double& v : samples[i].data) {
            v *= scale;
        }
        check_finite(samples[i], "normalize_dataset");
    }
    NormalizedDataset out;
    out.duplicate_pairs = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            if (samples[i].shape == samples[j].shape &&
                std::memcmp(samples[i].data.data(), samples[j].data.data(),
                            samples[i].data.size() * sizeof(double)) == 0) {
                ++out.duplicate_pairs;
            }
        }
    }
    out.samples = std::move(samples);
    return out;
}

} // namespace loft
