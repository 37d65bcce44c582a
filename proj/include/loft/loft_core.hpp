#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "loft/rng.hpp"
#include "loft/theory_model.hpp"

namespace loft {

enum class MaskMode { bernoulli, disjoint };

// m x S binary membership matrix M_t. Bernoulli mode draws entries i.i.d.
// Bern(xi); disjoint mode assigns every filter to exactly one subnetwork
// with column sizes differing by at most one.
struct MaskMatrix {
    std::size_t m = 0;
    std::size_t S = 0;
    MaskMode mode = MaskMode::bernoulli;
    double xi = 1.0;
    std::vector<std::uint8_t> bits; // row-major m x S

    std::uint8_t at(std::size_t r, std::size_t s) const { return bits[r * S + s]; }
    std::vector<std::uint8_t> column(std::size_t s) const;
    std::size_t row_sum(std::size_t r) const;
};

MaskMatrix sample_masks(std::size_t m, std::size_t S, double xi, MaskMode mode, Rng& rng);

// Per-step bookkeeping: normalizers N_r = max(sum_s M[r,s], 1), activity
// indicators Nperp_r = min(sum_s M[r,s], 1), and the aggregate direction g.
// u_tilde (m x n) is materialized only on request.
struct StepReport {
    std::vector<double> normalizer;   // N, length m
    std::vector<double> activity;     // Nperp, length m
    std::vector<double> g;            // m x d
    std::vector<double> u_tilde;      // m x n when requested, else empty
};

struct LoftStepResult {
    std::vector<double> W_next;
    StepReport report;
};

// One LoFT update w_{r,t+1} = w_{r,t} - eta * (Nperp_r/N_r) sum_s grad_s.
// Rows with Nperp_r = 0 are unchanged.
LoftStepResult loft_step(const TheoryModelState& state, const MaskMatrix& masks,
                         bool materialize_u_tilde = false);

// Equivalent form g_r = sum_i sum_j a_rj (u~_r^(i) - Nperp_r y_i) x^(j) 1{.},
// kept as an independent cross-check of the canonical sum-of-gradients form.
std::vector<double> loft_gradient_mixed_form(const TheoryModelState& state,
                                             const MaskMatrix& masks);

// Scaled gradient-descent baseline: w_{r,t+1} = w_{r,t} - eta*(theta/xi)*grad,
// with theta = 1 - (1-xi)^S taken from the state's masking scheme.
std::vector<double> gd_step(const TheoryModelState& state);

double theta_hit_probability(double xi, std::size_t S);

// Closed-form second moment of nu_{r,r'} for r != r', derived from the
// definition nu = (Nperp/N) sum_s m_r^(s) m_r'^(s):
//   E[nu^2] = xi^2*theta + xi*(1-xi)*E[1/B; B>=1],  B ~ Bin(S, xi).
double exact_nu_sq_offdiag(double xi, std::size_t S);

struct MomentRow {
    const char* quantity;
    double estimate;
    double std_error;
    double ref_paper; // closed form as printed in the literature
    double ref_exact; // closed form derived from the nu definition
};

struct MomentTable {
    double xi = 0.0;
    std::size_t S = 0;
    double theta = 0.0;
    std::size_t trials = 0;
    std::vector<MomentRow> rows;
};

// Monte Carlo moments of nu_{r,r',t} (r distinct and equal) plus E[Nperp].
MomentTable mask_moments(double xi, std::size_t S, std::size_t trials, Rng& rng);

struct DeviationReport {
    double weight_dev = 0.0;      // |W_T - W^_T|_F^2
    double output_dev_sum = 0.0;  // sum_{t<T} |u_t - u^_t|^2
    double weight_drift = 0.0;    // max over t of max_r |w_{r,t} - w_{r,0}|_2
    double lambda0 = 0.0;
    double eta = 0.0;
    std::vector<double> loss_curve;       // |u_t - y|^2, t = 0..T
    std::vector<double> weight_dev_curve; // t = 0..T
    std::vector<double> output_dev_curve; // t = 0..T-1
    std::vector<double> drift_curve;      // t = 0..T
};

// Runs T iterations of loft_step and gd_step from a shared initialization
// with fresh masks every iteration, recording the deviation quantities.
// Raises a divergence error if the loss exceeds 1e6 times its initial value.
DeviationReport run_paired_trajectories(const TheoryConfig& cfg, const TheoryDataset& data,
                                        MaskMode mode = MaskMode::bernoulli);

} // namespace loft
