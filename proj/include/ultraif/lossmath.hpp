#pragma once

#include <string>
#include <vector>

#include "ultraif/jsonl.hpp"

namespace ultraif {

// Sequence log-likelihoods for one preference pair under the policy and the
// frozen reference. The trainer computes these; here they are plain inputs
// so the objectives stay exactly testable.
struct LossInput {
    double beta = 0.1;
    double logp_theta_chosen = 0.0;
    double logp_ref_chosen = 0.0;
    double logp_theta_rejected = 0.0;
    double logp_ref_rejected = 0.0;
};

struct LossGrads {
    double d_logp_theta_chosen = 0.0;
    double d_logp_ref_chosen = 0.0;
    double d_logp_theta_rejected = 0.0;
    double d_logp_ref_rejected = 0.0;
};

struct LossValue {
    double loss = 0.0;
    LossGrads grads;
};

// Numerically stable primitives: softplus(x) = ln(1 + e^x) without overflow,
// sigmoid via the sign-split form.
double softplus(double x);
double sigmoid(double x);

// Preference objective on the margin Delta = (theta_c - ref_c) - (theta_r -
// ref_r): loss = -ln sigmoid(beta * Delta), computed as softplus(-beta*Delta).
// Gradients are with respect to all four log-probs (the reference is treated
// as an input, not a constant, so finite differences can check every slot).
LossValue dpo_loss(const LossInput& in);

// Contrastive objective on the absolute log-ratios r_c, r_r:
// loss = softplus(-beta*r_c) + (softplus(beta*r_c) + softplus(beta*r_r)) / 2.
// Unlike the margin objective this is not a function of Delta alone; it
// penalizes both ratios individually.
LossValue nca_loss(const LossInput& in);

using LossFn = LossValue (*)(const LossInput&);

// Central-difference check of the analytic gradients; returns the maximum
// relative error over the four inputs, where the error is
// |fd - analytic| / max(|analytic|, |fd|, 1e-6). The floor keeps the check
// meaningful where a gradient crosses zero. h must lie in [1e-7, 1e-3].
double grad_check(LossFn fn, const LossInput& in, double h);

enum class Objective { Dpo, Nca };

std::string_view to_string(Objective objective);

struct DataSlice {
    std::string label;
    int constraint_count = 0;
};

struct IterationStep {
    int index = 0;  // 1-based
    Objective objective = Objective::Dpo;
    DataSlice slice;
};

struct IterationPlan {
    std::vector<IterationStep> iterations;
    bool reordered = false;  // slices arrived out of complexity order
};

// Lays out the training schedule: one slice per iteration ordered by
// ascending constraint count, every objective DPO except the final one,
// which switches to NCA when requested. Slice count must equal n_iters.
IterationPlan plan_iterations(int n_iters, bool use_nca_final, std::vector<DataSlice> slices);

json plan_to_json(const IterationPlan& plan);

}  // namespace ultraif
