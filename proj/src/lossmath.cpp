#include "ultraif/lossmath.hpp"

#include <algorithm>
#include <cmath>

#include "ultraif/errors.hpp"

namespace ultraif {

double softplus(double x) {
    // ln(1+e^x) = max(x,0) + ln(1+e^-|x|); exact at 0, overflow-free at
    // |x| in the hundreds.
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

void require_beta(const LossInput& in) {
    if (!(in.beta > 0.0)) {
        throw InvariantViolation("loss: beta must be positive");
    }
}

}  // namespace

LossValue dpo_loss(const LossInput& in) {
    require_beta(in);
    double delta = (in.logp_theta_chosen - in.logp_ref_chosen) -
                   (in.logp_theta_rejected - in.logp_ref_rejected);
    double z = in.beta * delta;

    LossValue out;
    out.loss = softplus(-z);
    double slope = in.beta * sigmoid(-z);  // beta * (1 - sigmoid(z))
    out.grads.d_logp_theta_chosen = -slope;
    out.grads.d_logp_theta_rejected = slope;
    out.grads.d_logp_ref_chosen = slope;
    out.grads.d_logp_ref_rejected = -slope;
    return out;
}

LossValue nca_loss(const LossInput& in) {
    require_beta(in);
    double r_c = in.logp_theta_chosen - in.logp_ref_chosen;
    double r_r = in.logp_theta_rejected - in.logp_ref_rejected;
    double zc = in.beta * r_c;
    double zr = in.beta * r_r;

    LossValue out;
    out.loss = softplus(-zc) + 0.5 * (softplus(zc) + softplus(zr));
    double d_rc = in.beta * (0.5 * sigmoid(zc) - sigmoid(-zc));
    double d_rr = 0.5 * in.beta * sigmoid(zr);
    out.grads.d_logp_theta_chosen = d_rc;
    out.grads.d_logp_ref_chosen = -d_rc;
    out.grads.d_logp_theta_rejected = d_rr;
    out.grads.d_logp_ref_rejected = -d_rr;
    return out;
}

double grad_check(LossFn fn, const LossInput& in, double h) {
    if (!(h >= 1e-7 && h <= 1e-3)) {
        throw InvariantViolation("grad_check: h outside [1e-7, 1e-3]");
    }
    double* slots[4];
    LossInput probe = in;
    slots[0] = &probe.logp_theta_chosen;
    slots[1] = &probe.logp_ref_chosen;
    slots[2] = &probe.logp_theta_rejected;
    slots[3] = &probe.logp_ref_rejected;

    LossGrads analytic = fn(in).grads;
    const double analytic_slots[4] = {
        analytic.d_logp_theta_chosen,
        analytic.d_logp_ref_chosen,
        analytic.d_logp_theta_rejected,
        analytic.d_logp_ref_rejected,
    };

    double worst = 0.0;
    for (int i = 0; i < 4; ++i) {
        double saved = *slots[i];
        *slots[i] = saved + h;
        double up = fn(probe).loss;
        *slots[i] = saved - h;
        double down = fn(probe).loss;
        *slots[i] = saved;

        double fd = (up - down) / (2.0 * h);
        double denom = std::max({std::fabs(analytic_slots[i]), std::fabs(fd), 1e-6});
        worst = std::max(worst, std::fabs(fd - analytic_slots[i]) / denom);
    }
    return worst;
}

std::string_view to_string(Objective objective) {
    return objective == Objective::Dpo ? "dpo" : "nca";
}

IterationPlan plan_iterations(int n_iters, bool use_nca_final, std::vector<DataSlice> slices) {
    if (n_iters < 1) {
        throw ConfigError("iteration plan: need at least one iteration");
    }
    if (static_cast<int>(slices.size()) != n_iters) {
        throw ConfigError("iteration plan: " + std::to_string(slices.size()) + " slices for " +
                          std::to_string(n_iters) + " iterations");
    }

    IterationPlan plan;
    std::vector<DataSlice> ordered = slices;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const DataSlice& a, const DataSlice& b) {
                         return a.constraint_count < b.constraint_count;
                     });
    for (int i = 0; i < n_iters; ++i) {
        if (ordered[static_cast<std::size_t>(i)].constraint_count !=
            slices[static_cast<std::size_t>(i)].constraint_count) {
            plan.reordered = true;
        }
    }

    for (int i = 0; i < n_iters; ++i) {
        bool final_step = i == n_iters - 1;
        plan.iterations.push_back({
            i + 1,
            final_step && use_nca_final ? Objective::Nca : Objective::Dpo,
            std::move(ordered[static_cast<std::size_t>(i)]),
        });
    }
    return plan;
}

json plan_to_json(const IterationPlan& plan) {
    json iterations = json::array();
    for (const auto& step : plan.iterations) {
        iterations.push_back(json{
            {"index", step.index},
            {"objective", to_string(step.objective)},
            {"slice", {{"label", step.slice.label}, {"constraint_count", step.slice.constraint_count}}},
        });
    }
    return json{{"iterations", std::move(iterations)}, {"reordered", plan.reordered}};
}

}  // namespace ultraif
