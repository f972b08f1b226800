#pragma once

// Discrete optimal transport: cosine transport costs, entropic-regularized
// Sinkhorn between discrete distributions, and the closed-form optimum for a
// singleton source. The training path only ever needs the singleton form
// (the per-sample source distribution has one atom, so the plan is forced);
// the general solver exists to cross-check it and for test oracles.

#include "protab/common.hpp"

namespace protab::ot {

struct DiscreteDistribution {
    Vec weights;  // nonnegative, sums to 1 within 1e-8
    Mat support;  // one atom per row

    void validate() const;
};

struct TransportPlan {
    Mat T;  // nonnegative, row sums ~ a, column sums ~ b
    Vec row_marginal;
    Vec col_marginal;

    double marginal_violation() const;  // L1 row + column deviation
};

// Pairwise cosine distances 1 - cos(z_i, b_k) between rows, norms floored at
// eps so zero vectors yield cost 1 against everything. Entries lie in [0, 2].
Mat cosine_cost(const Mat& z, const Mat& b, double eps = 1e-8);

struct SinkhornResult {
    TransportPlan plan;
    double distance = 0.0;  // <T, C>
    bool converged = false;
    int iterations = 0;
    bool used_log_domain = false;
};

// Alternating-scaling Sinkhorn on exp(-C/reg). Switches to log-domain
// updates when the kernel or the scalings underflow (small reg). Stops when
// the plan's marginal violation drops below tol or max_iter is reached; a
// max_iter exit returns the best iterate with converged=false.
SinkhornResult sinkhorn(const Vec& a, const Vec& b, const Mat& c, double reg = 0.01,
                        int max_iter = 500, double tol = 1e-6);

// Exact OT cost when the source is a single atom: the feasible set contains
// only T_1k = r_k, so the optimum is sum_k r_k c_k.
double singleton_ot(const Vec& r, const Mat& c_row);

}  // namespace protab::ot
