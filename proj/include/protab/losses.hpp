#pragma once

// The four objective terms and their weighted combination. Each term has a
// tape form used in training and a plain scalar form for evaluation and
// cross-checks; both compute the same value for the same inputs and seed.

#include <cstdint>

#include "protab/common.hpp"
#include "protab/nn.hpp"
#include "protab/pspace.hpp"

namespace protab::losses {

struct LossWeights {
    double w_task = 1.0;
    double w_projecting = 0.25;
    double w_diversifying = 0.25;
    double w_orthogonalization = 0.25;

    void validate() const;  // all weights nonnegative
};

// Positive-pair indicator over a minibatch. Symmetric with a true diagonal:
// the literal indicator pairs every sample with itself.
struct PairSpec {
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> positive;
    int bin_count = 0;  // regression sub-intervals; 0 for classification

    int n() const { return static_cast<int>(positive.rows()); }
};

// Classification: same class pairs. Regression: ceil(1 + log_base(n_b))
// equal-width bins over the batch label range, same bin pairs; a zero-width
// range degenerates to a single bin with every pair positive.
PairSpec make_pairs(const Vec& labels, Task task, double log_base = 2.0);

// Cross-entropy (single-logit logistic for binary, softmax NLL for
// multiclass) or mean squared error; mean over the batch.
nn::Value task_loss(nn::Tape& tape, nn::Value predictions, const Vec& labels, Task task);
double task_loss(const Mat& predictions, const Vec& labels, Task task);

// Mean over the batch of the forced singleton transport cost between z_i and
// the prototypes, with coordinates from the shared estimator. Gradients reach
// theta_f through both z paths unless detach_coords_input cuts the estimator
// input.
nn::Value projecting_loss(nn::Tape& tape, nn::Value z, const pspace::EstimatorValues& gamma,
                          nn::Value prototypes, bool detach_coords_input = false);
double projecting_loss(const Mat& z, const pspace::Estimator& gamma,
                       const pspace::PrototypeSpace& space);

struct DiversifyingOptions {
    double sample_fraction = 0.5;
    bool exclude_self = false;  // drop i = j from both double sums
};

struct DiversifyingValue {
    nn::Value value;
    bool no_positive_pairs = false;
};

struct DiversifyingScalar {
    double value = 0.0;
    bool no_positive_pairs = false;
};

// Literal contrastive form: minus the sum over positive pairs of
// log(exp(cos(r_i, r_j)) / sum of exp(cos) over ALL ordered pairs), evaluated
// on a seeded without-replacement subsample of ceil(fraction * n_b) rows.
// No positive pairs after subsampling returns 0 with the flag set.
DiversifyingValue diversifying_loss(nn::Tape& tape, nn::Value coords, const PairSpec& pairs,
                                    std::uint64_t seed, DiversifyingOptions opts = {});
DiversifyingScalar diversifying_loss(const Mat& coords, const PairSpec& pairs, std::uint64_t seed,
                                     DiversifyingOptions opts = {});

// ||M||_1 / ||M||_F^2 + max(0, |K - ||M||_1|) with M_ij = |cos(beta_i, beta_j)|.
// Minimum 1, attained exactly when M is the identity.
nn::Value orthogonalization_loss(nn::Tape& tape, nn::Value prototypes);
double orthogonalization_loss(const pspace::PrototypeSpace& space);

nn::Value total_objective(nn::Tape& tape, nn::Value task, nn::Value projecting,
                          nn::Value diversifying, nn::Value orthogonalization,
                          const LossWeights& weights);
double total_objective(double task, double projecting, double diversifying,
                       double orthogonalization, const LossWeights& weights);

}  // namespace protab::losses
