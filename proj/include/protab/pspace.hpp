#pragma once

// The prototype projection space: a K x d basis matrix learned jointly with
// the model, plus the machinery that builds it (prototype count rule, Lloyd
// K-Means over backbone outputs) and uses it (shared coordinates estimator,
// convex projection).

#include <cstdint>
#include <vector>

#include "protab/common.hpp"
#include "protab/nn.hpp"

namespace protab::pspace {

struct PrototypeSpace {
    Mat b;  // K x d, rows are the prototypes

    int k() const { return static_cast<int>(b.rows()); }
    int d() const { return static_cast<int>(b.cols()); }
    void validate() const;  // finite, K >= 1, no zero rows
};

// K = ceil(log_base(num_features)), clamped to at least 2. Natural log by
// default; the base is configurable because the count rule's log base is a
// free choice (the sweep subcommand covers both).
int choose_k(int num_features, double log_base = 2.718281828459045);

struct KMeansResult {
    Mat centroids;                 // K x d
    std::vector<int> assignments;  // length n, values in [0, K)
    double inertia = 0.0;          // within-cluster sum of squared distances
    int iterations = 0;

    std::vector<int> histogram() const;  // cluster sizes, sums to n
};

// Lloyd iterations with distance-weighted (k-means++ style) seeding, run
// `restarts` times from derived seeds, keeping the lowest-inertia result.
// Empty clusters are re-seeded to the point farthest from its centroid.
// Inertia is checked non-increasing across iterations within each run.
KMeansResult kmeans(const Mat& points, int k, std::uint64_t seed, int max_iter = 100,
                    double tol = 1e-7, int restarts = 10);

// B := centroid matrix. Zero centroid rows (possible when embeddings collapse)
// are nudged by seeded 1e-6 noise so cosine quantities stay defined; the
// returned flag records whether that happened.
PrototypeSpace init_prototypes(const KMeansResult& result, std::uint64_t seed,
                               bool* perturbed = nullptr);

// Shared 3-layer coordinates estimator: d -> hidden -> hidden -> K logits,
// ReLU activations. One parameter set maps every sample.
struct Estimator {
    Mat w1, b1, w2, b2, w3, b3;  // biases stored as 1 x width rows

    static Estimator init(int d, int hidden, int k, Rng& rng);
    int param_count() const;
    int k() const { return static_cast<int>(b3.cols()); }
};

// Inference path: r = softmax(logits), rows on the simplex.
Mat estimate_coordinates(const Estimator& est, const Mat& z);

// Training path: same computation expressed on a tape with the parameters
// bound as leaves, so gradients reach gamma and (through z) theta_f.
struct EstimatorValues {
    nn::Value w1, b1, w2, b2, w3, b3;
};
EstimatorValues bind_estimator(nn::Tape& tape, const Estimator& est);
nn::Value coordinate_logits(nn::Tape& tape, const EstimatorValues& v, nn::Value z);
nn::Value estimate_coordinates(nn::Tape& tape, const EstimatorValues& v, nn::Value z);

// Projection representation: each row of r combines the prototype rows,
// so outputs lie in the prototypes' convex hull.
Mat project(const Mat& r, const PrototypeSpace& space);

}  // namespace protab::pspace
