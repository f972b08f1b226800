#include "protab/pspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace protab::pspace {

void PrototypeSpace::validate() const {
    if (k() < 1) throw ShapeMismatch("prototype space needs K >= 1");
    if (!b.allFinite()) throw NonFiniteInput("prototype space has non-finite entries");
    for (int i = 0; i < k(); ++i) {
        if (b.row(i).norm() == 0.0) throw NonFiniteInput("prototype row " + std::to_string(i) + " is zero");
    }
}

int choose_k(int num_features, double log_base) {
    if (num_features < 1) throw IncompatibleSpec("choose_k needs at least one feature");
    if (log_base <= 1.0) throw Error("choose_k log base must exceed 1");
    const double k = std::ceil(std::log(static_cast<double>(num_features)) / std::log(log_base));
    return std::max(2, static_cast<int>(k));
}

std::vector<int> KMeansResult::histogram() const {
    std::vector<int> h(static_cast<std::size_t>(centroids.rows()), 0);
    for (int a : assignments) ++h[static_cast<std::size_t>(a)];
    return h;
}

namespace {

double sq_dist(const Mat& points, int i, const Mat& centroids, int k) {
    return (points.row(i) - centroids.row(k)).squaredNorm();
}

// nearest centroid, lowest index on ties
int nearest(const Mat& points, int i, const Mat& centroids, double* dist_out = nullptr) {
    int best = 0;
    double best_d = sq_dist(points, i, centroids, 0);
    for (int k = 1; k < centroids.rows(); ++k) {
        const double d = sq_dist(points, i, centroids, k);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    if (dist_out) *dist_out = best_d;
    return best;
}

Mat seed_centroids(const Mat& points, int k, Rng& rng) {
    const int n = static_cast<int>(points.rows());
    Mat centroids(k, points.cols());
    centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n))));
    Vec d2(n);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < c; ++j) best = std::min(best, sq_dist(points, i, centroids, j));
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            // all remaining mass at existing centroids (duplicate points)
            centroids.row(c) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n))));
            continue;
        }
        double target = rng.uniform() * total;
        int pick = n - 1;
        for (int i = 0; i < n; ++i) {
            target -= d2[i];
            if (target <= 0.0) {
                pick = i;
                break;
            }
        }
        centroids.row(c) = points.row(pick);
    }
    return centroids;
}

KMeansResult kmeans_single(const Mat& points, int k, Rng& rng, int max_iter, double tol) {
    const int n = static_cast<int>(points.rows());
    KMeansResult res;
    res.centroids = seed_centroids(points, k, rng);
    res.assignments.assign(static_cast<std::size_t>(n), 0);

    double prev_inertia = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= max_iter; ++it) {
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            double d;
            res.assignments[static_cast<std::size_t>(i)] = nearest(points, i, res.centroids, &d);
            inertia += d;
        }
        if (inertia > prev_inertia + 1e-9) {
            throw Error("kmeans: inertia increased, Lloyd invariant broken");
        }
        res.inertia = inertia;
        res.iterations = it;
        if (prev_inertia - inertia < tol && it > 1) break;
        prev_inertia = inertia;

        Mat next = Mat::Zero(k, points.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            next.row(res.assignments[static_cast<std::size_t>(i)]) += points.row(i);
            ++counts[static_cast<std::size_t>(res.assignments[static_cast<std::size_t>(i)])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
            } else {
                // farthest point from its own centroid becomes the new seed
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = sq_dist(points, i, res.centroids,
                                             res.assignments[static_cast<std::size_t>(i)]);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                next.row(c) = points.row(far);
            }
        }
        const double shift = (next - res.centroids).rowwise().norm().maxCoeff();
        res.centroids = next;
        if (shift < tol) {
            // one final assignment so assignments match the centroids
            double inertia2 = 0.0;
            for (int i = 0; i < n; ++i) {
                double d;
                res.assignments[static_cast<std::size_t>(i)] = nearest(points, i, res.centroids, &d);
                inertia2 += d;
            }
            if (inertia2 > res.inertia + 1e-9) {
                throw Error("kmeans: inertia increased, Lloyd invariant broken");
            }
            res.inertia = inertia2;
            break;
        }
    }
    return res;
}

}  // namespace

KMeansResult kmeans(const Mat& points, int k, std::uint64_t seed, int max_iter, double tol,
                    int restarts) {
    if (k < 1) throw TooFewPoints("kmeans needs K >= 1");
    if (points.rows() < k) throw TooFewPoints("kmeans needs at least K points");
    if (!points.allFinite()) throw NonFiniteInput("kmeans input has non-finite entries");
    if (restarts < 1) restarts = 1;

    KMeansResult best;
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        Rng rng = Rng::from(seed, 0x6b6dULL, static_cast<std::uint64_t>(r));
        KMeansResult cur = kmeans_single(points, k, rng, max_iter, tol);
        if (!have || cur.inertia < best.inertia) {
            best = std::move(cur);
            have = true;
        }
    }
    return best;
}

PrototypeSpace init_prototypes(const KMeansResult& result, std::uint64_t seed, bool* perturbed) {
    PrototypeSpace space;
    space.b = result.centroids;
    bool any = false;
    Rng rng = Rng::from(seed, 0x7065ULL);
    for (int i = 0; i < space.k(); ++i) {
        if (space.b.row(i).norm() == 0.0) {
            for (int j = 0; j < space.d(); ++j) space.b(i, j) = 1e-6 * rng.gaussian();
            any = true;
        }
    }
    if (perturbed) *perturbed = any;
    space.validate();
    return space;
}

Estimator Estimator::init(int d, int hidden, int k, Rng& rng) {
    if (d < 1 || hidden < 1 || k < 1) throw IncompatibleSpec("estimator dims must be positive");
    auto fan_in_uniform = [&rng](int rows, int cols, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Mat m(rows, cols);
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
        }
        return m;
    };
    Estimator e;
    e.w1 = fan_in_uniform(d, hidden, d);
    e.b1 = fan_in_uniform(1, hidden, d);
    e.w2 = fan_in_uniform(hidden, hidden, hidden);
    e.b2 = fan_in_uniform(1, hidden, hidden);
    e.w3 = fan_in_uniform(hidden, k, hidden);
    e.b3 = fan_in_uniform(1, k, hidden);
    return e;
}

int Estimator::param_count() const {
    return static_cast<int>(w1.size() + b1.size() + w2.size() + b2.size() + w3.size() +
                            b3.size());
}

Mat estimate_coordinates(const Estimator& est, const Mat& z) {
    if (z.cols() != est.w1.rows()) throw ShapeMismatch("estimator input width mismatch");
    if (!z.allFinite()) throw NonFiniteInput("estimator input has non-finite entries");
    Mat h1 = ((z * est.w1).rowwise() + est.b1.row(0)).cwiseMax(0.0);
    Mat h2 = ((h1 * est.w2).rowwise() + est.b2.row(0)).cwiseMax(0.0);
    Mat logits = (h2 * est.w3).rowwise() + est.b3.row(0);
    Mat r(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        r.row(i) = (logits.row(i).array() - m).exp().matrix();
        r.row(i) /= r.row(i).sum();
    }
    return r;
}

EstimatorValues bind_estimator(nn::Tape& tape, const Estimator& est) {
    EstimatorValues v;
    v.w1 = tape.leaf(est.w1);
    v.b1 = tape.leaf(est.b1);
    v.w2 = tape.leaf(est.w2);
    v.b2 = tape.leaf(est.b2);
    v.w3 = tape.leaf(est.w3);
    v.b3 = tape.leaf(est.b3);
    return v;
}

nn::Value coordinate_logits(nn::Tape& tape, const EstimatorValues& v, nn::Value z) {
    nn::Value h1 = tape.relu(tape.add_row_broadcast(tape.matmul(z, v.w1), v.b1));
    nn::Value h2 = tape.relu(tape.add_row_broadcast(tape.matmul(h1, v.w2), v.b2));
    return tape.add_row_broadcast(tape.matmul(h2, v.w3), v.b3);
}

nn::Value estimate_coordinates(nn::Tape& tape, const EstimatorValues& v, nn::Value z) {
    return tape.softmax_rows(coordinate_logits(tape, v, z));
}

Mat project(const Mat& r, const PrototypeSpace& space) {
    if (r.cols() != space.k()) throw ShapeMismatch("coordinates width must equal K");
    return r * space.b;
}

}  // namespace protab::pspace
