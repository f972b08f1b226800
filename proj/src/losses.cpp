#include "protab/losses.hpp"

#include <algorithm>
#include <cmath>

namespace protab::losses {

namespace {

constexpr double kCosEps = 1e-8;

std::vector<int> subsample_rows(int n_b, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) throw BadRatios("sample_fraction must be in (0,1]");
    const int m = static_cast<int>(std::ceil(fraction * n_b));
    Rng rng = Rng::from(seed, 0xd1f5ULL);
    std::vector<int> idx = sample_without_replacement(n_b, m, rng);
    std::sort(idx.begin(), idx.end());
    return idx;
}

double plain_cos(const Mat& a, int i, const Mat& b, int j) {
    const double na = std::max(a.row(i).norm(), kCosEps);
    const double nb = std::max(b.row(j).norm(), kCosEps);
    return a.row(i).dot(b.row(j)) / (na * nb);
}

std::vector<int> class_indices(const Vec& labels, Eigen::Index cols) {
    std::vector<int> idx(static_cast<std::size_t>(labels.size()));
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        const double y = labels[i];
        if (y != std::floor(y) || y < 0.0 || y >= static_cast<double>(cols)) {
            throw LabelOutOfRange("class label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(cols) + ")");
        }
        idx[static_cast<std::size_t>(i)] = static_cast<int>(y);
    }
    return idx;
}

}  // namespace

void LossWeights::validate() const {
    if (w_task < 0.0 || w_projecting < 0.0 || w_diversifying < 0.0 ||
        w_orthogonalization < 0.0) {
        throw IncompatibleSpec("loss weights must be nonnegative");
    }
}

PairSpec make_pairs(const Vec& labels, Task task, double log_base) {
    const int n_b = static_cast<int>(labels.size());
    if (n_b < 2) throw TooFewSamples("pairs need at least two samples");
    PairSpec p;
    p.positive.resize(n_b, n_b);
    if (task != Task::regression) {
        for (int i = 0; i < n_b; ++i) {
            for (int j = 0; j < n_b; ++j) p.positive(i, j) = labels[i] == labels[j];
        }
        return p;
    }
    if (!(log_base > 1.0)) throw IncompatibleSpec("bin log base must exceed 1");
    const double lo = labels.minCoeff();
    const double range = labels.maxCoeff() - lo;
    if (range <= 0.0) {
        p.positive.setConstant(true);  // zero-width range: one degenerate bin
        p.bin_count = 1;
        return p;
    }
    const int t = std::max(
        1, static_cast<int>(std::ceil(1.0 + std::log(static_cast<double>(n_b)) /
                                                std::log(log_base))));
    std::vector<int> bin(static_cast<std::size_t>(n_b));
    for (int i = 0; i < n_b; ++i) {
        const int b = static_cast<int>(std::floor((labels[i] - lo) / range * t));
        bin[static_cast<std::size_t>(i)] = std::min(b, t - 1);
    }
    for (int i = 0; i < n_b; ++i) {
        for (int j = 0; j < n_b; ++j) {
            p.positive(i, j) = bin[static_cast<std::size_t>(i)] == bin[static_cast<std::size_t>(j)];
        }
    }
    p.bin_count = t;
    return p;
}

nn::Value task_loss(nn::Tape& tape, nn::Value predictions, const Vec& labels, Task task) {
    const Mat& pred = tape.val(predictions);
    if (pred.rows() != labels.size()) throw ShapeMismatch("task_loss: batch size mismatch");
    switch (task) {
        case Task::binclass: {
            std::vector<int> cls = class_indices(labels, 2);
            std::vector<double> y(cls.begin(), cls.end());
            return tape.bce_with_logits(predictions, y);
        }
        case Task::multiclass: {
            std::vector<int> cls = class_indices(labels, pred.cols());
            return tape.neg(tape.mean(tape.pick_cols(tape.log_softmax_rows(predictions), cls)));
        }
        case Task::regression: {
            return tape.mse_loss(predictions, Mat(labels));
        }
    }
    throw Error("task_loss: unreachable");
}

double task_loss(const Mat& predictions, const Vec& labels, Task task) {
    nn::Tape tape;
    return tape.val(task_loss(tape, tape.leaf(predictions), labels, task))(0, 0);
}

nn::Value projecting_loss(nn::Tape& tape, nn::Value z, const pspace::EstimatorValues& gamma,
                          nn::Value prototypes, bool detach_coords_input) {
    const Eigen::Index n = tape.val(z).rows();
    if (n == 0) throw ShapeMismatch("projecting_loss: empty batch");
    nn::Value zin = detach_coords_input ? tape.detach(z) : z;
    nn::Value r = pspace::estimate_coordinates(tape, gamma, zin);
    nn::Value cost = tape.rsub_const(1.0, nn::cosine_similarity(tape, z, prototypes, kCosEps));
    return tape.scale(tape.sum(tape.hadamard(r, cost)), 1.0 / static_cast<double>(n));
}

double projecting_loss(const Mat& z, const pspace::Estimator& gamma,
                       const pspace::PrototypeSpace& space) {
    nn::Tape tape;
    pspace::EstimatorValues v = pspace::bind_estimator(tape, gamma);
    return tape.val(projecting_loss(tape, tape.leaf(z), v, tape.leaf(space.b)))(0, 0);
}

DiversifyingValue diversifying_loss(nn::Tape& tape, nn::Value coords, const PairSpec& pairs,
                                    std::uint64_t seed, DiversifyingOptions opts) {
    const int n_b = static_cast<int>(tape.val(coords).rows());
    if (n_b == 0) throw ShapeMismatch("diversifying_loss: empty batch");
    if (pairs.n() != n_b) throw ShapeMismatch("diversifying_loss: pair matrix size mismatch");
    const std::vector<int> idx = subsample_rows(n_b, opts.sample_fraction, seed);
    const int m = static_cast<int>(idx.size());

    Mat pos_mask = Mat::Zero(m, m);
    Mat denom_mask = Mat::Constant(m, m, 1.0);
    int npos = 0;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (opts.exclude_self && i == j) {
                denom_mask(i, j) = 0.0;
                continue;
            }
            if (pairs.positive(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)])) {
                pos_mask(i, j) = 1.0;
                npos += 1;
            }
        }
    }
    if (npos == 0) return {tape.leaf(Mat::Zero(1, 1)), true};

    nn::Value rs = tape.gather_rows(coords, idx);
    nn::Value cos = nn::cosine_similarity(tape, rs, rs, kCosEps);
    nn::Value denom = tape.sum(tape.hadamard(tape.exp_(cos), tape.leaf(denom_mask)));
    nn::Value pos_sum = tape.sum(tape.hadamard(cos, tape.leaf(pos_mask)));
    nn::Value loss = tape.sub(tape.scale(tape.log_(denom), static_cast<double>(npos)), pos_sum);
    return {loss, false};
}

DiversifyingScalar diversifying_loss(const Mat& coords, const PairSpec& pairs, std::uint64_t seed,
                                     DiversifyingOptions opts) {
    const int n_b = static_cast<int>(coords.rows());
    if (n_b == 0) throw ShapeMismatch("diversifying_loss: empty batch");
    if (pairs.n() != n_b) throw ShapeMismatch("diversifying_loss: pair matrix size mismatch");
    const std::vector<int> idx = subsample_rows(n_b, opts.sample_fraction, seed);
    const int m = static_cast<int>(idx.size());

    double denom = 0.0;
    double pos_sum = 0.0;
    int npos = 0;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (opts.exclude_self && i == j) continue;
            const double c = plain_cos(coords, idx[static_cast<std::size_t>(i)], coords,
                                       idx[static_cast<std::size_t>(j)]);
            denom += std::exp(c);
            if (pairs.positive(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)])) {
                pos_sum += c;
                npos += 1;
            }
        }
    }
    if (npos == 0) return {0.0, true};
    return {static_cast<double>(npos) * std::log(denom) - pos_sum, false};
}

nn::Value orthogonalization_loss(nn::Tape& tape, nn::Value prototypes) {
    const Eigen::Index k = tape.val(prototypes).rows();
    if (k < 1) throw ShapeMismatch("orthogonalization_loss: no prototypes");
    nn::Value m = tape.abs_(nn::cosine_similarity(tape, prototypes, prototypes, kCosEps));
    nn::Value l1 = tape.sum(m);
    nn::Value fro2 = tape.sum(tape.hadamard(m, m));
    nn::Value first = tape.div11(l1, fro2);
    // the outer max(0, .) of the printed form is inert: its argument is |K - l1|
    nn::Value second = tape.relu(tape.abs_(tape.add_const(l1, -static_cast<double>(k))));
    return tape.add(first, second);
}

double orthogonalization_loss(const pspace::PrototypeSpace& space) {
    nn::Tape tape;
    return tape.val(orthogonalization_loss(tape, tape.leaf(space.b)))(0, 0);
}

nn::Value total_objective(nn::Tape& tape, nn::Value task, nn::Value projecting,
                          nn::Value diversifying, nn::Value orthogonalization,
                          const LossWeights& weights) {
    weights.validate();
    nn::Value acc = tape.scale(task, weights.w_task);
    acc = tape.add(acc, tape.scale(projecting, weights.w_projecting));
    acc = tape.add(acc, tape.scale(diversifying, weights.w_diversifying));
    return tape.add(acc, tape.scale(orthogonalization, weights.w_orthogonalization));
}

double total_objective(double task, double projecting, double diversifying,
                       double orthogonalization, const LossWeights& weights) {
    weights.validate();
    return weights.w_task * task + weights.w_projecting * projecting +
           weights.w_diversifying * diversifying + weights.w_orthogonalization * orthogonalization;
}

}  // namespace protab::losses
