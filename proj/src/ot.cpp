#include "protab/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace protab::ot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_simplex(const Vec& w, const char* who) {
    if (w.size() == 0) throw ShapeMismatch(std::string(who) + ": empty weight vector");
    double s = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (!(w[i] >= 0.0)) throw NonFiniteInput(std::string(who) + ": negative or NaN weight");
        s += w[i];
    }
    if (std::abs(s - 1.0) > 1e-8) {
        throw NonFiniteInput(std::string(who) + ": weights sum to " + std::to_string(s));
    }
}

double logsumexp(const Vec& v) {
    const double m = v.maxCoeff();
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

}  // namespace

void DiscreteDistribution::validate() const {
    check_simplex(weights, "distribution");
    if (support.rows() != weights.size()) {
        throw ShapeMismatch("distribution: one support row per weight required");
    }
    if (!support.allFinite()) throw NonFiniteInput("distribution: non-finite support");
}

double TransportPlan::marginal_violation() const {
    double v = 0.0;
    for (Eigen::Index i = 0; i < T.rows(); ++i) v += std::abs(T.row(i).sum() - row_marginal[i]);
    for (Eigen::Index j = 0; j < T.cols(); ++j) v += std::abs(T.col(j).sum() - col_marginal[j]);
    return v;
}

Mat cosine_cost(const Mat& z, const Mat& b, double eps) {
    if (z.cols() != b.cols()) throw ShapeMismatch("cosine_cost: width mismatch");
    if (eps <= 0.0) throw Error("cosine_cost: eps must be positive");
    Vec zn(z.rows()), bn(b.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) zn[i] = std::max(z.row(i).norm(), eps);
    for (Eigen::Index k = 0; k < b.rows(); ++k) bn[k] = std::max(b.row(k).norm(), eps);
    Mat c = z * b.transpose();
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        for (Eigen::Index k = 0; k < c.cols(); ++k) {
            c(i, k) = std::clamp(1.0 - c(i, k) / (zn[i] * bn[k]), 0.0, 2.0);
        }
    }
    return c;
}

SinkhornResult sinkhorn(const Vec& a, const Vec& b, const Mat& c, double reg, int max_iter,
                        double tol) {
    check_simplex(a, "sinkhorn a");
    check_simplex(b, "sinkhorn b");
    if (c.rows() != a.size() || c.cols() != b.size()) {
        throw ShapeMismatch("sinkhorn: cost shape must be |a| x |b|");
    }
    if (!c.allFinite()) throw NonFiniteInput("sinkhorn: non-finite cost");
    if (reg <= 0.0) throw Error("sinkhorn: reg must be positive");

    const Eigen::Index n = a.size(), m = b.size();
    SinkhornResult res;
    res.plan.row_marginal = a;
    res.plan.col_marginal = b;

    // Scaling domain first. The scaling iteration is invariant to a constant
    // factor on the kernel, so its conditioning is governed by the cost
    // spread: exp(-(Cmax-Cmin)/reg) below ~1e-217 loses the small kernel
    // entries to rounding long before they underflow to zero. Start in the
    // log domain past that point, and also bail out if the scalings blow up
    // mid-iteration.
    bool need_log = (c.maxCoeff() - c.minCoeff()) / reg > 500.0;
    {
        if (!need_log) {
            Mat k = (-c / reg).array().exp().matrix();
            Vec u = Vec::Ones(n), v = Vec::Ones(m);
            for (int it = 1; it <= max_iter; ++it) {
                Vec kv = k * v;
                for (Eigen::Index i = 0; i < n; ++i) u[i] = kv[i] > 0.0 ? a[i] / kv[i] : 0.0;
                Vec ktu = k.transpose() * u;
                for (Eigen::Index j = 0; j < m; ++j) v[j] = ktu[j] > 0.0 ? b[j] / ktu[j] : 0.0;
                if (!u.allFinite() || !v.allFinite()) {
                    need_log = true;
                    break;
                }
                res.plan.T = u.asDiagonal() * k * v.asDiagonal();
                res.iterations = it;
                if (res.plan.marginal_violation() < tol) {
                    res.converged = true;
                    break;
                }
            }
        }
    }

    if (need_log) {
        res.used_log_domain = true;
        Vec log_a(n), log_b(m);
        for (Eigen::Index i = 0; i < n; ++i) log_a[i] = a[i] > 0.0 ? std::log(a[i]) : kNegInf;
        for (Eigen::Index j = 0; j < m; ++j) log_b[j] = b[j] > 0.0 ? std::log(b[j]) : kNegInf;
        const Mat lm = -c / reg;
        Vec alpha = Vec::Zero(n), beta = Vec::Zero(m);
        res.converged = false;
        for (int it = 1; it <= max_iter; ++it) {
            for (Eigen::Index i = 0; i < n; ++i) {
                alpha[i] = log_a[i] - logsumexp(lm.row(i).transpose() + beta);
            }
            for (Eigen::Index j = 0; j < m; ++j) {
                beta[j] = log_b[j] - logsumexp(lm.col(j) + alpha);
            }
            res.plan.T.resize(n, m);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < m; ++j) {
                    const double e = alpha[i] + lm(i, j) + beta[j];
                    res.plan.T(i, j) = e == kNegInf ? 0.0 : std::exp(e);
                }
            }
            res.iterations = it;
            if (res.plan.marginal_violation() < tol) {
                res.converged = true;
                break;
            }
        }
    }

    res.distance = (res.plan.T.array() * c.array()).sum();
    return res;
}

double singleton_ot(const Vec& r, const Mat& c_row) {
    if (c_row.rows() != 1 || c_row.cols() != r.size()) {
        throw ShapeMismatch("singleton_ot: cost must be 1 x |r|");
    }
    check_simplex(r, "singleton_ot");
    return c_row.row(0).dot(r);
}

}  // namespace protab::ot
