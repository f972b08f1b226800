#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "protab/nn.hpp"

using protab::Mat;
using protab::Rng;
using protab::Vec;
using protab::nn::Tape;
using protab::nn::Value;

namespace {

// Finite-difference oracle: for scalar f(inputs), compare the tape gradient
// of every input against central differences. The builder must construct the
// graph from the given leaf values only, so perturbed re-evaluations see the
// perturbation.
void check_gradients(const std::vector<Mat>& inputs,
                     const std::function<Value(Tape&, const std::vector<Value>&)>& build,
                     double h = 1e-6, double tol = 5e-5) {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(inputs.size());
    for (const Mat& m : inputs) leaves.push_back(tape.leaf(m));
    Value root = build(tape, leaves);
    REQUIRE(tape.val(root).size() == 1);
    tape.backward(root);

    auto eval = [&](const std::vector<Mat>& xs) {
        Tape t2;
        std::vector<Value> ls;
        ls.reserve(xs.size());
        for (const Mat& m : xs) ls.push_back(t2.leaf(m));
        return t2.val(build(t2, ls))(0, 0);
    };

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Mat& g = tape.grad(leaves[k]);
        for (Eigen::Index i = 0; i < inputs[k].rows(); ++i) {
            for (Eigen::Index j = 0; j < inputs[k].cols(); ++j) {
                std::vector<Mat> plus = inputs;
                std::vector<Mat> minus = inputs;
                plus[k](i, j) += h;
                minus[k](i, j) -= h;
                const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
                CAPTURE(k);
                CAPTURE(i);
                CAPTURE(j);
                CHECK(g(i, j) == doctest::Approx(fd).epsilon(tol).scale(1.0));
            }
        }
    }
}

Mat random_mat(Rng& rng, int r, int c, double lo = -1.5, double hi = 1.5) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = lo + (hi - lo) * rng.uniform();
    return m;
}

}  // namespace

TEST_CASE("forward values of basic ops") {
    Tape t;
    Mat a(2, 2);
    a << 1.0, -2.0, 3.0, 0.5;
    Mat b(2, 2);
    b << 0.5, 1.0, -1.0, 2.0;
    Value va = t.leaf(a), vb = t.leaf(b);
    CHECK(t.val(t.add(va, vb))(1, 1) == doctest::Approx(2.5));
    CHECK(t.val(t.sub(va, vb))(0, 0) == doctest::Approx(0.5));
    CHECK(t.val(t.hadamard(va, vb))(0, 1) == doctest::Approx(-2.0));
    CHECK(t.val(t.relu(va))(0, 1) == doctest::Approx(0.0));
    CHECK(t.val(t.relu(va))(1, 0) == doctest::Approx(3.0));
    CHECK(t.val(t.matmul(va, vb))(0, 0) == doctest::Approx(1.0 * 0.5 + (-2.0) * (-1.0)));
    CHECK(t.val(t.sum(va))(0, 0) == doctest::Approx(2.5));
    CHECK(t.val(t.mean(va))(0, 0) == doctest::Approx(0.625));
}

TEST_CASE("softmax rows sum to one and dominate correctly") {
    Tape t;
    Mat x(2, 3);
    x << 1.0, 2.0, 3.0, -5.0, 0.0, 5.0;
    Mat y = t.val(t.softmax_rows(t.leaf(x)));
    for (int i = 0; i < 2; ++i) CHECK(y.row(i).sum() == doctest::Approx(1.0));
    CHECK(y(0, 2) > y(0, 1));
    CHECK(y(1, 2) > 0.99);
    // exp(log_softmax) == softmax
    Mat ls = t.val(t.log_softmax_rows(t.leaf(x)));
    CHECK((ls.array().exp().matrix() - y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("softmax is shift invariant and numerically safe at large magnitudes") {
    Tape t;
    Mat x(1, 4);
    x << 1000.0, 1001.0, 999.0, 1000.5;
    Mat y = t.val(t.softmax_rows(t.leaf(x)));
    CHECK(std::isfinite(y.sum()));
    CHECK(y.sum() == doctest::Approx(1.0));
    Mat x0 = x.array() - 1000.0;
    Mat y0 = t.val(t.softmax_rows(t.leaf(Mat(x0))));
    CHECK((y - y0).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradients: elementwise ops") {
    Rng rng(11);
    for (int rep = 0; rep < 3; ++rep) {
        std::vector<Mat> in = {random_mat(rng, 3, 2), random_mat(rng, 3, 2)};
        check_gradients(in, [](Tape& t, const std::vector<Value>& v) {
            Value s = t.add(t.hadamard(v[0], v[1]), t.scale(v[0], 0.7));
            s = t.sub(s, t.add_const(v[1], 0.3));
            s = t.add(s, t.rsub_const(1.2, v[0]));
            return t.sum(t.hadamard(s, s));
        });
    }
}

TEST_CASE("gradients: relu tanh exp log abs") {
    Rng rng(12);
    // keep inputs away from relu/abs kinks and log's pole
    Mat a = random_mat(rng, 3, 3, 0.2, 1.8);
    Mat b = random_mat(rng, 3, 3, -1.8, -0.2);
    check_gradients({a, b}, [](Tape& t, const std::vector<Value>& v) {
        Value x = t.add(t.relu(v[0]), t.relu(v[1]));  // relu(b) = 0 region
        x = t.add(x, t.tanh_(v[0]));
        x = t.add(x, t.exp_(t.scale(v[1], 0.5)));
        x = t.add(x, t.log_(v[0]));
        x = t.add(x, t.abs_(v[1]));
        return t.mean(x);
    });
}

TEST_CASE("gradients: matmul chains and row broadcast bias") {
    Rng rng(13);
    Mat x = random_mat(rng, 4, 3);
    Mat w1 = random_mat(rng, 3, 5);
    Mat b1 = random_mat(rng, 1, 5);
    Mat w2 = random_mat(rng, 5, 2);
    check_gradients({x, w1, b1, w2}, [](Tape& t, const std::vector<Value>& v) {
        Value h = t.relu(t.add_row_broadcast(t.matmul(v[0], v[1]), v[2]));
        Value o = t.matmul(h, v[3]);
        return t.sum(t.hadamard(o, o));
    });
}

TEST_CASE("gradients: matmul_nt matches matmul with explicit transpose semantics") {
    Rng rng(14);
    Mat a = random_mat(rng, 3, 4);
    Mat b = random_mat(rng, 2, 4);
    check_gradients({a, b}, [](Tape& t, const std::vector<Value>& v) {
        return t.sum(t.matmul_nt(v[0], v[1]));
    });
    Tape t;
    Value va = t.leaf(a), vb = t.leaf(b);
    Mat direct = t.val(t.matmul_nt(va, vb));
    CHECK((direct - a * b.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gradients: gather slice stack concat") {
    Rng rng(15);
    Mat a = random_mat(rng, 5, 3);
    Mat b = random_mat(rng, 2, 3);
    check_gradients({a, b}, [](Tape& t, const std::vector<Value>& v) {
        Value g = t.gather_rows(v[0], {4, 0, 0, 2});  // repeated index accumulates
        Value s = t.slice_rows(v[0], 1, 2);
        Value st = t.vstack({g, s, v[1]});
        Value cc = t.concat_cols({st, st});
        return t.mean(t.hadamard(cc, cc));
    });
}

TEST_CASE("gradients: softmax and log_softmax rows") {
    Rng rng(16);
    Mat x = random_mat(rng, 4, 5);
    Mat w = random_mat(rng, 4, 5);
    check_gradients({x, w}, [](Tape& t, const std::vector<Value>& v) {
        return t.sum(t.hadamard(t.softmax_rows(v[0]), v[1]));
    });
    check_gradients({x, w}, [](Tape& t, const std::vector<Value>& v) {
        return t.sum(t.hadamard(t.log_softmax_rows(v[0]), v[1]));
    });
}

TEST_CASE("gradients: row norms and div_rows away from the clamp") {
    Rng rng(17);
    Mat a = random_mat(rng, 4, 3, 0.5, 2.0);
    check_gradients({a}, [](Tape& t, const std::vector<Value>& v) {
        Value n = t.row_norms(v[0], 1e-12);
        Value unit = t.div_rows(v[0], n);
        return t.sum(t.hadamard(unit, unit));  // == rows, constant; grad ~ 0
    });
    Mat b = random_mat(rng, 4, 3, 0.5, 2.0);
    check_gradients({a, b}, [](Tape& t, const std::vector<Value>& v) {
        Value sim = protab::nn::cosine_similarity(t, v[0], v[1], 1e-12);
        return t.mean(sim);
    });
}

TEST_CASE("row_norms clamp zeroes the gradient below eps") {
    Tape t;
    Mat a = Mat::Zero(2, 3);
    a.row(1) << 1.0, 2.0, 2.0;
    Value va = t.leaf(a);
    Value n = t.row_norms(va, 0.5);
    CHECK(t.val(n)(0, 0) == doctest::Approx(0.5));
    CHECK(t.val(n)(1, 0) == doctest::Approx(3.0));
    t.backward(t.sum(n));
    CHECK(t.grad(va).row(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(t.grad(va)(1, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("cosine_similarity of a row with itself is one") {
    Tape t;
    Rng rng(18);
    Mat a = random_mat(rng, 3, 4);
    Value v = t.leaf(a);
    Mat s = t.val(protab::nn::cosine_similarity(t, v, v, 1e-12));
    for (int i = 0; i < 3; ++i) CHECK(s(i, i) == doctest::Approx(1.0));
    CHECK(s.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
}

TEST_CASE("gradients: pick_cols and div11") {
    Rng rng(19);
    Mat x = random_mat(rng, 4, 3);
    check_gradients({x}, [](Tape& t, const std::vector<Value>& v) {
        Value p = t.pick_cols(t.softmax_rows(v[0]), {0, 2, 1, 2});
        return t.div11(t.sum(p), t.add_const(t.mean(v[0]), 3.0));
    });
}

TEST_CASE("gradients: mse and bce losses") {
    Rng rng(20);
    Mat pred = random_mat(rng, 5, 1);
    Mat target = random_mat(rng, 5, 1);
    check_gradients({pred}, [&](Tape& t, const std::vector<Value>& v) {
        return t.mse_loss(v[0], target);
    });
    std::vector<double> y = {1.0, 0.0, 1.0, 1.0, 0.0};
    check_gradients({pred}, [&](Tape& t, const std::vector<Value>& v) {
        return t.bce_with_logits(v[0], y);
    });
    // bce at logit 0 is log 2 regardless of label
    Tape t;
    Mat z = Mat::Zero(2, 1);
    CHECK(t.val(t.bce_with_logits(t.leaf(z), {0.0, 1.0}))(0, 0) ==
          doctest::Approx(std::log(2.0)));
}

TEST_CASE("bce_with_logits is stable for extreme logits") {
    Tape t;
    Mat z(2, 1);
    z << 500.0, -500.0;
    Value lz = t.leaf(z);
    Value loss = t.bce_with_logits(lz, {1.0, 0.0});
    CHECK(t.val(loss)(0, 0) == doctest::Approx(0.0));
    t.backward(loss);
    CHECK(std::isfinite(t.grad(lz)(0, 0)));
    CHECK(std::isfinite(t.grad(lz)(1, 0)));
}

TEST_CASE("detach stops gradient flow") {
    Tape t;
    Mat a(1, 2);
    a << 2.0, 3.0;
    Value v = t.leaf(a);
    Value d = t.detach(v);
    Value loss = t.sum(t.add(t.hadamard(d, d), v));
    t.backward(loss);
    CHECK(t.grad(v)(0, 0) == doctest::Approx(1.0));  // only the direct path
    CHECK(t.grad(v)(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("scale_rows multiplies each row by its constant") {
    Rng rng(21);
    Mat a = random_mat(rng, 3, 2);
    Vec s(3);
    s << 2.0, -1.0, 0.5;
    check_gradients({a}, [&](Tape& t, const std::vector<Value>& v) {
        return t.sum(t.hadamard(t.scale_rows(v[0], s), v[0]));
    });
    Tape t;
    Mat out = t.val(t.scale_rows(t.leaf(a), s));
    CHECK(out(1, 0) == doctest::Approx(-a(1, 0)));
}

TEST_CASE("dropout: p=0 is identity, mask preserves expectation") {
    Tape t;
    Rng rng(22);
    Mat a = Mat::Ones(200, 10);
    Value v = t.leaf(a);
    Value d0 = t.dropout(v, 0.0, rng);
    CHECK(d0.id == v.id);
    Value d = t.dropout(v, 0.4, rng);
    const Mat& m = t.val(d);
    double mean = m.mean();
    CHECK(mean == doctest::Approx(1.0).epsilon(0.05));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double x = m.reshaped()(i);
        CHECK((x == 0.0 || x == doctest::Approx(1.0 / 0.6)));
    }
}

TEST_CASE("shape mismatches throw") {
    Tape t;
    Value a = t.leaf(Mat::Zero(2, 3));
    Value b = t.leaf(Mat::Zero(3, 2));
    CHECK_THROWS_AS((void)t.add(a, b), protab::ShapeMismatch);
    CHECK_THROWS_AS((void)t.matmul(a, a), protab::ShapeMismatch);
    CHECK_THROWS_AS((void)t.div_rows(a, b), protab::ShapeMismatch);
    CHECK_THROWS_AS((void)t.slice_rows(a, 1, 5), protab::ShapeMismatch);
    CHECK_THROWS(t.backward(a));  // non-scalar root
}

TEST_CASE("backward accumulates across reused subexpressions") {
    Tape t;
    Mat a(1, 1);
    a << 3.0;
    Value v = t.leaf(a);
    Value sq = t.hadamard(v, v);
    Value loss = t.add(sq, t.add(sq, v));  // 2 a^2 + a, d/da = 4a + 1
    t.backward(t.sum(loss));
    CHECK(t.grad(v)(0, 0) == doctest::Approx(13.0));
}
