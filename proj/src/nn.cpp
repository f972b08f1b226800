#include "protab/nn.hpp"

#include <cmath>
#include <utility>

namespace protab::nn {

namespace {
Mat zeros_like(const Mat& m) { return Mat::Zero(m.rows(), m.cols()); }
}  // namespace

const Tape::Node& Tape::node(Value v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw Error("nn: invalid value handle");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::node(Value v) {
    return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

const Mat& Tape::grad(Value v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) {
        throw Error("nn: gradient not computed (call backward first)");
    }
    return n.grad;
}

void Tape::clear() {
    nodes_.clear();
    in_backward_ = false;
}

Value Tape::push(Mat val, std::function<void(Tape&, int)> back) {
    nodes_.push_back(Node{std::move(val), Mat(), std::move(back)});
    return Value{static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = zeros_like(n.val);
    return n.grad;
}

void Tape::check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeMismatch(std::string("nn: shape mismatch in ") + op);
    }
}

Value Tape::leaf(const Mat& v) { return push(v, nullptr); }
Value Tape::leaf(Mat&& v) { return push(std::move(v), nullptr); }

Value Tape::scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return leaf(std::move(m));
}

Value Tape::add(Value a, Value b) {
    check_same_shape(val(a), val(b), "add");
    Mat out = val(a) + val(b);
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Mat& g = t.grad_buf(self);
        t.grad_buf(a.id) += g;
        t.grad_buf(b.id) += g;
    });
}

Value Tape::sub(Value a, Value b) {
    check_same_shape(val(a), val(b), "sub");
    Mat out = val(a) - val(b);
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Mat& g = t.grad_buf(self);
        t.grad_buf(a.id) += g;
        t.grad_buf(b.id) -= g;
    });
}

Value Tape::neg(Value a) { return scale(a, -1.0); }

Value Tape::scale(Value a, double c) {
    Mat out = c * val(a);
    return push(std::move(out), [a, c](Tape& t, int self) {
        t.grad_buf(a.id) += c * t.grad_buf(self);
    });
}

Value Tape::add_const(Value a, double c) {
    Mat out = (val(a).array() + c).matrix();
    return push(std::move(out), [a](Tape& t, int self) {
        t.grad_buf(a.id) += t.grad_buf(self);
    });
}

Value Tape::rsub_const(double c, Value a) {
    Mat out = (c - val(a).array()).matrix();
    return push(std::move(out), [a](Tape& t, int self) {
        t.grad_buf(a.id) -= t.grad_buf(self);
    });
}

Value Tape::hadamard(Value a, Value b) {
    check_same_shape(val(a), val(b), "hadamard");
    Mat out = val(a).cwiseProduct(val(b));
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Mat& g = t.grad_buf(self);
        t.grad_buf(a.id) += g.cwiseProduct(t.val(b));
        t.grad_buf(b.id) += g.cwiseProduct(t.val(a));
    });
}

Value Tape::relu(Value a) {
    Mat out = val(a).cwiseMax(0.0);
    return push(std::move(out), [a](Tape& t, int self) {
        const Mat& x = t.val(a);
        t.grad_buf(a.id) += t.grad_buf(self).cwiseProduct(
            (x.array() > 0.0).cast<double>().matrix());
    });
}

Value Tape::tanh_(Value a) {
    Mat out = val(a).array().tanh().matrix();
    return push(std::move(out), [a](Tape& t, int self) {
        const Mat& y = t.val(Value{self});
        t.grad_buf(a.id) +=
            t.grad_buf(self).cwiseProduct((1.0 - y.array().square()).matrix());
    });
}

Value Tape::exp_(Value a) {
    Mat out = val(a).array().exp().matrix();
    return push(std::move(out), [a](Tape& t, int self) {
        t.grad_buf(a.id) += t.grad_buf(self).cwiseProduct(t.val(Value{self}));
    });
}

Value Tape::log_(Value a) {
    Mat out = val(a).array().log().matrix();
    return push(std::move(out), [a](Tape& t, int self) {
        t.grad_buf(a.id) += t.grad_buf(self).cwiseQuotient(t.val(a));
    });
}

Value Tape::abs_(Value a) {
    Mat out = val(a).cwiseAbs();
    return push(std::move(out), [a](Tape& t, int self) {
        const Mat sign = t.val(a).array().sign().matrix();
        t.grad_buf(a.id) += t.grad_buf(self).cwiseProduct(sign);
    });
}

Value Tape::add_row_broadcast(Value a, Value row) {
    const Mat& r = val(row);
    if (r.rows() != 1 || r.cols() != val(a).cols()) {
        throw ShapeMismatch("nn: add_row_broadcast expects 1 x cols(a)");
    }
    Mat out = val(a).rowwise() + r.row(0);
    return push(std::move(out), [a, row](Tape& t, int self) {
        const Mat& g = t.grad_buf(self);
        t.grad_buf(a.id) += g;
        t.grad_buf(row.id) += g.colwise().sum();
    });
}

Value Tape::scale_rows(Value a, const Vec& s) {
    if (s.size() != val(a).rows()) {
        throw ShapeMismatch("nn: scale_rows length mismatch");
    }
    Mat out = s.asDiagonal() * val(a);
    return push(std::move(out), [a, s](Tape& t, int self) {
        t.grad_buf(a.id) += s.asDiagonal() * t.grad_buf(self);
    });
}

Value Tape::dropout(Value a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw Error("nn: dropout rate must be < 1");
    const Mat& x = val(a);
    Mat mask(x.rows(), x.cols());
    const double keep = 1.0 - p;
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
        for (Eigen::Index j = 0; j < mask.cols(); ++j) {
            mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
    }
    Mat out = x.cwiseProduct(mask);
    return push(std::move(out), [a, mask](Tape& t, int self) {
        t.grad_buf(a.id) += t.grad_buf(self).cwiseProduct(mask);
    });
}

Value Tape::matmul(Value a, Value b) {
    if (val(a).cols() != val(b).rows()) {
        throw ShapeMismatch("nn: matmul inner dimensions differ");
    }
    Mat out = val(a) * val(b);
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Mat& g = t.grad_buf(self);
        t.grad_buf(a.id) += g * t.val(b).transpose();
        t.grad_buf(b.id) += t.val(a).transpose() * g;
    });
}

Value Tape::matmul_nt(Value a, Value b) {
    if (val(a).cols() != val(b).cols()) {
        throw ShapeMismatch("nn: matmul_nt column dimensions differ");
    }
    Mat out = val(a) * val(b).transpose();
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Mat& g = t.grad_buf(self);
        t.grad_buf(a.id) += g * t.val(b);
        t.grad_buf(b.id) += g.transpose() * t.val(a);
    });
}

Value Tape::gather_rows(Value a, std::vector<int> idx) {
    const Mat& x = val(a);
    Mat out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= x.rows()) {
            throw ShapeMismatch("nn: gather_rows index out of range");
        }
        out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    }
    return push(std::move(out), [a, idx = std::move(idx)](Tape& t, int self) {
        const Mat& g = t.grad_buf(self);
        Mat& ga = t.grad_buf(a.id);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        }
    });
}

Value Tape::slice_rows(Value a, int start, int len) {
    const Mat& x = val(a);
    if (start < 0 || len < 0 || start + len > x.rows()) {
        throw ShapeMismatch("nn: slice_rows out of range");
    }
    Mat out = x.middleRows(start, len);
    return push(std::move(out), [a, start, len](Tape& t, int self) {
        t.grad_buf(a.id).middleRows(start, len) += t.grad_buf(self);
    });
}

Value Tape::vstack(const std::vector<Value>& parts) {
    if (parts.empty()) throw Error("nn: vstack of nothing");
    Eigen::Index rows = 0;
    const Eigen::Index cols = val(parts[0]).cols();
    for (Value p : parts) {
        if (val(p).cols() != cols) throw ShapeMismatch("nn: vstack column mismatch");
        rows += val(p).rows();
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (Value p : parts) {
        out.middleRows(at, val(p).rows()) = val(p);
        at += val(p).rows();
    }
    return push(std::move(out), [parts](Tape& t, int self) {
        const Mat& g = t.grad_buf(self);
        Eigen::Index at = 0;
        for (Value p : parts) {
            const Eigen::Index r = t.val(p).rows();
            t.grad_buf(p.id) += g.middleRows(at, r);
            at += r;
        }
    });
}

Value Tape::concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw Error("nn: concat_cols of nothing");
    const Eigen::Index rows = val(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Value p : parts) {
        if (val(p).rows() != rows) throw ShapeMismatch("nn: concat_cols row mismatch");
        cols += val(p).cols();
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (Value p : parts) {
        out.middleCols(at, val(p).cols()) = val(p);
        at += val(p).cols();
    }
    return push(std::move(out), [parts](Tape& t, int self) {
        const Mat& g = t.grad_buf(self);
        Eigen::Index at = 0;
        for (Value p : parts) {
            const Eigen::Index c = t.val(p).cols();
            t.grad_buf(p.id) += g.middleCols(at, c);
            at += c;
        }
    });
}

Value Tape::detach(Value a) {
    Mat out = val(a);
    return push(std::move(out), nullptr);
}

Value Tape::row_norms(Value a, double eps) {
    const Mat& x = val(a);
    Mat out(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out(i, 0) = std::max(x.row(i).norm(), eps);
    }
    return push(std::move(out), [a, eps](Tape& t, int self) {
        const Mat& x = t.val(a);
        const Mat& g = t.grad_buf(self);
        Mat& ga = t.grad_buf(a.id);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double nrm = x.row(i).norm();
            if (nrm > eps) ga.row(i) += (g(i, 0) / nrm) * x.row(i);
        }
    });
}

Value Tape::div_rows(Value a, Value s) {
    const Mat& x = val(a);
    const Mat& d = val(s);
    if (d.rows() != x.rows() || d.cols() != 1) {
        throw ShapeMismatch("nn: div_rows expects n x 1 divisor");
    }
    Mat out = (x.array().colwise() / d.col(0).array()).matrix();
    return push(std::move(out), [a, s](Tape& t, int self) {
        const Mat& x = t.val(a);
        const Mat& d = t.val(s);
        const Mat& g = t.grad_buf(self);
        t.grad_buf(a.id) += (g.array().colwise() / d.col(0).array()).matrix();
        Mat& gs = t.grad_buf(s.id);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            gs(i, 0) -= g.row(i).dot(x.row(i)) / (d(i, 0) * d(i, 0));
        }
    });
}

Value Tape::softmax_rows(Value a) {
    const Mat& x = val(a);
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        out.row(i) = (x.row(i).array() - m).exp().matrix();
        out.row(i) /= out.row(i).sum();
    }
    return push(std::move(out), [a](Tape& t, int self) {
        const Mat& y = t.val(Value{self});
        const Mat& g = t.grad_buf(self);
        Mat& ga = t.grad_buf(a.id);
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            const double dot = g.row(i).dot(y.row(i));
            ga.row(i) += y.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
        }
    });
}

Value Tape::log_softmax_rows(Value a) {
    const Mat& x = val(a);
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        const double lse = m + std::log((x.row(i).array() - m).exp().sum());
        out.row(i) = (x.row(i).array() - lse).matrix();
    }
    return push(std::move(out), [a](Tape& t, int self) {
        const Mat& y = t.val(Value{self});
        const Mat& g = t.grad_buf(self);
        Mat& ga = t.grad_buf(a.id);
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            const double gsum = g.row(i).sum();
            ga.row(i) += g.row(i) - gsum * y.row(i).array().exp().matrix();
        }
    });
}

Value Tape::sum(Value a) {
    Mat out(1, 1);
    out(0, 0) = val(a).sum();
    return push(std::move(out), [a](Tape& t, int self) {
        t.grad_buf(a.id).array() += t.grad_buf(self)(0, 0);
    });
}

Value Tape::mean(Value a) {
    const double n = static_cast<double>(val(a).size());
    Mat out(1, 1);
    out(0, 0) = val(a).sum() / n;
    return push(std::move(out), [a, n](Tape& t, int self) {
        t.grad_buf(a.id).array() += t.grad_buf(self)(0, 0) / n;
    });
}

Value Tape::div11(Value a, Value b) {
    if (val(a).size() != 1 || val(b).size() != 1) {
        throw ShapeMismatch("nn: div11 expects scalars");
    }
    Mat out(1, 1);
    out(0, 0) = val(a)(0, 0) / val(b)(0, 0);
    return push(std::move(out), [a, b](Tape& t, int self) {
        const double g = t.grad_buf(self)(0, 0);
        const double av = t.val(a)(0, 0);
        const double bv = t.val(b)(0, 0);
        t.grad_buf(a.id)(0, 0) += g / bv;
        t.grad_buf(b.id)(0, 0) -= g * av / (bv * bv);
    });
}

Value Tape::pick_cols(Value a, std::vector<int> cols) {
    const Mat& x = val(a);
    if (static_cast<Eigen::Index>(cols.size()) != x.rows()) {
        throw ShapeMismatch("nn: pick_cols needs one column index per row");
    }
    Mat out(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int c = cols[static_cast<std::size_t>(i)];
        if (c < 0 || c >= x.cols()) throw LabelOutOfRange("nn: pick_cols index out of range");
        out(i, 0) = x(i, c);
    }
    return push(std::move(out), [a, cols = std::move(cols)](Tape& t, int self) {
        const Mat& g = t.grad_buf(self);
        Mat& ga = t.grad_buf(a.id);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            ga(i, cols[static_cast<std::size_t>(i)]) += g(i, 0);
        }
    });
}

Value Tape::mse_loss(Value pred, const Mat& target) {
    check_same_shape(val(pred), target, "mse_loss");
    const double n = static_cast<double>(target.size());
    Mat out(1, 1);
    out(0, 0) = (val(pred) - target).squaredNorm() / n;
    return push(std::move(out), [pred, target, n](Tape& t, int self) {
        const double g = t.grad_buf(self)(0, 0);
        t.grad_buf(pred.id) += (2.0 * g / n) * (t.val(pred) - target);
    });
}

Value Tape::bce_with_logits(Value logits, const std::vector<double>& y) {
    const Mat& z = val(logits);
    if (z.cols() != 1 || z.rows() != static_cast<Eigen::Index>(y.size())) {
        throw ShapeMismatch("nn: bce_with_logits expects n x 1 logits");
    }
    const double n = static_cast<double>(y.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double zi = z(i, 0);
        // softplus(z) - y z, evaluated stably
        loss += std::max(zi, 0.0) + std::log1p(std::exp(-std::abs(zi))) -
                y[static_cast<std::size_t>(i)] * zi;
    }
    Mat out(1, 1);
    out(0, 0) = loss / n;
    return push(std::move(out), [logits, y, n](Tape& t, int self) {
        const double g = t.grad_buf(self)(0, 0);
        const Mat& z = t.val(logits);
        Mat& gl = t.grad_buf(logits.id);
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-z(i, 0)));
            gl(i, 0) += g * (sig - y[static_cast<std::size_t>(i)]) / n;
        }
    });
}

void Tape::backward(Value root) {
    if (val(root).size() != 1) throw Error("nn: backward root must be scalar");
    if (in_backward_) throw Error("nn: backward re-entered");
    in_backward_ = true;
    for (int i = 0; i <= root.id; ++i) grad_buf(i);  // allocate zeros
    nodes_[static_cast<std::size_t>(root.id)].grad(0, 0) = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.back && n.grad.cwiseAbs().sum() != 0.0) n.back(*this, i);
    }
    in_backward_ = false;
}

Value cosine_similarity(Tape& t, Value a, Value b, double eps) {
    Value an = t.div_rows(a, t.row_norms(a, eps));
    Value bn = t.div_rows(b, t.row_norms(b, eps));
    return t.matmul_nt(an, bn);
}

}  // namespace protab::nn
