#pragma once

// Reverse-mode automatic differentiation over Eigen matrices.
//
// A Tape owns the computation graph of one forward pass. Nodes are created
// in topological order, so backward() is a single reverse sweep. Parameters
// live outside the tape as plain matrices; each training step registers them
// as leaves, builds the step's graph, runs backward, and reads the gradients
// off the leaves. Losses and model forwards are compositions of the
// primitives below, each with a hand-derived adjoint; finite-difference
// checks in the test suite cover every primitive through the public losses.

#include <functional>
#include <vector>

#include "protab/common.hpp"

namespace protab::nn {

struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Value leaf(const Mat& v);
    Value leaf(Mat&& v);
    Value scalar(double v);  // 1x1 leaf

    const Mat& val(Value v) const { return node(v).val; }
    const Mat& grad(Value v) const;

    int size() const { return static_cast<int>(nodes_.size()); }
    void clear();

    // Elementwise / broadcast
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value neg(Value a);
    Value scale(Value a, double c);
    Value add_const(Value a, double c);
    Value rsub_const(double c, Value a);  // c - a
    Value hadamard(Value a, Value b);
    Value relu(Value a);
    Value tanh_(Value a);
    Value exp_(Value a);
    Value log_(Value a);
    Value abs_(Value a);
    Value add_row_broadcast(Value a, Value row);     // a(n,m) + row(1,m)
    Value scale_rows(Value a, const Vec& s);         // row i scaled by s[i] (constant)
    Value dropout(Value a, double p, Rng& rng);      // inverted dropout mask

    // Linear algebra
    Value matmul(Value a, Value b);     // a * b
    Value matmul_nt(Value a, Value b);  // a * b^T

    // Rows / shape
    Value gather_rows(Value a, std::vector<int> idx);  // also embedding lookup
    Value slice_rows(Value a, int start, int len);
    Value vstack(const std::vector<Value>& parts);
    Value concat_cols(const std::vector<Value>& parts);
    Value detach(Value a);  // identity forward, zero backward

    // Rowwise norms / normalization
    Value row_norms(Value a, double eps);  // n x 1, max(||row||_2, eps)
    Value div_rows(Value a, Value s);      // a(n,m) / s(n,1) broadcast

    // Softmax family (rowwise, max-subtracted)
    Value softmax_rows(Value a);
    Value log_softmax_rows(Value a);

    // Reductions / scalars
    Value sum(Value a);                        // 1x1
    Value mean(Value a);                       // 1x1
    Value div11(Value a, Value b);             // both 1x1
    Value pick_cols(Value a, std::vector<int> cols);  // n x 1: a(i, cols[i])

    // Losses
    Value mse_loss(Value pred, const Mat& target);              // mean squared error
    Value bce_with_logits(Value logits, const std::vector<double>& y);  // logits n x 1

    void backward(Value root);  // root must be 1x1

  private:
    struct Node {
        Mat val;
        Mat grad;
        std::function<void(Tape&, int)> back;  // pushes grad into parents
    };

    const Node& node(Value v) const;
    Node& node(Value v);
    Value push(Mat val, std::function<void(Tape&, int)> back);
    Mat& grad_buf(int id);

    static void check_same_shape(const Mat& a, const Mat& b, const char* op);

    std::vector<Node> nodes_;
    bool in_backward_ = false;
};

// Cosine similarity matrix between rows of a and rows of b, with norm
// clamping at eps: sim(i,j) = <a_i, b_j> / (max(||a_i||,eps) * max(||b_j||,eps)).
Value cosine_similarity(Tape& t, Value a, Value b, double eps);

}  // namespace protab::nn
