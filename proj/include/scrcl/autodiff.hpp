#pragma once

#include "scrcl/matrix.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace scrcl::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
  public:
    Var() = default;

    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    /// Value of a 1x1 node.
    double scalar() const;

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

  private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode recording of matrix-valued operations.
///
/// Nodes are appended in evaluation order, so node ids already form a
/// topological order; backward() walks them once from the root down.
class Tape {
  public:
    /// Receives the gradient flowing into the node and pushes contributions
    /// into its parents with accumulate().
    using BackwardFn = std::function<void(Tape&, std::size_t self, const Matrix& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that receives a gradient.
    Var variable(Matrix value);
    /// Leaf that never receives a gradient.
    Var constant(Matrix value);

    /// Records an interior node. `backward` is only kept when some parent
    /// requires a gradient.
    Var record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward);

    /// Populates gradients of the 1x1 `root` w.r.t. every node it reaches.
    void backward(Var root);

    /// d(root)/d(v) after backward(); zero when v was not reached.
    Matrix gradient(Var v) const;

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    void accumulate(std::size_t id, const Matrix& contribution);

    /// True when `input` is an ancestor of (or equal to) `output`.
    bool depends_on(Var output, Var input) const;

    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::vector<std::size_t> parents;
        BackwardFn backward;
    };

    Var push(Node node);

    std::vector<Node> nodes_;
};

// Primitives. Each one is registered with its own backward rule and covered
// by the finite-difference property test.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
/// Elementwise a / b.
Var divide(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
/// Adds a 1 x cols row vector to every row.
Var add_row_broadcast(Var a, Var row);
Var relu(Var a);
Var square(Var a);
Var softmax_rows(Var a);
Var softmax_cols(Var a);
/// 1x1 sum of all entries.
Var sum(Var a);
Var mean(Var a);
/// rows x 1 sums.
Var row_sum(Var a);
/// Divides each row by max(||row||, floor).
Var row_normalize(Var a, double floor = 1e-12);
/// [a | b].
Var concat_cols(Var a, Var b);

/// Row-matched symmetric KL: out_i = SKL(p_i, q_i), rows x 1.
Var skl_rows(Var p, Var q);
/// All-pairs symmetric KL: out_ij = SKL(p_i, q_j), rows(p) x rows(q).
Var skl_pairwise(Var p, Var q);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double f, Var a) { return scale(a, f); }

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t param = 0;
    Index row = 0;
    Index col = 0;
};

/// Builds a scalar on the given tape from parameter leaves.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares reverse-mode gradients of `f` with central differences.
/// Error per entry is |analytic - numeric| / (|numeric| + 1e-8).
/// Throws NumericError naming the parameter when a perturbed loss is not finite.
GradCheckResult grad_check(const ScalarFn& f, std::vector<Matrix> params, double step);

}  // namespace scrcl::ad
