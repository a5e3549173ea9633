#ifndef CSD_AUTOGRAD_HPP
#define CSD_AUTOGRAD_HPP

// Small reverse-mode automatic differentiation over dense row-major matrices.
// A Tape records one forward pass; backward() walks it in reverse and
// accumulates into Parameter::grad.

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csd::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Named parameter storage. Element addresses are stable across add().
class ParameterSet {
 public:
  int add(const std::string& name, Matrix init);
  Parameter& at(int id) { return params_.at(static_cast<std::size_t>(id)); }
  const Parameter& at(int id) const { return params_.at(static_cast<std::size_t>(id)); }
  /// -1 when absent.
  int find(std::string_view name) const;
  int size() const { return static_cast<int>(params_.size()); }
  std::size_t scalar_count() const;
  void zero_grad();
  /// Copies values of every parameter in `other` whose name matches one here
  /// with the same shape. Returns the number copied.
  int copy_matching(const ParameterSet& other, std::string_view prefix_here = {},
                    std::string_view prefix_other = {});

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
  std::map<std::string, int, std::less<>> index_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix m);
  Var param(Parameter& p);
  Var param(const Parameter& p);

  /// Seeds d(loss)/d(loss) = seed and propagates to every parameter leaf.
  void backward(Var loss, double seed = 1.0);

  bool recording() const { return record_; }
  const Matrix& value(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Matrix value, std::span<const Var> inputs, BackwardFn fn);
  /// Gradient buffer for a node, allocated as zeros on first use. Parameter
  /// leaves return the parameter's own gradient.
  Matrix& grad_ref(int id);

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    bool requires_grad = false;
    Matrix grad;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
  bool record_;
};

struct AttentionMask {
  bool causal = false;
  /// Per key position; empty means every key is visible.
  std::vector<bool> key_valid;
};

// Elementwise / linear algebra.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
/// a + broadcast of the 1 x n row b to every row.
Var add_row(Var a, Var b);
/// x W + b with W of shape (in, out) and b of shape (1, out).
Var linear(Var x, Var w, Var b);
Var relu(Var a);
/// Row-wise layer normalization with learned gain / bias rows.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Indexing and reshaping.
Var gather_rows(Var table, std::span<const int> ids);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Copy of base with row positions[i] replaced by row i of src.
Var replace_rows(Var base, std::span<const int> positions, Var src);
/// Row t = [x_t, x_{t+1}, ..., x_{t+k-1}] flattened; shape (L-k+1, k*d).
Var unfold(Var x, int k);
/// 1 x n column-wise maxima (first maximal row wins).
Var col_max(Var x);
/// 1 x n mean over the listed rows.
Var mean_rows(Var x, std::span<const int> rows);
/// Row vector divided by its sum.
Var normalize_sum(Var x);

// Attention. Heads are contiguous column blocks of q / k / v.
/// Softmax(q_h k_h^T / sqrt(d_h)) for every head, stacked: (heads * Lq) x Lk.
Var attention_probs(Var q, Var k, int heads, const AttentionMask& mask);
/// Head-wise P_h v_h concatenated back to Lq x d.
Var attention_apply(Var probs, Var v, int heads);

// Losses, all 1 x 1.
/// Sum over rows with target >= 0 of -log softmax(logits)[target].
Var cross_entropy(Var logits, std::span<const int> targets);
/// mean_j (target_j - x_j)^2 over a 1 x n row.
Var mse(Var x, const Matrix& target);
Var sum_all(Var x);

/// Row-wise numerically stable softmax of a plain matrix.
Matrix softmax_rows(const Matrix& logits);

}  // namespace csd::ag

#endif  // CSD_AUTOGRAD_HPP
