#include "csd/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace csd::ag {

int ParameterSet::add(const std::string& name, Matrix init) {
  if (index_.count(name) > 0) throw std::invalid_argument("duplicate parameter name: " + name);
  const int id = static_cast<int>(params_.size());
  Parameter p;
  p.name = name;
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  index_.emplace(name, id);
  return id;
}

int ParameterSet::find(std::string_view name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    } else {
      p.grad.setZero();
    }
  }
}

int ParameterSet::copy_matching(const ParameterSet& other, std::string_view prefix_here,
                                std::string_view prefix_other) {
  int copied = 0;
  for (const auto& src : other) {
    if (src.name.compare(0, prefix_other.size(), prefix_other) != 0) continue;
    const std::string name = std::string(prefix_here) + src.name.substr(prefix_other.size());
    const int id = find(name);
    if (id < 0) continue;
    auto& dst = at(id);
    if (dst.value.rows() != src.value.rows() || dst.value.cols() != src.value.cols()) continue;
    dst.value = src.value;
    ++copied;
  }
  return copied;
}

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix m) {
  Node n;
  n.value = std::move(m);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.external = &p.value;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.external != nullptr ? *n.external : n.value;
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& v : inputs) {
      if (v.tape != this) throw std::invalid_argument("operand recorded on a different tape");
      if (requires_grad(v.id)) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  const Matrix& v = n.external != nullptr ? *n.external : n.value;
  Matrix& g = n.param != nullptr ? n.param->grad : n.grad;
  if (g.rows() != v.rows() || g.cols() != v.cols()) g = Matrix::Zero(v.rows(), v.cols());
  return g;
}

void Tape::backward(Var loss, double seed) {
  if (loss.tape != this) throw std::invalid_argument("loss belongs to a different tape");
  if (!record_) throw std::logic_error("backward() on a tape that does not record gradients");
  if (!requires_grad(loss.id)) return;
  grad_ref(loss.id).array() += seed;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
    n.grad.resize(0, 0);
  }
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

bool needs(Tape& t, const Var& v) { return t.requires_grad(v.id); }

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul shape mismatch");
  Matrix out = a.value() * b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (needs(t, a)) t.grad_ref(a.id).noalias() += g * t.value(b.id).transpose();
    if (needs(t, b)) t.grad_ref(b.id).noalias() += t.value(a.id).transpose() * g;
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  Matrix out = a.value() + b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (needs(t, a)) t.grad_ref(a.id) += g;
    if (needs(t, b)) t.grad_ref(b.id) += g;
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  Matrix out = a.value() - b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (needs(t, a)) t.grad_ref(a.id) += g;
    if (needs(t, b)) t.grad_ref(b.id) -= g;
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.tape->push(std::move(out), {a}, [a, s](Tape& t, const Matrix& g) { t.grad_ref(a.id) += g * s; });
}

Var add_row(Var a, Var b) {
  require(b.rows() == 1 && b.cols() == a.cols(), "add_row shape mismatch");
  Matrix out = a.value().rowwise() + b.value().row(0);
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (needs(t, a)) t.grad_ref(a.id) += g;
    if (needs(t, b)) t.grad_ref(b.id) += g.colwise().sum();
  });
}

Var linear(Var x, Var w, Var b) {
  require(x.cols() == w.rows() && b.rows() == 1 && b.cols() == w.cols(), "linear shape mismatch");
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return x.tape->push(std::move(out), {x, w, b}, [x, w, b](Tape& t, const Matrix& g) {
    if (needs(t, x)) t.grad_ref(x.id).noalias() += g * t.value(w.id).transpose();
    if (needs(t, w)) t.grad_ref(w.id).noalias() += t.value(x.id).transpose() * g;
    if (needs(t, b)) t.grad_ref(b.id) += g.colwise().sum();
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.grad_ref(a.id).array() += (t.value(a.id).array() > 0.0).cast<double>() * g.array();
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Eigen::Index n = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == n && beta.rows() == 1 && beta.cols() == n, "layer_norm shape mismatch");
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd rstd(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * rstd(r);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return x.tape->push(std::move(out), {x, gamma, beta},
                      [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t, const Matrix& g) {
                        if (needs(t, gamma)) t.grad_ref(gamma.id) += (g.array() * xhat.array()).colwise().sum().matrix();
                        if (needs(t, beta)) t.grad_ref(beta.id) += g.colwise().sum();
                        if (!needs(t, x)) return;
                        Matrix& gx = t.grad_ref(x.id);
                        const auto gam = t.value(gamma.id).row(0).array();
                        for (Eigen::Index r = 0; r < g.rows(); ++r) {
                          const Eigen::ArrayXd dxhat = (g.row(r).array() * gam).transpose();
                          const Eigen::ArrayXd xh = xhat.row(r).array().transpose();
                          const double m1 = dxhat.mean();
                          const double m2 = (dxhat * xh).mean();
                          gx.row(r).array() += (rstd(r) * (dxhat - m1 - xh * m2)).transpose();
                        }
                      });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < tv.rows(), "gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return table.tape->push(std::move(out), {table}, [table, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix& gt = t.grad_ref(table.id);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.rows(), "slice_rows out of range");
  Matrix out = a.value().middleRows(begin, count);
  return a.tape->push(std::move(out), {a}, [a, begin, count](Tape& t, const Matrix& g) {
    t.grad_ref(a.id).middleRows(begin, count) += g;
  });
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.cols(), "slice_cols out of range");
  Matrix out = a.value().middleCols(begin, count);
  return a.tape->push(std::move(out), {a}, [a, begin, count](Tape& t, const Matrix& g) {
    t.grad_ref(a.id).middleCols(begin, count) += g;
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols needs at least one operand");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(out), parts, [ps](Tape& t, const Matrix& g) {
    Eigen::Index c0 = 0;
    for (const auto& p : ps) {
      const Eigen::Index w = t.value(p.id).cols();
      if (needs(t, p)) t.grad_ref(p.id) += g.middleCols(c0, w);
      c0 += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows needs at least one operand");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(out), parts, [ps](Tape& t, const Matrix& g) {
    Eigen::Index r0 = 0;
    for (const auto& p : ps) {
      const Eigen::Index h = t.value(p.id).rows();
      if (needs(t, p)) t.grad_ref(p.id) += g.middleRows(r0, h);
      r0 += h;
    }
  });
}

Var replace_rows(Var base, std::span<const int> positions, Var src) {
  require(static_cast<Eigen::Index>(positions.size()) == src.rows() && src.cols() == base.cols(),
          "replace_rows shape mismatch");
  std::vector<int> pos(positions.begin(), positions.end());
  {
    std::vector<int> sorted = pos;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "replace_rows positions repeat");
  }
  Matrix out = base.value();
  for (std::size_t i = 0; i < pos.size(); ++i) {
    require(pos[i] >= 0 && pos[i] < out.rows(), "replace_rows position out of range");
    out.row(pos[i]) = src.value().row(static_cast<Eigen::Index>(i));
  }
  return base.tape->push(std::move(out), {base, src}, [base, src, pos = std::move(pos)](Tape& t, const Matrix& g) {
    if (needs(t, base)) {
      Matrix& gb = t.grad_ref(base.id);
      gb += g;
      for (int p : pos) gb.row(p) -= g.row(p);
    }
    if (needs(t, src)) {
      Matrix& gs = t.grad_ref(src.id);
      for (std::size_t i = 0; i < pos.size(); ++i) gs.row(static_cast<Eigen::Index>(i)) += g.row(pos[i]);
    }
  });
}

Var unfold(Var x, int k) {
  require(k >= 1 && x.rows() >= k, "unfold window longer than the sequence");
  const Eigen::Index d = x.cols();
  const Eigen::Index rows = x.rows() - k + 1;
  Matrix out(rows, k * d);
  const Matrix& xv = x.value();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int j = 0; j < k; ++j) out.block(r, j * d, 1, d) = xv.row(r + j);
  }
  return x.tape->push(std::move(out), {x}, [x, k, d, rows](Tape& t, const Matrix& g) {
    Matrix& gx = t.grad_ref(x.id);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (int j = 0; j < k; ++j) gx.row(r + j) += g.block(r, j * d, 1, d);
    }
  });
}

Var col_max(Var x) {
  require(x.rows() >= 1, "col_max of an empty matrix");
  const Matrix& xv = x.value();
  Matrix out(1, xv.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(xv.cols()));
  for (Eigen::Index c = 0; c < xv.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < xv.rows(); ++r) {
      if (xv(r, c) > xv(best, c)) best = r;
    }
    arg[static_cast<std::size_t>(c)] = best;
    out(0, c) = xv(best, c);
  }
  return x.tape->push(std::move(out), {x}, [x, arg = std::move(arg)](Tape& t, const Matrix& g) {
    Matrix& gx = t.grad_ref(x.id);
    for (std::size_t c = 0; c < arg.size(); ++c) {
      gx(arg[c], static_cast<Eigen::Index>(c)) += g(0, static_cast<Eigen::Index>(c));
    }
  });
}

Var mean_rows(Var x, std::span<const int> rows) {
  require(!rows.empty(), "mean_rows needs at least one row");
  const Matrix& xv = x.value();
  Matrix out = Matrix::Zero(1, xv.cols());
  for (int r : rows) {
    require(r >= 0 && r < xv.rows(), "mean_rows index out of range");
    out += xv.row(r);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  out *= inv;
  std::vector<int> rs(rows.begin(), rows.end());
  return x.tape->push(std::move(out), {x}, [x, rs = std::move(rs), inv](Tape& t, const Matrix& g) {
    Matrix& gx = t.grad_ref(x.id);
    for (int r : rs) gx.row(r) += g * inv;
  });
}

Var normalize_sum(Var x) {
  require(x.rows() == 1, "normalize_sum expects a row vector");
  const double s = x.value().sum();
  require(s != 0.0, "normalize_sum of a zero-sum row");
  Matrix out = x.value() / s;
  Matrix y = out;
  return x.tape->push(std::move(out), {x}, [x, s, y = std::move(y)](Tape& t, const Matrix& g) {
    const double dot = (g.array() * y.array()).sum();
    t.grad_ref(x.id).array() += (g.array() - dot) / s;
  });
}

Var attention_probs(Var q, Var k, int heads, const AttentionMask& mask) {
  require(heads >= 1 && q.cols() == k.cols() && q.cols() % heads == 0, "attention head split mismatch");
  const Eigen::Index lq = q.rows();
  const Eigen::Index lk = k.rows();
  require(mask.key_valid.empty() || static_cast<Eigen::Index>(mask.key_valid.size()) == lk, "attention mask length");
  const Eigen::Index dh = q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index offset = lk - lq;
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  Matrix out(heads * lq, lk);
  for (int h = 0; h < heads; ++h) {
    Matrix s = qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose();
    s *= inv_sqrt;
    for (Eigen::Index i = 0; i < lq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < lk; ++j) {
        const bool visible = (mask.key_valid.empty() || mask.key_valid[static_cast<std::size_t>(j)]) &&
                             (!mask.causal || j <= i + offset);
        if (!visible) s(i, j) = -std::numeric_limits<double>::infinity();
        mx = std::max(mx, s(i, j));
      }
      auto row = out.row(h * lq + i);
      if (!std::isfinite(mx)) {
        row.setZero();
        continue;
      }
      double z = 0.0;
      for (Eigen::Index j = 0; j < lk; ++j) {
        const double e = std::isfinite(s(i, j)) ? std::exp(s(i, j) - mx) : 0.0;
        row(j) = e;
        z += e;
      }
      row /= z;
    }
  }
  Matrix p = out;
  return q.tape->push(std::move(out), {q, k}, [q, k, heads, dh, lq, inv_sqrt, p = std::move(p)](Tape& t, const Matrix& g) {
    const Matrix& qv2 = t.value(q.id);
    const Matrix& kv2 = t.value(k.id);
    for (int h = 0; h < heads; ++h) {
      const auto ph = p.middleRows(h * lq, lq);
      const auto gh = g.middleRows(h * lq, lq);
      const Eigen::VectorXd dots = (ph.array() * gh.array()).rowwise().sum();
      Matrix ds = ph.array() * (gh.array().colwise() - dots.array());
      ds *= inv_sqrt;
      if (needs(t, q)) t.grad_ref(q.id).middleCols(h * dh, dh).noalias() += ds * kv2.middleCols(h * dh, dh);
      if (needs(t, k)) t.grad_ref(k.id).middleCols(h * dh, dh).noalias() += ds.transpose() * qv2.middleCols(h * dh, dh);
    }
  });
}

Var attention_apply(Var probs, Var v, int heads) {
  require(heads >= 1 && v.cols() % heads == 0 && probs.rows() % heads == 0 && probs.cols() == v.rows(),
          "attention_apply shape mismatch");
  const Eigen::Index lq = probs.rows() / heads;
  const Eigen::Index dh = v.cols() / heads;
  const Matrix& pv = probs.value();
  const Matrix& vv = v.value();
  Matrix out(lq, v.cols());
  for (int h = 0; h < heads; ++h) {
    out.middleCols(h * dh, dh).noalias() = pv.middleRows(h * lq, lq) * vv.middleCols(h * dh, dh);
  }
  return probs.tape->push(std::move(out), {probs, v}, [probs, v, heads, lq, dh](Tape& t, const Matrix& g) {
    const Matrix& pv2 = t.value(probs.id);
    const Matrix& vv2 = t.value(v.id);
    for (int h = 0; h < heads; ++h) {
      const auto gh = g.middleCols(h * dh, dh);
      if (needs(t, probs)) t.grad_ref(probs.id).middleRows(h * lq, lq).noalias() += gh * vv2.middleCols(h * dh, dh).transpose();
      if (needs(t, v)) t.grad_ref(v.id).middleCols(h * dh, dh).noalias() += pv2.middleRows(h * lq, lq).transpose() * gh;
    }
  });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  require(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "cross_entropy target count");
  const Matrix& lv = logits.value();
  double loss = 0.0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const int tg = targets[static_cast<std::size_t>(r)];
    if (tg < 0) continue;
    require(tg < lv.cols(), "cross_entropy target out of range");
    const double mx = lv.row(r).maxCoeff();
    const double lse = mx + std::log((lv.row(r).array() - mx).exp().sum());
    loss += lse - lv(r, tg);
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  std::vector<int> tgs(targets.begin(), targets.end());
  return logits.tape->push(std::move(out), {logits}, [logits, tgs = std::move(tgs)](Tape& t, const Matrix& g) {
    const Matrix& lv2 = t.value(logits.id);
    Matrix& gl = t.grad_ref(logits.id);
    const double s = g(0, 0);
    for (Eigen::Index r = 0; r < lv2.rows(); ++r) {
      const int tg = tgs[static_cast<std::size_t>(r)];
      if (tg < 0) continue;
      const double mx = lv2.row(r).maxCoeff();
      Eigen::ArrayXd e = (lv2.row(r).array() - mx).exp().transpose();
      e /= e.sum();
      e(tg) -= 1.0;
      gl.row(r).array() += s * e.transpose();
    }
  });
}

Var mse(Var x, const Matrix& target) {
  require(x.rows() == target.rows() && x.cols() == target.cols() && x.value().size() > 0, "mse shape mismatch");
  const Matrix diff = x.value() - target;
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return x.tape->push(std::move(out), {x}, [x, diff, n](Tape& t, const Matrix& g) {
    t.grad_ref(x.id) += diff * (2.0 * g(0, 0) / n);
  });
}

Var sum_all(Var x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape->push(std::move(out), {x}, [x](Tape& t, const Matrix& g) { t.grad_ref(x.id).array() += g(0, 0); });
}

}  // namespace csd::ag
