#include "mtvrp/autodiff/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace mtvrp::ad {

namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RMat>;
using CMapM = Eigen::Map<const RMat>;

CMapM cmat(const Tensor& t) { return CMapM(t.data(), t.rows(), t.cols()); }
MapM mmat(Tensor& t) { return MapM(t.data(), t.rows(), t.cols()); }

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw std::invalid_argument("operands live on different tapes");
  return *a.tape;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Elementwise unary op; df(x, y) is dy/dx.
template <class F, class DF>
Var unary(OpKind kind, Var a, F f, DF df) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return t.record(kind, {a.id}, std::move(y), [df](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    if (!tp.requires_grad(in)) return;
    const Tensor& g = tp.grad_ref(self);
    const Tensor& xv = tp.value(in);
    const Tensor& yv = tp.value(self);
    Tensor& gx = tp.grad_buffer(in);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

void check_mask(const Tensor& x, const Mask& mask, const char* op) {
  if (!mask.empty() && mask.size() != x.size()) {
    throw ShapeError(std::string(op) + ": mask has " + std::to_string(mask.size()) + " entries for " +
                     shape_str(x.shape()));
  }
}

// Softmax over the unmasked entries of each row of x into p. Throws on an all-masked row.
void softmax_rows(const double* x, const std::uint8_t* mask, int rows, int cols, double* p, const char* op) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * cols;
    const std::uint8_t* mr = mask ? mask + static_cast<std::size_t>(r) * cols : nullptr;
    double* pr = p + static_cast<std::size_t>(r) * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cols; ++c) {
      if (!mr || mr[c]) mx = std::max(mx, xr[c]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw std::domain_error(std::string(op) + ": row " + std::to_string(r) + " has no unmasked entry");
    }
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      pr[c] = (!mr || mr[c]) ? std::exp(xr[c] - mx) : 0.0;
      s += pr[c];
    }
    const double inv = 1.0 / s;
    for (int c = 0; c < cols; ++c) pr[c] *= inv;
  }
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(t.value(a), t.value(b), "add");
  Tensor y = t.value(a);
  const Tensor& bv = t.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return t.record(OpKind::add, {a.id, b.id}, std::move(y), [](Tape& tp, int self) {
    const auto& in = tp.inputs(Var{&tp, self});
    const Tensor& g = tp.grad_ref(self);
    for (int id : in) {
      if (!tp.requires_grad(id)) continue;
      Tensor& gx = tp.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(t.value(a), t.value(b), "sub");
  Tensor y = t.value(a);
  const Tensor& bv = t.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return t.record(OpKind::sub, {a.id, b.id}, std::move(y), [](Tape& tp, int self) {
    const auto& in = tp.inputs(Var{&tp, self});
    const Tensor& g = tp.grad_ref(self);
    if (tp.requires_grad(in[0])) {
      Tensor& ga = tp.grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(in[1])) {
      Tensor& gb = tp.grad_buffer(in[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(t.value(a), t.value(b), "mul");
  Tensor y = t.value(a);
  const Tensor& bv = t.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return t.record(OpKind::mul, {a.id, b.id}, std::move(y), [](Tape& tp, int self) {
    const auto& in = tp.inputs(Var{&tp, self});
    const Tensor& g = tp.grad_ref(self);
    const Tensor& av = tp.value(in[0]);
    const Tensor& bv = tp.value(in[1]);
    if (tp.requires_grad(in[0])) {
      Tensor& ga = tp.grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(in[1])) {
      Tensor& gb = tp.grad_buffer(in[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary(OpKind::scale, a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var mul_const(Var a, const Tensor& c) {
  Tape& t = *a.tape;
  require_same_shape(t.value(a), c, "mul_const");
  Tensor y = t.value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= c[i];
  auto saved = std::make_shared<const Tensor>(c);
  return t.record(OpKind::mul_const, {a.id}, std::move(y), [saved](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    const Tensor& g = tp.grad_ref(self);
    Tensor& ga = tp.grad_buffer(in);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*saved)[i];
  });
}

Var relu(Var a) {
  return unary(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a, double c) {
  return unary(OpKind::tanh, a, [c](double x) { return c * std::tanh(x); },
               [c](double x, double) {
                 const double th = std::tanh(x);
                 return c * (1.0 - th * th);
               });
}

Var sigmoid(Var a) {
  return unary(OpKind::sigmoid, a,
               [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(OpKind::softplus, a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               [](double x, double) {
                 return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
               });
}

Var log(Var a) {
  return unary(OpKind::log, a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(OpKind::exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : t.value(a).values()) s += v;
  return t.record(OpKind::sum, {a.id}, Tensor::scalar(s), [](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    const double g = tp.grad_ref(self)[0];
    Tensor& ga = tp.grad_buffer(in);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  double s = 0.0;
  for (double v : x.values()) s += v;
  return t.record(OpKind::mean, {a.id}, Tensor::scalar(s / static_cast<double>(x.size())), [](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    Tensor& ga = tp.grad_buffer(in);
    const double g = tp.grad_ref(self)[0] / static_cast<double>(ga.size());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var linear(Var x, Var w, std::optional<Var> b) {
  Tape& t = same_tape(x, w);
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  require_matrix(xv, "linear");
  require_matrix(wv, "linear");
  if (xv.cols() != wv.cols()) {
    throw ShapeError("linear: input " + shape_str(xv.shape()) + " vs weight " + shape_str(wv.shape()));
  }
  Tensor y(Shape{xv.rows(), wv.rows()});
  mmat(y).noalias() = cmat(xv) * cmat(wv).transpose();
  std::vector<int> inputs = {x.id, w.id};
  if (b) {
    same_tape(x, *b);
    const Tensor& bv = t.value(*b);
    if (bv.rank() != 1 || bv.dim(0) != wv.rows()) {
      throw ShapeError("linear: bias " + shape_str(bv.shape()) + " for weight " + shape_str(wv.shape()));
    }
    auto ym = mmat(y);
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), bv.size());
    inputs.push_back(b->id);
  }
  return t.record(OpKind::linear, std::move(inputs), std::move(y), [](Tape& tp, int self) {
    const auto& in = tp.inputs(Var{&tp, self});
    const Tensor& g = tp.grad_ref(self);
    const auto gm = cmat(g);
    if (tp.requires_grad(in[0])) mmat(tp.grad_buffer(in[0])).noalias() += gm * cmat(tp.value(in[1]));
    if (tp.requires_grad(in[1])) mmat(tp.grad_buffer(in[1])).noalias() += gm.transpose() * cmat(tp.value(in[0]));
    if (in.size() > 2 && tp.requires_grad(in[2])) {
      Tensor& gb = tp.grad_buffer(in[2]);
      Eigen::Map<Eigen::RowVectorXd>(gb.data(), gb.size()) += gm.colwise().sum();
    }
  });
}

Var masked_softmax(Var logits, const Mask& mask) {
  Tape& t = *logits.tape;
  const Tensor& x = t.value(logits);
  require_matrix(x, "masked_softmax");
  check_mask(x, mask, "masked_softmax");
  Tensor p(x.shape());
  softmax_rows(x.data(), mask.empty() ? nullptr : mask.data(), x.rows(), x.cols(), p.data(), "masked_softmax");
  return t.record(OpKind::masked_softmax, {logits.id}, std::move(p), [](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    const Tensor& g = tp.grad_ref(self);
    const Tensor& p = tp.value(self);
    Tensor& gx = tp.grad_buffer(in);
    const int rows = p.rows(), cols = p.cols();
    for (int r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += p.at(r, c) * g.at(r, c);
      for (int c = 0; c < cols; ++c) gx.at(r, c) += p.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

Var masked_log_softmax(Var logits, const Mask& mask) {
  Tape& t = *logits.tape;
  const Tensor& x = t.value(logits);
  require_matrix(x, "masked_log_softmax");
  check_mask(x, mask, "masked_log_softmax");
  const int rows = x.rows(), cols = x.cols();
  Tensor y(x.shape());
  for (int r = 0; r < rows; ++r) {
    const std::uint8_t* mr = mask.empty() ? nullptr : mask.data() + static_cast<std::size_t>(r) * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cols; ++c) {
      if (!mr || mr[c]) mx = std::max(mx, x.at(r, c));
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw std::domain_error("masked_log_softmax: row " + std::to_string(r) + " has no unmasked entry");
    }
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      if (!mr || mr[c]) s += std::exp(x.at(r, c) - mx);
    }
    const double lse = mx + std::log(s);
    for (int c = 0; c < cols; ++c) {
      y.at(r, c) = (!mr || mr[c]) ? x.at(r, c) - lse : -std::numeric_limits<double>::infinity();
    }
  }
  return t.record(OpKind::masked_log_softmax, {logits.id}, std::move(y), [](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    const Tensor& g = tp.grad_ref(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad_buffer(in);
    const int rows = y.rows(), cols = y.cols();
    for (int r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (int c = 0; c < cols; ++c) {
        if (std::isfinite(y.at(r, c))) gs += g.at(r, c);
      }
      for (int c = 0; c < cols; ++c) {
        if (std::isfinite(y.at(r, c))) gx.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gs;
      }
    }
  });
}

Var attention(Var q, Var k, Var v, const Mask& mask, int heads) {
  Tape& t = same_tape(q, k);
  same_tape(q, v);
  const Tensor& qv = t.value(q);
  const Tensor& kv = t.value(k);
  const Tensor& vv = t.value(v);
  require_matrix(qv, "attention");
  require_matrix(kv, "attention");
  require_matrix(vv, "attention");
  const int rq = qv.rows(), rk = kv.rows(), d = qv.cols(), dv = vv.cols();
  if (heads <= 0 || d % heads != 0 || dv % heads != 0) {
    throw ShapeError("attention: model dims " + std::to_string(d) + "/" + std::to_string(dv) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  if (kv.cols() != d || vv.rows() != rk) {
    throw ShapeError("attention: q " + shape_str(qv.shape()) + ", k " + shape_str(kv.shape()) + ", v " +
                     shape_str(vv.shape()));
  }
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(rq) * rk) {
    throw ShapeError("attention: mask size " + std::to_string(mask.size()) + " for " + std::to_string(rq) + "x" +
                     std::to_string(rk) + " scores");
  }
  const int dh = d / heads, dvh = dv / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<std::vector<RMat>>(heads);
  Tensor out(Shape{rq, dv});
  auto om = mmat(out);
  const auto qm = cmat(qv), km = cmat(kv), vm = cmat(vv);
  for (int h = 0; h < heads; ++h) {
    RMat s = (qm.middleCols(h * dh, dh) * km.middleCols(h * dh, dh).transpose()) * inv_sqrt;
    RMat& p = (*probs)[h];
    p.resize(rq, rk);
    softmax_rows(s.data(), mask.empty() ? nullptr : mask.data(), rq, rk, p.data(), "attention");
    om.middleCols(h * dvh, dvh).noalias() = p * vm.middleCols(h * dvh, dvh);
  }
  return t.record(OpKind::attention, {q.id, k.id, v.id}, std::move(out),
                  [probs, heads, dh, dvh, inv_sqrt](Tape& tp, int self) {
                    const auto& in = tp.inputs(Var{&tp, self});
                    const auto gm = cmat(tp.grad_ref(self));
                    const auto qm = cmat(tp.value(in[0]));
                    const auto km = cmat(tp.value(in[1]));
                    const auto vm = cmat(tp.value(in[2]));
                    const bool gq = tp.requires_grad(in[0]), gk = tp.requires_grad(in[1]),
                               gv = tp.requires_grad(in[2]);
                    for (int h = 0; h < heads; ++h) {
                      const RMat& p = (*probs)[h];
                      const auto gh = gm.middleCols(h * dvh, dvh);
                      if (gv) mmat(tp.grad_buffer(in[2])).middleCols(h * dvh, dvh).noalias() += p.transpose() * gh;
                      if (!gq && !gk) continue;
                      RMat dp = gh * vm.middleCols(h * dvh, dvh).transpose();
                      const Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
                      RMat ds = (p.array() * (dp.colwise() - rowdot).array()).matrix() * inv_sqrt;
                      if (gq) mmat(tp.grad_buffer(in[0])).middleCols(h * dh, dh).noalias() += ds * km.middleCols(h * dh, dh);
                      if (gk) {
                        mmat(tp.grad_buffer(in[1])).middleCols(h * dh, dh).noalias() +=
                            ds.transpose() * qm.middleCols(h * dh, dh);
                      }
                    }
                  });
}

Var gather(Var x, std::span<const int> idx) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  require_matrix(xv, "gather");
  if (static_cast<int>(idx.size()) != xv.rows()) throw ShapeError("gather: one index per row required");
  Tensor y(Shape{xv.rows(), 1});
  auto saved = std::make_shared<std::vector<int>>(idx.begin(), idx.end());
  for (int r = 0; r < xv.rows(); ++r) {
    const int c = idx[r];
    if (c < 0 || c >= xv.cols()) throw std::out_of_range("gather: index out of range");
    y[r] = xv.at(r, c);
  }
  return t.record(OpKind::gather, {x.id}, std::move(y), [saved](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    const Tensor& g = tp.grad_ref(self);
    Tensor& gx = tp.grad_buffer(in);
    for (std::size_t r = 0; r < saved->size(); ++r) gx.at(static_cast<int>(r), (*saved)[r]) += g[r];
  });
}

Var gather_rows(Var x, std::span<const int> idx) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  require_matrix(xv, "gather_rows");
  const int c = xv.cols();
  Tensor y(Shape{static_cast<int>(idx.size()), c});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= xv.rows()) throw std::out_of_range("gather_rows: index out of range");
    std::copy_n(xv.data() + static_cast<std::size_t>(idx[i]) * c, c, y.data() + i * c);
  }
  auto saved = std::make_shared<std::vector<int>>(idx.begin(), idx.end());
  return t.record(OpKind::gather_rows, {x.id}, std::move(y), [saved](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    const Tensor& g = tp.grad_ref(self);
    Tensor& gx = tp.grad_buffer(in);
    const int c = gx.cols();
    for (std::size_t i = 0; i < saved->size(); ++i) {
      double* dst = gx.data() + static_cast<std::size_t>((*saved)[i]) * c;
      const double* src = g.data() + i * c;
      for (int j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = *parts[0].tape;
  const int rows = t.value(parts[0]).rows();
  int total = 0;
  std::vector<int> ids;
  for (Var p : parts) {
    same_tape(parts[0], p);
    const Tensor& v = t.value(p);
    require_matrix(v, "concat_cols");
    if (v.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    total += v.cols();
    ids.push_back(p.id);
  }
  Tensor y(Shape{rows, total});
  int off = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    for (int r = 0; r < rows; ++r) std::copy_n(v.data() + static_cast<std::size_t>(r) * v.cols(), v.cols(), &y.at(r, off));
    off += v.cols();
  }
  return t.record(OpKind::concat_cols, std::move(ids), std::move(y), [](Tape& tp, int self) {
    const auto& in = tp.inputs(Var{&tp, self});
    const Tensor& g = tp.grad_ref(self);
    int off = 0;
    for (int id : in) {
      const int c = tp.value(id).cols();
      if (tp.requires_grad(id)) {
        Tensor& gx = tp.grad_buffer(id);
        for (int r = 0; r < g.rows(); ++r) {
          for (int j = 0; j < c; ++j) gx.at(r, j) += g.at(r, off + j);
        }
      }
      off += c;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = *parts[0].tape;
  const int cols = t.value(parts[0]).cols();
  int total = 0;
  std::vector<int> ids;
  for (Var p : parts) {
    same_tape(parts[0], p);
    const Tensor& v = t.value(p);
    require_matrix(v, "concat_rows");
    if (v.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    total += v.rows();
    ids.push_back(p.id);
  }
  Tensor y(Shape{total, cols});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    std::copy_n(v.data(), v.size(), y.data() + off);
    off += v.size();
  }
  return t.record(OpKind::concat_rows, std::move(ids), std::move(y), [](Tape& tp, int self) {
    const auto& in = tp.inputs(Var{&tp, self});
    const Tensor& g = tp.grad_ref(self);
    std::size_t off = 0;
    for (int id : in) {
      const std::size_t n = tp.value(id).size();
      if (tp.requires_grad(id)) {
        Tensor& gx = tp.grad_buffer(id);
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var mean_rows(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  require_matrix(xv, "mean_rows");
  Tensor y(Shape{1, xv.cols()});
  Eigen::Map<Eigen::RowVectorXd>(y.data(), y.size()) = cmat(xv).colwise().mean();
  return t.record(OpKind::mean_rows, {x.id}, std::move(y), [](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    const Tensor& g = tp.grad_ref(self);
    Tensor& gx = tp.grad_buffer(in);
    const double inv = 1.0 / gx.rows();
    for (int r = 0; r < gx.rows(); ++r) {
      for (int c = 0; c < gx.cols(); ++c) gx.at(r, c) += g[c] * inv;
    }
  });
}

Var repeat_rows(Var x, int n) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  if (xv.rank() != 2 || xv.rows() != 1) throw ShapeError("repeat_rows: expected [1, C], got " + shape_str(xv.shape()));
  Tensor y(Shape{n, xv.cols()});
  for (int r = 0; r < n; ++r) std::copy_n(xv.data(), xv.cols(), &y.at(r, 0));
  return t.record(OpKind::repeat_rows, {x.id}, std::move(y), [](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    const Tensor& g = tp.grad_ref(self);
    Tensor& gx = tp.grad_buffer(in);
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < g.cols(); ++c) gx[c] += g.at(r, c);
    }
  });
}

Var col(Var x, int j) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  require_matrix(xv, "col");
  if (j < 0 || j >= xv.cols()) throw std::out_of_range("col: column out of range");
  Tensor y(Shape{xv.rows(), 1});
  for (int r = 0; r < xv.rows(); ++r) y[r] = xv.at(r, j);
  return t.record(OpKind::col, {x.id}, std::move(y), [j](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    const Tensor& g = tp.grad_ref(self);
    Tensor& gx = tp.grad_buffer(in);
    for (int r = 0; r < gx.rows(); ++r) gx.at(r, j) += g[r];
  });
}

Var scale_rows(Var x, Var s) {
  Tape& t = same_tape(x, s);
  const Tensor& xv = t.value(x);
  const Tensor& sv = t.value(s);
  require_matrix(xv, "scale_rows");
  if (sv.size() != static_cast<std::size_t>(xv.rows())) {
    throw ShapeError("scale_rows: " + shape_str(sv.shape()) + " scales for " + shape_str(xv.shape()));
  }
  Tensor y = xv;
  auto ym = mmat(y);
  for (int r = 0; r < xv.rows(); ++r) ym.row(r) *= sv[r];
  return t.record(OpKind::scale_rows, {x.id, s.id}, std::move(y), [](Tape& tp, int self) {
    const auto& in = tp.inputs(Var{&tp, self});
    const Tensor& g = tp.grad_ref(self);
    const Tensor& xv = tp.value(in[0]);
    const Tensor& sv = tp.value(in[1]);
    const auto gm = cmat(g);
    if (tp.requires_grad(in[0])) {
      auto gx = mmat(tp.grad_buffer(in[0]));
      for (int r = 0; r < g.rows(); ++r) gx.row(r) += gm.row(r) * sv[r];
    }
    if (tp.requires_grad(in[1])) {
      Tensor& gs = tp.grad_buffer(in[1]);
      const auto xm = cmat(xv);
      for (int r = 0; r < g.rows(); ++r) gs[r] += gm.row(r).dot(xm.row(r));
    }
  });
}

Var row_normalize(Var x, double eps) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  require_matrix(xv, "row_normalize");
  Tensor y = xv;
  auto ym = mmat(y);
  for (int r = 0; r < xv.rows(); ++r) ym.row(r) /= std::max(ym.row(r).sum(), eps);
  return t.record(OpKind::row_normalize, {x.id}, std::move(y), [eps](Tape& tp, int self) {
    const int in = tp.inputs(Var{&tp, self})[0];
    const auto gm = cmat(tp.grad_ref(self));
    const auto xm = cmat(tp.value(in));
    auto gx = mmat(tp.grad_buffer(in));
    for (int r = 0; r < xm.rows(); ++r) {
      const double s = xm.row(r).sum();
      if (s > eps) {
        gx.row(r).array() += gm.row(r).array() / s - gm.row(r).dot(xm.row(r)) / (s * s);
      } else {
        // Clamped denominator is a constant.
        gx.row(r).array() += gm.row(r).array() / eps;
      }
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& xv = t.value(x);
  const Tensor& gv = t.value(gamma);
  const Tensor& bv = t.value(beta);
  require_matrix(xv, "layer_norm");
  const int rows = xv.rows(), cols = xv.cols();
  if (gv.size() != static_cast<std::size_t>(cols) || bv.size() != static_cast<std::size_t>(cols)) {
    throw ShapeError("layer_norm: affine parameters do not match " + shape_str(xv.shape()));
  }
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  Tensor y(xv.shape());
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += xv.at(r, c);
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (xv.at(r, c) - mu) * (xv.at(r, c) - mu);
    var /= cols;
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (int c = 0; c < cols; ++c) {
      const double h = (xv.at(r, c) - mu) * rs;
      xhat->at(r, c) = h;
      y.at(r, c) = h * gv[c] + bv[c];
    }
  }
  return t.record(OpKind::layer_norm, {x.id, gamma.id, beta.id}, std::move(y), [xhat, rstd](Tape& tp, int self) {
    const auto& in = tp.inputs(Var{&tp, self});
    const Tensor& g = tp.grad_ref(self);
    const Tensor& gv = tp.value(in[1]);
    const int rows = g.rows(), cols = g.cols();
    if (tp.requires_grad(in[1])) {
      Tensor& gg = tp.grad_buffer(in[1]);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) gg[c] += g.at(r, c) * xhat->at(r, c);
      }
    }
    if (tp.requires_grad(in[2])) {
      Tensor& gb = tp.grad_buffer(in[2]);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) gb[c] += g.at(r, c);
      }
    }
    if (tp.requires_grad(in[0])) {
      Tensor& gx = tp.grad_buffer(in[0]);
      std::vector<double> dh(cols);
      for (int r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (int c = 0; c < cols; ++c) {
          dh[c] = g.at(r, c) * gv[c];
          m1 += dh[c];
          m2 += dh[c] * xhat->at(r, c);
        }
        m1 /= cols;
        m2 /= cols;
        for (int c = 0; c < cols; ++c) gx.at(r, c) += (*rstd)[r] * (dh[c] - m1 - xhat->at(r, c) * m2);
      }
    }
  });
}

}  // namespace mtvrp::ad
