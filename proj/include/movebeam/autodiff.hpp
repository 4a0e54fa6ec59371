#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "movebeam/linalg.hpp"
#include "movebeam/signal.hpp"
#include "movebeam/tensor.hpp"

// Reverse-mode autodiff over dense double tensors. Complex data lives in a
// trailing (real, imag) axis of size 2; complex gradients follow the
// convention g = dL/d(re) + i dL/d(im), which reduces Wirtinger calculus to
// real-pair arithmetic for the matrix identities used here.
namespace movebeam::ad {

static_assert(alignof(std::complex<double>) == alignof(double));

struct Node {
  Tensor value;
  Tensor grad;  // allocated only when needs_grad
  bool needs_grad = false;
  long index = 0;  // creation order; parents always precede children
  std::vector<Node*> parents;
  std::function<void(Node&)> backward_fn;
  Shape shape() const { return node_shape; }
  Shape node_shape;

  std::complex<double>* cvalue() { return reinterpret_cast<std::complex<double>*>(value.data()); }
  const std::complex<double>* cvalue() const {
    return reinterpret_cast<const std::complex<double>*>(value.data());
  }
  std::complex<double>* cgrad() { return reinterpret_cast<std::complex<double>*>(grad.data()); }
};

// Owns the nodes of one computation. Creation order is a topological order,
// so backward() is a reverse sweep; accumulation order is deterministic.
class Graph {
 public:
  Node* constant(Tensor v) { return make_node(std::move(v), {}, nullptr, false); }

  Node* input(Tensor v) { return make_node(std::move(v), {}, nullptr, true); }

  Node* make(Tensor value, std::vector<Node*> parents, std::function<void(Node&)> bw) {
    bool needs = false;
    for (Node* p : parents) needs = needs || p->needs_grad;
    return make_node(std::move(value), std::move(parents), needs ? std::move(bw) : nullptr, needs);
  }

  void backward(Node* loss) {
    if (backward_ran_) throw std::runtime_error("backward: already run on this graph (reset required)");
    if (loss->value.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    backward_ran_ = true;
    if (!loss->needs_grad) return;
    loss->grad[0] = 1.0;
    // Reverse sweep from the loss; nodes created after it cannot feed it.
    for (long i = loss->index; i >= 0; --i) {
      Node& n = *nodes_[(size_t)i];
      if (n.needs_grad && n.backward_fn) n.backward_fn(n);
    }
  }

  size_t num_nodes() const { return nodes_.size(); }

 private:
  Node* make_node(Tensor value, std::vector<Node*> parents, std::function<void(Node&)> bw,
                  bool needs_grad) {
    auto n = std::make_unique<Node>();
    n->node_shape = value.shape();
    n->value = std::move(value);
    n->needs_grad = needs_grad;
    n->index = (long)nodes_.size();
    if (needs_grad) n->grad = Tensor(n->node_shape);
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
    nodes_.push_back(std::move(n));
    return nodes_.back().get();
  }

  std::vector<std::unique_ptr<Node>> nodes_;
  bool backward_ran_ = false;
};

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RMat>;
using MMap = Eigen::Map<RMat>;

namespace opdetail {

inline bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  for (size_t i = 0; i < small.size(); ++i)
    if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
  return true;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Split [..., M, N, 2] into (batch, M, N).
inline void complex_matrix_dims(const Shape& s, long& batch, long& m, long& n, const char* op) {
  require(s.size() >= 3 && s.back() == 2, std::string(op) + ": expected [..., M, N, 2] complex tensor");
  m = s[s.size() - 3];
  n = s[s.size() - 2];
  batch = 1;
  for (size_t i = 0; i + 3 < s.size(); ++i) batch *= s[i];
}

}  // namespace opdetail

// ---- elementwise and shape ops ----

inline Node* add(Graph& g, Node* a, Node* b) {
  opdetail::require(opdetail::is_suffix(a->value.shape(), b->value.shape()),
                    "add: rhs shape must equal lhs shape or a trailing suffix of it");
  Tensor out = a->value;
  const long bn = b->value.size();
  for (long i = 0; i < out.size(); ++i) out[i] += b->value[i % bn];
  return g.make(std::move(out), {a, b}, [a, b, bn](Node& n) {
    if (a->needs_grad)
      for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    if (b->needs_grad)
      for (long i = 0; i < n.grad.size(); ++i) b->grad[i % bn] += n.grad[i];
  });
}

inline Node* sub(Graph& g, Node* a, Node* b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor out = a->value;
  for (long i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return g.make(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->needs_grad)
      for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    if (b->needs_grad)
      for (long i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
  });
}

inline Node* mul(Graph& g, Node* a, Node* b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor out = a->value;
  for (long i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return g.make(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->needs_grad)
      for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->value[i];
    if (b->needs_grad)
      for (long i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->value[i];
  });
}

inline Node* scale(Graph& g, Node* a, double s) {
  Tensor out = a->value;
  for (long i = 0; i < out.size(); ++i) out[i] *= s;
  return g.make(std::move(out), {a}, [a, s](Node& n) {
    for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += s * n.grad[i];
  });
}

inline Node* reshape(Graph& g, Node* a, Shape shape) {
  Tensor out = a->value.reshaped(shape);
  return g.make(std::move(out), {a}, [a](Node& n) {
    for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
  });
}

inline Node* relu(Graph& g, Node* a) {
  Tensor out = a->value;
  for (long i = 0; i < out.size(); ++i) out[i] = out[i] > 0 ? out[i] : 0.0;
  return g.make(std::move(out), {a}, [a](Node& n) {
    for (long i = 0; i < n.grad.size(); ++i)
      if (a->value[i] > 0) a->grad[i] += n.grad[i];
  });
}

inline Node* clamp_min(Graph& g, Node* a, double floor) {
  Tensor out = a->value;
  for (long i = 0; i < out.size(); ++i) out[i] = std::max(out[i], floor);
  return g.make(std::move(out), {a}, [a, floor](Node& n) {
    for (long i = 0; i < n.grad.size(); ++i)
      if (a->value[i] > floor) a->grad[i] += n.grad[i];
  });
}

inline Node* log_op(Graph& g, Node* a) {
  Tensor out = a->value;
  for (long i = 0; i < out.size(); ++i) {
    if (!(out[i] > 0)) throw std::invalid_argument("log: input must be positive");
    out[i] = std::log(out[i]);
  }
  return g.make(std::move(out), {a}, [a](Node& n) {
    for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] / a->value[i];
  });
}

inline Node* sum_all(Graph& g, Node* a) {
  double s = 0;
  for (long i = 0; i < a->value.size(); ++i) s += a->value[i];
  return g.make(Tensor({1}, {s}), {a}, [a](Node& n) {
    for (long i = 0; i < a->grad.size(); ++i) a->grad[i] += n.grad[0];
  });
}

inline Node* mean_all(Graph& g, Node* a) {
  return scale(g, sum_all(g, a), 1.0 / (double)a->value.size());
}

inline Node* sum_axis(Graph& g, Node* a, long axis) {
  const Shape& s = a->value.shape();
  opdetail::require(axis >= 0 && axis < (long)s.size(), "sum_axis: axis out of range");
  long outer = 1, inner = 1;
  for (long i = 0; i < axis; ++i) outer *= s[(size_t)i];
  for (long i = axis + 1; i < (long)s.size(); ++i) inner *= s[(size_t)i];
  const long mid = s[(size_t)axis];
  Shape os;
  for (long i = 0; i < (long)s.size(); ++i)
    if (i != axis) os.push_back(s[(size_t)i]);
  Tensor out(os);
  for (long o = 0; o < outer; ++o)
    for (long m = 0; m < mid; ++m)
      for (long i = 0; i < inner; ++i)
        out[o * inner + i] += a->value[(o * mid + m) * inner + i];
  return g.make(std::move(out), {a}, [a, outer, mid, inner](Node& n) {
    for (long o = 0; o < outer; ++o)
      for (long m = 0; m < mid; ++m)
        for (long i = 0; i < inner; ++i)
          a->grad[(o * mid + m) * inner + i] += n.grad[o * inner + i];
  });
}

// ---- matrix ops (rank 2) ----

inline Node* matmul(Graph& g, Node* a, Node* b) {
  opdetail::require(a->value.rank() == 2 && b->value.rank() == 2, "matmul: rank-2 operands required");
  const long M = a->value.dim(0), K = a->value.dim(1), K2 = b->value.dim(0), N = b->value.dim(1);
  opdetail::require(K == K2, "matmul: inner dimensions differ");
  Tensor out({M, N});
  MMap(out.data(), M, N) = CMap(a->value.data(), M, K) * CMap(b->value.data(), K, N);
  return g.make(std::move(out), {a, b}, [a, b, M, K, N](Node& n) {
    CMap G(n.grad.data(), M, N);
    if (a->needs_grad)
      MMap(a->grad.data(), M, K) += G * CMap(b->value.data(), K, N).transpose();
    if (b->needs_grad)
      MMap(b->grad.data(), K, N) += CMap(a->value.data(), M, K).transpose() * G;
  });
}

inline Node* transpose2(Graph& g, Node* a) {
  opdetail::require(a->value.rank() == 2, "transpose: rank-2 operand required");
  const long M = a->value.dim(0), N = a->value.dim(1);
  Tensor out({N, M});
  for (long i = 0; i < M; ++i)
    for (long j = 0; j < N; ++j) out[j * M + i] = a->value[i * N + j];
  return g.make(std::move(out), {a}, [a, M, N](Node& n) {
    for (long i = 0; i < M; ++i)
      for (long j = 0; j < N; ++j) a->grad[i * N + j] += n.grad[j * M + i];
  });
}

inline Node* slice_last(Graph& g, Node* a, long start, long len) {
  const Shape& s = a->value.shape();
  opdetail::require(!s.empty(), "slice_last: scalar input");
  const long D = s.back();
  opdetail::require(start >= 0 && len > 0 && start + len <= D, "slice_last: range out of bounds");
  const long rows = a->value.size() / D;
  Shape os = s;
  os.back() = len;
  Tensor out(os);
  for (long r = 0; r < rows; ++r)
    for (long j = 0; j < len; ++j) out[r * len + j] = a->value[r * D + start + j];
  return g.make(std::move(out), {a}, [a, D, rows, start, len](Node& n) {
    for (long r = 0; r < rows; ++r)
      for (long j = 0; j < len; ++j) a->grad[r * D + start + j] += n.grad[r * len + j];
  });
}

inline Node* concat_last(Graph& g, const std::vector<Node*>& parts) {
  opdetail::require(!parts.empty(), "concat_last: no inputs");
  Shape lead = parts[0]->value.shape();
  opdetail::require(!lead.empty(), "concat_last: scalar input");
  lead.pop_back();
  long total = 0;
  for (Node* p : parts) {
    Shape l = p->value.shape();
    opdetail::require(!l.empty(), "concat_last: scalar input");
    long d = l.back();
    l.pop_back();
    opdetail::require(l == lead, "concat_last: leading dimensions differ");
    total += d;
  }
  long rows = 1;
  for (long d : lead) rows *= d;
  Shape os = lead;
  os.push_back(total);
  Tensor out(os);
  long off = 0;
  for (Node* p : parts) {
    long d = p->value.shape().back();
    for (long r = 0; r < rows; ++r)
      for (long j = 0; j < d; ++j) out[r * total + off + j] = p->value[r * d + j];
    off += d;
  }
  auto parts_copy = parts;
  return g.make(std::move(out), parts_copy, [parts_copy, rows, total](Node& n) {
    long off = 0;
    for (Node* p : parts_copy) {
      long d = p->value.shape().back();
      if (p->needs_grad)
        for (long r = 0; r < rows; ++r)
          for (long j = 0; j < d; ++j) p->grad[r * d + j] += n.grad[r * total + off + j];
      off += d;
    }
  });
}

inline Node* softmax_last(Graph& g, Node* a) {
  const Shape& s = a->value.shape();
  opdetail::require(!s.empty(), "softmax: scalar input");
  const long D = s.back();
  const long rows = a->value.size() / D;
  Tensor out = a->value;
  for (long r = 0; r < rows; ++r) {
    double* row = out.data() + r * D;
    double mx = row[0];
    for (long j = 1; j < D; ++j) mx = std::max(mx, row[j]);
    double sum = 0;
    for (long j = 0; j < D; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (long j = 0; j < D; ++j) row[j] /= sum;
  }
  return g.make(std::move(out), {a}, [a, rows, D](Node& n) {
    for (long r = 0; r < rows; ++r) {
      const double* y = n.value.data() + r * D;
      const double* gr = n.grad.data() + r * D;
      double dot = 0;
      for (long j = 0; j < D; ++j) dot += y[j] * gr[j];
      for (long j = 0; j < D; ++j) a->grad[r * D + j] += y[j] * (gr[j] - dot);
    }
  });
}

inline Node* layer_norm(Graph& g, Node* x, Node* gain, Node* bias, double eps = 1e-5) {
  const Shape& s = x->value.shape();
  opdetail::require(!s.empty(), "layer_norm: scalar input");
  const long D = s.back();
  opdetail::require(gain->value.size() == D && bias->value.size() == D,
                    "layer_norm: gain/bias must have size of the last axis");
  const long rows = x->value.size() / D;
  Tensor out(s);
  for (long r = 0; r < rows; ++r) {
    const double* xr = x->value.data() + r * D;
    double mu = 0;
    for (long j = 0; j < D; ++j) mu += xr[j];
    mu /= (double)D;
    double var = 0;
    for (long j = 0; j < D; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= (double)D;
    double inv = 1.0 / std::sqrt(var + eps);
    for (long j = 0; j < D; ++j)
      out[r * D + j] = (xr[j] - mu) * inv * gain->value[j] + bias->value[j];
  }
  return g.make(std::move(out), {x, gain, bias}, [x, gain, bias, rows, D, eps](Node& n) {
    for (long r = 0; r < rows; ++r) {
      const double* xr = x->value.data() + r * D;
      const double* gr = n.grad.data() + r * D;
      double mu = 0;
      for (long j = 0; j < D; ++j) mu += xr[j];
      mu /= (double)D;
      double var = 0;
      for (long j = 0; j < D; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= (double)D;
      double inv = 1.0 / std::sqrt(var + eps);
      double mean_dxhat = 0, mean_dxhat_xhat = 0;
      for (long j = 0; j < D; ++j) {
        double xhat = (xr[j] - mu) * inv;
        double dxhat = gr[j] * gain->value[j];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
        if (gain->needs_grad) gain->grad[j] += gr[j] * xhat;
        if (bias->needs_grad) bias->grad[j] += gr[j];
      }
      mean_dxhat /= (double)D;
      mean_dxhat_xhat /= (double)D;
      if (x->needs_grad)
        for (long j = 0; j < D; ++j) {
          double xhat = (xr[j] - mu) * inv;
          double dxhat = gr[j] * gain->value[j];
          x->grad[r * D + j] += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
        }
    }
  });
}

// ---- complex ops: trailing (re, im) axis ----

inline Node* conj_op(Graph& g, Node* a) {
  opdetail::require(a->value.rank() >= 1 && a->value.dim(-1) == 2, "conj: complex tensor required");
  Tensor out = a->value;
  for (long i = 1; i < out.size(); i += 2) out[i] = -out[i];
  return g.make(std::move(out), {a}, [a](Node& n) {
    for (long i = 0; i < n.grad.size(); i += 2) {
      a->grad[i] += n.grad[i];
      a->grad[i + 1] -= n.grad[i + 1];
    }
  });
}

inline Node* cmul(Graph& g, Node* a, Node* b) {
  check_same_shape(a->value, b->value, "cmul");
  opdetail::require(a->value.dim(-1) == 2, "cmul: complex tensors required");
  const long pairs = a->value.size() / 2;
  Tensor out(a->value.shape());
  for (long i = 0; i < pairs; ++i) out.set_cplx(i, a->value.cplx(i) * b->value.cplx(i));
  return g.make(std::move(out), {a, b}, [a, b, pairs](Node& n) {
    for (long i = 0; i < pairs; ++i) {
      std::complex<double> gz = n.grad.cplx(i);
      if (a->needs_grad) a->grad.set_cplx(i, a->grad.cplx(i) + gz * std::conj(b->value.cplx(i)));
      if (b->needs_grad) b->grad.set_cplx(i, b->grad.cplx(i) + gz * std::conj(a->value.cplx(i)));
    }
  });
}

inline Node* chermitian(Graph& g, Node* a) {
  long batch, m, nn;
  opdetail::complex_matrix_dims(a->value.shape(), batch, m, nn, "chermitian");
  Shape os = a->value.shape();
  std::swap(os[os.size() - 3], os[os.size() - 2]);
  Tensor out(os);
  for (long b = 0; b < batch; ++b)
    for (long i = 0; i < m; ++i)
      for (long j = 0; j < nn; ++j)
        out.set_cplx((b * nn + j) * m + i, std::conj(a->value.cplx((b * m + i) * nn + j)));
  return g.make(std::move(out), {a}, [a, batch, m, nn](Node& n) {
    for (long b = 0; b < batch; ++b)
      for (long i = 0; i < m; ++i)
        for (long j = 0; j < nn; ++j) {
          long src = (b * nn + j) * m + i, dst = (b * m + i) * nn + j;
          a->grad.set_cplx(dst, a->grad.cplx(dst) + std::conj(n.grad.cplx(src)));
        }
  });
}

// Batched complex matmul; b may omit the batch dims to share one matrix.
inline Node* cmatmul(Graph& g, Node* a, Node* b) {
  long batch_a, M, K;
  opdetail::complex_matrix_dims(a->value.shape(), batch_a, M, K, "cmatmul");
  long batch_b, K2, N;
  opdetail::complex_matrix_dims(b->value.shape(), batch_b, K2, N, "cmatmul");
  opdetail::require(K == K2, "cmatmul: inner dimensions differ");
  opdetail::require(batch_b == batch_a || batch_b == 1, "cmatmul: batch dimensions differ");
  const bool shared_b = batch_b == 1 && batch_a != 1;
  Shape os(a->value.shape().begin(), a->value.shape().end() - 3);
  os.push_back(M);
  os.push_back(N);
  os.push_back(2);
  Tensor out(os);
  auto* av = reinterpret_cast<const std::complex<double>*>(a->value.data());
  auto* bv = reinterpret_cast<const std::complex<double>*>(b->value.data());
  auto* ov = reinterpret_cast<std::complex<double>*>(out.data());
  for (long bt = 0; bt < batch_a; ++bt) {
    const auto* A = av + bt * M * K;
    const auto* B = bv + (shared_b ? 0 : bt * K * N);
    auto* O = ov + bt * M * N;
    for (long i = 0; i < M; ++i)
      for (long k = 0; k < K; ++k) {
        std::complex<double> aik = A[i * K + k];
        if (aik == std::complex<double>(0, 0)) continue;
        for (long j = 0; j < N; ++j) O[i * N + j] += aik * B[k * N + j];
      }
  }
  return g.make(std::move(out), {a, b}, [a, b, batch_a, M, K, N, shared_b](Node& n) {
    auto* av = reinterpret_cast<const std::complex<double>*>(a->value.data());
    auto* bv = reinterpret_cast<const std::complex<double>*>(b->value.data());
    auto* gv = reinterpret_cast<const std::complex<double>*>(n.grad.data());
    auto* ga = a->needs_grad ? reinterpret_cast<std::complex<double>*>(a->grad.data()) : nullptr;
    auto* gb = b->needs_grad ? reinterpret_cast<std::complex<double>*>(b->grad.data()) : nullptr;
    for (long bt = 0; bt < batch_a; ++bt) {
      const auto* A = av + bt * M * K;
      const auto* B = bv + (shared_b ? 0 : bt * K * N);
      const auto* G = gv + bt * M * N;
      if (ga) {
        auto* GA = ga + bt * M * K;
        // gA = G * B^H
        for (long i = 0; i < M; ++i)
          for (long k = 0; k < K; ++k) {
            std::complex<double> s(0, 0);
            for (long j = 0; j < N; ++j) s += G[i * N + j] * std::conj(B[k * N + j]);
            GA[i * K + k] += s;
          }
      }
      if (gb) {
        auto* GB = gb + (shared_b ? 0 : bt * K * N);
        // gB = A^H * G
        for (long k = 0; k < K; ++k)
          for (long j = 0; j < N; ++j) {
            std::complex<double> s(0, 0);
            for (long i = 0; i < M; ++i) s += std::conj(A[i * K + k]) * G[i * N + j];
            GB[k * N + j] += s;
          }
      }
    }
  });
}

inline Node* cinverse(Graph& g, Node* a, double cond_limit = 1e12) {
  long batch, m, nn;
  opdetail::complex_matrix_dims(a->value.shape(), batch, m, nn, "cinverse");
  opdetail::require(m == nn, "cinverse: square matrices required");
  Tensor out = a->value;
  auto* ov = reinterpret_cast<std::complex<double>*>(out.data());
  for (long b = 0; b < batch; ++b) invert_complex(ov + b * m * m, m, cond_limit);
  return g.make(std::move(out), {a}, [a, batch, m](Node& n) {
    auto* Z = reinterpret_cast<const std::complex<double>*>(n.value.data());
    auto* G = reinterpret_cast<const std::complex<double>*>(n.grad.data());
    auto* GA = reinterpret_cast<std::complex<double>*>(a->grad.data());
    std::vector<std::complex<double>> tmp((size_t)(m * m));
    for (long b = 0; b < batch; ++b) {
      const auto* z = Z + b * m * m;
      const auto* gz = G + b * m * m;
      // gA = -Z^H * G * Z^H
      for (long i = 0; i < m; ++i)
        for (long j = 0; j < m; ++j) {
          std::complex<double> s(0, 0);
          for (long k = 0; k < m; ++k) s += std::conj(z[k * m + i]) * gz[k * m + j];
          tmp[(size_t)(i * m + j)] = s;
        }
      for (long i = 0; i < m; ++i)
        for (long j = 0; j < m; ++j) {
          std::complex<double> s(0, 0);
          for (long k = 0; k < m; ++k) s += tmp[(size_t)(i * m + k)] * std::conj(z[j * m + k]);
          GA[b * m * m + i * m + j] -= s;
        }
    }
  });
}

inline Node* ctrace(Graph& g, Node* a) {
  long batch, m, nn;
  opdetail::complex_matrix_dims(a->value.shape(), batch, m, nn, "ctrace");
  opdetail::require(m == nn, "ctrace: square matrices required");
  Shape os(a->value.shape().begin(), a->value.shape().end() - 3);
  os.push_back(2);
  Tensor out(os);
  for (long b = 0; b < batch; ++b) {
    std::complex<double> s(0, 0);
    for (long i = 0; i < m; ++i) s += a->value.cplx(b * m * m + i * m + i);
    out.set_cplx(b, s);
  }
  return g.make(std::move(out), {a}, [a, batch, m](Node& n) {
    for (long b = 0; b < batch; ++b) {
      std::complex<double> gz = n.grad.cplx(b);
      for (long i = 0; i < m; ++i) {
        long idx = b * m * m + i * m + i;
        a->grad.set_cplx(idx, a->grad.cplx(idx) + gz);
      }
    }
  });
}

// y = x + eps * (Re tr(x) / C) * I, the diagonal loading used before the
// noise-SCM inverse.
inline Node* diag_load(Graph& g, Node* a, double eps) {
  long batch, m, nn;
  opdetail::complex_matrix_dims(a->value.shape(), batch, m, nn, "diag_load");
  opdetail::require(m == nn, "diag_load: square matrices required");
  Tensor out = a->value;
  for (long b = 0; b < batch; ++b) {
    double tr = 0;
    for (long i = 0; i < m; ++i) tr += out[(b * m * m + i * m + i) * 2];
    double load = eps * tr / (double)m;
    for (long i = 0; i < m; ++i) out[(b * m * m + i * m + i) * 2] += load;
  }
  return g.make(std::move(out), {a}, [a, batch, m, eps](Node& n) {
    for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    for (long b = 0; b < batch; ++b) {
      double diag_re_sum = 0;
      for (long i = 0; i < m; ++i) diag_re_sum += n.grad[(b * m * m + i * m + i) * 2];
      double gl = eps * diag_re_sum / (double)m;
      for (long i = 0; i < m; ++i) a->grad[(b * m * m + i * m + i) * 2] += gl;
    }
  });
}

// w = x / s with a complex scalar per batch entry; batches where |s| falls
// below floor_abs emit zeros (and zero gradient), the degenerate-filter
// fallback of the beamformer.
inline Node* cdiv_scalar(Graph& g, Node* x, Node* s, double floor_abs = 1e-12,
                         long* degenerate_count = nullptr) {
  const Shape& xs = x->value.shape();
  const Shape& ss = s->value.shape();
  opdetail::require(xs.size() >= 2 && xs.back() == 2, "cdiv_scalar: complex numerator required");
  opdetail::require(!ss.empty() && ss.back() == 2, "cdiv_scalar: complex denominator required");
  opdetail::require(ss.size() + 1 == xs.size(), "cdiv_scalar: denominator must drop one axis");
  for (size_t i = 0; i + 1 < ss.size(); ++i)
    opdetail::require(ss[i] == xs[i], "cdiv_scalar: batch dimensions differ");
  const long K = xs[xs.size() - 2];
  const long batch = s->value.size() / 2;
  Tensor out(xs);
  long degen = 0;
  for (long b = 0; b < batch; ++b) {
    std::complex<double> sv = s->value.cplx(b);
    if (std::abs(sv) < floor_abs) {
      ++degen;
      continue;  // zeros already
    }
    std::complex<double> inv = 1.0 / sv;
    for (long k = 0; k < K; ++k) out.set_cplx(b * K + k, x->value.cplx(b * K + k) * inv);
  }
  if (degenerate_count) *degenerate_count = degen;
  return g.make(std::move(out), {x, s}, [x, s, K, batch, floor_abs](Node& n) {
    for (long b = 0; b < batch; ++b) {
      std::complex<double> sv = s->value.cplx(b);
      if (std::abs(sv) < floor_abs) continue;
      std::complex<double> inv = 1.0 / sv;
      std::complex<double> gs(0, 0);
      for (long k = 0; k < K; ++k) {
        std::complex<double> gz = n.grad.cplx(b * K + k);
        if (x->needs_grad)
          x->grad.set_cplx(b * K + k, x->grad.cplx(b * K + k) + gz * std::conj(inv));
        gs += gz * std::conj(-x->value.cplx(b * K + k) * inv * inv);
      }
      if (s->needs_grad) s->grad.set_cplx(b, s->grad.cplx(b) + gs);
    }
  });
}

inline Node* real_part(Graph& g, Node* a) {
  opdetail::require(a->value.rank() >= 1 && a->value.dim(-1) == 2, "real_part: complex tensor required");
  Shape os(a->value.shape().begin(), a->value.shape().end() - 1);
  Tensor out(os);
  for (long i = 0; i < out.size(); ++i) out[i] = a->value[2 * i];
  return g.make(std::move(out), {a}, [a](Node& n) {
    for (long i = 0; i < n.grad.size(); ++i) a->grad[2 * i] += n.grad[i];
  });
}

inline Node* magnitude_squared(Graph& g, Node* a) {
  opdetail::require(a->value.rank() >= 1 && a->value.dim(-1) == 2,
                    "magnitude_squared: complex tensor required");
  Shape os(a->value.shape().begin(), a->value.shape().end() - 1);
  Tensor out(os);
  for (long i = 0; i < out.size(); ++i)
    out[i] = a->value[2 * i] * a->value[2 * i] + a->value[2 * i + 1] * a->value[2 * i + 1];
  return g.make(std::move(out), {a}, [a](Node& n) {
    for (long i = 0; i < n.grad.size(); ++i) {
      a->grad[2 * i] += 2.0 * n.grad[i] * a->value[2 * i];
      a->grad[2 * i + 1] += 2.0 * n.grad[i] * a->value[2 * i + 1];
    }
  });
}

// Inverse STFT of a single-channel [T, F, 2] spectrogram as a linear graph
// op; the backward pass is the adjoint analysis derived from the synthesis
// window and overlap-add normalization.
inline Node* istft_op(Graph& g, Node* spec, long frame_len, long hop, long out_len) {
  const Shape& s = spec->value.shape();
  opdetail::require(s.size() == 3 && s[2] == 2, "istft: expected [T, F, 2]");
  const long T = s[0], F = s[1];
  opdetail::require(F == frame_len / 2 + 1, "istft: bin count does not match frame length");
  Tensor out({out_len});
  dsp::istft_channel(reinterpret_cast<const std::complex<double>*>(spec->value.data()), T,
                     frame_len, hop, out_len, out.data());
  return g.make(std::move(out), {spec}, [spec, T, F, frame_len, hop, out_len](Node& n) {
    std::vector<std::complex<double>> gx((size_t)(T * F), {0.0, 0.0});
    dsp::istft_channel_adjoint(n.grad.data(), out_len, T, frame_len, hop, gx.data());
    for (long i = 0; i < T * F; ++i)
      spec->grad.set_cplx(i, spec->grad.cplx(i) + gx[(size_t)i]);
  });
}

// Replace the listed bins of a full [T, F, 2] tensor with columns from a
// [T, F_sel, 2] tensor (pass-through elsewhere).
inline Node* scatter_bins(Graph& g, Node* sel, Node* base, std::vector<long> bins) {
  const Shape& ss = sel->value.shape();
  const Shape& bs = base->value.shape();
  opdetail::require(ss.size() == 3 && bs.size() == 3 && ss[2] == 2 && bs[2] == 2,
                    "scatter_bins: expected [T, F, 2] tensors");
  opdetail::require(ss[0] == bs[0], "scatter_bins: frame counts differ");
  opdetail::require((long)bins.size() == ss[1], "scatter_bins: index count does not match columns");
  const long T = ss[0], Fs = ss[1], F = bs[1];
  for (long b : bins) opdetail::require(b >= 0 && b < F, "scatter_bins: bin index out of range");
  Tensor out = base->value;
  for (long t = 0; t < T; ++t)
    for (long j = 0; j < Fs; ++j) out.set_cplx(t * F + bins[(size_t)j], sel->value.cplx(t * Fs + j));
  return g.make(std::move(out), {sel, base}, [sel, base, bins, T, Fs, F](Node& n) {
    if (sel->needs_grad)
      for (long t = 0; t < T; ++t)
        for (long j = 0; j < Fs; ++j)
          sel->grad.set_cplx(t * Fs + j,
                             sel->grad.cplx(t * Fs + j) + n.grad.cplx(t * F + bins[(size_t)j]));
    if (base->needs_grad) {
      std::vector<bool> hit((size_t)F, false);
      for (long b : bins) hit[(size_t)b] = true;
      for (long t = 0; t < T; ++t)
        for (long f = 0; f < F; ++f)
          if (!hit[(size_t)f])
            base->grad.set_cplx(t * F + f, base->grad.cplx(t * F + f) + n.grad.cplx(t * F + f));
    }
  });
}

}  // namespace movebeam::ad
