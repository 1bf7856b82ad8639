// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "deft/error.hpp"

namespace deft::nn {
namespace {

Tape& tape_of(Var v) {
  if (!v.valid()) throw UsageError("operation on an unbound variable");
  return v.tape();
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(fmt::format("{} expects a matrix, got shape {}", op, shape_string(t.shape())));
  }
}

void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size() || a.rows() != b.rows()) {
    throw ShapeError(fmt::format("{}: shapes {} and {} differ", op, shape_string(a.shape()),
                                 shape_string(b.shape())));
  }
}

// C += A * B^T  (A: m x k, B: n x k)
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.values().data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = b.values().data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      c.at(i, j) += s;
    }
  }
}

// C += A^T * B  (A: k x m, B: k x n)
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* ar = a.values().data() + p * m;
    const double* br = b.values().data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* cr = c.values().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) v = f(v);
  const auto ia = a.id();
  return t.record(std::move(out), {a}, [ia, df](Tape& tp, std::uint32_t self) {
    if (Tensor* ga = tp.grad_slot(ia)) {
      const Tensor& x = tp.value(ia);
      const Tensor& y = tp.value(self);
      const Tensor& g = tp.grad(self);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * df(x[i], y[i]);
    }
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  Tensor out = matmul(a.value(), b.value());
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* ga = tp.grad_slot(ia)) gemm_nt_acc(g, tp.value(ib), *ga);
    if (Tensor* gb = tp.grad_slot(ib)) gemm_tn_acc(tp.value(ia), g, *gb);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  require_matrix(a.value(), "transpose");
  const auto ia = a.id();
  return t.record(transpose(a.value()), {a}, [ia](Tape& tp, std::uint32_t self) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += transpose(tp.grad(self));
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  const Shape from = a.value().shape();
  return t.record(std::move(out), {a}, [ia, from](Tape& tp, std::uint32_t self) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += tp.grad(self).reshaped(from);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_size(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::uint32_t self) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += tp.grad(self);
    if (Tensor* gb = tp.grad_slot(ib)) *gb += tp.grad(self);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_size(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out -= b.value();
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::uint32_t self) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += tp.grad(self);
    if (Tensor* gb = tp.grad_slot(ib)) *gb -= tp.grad(self);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_size(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* ga = tp.grad_slot(ia)) {
      const Tensor& bv = tp.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = tp.grad_slot(ib)) {
      const Tensor& av = tp.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Tensor out = a.value() * s;
  const auto ia = a.id();
  return t.record(std::move(out), {a}, [ia, s](Tape& tp, std::uint32_t self) {
    if (Tensor* ga = tp.grad_slot(ia)) {
      const Tensor& g = tp.grad(self);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * s;
    }
  });
}

Var scale_by(Var s, Var a) {
  Tape& t = tape_of(a);
  if (s.value().size() != 1) throw ShapeError("scale_by expects a single-element scale");
  Tensor out = a.value() * s.value()[0];
  const auto is = s.id(), ia = a.id();
  return t.record(std::move(out), {s, a}, [is, ia](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* ga = tp.grad_slot(ia)) {
      const double sv = tp.value(is)[0];
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * sv;
    }
    if (Tensor* gs = tp.grad_slot(is)) (*gs)[0] += dot(g, tp.value(ia));
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a);
  const std::size_t n = a.value().cols();
  if (row.value().size() != n) {
    throw ShapeError(fmt::format("add_row: row of {} values for {} columns", row.value().size(), n));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += row.value()[j];
  }
  const auto ia = a.id(), ir = row.id();
  return t.record(std::move(out), {a, row}, [ia, ir, n](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* ga = tp.grad_slot(ia)) *ga += g;
    if (Tensor* gr = tp.grad_slot(ir)) {
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < n; ++j) (*gr)[j] += g.at(i, j);
      }
    }
  });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var layer_norm(Var x, Var gain, Var offset, double eps) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gain.value().size() != n || offset.value().size() != n) {
    throw ShapeError("layer_norm: gain/offset width mismatch");
  }
  Tensor out({m, n});
  std::vector<double> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xv.at(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv.at(i, j) - mean) * inv_std[i];
      out.at(i, j) = xhat[i * n + j] * gain.value()[j] + offset.value()[j];
    }
  }
  const auto ix = x.id(), ig = gain.id(), io = offset.id();
  return t.record(std::move(out), {x, gain, offset},
                  [ix, ig, io, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Tape& tp, std::uint32_t self) {
                    const Tensor& g = tp.grad(self);
                    const Tensor& gv = tp.value(ig);
                    if (Tensor* gg = tp.grad_slot(ig)) {
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) (*gg)[j] += g.at(i, j) * xhat[i * n + j];
                    }
                    if (Tensor* go = tp.grad_slot(io)) {
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) (*go)[j] += g.at(i, j);
                    }
                    if (Tensor* gx = tp.grad_slot(ix)) {
                      const double inv_n = 1.0 / static_cast<double>(n);
                      for (std::size_t i = 0; i < m; ++i) {
                        double sum_d = 0.0, sum_dx = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                          const double d = g.at(i, j) * gv[j];
                          sum_d += d;
                          sum_dx += d * xhat[i * n + j];
                        }
                        for (std::size_t j = 0; j < n; ++j) {
                          const double d = g.at(i, j) * gv[j];
                          gx->at(i, j) +=
                              inv_std[i] * (d - inv_n * sum_d - xhat[i * n + j] * inv_n * sum_dx);
                        }
                      }
                    }
                  });
}

Var softmax_rows(Var x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(xv.at(i, j) - mx);
      s += out.at(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= s;
  }
  const auto ix = x.id();
  return t.record(std::move(out), {x}, [ix, m, n](Tape& tp, std::uint32_t self) {
    if (Tensor* gx = tp.grad_slot(ix)) {
      const Tensor& y = tp.value(self);
      const Tensor& g = tp.grad(self);
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * y.at(i, j);
        for (std::size_t j = 0; j < n; ++j) gx->at(i, j) += y.at(i, j) * (g.at(i, j) - s);
      }
    }
  });
}

Var embedding(Var table, std::span<const int> tokens) {
  Tape& t = tape_of(table);
  const Tensor& tv = table.value();
  require_matrix(tv, "embedding");
  const std::size_t vocab = tv.rows(), d = tv.cols();
  Tensor out({tokens.size(), d});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab) {
      throw InputError(fmt::format("token {} outside vocabulary of size {}", tokens[i], vocab));
    }
    std::copy_n(tv.values().data() + tokens[i] * d, d, out.values().data() + i * d);
  }
  const auto it = table.id();
  std::vector<int> toks(tokens.begin(), tokens.end());
  return t.record(std::move(out), {table}, [it, d, toks = std::move(toks)](Tape& tp, std::uint32_t self) {
    if (Tensor* gt = tp.grad_slot(it)) {
      const Tensor& g = tp.grad(self);
      for (std::size_t i = 0; i < toks.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) gt->at(static_cast<std::size_t>(toks[i]), j) += g.at(i, j);
      }
    }
  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols();
  Tensor out({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) throw InputError("gather_rows: row index out of range");
    std::copy_n(xv.values().data() + rows[i] * n, n, out.values().data() + i * n);
  }
  const auto ix = x.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {x}, [ix, n, idx = std::move(idx)](Tape& tp, std::uint32_t self) {
    if (Tensor* gx = tp.grad_slot(ix)) {
      const Tensor& g = tp.grad(self);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) gx->at(idx[i], j) += g.at(i, j);
      }
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_rows of nothing");
  Tape& t = tape_of(parts.front());
  const std::size_t n = parts.front().value().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != n) throw ShapeError("concat_rows: column counts differ");
    total += p.value().rows();
  }
  Tensor out({total, n});
  std::vector<std::uint32_t> ids;
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.values().begin() + off * n);
    off += p.value().rows();
    ids.push_back(p.id());
  }
  return t.record(std::move(out), parts, [ids = std::move(ids), n](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (std::uint32_t id : ids) {
      const std::size_t cnt = tp.value(id).size();
      if (Tensor* gp = tp.grad_slot(id)) {
        for (std::size_t i = 0; i < cnt; ++i) (*gp)[i] += g[off * n + i];
      }
      off += cnt / n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_cols of nothing");
  Tape& t = tape_of(parts.front());
  const std::size_t m = parts.front().value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != m) throw ShapeError("concat_cols: row counts differ");
    total += p.value().cols();
  }
  Tensor out({m, total});
  std::vector<std::uint32_t> ids;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const std::size_t c = p.value().cols();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < c; ++j) out.at(i, off + j) = p.value().at(i, j);
    }
    off += c;
    ids.push_back(p.id());
  }
  return t.record(std::move(out), parts, [ids = std::move(ids), m](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (std::uint32_t id : ids) {
      const std::size_t c = tp.value(id).cols();
      if (Tensor* gp = tp.grad_slot(id)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < c; ++j) gp->at(i, j) += g.at(i, off + j);
        }
      }
      off += c;
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  if (begin + count > xv.rows()) throw ShapeError("slice_rows out of range");
  const std::size_t n = xv.cols();
  Tensor out({count, n});
  std::copy_n(xv.values().data() + begin * n, count * n, out.values().data());
  const auto ix = x.id();
  return t.record(std::move(out), {x}, [ix, begin, count, n](Tape& tp, std::uint32_t self) {
    if (Tensor* gx = tp.grad_slot(ix)) {
      const Tensor& g = tp.grad(self);
      for (std::size_t i = 0; i < count * n; ++i) (*gx)[begin * n + i] += g[i];
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  if (begin + count > xv.cols()) throw ShapeError("slice_cols out of range");
  const std::size_t m = xv.rows();
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = xv.at(i, begin + j);
  }
  const auto ix = x.id();
  return t.record(std::move(out), {x}, [ix, begin, count, m](Tape& tp, std::uint32_t self) {
    if (Tensor* gx = tp.grad_slot(ix)) {
      const Tensor& g = tp.grad(self);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < count; ++j) gx->at(i, begin + j) += g.at(i, j);
      }
    }
  });
}

Var prepend_to_groups(Var prompt, Var x, std::size_t group_len) {
  Tape& t = tape_of(x);
  const Tensor& pv = prompt.value();
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  if (pv.cols() != d) throw ShapeError("prepend_to_groups: prompt width differs from input width");
  if (group_len == 0 || xv.rows() % group_len != 0) {
    throw ShapeError("prepend_to_groups: rows are not a multiple of the group length");
  }
  const std::size_t groups = xv.rows() / group_len, plen = pv.rows(), out_len = plen + group_len;
  Tensor out({groups * out_len, d});
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    double* dst = out.values().data() + gidx * out_len * d;
    std::copy_n(pv.values().data(), plen * d, dst);
    std::copy_n(xv.values().data() + gidx * group_len * d, group_len * d, dst + plen * d);
  }
  const auto ip = prompt.id(), ix = x.id();
  return t.record(std::move(out), {prompt, x},
                  [ip, ix, groups, plen, group_len, out_len, d](Tape& tp, std::uint32_t self) {
                    const Tensor& g = tp.grad(self);
                    if (Tensor* gp = tp.grad_slot(ip)) {
                      for (std::size_t gidx = 0; gidx < groups; ++gidx) {
                        const double* src = g.values().data() + gidx * out_len * d;
                        for (std::size_t i = 0; i < plen * d; ++i) (*gp)[i] += src[i];
                      }
                    }
                    if (Tensor* gx = tp.grad_slot(ix)) {
                      for (std::size_t gidx = 0; gidx < groups; ++gidx) {
                        const double* src = g.values().data() + (gidx * out_len + plen) * d;
                        double* dst = gx->values().data() + gidx * group_len * d;
                        for (std::size_t i = 0; i < group_len * d; ++i) dst[i] += src[i];
                      }
                    }
                  });
}

Var attention(Var q, Var k, Var v, std::size_t n_heads, std::size_t group_len,
              std::optional<Var> prefix_k, std::optional<Var> prefix_v) {
  Tape& t = tape_of(q);
  const Tensor& qv = q.value();
  const std::size_t rows = qv.rows(), d = qv.cols();
  require_same_size(qv, k.value(), "attention(q, k)");
  require_same_size(qv, v.value(), "attention(q, v)");
  if (n_heads == 0 || d % n_heads != 0) throw ShapeError("attention: width not divisible by heads");
  if (group_len == 0 || rows % group_len != 0) throw ShapeError("attention: ragged groups");
  if (prefix_k.has_value() != prefix_v.has_value()) throw UsageError("attention: prefix K without V");
  const std::size_t plen = prefix_k ? prefix_k->value().rows() : 0;
  if (prefix_k && (prefix_k->value().cols() != d || prefix_v->value().rows() != plen ||
                   prefix_v->value().cols() != d)) {
    throw ShapeError("attention: prefix shape mismatch");
  }
  const std::size_t groups = rows / group_len, dh = d / n_heads, nk = plen + group_len;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  static const Tensor kEmpty;
  const Tensor& pk = prefix_k ? prefix_k->value() : kEmpty;
  const Tensor& pv = prefix_v ? prefix_v->value() : kEmpty;
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();

  // key row r of group g: prefix row r for r < plen, else input row.
  auto key_ptr = [&](const Tensor& prefix, const Tensor& body, std::size_t g, std::size_t r,
                     std::size_t h) -> const double* {
    if (r < plen) return prefix.values().data() + r * d + h * dh;
    return body.values().data() + (g * group_len + r - plen) * d + h * dh;
  };

  Tensor out({rows, d});
  std::vector<double> probs(groups * n_heads * group_len * nk);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      double* pr = probs.data() + ((g * n_heads + h) * group_len) * nk;
      for (std::size_t i = 0; i < group_len; ++i) {
        const double* qi = qv.values().data() + (g * group_len + i) * d + h * dh;
        double* row = pr + i * nk;
        double mx = -INFINITY;
        for (std::size_t r = 0; r < nk; ++r) {
          const double* kr = key_ptr(pk, kv, g, r, h);
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kr[c];
          row[r] = s * inv_sqrt;
          mx = std::max(mx, row[r]);
        }
        double z = 0.0;
        for (std::size_t r = 0; r < nk; ++r) {
          row[r] = std::exp(row[r] - mx);
          z += row[r];
        }
        double* oi = out.values().data() + (g * group_len + i) * d + h * dh;
        for (std::size_t r = 0; r < nk; ++r) {
          row[r] /= z;
          const double* vr = key_ptr(pv, vv, g, r, h);
          for (std::size_t c = 0; c < dh; ++c) oi[c] += row[r] * vr[c];
        }
      }
    }
  }

  std::vector<Var> inputs{q, k, v};
  if (prefix_k) {
    inputs.push_back(*prefix_k);
    inputs.push_back(*prefix_v);
  }
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  const std::int64_t ipk = prefix_k ? static_cast<std::int64_t>(prefix_k->id()) : -1;
  const std::int64_t ipv = prefix_v ? static_cast<std::int64_t>(prefix_v->id()) : -1;
  return t.record(
      std::move(out), inputs,
      [=, probs = std::move(probs)](Tape& tp, std::uint32_t self) {
        const Tensor& go = tp.grad(self);
        const Tensor& qv2 = tp.value(iq);
        const Tensor& kv2 = tp.value(ik);
        const Tensor& vv2 = tp.value(iv);
        Tensor* gq = tp.grad_slot(iq);
        Tensor* gk = tp.grad_slot(ik);
        Tensor* gv = tp.grad_slot(iv);
        Tensor* gpk = ipk >= 0 ? tp.grad_slot(static_cast<std::uint32_t>(ipk)) : nullptr;
        Tensor* gpv = ipv >= 0 ? tp.grad_slot(static_cast<std::uint32_t>(ipv)) : nullptr;
        const Tensor& pk2 = ipk >= 0 ? tp.value(static_cast<std::uint32_t>(ipk)) : kEmpty;
        const Tensor& pv2 = ipv >= 0 ? tp.value(static_cast<std::uint32_t>(ipv)) : kEmpty;
        auto src = [&](const Tensor& prefix, const Tensor& body, std::size_t g, std::size_t r,
                       std::size_t h) -> const double* {
          if (r < plen) return prefix.values().data() + r * d + h * dh;
          return body.values().data() + (g * group_len + r - plen) * d + h * dh;
        };
        auto dst = [&](Tensor* prefix, Tensor* body, std::size_t g, std::size_t r,
                       std::size_t h) -> double* {
          if (r < plen) return prefix ? prefix->values().data() + r * d + h * dh : nullptr;
          return body ? body->values().data() + (g * group_len + r - plen) * d + h * dh : nullptr;
        };
        std::vector<double> dp(nk);
        for (std::size_t g = 0; g < groups; ++g) {
          for (std::size_t h = 0; h < n_heads; ++h) {
            const double* pr = probs.data() + ((g * n_heads + h) * group_len) * nk;
            for (std::size_t i = 0; i < group_len; ++i) {
              const double* row = pr + i * nk;
              const double* goi = go.values().data() + (g * group_len + i) * d + h * dh;
              double s = 0.0;
              for (std::size_t r = 0; r < nk; ++r) {
                const double* vr = src(pv2, vv2, g, r, h);
                double acc = 0.0;
                for (std::size_t c = 0; c < dh; ++c) acc += goi[c] * vr[c];
                dp[r] = acc;
                s += acc * row[r];
                if (double* gvr = dst(gpv, gv, g, r, h)) {
                  for (std::size_t c = 0; c < dh; ++c) gvr[c] += row[r] * goi[c];
                }
              }
              const double* qi = qv2.values().data() + (g * group_len + i) * d + h * dh;
              double* gqi = gq ? gq->values().data() + (g * group_len + i) * d + h * dh : nullptr;
              for (std::size_t r = 0; r < nk; ++r) {
                const double ds = row[r] * (dp[r] - s) * inv_sqrt;
                if (ds == 0.0) continue;
                const double* kr = src(pk2, kv2, g, r, h);
                if (gqi) {
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kr[c];
                }
                if (double* gkr = dst(gpk, gk, g, r, h)) {
                  for (std::size_t c = 0; c < dh; ++c) gkr[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  Tape& t = tape_of(logits);
  const Tensor& lv = logits.value();
  const std::size_t m = lv.rows(), n = lv.cols();
  if (targets.size() != m) {
    throw InputError(fmt::format("cross_entropy: {} targets for {} rows", targets.size(), m));
  }
  if (m == 0) throw InputError("cross_entropy over zero rows");
  Tensor probs({m, n});
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n) {
      throw InputError(fmt::format("target {} outside vocabulary of size {}", targets[i], n));
    }
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, lv.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs.at(i, j) = std::exp(lv.at(i, j) - mx);
      z += probs.at(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) probs.at(i, j) /= z;
    loss += (mx + std::log(z)) - lv.at(i, static_cast<std::size_t>(targets[i]));
  }
  loss /= static_cast<double>(m);
  const auto il = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  return t.record(Tensor::scalar(loss), {logits},
                  [il, m, n, tg = std::move(tg), probs = std::move(probs)](Tape& tp, std::uint32_t self) {
                    if (Tensor* gl = tp.grad_slot(il)) {
                      const double g = tp.grad(self)[0] / static_cast<double>(m);
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < n; ++j) gl->at(i, j) += g * probs.at(i, j);
                        gl->at(i, static_cast<std::size_t>(tg[i])) -= g;
                      }
                    }
                  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const auto ix = x.id();
  return t.record(Tensor::scalar(s), {x}, [ix](Tape& tp, std::uint32_t self) {
    if (Tensor* gx = tp.grad_slot(ix)) {
      const double g = tp.grad(self)[0];
      for (double& v : gx->values()) v += g;
    }
  });
}

Var kron(Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t a1 = av.rows(), a2 = av.cols(), b1 = bv.rows(), b2 = bv.cols();
  Tensor out({a1 * b1, a2 * b2});
  for (std::size_t i1 = 0; i1 < a1; ++i1)
    for (std::size_t j1 = 0; j1 < a2; ++j1)
      for (std::size_t i2 = 0; i2 < b1; ++i2)
        for (std::size_t j2 = 0; j2 < b2; ++j2)
          out.at(i1 * b1 + i2, j1 * b2 + j2) = av.at(i1, j1) * bv.at(i2, j2);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, a1, a2, b1, b2](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av2 = tp.value(ia);
    const Tensor& bv2 = tp.value(ib);
    Tensor* ga = tp.grad_slot(ia);
    Tensor* gb = tp.grad_slot(ib);
    for (std::size_t i1 = 0; i1 < a1; ++i1)
      for (std::size_t j1 = 0; j1 < a2; ++j1)
        for (std::size_t i2 = 0; i2 < b1; ++i2)
          for (std::size_t j2 = 0; j2 < b2; ++j2) {
            const double go = g.at(i1 * b1 + i2, j1 * b2 + j2);
            if (ga) ga->at(i1, j1) += go * bv2.at(i2, j2);
            if (gb) gb->at(i2, j2) += go * av2.at(i1, j1);
          }
  });
}

}  // namespace deft::nn
