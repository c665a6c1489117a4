// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "gta/error.hpp"

namespace gta {
namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const char* what) {
  throw DimensionError(std::string(op) + ": " + what + ", got shape " +
                       shape_string(a.shape()));
}

Tensor saved(const Tensor& t) {
  Tensor v = t;
  v.detach();
  return v;
}

std::size_t leading_product(const std::vector<std::size_t>& shape, std::size_t upto) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < upto; ++i) n *= shape[i];
  return n;
}

// out(n, m) += a(n, k) @ b(k, m); ascending contraction index per element.
void mm_acc(const double* a, const double* b, double* out, std::size_t n,
            std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* oi = out + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      const double* bk = b + kk * m;
      for (std::size_t j = 0; j < m; ++j) oi[j] += av * bk[j];
    }
  }
}

// out(n, m) += a(n, k) @ b(m, k)^T
void mm_nt_acc(const double* a, const double* b, double* out, std::size_t n,
               std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* oi = out + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      oi[j] += acc;
    }
  }
}

// out(n, m) += a(k, n)^T @ b(k, m)
void mm_tn_acc(const double* a, const double* b, double* out, std::size_t n,
               std::size_t k, std::size_t m) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* ak = a + kk * n;
    const double* bk = b + kk * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = ak[i];
      double* oi = out + i * m;
      for (std::size_t j = 0; j < m; ++j) oi[j] += av * bk[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    shape_fail("matmul", a, b);
  }
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  Tensor out({n, m});
  mm_acc(a.data(), b.data(), out.data(), n, k, m);
  check_finite(out, "matmul");
  Tape* tp = common_tape({&a, &b});
  if (tp) {
    const int pa = a.node(), pb = b.node();
    const Tensor av = pb >= 0 ? saved(a) : Tensor();
    const Tensor bv = pa >= 0 ? saved(b) : Tensor();
    out.bind(tp, tp->record([pa, pb, av, bv, n, k, m](Tape& t, const Tensor& g) {
      if (pa >= 0) {
        Tensor ga({n, k});
        mm_nt_acc(g.data(), bv.data(), ga.data(), n, m, k);
        t.accumulate(pa, std::move(ga));
      }
      if (pb >= 0) {
        Tensor gb({k, m});
        mm_tn_acc(av.data(), g.data(), gb.data(), k, n, m);
        t.accumulate(pb, std::move(gb));
      }
    }));
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() != b.rank()) shape_fail("bmm", a, b);
  const std::size_t r = a.rank();
  for (std::size_t i = 0; i + 2 < r; ++i) {
    if (a.shape()[i] != b.shape()[i]) shape_fail("bmm", a, b);
  }
  if (a.shape()[r - 1] != b.shape()[r - 2]) shape_fail("bmm", a, b);
  const std::size_t batch = leading_product(a.shape(), r - 2);
  const std::size_t n = a.shape()[r - 2], k = a.shape()[r - 1], m = b.shape()[r - 1];
  std::vector<std::size_t> oshape(a.shape().begin(), a.shape().end() - 1);
  oshape.push_back(m);
  Tensor out(std::move(oshape));
  for (std::size_t bi = 0; bi < batch; ++bi) {
    mm_acc(a.data() + bi * n * k, b.data() + bi * k * m, out.data() + bi * n * m,
           n, k, m);
  }
  check_finite(out, "bmm");
  Tape* tp = common_tape({&a, &b});
  if (tp) {
    const int pa = a.node(), pb = b.node();
    const Tensor av = pb >= 0 ? saved(a) : Tensor();
    const Tensor bv = pa >= 0 ? saved(b) : Tensor();
    const auto ashape = a.shape();
    const auto bshape = b.shape();
    out.bind(tp, tp->record([pa, pb, av, bv, ashape, bshape, batch, n, k,
                             m](Tape& t, const Tensor& g) {
      if (pa >= 0) {
        Tensor ga(ashape);
        for (std::size_t bi = 0; bi < batch; ++bi) {
          mm_nt_acc(g.data() + bi * n * m, bv.data() + bi * k * m,
                    ga.data() + bi * n * k, n, m, k);
        }
        t.accumulate(pa, std::move(ga));
      }
      if (pb >= 0) {
        Tensor gb(bshape);
        for (std::size_t bi = 0; bi < batch; ++bi) {
          mm_tn_acc(av.data() + bi * n * k, g.data() + bi * n * m,
                    gb.data() + bi * k * m, k, n, m);
        }
        t.accumulate(pb, std::move(gb));
      }
    }));
  }
  return out;
}

Tensor bmm_left(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.rank() < 2 || m.shape()[1] != v.shape()[v.rank() - 2]) {
    shape_fail("bmm_left", m, v);
  }
  const std::size_t p = m.shape()[0], q = m.shape()[1];
  const std::size_t r = v.shape()[v.rank() - 1];
  const std::size_t batch = leading_product(v.shape(), v.rank() - 2);
  std::vector<std::size_t> oshape = v.shape();
  oshape[v.rank() - 2] = p;
  Tensor out(std::move(oshape));
  for (std::size_t bi = 0; bi < batch; ++bi) {
    mm_acc(m.data(), v.data() + bi * q * r, out.data() + bi * p * r, p, q, r);
  }
  check_finite(out, "bmm_left");
  Tape* tp = common_tape({&m, &v});
  if (tp) {
    const int pm = m.node(), pv = v.node();
    const Tensor mv = pv >= 0 ? saved(m) : Tensor();
    const Tensor vv = pm >= 0 ? saved(v) : Tensor();
    const auto vshape = v.shape();
    out.bind(tp, tp->record([pm, pv, mv, vv, vshape, batch, p, q, r](
                                Tape& t, const Tensor& g) {
      if (pm >= 0) {
        Tensor gm({p, q});
        for (std::size_t bi = 0; bi < batch; ++bi) {
          mm_nt_acc(g.data() + bi * p * r, vv.data() + bi * q * r, gm.data(), p,
                    r, q);
        }
        t.accumulate(pm, std::move(gm));
      }
      if (pv >= 0) {
        Tensor gv(vshape);
        for (std::size_t bi = 0; bi < batch; ++bi) {
          mm_tn_acc(mv.data(), g.data() + bi * p * r, gv.data() + bi * q * r, q,
                    p, r);
        }
        t.accumulate(pv, std::move(gv));
      }
    }));
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (b.rank() != 1 || x.rank() < 1 || x.shape().back() != b.shape()[0]) {
    shape_fail("add_bias", x, b);
  }
  const std::size_t m = b.shape()[0];
  const std::size_t rows = x.size() / m;
  Tensor out = x;
  out.detach();
  for (std::size_t i = 0; i < rows; ++i) {
    double* oi = out.data() + i * m;
    const double* bp = b.data();
    for (std::size_t j = 0; j < m; ++j) oi[j] += bp[j];
  }
  check_finite(out, "add_bias");
  Tape* tp = common_tape({&x, &b});
  if (tp) {
    const int px = x.node(), pb = b.node();
    out.bind(tp, tp->record([px, pb, rows, m](Tape& t, const Tensor& g) {
      if (px >= 0) t.accumulate(px, g);
      if (pb >= 0) {
        Tensor gb({m});
        for (std::size_t i = 0; i < rows; ++i) {
          const double* gi = g.data() + i * m;
          for (std::size_t j = 0; j < m; ++j) gb.data()[j] += gi[j];
        }
        t.accumulate(pb, std::move(gb));
      }
    }));
  }
  return out;
}

Tensor softmax_last(const Tensor& x) {
  if (x.rank() < 1 || x.shape().back() == 0) {
    shape_fail("softmax_last", x, "needs a non-empty last axis");
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xi = x.data() + i * n;
    double* oi = out.data() + i * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      oi[j] = std::exp(xi[j] - mx);
      sum += oi[j];
    }
    for (std::size_t j = 0; j < n; ++j) oi[j] /= sum;
  }
  check_finite(out, "softmax_last");
  Tape* tp = common_tape({&x});
  if (tp) {
    const int px = x.node();
    const Tensor y = saved(out);
    out.bind(tp, tp->record([px, y, rows, n](Tape& t, const Tensor& g) {
      if (px < 0) return;
      Tensor gx(y.shape());
      for (std::size_t i = 0; i < rows; ++i) {
        const double* yi = y.data() + i * n;
        const double* gi = g.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gi[j] * yi[j];
        double* oi = gx.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) oi[j] = yi[j] * (gi[j] - dot);
      }
      t.accumulate(px, std::move(gx));
    }));
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
  if (shape_product(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) +
                         " does not hold shape " + shape_string(shape));
  }
  Tensor out(std::move(shape), x.values());
  Tape* tp = common_tape({&x});
  if (tp) {
    const int px = x.node();
    const auto ishape = x.shape();
    out.bind(tp, tp->record([px, ishape](Tape& t, const Tensor& g) {
      if (px < 0) return;
      t.accumulate(px, Tensor(ishape, g.values()));
    }));
  }
  return out;
}

namespace {

bool is_permutation_of_axes(const std::vector<std::size_t>& perm, std::size_t r) {
  if (perm.size() != r) return false;
  std::vector<char> seen(r, 0);
  for (const std::size_t p : perm) {
    if (p >= r || seen[p]) return false;
    seen[p] = 1;
  }
  return true;
}

Tensor permute_value(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  std::vector<std::size_t> oshape(r);
  for (std::size_t i = 0; i < r; ++i) oshape[i] = x.shape()[perm[i]];
  Tensor out(oshape);
  if (x.size() == 0) return out;
  std::vector<std::size_t> ostrides(r, 1);
  for (std::size_t i = r; i-- > 1;) ostrides[i - 1] = ostrides[i] * oshape[i];
  // stride in the output for a step along input axis i
  std::vector<std::size_t> map(r);
  for (std::size_t i = 0; i < r; ++i) map[perm[i]] = ostrides[i];
  std::vector<std::size_t> idx(r, 0);
  const double* src = x.data();
  double* dst = out.data();
  std::size_t opos = 0;
  for (std::size_t flat = 0; flat < x.size(); ++flat) {
    dst[opos] = src[flat];
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      opos += map[ax];
      if (idx[ax] < x.shape()[ax]) break;
      opos -= map[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

}  // namespace

Tensor permute_axes(const Tensor& x, const std::vector<std::size_t>& perm) {
  if (!is_permutation_of_axes(perm, x.rank())) {
    shape_fail("permute_axes", x, "perm is not a permutation of the axes");
  }
  Tensor out = permute_value(x, perm);
  Tape* tp = common_tape({&x});
  if (tp) {
    const int px = x.node();
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    out.bind(tp, tp->record([px, inv](Tape& t, const Tensor& g) {
      if (px < 0) return;
      t.accumulate(px, permute_value(g, inv));
    }));
  }
  return out;
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) shape_fail("transpose_last2", x, "needs rank >= 2");
  std::vector<std::size_t> perm(x.rank());
  for (std::size_t i = 0; i < x.rank(); ++i) perm[i] = i;
  std::swap(perm[x.rank() - 2], perm[x.rank() - 1]);
  return permute_axes(x, perm);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no parts");
  const std::size_t r = parts[0].rank();
  if (axis >= r) shape_fail("concat", parts[0], "axis out of range");
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != r) shape_fail("concat", parts[0], p);
    for (std::size_t i = 0; i < r; ++i) {
      if (i != axis && p.shape()[i] != parts[0].shape()[i]) {
        shape_fail("concat", parts[0], p);
      }
    }
    total += p.shape()[axis];
  }
  std::vector<std::size_t> oshape = parts[0].shape();
  oshape[axis] = total;
  Tensor out(oshape);
  const std::size_t outer = leading_product(oshape, axis);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < r; ++i) inner *= oshape[i];
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t block = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data() + o * block, block,
                  out.data() + o * total * inner + off);
    }
    off += block;
  }
  Tape* tp = nullptr;
  for (const Tensor& p : parts) {
    Tape* q = common_tape({&p});
    if (q) {
      if (tp && tp != q) throw ContractError("concat: parts on different tapes");
      tp = q;
    }
  }
  if (tp) {
    std::vector<int> pnodes;
    std::vector<std::size_t> blocks;
    for (const Tensor& p : parts) {
      pnodes.push_back(p.node());
      blocks.push_back(p.shape()[axis] * inner);
    }
    const std::size_t row = total * inner;
    std::vector<std::vector<std::size_t>> pshapes;
    for (const Tensor& p : parts) pshapes.push_back(p.shape());
    out.bind(tp, tp->record([pnodes, blocks, pshapes, outer, row](
                                Tape& t, const Tensor& g) {
      std::size_t off = 0;
      for (std::size_t pi = 0; pi < pnodes.size(); ++pi) {
        if (pnodes[pi] >= 0) {
          Tensor gp(pshapes[pi]);
          for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(g.data() + o * row + off, blocks[pi],
                        gp.data() + o * blocks[pi]);
          }
          t.accumulate(pnodes[pi], std::move(gp));
        }
        off += blocks[pi];
      }
    }));
  }
  return out;
}

namespace {

enum class EwKind { Add, Sub, Mul };

Tensor elementwise(const char* name, EwKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(name, a, b);
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case EwKind::Add: po[i] = pa[i] + pb[i]; break;
      case EwKind::Sub: po[i] = pa[i] - pb[i]; break;
      case EwKind::Mul: po[i] = pa[i] * pb[i]; break;
    }
  }
  check_finite(out, name);
  Tape* tp = common_tape({&a, &b});
  if (tp) {
    const int na = a.node(), nb = b.node();
    const Tensor av = (kind == EwKind::Mul && nb >= 0) ? saved(a) : Tensor();
    const Tensor bv = (kind == EwKind::Mul && na >= 0) ? saved(b) : Tensor();
    out.bind(tp, tp->record([kind, na, nb, av, bv](Tape& t, const Tensor& g) {
      switch (kind) {
        case EwKind::Add:
          if (na >= 0) t.accumulate(na, g);
          if (nb >= 0) t.accumulate(nb, g);
          break;
        case EwKind::Sub: {
          if (na >= 0) t.accumulate(na, g);
          if (nb >= 0) {
            Tensor gb(g.shape());
            for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] = -g.data()[i];
            t.accumulate(nb, std::move(gb));
          }
          break;
        }
        case EwKind::Mul: {
          if (na >= 0) {
            Tensor ga(g.shape());
            for (std::size_t i = 0; i < ga.size(); ++i)
              ga.data()[i] = g.data()[i] * bv.data()[i];
            t.accumulate(na, std::move(ga));
          }
          if (nb >= 0) {
            Tensor gb(g.shape());
            for (std::size_t i = 0; i < gb.size(); ++i)
              gb.data()[i] = g.data()[i] * av.data()[i];
            t.accumulate(nb, std::move(gb));
          }
          break;
        }
      }
    }));
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise("add", EwKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise("sub", EwKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise("mul", EwKind::Mul, a, b); }

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * s;
  check_finite(out, "scale");
  Tape* tp = common_tape({&a});
  if (tp) {
    const int na = a.node();
    out.bind(tp, tp->record([na, s](Tape& t, const Tensor& g) {
      if (na < 0) return;
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] = g.data()[i] * s;
      t.accumulate(na, std::move(ga));
    }));
  }
  return out;
}

namespace {

Tensor reduce_axis(const char* name, const Tensor& x, std::size_t axis, bool mean) {
  if (axis >= x.rank()) shape_fail(name, x, "axis out of range");
  const std::size_t mid = x.shape()[axis];
  if (mid == 0) shape_fail(name, x, "cannot reduce an empty axis");
  const std::size_t outer = leading_product(x.shape(), axis);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  std::vector<std::size_t> oshape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i != axis) oshape.push_back(x.shape()[i]);
  }
  Tensor out(oshape);
  const double inv = mean ? 1.0 / static_cast<double>(mid) : 1.0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = 0; a < mid; ++a) {
      const double* src = x.data() + (o * mid + a) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  if (mean) {
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= inv;
  }
  check_finite(out, name);
  Tape* tp = common_tape({&x});
  if (tp) {
    const int px = x.node();
    const auto ishape = x.shape();
    out.bind(tp, tp->record([px, ishape, outer, mid, inner, inv, mean](
                                Tape& t, const Tensor& g) {
      if (px < 0) return;
      Tensor gx(ishape);
      const double f = mean ? inv : 1.0;
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = g.data() + o * inner;
        for (std::size_t a = 0; a < mid; ++a) {
          double* dst = gx.data() + (o * mid + a) * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] * f;
        }
      }
      t.accumulate(px, std::move(gx));
    }));
  }
  return out;
}

}  // namespace

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  return reduce_axis("sum_axis", x, axis, false);
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  return reduce_axis("mean_axis", x, axis, true);
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  Tensor out = Tensor::scalar(acc);
  check_finite(out, "sum_all");
  Tape* tp = common_tape({&x});
  if (tp) {
    const int px = x.node();
    const auto ishape = x.shape();
    out.bind(tp, tp->record([px, ishape](Tape& t, const Tensor& g) {
      if (px < 0) return;
      t.accumulate(px, Tensor::full(ishape, g.value()));
    }));
  }
  return out;
}

Tensor take_rows(const Tensor& x, std::size_t start, std::size_t count) {
  if (x.rank() < 1 || start + count > x.shape()[0]) {
    shape_fail("take_rows", x, "row range out of bounds");
  }
  const std::size_t rowsz = x.shape()[0] == 0 ? 0 : x.size() / x.shape()[0];
  std::vector<std::size_t> oshape = x.shape();
  oshape[0] = count;
  Tensor out(oshape);
  std::copy_n(x.data() + start * rowsz, count * rowsz, out.data());
  Tape* tp = common_tape({&x});
  if (tp) {
    const int px = x.node();
    const auto ishape = x.shape();
    out.bind(tp, tp->record([px, ishape, start, count, rowsz](Tape& t,
                                                              const Tensor& g) {
      if (px < 0) return;
      Tensor gx(ishape);
      std::copy_n(g.data(), count * rowsz, gx.data() + start * rowsz);
      t.accumulate(px, std::move(gx));
    }));
  }
  return out;
}

Tensor add_frame_embedding(const Tensor& x, const Tensor& e) {
  if (x.rank() < 3 || e.rank() != 2) shape_fail("add_frame_embedding", x, e);
  const std::size_t c = x.shape()[x.rank() - 1];
  const std::size_t hw = x.shape()[x.rank() - 2];
  const std::size_t tt = x.shape()[x.rank() - 3];
  if (e.shape()[0] != tt || e.shape()[1] != c) shape_fail("add_frame_embedding", x, e);
  const std::size_t batch = leading_product(x.shape(), x.rank() - 3);
  Tensor out = x;
  out.detach();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < tt; ++t) {
      const double* et = e.data() + t * c;
      double* frame = out.data() + (b * tt + t) * hw * c;
      for (std::size_t pos = 0; pos < hw; ++pos) {
        double* row = frame + pos * c;
        for (std::size_t j = 0; j < c; ++j) row[j] += et[j];
      }
    }
  }
  check_finite(out, "add_frame_embedding");
  Tape* tp = common_tape({&x, &e});
  if (tp) {
    const int px = x.node(), pe = e.node();
    out.bind(tp, tp->record([px, pe, batch, tt, hw, c](Tape& t, const Tensor& g) {
      if (px >= 0) t.accumulate(px, g);
      if (pe >= 0) {
        Tensor ge({tt, c});
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t ti = 0; ti < tt; ++ti) {
            double* et = ge.data() + ti * c;
            const double* frame = g.data() + (b * tt + ti) * hw * c;
            for (std::size_t pos = 0; pos < hw; ++pos) {
              const double* row = frame + pos * c;
              for (std::size_t j = 0; j < c; ++j) et[j] += row[j];
            }
          }
        }
        t.accumulate(pe, std::move(ge));
      }
    }));
  }
  return out;
}

namespace {

void ccmh_check(const Tensor& v, const Tensor& bank) {
  if (v.rank() < 2 || bank.rank() != 4) shape_fail("ccmh_mix", v, bank);
  const std::size_t g = bank.shape()[0], nh = bank.shape()[1];
  const std::size_t t1 = bank.shape()[2], t2 = bank.shape()[3];
  const std::size_t tt = v.shape()[v.rank() - 2], c = v.shape()[v.rank() - 1];
  if (g != nh) {
    throw DimensionError("ccmh_mix: bank needs as many heads as groups, got " +
                         shape_string(bank.shape()));
  }
  if (t1 != tt || t2 != tt || g == 0 || c % g != 0) shape_fail("ccmh_mix", v, bank);
}

}  // namespace

Tensor ccmh_mix(const Tensor& v, const Tensor& bank) {
  ccmh_check(v, bank);
  const std::size_t gg = bank.shape()[0];
  const std::size_t tt = v.shape()[v.rank() - 2], c = v.shape()[v.rank() - 1];
  const std::size_t w = c / gg;
  const std::size_t batch = leading_product(v.shape(), v.rank() - 2);
  Tensor out(v.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* vb = v.data() + b * tt * c;
    double* ob = out.data() + b * tt * c;
    for (std::size_t g = 0; g < gg; ++g) {
      for (std::size_t k = 0; k < gg; ++k) {
        const double* mgk = bank.data() + (g * gg + k) * tt * tt;
        for (std::size_t t = 0; t < tt; ++t) {
          double* orow = ob + t * c + k * w;
          const double* mrow = mgk + t * tt;
          for (std::size_t u = 0; u < tt; ++u) {
            const double m = mrow[u];
            const double* vrow = vb + u * c + g * w;
            for (std::size_t j = 0; j < w; ++j) orow[j] += m * vrow[j];
          }
        }
      }
    }
  }
  check_finite(out, "ccmh_mix");
  Tape* tp = common_tape({&v, &bank});
  if (tp) {
    const int pv = v.node(), pb = bank.node();
    const Tensor vv = pb >= 0 ? saved(v) : Tensor();
    const Tensor bv = pv >= 0 ? saved(bank) : Tensor();
    const auto vshape = v.shape();
    const auto bshape = bank.shape();
    out.bind(tp, tp->record([pv, pb, vv, bv, vshape, bshape, batch, gg, tt, w,
                             c](Tape& t, const Tensor& g) {
      if (pv >= 0) {
        Tensor gv(vshape);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gb = g.data() + b * tt * c;
          double* dv = gv.data() + b * tt * c;
          for (std::size_t gi = 0; gi < gg; ++gi) {
            for (std::size_t k = 0; k < gg; ++k) {
              const double* mgk = bv.data() + (gi * gg + k) * tt * tt;
              for (std::size_t ti = 0; ti < tt; ++ti) {
                const double* grow = gb + ti * c + k * w;
                const double* mrow = mgk + ti * tt;
                for (std::size_t u = 0; u < tt; ++u) {
                  const double m = mrow[u];
                  double* vrow = dv + u * c + gi * w;
                  for (std::size_t j = 0; j < w; ++j) vrow[j] += m * grow[j];
                }
              }
            }
          }
        }
        t.accumulate(pv, std::move(gv));
      }
      if (pb >= 0) {
        Tensor gbank(bshape);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gb = g.data() + b * tt * c;
          const double* vb = vv.data() + b * tt * c;
          for (std::size_t gi = 0; gi < gg; ++gi) {
            for (std::size_t k = 0; k < gg; ++k) {
              double* mgk = gbank.data() + (gi * gg + k) * tt * tt;
              for (std::size_t ti = 0; ti < tt; ++ti) {
                const double* grow = gb + ti * c + k * w;
                double* mrow = mgk + ti * tt;
                for (std::size_t u = 0; u < tt; ++u) {
                  const double* vrow = vb + u * c + gi * w;
                  double acc = 0.0;
                  for (std::size_t j = 0; j < w; ++j) acc += grow[j] * vrow[j];
                  mrow[u] += acc;
                }
              }
            }
          }
        }
        t.accumulate(pb, std::move(gbank));
      }
    }));
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() < 1 || gamma.rank() != 1 || beta.rank() != 1 ||
      gamma.shape()[0] != x.shape().back() || beta.shape()[0] != x.shape().back()) {
    shape_fail("layer_norm", x, gamma);
  }
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.size() / c;
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  Tensor invs({rows});
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xi = x.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xi[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = xi[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    invs.data()[i] = inv;
    double* hi = xhat.data() + i * c;
    double* oi = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      hi[j] = (xi[j] - mu) * inv;
      oi[j] = gamma.data()[j] * hi[j] + beta.data()[j];
    }
  }
  check_finite(out, "layer_norm");
  Tape* tp = common_tape({&x, &gamma, &beta});
  if (tp) {
    const int px = x.node(), pg = gamma.node(), pbeta = beta.node();
    const Tensor gv = saved(gamma);
    out.bind(tp, tp->record([px, pg, pbeta, xhat, invs, gv, rows, c](
                                Tape& t, const Tensor& g) {
      if (px >= 0) {
        Tensor gx(xhat.shape());
        for (std::size_t i = 0; i < rows; ++i) {
          const double* gi = g.data() + i * c;
          const double* hi = xhat.data() + i * c;
          const double inv = invs.data()[i];
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double dh = gi[j] * gv.data()[j];
            m1 += dh;
            m2 += dh * hi[j];
          }
          m1 /= static_cast<double>(c);
          m2 /= static_cast<double>(c);
          double* oi = gx.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) {
            const double dh = gi[j] * gv.data()[j];
            oi[j] = inv * (dh - m1 - hi[j] * m2);
          }
        }
        t.accumulate(px, std::move(gx));
      }
      if (pg >= 0 || pbeta >= 0) {
        Tensor ggamma({c});
        Tensor gbeta({c});
        for (std::size_t i = 0; i < rows; ++i) {
          const double* gi = g.data() + i * c;
          const double* hi = xhat.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) {
            ggamma.data()[j] += gi[j] * hi[j];
            gbeta.data()[j] += gi[j];
          }
        }
        if (pg >= 0) t.accumulate(pg, std::move(ggamma));
        if (pbeta >= 0) t.accumulate(pbeta, std::move(gbeta));
      }
    }));
  }
  return out;
}

Tensor patchify(const Tensor& x, std::size_t p) {
  if (x.rank() != 5) shape_fail("patchify", x, "needs (B, T, H, W, c)");
  const std::size_t bb = x.shape()[0], tt = x.shape()[1];
  const std::size_t h = x.shape()[2], w = x.shape()[3], ci = x.shape()[4];
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw DimensionError("patchify: patch " + std::to_string(p) +
                         " does not tile shape " + shape_string(x.shape()));
  }
  const std::size_t hp = h / p, wp = w / p;
  const std::size_t tokens = hp * wp, slot = p * p * ci;
  Tensor out({bb, tt, tokens, slot});
  const double* src = x.data();
  double* dst = out.data();
  for (std::size_t b = 0; b < bb; ++b) {
    for (std::size_t t = 0; t < tt; ++t) {
      const double* frame = src + (b * tt + t) * h * w * ci;
      double* oframe = dst + (b * tt + t) * tokens * slot;
      for (std::size_t yh = 0; yh < hp; ++yh) {
        for (std::size_t xw = 0; xw < wp; ++xw) {
          double* tok = oframe + (yh * wp + xw) * slot;
          for (std::size_t dy = 0; dy < p; ++dy) {
            const double* row = frame + ((yh * p + dy) * w + xw * p) * ci;
            std::copy_n(row, p * ci, tok + dy * p * ci);
          }
        }
      }
    }
  }
  Tape* tp = common_tape({&x});
  if (tp) {
    const int px = x.node();
    const auto ishape = x.shape();
    out.bind(tp, tp->record([px, ishape, p, bb, tt, h, w, ci, hp, wp, tokens,
                             slot](Tape& t, const Tensor& g) {
      if (px < 0) return;
      Tensor gx(ishape);
      double* dst = gx.data();
      for (std::size_t b = 0; b < bb; ++b) {
        for (std::size_t ti = 0; ti < tt; ++ti) {
          double* frame = dst + (b * tt + ti) * h * w * ci;
          const double* oframe = g.data() + (b * tt + ti) * tokens * slot;
          for (std::size_t yh = 0; yh < hp; ++yh) {
            for (std::size_t xw = 0; xw < wp; ++xw) {
              const double* tok = oframe + (yh * wp + xw) * slot;
              for (std::size_t dy = 0; dy < p; ++dy) {
                double* row = frame + ((yh * p + dy) * w + xw * p) * ci;
                std::copy_n(tok + dy * p * ci, p * ci, row);
              }
            }
          }
        }
      }
      t.accumulate(px, std::move(gx));
    }));
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || logits.shape()[0] != labels.size() ||
      logits.shape()[1] == 0) {
    shape_fail("cross_entropy", logits, "needs (B, K) logits with B labels");
  }
  const std::size_t bsz = logits.shape()[0], k = logits.shape()[1];
  for (const std::size_t l : labels) {
    if (l >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(l) +
                          " out of range for " + std::to_string(k) + " classes");
    }
  }
  Tensor probs({bsz, k});
  double total = 0.0;
  for (std::size_t b = 0; b < bsz; ++b) {
    const double* z = logits.data() + b * k;
    double* pb = probs.data() + b * k;
    double mx = z[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      pb[j] = std::exp(z[j] - mx);
      sum += pb[j];
    }
    for (std::size_t j = 0; j < k; ++j) pb[j] /= sum;
    total += mx + std::log(sum) - z[labels[b]];
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(bsz));
  check_finite(out, "cross_entropy");
  Tape* tp = common_tape({&logits});
  if (tp) {
    const int pl = logits.node();
    const std::vector<std::size_t> lab = labels;
    out.bind(tp, tp->record([pl, probs, lab, bsz, k](Tape& t, const Tensor& g) {
      if (pl < 0) return;
      const double go = g.value() / static_cast<double>(bsz);
      Tensor gl({bsz, k});
      for (std::size_t b = 0; b < bsz; ++b) {
        const double* pb = probs.data() + b * k;
        double* gb = gl.data() + b * k;
        for (std::size_t j = 0; j < k; ++j) gb[j] = go * pb[j];
        gb[lab[b]] -= go;
      }
      t.accumulate(pl, std::move(gl));
    }));
  }
  return out;
}

Tensor linear_last(const Tensor& x, const Tensor& w) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.shape()[0]) {
    shape_fail("linear_last", x, w);
  }
  const std::size_t k = w.shape()[0], m = w.shape()[1];
  const std::size_t rows = x.size() / k;
  Tensor flat = reshape(x, {rows, k});
  Tensor res = matmul(flat, w);
  std::vector<std::size_t> oshape = x.shape();
  oshape.back() = m;
  return reshape(res, std::move(oshape));
}

}  // namespace gta
