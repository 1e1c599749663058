#include "omniban/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "omniban/errors.hpp"
#include "omniban/flop_meter.hpp"

namespace omniban {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_matrix(const Var& v, const char* what) {
  if (v.shape().size() != 2) {
    throw DimensionError(std::string(what) + " expects a matrix, got " + to_string(v.shape()));
  }
}

Var record1(OpKind kind, Var in, Tensor value, BackwardFn fn, std::int64_t attr = 0) {
  const std::array<Var, 1> inputs{in};
  return in.tape().record(kind, inputs, std::move(value), std::move(fn), attr);
}

Var record2(OpKind kind, Var a, Var b, Tensor value, BackwardFn fn) {
  const std::array<Var, 2> inputs{a, b};
  return a.tape().record(kind, inputs, std::move(value), std::move(fn));
}

// c[m x n] += a[m x k] . b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] . b[k x n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T . g[m x n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

// Offsets into an operand of shape `in` for every element of `out`.
std::vector<std::size_t> broadcast_offsets(const Shape& out, const Shape& in) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t d = 0; d < in.size(); ++d) {
    const std::size_t in_axis = in.size() - 1 - d;
    const std::size_t out_axis = rank - 1 - d;
    stride[out_axis] = in[in_axis] == 1 ? 0 : s;
    s *= in[in_axis];
  }
  const std::size_t total = numel(out);
  std::vector<std::size_t> offsets(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < total; ++i) {
    offsets[i] = off;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      off += stride[d];
      if (idx[d] < out[d]) break;
      off -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return offsets;
}

enum class Binary { kAdd, kSub, kMul, kDiv };

Var binary(Binary kind, Var a, Var b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = numel(out_shape);
  const bool a_full = a.shape() == out_shape;
  const bool b_full = b.shape() == out_shape;
  auto a_off = a_full ? std::vector<std::size_t>{} : broadcast_offsets(out_shape, a.shape());
  auto b_off = b_full ? std::vector<std::size_t>{} : broadcast_offsets(out_shape, b.shape());
  auto ia = [&a_off, a_full](std::size_t i) { return a_full ? i : a_off[i]; };
  auto ib = [&b_off, b_full](std::size_t i) { return b_full ? i : b_off[i]; };

  const auto av = a.value().data();
  const auto bv = b.value().data();
  std::vector<double> out(n);
  switch (kind) {
    case Binary::kAdd:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[ia(i)] + bv[ib(i)];
      break;
    case Binary::kSub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[ia(i)] - bv[ib(i)];
      break;
    case Binary::kMul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[ia(i)] * bv[ib(i)];
      break;
    case Binary::kDiv:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[ia(i)] / bv[ib(i)];
      break;
  }
  if (kind == Binary::kDiv) {
    flops::transcendentals(n);
  } else {
    flops::pointwise(n);
  }

  const OpKind op = kind == Binary::kAdd   ? OpKind::kAdd
                    : kind == Binary::kSub ? OpKind::kSub
                    : kind == Binary::kMul ? OpKind::kMul
                                           : OpKind::kDiv;
  return record2(
      op, a, b, Tensor(out_shape, std::move(out)),
      [kind, n, a_full, b_full, a_off = std::move(a_off), b_off = std::move(b_off)](
          BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto ga = ctx.input_grad(0);
        auto gb = ctx.input_grad(1);
        const auto av = ctx.input(0).data();
        const auto bv = ctx.input(1).data();
        auto ia = [&](std::size_t i) { return a_full ? i : a_off[i]; };
        auto ib = [&](std::size_t i) { return b_full ? i : b_off[i]; };
        if (!ga.empty()) {
          for (std::size_t i = 0; i < n; ++i) {
            switch (kind) {
              case Binary::kAdd:
              case Binary::kSub: ga[ia(i)] += g[i]; break;
              case Binary::kMul: ga[ia(i)] += g[i] * bv[ib(i)]; break;
              case Binary::kDiv: ga[ia(i)] += g[i] / bv[ib(i)]; break;
            }
          }
        }
        if (!gb.empty()) {
          for (std::size_t i = 0; i < n; ++i) {
            switch (kind) {
              case Binary::kAdd: gb[ib(i)] += g[i]; break;
              case Binary::kSub: gb[ib(i)] -= g[i]; break;
              case Binary::kMul: gb[ib(i)] += g[i] * av[ia(i)]; break;
              case Binary::kDiv: {
                const double q = bv[ib(i)];
                gb[ib(i)] -= g[i] * av[ia(i)] / (q * q);
                break;
              }
            }
          }
        }
      });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t da = d < rank - a.size() ? 1 : a[d - (rank - a.size())];
    const std::size_t db = d < rank - b.size() ? 1 : b[d - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("shapes " + to_string(a) + " and " + to_string(b) +
                           " are not broadcastable");
    }
    out[d] = std::max(da, db);
  }
  return out;
}

Var matmul(Var a, Var b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul inner dimensions disagree: " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.value().data().data(), b.value().data().data(), out.data(), m, k, n);
  flops::madds(static_cast<std::uint64_t>(m) * n * k);
  return record2(OpKind::kMatMul, a, b, Tensor({m, n}, std::move(out)),
                 [m, k, n](BackwardContext& ctx) {
                   const double* g = ctx.out_grad().data();
                   if (auto ga = ctx.input_grad(0); !ga.empty()) {
                     gemm_nt(g, ctx.input(1).data().data(), ga.data(), m, n, k);
                   }
                   if (auto gb = ctx.input_grad(1); !gb.empty()) {
                     gemm_tn(ctx.input(0).data().data(), g, gb.data(), m, k, n);
                   }
                 });
}

Var linear(Var x, Var w, Var bias) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  const std::size_t n = x.shape()[0], din = x.shape()[1], dout = w.shape()[1];
  if (w.shape()[0] != din) {
    throw DimensionError("linear input width disagrees: " + to_string(x.shape()) + " x " +
                         to_string(w.shape()));
  }
  if (bias.value().size() != dout) {
    throw DimensionError("linear bias " + to_string(bias.shape()) + " does not match output width " +
                         std::to_string(dout));
  }
  std::vector<double> out(n * dout);
  const auto bv = bias.value().data();
  for (std::size_t i = 0; i < n; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * dout);
  gemm_nn(x.value().data().data(), w.value().data().data(), out.data(), n, din, dout);
  flops::madds(static_cast<std::uint64_t>(n) * din * dout);
  flops::pointwise(static_cast<std::uint64_t>(n) * dout);
  const std::array<Var, 3> inputs{x, w, bias};
  return x.tape().record(OpKind::kLinear, inputs, Tensor({n, dout}, std::move(out)),
                         [n, din, dout](BackwardContext& ctx) {
                           const double* g = ctx.out_grad().data();
                           if (auto gx = ctx.input_grad(0); !gx.empty()) {
                             gemm_nt(g, ctx.input(1).data().data(), gx.data(), n, dout, din);
                           }
                           if (auto gw = ctx.input_grad(1); !gw.empty()) {
                             gemm_tn(ctx.input(0).data().data(), g, gw.data(), n, din, dout);
                           }
                           if (auto gb = ctx.input_grad(2); !gb.empty()) {
                             for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t j = 0; j < dout; ++j) gb[j] += g[i * dout + j];
                             }
                           }
                         });
}

Var linear(Var x, Var w) { return matmul(x, w); }

Var add(Var a, Var b) { return binary(Binary::kAdd, a, b); }
Var sub(Var a, Var b) { return binary(Binary::kSub, a, b); }
Var mul(Var a, Var b) { return binary(Binary::kMul, a, b); }

Var div(Var a, Var b) { return binary(Binary::kDiv, a, b); }

Var scale(Var x, double factor) {
  const auto xv = x.value().data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  flops::pointwise(xv.size());
  return record1(OpKind::kScale, x, Tensor(x.shape(), std::move(out)),
                 [factor](BackwardContext& ctx) {
                   auto g = ctx.out_grad();
                   auto gx = ctx.input_grad(0);
                   for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
                 });
}

Var transpose(Var x) {
  require_matrix(x, "transpose");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  const auto xv = x.value().data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  return record1(OpKind::kTranspose, x, Tensor({c, r}, std::move(out)),
                 [r, c](BackwardContext& ctx) {
                   auto g = ctx.out_grad();
                   auto gx = ctx.input_grad(0);
                   for (std::size_t i = 0; i < r; ++i) {
                     for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
                   }
                 });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return record1(OpKind::kReshape, x, std::move(out), [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (count == 0 || begin + count > c) {
    throw DimensionError("column slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         to_string(x.shape()));
  }
  const auto xv = x.value().data();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(xv.begin() + i * c + begin, count, out.begin() + i * count);
  }
  return record1(
      OpKind::kSliceCols, x, Tensor({r, count}, std::move(out)),
      [r, c, begin, count](BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < count; ++j) gx[i * c + begin + j] += g[i * count + j];
        }
      },
      static_cast<std::int64_t>(begin));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t r = parts[0].shape().at(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.shape()[0] != r) {
      throw DimensionError("concat_cols row counts differ: " + to_string(parts[0].shape()) +
                           " vs " + to_string(p.shape()));
    }
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].value().data();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(pv.begin() + i * widths[k], widths[k], out.begin() + i * total + offset);
    }
    offset += widths[k];
  }
  return parts[0].tape().record(OpKind::kConcatCols, parts, Tensor({r, total}, std::move(out)),
                                [r, total, widths](BackwardContext& ctx) {
                                  auto g = ctx.out_grad();
                                  std::size_t offset = 0;
                                  for (std::size_t k = 0; k < widths.size(); ++k) {
                                    if (auto gp = ctx.input_grad(k); !gp.empty()) {
                                      for (std::size_t i = 0; i < r; ++i) {
                                        for (std::size_t j = 0; j < widths[k]; ++j) {
                                          gp[i * widths[k] + j] += g[i * total + offset + j];
                                        }
                                      }
                                    }
                                    offset += widths[k];
                                  }
                                });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t c = parts[0].shape().at(1);
  std::vector<std::size_t> sizes;
  std::vector<double> out;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.shape()[1] != c) {
      throw DimensionError("concat_rows column counts differ: " + to_string(parts[0].shape()) +
                           " vs " + to_string(p.shape()));
    }
    const auto pv = p.value().data();
    out.insert(out.end(), pv.begin(), pv.end());
    sizes.push_back(pv.size());
    rows += p.shape()[0];
  }
  return parts[0].tape().record(OpKind::kConcatRows, parts, Tensor({rows, c}, std::move(out)),
                                [sizes](BackwardContext& ctx) {
                                  auto g = ctx.out_grad();
                                  std::size_t offset = 0;
                                  for (std::size_t k = 0; k < sizes.size(); ++k) {
                                    if (auto gp = ctx.input_grad(k); !gp.empty()) {
                                      for (std::size_t i = 0; i < sizes[k]; ++i) {
                                        gp[i] += g[offset + i];
                                      }
                                    }
                                    offset += sizes[k];
                                  }
                                });
}

Var mask_fill(Var x, const std::vector<bool>& keep) {
  const auto xv = x.value().data();
  if (keep.size() != xv.size()) {
    throw DimensionError("mask of length " + std::to_string(keep.size()) +
                         " does not cover tensor " + to_string(x.shape()));
  }
  std::vector<double> out(xv.begin(), xv.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!keep[i]) out[i] = kNegInf;
  }
  return record1(OpKind::kMaskFill, x, Tensor(x.shape(), std::move(out)),
                 [keep](BackwardContext& ctx) {
                   auto g = ctx.out_grad();
                   auto gx = ctx.input_grad(0);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     if (keep[i]) gx[i] += g[i];
                   }
                 });
}

Var softmax(Var x, std::size_t axis) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) {
    throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for " +
                         to_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t len = shape[axis];

  const auto xv = x.value().data();
  std::vector<double> out(xv.size(), 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = kNegInf;
      for (std::size_t i = 0; i < len; ++i) {
        const double v = xv[base + i * inner];
        if (std::isnan(v)) {  // propagate rather than read as fully masked
          mx = v;
          break;
        }
        mx = std::max(mx, v);
      }
      if (mx == kNegInf) throw MaskError("fully masked softmax slice");
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double v = xv[base + i * inner];
        const double e = v == kNegInf ? 0.0 : std::exp(v - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= total;
    }
  }
  flops::pointwise(3 * xv.size());
  flops::transcendentals(2 * xv.size());
  return record1(
      OpKind::kSoftmax, x, Tensor(shape, std::move(out)),
      [outer, inner, len](BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        const auto y = ctx.output().data();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t i = 0; i < len; ++i) dot += g[base + i * inner] * y[base + i * inner];
            for (std::size_t i = 0; i < len; ++i) {
              const std::size_t k = base + i * inner;
              gx[k] += y[k] * (g[k] - dot);
            }
          }
        }
      },
      static_cast<std::int64_t>(axis));
}

Var relu(Var x) {
  const auto xv = x.value().data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  flops::pointwise(xv.size());
  return record1(OpKind::kRelu, x, Tensor(x.shape(), std::move(out)), [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    const auto xv = ctx.input(0).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var square(Var x) {
  const auto xv = x.value().data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * xv[i];
  flops::pointwise(xv.size());
  return record1(OpKind::kSquare, x, Tensor(x.shape(), std::move(out)), [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    const auto xv = ctx.input(0).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  flops::pointwise(x.value().size());
  return record1(OpKind::kSum, x, Tensor::scalar(total), [](BackwardContext& ctx) {
    const double g = ctx.out_grad()[0];
    for (double& gx : ctx.input_grad(0)) gx += g;
  });
}

Var sum_rows(Var x) {
  require_matrix(x, "sum_rows");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  const auto xv = x.value().data();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j] += xv[i * c + j];
  }
  flops::pointwise(xv.size());
  return record1(OpKind::kSumRows, x, Tensor({1, c}, std::move(out)),
                 [r, c](BackwardContext& ctx) {
                   auto g = ctx.out_grad();
                   auto gx = ctx.input_grad(0);
                   for (std::size_t i = 0; i < r; ++i) {
                     for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j];
                   }
                 });
}

Var l2_normalize_rows(Var x) {
  require_matrix(x, "l2_normalize_rows");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  const auto xv = x.value().data();
  std::vector<double> out(xv.size(), 0.0);
  std::vector<double> norms(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += xv[i * c + j] * xv[i * c + j];
    norms[i] = std::sqrt(ss);
    if (norms[i] > 0.0) {
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] / norms[i];
    }
  }
  flops::madds(xv.size());
  flops::transcendentals(r + xv.size());
  return record1(OpKind::kRowL2Normalize, x, Tensor(x.shape(), std::move(out)),
                 [r, c, norms = std::move(norms)](BackwardContext& ctx) {
                   auto g = ctx.out_grad();
                   auto gx = ctx.input_grad(0);
                   const auto y = ctx.output().data();
                   for (std::size_t i = 0; i < r; ++i) {
                     if (norms[i] == 0.0) continue;
                     double dot = 0.0;
                     for (std::size_t j = 0; j < c; ++j) dot += y[i * c + j] * g[i * c + j];
                     for (std::size_t j = 0; j < c; ++j) {
                       const std::size_t k = i * c + j;
                       gx[k] += (g[k] - y[k] * dot) / norms[i];
                     }
                   }
                 });
}

Var bce_with_logits(Var logits, const Tensor& target) {
  const auto xv = logits.value().data();
  const auto tv = target.data();
  if (tv.size() != xv.size()) {
    throw DimensionError("bce_with_logits target " + to_string(target.shape()) +
                         " does not match logits " + to_string(logits.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (!(tv[i] >= 0.0 && tv[i] <= 1.0)) {
      throw std::domain_error("bce_with_logits target outside [0, 1]");
    }
    const double x = xv[i];
    total += std::max(x, 0.0) - x * tv[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const double n = static_cast<double>(xv.size());
  flops::pointwise(4 * xv.size());
  flops::transcendentals(2 * xv.size() + 1);
  return record1(OpKind::kBceWithLogits, logits, Tensor::scalar(total / n),
                 [target, n](BackwardContext& ctx) {
                   const double g = ctx.out_grad()[0];
                   auto gx = ctx.input_grad(0);
                   const auto xv = ctx.input(0).data();
                   const auto tv = target.data();
                   for (std::size_t i = 0; i < gx.size(); ++i) {
                     const double x = xv[i];
                     const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                                 : std::exp(x) / (1.0 + std::exp(x));
                     gx[i] += g * (sig - tv[i]) / n;
                   }
                 });
}

std::vector<bool> key_mask_pattern(std::size_t rows, const std::vector<bool>& key_mask) {
  std::vector<bool> keep;
  keep.reserve(rows * key_mask.size());
  for (std::size_t i = 0; i < rows; ++i) keep.insert(keep.end(), key_mask.begin(), key_mask.end());
  return keep;
}

Tensor mask_column(const std::vector<bool>& mask) {
  std::vector<double> col(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) col[i] = mask[i] ? 1.0 : 0.0;
  return Tensor({mask.size(), 1}, std::move(col));
}

}  // namespace omniban
