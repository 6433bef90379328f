#include "fisale/ops.hpp"

#include <cmath>
#include <numbers>

namespace fisale::ops {
namespace {

Graph& graph_of(Var v) {
  if (!v.valid()) throw std::logic_error("operation on an unbound Var");
  return *v.graph;
}

void require_same_shape(Var a, Var b, const char* what) {
  if (a.value().size() != b.value().size() || a.rows() != b.rows()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

Tensor scaled(const Tensor& t, double factor) {
  Tensor out = t;
  for (auto& v : out.data()) v *= factor;
  return out;
}

}  // namespace

Var matmul(Var a, Var b, bool transpose_a, bool transpose_b) {
  Graph& g = graph_of(a);
  Tensor out = fisale::matmul(a.value(), b.value(), transpose_a, transpose_b);
  const int ia = a.id, ib = b.id;
  return g.push(std::move(out), {a, b},
                [ia, ib, transpose_a, transpose_b](Graph& g, int, const Tensor& dy) {
                  const Tensor& av = g.value(ia);
                  const Tensor& bv = g.value(ib);
                  if (g.requires_grad(ia)) {
                    // C = op(A) op(B): dA = dC op(B)^T, transposed back when A was transposed.
                    Tensor& da = g.grad(ia);
                    if (!transpose_a) {
                      matmul_accumulate(dy, bv, da, false, !transpose_b);
                    } else {
                      matmul_accumulate(bv, dy, da, transpose_b, true);
                    }
                  }
                  if (g.requires_grad(ib)) {
                    Tensor& db = g.grad(ib);
                    if (!transpose_b) {
                      matmul_accumulate(av, dy, db, !transpose_a, false);
                    } else {
                      matmul_accumulate(dy, av, db, true, transpose_a);
                    }
                  }
                });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const int ia = a.id;
  return g.push(fisale::transpose(a.value()), {a},
                [ia](Graph& g, int, const Tensor& dy) { g.accumulate(ia, fisale::transpose(dy)); });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Graph& g = graph_of(a);
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  const int ia = a.id, ib = b.id;
  return g.push(std::move(out), {a, b}, [ia, ib](Graph& g, int, const Tensor& dy) {
    g.accumulate(ia, dy);
    g.accumulate(ib, dy);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Graph& g = graph_of(a);
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const int ia = a.id, ib = b.id;
  return g.push(std::move(out), {a, b}, [ia, ib](Graph& g, int, const Tensor& dy) {
    g.accumulate(ia, dy);
    if (g.requires_grad(ib)) g.accumulate(ib, scaled(dy, -1.0));
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Graph& g = graph_of(a);
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const int ia = a.id, ib = b.id;
  return g.push(std::move(out), {a, b}, [ia, ib](Graph& g, int, const Tensor& dy) {
    const auto& av = g.value(ia);
    const auto& bv = g.value(ib);
    if (g.requires_grad(ia)) {
      auto& da = g.grad(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      auto& db = g.grad(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Graph& g = graph_of(a);
  const int ia = a.id;
  return g.push(scaled(a.value(), factor), {a}, [ia, factor](Graph& g, int, const Tensor& dy) {
    g.accumulate(ia, scaled(dy, factor));
  });
}

Var add_constant(Var a, const Tensor& c) {
  if (c.size() != a.value().size()) throw DimensionError("add_constant: size mismatch");
  Graph& g = graph_of(a);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  const int ia = a.id;
  return g.push(std::move(out), {a},
                [ia](Graph& g, int, const Tensor& dy) { g.accumulate(ia, dy); });
}

Var add_row(Var a, Var bias) {
  const std::size_t r = a.rows(), c = a.cols();
  if (bias.value().size() != c) {
    throw DimensionError("add_row: bias of size " + std::to_string(bias.value().size()) +
                         " for width " + std::to_string(c));
  }
  Graph& g = graph_of(a);
  Tensor out = a.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += bv[j];
  const int ia = a.id, ib = bias.id;
  return g.push(std::move(out), {a, bias}, [ia, ib, r, c](Graph& g, int, const Tensor& dy) {
    g.accumulate(ia, dy);
    if (g.requires_grad(ib)) {
      auto& db = g.grad(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) db[j] += dy(i, j);
    }
  });
}

Var scalar_affine(Var x, Var w, Var b) {
  if (w.value().size() != 1 || b.value().size() != 1) {
    throw DimensionError("scalar_affine: weight and bias must be single entries");
  }
  Graph& g = graph_of(x);
  const double wv = w.value()[0], bv = b.value()[0];
  Tensor out = x.value();
  for (auto& v : out.data()) v = v * wv + bv;
  const int ix = x.id, iw = w.id, ib = b.id;
  return g.push(std::move(out), {x, w, b}, [ix, iw, ib](Graph& g, int, const Tensor& dy) {
    const auto& xv = g.value(ix);
    const double wv = g.value(iw)[0];
    if (g.requires_grad(ix)) g.accumulate(ix, scaled(dy, wv));
    if (g.requires_grad(iw)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < dy.size(); ++i) acc += dy[i] * xv[i];
      g.grad(iw)[0] += acc;
    }
    if (g.requires_grad(ib)) {
      double acc = 0.0;
      for (double v : dy.data()) acc += v;
      g.grad(ib)[0] += acc;
    }
  });
}

Var softmax(Var x, int axis) {
  Graph& g = graph_of(x);
  const int ix = x.id;
  return g.push(fisale::softmax(x.value(), axis), {x},
                [ix, axis](Graph& g, int self, const Tensor& dy) {
                  const Tensor& yv = g.value(self);
                  const std::size_t r = yv.rows(), c = yv.cols();
                  Tensor dx(yv.shape());
                  if (axis == 1) {
                    for (std::size_t i = 0; i < r; ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < c; ++j) dot += dy(i, j) * yv(i, j);
                      for (std::size_t j = 0; j < c; ++j) dx(i, j) = yv(i, j) * (dy(i, j) - dot);
                    }
                  } else {
                    std::vector<double> dot(c, 0.0);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j) dot[j] += dy(i, j) * yv(i, j);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j) dx(i, j) = yv(i, j) * (dy(i, j) - dot[j]);
                  }
                  g.accumulate(ix, dx);
                });
}

Var gelu(Var x) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const int ix = x.id;
  return g.push(std::move(out), {x}, [ix](Graph& g, int, const Tensor& dy) {
    const auto& xv = g.value(ix);
    Tensor dx(xv.shape());
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] = dy[i] * (cdf + v * pdf);
    }
    g.accumulate(ix, dx);
  });
}

Var square(Var x) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) v *= v;
  const int ix = x.id;
  return g.push(std::move(out), {x}, [ix](Graph& g, int, const Tensor& dy) {
    const auto& xv = g.value(ix);
    Tensor dx(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] = 2.0 * xv[i] * dy[i];
    g.accumulate(ix, dx);
  });
}

Var sqrt(Var x) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) {
    if (v < 0.0) throw NumericError("sqrt of a negative value");
    v = std::sqrt(v);
  }
  const int ix = x.id;
  return g.push(std::move(out), {x}, [ix](Graph& g, int self, const Tensor& dy) {
    const auto& yv = g.value(self);
    Tensor dx(yv.shape());
    // Subgradient 0 at the origin.
    for (std::size_t i = 0; i < yv.size(); ++i) dx[i] = yv[i] > 0.0 ? dy[i] / (2.0 * yv[i]) : 0.0;
    g.accumulate(ix, dx);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
    r += p.rows();
  }
  Graph& g = graph_of(parts[0]);
  Tensor out({r, c});
  std::vector<int> ids;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset * c));
    offset += p.rows();
    ids.push_back(p.id);
  }
  return g.push(std::move(out), parts, [ids, c](Graph& g, int, const Tensor& dy) {
    std::size_t offset = 0;
    for (int id : ids) {
      const std::size_t rows = g.value(id).rows();
      if (g.requires_grad(id)) {
        auto& dst = g.grad(id);
        const auto src = dy.data().subspan(offset * c, rows * c);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
      }
      offset += rows;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols: row counts differ");
    c += p.cols();
  }
  Graph& g = graph_of(parts[0]);
  Tensor out({r, c});
  std::vector<int> ids;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
    offset += v.cols();
    ids.push_back(p.id);
  }
  return g.push(std::move(out), parts, [ids, r](Graph& g, int, const Tensor& dy) {
    std::size_t offset = 0;
    for (int id : ids) {
      const std::size_t width = g.value(id).cols();
      if (g.requires_grad(id)) {
        auto& dst = g.grad(id);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < width; ++j) dst(i, j) += dy(i, offset + j);
      }
      offset += width;
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const std::size_t r = x.rows(), c = x.cols();
  if (count == 0 || begin + count > r) throw DimensionError("slice_rows: range out of bounds");
  Graph& g = graph_of(x);
  const auto src = x.value().data().subspan(begin * c, count * c);
  Tensor out({count, c}, std::vector<double>(src.begin(), src.end()));
  const int ix = x.id;
  return g.push(std::move(out), {x}, [ix, begin, count, c](Graph& g, int, const Tensor& dy) {
    auto& dst = g.grad(ix);
    for (std::size_t i = 0; i < count * c; ++i) dst[begin * c + i] += dy[i];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const std::size_t r = x.rows(), c = x.cols();
  if (count == 0 || begin + count > c) throw DimensionError("slice_cols: range out of bounds");
  Graph& g = graph_of(x);
  Tensor out({r, count});
  const auto& v = x.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = v(i, begin + j);
  const int ix = x.id;
  return g.push(std::move(out), {x}, [ix, begin, count, r](Graph& g, int, const Tensor& dy) {
    auto& dst = g.grad(ix);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) dst(i, begin + j) += dy(i, j);
  });
}

std::vector<Var> chunk_rows(Var x, std::size_t block) {
  if (block == 0 || x.rows() % block != 0) {
    throw DimensionError("chunk_rows: " + std::to_string(x.rows()) +
                         " rows do not split into blocks of " + std::to_string(block));
  }
  std::vector<Var> out;
  for (std::size_t b = 0; b < x.rows(); b += block) out.push_back(slice_rows(x, b, block));
  return out;
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const int ix = x.id;
  return g.push(Tensor::scalar(acc), {x}, [ix](Graph& g, int, const Tensor& dy) {
    auto& dst = g.grad(ix);
    for (auto& v : dst.data()) v += dy[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var neighbor_mix(Var weights, Var values, std::span<const std::size_t> index) {
  const std::size_t m = weights.rows(), k = weights.cols();
  const std::size_t n = values.rows(), d = values.cols();
  if (index.size() != m * k) throw DimensionError("neighbor_mix: index length mismatch");
  for (auto j : index) {
    if (j >= n) throw DimensionError("neighbor_mix: neighbor index out of range");
  }
  Graph& g = graph_of(weights);
  const auto& w = weights.value();
  const auto& v = values.value();
  Tensor out({m, d});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double wij = w(i, j);
      const std::size_t src = index[i * k + j];
      for (std::size_t c = 0; c < d; ++c) out(i, c) += wij * v(src, c);
    }
  const int iw = weights.id, iv = values.id;
  std::vector<std::size_t> idx(index.begin(), index.end());
  return g.push(std::move(out), {weights, values},
                [iw, iv, idx = std::move(idx), m, k, d](Graph& g, int, const Tensor& dy) {
                  const auto& w = g.value(iw);
                  const auto& v = g.value(iv);
                  if (g.requires_grad(iw)) {
                    auto& dw = g.grad(iw);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < k; ++j) {
                        const std::size_t src = idx[i * k + j];
                        double acc = 0.0;
                        for (std::size_t c = 0; c < d; ++c) acc += dy(i, c) * v(src, c);
                        dw(i, j) += acc;
                      }
                  }
                  if (g.requires_grad(iv)) {
                    auto& dv = g.grad(iv);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < k; ++j) {
                        const std::size_t src = idx[i * k + j];
                        for (std::size_t c = 0; c < d; ++c) dv(src, c) += w(i, j) * dy(i, c);
                      }
                  }
                });
}

}  // namespace fisale::ops
