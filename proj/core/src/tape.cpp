#include "metanav/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metanav {

const Matrix& Var::value() const { return tape_->value_of(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("Var::scalar on " + v.shape_string());
  return v[0];
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad,
                        requires_grad ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, {}); }

Var Tape::variable(Matrix value) { return record(std::move(value), true, {}); }

Var Tape::param(const std::string& key, const Matrix& value) {
  Var v = record(value, true, {});
  param_leaves_.emplace_back(key, v.id());
  return v;
}

std::map<std::string, Var> Tape::bind(const ParamStore& store) {
  std::map<std::string, Var> out;
  for (const auto& p : store.params()) out.emplace(p.name, param(p.name, p.value));
  return out;
}

void Tape::accumulate_grad(Var v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("Tape::backward: foreign variable");
  if (nodes_[loss.id()].value.size() != 1) {
    throw DimensionError("Tape::backward: loss must be scalar, got " +
                         nodes_[loss.id()].value.shape_string());
  }
  for (auto& n : nodes_) n.grad = Matrix{};
  nodes_[loss.id()].grad = Matrix(1, 1, 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.value, n.grad);
  }
}

const Matrix& Tape::grad(Var v) const { return nodes_[v.id()].grad; }

GradMap Tape::param_grads() const {
  GradMap out;
  for (const auto& [key, id] : param_leaves_) {
    const Node& n = nodes_[id];
    Matrix g = n.grad.empty() ? Matrix(n.value.rows(), n.value.cols()) : n.grad;
    auto it = out.find(key);
    if (it == out.end()) {
      out.emplace(key, std::move(g));
    } else {
      it->second += g;
    }
  }
  return out;
}

namespace ad {
namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("ad: invalid variable");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("ad: operands on different tapes");
  return tape_of(a);
}

bool needs(Var v) { return v.tape()->requires_grad(v); }

bool any_needs(const std::vector<Var>& parts) {
  return std::any_of(parts.begin(), parts.end(), [](Var v) { return needs(v); });
}

template <typename F>
Matrix map_values(const Matrix& x, F f) {
  Matrix out = x;
  for (double& v : out.values()) v = f(v);
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(metanav::matmul(a.value(), b.value()), needs(a) || needs(b),
                  [a, b](Tape& tp, const Matrix&, const Matrix& g) {
                    if (needs(a)) tp.accumulate_grad(a, matmul_nt(g, b.value()));
                    if (needs(b)) tp.accumulate_grad(b, matmul_tn(a.value(), g));
                  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "ad::add");
  return t.record(a.value() + b.value(), needs(a) || needs(b),
                  [a, b](Tape& tp, const Matrix&, const Matrix& g) {
                    tp.accumulate_grad(a, g);
                    tp.accumulate_grad(b, g);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "ad::sub");
  return t.record(a.value() - b.value(), needs(a) || needs(b),
                  [a, b](Tape& tp, const Matrix&, const Matrix& g) {
                    tp.accumulate_grad(a, g);
                    if (needs(b)) tp.accumulate_grad(b, g * -1.0);
                  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(hadamard(a.value(), b.value()), needs(a) || needs(b),
                  [a, b](Tape& tp, const Matrix&, const Matrix& g) {
                    if (needs(a)) tp.accumulate_grad(a, hadamard(g, b.value()));
                    if (needs(b)) tp.accumulate_grad(b, hadamard(g, a.value()));
                  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  return t.record(a.value() * s, needs(a), [a, s](Tape& tp, const Matrix&, const Matrix& g) {
    tp.accumulate_grad(a, g * s);
  });
}

Var add_row(Var m, Var row) {
  Tape& t = tape_of(m, row);
  const Matrix& mv = m.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != mv.cols()) {
    throw DimensionError("ad::add_row: " + mv.shape_string() + " + " + rv.shape_string());
  }
  Matrix out = mv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
  return t.record(std::move(out), needs(m) || needs(row),
                  [m, row](Tape& tp, const Matrix&, const Matrix& g) {
                    tp.accumulate_grad(m, g);
                    if (needs(row)) {
                      Matrix gr(1, g.cols());
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
                      tp.accumulate_grad(row, gr);
                    }
                  });
}

Var mul_row(Var m, Var row) {
  Tape& t = tape_of(m, row);
  const Matrix& mv = m.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != mv.cols()) {
    throw DimensionError("ad::mul_row: " + mv.shape_string() + " * " + rv.shape_string());
  }
  Matrix out = mv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= rv[j];
  return t.record(std::move(out), needs(m) || needs(row),
                  [m, row](Tape& tp, const Matrix&, const Matrix& g) {
                    const Matrix& mv = m.value();
                    const Matrix& rv = row.value();
                    if (needs(m)) {
                      Matrix gm = g;
                      for (std::size_t i = 0; i < gm.rows(); ++i)
                        for (std::size_t j = 0; j < gm.cols(); ++j) gm(i, j) *= rv[j];
                      tp.accumulate_grad(m, gm);
                    }
                    if (needs(row)) {
                      Matrix gr(1, g.cols());
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j) * mv(i, j);
                      tp.accumulate_grad(row, gr);
                    }
                  });
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  return t.record(metanav::relu(x.value()), needs(x),
                  [x](Tape& tp, const Matrix& y, const Matrix& g) {
                    Matrix gx = g;
                    for (std::size_t i = 0; i < gx.size(); ++i)
                      if (!(y[i] > 0.0)) gx[i] = 0.0;
                    tp.accumulate_grad(x, gx);
                  });
}

Var sigmoid(Var x) {
  Tape& t = tape_of(x);
  return t.record(metanav::sigmoid(x.value()), needs(x),
                  [x](Tape& tp, const Matrix& y, const Matrix& g) {
                    Matrix gx = g;
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= y[i] * (1.0 - y[i]);
                    tp.accumulate_grad(x, gx);
                  });
}

Var tanh(Var x) {
  Tape& t = tape_of(x);
  return t.record(map_values(x.value(), [](double v) { return std::tanh(v); }), needs(x),
                  [x](Tape& tp, const Matrix& y, const Matrix& g) {
                    Matrix gx = g;
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= 1.0 - y[i] * y[i];
                    tp.accumulate_grad(x, gx);
                  });
}

Var log_sigmoid(Var x) {
  Tape& t = tape_of(x);
  // ln sigmoid(v) = -softplus(-v)
  Matrix out = map_values(x.value(), [](double v) {
    return v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
  });
  return t.record(std::move(out), needs(x), [x](Tape& tp, const Matrix&, const Matrix& g) {
    Matrix gx = g;
    const Matrix& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= metanav::sigmoid(-xv[i]);
    tp.accumulate_grad(x, gx);
  });
}

Var log(Var x) {
  Tape& t = tape_of(x);
  Matrix out = map_values(x.value(), [](double v) {
    if (!(v > 0.0)) throw std::domain_error("ad::log of non-positive value");
    return std::log(v);
  });
  return t.record(std::move(out), needs(x), [x](Tape& tp, const Matrix&, const Matrix& g) {
    Matrix gx = g;
    const Matrix& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] /= xv[i];
    tp.accumulate_grad(x, gx);
  });
}

Var softmax_rows(Var x) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto p = metanav::softmax(xv.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return t.record(std::move(out), needs(x), [x](Tape& tp, const Matrix& y, const Matrix& g) {
    Matrix gx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) = y(i, j) * (g(i, j) - dot);
    }
    tp.accumulate_grad(x, gx);
  });
}

Var log_softmax_rows(Var x) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto r = xv.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double total = 0.0;
    for (double v : r) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < xv.cols(); ++j) out(i, j) = xv(i, j) - lse;
  }
  return t.record(std::move(out), needs(x), [x](Tape& tp, const Matrix& y, const Matrix& g) {
    Matrix gx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) gs += g(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) = g(i, j) - std::exp(y(i, j)) * gs;
    }
    tp.accumulate_grad(x, gx);
  });
}

Var layer_norm_rows(Var x, double eps) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  const std::size_t n = xv.cols();
  Matrix out(xv.rows(), n);
  Matrix inv_std(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double mean = 0.0;
    for (double v : xv.row(i)) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xv.row(i)) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(i, 0) = is;
    for (std::size_t j = 0; j < n; ++j) out(i, j) = (xv(i, j) - mean) * is;
  }
  return t.record(std::move(out), needs(x),
                  [x, inv_std](Tape& tp, const Matrix& y, const Matrix& g) {
                    const std::size_t n = y.cols();
                    Matrix gx(y.rows(), n);
                    for (std::size_t i = 0; i < y.rows(); ++i) {
                      double mg = 0.0, mgy = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        mg += g(i, j);
                        mgy += g(i, j) * y(i, j);
                      }
                      mg /= static_cast<double>(n);
                      mgy /= static_cast<double>(n);
                      for (std::size_t j = 0; j < n; ++j)
                        gx(i, j) = inv_std(i, 0) * (g(i, j) - mg - y(i, j) * mgy);
                    }
                    tp.accumulate_grad(x, gx);
                  });
}

Var standardize_cols(Var x) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows();
  Matrix out(n, xv.cols());
  Matrix inv_norm(1, xv.cols());
  for (std::size_t j = 0; j < xv.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xv(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (xv(i, j) - mean) * (xv(i, j) - mean);
    const double norm = std::sqrt(ss);
    if (norm <= 1e-10) continue;  // zero-variance column stays zero, no gradient
    inv_norm[j] = 1.0 / norm;
    for (std::size_t i = 0; i < n; ++i) out(i, j) = (xv(i, j) - mean) / norm;
  }
  return t.record(std::move(out), needs(x),
                  [x, inv_norm](Tape& tp, const Matrix& z, const Matrix& g) {
                    const std::size_t n = z.rows();
                    Matrix gx(n, z.cols());
                    for (std::size_t j = 0; j < z.cols(); ++j) {
                      if (inv_norm[j] == 0.0) continue;
                      double zg = 0.0;
                      for (std::size_t i = 0; i < n; ++i) zg += z(i, j) * g(i, j);
                      double mean_du = 0.0;
                      for (std::size_t i = 0; i < n; ++i) {
                        const double du = (g(i, j) - z(i, j) * zg) * inv_norm[j];
                        gx(i, j) = du;
                        mean_du += du;
                      }
                      mean_du /= static_cast<double>(n);
                      for (std::size_t i = 0; i < n; ++i) gx(i, j) -= mean_du;
                    }
                    tp.accumulate_grad(x, gx);
                  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("ad::concat_rows: no operands");
  Tape& t = tape_of(parts.front());
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("ad::concat_rows: mixed tapes");
    if (p.cols() != cols) throw DimensionError("ad::concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t r0 = 0;
  for (Var p : parts) {
    const Matrix& v = p.value();
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + r0 * cols);
    r0 += v.rows();
  }
  return t.record(std::move(out), any_needs(parts),
                  [parts](Tape& tp, const Matrix&, const Matrix& g) {
                    std::size_t r0 = 0;
                    for (Var p : parts) {
                      const std::size_t r = p.rows(), c = p.cols();
                      if (needs(p)) {
                        Matrix gp(r, c);
                        std::copy(g.values().begin() + r0 * c, g.values().begin() + (r0 + r) * c,
                                  gp.values().begin());
                        tp.accumulate_grad(p, gp);
                      }
                      r0 += r;
                    }
                  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("ad::concat_cols: no operands");
  Tape& t = tape_of(parts.front());
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("ad::concat_cols: mixed tapes");
    if (p.rows() != rows) throw DimensionError("ad::concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t c0 = 0;
  for (Var p : parts) {
    const Matrix& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, c0 + j) = v(i, j);
    c0 += v.cols();
  }
  return t.record(std::move(out), any_needs(parts),
                  [parts](Tape& tp, const Matrix&, const Matrix& g) {
                    std::size_t c0 = 0;
                    for (Var p : parts) {
                      const std::size_t c = p.cols();
                      if (needs(p)) {
                        Matrix gp(g.rows(), c);
                        for (std::size_t i = 0; i < g.rows(); ++i)
                          for (std::size_t j = 0; j < c; ++j) gp(i, j) = g(i, c0 + j);
                        tp.accumulate_grad(p, gp);
                      }
                      c0 += c;
                    }
                  });
}

Var slice_rows(Var x, std::size_t start, std::size_t count) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  if (start + count > xv.rows()) throw DimensionError("ad::slice_rows out of range");
  const std::size_t c = xv.cols();
  Matrix out(count, c);
  std::copy(xv.values().begin() + start * c, xv.values().begin() + (start + count) * c,
            out.values().begin());
  return t.record(std::move(out), needs(x),
                  [x, start](Tape& tp, const Matrix& y, const Matrix& g) {
                    const Matrix& xv = x.value();
                    Matrix gx(xv.rows(), xv.cols());
                    std::copy(g.values().begin(), g.values().end(),
                              gx.values().begin() + start * xv.cols());
                    (void)y;
                    tp.accumulate_grad(x, gx);
                  });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  if (start + count > xv.cols()) throw DimensionError("ad::slice_cols out of range");
  Matrix out(xv.rows(), count);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = xv(i, start + j);
  return t.record(std::move(out), needs(x),
                  [x, start](Tape& tp, const Matrix&, const Matrix& g) {
                    const Matrix& xv = x.value();
                    Matrix gx(xv.rows(), xv.cols());
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, start + j) = g(i, j);
                    tp.accumulate_grad(x, gx);
                  });
}

Var transpose(Var x) {
  Tape& t = tape_of(x);
  return t.record(metanav::transpose(x.value()), needs(x),
                  [x](Tape& tp, const Matrix&, const Matrix& g) {
                    tp.accumulate_grad(x, metanav::transpose(g));
                  });
}

Var flatten(Var x) {
  Tape& t = tape_of(x);
  return t.record(metanav::flatten(x.value()), needs(x),
                  [x](Tape& tp, const Matrix&, const Matrix& g) {
                    const Matrix& xv = x.value();
                    tp.accumulate_grad(
                        x, Matrix(xv.rows(), xv.cols(),
                                  std::vector<double>(g.values().begin(), g.values().end())));
                  });
}

Var mean_rows(Var x) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  if (xv.rows() == 0) throw DimensionError("ad::mean_rows of empty matrix");
  Matrix out(1, xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < xv.cols(); ++j) out[j] += xv(i, j);
  out *= 1.0 / static_cast<double>(xv.rows());
  return t.record(std::move(out), needs(x), [x](Tape& tp, const Matrix&, const Matrix& g) {
    const Matrix& xv = x.value();
    Matrix gx(xv.rows(), xv.cols());
    const double inv = 1.0 / static_cast<double>(xv.rows());
    for (std::size_t i = 0; i < xv.rows(); ++i)
      for (std::size_t j = 0; j < xv.cols(); ++j) gx(i, j) = g[j] * inv;
    tp.accumulate_grad(x, gx);
  });
}

Var mean(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("ad::mean: no operands");
  Tape& t = tape_of(parts.front());
  Matrix out = parts.front().value();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    if (parts[k].tape() != &t) throw std::invalid_argument("ad::mean: mixed tapes");
    out += parts[k].value();
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  out *= inv;
  return t.record(std::move(out), any_needs(parts),
                  [parts, inv](Tape& tp, const Matrix&, const Matrix& g) {
                    const Matrix gp = g * inv;
                    for (Var p : parts) tp.accumulate_grad(p, gp);
                  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  return t.record(Matrix(1, 1, metanav::sum(x.value())), needs(x),
                  [x](Tape& tp, const Matrix&, const Matrix& g) {
                    const Matrix& xv = x.value();
                    tp.accumulate_grad(x, Matrix(xv.rows(), xv.cols(), g[0]));
                  });
}

Var sum_squares(Var x) {
  Tape& t = tape_of(x);
  return t.record(Matrix(1, 1, metanav::sum_squares(x.value())), needs(x),
                  [x](Tape& tp, const Matrix&, const Matrix& g) {
                    tp.accumulate_grad(x, x.value() * (2.0 * g[0]));
                  });
}

Var pick(Var x, std::size_t r, std::size_t c) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  if (r >= xv.rows() || c >= xv.cols()) throw DimensionError("ad::pick out of range");
  return t.record(Matrix(1, 1, xv(r, c)), needs(x),
                  [x, r, c](Tape& tp, const Matrix&, const Matrix& g) {
                    const Matrix& xv = x.value();
                    Matrix gx(xv.rows(), xv.cols());
                    gx(r, c) = g[0];
                    tp.accumulate_grad(x, gx);
                  });
}

}  // namespace ad
}  // namespace metanav
