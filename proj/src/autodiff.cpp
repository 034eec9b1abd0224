#include "ictxot/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ictxot::ad {

namespace {

void require_same_tape(const char* op, Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

bool is_vector(const Matrix& m) { return m.rows() == 1 || m.cols() == 1; }

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("Var::scalar: node is " + v.shape_string());
  return v(0, 0);
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return {this, nodes_.size() - 1};
}

Var Tape::push(Matrix value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool needs = false;
  for (std::size_t p : parents) needs = needs || nodes_[p].needs_grad;
  Node n{std::move(value), {}, std::move(parents), {}, needs};
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Matrix& Tape::grad(std::size_t id) const { return nodes_[id].grad; }

Matrix& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& delta) {
  if (!nodes_[id].needs_grad) return;
  grad_ref(id) += delta;
}

void Tape::accumulate(std::size_t id, Matrix&& delta) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.empty()) {
    require_same_shape("accumulate", n.value, delta);
    n.grad = std::move(delta);
  } else {
    n.grad += delta;
  }
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw std::invalid_argument("backward: loss lives on another tape");
  if (backward_done_) throw std::logic_error("backward: already run on this tape");
  const Matrix& v = nodes_[loss.id()].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("backward: loss must be 1x1, got " + v.shape_string());
  }
  backward_done_ = true;
  if (!nodes_[loss.id()].needs_grad) return;
  nodes_[loss.id()].grad = Matrix(1, 1, 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
  // Leaves that received nothing still expose a zero gradient of their shape.
  for (Node& n : nodes_)
    if (n.needs_grad && n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
}

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  Tape& t = a.tape();
  return t.push(ictxot::matmul(a.value(), b.value()), {a.id(), b.id()},
                [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  if (t.needs_grad(ai)) t.accumulate(ai, ictxot::matmul_nt(g, t.value(bi)));
                  if (t.needs_grad(bi)) t.accumulate(bi, ictxot::matmul_tn(t.value(ai), g));
                });
}

Var matmul_tn(Var a, Var b) {
  require_same_tape("matmul_tn", a, b);
  Tape& t = a.tape();
  return t.push(ictxot::matmul_tn(a.value(), b.value()), {a.id(), b.id()},
                [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  if (t.needs_grad(ai)) t.accumulate(ai, ictxot::matmul_nt(t.value(bi), g));
                  if (t.needs_grad(bi)) t.accumulate(bi, ictxot::matmul(t.value(ai), g));
                });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape("matmul_nt", a, b);
  Tape& t = a.tape();
  return t.push(ictxot::matmul_nt(a.value(), b.value()), {a.id(), b.id()},
                [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  if (t.needs_grad(ai)) t.accumulate(ai, ictxot::matmul(g, t.value(bi)));
                  if (t.needs_grad(bi)) t.accumulate(bi, ictxot::matmul_tn(g, t.value(ai)));
                });
}

Var transpose(Var a) {
  return a.tape().push(a.value().transposed(), {a.id()}, [ai = a.id()](Tape& t, std::size_t self) {
    t.accumulate(ai, t.grad(self).transposed());
  });
}

Var add(Var a, Var b) {
  require_same_tape("add", a, b);
  require_same_shape("add", a.value(), b.value());
  return a.tape().push(a.value() + b.value(), {a.id(), b.id()},
                       [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
                         t.accumulate(ai, t.grad(self));
                         t.accumulate(bi, t.grad(self));
                       });
}

Var sub(Var a, Var b) {
  require_same_tape("sub", a, b);
  require_same_shape("sub", a.value(), b.value());
  return a.tape().push(a.value() - b.value(), {a.id(), b.id()},
                       [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
                         t.accumulate(ai, t.grad(self));
                         t.accumulate(bi, t.grad(self) * -1.0);
                       });
}

Var scale(Var a, double s) {
  return a.tape().push(a.value() * s, {a.id()}, [ai = a.id(), s](Tape& t, std::size_t self) {
    t.accumulate(ai, t.grad(self) * s);
  });
}

Var add_row(Var a, Var row) {
  require_same_tape("add_row", a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: cannot broadcast " + rv.shape_string() + " over " + av.shape_string());
  }
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv(0, c);
  return a.tape().push(std::move(out), {a.id(), row.id()},
                       [ai = a.id(), ri = row.id()](Tape& t, std::size_t self) {
                         const Matrix& g = t.grad(self);
                         t.accumulate(ai, g);
                         if (t.needs_grad(ri)) {
                           Matrix gr(1, g.cols());
                           for (std::size_t r = 0; r < g.rows(); ++r)
                             for (std::size_t c = 0; c < g.cols(); ++c) gr(0, c) += g(r, c);
                           t.accumulate(ri, std::move(gr));
                         }
                       });
}

Var relu(Var a) {
  Tape& tape = a.tape();
  Matrix out = a.value();
  double margin = std::numeric_limits<double>::infinity();
  for (double& v : out.data()) {
    margin = std::min(margin, std::abs(v));
    if (v < 0.0) v = 0.0;
  }
  tape.note_relu_margin(margin);
  return tape.push(std::move(out), {a.id()}, [ai = a.id()](Tape& t, std::size_t self) {
    Matrix g = t.grad(self);
    const auto& x = t.value(ai).data();
    // Subgradient at exactly zero is taken as 0.
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!(x[i] > 0.0)) g.data()[i] = 0.0;
    t.accumulate(ai, std::move(g));
  });
}

Var softmax_columns(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t c = 0; c < av.cols(); ++c) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < av.rows(); ++r) mx = std::max(mx, av(r, c));
    double z = 0.0;
    for (std::size_t r = 0; r < av.rows(); ++r) {
      out(r, c) = std::exp(av(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t r = 0; r < av.rows(); ++r) out(r, c) /= z;
  }
  return a.tape().push(std::move(out), {a.id()}, [ai = a.id()](Tape& t, std::size_t self) {
    const Matrix& s = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix d(s.rows(), s.cols());
    for (std::size_t c = 0; c < s.cols(); ++c) {
      double dot = 0.0;
      for (std::size_t r = 0; r < s.rows(); ++r) dot += g(r, c) * s(r, c);
      for (std::size_t r = 0; r < s.rows(); ++r) d(r, c) = s(r, c) * (g(r, c) - dot);
    }
    t.accumulate(ai, std::move(d));
  });
}

Var mean_rows(Var a) {
  const Matrix& av = a.value();
  if (av.rows() == 0) throw DimensionError("mean_rows: no rows in " + av.shape_string());
  Matrix out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(0, c) += av(r, c);
  out *= 1.0 / static_cast<double>(av.rows());
  return a.tape().push(std::move(out), {a.id()}, [ai = a.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& av = t.value(ai);
    const double inv = 1.0 / static_cast<double>(av.rows());
    Matrix d(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r)
      for (std::size_t c = 0; c < av.cols(); ++c) d(r, c) = g(0, c) * inv;
    t.accumulate(ai, std::move(d));
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().push(Matrix(1, 1, s), {a.id()}, [ai = a.id()](Tape& t, std::size_t self) {
    const Matrix& av = t.value(ai);
    t.accumulate(ai, Matrix(av.rows(), av.cols(), t.grad(self)(0, 0)));
  });
}

Var trace(Var a) {
  const Matrix& av = a.value();
  if (av.rows() != av.cols()) throw DimensionError("trace: matrix is " + av.shape_string());
  return a.tape().push(Matrix(1, 1, ictxot::trace(av)), {a.id()}, [ai = a.id()](Tape& t, std::size_t self) {
    const std::size_t n = t.value(ai).rows();
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) d(i, i) = t.grad(self)(0, 0);
    t.accumulate(ai, std::move(d));
  });
}

Var frob_sq(Var a) {
  return a.tape().push(Matrix(1, 1, ictxot::frob_sq(a.value())), {a.id()},
                       [ai = a.id()](Tape& t, std::size_t self) {
                         t.accumulate(ai, t.value(ai) * (2.0 * t.grad(self)(0, 0)));
                       });
}

Var outer(Var u, Var v) {
  require_same_tape("outer", u, v);
  const Matrix& uv = u.value();
  const Matrix& vv = v.value();
  if (!is_vector(uv) || !is_vector(vv)) {
    throw DimensionError("outer: expected vectors, got " + uv.shape_string() + " and " + vv.shape_string());
  }
  const Matrix col = Matrix::column(uv.data());
  const Matrix row = Matrix::row(vv.data());
  return u.tape().push(ictxot::matmul(col, row), {u.id(), v.id()},
                       [ui = u.id(), vi = v.id()](Tape& t, std::size_t self) {
                         const Matrix& g = t.grad(self);
                         if (t.needs_grad(ui)) {
                           const Matrix& uv = t.value(ui);
                           std::vector<double> gu = ictxot::matvec(g, t.value(vi).data());
                           t.accumulate(ui, Matrix(uv.rows(), uv.cols(), std::move(gu)));
                         }
                         if (t.needs_grad(vi)) {
                           const Matrix& vv = t.value(vi);
                           std::vector<double> gv = ictxot::matvec(g.transposed(), t.value(ui).data());
                           t.accumulate(vi, Matrix(vv.rows(), vv.cols(), std::move(gv)));
                         }
                       });
}

Var concat_rows(Var top, Var bottom) {
  require_same_tape("concat_rows", top, bottom);
  const Matrix& a = top.value();
  const Matrix& b = bottom.value();
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: column counts differ, " + a.shape_string() + " vs " + b.shape_string());
  }
  std::vector<double> data = a.data();
  data.insert(data.end(), b.data().begin(), b.data().end());
  return top.tape().push(Matrix(a.rows() + b.rows(), a.cols(), std::move(data)), {top.id(), bottom.id()},
                         [ti = top.id(), bi = bottom.id()](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           const std::size_t split = t.value(ti).rows() * g.cols();
                           if (t.needs_grad(ti)) {
                             t.accumulate(ti, Matrix(t.value(ti).rows(), g.cols(),
                                                     {g.data().begin(), g.data().begin() + split}));
                           }
                           if (t.needs_grad(bi)) {
                             t.accumulate(bi, Matrix(t.value(bi).rows(), g.cols(),
                                                     {g.data().begin() + split, g.data().end()}));
                           }
                         });
}

Var symmetrize(Var a) {
  const Matrix& av = a.value();
  if (av.rows() != av.cols()) throw DimensionError("symmetrize: matrix is " + av.shape_string());
  return a.tape().push(SymMatrix::symmetrize(av).matrix(), {a.id()}, [ai = a.id()](Tape& t, std::size_t self) {
    t.accumulate(ai, SymMatrix::symmetrize(t.grad(self)).matrix());
  });
}

Var mean_sq_dist(Var a, Var b) {
  require_same_tape("mean_sq_dist", a, b);
  require_same_shape("mean_sq_dist", a.value(), b.value());
  const Matrix& av = a.value();
  if (av.rows() == 0) throw DimensionError("mean_sq_dist: no rows");
  const double value = ictxot::frob_sq(av - b.value()) / static_cast<double>(av.rows());
  return a.tape().push(Matrix(1, 1, value), {a.id(), b.id()},
                       [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
                         const Matrix& av = t.value(ai);
                         Matrix d = av - t.value(bi);
                         d *= 2.0 * t.grad(self)(0, 0) / static_cast<double>(av.rows());
                         if (t.needs_grad(bi)) t.accumulate(bi, d * -1.0);
                         t.accumulate(ai, std::move(d));
                       });
}

Var relu_expansion(Var z, Var c, Var w, Var b) {
  require_same_tape("relu_expansion", z, c);
  require_same_tape("relu_expansion", z, w);
  require_same_tape("relu_expansion", z, b);
  const Matrix& cv = c.value();
  if (cv.rows() != 1) throw DimensionError("relu_expansion: unit weights must be a row, got " + cv.shape_string());
  require_same_shape("relu_expansion", cv, w.value());
  require_same_shape("relu_expansion", cv, b.value());
  const std::size_t units = cv.cols();
  const auto& cs = cv.data();
  const auto& ws = w.value().data();
  const auto& bs = b.value().data();

  Matrix out(z.rows(), z.cols());
  double margin = std::numeric_limits<double>::infinity();
  const auto& zs = z.value().data();
  for (std::size_t i = 0; i < zs.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < units; ++k) {
      const double pre = ws[k] * zs[i] + bs[k];
      margin = std::min(margin, std::abs(pre));
      if (pre > 0.0) acc += cs[k] * pre;
    }
    out.data()[i] = acc;
  }
  Tape& tape = z.tape();
  tape.note_relu_margin(margin);
  return tape.push(std::move(out), {z.id(), c.id(), w.id(), b.id()},
                   [zi = z.id(), ci = c.id(), wi = w.id(), bi = b.id()](Tape& t, std::size_t self) {
                     const auto& g = t.grad(self).data();
                     const auto& zs = t.value(zi).data();
                     const auto& cs = t.value(ci).data();
                     const auto& ws = t.value(wi).data();
                     const auto& bs = t.value(bi).data();
                     const std::size_t units = cs.size();
                     Matrix gz(t.value(zi).rows(), t.value(zi).cols());
                     Matrix gc(1, units), gw(1, units), gb(1, units);
                     for (std::size_t i = 0; i < zs.size(); ++i) {
                       for (std::size_t k = 0; k < units; ++k) {
                         const double pre = ws[k] * zs[i] + bs[k];
                         if (!(pre > 0.0)) continue;
                         const double gk = g[i] * cs[k];
                         gz.data()[i] += gk * ws[k];
                         gc.data()[k] += g[i] * pre;
                         gw.data()[k] += gk * zs[i];
                         gb.data()[k] += gk;
                       }
                     }
                     t.accumulate(zi, std::move(gz));
                     t.accumulate(ci, std::move(gc));
                     t.accumulate(wi, std::move(gw));
                     t.accumulate(bi, std::move(gb));
                   });
}

namespace {

// Kernel value and its partials for one pair: ∂k/∂u (written into du) and ∂k/∂σ₀.
struct PairKernel {
  const KernelSpec& spec;
  std::vector<double> inv_bw;
  std::vector<double> w;
  double sigma0;

  PairKernel(const KernelSpec& s, double s0) : spec(s), sigma0(s0) {
    if (spec.kind == KernelKind::MultiScaleRBF) {
      for (int l = 0; l < spec.levels; ++l) {
        inv_bw.push_back(1.0 / spec.level_bandwidth(l, s0));
        w.push_back(spec.weight(l));
      }
    }
  }

  // Adds scale·∂k(u,v)/∂u into du; returns ∂k/∂σ₀.
  double grad_u(std::span<const double> u, std::span<const double> v, double scale,
                std::span<double> du) const {
    const std::size_t d = u.size();
    if (spec.kind == KernelKind::Quadratic) {
      double p = 0.0;
      for (std::size_t c = 0; c < d; ++c) p += u[c] * v[c];
      for (std::size_t c = 0; c < d; ++c) du[c] += scale * 2.0 * p * v[c];
      return 0.0;
    }
    double r = 0.0;
    for (std::size_t c = 0; c < d; ++c) r += (u[c] - v[c]) * (u[c] - v[c]);
    double k_r = 0.0, k_s = 0.0;
    for (std::size_t l = 0; l < w.size(); ++l) {
      const double e = w[l] * std::exp(-r * inv_bw[l]);
      k_r -= e * inv_bw[l];
      k_s += e * r * inv_bw[l];
    }
    for (std::size_t c = 0; c < d; ++c) du[c] += scale * k_r * 2.0 * (u[c] - v[c]);
    return k_s / sigma0;
  }

  double grad_sigma(std::span<const double> u, std::span<const double> v) const {
    if (spec.kind == KernelKind::Quadratic) return 0.0;
    double r = 0.0;
    for (std::size_t c = 0; c < u.size(); ++c) r += (u[c] - v[c]) * (u[c] - v[c]);
    double k_s = 0.0;
    for (std::size_t l = 0; l < w.size(); ++l) k_s += w[l] * std::exp(-r * inv_bw[l]) * r * inv_bw[l];
    return k_s / sigma0;
  }
};

}  // namespace

Var mmd2_u(Var pred, const Matrix& target, const KernelSpec& spec) {
  spec.validate();
  const Matrix& x = pred.value();
  if (x.rows() != target.rows() || x.cols() != target.cols()) {
    throw DimensionError("mmd2_u: prediction " + x.shape_string() + " vs target " + target.shape_string());
  }
  Bandwidth bw{1.0, false};
  if (spec.kind == KernelKind::MultiScaleRBF) {
    bw = spec.bandwidth == BandwidthMode::Fixed ? Bandwidth{spec.fixed_bandwidth, false}
                                                 : adaptive_base_bandwidth(x, target);
  }
  const double value = ictxot::mmd2_u(x, target, spec, bw.value);
  const bool through_bandwidth = spec.kind == KernelKind::MultiScaleRBF &&
                                 spec.bandwidth == BandwidthMode::Adaptive && !bw.degenerate;

  return pred.tape().push(
      Matrix(1, 1, value), {pred.id()},
      [pi = pred.id(), y = target, spec, sigma0 = bw.value, through_bandwidth](Tape& t, std::size_t self) {
        const Matrix& x = t.value(pi);
        const std::size_t m = x.rows();
        const std::size_t d = x.cols();
        const double md = static_cast<double>(m);
        const double norm = 1.0 / (md * (md - 1.0));
        const PairKernel k(spec, sigma0);

        Matrix gx(m, d);
        double d_sigma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          auto gi = gx.row_span(i);
          const auto xi = x.row_span(i);
          for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            // Σ_{a≠b} k(x_a,x_b) touches x_i through (i,j) and (j,i).
            d_sigma += norm * k.grad_u(xi, x.row_span(j), 2.0 * norm, gi);
            // Both cross terms together equal 2·Σ_{a≠b} k(x_a,y_b).
            d_sigma -= 2.0 * norm * k.grad_u(xi, y.row_span(j), -2.0 * norm, gi);
            if (through_bandwidth) d_sigma += norm * k.grad_sigma(y.row_span(i), y.row_span(j));
          }
        }
        const double g = t.grad(self)(0, 0);
        if (through_bandwidth) {
          // σ₀ = 2·Σ‖z − z̄‖²/(P − 1) over the P = 2m pooled points.
          const double pooled = 2.0 * md;
          std::vector<double> centre(d, 0.0);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < d; ++c) centre[c] += x(i, c) + y(i, c);
          for (double& c : centre) c /= pooled;
          const double factor = d_sigma * 4.0 / (pooled - 1.0);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < d; ++c) gx(i, c) += factor * (x(i, c) - centre[c]);
        }
        gx *= g;
        t.accumulate(pi, std::move(gx));
      });
}

FiniteDiffReport finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                   std::span<const double> gradient, std::span<const double> point,
                                   double step) {
  if (gradient.size() != point.size()) {
    throw DimensionError("finite_diff_check: gradient has " + std::to_string(gradient.size()) +
                         " entries, point has " + std::to_string(point.size()));
  }
  const double f0 = f(point);
  const double floor = 1e-6 * std::max(1.0, std::abs(f0));
  std::vector<double> probe(point.begin(), point.end());
  FiniteDiffReport report;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + step;
    const double up = f(probe);
    probe[i] = keep - step;
    const double down = f(probe);
    probe[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double a = gradient[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    if (i == 0 || err > report.max_rel_error) report = {err, i, a, numeric};
  }
  return report;
}

}  // namespace ictxot::ad
