// Copyright 2026 The fedamole Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedamole/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "fedamole/error.hpp"

namespace fedamole {

const Tensor& Var::value() const {
  if (tape_ == nullptr) {
    throw Error(ErrorKind::kInvalidArgument, "value() on an empty Var");
  }
  return tape_->value(id_);
}

Var Tape::Constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::Param(Parameter& param) {
  if (auto it = param_nodes_.find(&param); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  nodes_.push_back(Node{param.value, {}, {}, {}, &param, param.trainable});
  param_nodes_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::Record(Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn fn) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [&](std::size_t i) {
                                   return nodes_[i].requires_grad;
                                 });
  Node node{std::move(value), {}, std::move(inputs), {}, nullptr, needs};
  if (needs) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::Backward(Var loss) {
  if (loss.tape() != this) {
    throw Error(ErrorKind::kInvalidArgument,
                "backward: loss node is not on this tape");
  }
  if (nodes_[loss.id()].value.size() != 1) {
    throw DimensionError("backward: loss must be a scalar, got " +
                         nodes_[loss.id()].value.ShapeString());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss.id()).Fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr && n.param->trainable) n.param->grad += n.grad;
  }
}

namespace ad {

namespace {

Tape& SameTape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw Error(ErrorKind::kInvalidArgument,
                "operands recorded on different tapes");
  }
  return *a.tape();
}

Tape& TapeOf(Var a) {
  if (a.tape() == nullptr) {
    throw Error(ErrorKind::kInvalidArgument, "operation on an empty Var");
  }
  return *a.tape();
}

double GeluValue(double x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

double GeluDeriv(double x) {
  constexpr double kC = 0.7978845608028654;
  const double u = kC * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  return 0.5 * (1.0 + t) +
         0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * 0.044715 * x * x);
}

// Shared reverse rule for (masked) row softmax: dx = y * (g - sum(g * y)).
void SoftmaxBackward(Tape& t, std::size_t self, std::size_t in) {
  if (!t.requires_grad(in)) return;
  const Tensor& y = t.value(self);
  const Tensor& g = t.grad(self);
  Tensor& gx = t.grad(in);
  const std::size_t n = y.cols();
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += g(i, j) * y(i, j);
    for (std::size_t j = 0; j < n; ++j) gx(i, j) += y(i, j) * (g(i, j) - s);
  }
}

}  // namespace

Var Matmul(Var a, Var b) {
  Tape& t = SameTape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.Record(fedamole::Matmul(a.value(), b.value()), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    if (tp.requires_grad(ia)) {
                      tp.grad(ia) += MatmulNT(g, tp.value(ib));
                    }
                    if (tp.requires_grad(ib)) {
                      tp.grad(ib) +=
                          fedamole::Matmul(Transpose(tp.value(ia)), g);
                    }
                  });
}

Var MatmulNT(Var a, Var b) {
  Tape& t = SameTape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.Record(fedamole::MatmulNT(a.value(), b.value()), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    if (tp.requires_grad(ia)) {
                      tp.grad(ia) += fedamole::Matmul(g, tp.value(ib));
                    }
                    if (tp.requires_grad(ib)) {
                      tp.grad(ib) +=
                          fedamole::Matmul(Transpose(g), tp.value(ia));
                    }
                  });
}

Var Add(Var a, Var b) {
  Tape& t = SameTape(a, b);
  Tensor out = a.value();
  out += b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.Record(std::move(out), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t self) {
                    const Tensor g = tp.grad(self);
                    if (tp.requires_grad(ia)) tp.grad(ia) += g;
                    if (tp.requires_grad(ib)) tp.grad(ib) += g;
                  });
}

Var Mul(Var a, Var b) {
  Tape& t = SameTape(a, b);
  if (!a.value().SameShape(b.value())) {
    throw DimensionError("mul: shape " + a.value().ShapeString() + " vs " +
                         b.value().ShapeString());
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.Record(std::move(out), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    if (tp.requires_grad(ia)) {
                      Tensor& ga = tp.grad(ia);
                      const Tensor& vb = tp.value(ib);
                      for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += g[i] * vb[i];
                    }
                    if (tp.requires_grad(ib)) {
                      Tensor& gb = tp.grad(ib);
                      const Tensor& va = tp.value(ia);
                      for (std::size_t i = 0; i < g.size(); ++i)
                        gb[i] += g[i] * va[i];
                    }
                  });
}

Var Scale(Var a, double s) {
  Tape& t = TapeOf(a);
  Tensor out = a.value();
  out *= s;
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia}, [ia, s](Tape& tp, std::size_t self) {
    Tensor g = tp.grad(self);
    g *= s;
    tp.grad(ia) += g;
  });
}

Var MulCol(Var a, Var col) {
  Tape& t = SameTape(a, col);
  const Tensor& va = a.value();
  const Tensor& vc = col.value();
  if (vc.rows() != va.rows() || vc.cols() != 1) {
    throw DimensionError("mul_col: " + va.ShapeString() + " with column " +
                         vc.ShapeString());
  }
  Tensor out = va;
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (std::size_t j = 0; j < va.cols(); ++j) out(i, j) *= vc(i, 0);
  const std::size_t ia = a.id(), ic = col.id();
  return t.Record(std::move(out), {ia, ic},
                  [ia, ic](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    const Tensor& va = tp.value(ia);
                    const Tensor& vc = tp.value(ic);
                    if (tp.requires_grad(ia)) {
                      Tensor& ga = tp.grad(ia);
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j)
                          ga(i, j) += g(i, j) * vc(i, 0);
                    }
                    if (tp.requires_grad(ic)) {
                      Tensor& gc = tp.grad(ic);
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        gc(i, 0) += Dot(g.row(i), va.row(i));
                    }
                  });
}

Var RowSum(Var a) {
  Tape& t = TapeOf(a);
  const Tensor& va = a.value();
  Tensor out({va.rows(), 1});
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (double v : va.row(i)) out(i, 0) += v;
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
  });
}

Var ColMean(Var a) {
  Tape& t = TapeOf(a);
  const Tensor& va = a.value();
  const double inv = 1.0 / static_cast<double>(va.rows());
  Tensor out({1, va.cols()});
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (std::size_t j = 0; j < va.cols(); ++j) out(0, j) += va(i, j);
  out *= inv;
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia},
                  [ia, inv](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& ga = tp.grad(ia);
                    for (std::size_t i = 0; i < ga.rows(); ++i)
                      for (std::size_t j = 0; j < ga.cols(); ++j)
                        ga(i, j) += g(0, j) * inv;
                  });
}

Var Sum(Var a) {
  Tape& t = TapeOf(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return t.Record(Tensor({1, 1}, {s}), {ia},
                  [ia](Tape& tp, std::size_t self) {
                    const double g = tp.grad(self)[0];
                    for (double& v : tp.grad(ia).data()) v += g;
                  });
}

Var GatherRows(Var table, std::span<const int> ids) {
  Tape& t = TapeOf(table);
  const Tensor& vt = table.value();
  const std::size_t n = vt.rows(), d = vt.cols();
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= n) {
      throw Error(ErrorKind::kInvalidArgument,
                  "gather_rows: index " + std::to_string(ids[r]) +
                      " out of range [0, " + std::to_string(n) + ")");
    }
    const auto src = vt.row(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.data().begin() + r * d);
  }
  const std::size_t it = table.id();
  std::vector<int> idx(ids.begin(), ids.end());
  return t.Record(std::move(out), {it},
                  [it, idx = std::move(idx)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& gt = tp.grad(it);
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      for (std::size_t j = 0; j < g.cols(); ++j)
                        gt(static_cast<std::size_t>(idx[r]), j) += g(r, j);
                  });
}

Var SliceCols(Var a, std::size_t start, std::size_t count) {
  Tape& t = TapeOf(a);
  const Tensor& va = a.value();
  if (start + count > va.cols()) {
    throw DimensionError("slice_cols: range exceeds " + va.ShapeString());
  }
  Tensor out({va.rows(), count});
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = va(i, start + j);
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia},
                  [ia, start](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& ga = tp.grad(ia);
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t j = 0; j < g.cols(); ++j)
                        ga(i, start + j) += g(i, j);
                  });
}

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = TapeOf(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    SameTape(parts[0], p);
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row count mismatch");
    }
    total += p.value().cols();
    ids.push_back(p.id());
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, off + j) = v(i, j);
    off += v.cols();
  }
  return t.Record(std::move(out), ids, [ids](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (std::size_t in : ids) {
      const std::size_t c = tp.value(in).cols();
      if (tp.requires_grad(in)) {
        Tensor& gi = tp.grad(in);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < c; ++j) gi(i, j) += g(i, off + j);
      }
      off += c;
    }
  });
}

Var SoftmaxRows(Var a) {
  Tape& t = TapeOf(a);
  const std::size_t ia = a.id();
  return t.Record(fedamole::SoftmaxRows(a.value()), {ia},
                  [ia](Tape& tp, std::size_t self) {
                    SoftmaxBackward(tp, self, ia);
                  });
}

Var MaskedSoftmaxRows(Var a, const Tensor& keep) {
  Tape& t = TapeOf(a);
  const Tensor& va = a.value();
  if (!keep.SameShape(va)) {
    throw DimensionError("masked_softmax: mask shape " + keep.ShapeString() +
                         " vs " + va.ShapeString());
  }
  Tensor out(va.shape());
  for (std::size_t i = 0; i < va.rows(); ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < va.cols(); ++j)
      if (keep(i, j) != 0.0) mx = std::max(mx, va(i, j));
    if (mx == -INFINITY) {
      throw Error(ErrorKind::kInvalidArgument,
                  "masked_softmax: row has no admissible entries");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < va.cols(); ++j) {
      if (keep(i, j) == 0.0) continue;
      out(i, j) = std::exp(va(i, j) - mx);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < va.cols(); ++j) out(i, j) /= z;
  }
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    SoftmaxBackward(tp, self, ia);
  });
}

Var RmsNorm(Var a, Var weight, double eps) {
  Tape& t = SameTape(a, weight);
  const Tensor& x = a.value();
  const Tensor& w = weight.value();
  const std::size_t n = x.cols();
  if (w.size() != n) {
    throw DimensionError("rms_norm: weight " + w.ShapeString() +
                         " vs input " + x.ShapeString());
  }
  Tensor out(x.shape());
  std::vector<double> inv_rms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double ms = Dot(x.row(i), x.row(i)) / static_cast<double>(n);
    inv_rms[i] = 1.0 / std::sqrt(ms + eps);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = x(i, j) * inv_rms[i] * w[j];
  }
  const std::size_t ix = a.id(), iw = weight.id();
  return t.Record(
      std::move(out), {ix, iw},
      [ix, iw, inv_rms = std::move(inv_rms)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& x = tp.value(ix);
        const Tensor& w = tp.value(iw);
        const std::size_t n = x.cols();
        if (tp.requires_grad(iw)) {
          Tensor& gw = tp.grad(iw);
          for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < n; ++j)
              gw[j] += g(i, j) * x(i, j) * inv_rms[i];
        }
        if (tp.requires_grad(ix)) {
          Tensor& gx = tp.grad(ix);
          for (std::size_t i = 0; i < x.rows(); ++i) {
            const double r = inv_rms[i];
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g(i, j) * w[j] * x(i, j);
            const double c = s * r * r * r / static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j)
              gx(i, j) += g(i, j) * w[j] * r - x(i, j) * c;
          }
        }
      });
}

Var Gelu(Var a) {
  Tape& t = TapeOf(a);
  Tensor out = a.value();
  for (double& v : out.data()) v = GeluValue(v);
  const std::size_t ia = a.id();
  return t.Record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ia);
    Tensor& gx = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * GeluDeriv(x[i]);
  });
}

Var NllLoss(Var logits, std::span<const int> targets,
            const std::vector<bool>& mask) {
  Tape& t = TapeOf(logits);
  const double loss = NllTokenLoss(logits.value(), targets, mask);
  const std::size_t il = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  return t.Record(
      Tensor({1, 1}, {loss}), {il},
      [il, tg = std::move(tg), mask](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        const Tensor p = fedamole::SoftmaxRows(tp.value(il));
        Tensor& gl = tp.grad(il);
        const double count = static_cast<double>(
            std::count(mask.begin(), mask.end(), true));
        for (std::size_t r = 0; r < mask.size(); ++r) {
          if (!mask[r]) continue;
          for (std::size_t j = 0; j < p.cols(); ++j) {
            const double onehot =
                j == static_cast<std::size_t>(tg[r]) ? 1.0 : 0.0;
            gl(r, j) += g * (p(r, j) - onehot) / count;
          }
        }
      });
}

}  // namespace ad

}  // namespace fedamole
