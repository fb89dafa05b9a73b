// av2vec/autodiff.hpp

// Copyright 2026  AV2vec Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef AV2VEC_AUTODIFF_HPP_
#define AV2VEC_AUTODIFF_HPP_

#include <cmath>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "av2vec/tensor.hpp"

namespace av2vec {

// Reverse-mode tape. A tape is built per forward pass and discarded after
// backward(). Ops append nodes; backward() walks the nodes in reverse
// creation order, which is a topological order by construction.
//
// A tape constructed with grad_enabled=false records values only: no parent
// edges, no backward closures, no gradient buffers. The teacher path runs on
// such a tape, so "no gradients flow to the teacher" is structural rather
// than a masked-out computation.
template <typename T>
class Tape {
 public:
  struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  size_t size() const { return nodes_.size(); }
  size_t num_backward_closures() const { return num_closures_; }

  const Tensor<T>& val(Var v) const { return nodes_[v.id].value; }

  // Gradient of the last backward() target w.r.t. v. Zero tensor if v was
  // never reached.
  Tensor<T> grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.data.empty()) return Tensor<T>(n.value.shape);
    return n.grad;
  }

  // --- leaves ---------------------------------------------------------

  Var constant(Tensor<T> value) {
    return push(std::move(value), {}, nullptr, /*requires_grad=*/false);
  }

  // Leaf bound to an external parameter tensor; memoized per pointer so the
  // optimizer can fetch d loss / d *p after backward().
  Var param(Tensor<T>* p) {
    auto it = param_ids_.find(p);
    if (it != param_ids_.end()) return Var{it->second};
    Var v = push(*p, {}, nullptr, grad_enabled_);
    param_ids_.emplace(p, v.id);
    return v;
  }

  // Gradient for a registered parameter, or nullptr if no gradient reached
  // it (or gradients are disabled).
  const Tensor<T>* grad_for(const Tensor<T>* p) const {
    auto it = param_ids_.find(const_cast<Tensor<T>*>(p));
    if (it == param_ids_.end()) return nullptr;
    const Node& n = nodes_[it->second];
    if (n.grad.data.empty()) return nullptr;
    return &n.grad;
  }

  // --- elementwise / linear ops ----------------------------------------

  Var add(Var a, Var b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (!A.same_shape(B))
      throw ShapeError("add: " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += B[i];
    return push(std::move(out), {a.id, b.id},
                [a, b](Tape& t, int32_t self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  if (t.wants_grad(a.id)) axpy(t.grad_buf(a.id), g);
                  if (t.wants_grad(b.id)) axpy(t.grad_buf(b.id), g);
                });
  }

  Var sub(Var a, Var b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (!A.same_shape(B))
      throw ShapeError("sub: " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= B[i];
    return push(std::move(out), {a.id, b.id},
                [a, b](Tape& t, int32_t self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  if (t.wants_grad(a.id)) axpy(t.grad_buf(a.id), g);
                  if (t.wants_grad(b.id)) {
                    Tensor<T>& gb = t.grad_buf(b.id);
                    for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
                  }
                });
  }

  Var scale(Var x, T s) {
    Tensor<T> out = val(x);
    for (auto& v : out.data) v *= s;
    return push(std::move(out), {x.id},
                [x, s](Tape& t, int32_t self) {
                  if (!t.wants_grad(x.id)) return;
                  const Tensor<T>& g = t.nodes_[self].grad;
                  Tensor<T>& gx = t.grad_buf(x.id);
                  for (int64_t i = 0; i < g.numel(); ++i) gx[i] += s * g[i];
                });
  }

  // [R, D] + [D] broadcast over rows.
  Var add_rowvec(Var x, Var bias) {
    const Tensor<T>&X = val(x), &B = val(bias);
    const int d = X.shape.back();
    if (B.numel() != d)
      throw ShapeError("add_rowvec: bias " + B.shape_str() + " vs cols " +
                       std::to_string(d));
    Tensor<T> out = X;
    const int64_t rows = X.numel() / d;
    for (int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < d; ++c) out[r * d + c] += B[c];
    return push(std::move(out), {x.id, bias.id},
                [x, bias, d](Tape& t, int32_t self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  const int64_t rows = g.numel() / d;
                  if (t.wants_grad(x.id)) axpy(t.grad_buf(x.id), g);
                  if (t.wants_grad(bias.id)) {
                    Tensor<T>& gb = t.grad_buf(bias.id);
                    for (int64_t r = 0; r < rows; ++r)
                      for (int c = 0; c < d; ++c) gb[c] += g[r * d + c];
                  }
                });
  }

  // [m,k] x [k,n]
  Var matmul(Var a, Var b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
      throw ShapeError("matmul: " + A.shape_str() + " x " + B.shape_str());
    Tensor<T> out({A.rows(), B.cols()});
    as_matrix(out) = as_matrix(A) * as_matrix(B);
    return push(std::move(out), {a.id, b.id},
                [a, b](Tape& t, int32_t self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  if (t.wants_grad(a.id)) {
                    Tensor<T>& ga = t.grad_buf(a.id);
                    as_matrix(ga) +=
                        as_matrix(g) * as_matrix(t.nodes_[b.id].value).transpose();
                  }
                  if (t.wants_grad(b.id)) {
                    Tensor<T>& gb = t.grad_buf(b.id);
                    as_matrix(gb) +=
                        as_matrix(t.nodes_[a.id].value).transpose() * as_matrix(g);
                  }
                });
  }

  // [m,k] x [n,k]^T -> [m,n]
  Var matmul_nt(Var a, Var b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols())
      throw ShapeError("matmul_nt: " + A.shape_str() + " x " + B.shape_str());
    Tensor<T> out({A.rows(), B.rows()});
    as_matrix(out) = as_matrix(A) * as_matrix(B).transpose();
    return push(std::move(out), {a.id, b.id},
                [a, b](Tape& t, int32_t self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  if (t.wants_grad(a.id)) {
                    Tensor<T>& ga = t.grad_buf(a.id);
                    as_matrix(ga) += as_matrix(g) * as_matrix(t.nodes_[b.id].value);
                  }
                  if (t.wants_grad(b.id)) {
                    Tensor<T>& gb = t.grad_buf(b.id);
                    as_matrix(gb) +=
                        as_matrix(g).transpose() * as_matrix(t.nodes_[a.id].value);
                  }
                });
  }

  Var relu(Var x) {
    Tensor<T> out = val(x);
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    return push(std::move(out), {x.id},
                [x](Tape& t, int32_t self) {
                  if (!t.wants_grad(x.id)) return;
                  const Tensor<T>& g = t.nodes_[self].grad;
                  const Tensor<T>& in = t.nodes_[x.id].value;
                  Tensor<T>& gx = t.grad_buf(x.id);
                  for (int64_t i = 0; i < g.numel(); ++i)
                    if (in[i] > T(0)) gx[i] += g[i];
                });
  }

  Var gelu(Var x) {
    Tensor<T> out = val(x);
    for (auto& v : out.data) {
      const double z = static_cast<double>(v);
      v = static_cast<T>(0.5 * z * (1.0 + std::erf(z * kInvSqrt2)));
    }
    return push(std::move(out), {x.id},
                [x](Tape& t, int32_t self) {
                  if (!t.wants_grad(x.id)) return;
                  const Tensor<T>& g = t.nodes_[self].grad;
                  const Tensor<T>& in = t.nodes_[x.id].value;
                  Tensor<T>& gx = t.grad_buf(x.id);
                  for (int64_t i = 0; i < g.numel(); ++i) {
                    const double z = static_cast<double>(in[i]);
                    const double d = 0.5 * (1.0 + std::erf(z * kInvSqrt2)) +
                                     z * std::exp(-0.5 * z * z) * kInvSqrt2Pi;
                    gx[i] += g[i] * static_cast<T>(d);
                  }
                });
  }

  // Row-wise normalization over the last dim, population variance.
  Var layer_norm(Var x, Var gamma, Var beta, T eps) {
    const Tensor<T>& X = val(x);
    const int d = X.shape.back();
    const int64_t rows = X.numel() / d;
    if (val(gamma).numel() != d || val(beta).numel() != d)
      throw ShapeError("layer_norm: affine params do not match width");
    Tensor<T> xhat = X;
    Tensor<T> inv_sigma({static_cast<int>(rows)});
    for (int64_t r = 0; r < rows; ++r) {
      double mu = 0;
      for (int c = 0; c < d; ++c) mu += X[r * d + c];
      mu /= d;
      double var = 0;
      for (int c = 0; c < d; ++c) {
        const double dv = X[r * d + c] - mu;
        var += dv * dv;
      }
      var /= d;
      const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
      inv_sigma[r] = static_cast<T>(is);
      for (int c = 0; c < d; ++c)
        xhat[r * d + c] = static_cast<T>((X[r * d + c] - mu) * is);
    }
    Tensor<T> out = xhat;
    const Tensor<T>&G = val(gamma), &Bt = val(beta);
    for (int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < d; ++c)
        out[r * d + c] = out[r * d + c] * G[c] + Bt[c];
    return push(
        std::move(out), {x.id, gamma.id, beta.id},
        [x, gamma, beta, d, rows, xhat = std::move(xhat),
         inv_sigma = std::move(inv_sigma)](Tape& t, int32_t self) {
          const Tensor<T>& g = t.nodes_[self].grad;
          const Tensor<T>& G = t.nodes_[gamma.id].value;
          if (t.wants_grad(gamma.id)) {
            Tensor<T>& gg = t.grad_buf(gamma.id);
            for (int64_t r = 0; r < rows; ++r)
              for (int c = 0; c < d; ++c)
                gg[c] += g[r * d + c] * xhat[r * d + c];
          }
          if (t.wants_grad(beta.id)) {
            Tensor<T>& gb = t.grad_buf(beta.id);
            for (int64_t r = 0; r < rows; ++r)
              for (int c = 0; c < d; ++c) gb[c] += g[r * d + c];
          }
          if (t.wants_grad(x.id)) {
            Tensor<T>& gx = t.grad_buf(x.id);
            for (int64_t r = 0; r < rows; ++r) {
              double m1 = 0, m2 = 0;
              for (int c = 0; c < d; ++c) {
                const double dxh = g[r * d + c] * G[c];
                m1 += dxh;
                m2 += dxh * xhat[r * d + c];
              }
              m1 /= d;
              m2 /= d;
              for (int c = 0; c < d; ++c) {
                const double dxh = g[r * d + c] * G[c];
                gx[r * d + c] += static_cast<T>(
                    (dxh - m1 - xhat[r * d + c] * m2) * inv_sigma[r]);
              }
            }
          }
        });
  }

  Var softmax_rows(Var x) {
    const Tensor<T>& X = val(x);
    const int d = X.shape.back();
    const int64_t rows = X.numel() / d;
    Tensor<T> out = X;
    for (int64_t r = 0; r < rows; ++r) {
      double mx = -1e300;
      for (int c = 0; c < d; ++c)
        mx = std::max(mx, static_cast<double>(X[r * d + c]));
      double sum = 0;
      for (int c = 0; c < d; ++c) {
        const double e = std::exp(static_cast<double>(X[r * d + c]) - mx);
        out[r * d + c] = static_cast<T>(e);
        sum += e;
      }
      for (int c = 0; c < d; ++c)
        out[r * d + c] = static_cast<T>(out[r * d + c] / sum);
    }
    return push(std::move(out), {x.id},
                [x, d, rows](Tape& t, int32_t self) {
                  if (!t.wants_grad(x.id)) return;
                  const Tensor<T>& g = t.nodes_[self].grad;
                  const Tensor<T>& y = t.nodes_[self].value;
                  Tensor<T>& gx = t.grad_buf(x.id);
                  for (int64_t r = 0; r < rows; ++r) {
                    double dot = 0;
                    for (int c = 0; c < d; ++c)
                      dot += g[r * d + c] * y[r * d + c];
                    for (int c = 0; c < d; ++c)
                      gx[r * d + c] += static_cast<T>(
                          y[r * d + c] * (g[r * d + c] - dot));
                  }
                });
  }

  // [R, Da] ++ [R, Db] -> [R, Da+Db]; first argument occupies the leading
  // columns (audio-first order in the fusion contract).
  Var concat_cols(Var a, Var b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.rows() != B.rows())
      throw ShapeError("concat_cols: " + A.shape_str() + " vs " + B.shape_str());
    const int da = A.cols(), db = B.cols(), rows = A.rows();
    Tensor<T> out({rows, da + db});
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < da; ++c) out.at(r, c) = A.at(r, c);
      for (int c = 0; c < db; ++c) out.at(r, da + c) = B.at(r, c);
    }
    return push(std::move(out), {a.id, b.id},
                [a, b, da, db, rows](Tape& t, int32_t self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  if (t.wants_grad(a.id)) {
                    Tensor<T>& ga = t.grad_buf(a.id);
                    for (int r = 0; r < rows; ++r)
                      for (int c = 0; c < da; ++c)
                        ga.at(r, c) += g.at(r, c);
                  }
                  if (t.wants_grad(b.id)) {
                    Tensor<T>& gb = t.grad_buf(b.id);
                    for (int r = 0; r < rows; ++r)
                      for (int c = 0; c < db; ++c)
                        gb.at(r, c) += g.at(r, da + c);
                  }
                });
  }

  Var slice_cols(Var x, int start, int len) {
    const Tensor<T>& X = val(x);
    if (X.rank() != 2 || start < 0 || start + len > X.cols())
      throw ShapeError("slice_cols: bad range on " + X.shape_str());
    const int rows = X.rows();
    Tensor<T> out({rows, len});
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < len; ++c) out.at(r, c) = X.at(r, start + c);
    return push(std::move(out), {x.id},
                [x, start, len, rows](Tape& t, int32_t self) {
                  if (!t.wants_grad(x.id)) return;
                  const Tensor<T>& g = t.nodes_[self].grad;
                  Tensor<T>& gx = t.grad_buf(x.id);
                  for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < len; ++c)
                      gx.at(r, start + c) += g.at(r, c);
                });
  }

  // Rows listed in `rows` are replaced by the embedding vector e; all other
  // rows pass through bit-identical. d e receives the sum of the replaced
  // rows' gradients.
  Var replace_rows(Var x, std::vector<int> rows, Var e) {
    const Tensor<T>&X = val(x), &E = val(e);
    if (X.rank() != 2 || E.numel() != X.cols())
      throw ShapeError("replace_rows: embedding width " + E.shape_str() +
                       " vs " + X.shape_str());
    const int d = X.cols();
    for (int r : rows)
      if (r < 0 || r >= X.rows())
        throw RangeError("replace_rows: index " + std::to_string(r) +
                         " out of [0," + std::to_string(X.rows()) + ")");
    Tensor<T> out = X;
    for (int r : rows)
      for (int c = 0; c < d; ++c) out.at(r, c) = E[c];
    return push(std::move(out), {x.id, e.id},
                [x, e, d, rows = std::move(rows)](Tape& t, int32_t self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  if (t.wants_grad(x.id)) {
                    Tensor<T>& gx = t.grad_buf(x.id);
                    std::vector<char> hit(gx.rows(), 0);
                    for (int r : rows) hit[r] = 1;
                    for (int r = 0; r < gx.rows(); ++r) {
                      if (hit[r]) continue;
                      for (int c = 0; c < d; ++c) gx.at(r, c) += g.at(r, c);
                    }
                  }
                  if (t.wants_grad(e.id)) {
                    Tensor<T>& ge = t.grad_buf(e.id);
                    for (int r : rows)
                      for (int c = 0; c < d; ++c) ge[c] += g.at(r, c);
                  }
                });
  }

  // --- video ops --------------------------------------------------------

  // x [T,H,W,Ci], kernel [Co,Kt,Kh,Kw,Ci], bias [Co] -> [T,H,W,Co].
  // Stride 1; time is edge-replicated, space is zero-padded, so T is
  // preserved for any T >= 1.
  Var conv3d(Var x, Var kernel, Var bias) {
    const Tensor<T>&X = val(x), &K = val(kernel), &B = val(bias);
    if (X.rank() != 4 || K.rank() != 5)
      throw ShapeError("conv3d: need [T,H,W,Ci] and [Co,Kt,Kh,Kw,Ci]");
    const int Tn = X.dim(0), H = X.dim(1), W = X.dim(2), Ci = X.dim(3);
    const int Co = K.dim(0), Kt = K.dim(1), Kh = K.dim(2), Kw = K.dim(3);
    if (K.dim(4) != Ci)
      throw ShapeError("conv3d: kernel channels " + K.shape_str() +
                       " vs input " + X.shape_str());
    if (Kt % 2 == 0 || Kh % 2 == 0 || Kw % 2 == 0)
      throw ShapeError("conv3d: kernel extents must be odd");
    if (H < Kh || W < Kw)
      throw ShapeError("conv3d: spatial dims " + X.shape_str() +
                       " smaller than kernel " + K.shape_str());
    if (B.numel() != Co) throw ShapeError("conv3d: bias width");
    const int pt = Kt / 2, ph = Kh / 2, pw = Kw / 2;
    Tensor<T> out({Tn, H, W, Co});
    for (int t0 = 0; t0 < Tn; ++t0)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          for (int co = 0; co < Co; ++co) {
            double acc = B[co];
            for (int kt = 0; kt < Kt; ++kt) {
              int tt = t0 + kt - pt;
              tt = tt < 0 ? 0 : (tt >= Tn ? Tn - 1 : tt);
              for (int kh = 0; kh < Kh; ++kh) {
                const int hh = h + kh - ph;
                if (hh < 0 || hh >= H) continue;
                for (int kw = 0; kw < Kw; ++kw) {
                  const int ww = w + kw - pw;
                  if (ww < 0 || ww >= W) continue;
                  for (int ci = 0; ci < Ci; ++ci)
                    acc += X.at4(tt, hh, ww, ci) *
                           K[(((static_cast<int64_t>(co) * Kt + kt) * Kh + kh) *
                                  Kw +
                              kw) *
                                 Ci +
                             ci];
                }
              }
            }
            out.at4(t0, h, w, co) = static_cast<T>(acc);
          }
    return push(
        std::move(out), {x.id, kernel.id, bias.id},
        [x, kernel, bias, Tn, H, W, Ci, Co, Kt, Kh, Kw, pt, ph,
         pw](Tape& t, int32_t self) {
          const Tensor<T>& g = t.nodes_[self].grad;
          const Tensor<T>& X = t.nodes_[x.id].value;
          const Tensor<T>& K = t.nodes_[kernel.id].value;
          const bool wx = t.wants_grad(x.id);
          const bool wk = t.wants_grad(kernel.id);
          const bool wb = t.wants_grad(bias.id);
          Tensor<T>* gx = wx ? &t.grad_buf(x.id) : nullptr;
          Tensor<T>* gk = wk ? &t.grad_buf(kernel.id) : nullptr;
          Tensor<T>* gb = wb ? &t.grad_buf(bias.id) : nullptr;
          for (int t0 = 0; t0 < Tn; ++t0)
            for (int h = 0; h < H; ++h)
              for (int w = 0; w < W; ++w)
                for (int co = 0; co < Co; ++co) {
                  const T go = g.at4(t0, h, w, co);
                  if (go == T(0)) continue;
                  if (wb) (*gb)[co] += go;
                  for (int kt = 0; kt < Kt; ++kt) {
                    int tt = t0 + kt - pt;
                    tt = tt < 0 ? 0 : (tt >= Tn ? Tn - 1 : tt);
                    for (int kh = 0; kh < Kh; ++kh) {
                      const int hh = h + kh - ph;
                      if (hh < 0 || hh >= H) continue;
                      for (int kw = 0; kw < Kw; ++kw) {
                        const int ww = w + kw - pw;
                        if (ww < 0 || ww >= W) continue;
                        const int64_t koff =
                            (((static_cast<int64_t>(co) * Kt + kt) * Kh + kh) *
                                 Kw +
                             kw) *
                            Ci;
                        for (int ci = 0; ci < Ci; ++ci) {
                          if (wx) gx->at4(tt, hh, ww, ci) += go * K[koff + ci];
                          if (wk) (*gk)[koff + ci] += go * X.at4(tt, hh, ww, ci);
                        }
                      }
                    }
                  }
                }
        });
  }

  // Per-channel normalization over (t, h, w); batch-size independent.
  Var channel_norm(Var x, Var gamma, Var beta, T eps) {
    const Tensor<T>& X = val(x);
    if (X.rank() != 4) throw ShapeError("channel_norm: need [T,H,W,C]");
    const int C = X.shape.back();
    const int64_t n = X.numel() / C;
    if (val(gamma).numel() != C || val(beta).numel() != C)
      throw ShapeError("channel_norm: affine params do not match channels");
    Tensor<T> xhat = X;
    Tensor<T> inv_sigma({C});
    for (int c = 0; c < C; ++c) {
      double mu = 0;
      for (int64_t i = 0; i < n; ++i) mu += X[i * C + c];
      mu /= static_cast<double>(n);
      double var = 0;
      for (int64_t i = 0; i < n; ++i) {
        const double dv = X[i * C + c] - mu;
        var += dv * dv;
      }
      var /= static_cast<double>(n);
      const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
      inv_sigma[c] = static_cast<T>(is);
      for (int64_t i = 0; i < n; ++i)
        xhat[i * C + c] = static_cast<T>((X[i * C + c] - mu) * is);
    }
    Tensor<T> out = xhat;
    const Tensor<T>&G = val(gamma), &Bt = val(beta);
    for (int64_t i = 0; i < n; ++i)
      for (int c = 0; c < C; ++c)
        out[i * C + c] = out[i * C + c] * G[c] + Bt[c];
    return push(
        std::move(out), {x.id, gamma.id, beta.id},
        [x, gamma, beta, C, n, xhat = std::move(xhat),
         inv_sigma = std::move(inv_sigma)](Tape& t, int32_t self) {
          const Tensor<T>& g = t.nodes_[self].grad;
          const Tensor<T>& G = t.nodes_[gamma.id].value;
          if (t.wants_grad(gamma.id)) {
            Tensor<T>& gg = t.grad_buf(gamma.id);
            for (int64_t i = 0; i < n; ++i)
              for (int c = 0; c < C; ++c)
                gg[c] += g[i * C + c] * xhat[i * C + c];
          }
          if (t.wants_grad(beta.id)) {
            Tensor<T>& gb = t.grad_buf(beta.id);
            for (int64_t i = 0; i < n; ++i)
              for (int c = 0; c < C; ++c) gb[c] += g[i * C + c];
          }
          if (t.wants_grad(x.id)) {
            Tensor<T>& gx = t.grad_buf(x.id);
            for (int c = 0; c < C; ++c) {
              double m1 = 0, m2 = 0;
              for (int64_t i = 0; i < n; ++i) {
                const double dxh = g[i * C + c] * G[c];
                m1 += dxh;
                m2 += dxh * xhat[i * C + c];
              }
              m1 /= static_cast<double>(n);
              m2 /= static_cast<double>(n);
              for (int64_t i = 0; i < n; ++i) {
                const double dxh = g[i * C + c] * G[c];
                gx[i * C + c] += static_cast<T>(
                    (dxh - m1 - xhat[i * C + c] * m2) * inv_sigma[c]);
              }
            }
          }
        });
  }

  // [T,H,W,C] -> [T,C], mean over the spatial grid.
  Var spatial_mean(Var x) {
    const Tensor<T>& X = val(x);
    if (X.rank() != 4) throw ShapeError("spatial_mean: need [T,H,W,C]");
    const int Tn = X.dim(0), H = X.dim(1), W = X.dim(2), C = X.dim(3);
    Tensor<T> out({Tn, C});
    const double inv = 1.0 / (static_cast<double>(H) * W);
    for (int t0 = 0; t0 < Tn; ++t0)
      for (int c = 0; c < C; ++c) {
        double acc = 0;
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) acc += X.at4(t0, h, w, c);
        out.at(t0, c) = static_cast<T>(acc * inv);
      }
    return push(std::move(out), {x.id},
                [x, Tn, H, W, C](Tape& t, int32_t self) {
                  if (!t.wants_grad(x.id)) return;
                  const Tensor<T>& g = t.nodes_[self].grad;
                  Tensor<T>& gx = t.grad_buf(x.id);
                  const T inv = static_cast<T>(1.0 / (static_cast<double>(H) * W));
                  for (int t0 = 0; t0 < Tn; ++t0)
                    for (int c = 0; c < C; ++c) {
                      const T gv = g.at(t0, c) * inv;
                      for (int h = 0; h < H; ++h)
                        for (int w = 0; w < W; ++w)
                          gx.at4(t0, h, w, c) += gv;
                    }
                });
  }

  // --- losses -----------------------------------------------------------

  // sum_{t in rows} || x_t - target_t ||^2. Rows outside the set contribute
  // exactly zero and are never read.
  Var masked_sq_error(Var x, Tensor<T> target, std::vector<int> rows) {
    const Tensor<T>& X = val(x);
    if (!X.same_shape(target))
      throw ShapeError("masked_sq_error: " + X.shape_str() + " vs " +
                       target.shape_str());
    const int d = X.cols();
    double acc = 0;
    for (int r : rows) {
      if (r < 0 || r >= X.rows())
        throw RangeError("masked_sq_error: row " + std::to_string(r));
      for (int c = 0; c < d; ++c) {
        const double dv = static_cast<double>(X.at(r, c)) - target.at(r, c);
        acc += dv * dv;
      }
    }
    return push(Tensor<T>::scalar(static_cast<T>(acc)), {x.id},
                [x, d, target = std::move(target),
                 rows = std::move(rows)](Tape& t, int32_t self) {
                  if (!t.wants_grad(x.id)) return;
                  const T g = t.nodes_[self].grad[0];
                  const Tensor<T>& X = t.nodes_[x.id].value;
                  Tensor<T>& gx = t.grad_buf(x.id);
                  for (int r : rows)
                    for (int c = 0; c < d; ++c)
                      gx.at(r, c) +=
                          g * T(2) * (X.at(r, c) - target.at(r, c));
                });
  }

  // sum_{t in rows} CE(labels_t, softmax(logits_t)).
  Var masked_cross_entropy(Var logits, std::vector<int> labels,
                           std::vector<int> rows) {
    const Tensor<T>& L = val(logits);
    const int k = L.cols();
    if (static_cast<int>(labels.size()) != L.rows())
      throw ShapeError("masked_cross_entropy: labels length " +
                       std::to_string(labels.size()) + " vs T=" +
                       std::to_string(L.rows()));
    double acc = 0;
    for (int r : rows) {
      if (r < 0 || r >= L.rows())
        throw RangeError("masked_cross_entropy: row " + std::to_string(r));
      const int lab = labels[r];
      if (lab < 0 || lab >= k)
        throw RangeError("masked_cross_entropy: label " + std::to_string(lab) +
                         " out of [0," + std::to_string(k) + ")");
      double mx = -1e300;
      for (int c = 0; c < k; ++c)
        mx = std::max(mx, static_cast<double>(L.at(r, c)));
      double sum = 0;
      for (int c = 0; c < k; ++c)
        sum += std::exp(static_cast<double>(L.at(r, c)) - mx);
      acc += mx + std::log(sum) - static_cast<double>(L.at(r, lab));
    }
    return push(Tensor<T>::scalar(static_cast<T>(acc)), {logits.id},
                [logits, k, labels = std::move(labels),
                 rows = std::move(rows)](Tape& t, int32_t self) {
                  if (!t.wants_grad(logits.id)) return;
                  const T g = t.nodes_[self].grad[0];
                  const Tensor<T>& L = t.nodes_[logits.id].value;
                  Tensor<T>& gl = t.grad_buf(logits.id);
                  for (int r : rows) {
                    double mx = -1e300;
                    for (int c = 0; c < k; ++c)
                      mx = std::max(mx, static_cast<double>(L.at(r, c)));
                    double sum = 0;
                    for (int c = 0; c < k; ++c)
                      sum += std::exp(static_cast<double>(L.at(r, c)) - mx);
                    for (int c = 0; c < k; ++c) {
                      const double p =
                          std::exp(static_cast<double>(L.at(r, c)) - mx) / sum;
                      gl.at(r, c) += g * static_cast<T>(
                                             p - (c == labels[r] ? 1.0 : 0.0));
                    }
                  }
                });
  }

  // --- backward ---------------------------------------------------------

  void backward(Var loss) {
    if (!grad_enabled_)
      throw TrainingError("backward() on a gradient-disabled tape");
    Node& ln = nodes_[loss.id];
    if (ln.value.numel() != 1)
      throw ShapeError("backward: loss must be a scalar");
    grad_buf(loss.id)[0] = T(1);
    for (int32_t id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backprop && !n.grad.data.empty()) n.backprop(*this, id);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily
    std::function<void(Tape&, int32_t)> backprop;
    bool requires_grad = false;
  };

  bool wants_grad(int32_t id) const { return nodes_[id].requires_grad; }

  Tensor<T>& grad_buf(int32_t id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  Var push(Tensor<T> value, std::vector<int32_t> parents,
           std::function<void(Tape&, int32_t)> backprop,
           bool leaf_requires = false) {
    Node n;
    n.value = std::move(value);
    bool req = leaf_requires;
    if (grad_enabled_) {
      for (int32_t p : parents)
        if (nodes_[p].requires_grad) req = true;
    } else {
      req = false;
    }
    n.requires_grad = req;
    if (req && backprop) {
      n.backprop = std::move(backprop);
      ++num_closures_;
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
  }

  static constexpr double kInvSqrt2 = 0.7071067811865475244;
  static constexpr double kInvSqrt2Pi = 0.3989422804014326779;

  bool grad_enabled_;
  size_t num_closures_ = 0;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, int32_t> param_ids_;
};

}  // namespace av2vec

#endif  // AV2VEC_AUTODIFF_HPP_
