#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>

#include "mmt/tensor.hpp"

namespace mmt {

// Reverse-mode tape. Build one per forward pass; `backward(loss)` seeds the
// scalar loss with gradient 1 and sweeps the nodes in reverse creation order,
// accumulating into every reachable Parameter's gradient.
template <typename T>
class Tape {
 public:
  using Id = int32_t;
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<Mat>;
  using MapC = Eigen::Map<const Mat>;

  explicit Tape(bool train = false, uint64_t dropout_seed = 0, uint64_t step = 0)
      : train_(train), dropout_seed_(dropout_seed), step_(step) {}

  bool training() const { return train_; }

  Id constant(Tensor<T> t) { return push(std::move(t)); }

  Id param(Parameter<T>& p) {
    Id id = push_external(&p.value);
    nodes_[size_t(id)].backward = [&p](Tape& tape, Id self) {
      p.ensure_grad();
      const Tensor<T>& g = tape.grad(self);
      for (int64_t i = 0; i < g.size(); ++i) p.grad.v[size_t(i)] += g.v[size_t(i)];
    };
    return id;
  }

  const Tensor<T>& val(Id id) const {
    const Node& n = nodes_[size_t(id)];
    return n.external ? *n.external : n.value;
  }

  // --- ops ----------------------------------------------------------------

  // [M,K] x [K,N] -> [M,N]
  Id matmul(Id a, Id b) {
    const auto& A = val(a); const auto& B = val(b);
    if (A.ndim() != 2 || B.ndim() != 2 || A.dim(1) != B.dim(0))
      fail_usage("matmul shape mismatch: ", shape_str(A.shape), " x ", shape_str(B.shape));
    int64_t M = A.dim(0), K = A.dim(1), N = B.dim(1);
    Tensor<T> out({M, N});
    MapM(out.data(), M, N).noalias() = MapC(A.data(), M, K) * MapC(B.data(), K, N);
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a, b, M, K, N](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      MapC G(g.data(), M, N);
      if (t.wants_grad(a)) {
        MapM(t.grad_buf(a).data(), M, K).noalias() +=
            G * MapC(t.val(b).data(), K, N).transpose();
      }
      if (t.wants_grad(b)) {
        MapM(t.grad_buf(b).data(), K, N).noalias() +=
            MapC(t.val(a).data(), M, K).transpose() * G;
      }
    };
    return id;
  }

  // Batched matmul. transpose_b=false: [B,M,K]x[B,K,N]->[B,M,N];
  // transpose_b=true: [B,M,K]x[B,N,K]->[B,M,N] (i.e. A·Bᵀ per batch).
  Id bmm(Id a, Id b, bool transpose_b = false) {
    const auto& A = val(a); const auto& B = val(b);
    if (A.ndim() != 3 || B.ndim() != 3 || A.dim(0) != B.dim(0))
      fail_usage("bmm shape mismatch: ", shape_str(A.shape), " x ", shape_str(B.shape));
    int64_t Bn = A.dim(0), M = A.dim(1), K = A.dim(2);
    int64_t N = transpose_b ? B.dim(1) : B.dim(2);
    int64_t bk = transpose_b ? B.dim(2) : B.dim(1);
    if (bk != K) fail_usage("bmm inner-dim mismatch: ", shape_str(A.shape), " x ",
                            shape_str(B.shape), (transpose_b ? " (transposed)" : ""));
    Tensor<T> out({Bn, M, N});
    for (int64_t i = 0; i < Bn; ++i) {
      MapC Ai(A.data() + i * M * K, M, K);
      MapM Ci(out.data() + i * M * N, M, N);
      if (transpose_b)
        Ci.noalias() = Ai * MapC(B.data() + i * N * K, N, K).transpose();
      else
        Ci.noalias() = Ai * MapC(B.data() + i * K * N, K, N);
    }
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a, b, Bn, M, K, N, transpose_b](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      for (int64_t i = 0; i < Bn; ++i) {
        MapC Gi(g.data() + i * M * N, M, N);
        MapC Ai(t.val(a).data() + i * M * K, M, K);
        if (transpose_b) {
          MapC Bi(t.val(b).data() + i * N * K, N, K);
          if (t.wants_grad(a))
            MapM(t.grad_buf(a).data() + i * M * K, M, K).noalias() += Gi * Bi;
          if (t.wants_grad(b))
            MapM(t.grad_buf(b).data() + i * N * K, N, K).noalias() += Gi.transpose() * Ai;
        } else {
          MapC Bi(t.val(b).data() + i * K * N, K, N);
          if (t.wants_grad(a))
            MapM(t.grad_buf(a).data() + i * M * K, M, K).noalias() += Gi * Bi.transpose();
          if (t.wants_grad(b))
            MapM(t.grad_buf(b).data() + i * K * N, K, N).noalias() += Ai.transpose() * Gi;
        }
      }
    };
    return id;
  }

  Id add(Id a, Id b) {
    const auto& A = val(a); const auto& B = val(b);
    if (!A.same_shape(B))
      fail_usage("add shape mismatch: ", shape_str(A.shape), " vs ", shape_str(B.shape));
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < out.size(); ++i) out.v[size_t(i)] = A.v[size_t(i)] + B.v[size_t(i)];
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a, b](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      if (t.wants_grad(a)) t.axpy(g, t.grad_buf(a));
      if (t.wants_grad(b)) t.axpy(g, t.grad_buf(b));
    };
    return id;
  }

  // elementwise product (same shape)
  Id mul(Id a, Id b) {
    const auto& A = val(a); const auto& B = val(b);
    if (!A.same_shape(B))
      fail_usage("mul shape mismatch: ", shape_str(A.shape), " vs ", shape_str(B.shape));
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < out.size(); ++i) out.v[size_t(i)] = A.v[size_t(i)] * B.v[size_t(i)];
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a, b](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      if (t.wants_grad(a)) {
        auto& ga = t.grad_buf(a);
        const auto& B2 = t.val(b);
        for (int64_t i = 0; i < g.size(); ++i)
          ga.v[size_t(i)] += g.v[size_t(i)] * B2.v[size_t(i)];
      }
      if (t.wants_grad(b)) {
        auto& gb = t.grad_buf(b);
        const auto& A2 = t.val(a);
        for (int64_t i = 0; i < g.size(); ++i)
          gb.v[size_t(i)] += g.v[size_t(i)] * A2.v[size_t(i)];
      }
    };
    return id;
  }

  // a[..., N] + bias[N]
  Id add_bias(Id a, Id bias) {
    const auto& A = val(a); const auto& B = val(bias);
    if (B.ndim() != 1 || A.dim(A.ndim() - 1) != B.dim(0))
      fail_usage("add_bias shape mismatch: ", shape_str(A.shape), " + ", shape_str(B.shape));
    int64_t N = B.dim(0), R = A.size() / N;
    Tensor<T> out(A.shape);
    for (int64_t r = 0; r < R; ++r)
      for (int64_t j = 0; j < N; ++j)
        out.v[size_t(r * N + j)] = A.v[size_t(r * N + j)] + B.v[size_t(j)];
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a, bias, R, N](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      if (t.wants_grad(a)) t.axpy(g, t.grad_buf(a));
      if (t.wants_grad(bias)) {
        auto& gb = t.grad_buf(bias);
        for (int64_t r = 0; r < R; ++r)
          for (int64_t j = 0; j < N; ++j) gb.v[size_t(j)] += g.v[size_t(r * N + j)];
      }
    };
    return id;
  }

  // a[B, rest...] + b[rest...], broadcast over the leading dim
  Id add_bcast0(Id a, Id b) {
    const auto& A = val(a); const auto& B = val(b);
    if (A.ndim() < 2 ||
        std::vector<int64_t>(A.shape.begin() + 1, A.shape.end()) != B.shape)
      fail_usage("add_bcast0 shape mismatch: ", shape_str(A.shape), " + ", shape_str(B.shape));
    int64_t Bn = A.dim(0), R = B.size();
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < Bn; ++i)
      for (int64_t j = 0; j < R; ++j)
        out.v[size_t(i * R + j)] = A.v[size_t(i * R + j)] + B.v[size_t(j)];
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a, b, Bn, R](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      if (t.wants_grad(a)) t.axpy(g, t.grad_buf(a));
      if (t.wants_grad(b)) {
        auto& gb = t.grad_buf(b);
        for (int64_t i = 0; i < Bn; ++i)
          for (int64_t j = 0; j < R; ++j) gb.v[size_t(j)] += g.v[size_t(i * R + j)];
      }
    };
    return id;
  }

  Id scale(Id a, T s) {
    const auto& A = val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < out.size(); ++i) out.v[size_t(i)] = A.v[size_t(i)] * s;
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a, s](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      if (!t.wants_grad(a)) return;
      auto& ga = t.grad_buf(a);
      for (int64_t i = 0; i < g.size(); ++i) ga.v[size_t(i)] += g.v[size_t(i)] * s;
    };
    return id;
  }

  Id relu(Id a) {
    const auto& A = val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < out.size(); ++i) out.v[size_t(i)] = A.v[size_t(i)] > T(0) ? A.v[size_t(i)] : T(0);
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a](Tape& t, Id self) {
      if (!t.wants_grad(a)) return;
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& x = t.val(a);
      auto& ga = t.grad_buf(a);
      for (int64_t i = 0; i < g.size(); ++i)
        if (x.v[size_t(i)] > T(0)) ga.v[size_t(i)] += g.v[size_t(i)];
    };
    return id;
  }

  // numerically stable softmax over the last axis
  Id softmax(Id a) {
    const auto& A = val(a);
    if (A.ndim() < 1) fail_usage("softmax on scalar");
    int64_t C = A.dim(A.ndim() - 1), R = A.size() / C;
    Tensor<T> out(A.shape);
    for (int64_t r = 0; r < R; ++r) {
      const T* x = A.data() + r * C;
      T* y = out.data() + r * C;
      T mx = x[0];
      for (int64_t j = 1; j < C; ++j) mx = std::max(mx, x[j]);
      T sum = 0;
      for (int64_t j = 0; j < C; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
      }
      for (int64_t j = 0; j < C; ++j) y[j] /= sum;
    }
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a, R, C](Tape& t, Id self) {
      if (!t.wants_grad(a)) return;
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& y = t.val(self);
      auto& ga = t.grad_buf(a);
      for (int64_t r = 0; r < R; ++r) {
        const T* yv = y.data() + r * C;
        const T* gv = g.data() + r * C;
        T dot = 0;
        for (int64_t j = 0; j < C; ++j) dot += gv[j] * yv[j];
        T* out_g = ga.data() + r * C;
        for (int64_t j = 0; j < C; ++j) out_g[j] += yv[j] * (gv[j] - dot);
      }
    };
    return id;
  }

  // scores[B*H, Sq, Sk] += mask[B, Sq, Sk] (broadcast over heads); the mask
  // is additive (-inf style) and carries no gradient.
  Id add_head_bcast(Id a, const Tensor<T>& mask, int64_t heads) {
    const auto& A = val(a);
    if (A.ndim() != 3 || mask.ndim() != 3 || A.dim(0) != mask.dim(0) * heads ||
        A.dim(1) != mask.dim(1) || A.dim(2) != mask.dim(2))
      fail_usage("add_head_bcast shape mismatch: ", shape_str(A.shape), " + ",
                 shape_str(mask.shape), " heads=", heads);
    int64_t plane = mask.dim(1) * mask.dim(2);
    Tensor<T> out(A.shape);
    for (int64_t bh = 0; bh < A.dim(0); ++bh) {
      int64_t b = bh / heads;
      const T* m = mask.data() + b * plane;
      const T* x = A.data() + bh * plane;
      T* y = out.data() + bh * plane;
      for (int64_t i = 0; i < plane; ++i) y[i] = x[i] + m[i];
    }
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a](Tape& t, Id self) {
      if (t.wants_grad(a)) t.axpy(t.grad(self), t.grad_buf(a));
    };
    return id;
  }

  // layer normalization over the last axis (pre-gain mean 0 / variance 1)
  Id layer_norm(Id x, Id gain, Id bias, T eps = T(1e-6)) {
    const auto& X = val(x); const auto& G = val(gain); const auto& B = val(bias);
    int64_t D = X.dim(X.ndim() - 1);
    if (G.ndim() != 1 || B.ndim() != 1 || G.dim(0) != D || B.dim(0) != D)
      fail_usage("layer_norm shape mismatch: x=", shape_str(X.shape), " gain=",
                 shape_str(G.shape), " bias=", shape_str(B.shape));
    int64_t R = X.size() / D;
    Tensor<T> out(X.shape);
    auto xhat = std::make_shared<Tensor<T>>(X.shape);
    auto inv_std = std::make_shared<std::vector<T>>(size_t(R));
    for (int64_t r = 0; r < R; ++r) {
      const T* xv = X.data() + r * D;
      T mu = 0;
      for (int64_t j = 0; j < D; ++j) mu += xv[j];
      mu /= T(D);
      T var = 0;
      for (int64_t j = 0; j < D; ++j) var += (xv[j] - mu) * (xv[j] - mu);
      var /= T(D);
      T is = T(1) / std::sqrt(var + eps);
      (*inv_std)[size_t(r)] = is;
      T* xh = xhat->data() + r * D;
      T* y = out.data() + r * D;
      for (int64_t j = 0; j < D; ++j) {
        xh[j] = (xv[j] - mu) * is;
        y[j] = xh[j] * G.v[size_t(j)] + B.v[size_t(j)];
      }
    }
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [x, gain, bias, R, D, xhat, inv_std](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& G2 = t.val(gain);
      for (int64_t r = 0; r < R; ++r) {
        const T* gy = g.data() + r * D;
        const T* xh = xhat->data() + r * D;
        if (t.wants_grad(gain)) {
          auto& gg = t.grad_buf(gain);
          for (int64_t j = 0; j < D; ++j) gg.v[size_t(j)] += gy[j] * xh[j];
        }
        if (t.wants_grad(bias)) {
          auto& gb = t.grad_buf(bias);
          for (int64_t j = 0; j < D; ++j) gb.v[size_t(j)] += gy[j];
        }
        if (t.wants_grad(x)) {
          T mean_gh = 0, mean_ghx = 0;
          for (int64_t j = 0; j < D; ++j) {
            T gh = gy[j] * G2.v[size_t(j)];
            mean_gh += gh;
            mean_ghx += gh * xh[j];
          }
          mean_gh /= T(D);
          mean_ghx /= T(D);
          T is = (*inv_std)[size_t(r)];
          T* gx = t.grad_buf(x).data() + r * D;
          for (int64_t j = 0; j < D; ++j) {
            T gh = gy[j] * G2.v[size_t(j)];
            gx[j] += is * (gh - mean_gh - xh[j] * mean_ghx);
          }
        }
      }
    };
    return id;
  }

  // Gathers rows of `table` for `ids`, scaled by `scale`; gradient is
  // scatter-added into the table's accumulator.
  Id embedding(Parameter<T>& table, std::vector<int> ids, T scale = T(1)) {
    if (table.value.ndim() != 2) fail_usage("embedding table must be 2-D");
    int64_t V = table.value.dim(0), D = table.value.dim(1);
    for (int id : ids)
      if (id < 0 || int64_t(id) >= V)
        fail_usage("embedding id ", id, " out of range for table ", table.name, " (", V, ")");
    int64_t N = int64_t(ids.size());
    Tensor<T> out({N, D});
    for (int64_t i = 0; i < N; ++i) {
      const T* row = table.value.data() + int64_t(ids[size_t(i)]) * D;
      T* y = out.data() + i * D;
      for (int64_t j = 0; j < D; ++j) y[j] = row[j] * scale;
    }
    Id id = push(std::move(out));
    auto ids_ptr = std::make_shared<std::vector<int>>(std::move(ids));
    nodes_[size_t(id)].backward = [&table, ids_ptr, D, scale](Tape& t, Id self) {
      table.ensure_grad();
      const Tensor<T>& g = t.grad(self);
      for (size_t i = 0; i < ids_ptr->size(); ++i) {
        T* row = table.grad.data() + int64_t((*ids_ptr)[i]) * D;
        const T* gv = g.data() + int64_t(i) * D;
        for (int64_t j = 0; j < D; ++j) row[j] += gv[j] * scale;
      }
    };
    return id;
  }

  // Inverted-scaling dropout: kept activations divided by (1-rate); identity
  // when not training. Masks are reproducible functions of
  // (dropout_seed, op instance, step).
  Id dropout(Id a, T rate) {
    if (!train_ || rate <= T(0)) return a;
    if (rate >= T(1)) fail_usage("dropout rate must be < 1");
    const auto& A = val(a);
    Rng rng(dropout_seed_ ^ mix64(step_), cat("dropout", dropout_counter_++));
    auto mask = std::make_shared<Tensor<T>>(A.shape);
    T keep_scale = T(1) / (T(1) - rate);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) {
      T m = rng.next_double() < double(rate) ? T(0) : keep_scale;
      mask->v[size_t(i)] = m;
      out.v[size_t(i)] = A.v[size_t(i)] * m;
    }
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a, mask](Tape& t, Id self) {
      if (!t.wants_grad(a)) return;
      const Tensor<T>& g = t.grad(self);
      auto& ga = t.grad_buf(a);
      for (int64_t i = 0; i < g.size(); ++i)
        ga.v[size_t(i)] += g.v[size_t(i)] * mask->v[size_t(i)];
    };
    return id;
  }

  Id reshape(Id a, std::vector<int64_t> shape) {
    const auto& A = val(a);
    if (Tensor<T>::count(shape) != A.size())
      fail_usage("reshape size mismatch: ", shape_str(A.shape), " -> ", shape_str(shape));
    Tensor<T> out(shape, A.v);
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a](Tape& t, Id self) {
      if (t.wants_grad(a)) t.axpy(t.grad(self), t.grad_buf(a));
    };
    return id;
  }

  Id permute(Id a, std::vector<int> perm) {
    const auto& A = val(a);
    int nd = A.ndim();
    if (int(perm.size()) != nd) fail_usage("permute rank mismatch");
    std::vector<int64_t> out_shape(size_t(nd));
    for (int i = 0; i < nd; ++i) out_shape[size_t(i)] = A.dim(perm[size_t(i)]);
    Tensor<T> out(out_shape);
    permute_into(A, perm, out);
    Id id = push(std::move(out));
    nodes_[size_t(id)].backward = [a, perm, nd](Tape& t, Id self) {
      if (!t.wants_grad(a)) return;
      std::vector<int> inv(size_t(nd));
      for (int i = 0; i < nd; ++i) inv[size_t(perm[size_t(i)])] = i;
      Tensor<T> gin(t.val(a).shape);
      permute_into(t.grad(self), inv, gin);
      t.axpy(gin, t.grad_buf(a));
    };
    return id;
  }

  // Masked label-smoothed cross entropy over rows of logits [N, V]; returns
  // a scalar normalized by the number of unmasked tokens.
  Id cross_entropy(Id logits, std::vector<int> targets, std::vector<uint8_t> token_mask,
                   T smoothing) {
    const auto& L = val(logits);
    if (L.ndim() != 2) fail_usage("cross_entropy expects 2-D logits, got ", shape_str(L.shape));
    int64_t N = L.dim(0), V = L.dim(1);
    if (int64_t(targets.size()) != N || int64_t(token_mask.size()) != N)
      fail_usage("cross_entropy target/mask length mismatch");
    if (smoothing < T(0) || smoothing >= T(1)) fail_usage("smoothing must be in [0,1)");
    double active = 0;
    for (auto m : token_mask) active += m ? 1 : 0;
    if (active == 0) fail_usage("cross_entropy: no unmasked tokens");

    auto probs = std::make_shared<Tensor<T>>(std::vector<int64_t>{N, V});
    double total = 0;
    for (int64_t r = 0; r < N; ++r) {
      const T* x = L.data() + r * V;
      T* p = probs->data() + r * V;
      T mx = x[0];
      for (int64_t j = 1; j < V; ++j) mx = std::max(mx, x[j]);
      double sum = 0;
      for (int64_t j = 0; j < V; ++j) sum += std::exp(double(x[j] - mx));
      double lse = std::log(sum) + double(mx);
      for (int64_t j = 0; j < V; ++j) p[j] = T(std::exp(double(x[j]) - lse));
      if (!token_mask[size_t(r)]) continue;
      int y = targets[size_t(r)];
      if (y < 0 || int64_t(y) >= V) fail_usage("cross_entropy target out of range: ", y);
      double sum_logits = 0;
      for (int64_t j = 0; j < V; ++j) sum_logits += double(x[j]);
      total += lse - (1 - double(smoothing)) * double(x[y]) -
               double(smoothing) / double(V) * sum_logits;
    }
    Tensor<T> out = Tensor<T>::scalar(T(total / active));
    Id id = push(std::move(out));
    auto tgt = std::make_shared<std::vector<int>>(std::move(targets));
    auto msk = std::make_shared<std::vector<uint8_t>>(std::move(token_mask));
    nodes_[size_t(id)].backward = [logits, probs, tgt, msk, N, V, smoothing,
                                   active](Tape& t, Id self) {
      if (!t.wants_grad(logits)) return;
      T gscale = t.grad(self).v[0];
      auto& gl = t.grad_buf(logits);
      T uniform = smoothing / T(V);
      for (int64_t r = 0; r < N; ++r) {
        if (!(*msk)[size_t(r)]) continue;
        const T* p = probs->data() + r * V;
        T* g = gl.data() + r * V;
        T w = gscale / T(active);
        int y = (*tgt)[size_t(r)];
        for (int64_t j = 0; j < V; ++j) {
          T q = uniform + (int64_t(y) == j ? T(1) - smoothing : T(0));
          g[j] += w * (p[j] - q);
        }
      }
    };
    return id;
  }

  Id sum_all(Id a) {
    const auto& A = val(a);
    T s = 0;
    for (T x : A.v) s += x;
    Id id = push(Tensor<T>::scalar(s));
    nodes_[size_t(id)].backward = [a](Tape& t, Id self) {
      if (!t.wants_grad(a)) return;
      T g = t.grad(self).v[0];
      auto& ga = t.grad_buf(a);
      for (auto& x : ga.v) x += g;
    };
    return id;
  }

  // --- backward -------------------------------------------------------------

  void backward(Id loss) {
    if (val(loss).size() != 1) fail_usage("backward requires a scalar loss, got ",
                                          shape_str(val(loss).shape));
    grads_.assign(nodes_.size(), Tensor<T>());
    has_grad_.assign(nodes_.size(), 0);
    grad_buf(loss).v[0] = T(1);
    for (Id id = Id(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[size_t(id)];
      if (!has_grad_[size_t(id)] || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  const Tensor<T>& grad(Id id) const { return grads_[size_t(id)]; }

  size_t num_nodes() const { return nodes_.size(); }

  // internal helpers used by op closures
  bool wants_grad(Id) const { return true; }
  Tensor<T>& grad_buf(Id id) {
    if (!has_grad_[size_t(id)]) {
      grads_[size_t(id)] = Tensor<T>::zeros(val(id).shape);
      has_grad_[size_t(id)] = 1;
    }
    return grads_[size_t(id)];
  }
  void axpy(const Tensor<T>& src, Tensor<T>& dst) {
    for (int64_t i = 0; i < src.size(); ++i) dst.v[size_t(i)] += src.v[size_t(i)];
  }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;  // parameter-backed leaf
    std::function<void(Tape&, Id)> backward;
  };

  Id push(Tensor<T> value) {
#ifndef NDEBUG
    value.debug_check_finite();
#endif
    nodes_.push_back({std::move(value), nullptr, nullptr});
    return Id(nodes_.size()) - 1;
  }
  Id push_external(const Tensor<T>* ext) {
    nodes_.push_back({Tensor<T>(), ext, nullptr});
    return Id(nodes_.size()) - 1;
  }

  static void permute_into(const Tensor<T>& in, const std::vector<int>& perm, Tensor<T>& out) {
    int nd = in.ndim();
    std::vector<int64_t> in_strides(size_t(nd), 1);
    for (int i = nd - 2; i >= 0; --i)
      in_strides[size_t(i)] = in_strides[size_t(i) + 1] * in.dim(i + 1);
    std::vector<int64_t> out_shape(size_t(nd));
    for (int i = 0; i < nd; ++i) out_shape[size_t(i)] = in.dim(perm[size_t(i)]);
    std::vector<int64_t> idx(size_t(nd), 0);
    for (int64_t o = 0; o < in.size(); ++o) {
      int64_t src = 0;
      for (int i = 0; i < nd; ++i) src += idx[size_t(i)] * in_strides[size_t(perm[size_t(i)])];
      out.v[size_t(o)] = in.v[size_t(src)];
      for (int i = nd - 1; i >= 0; --i) {
        if (++idx[size_t(i)] < out_shape[size_t(i)]) break;
        idx[size_t(i)] = 0;
      }
    }
  }

  bool train_;
  uint64_t dropout_seed_;
  uint64_t step_;
  uint64_t dropout_counter_ = 0;
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::vector<uint8_t> has_grad_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace mmt
