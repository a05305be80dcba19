#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "memlen/pomdp.hpp"  // ValidationError

namespace memlen::nn {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double rng_uniform01(std::mt19937_64& rng) {
  return double(rng() >> 11) * (1.0 / 9007199254740992.0);
}

/// Reverse-mode tape over dense row-major matrices. Rank-3 activations use a
/// time-major layout: row t*B + b holds step t of batch element b, so each
/// step is a contiguous block of B rows.
template <typename S>
class Tape {
 public:
  struct Node {
    MatX<S> val;
    MatX<S> grad;
    std::function<void(Tape&, int)> back;  // (tape, own id)
    bool needs_grad = false;
  };

  int constant(MatX<S> v) {
    nodes_.push_back(Node{std::move(v), {}, nullptr, false});
    return static_cast<int>(nodes_.size()) - 1;
  }
  int leaf(const MatX<S>& v) {
    nodes_.push_back(Node{v, {}, nullptr, true});
    return static_cast<int>(nodes_.size()) - 1;
  }

  const MatX<S>& val(int id) const { return nodes_[id].val; }
  MatX<S>& grad(int id) { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  std::int64_t rows(int id) const { return nodes_[id].val.rows(); }
  std::int64_t cols(int id) const { return nodes_[id].val.cols(); }

  void add_grad(int id, const MatX<S>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = MatX<S>::Zero(n.val.rows(), n.val.cols());
    n.grad += g;
  }

  void backward(int loss) {
    if (nodes_[loss].val.rows() != 1 || nodes_[loss].val.cols() != 1)
      throw ValidationError("backward requires a scalar loss");
    nodes_[loss].grad = MatX<S>::Ones(1, 1);
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.back && n.grad.size() != 0) n.back(*this, id);
    }
  }

  // ---- primitives ----

  int matmul(int a, int b) {
    check_inner(a, b);
    int id = emit(val(a) * val(b), a, b);
    nodes_[id].back = [a, b](Tape& t, int self) {
      const MatX<S>& g = t.grad(self);
      if (t.needs_grad(a)) t.add_grad(a, g * t.val(b).transpose());
      if (t.needs_grad(b)) t.add_grad(b, t.val(a).transpose() * g);
    };
    return id;
  }

  int add(int a, int b) {
    check_same(a, b);
    int id = emit(val(a) + val(b), a, b);
    nodes_[id].back = [a, b](Tape& t, int self) {
      t.add_grad(a, t.grad(self));
      t.add_grad(b, t.grad(self));
    };
    return id;
  }

  int sub(int a, int b) {
    check_same(a, b);
    int id = emit(val(a) - val(b), a, b);
    nodes_[id].back = [a, b](Tape& t, int self) {
      t.add_grad(a, t.grad(self));
      t.add_grad(b, -t.grad(self));
    };
    return id;
  }

  /// Broadcast-add a 1 x n row vector to every row.
  int add_rowvec(int a, int b) {
    if (cols(a) != cols(b) || rows(b) != 1)
      throw ValidationError("add_rowvec: bias must be 1 x cols(a)");
    int id = emit(val(a).rowwise() + val(b).row(0), a, b);
    nodes_[id].back = [a, b](Tape& t, int self) {
      t.add_grad(a, t.grad(self));
      if (t.needs_grad(b)) t.add_grad(b, t.grad(self).colwise().sum());
    };
    return id;
  }

  int mul(int a, int b) {
    check_same(a, b);
    int id = emit(val(a).cwiseProduct(val(b)), a, b);
    nodes_[id].back = [a, b](Tape& t, int self) {
      if (t.needs_grad(a)) t.add_grad(a, t.grad(self).cwiseProduct(t.val(b)));
      if (t.needs_grad(b)) t.add_grad(b, t.grad(self).cwiseProduct(t.val(a)));
    };
    return id;
  }

  int scale(int a, S k) {
    int id = emit(val(a) * k, a, a);
    nodes_[id].back = [a, k](Tape& t, int self) { t.add_grad(a, t.grad(self) * k); };
    return id;
  }

  int relu(int a) {
    int id = emit(val(a).cwiseMax(S(0)), a, a);
    nodes_[id].back = [a](Tape& t, int self) {
      t.add_grad(a, t.grad(self).cwiseProduct(
                        (t.val(a).array() > S(0)).template cast<S>().matrix()));
    };
    return id;
  }

  int tanh_(int a) {
    int id = emit(val(a).array().tanh().matrix(), a, a);
    nodes_[id].back = [a](Tape& t, int self) {
      const auto& y = t.val(self).array();
      t.add_grad(a, (t.grad(self).array() * (S(1) - y * y)).matrix());
    };
    return id;
  }

  int sigmoid_(int a) {
    MatX<S> y = (S(1) / (S(1) + (-val(a)).array().exp())).matrix();
    int id = emit(std::move(y), a, a);
    nodes_[id].back = [a](Tape& t, int self) {
      const auto& y2 = t.val(self).array();
      t.add_grad(a, (t.grad(self).array() * y2 * (S(1) - y2)).matrix());
    };
    return id;
  }

  int softmax_rows(int a) {
    MatX<S> y = val(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      S m = y.row(r).maxCoeff();
      y.row(r) = (y.row(r).array() - m).exp();
      y.row(r) /= y.row(r).sum();
    }
    int id = emit(std::move(y), a, a);
    nodes_[id].back = [a](Tape& t, int self) {
      const MatX<S>& y2 = t.val(self);
      const MatX<S>& g = t.grad(self);
      MatX<S> d(y2.rows(), y2.cols());
      for (Eigen::Index r = 0; r < y2.rows(); ++r) {
        S dot = y2.row(r).dot(g.row(r));
        d.row(r) = (y2.row(r).array() * (g.row(r).array() - dot)).matrix();
      }
      t.add_grad(a, d);
    };
    return id;
  }

  /// Row-wise layer norm with trainable gain/bias (1 x n each).
  int layer_norm(int x, int gain, int bias, S eps = S(1e-5)) {
    if (cols(x) != cols(gain) || cols(x) != cols(bias))
      throw ValidationError("layer_norm: gain/bias must match feature width");
    const MatX<S>& v = val(x);
    const Eigen::Index n = v.cols();
    MatX<S> xhat(v.rows(), n);
    MatX<S> istd(v.rows(), 1);
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      S mu = v.row(r).mean();
      auto c = (v.row(r).array() - mu);
      S var = c.square().sum() / S(n);
      S is = S(1) / std::sqrt(var + eps);
      istd(r, 0) = is;
      xhat.row(r) = (c * is).matrix();
    }
    MatX<S> out = (xhat.array().rowwise() * val(gain).row(0).array()).matrix();
    out = out.rowwise() + val(bias).row(0);
    int id = emit(std::move(out), x, gain);
    nodes_[id].back = [x, gain, bias, xhat, istd](Tape& t, int self) {
      const MatX<S>& g = t.grad(self);
      const Eigen::Index n = g.cols();
      if (t.needs_grad(gain)) t.add_grad(gain, g.cwiseProduct(xhat).colwise().sum());
      if (t.needs_grad(bias)) t.add_grad(bias, g.colwise().sum());
      if (!t.needs_grad(x)) return;
      MatX<S> dx(g.rows(), n);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        auto dy = (g.row(r).array() * t.val(gain).row(0).array());
        S m1 = dy.sum() / S(n);
        S m2 = (dy * xhat.row(r).array()).sum() / S(n);
        dx.row(r) =
            ((dy - m1 - xhat.row(r).array() * m2) * istd(r, 0)).matrix();
      }
      t.add_grad(x, dx);
    };
    return id;
  }

  /// Inverted dropout; identity when not training or rate == 0.
  int dropout(int x, S rate, std::mt19937_64* rng, bool training) {
    if (!training || rate <= S(0)) {
      int id = emit(val(x), x, x);
      nodes_[id].back = [x](Tape& t, int self) { t.add_grad(x, t.grad(self)); };
      return id;
    }
    MatX<S> mask(rows(x), cols(x));
    const S keep = S(1) - rate;
    for (Eigen::Index r = 0; r < mask.rows(); ++r)
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        mask(r, c) = rng_uniform01(*rng) < double(keep) ? S(1) / keep : S(0);
    int id = emit(val(x).cwiseProduct(mask), x, x);
    nodes_[id].back = [x, mask](Tape& t, int self) {
      t.add_grad(x, t.grad(self).cwiseProduct(mask));
    };
    return id;
  }

  int concat_cols(int a, int b) {
    if (rows(a) != rows(b)) throw ValidationError("concat_cols: row mismatch");
    MatX<S> v(rows(a), cols(a) + cols(b));
    v << val(a), val(b);
    const Eigen::Index ca = cols(a), cb = cols(b);
    int id = emit(std::move(v), a, b);
    nodes_[id].back = [a, b, ca, cb](Tape& t, int self) {
      if (t.needs_grad(a)) t.add_grad(a, t.grad(self).leftCols(ca));
      if (t.needs_grad(b)) t.add_grad(b, t.grad(self).rightCols(cb));
    };
    return id;
  }

  int slice_cols(int a, int c0, int n) {
    if (c0 < 0 || c0 + n > cols(a)) throw ValidationError("slice_cols: out of range");
    int id = emit(val(a).middleCols(c0, n), a, a);
    nodes_[id].back = [a, c0, n](Tape& t, int self) {
      if (!t.needs_grad(a)) return;
      MatX<S> g = MatX<S>::Zero(t.rows(a), t.cols(a));
      g.middleCols(c0, n) = t.grad(self);
      t.add_grad(a, g);
    };
    return id;
  }

  int stack_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw ValidationError("stack_rows: empty input");
    Eigen::Index total = 0;
    const Eigen::Index c = cols(parts[0]);
    bool ng = false;
    for (int p : parts) {
      if (cols(p) != c) throw ValidationError("stack_rows: column mismatch");
      total += rows(p);
      ng = ng || nodes_[p].needs_grad;
    }
    MatX<S> v(total, c);
    Eigen::Index r = 0;
    for (int p : parts) {
      v.middleRows(r, rows(p)) = val(p);
      r += rows(p);
    }
    nodes_.push_back(Node{std::move(v), {}, nullptr, ng});
    int id = static_cast<int>(nodes_.size()) - 1;
    nodes_[id].back = [parts](Tape& t, int self) {
      Eigen::Index r2 = 0;
      for (int p : parts) {
        if (t.needs_grad(p)) t.add_grad(p, t.grad(self).middleRows(r2, t.rows(p)));
        r2 += t.rows(p);
      }
    };
    return id;
  }

  int slice_rows(int a, int r0, int n) {
    if (r0 < 0 || r0 + n > rows(a)) throw ValidationError("slice_rows: out of range");
    int id = emit(val(a).middleRows(r0, n), a, a);
    nodes_[id].back = [a, r0, n](Tape& t, int self) {
      if (!t.needs_grad(a)) return;
      MatX<S> g = MatX<S>::Zero(t.rows(a), t.cols(a));
      g.middleRows(r0, n) = t.grad(self);
      t.add_grad(a, g);
    };
    return id;
  }

  /// Row gather: out.row(i) = table.row(ids[i]). The one-hot embedding.
  int embed(const std::vector<int>& ids, int table) {
    MatX<S> v(static_cast<Eigen::Index>(ids.size()), cols(table));
    for (size_t i = 0; i < ids.size(); ++i) v.row(i) = val(table).row(ids[i]);
    int id = emit(std::move(v), table, table);
    nodes_[id].back = [ids, table](Tape& t, int self) {
      if (!t.needs_grad(table)) return;
      MatX<S> g = MatX<S>::Zero(t.rows(table), t.cols(table));
      for (size_t i = 0; i < ids.size(); ++i) g.row(ids[i]) += t.grad(self).row(i);
      t.add_grad(table, g);
    };
    return id;
  }

  /// Per-row column pick: out(i, 0) = x(i, cols[i]).
  int gather_cols(int x, const std::vector<int>& picks) {
    if (static_cast<Eigen::Index>(picks.size()) != rows(x))
      throw ValidationError("gather_cols: one pick per row required");
    MatX<S> v(rows(x), 1);
    for (size_t i = 0; i < picks.size(); ++i) v(i, 0) = val(x)(i, picks[i]);
    int id = emit(std::move(v), x, x);
    nodes_[id].back = [x, picks](Tape& t, int self) {
      if (!t.needs_grad(x)) return;
      MatX<S> g = MatX<S>::Zero(t.rows(x), t.cols(x));
      for (size_t i = 0; i < picks.size(); ++i) g(i, picks[i]) = t.grad(self)(i, 0);
      t.add_grad(x, g);
    };
    return id;
  }

  int mean_all(int x) {
    MatX<S> v(1, 1);
    v(0, 0) = val(x).mean();
    const S inv = S(1) / S(val(x).size());
    int id = emit(std::move(v), x, x);
    nodes_[id].back = [x, inv](Tape& t, int self) {
      t.add_grad(x, MatX<S>::Constant(t.rows(x), t.cols(x), t.grad(self)(0, 0) * inv));
    };
    return id;
  }

  int sum_all(int x) {
    MatX<S> v(1, 1);
    v(0, 0) = val(x).sum();
    int id = emit(std::move(v), x, x);
    nodes_[id].back = [x](Tape& t, int self) {
      t.add_grad(x, MatX<S>::Constant(t.rows(x), t.cols(x), t.grad(self)(0, 0)));
    };
    return id;
  }

  /// Causal multi-head self-attention over a time-major batch. `qkv` is
  /// (T*B) x 3D; returns (T*B) x D. Attention weights on future positions are
  /// exactly zero, so no gradient ever crosses the causal mask.
  int causal_attention(int qkv, int heads, int T, int B, S drop_rate,
                       std::mt19937_64* rng, bool training) {
    const Eigen::Index D3 = cols(qkv);
    if (D3 % 3 != 0) throw ValidationError("causal_attention: qkv width not 3*D");
    const Eigen::Index D = D3 / 3;
    if (D % heads != 0) throw ValidationError("causal_attention: heads must divide D");
    const Eigen::Index dh = D / heads;
    if (rows(qkv) != Eigen::Index(T) * B)
      throw ValidationError("causal_attention: rows != T*B");
    const S scl = S(1) / std::sqrt(S(dh));

    const MatX<S>& in = val(qkv);
    MatX<S> out = MatX<S>::Zero(Eigen::Index(T) * B, D);
    // probs[b*heads + h] is T x T, strictly lower-triangular-plus-diagonal;
    // effective[.] additionally carries the inverted-dropout multiplier.
    auto probs = std::make_shared<std::vector<MatX<S>>>(size_t(B) * heads);
    auto eff = std::make_shared<std::vector<MatX<S>>>(size_t(B) * heads);
    MatX<S> Q(T, dh), K(T, dh), V(T, dh);
    for (int b = 0; b < B; ++b)
      for (int h = 0; h < heads; ++h) {
        for (int t = 0; t < T; ++t) {
          Q.row(t) = in.block(Eigen::Index(t) * B + b, h * dh, 1, dh);
          K.row(t) = in.block(Eigen::Index(t) * B + b, D + h * dh, 1, dh);
          V.row(t) = in.block(Eigen::Index(t) * B + b, 2 * D + h * dh, 1, dh);
        }
        MatX<S> P = MatX<S>::Zero(T, T);
        for (int t = 0; t < T; ++t) {
          Eigen::Index n = t + 1;
          Eigen::Matrix<S, 1, Eigen::Dynamic> s =
              (Q.row(t) * K.topRows(n).transpose()) * scl;
          S m = s.maxCoeff();
          s = (s.array() - m).exp();
          P.row(t).head(n) = s / s.sum();
        }
        MatX<S> E = P;
        if (training && drop_rate > S(0)) {
          const S keep = S(1) - drop_rate;
          for (Eigen::Index r = 0; r < E.rows(); ++r)
            for (Eigen::Index c = 0; c <= r; ++c)
              E(r, c) *= rng_uniform01(*rng) < double(keep) ? S(1) / keep : S(0);
        }
        MatX<S> O = E * V;
        for (int t = 0; t < T; ++t)
          out.block(Eigen::Index(t) * B + b, h * dh, 1, dh) = O.row(t);
        (*probs)[size_t(b) * heads + h] = P;
        (*eff)[size_t(b) * heads + h] = std::move(E);
      }

    int id = emit(std::move(out), qkv, qkv);
    nodes_[id].back = [qkv, heads, T, B, dh, D, scl, probs, eff](Tape& t, int self) {
      if (!t.needs_grad(qkv)) return;
      const MatX<S>& in2 = t.val(qkv);
      const MatX<S>& gout = t.grad(self);
      MatX<S> gin = MatX<S>::Zero(in2.rows(), in2.cols());
      MatX<S> Q(T, dh), K(T, dh), V(T, dh), GO(T, dh);
      for (int b = 0; b < B; ++b)
        for (int h = 0; h < heads; ++h) {
          for (int tt = 0; tt < T; ++tt) {
            Q.row(tt) = in2.block(Eigen::Index(tt) * B + b, h * dh, 1, dh);
            K.row(tt) = in2.block(Eigen::Index(tt) * B + b, D + h * dh, 1, dh);
            V.row(tt) = in2.block(Eigen::Index(tt) * B + b, 2 * D + h * dh, 1, dh);
            GO.row(tt) = gout.block(Eigen::Index(tt) * B + b, h * dh, 1, dh);
          }
          const MatX<S>& P = (*probs)[size_t(b) * heads + h];
          const MatX<S>& E = (*eff)[size_t(b) * heads + h];
          MatX<S> gV = E.transpose() * GO;
          MatX<S> gE = GO * V.transpose();
          // Undo dropout onto P's slots, then the softmax Jacobian per row.
          MatX<S> gP(T, T);
          for (Eigen::Index r = 0; r < gP.rows(); ++r)
            for (Eigen::Index c = 0; c < gP.cols(); ++c)
              gP(r, c) = (c <= r && P(r, c) != S(0))
                             ? gE(r, c) * (E(r, c) / P(r, c))
                             : S(0);
          MatX<S> gS = MatX<S>::Zero(T, T);
          for (int r = 0; r < T; ++r) {
            S dot = P.row(r).head(r + 1).dot(gP.row(r).head(r + 1));
            gS.row(r).head(r + 1) =
                (P.row(r).head(r + 1).array() * (gP.row(r).head(r + 1).array() - dot))
                    .matrix();
          }
          MatX<S> gQ = (gS * K) * scl;
          MatX<S> gK = (gS.transpose() * Q) * scl;
          for (int tt = 0; tt < T; ++tt) {
            gin.block(Eigen::Index(tt) * B + b, h * dh, 1, dh) += gQ.row(tt);
            gin.block(Eigen::Index(tt) * B + b, D + h * dh, 1, dh) += gK.row(tt);
            gin.block(Eigen::Index(tt) * B + b, 2 * D + h * dh, 1, dh) += gV.row(tt);
          }
        }
      t.add_grad(qkv, gin);
    };
    return id;
  }

 private:
  int emit(MatX<S> v, int a, int b) {
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    nodes_.push_back(Node{std::move(v), {}, nullptr, ng});
    return static_cast<int>(nodes_.size()) - 1;
  }
  void check_inner(int a, int b) const {
    if (nodes_[a].val.cols() != nodes_[b].val.rows())
      throw ValidationError("matmul: inner dimensions " +
                            std::to_string(nodes_[a].val.cols()) + " vs " +
                            std::to_string(nodes_[b].val.rows()));
  }
  void check_same(int a, int b) const {
    if (nodes_[a].val.rows() != nodes_[b].val.rows() ||
        nodes_[a].val.cols() != nodes_[b].val.cols())
      throw ValidationError("elementwise op: shape mismatch " +
                            std::to_string(nodes_[a].val.rows()) + "x" +
                            std::to_string(nodes_[a].val.cols()) + " vs " +
                            std::to_string(nodes_[b].val.rows()) + "x" +
                            std::to_string(nodes_[b].val.cols()));
  }

  std::vector<Node> nodes_;
};

/// Sinusoidal position table, rows = positions, cols = even dimension d.
template <typename S>
MatX<S> sinusoid_table(int positions, int d) {
  MatX<S> p(positions, d);
  for (int t = 0; t < positions; ++t)
    for (int i = 0; i < d / 2; ++i) {
      double f = double(t) / std::pow(10000.0, 2.0 * i / d);
      p(t, 2 * i) = S(std::sin(f));
      p(t, 2 * i + 1) = S(std::cos(f));
    }
  return p;
}

}  // namespace memlen::nn
