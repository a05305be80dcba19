#pragma once

#include <random>
#include <string>
#include <vector>

#include "memlen/tensor.hpp"

namespace memlen::nn {

struct EncoderConfig {
  std::string kind = "transformer";  // "lstm" | "transformer" | "tabular"
  int hidden = 128;
  int layers = 1;
  int heads = 1;
  double dropout = 0.1;
  int obs_embed = 64;
  int act_embed = 64;
  int context = 0;  // 0 = episode length

  void validate() const;
};

EncoderConfig lstm_config();
EncoderConfig transformer_config();

enum class Init { kFanIn, kZero, kOne, kForgetBias };

template <typename S>
struct ParamStore {
  struct Entry {
    std::string name;
    MatX<S> value, m, v;  // value + Adam moments
  };
  std::vector<Entry> items;

  int add(const std::string& name, int r, int c, Init init, std::mt19937_64& rng) {
    MatX<S> w(r, c);
    switch (init) {
      case Init::kZero:
        w.setZero();
        break;
      case Init::kOne:
        w.setOnes();
        break;
      case Init::kFanIn: {
        const double bound = 1.0 / std::sqrt(double(r));
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            w(i, j) = S((2.0 * rng_uniform01(rng) - 1.0) * bound);
        break;
      }
      case Init::kForgetBias: {
        // LSTM bias layout (i, f, g, o): forget gate biased to +1.
        w.setZero();
        const int h = c / 4;
        for (int j = h; j < 2 * h; ++j) w(0, j) = S(1);
        break;
      }
    }
    items.push_back(Entry{name, std::move(w), MatX<S>::Zero(r, c), MatX<S>::Zero(r, c)});
    return static_cast<int>(items.size()) - 1;
  }

  std::int64_t num_scalars() const {
    std::int64_t n = 0;
    for (const auto& e : items) n += e.value.size();
    return n;
  }
};

template <typename S>
struct Adam {
  double lr = 3e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t step = 0;

  void update(ParamStore<S>& store, const std::vector<MatX<S>>& grads) {
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, double(step));
    const double bc2 = 1.0 - std::pow(beta2, double(step));
    for (size_t i = 0; i < store.items.size(); ++i) {
      auto& e = store.items[i];
      if (grads[i].size() == 0) continue;
      e.m = S(beta1) * e.m + S(1 - beta1) * grads[i];
      e.v = (S(beta2) * e.v.array() + S(1 - beta2) * grads[i].array().square()).matrix();
      auto mhat = e.m.array() / S(bc1);
      auto vhat = e.v.array() / S(bc2);
      e.value.array() -= S(lr) * mhat / (vhat.sqrt() + S(eps));
    }
  }
};

/// Time-major batch of encoder inputs. `obs` row t*B+b is the flattened
/// one-hot observation at step t+1 of episode b; `prev_actions[t*B+b]` is the
/// action taken at step t (the "no previous action" id num_actions at t=0).
template <typename S>
struct BatchInput {
  int T = 0, B = 0;
  MatX<S> obs;
  std::vector<int> prev_actions;
};

template <typename S>
struct ForwardResult {
  int q = -1;                  // tape id of (T*B) x A Q-values
  std::vector<int> leaf_ids;   // tape leaf per ParamStore entry
};

/// Sequence Q-network: linear+ReLU embeddings of observation and previous
/// action, an LSTM or causal-transformer encoder, and a (256, 256) MLP head.
template <typename S>
class QNetwork {
 public:
  QNetwork(EncoderConfig cfg, int obs_dim, int num_actions, std::uint64_t seed,
           int head1 = 256, int head2 = 256)
      : cfg_(std::move(cfg)), obs_dim_(obs_dim), num_actions_(num_actions) {
    cfg_.validate();
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    auto& p = params_;
    const int H = cfg_.hidden;
    p.add("obs_embed.w", obs_dim_, cfg_.obs_embed, Init::kFanIn, rng);
    p.add("obs_embed.b", 1, cfg_.obs_embed, Init::kZero, rng);
    p.add("act_embed.w", num_actions_ + 1, cfg_.act_embed, Init::kFanIn, rng);
    p.add("act_embed.b", 1, cfg_.act_embed, Init::kZero, rng);
    const int in = cfg_.obs_embed + cfg_.act_embed;
    if (cfg_.kind == "lstm") {
      p.add("lstm.wx", in, 4 * H, Init::kFanIn, rng);
      p.add("lstm.wh", H, 4 * H, Init::kFanIn, rng);
      p.add("lstm.b", 1, 4 * H, Init::kForgetBias, rng);
    } else {
      if (in != H)
        throw ValidationError("transformer: obs_embed + act_embed must equal hidden");
      for (int l = 0; l < cfg_.layers; ++l) {
        const std::string pre = "block" + std::to_string(l) + ".";
        p.add(pre + "ln1.g", 1, H, Init::kOne, rng);
        p.add(pre + "ln1.b", 1, H, Init::kZero, rng);
        p.add(pre + "attn.wqkv", H, 3 * H, Init::kFanIn, rng);
        p.add(pre + "attn.bqkv", 1, 3 * H, Init::kZero, rng);
        p.add(pre + "attn.wo", H, H, Init::kFanIn, rng);
        p.add(pre + "attn.bo", 1, H, Init::kZero, rng);
        p.add(pre + "ln2.g", 1, H, Init::kOne, rng);
        p.add(pre + "ln2.b", 1, H, Init::kZero, rng);
        p.add(pre + "mlp.w1", H, 4 * H, Init::kFanIn, rng);
        p.add(pre + "mlp.b1", 1, 4 * H, Init::kZero, rng);
        p.add(pre + "mlp.w2", 4 * H, H, Init::kFanIn, rng);
        p.add(pre + "mlp.b2", 1, H, Init::kZero, rng);
      }
      p.add("lnf.g", 1, H, Init::kOne, rng);
      p.add("lnf.b", 1, H, Init::kZero, rng);
    }
    p.add("head.w1", H, head1, Init::kFanIn, rng);
    p.add("head.b1", 1, head1, Init::kZero, rng);
    p.add("head.w2", head1, head2, Init::kFanIn, rng);
    p.add("head.b2", 1, head2, Init::kZero, rng);
    p.add("head.w3", head2, num_actions_, Init::kFanIn, rng);
    p.add("head.b3", 1, num_actions_, Init::kZero, rng);
  }

  const EncoderConfig& config() const { return cfg_; }
  int obs_dim() const { return obs_dim_; }
  int num_actions() const { return num_actions_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }

  ForwardResult<S> forward(Tape<S>& tape, const BatchInput<S>& in, bool training,
                           std::mt19937_64* rng) const {
    if (in.obs.cols() != obs_dim_) throw ValidationError("forward: obs width mismatch");
    if (in.obs.rows() != Eigen::Index(in.T) * in.B ||
        in.prev_actions.size() != size_t(in.T) * in.B)
      throw ValidationError("forward: batch shape mismatch");
    ForwardResult<S> out;
    auto& ids = out.leaf_ids;
    ids.reserve(params_.items.size());
    for (const auto& e : params_.items) ids.push_back(tape.leaf(e.value));
    auto P = [&](const std::string& name) { return ids[index_of(name)]; };
    const S rate = S(cfg_.dropout);

    int xo = tape.constant(in.obs);
    int ho = tape.relu(tape.add_rowvec(tape.matmul(xo, P("obs_embed.w")), P("obs_embed.b")));
    int ha = tape.relu(
        tape.add_rowvec(tape.embed(in.prev_actions, P("act_embed.w")), P("act_embed.b")));
    int x = tape.concat_cols(ho, ha);
    x = tape.dropout(x, rate, rng, training);

    if (cfg_.kind == "lstm") {
      const int H = cfg_.hidden;
      int h = tape.constant(MatX<S>::Zero(in.B, H));
      int c = tape.constant(MatX<S>::Zero(in.B, H));
      std::vector<int> hs(in.T);
      for (int t = 0; t < in.T; ++t) {
        int xt = tape.slice_rows(x, t * in.B, in.B);
        int g = tape.add_rowvec(
            tape.add(tape.matmul(xt, P("lstm.wx")), tape.matmul(h, P("lstm.wh"))),
            P("lstm.b"));
        int gi = tape.sigmoid_(tape.slice_cols(g, 0, H));
        int gf = tape.sigmoid_(tape.slice_cols(g, H, H));
        int gg = tape.tanh_(tape.slice_cols(g, 2 * H, H));
        int go = tape.sigmoid_(tape.slice_cols(g, 3 * H, H));
        c = tape.add(tape.mul(gf, c), tape.mul(gi, gg));
        h = tape.mul(go, tape.tanh_(c));
        hs[t] = h;
      }
      x = tape.stack_rows(hs);
    } else {
      MatX<S> pos(Eigen::Index(in.T) * in.B, cfg_.hidden);
      MatX<S> table = sinusoid_table<S>(in.T, cfg_.hidden);
      for (int t = 0; t < in.T; ++t)
        for (int b = 0; b < in.B; ++b) pos.row(Eigen::Index(t) * in.B + b) = table.row(t);
      x = tape.add(x, tape.constant(std::move(pos)));
      for (int l = 0; l < cfg_.layers; ++l) {
        const std::string pre = "block" + std::to_string(l) + ".";
        int n1 = tape.layer_norm(x, P(pre + "ln1.g"), P(pre + "ln1.b"));
        int qkv = tape.add_rowvec(tape.matmul(n1, P(pre + "attn.wqkv")), P(pre + "attn.bqkv"));
        int att = tape.causal_attention(qkv, cfg_.heads, in.T, in.B, rate, rng, training);
        int proj = tape.add_rowvec(tape.matmul(att, P(pre + "attn.wo")), P(pre + "attn.bo"));
        x = tape.add(x, tape.dropout(proj, rate, rng, training));
        int n2 = tape.layer_norm(x, P(pre + "ln2.g"), P(pre + "ln2.b"));
        int m1 = tape.relu(tape.add_rowvec(tape.matmul(n2, P(pre + "mlp.w1")), P(pre + "mlp.b1")));
        int m2 = tape.add_rowvec(tape.matmul(m1, P(pre + "mlp.w2")), P(pre + "mlp.b2"));
        x = tape.add(x, tape.dropout(m2, rate, rng, training));
      }
      x = tape.layer_norm(x, P("lnf.g"), P("lnf.b"));
    }

    int h1 = tape.relu(tape.add_rowvec(tape.matmul(x, P("head.w1")), P("head.b1")));
    int h2 = tape.relu(tape.add_rowvec(tape.matmul(h1, P("head.w2")), P("head.b2")));
    out.q = tape.add_rowvec(tape.matmul(h2, P("head.w3")), P("head.b3"));
    return out;
  }

  int index_of(const std::string& name) const {
    for (size_t i = 0; i < params_.items.size(); ++i)
      if (params_.items[i].name == name) return static_cast<int>(i);
    throw ValidationError("unknown parameter " + name);
  }

 private:
  EncoderConfig cfg_;
  int obs_dim_;
  int num_actions_;
  ParamStore<S> params_;
};

template <typename S>
void copy_params(const ParamStore<S>& from, ParamStore<S>& to) {
  for (size_t i = 0; i < from.items.size(); ++i) to.items[i].value = from.items[i].value;
}

template <typename S>
void soft_update(const ParamStore<S>& online, ParamStore<S>& target, double tau) {
  for (size_t i = 0; i < online.items.size(); ++i)
    target.items[i].value =
        S(1 - tau) * target.items[i].value + S(tau) * online.items[i].value;
}

struct GradCheckEntry {
  std::string name;
  double max_abs_err = 0;
  double max_rel_err = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> layers;
  double causality_err = 0;  // max |dQ_t| under future-token perturbation
  bool passed(double tol = 1e-4) const {
    for (const auto& e : layers)
      if (!(e.max_rel_err < tol)) return false;
    return causality_err < 1e-12;
  }
};

/// Finite-difference checks (double precision, dropout off) for a bare linear
/// stack, a 10-step LSTM, and a 1-layer transformer block, plus the causal
/// mask perturbation test.
GradCheckReport grad_check(std::uint64_t seed = 0);

}  // namespace memlen::nn
