#include "memlen/nn.hpp"

#include <algorithm>
#include <cmath>

namespace memlen::nn {

void EncoderConfig::validate() const {
  if (kind != "lstm" && kind != "transformer" && kind != "tabular")
    throw ValidationError("encoder kind must be lstm, transformer, or tabular");
  if (hidden <= 0 || layers <= 0 || heads <= 0)
    throw ValidationError("encoder sizes must be positive");
  if (kind == "transformer" && hidden % heads != 0)
    throw ValidationError("heads must divide hidden size");
  if (dropout < 0 || dropout >= 1) throw ValidationError("dropout must be in [0,1)");
  if (obs_embed <= 0 || act_embed <= 0)
    throw ValidationError("embedding sizes must be positive");
  if (context < 0) throw ValidationError("context length must be nonnegative");
}

EncoderConfig lstm_config() {
  EncoderConfig c;
  c.kind = "lstm";
  c.obs_embed = 32;
  c.act_embed = 16;
  return c;
}

EncoderConfig transformer_config() {
  EncoderConfig c;
  c.kind = "transformer";
  c.obs_embed = 64;
  c.act_embed = 64;
  return c;
}

namespace {

using Mat = MatX<double>;

BatchInput<double> random_batch(int T, int B, int obs_dim, int num_actions,
                                std::mt19937_64& rng) {
  BatchInput<double> in;
  in.T = T;
  in.B = B;
  in.obs = Mat::Zero(Eigen::Index(T) * B, obs_dim);
  in.prev_actions.resize(size_t(T) * B);
  for (Eigen::Index r = 0; r < in.obs.rows(); ++r) {
    in.obs(r, Eigen::Index(rng() % obs_dim)) = 1.0;
    in.prev_actions[r] = int(rng() % (num_actions + 1));
  }
  return in;
}

double net_loss(const QNetwork<double>& net, const BatchInput<double>& in,
                const Mat& coeff, Tape<double>* out_tape = nullptr,
                ForwardResult<double>* out_fwd = nullptr) {
  Tape<double> local;
  Tape<double>& tape = out_tape ? *out_tape : local;
  auto fwd = net.forward(tape, in, /*training=*/false, nullptr);
  int loss = tape.sum_all(tape.mul(fwd.q, tape.constant(coeff)));
  if (out_tape) {
    tape.backward(loss);
    *out_fwd = fwd;
  }
  return tape.val(loss)(0, 0);
}

// Compares analytic gradients against central finite differences over a
// deterministic subsample of coordinates; one report entry per parameter.
void check_net(const std::string& prefix, QNetwork<double>& net,
               const BatchInput<double>& in, std::mt19937_64& rng,
               GradCheckReport& report) {
  Mat coeff(in.obs.rows(), net.num_actions());
  for (Eigen::Index r = 0; r < coeff.rows(); ++r)
    for (Eigen::Index c = 0; c < coeff.cols(); ++c)
      coeff(r, c) = 2.0 * rng_uniform01(rng) - 1.0;

  Tape<double> tape;
  ForwardResult<double> fwd;
  net_loss(net, in, coeff, &tape, &fwd);

  const double h = 1e-5;
  auto& items = net.params().items;
  for (size_t p = 0; p < items.size(); ++p) {
    GradCheckEntry entry;
    entry.name = prefix + "/" + items[p].name;
    const Mat& g = tape.grad(fwd.leaf_ids[p]);
    const Eigen::Index n = items[p].value.size();
    const Eigen::Index budget = std::min<Eigen::Index>(n, 64);
    for (Eigen::Index k = 0; k < budget; ++k) {
      Eigen::Index idx = (n <= 64) ? k : Eigen::Index(rng() % std::uint64_t(n));
      double* slot = items[p].value.data() + idx;
      const double saved = *slot;
      *slot = saved + h;
      double up = net_loss(net, in, coeff);
      *slot = saved - h;
      double dn = net_loss(net, in, coeff);
      *slot = saved;
      double numeric = (up - dn) / (2 * h);
      double analytic = g.size() ? *(g.data() + idx) : 0.0;
      double abs_err = std::abs(analytic - numeric);
      double rel = abs_err / std::max(1e-6, std::abs(analytic) + std::abs(numeric));
      entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.layers.push_back(entry);
  }
}

// Perturbs the last-step tokens and measures the largest change in Q at any
// earlier step (dropout off). Exactly zero for a correct causal mask.
double causality_probe(const QNetwork<double>& net, BatchInput<double> in,
                       std::mt19937_64& rng) {
  Tape<double> t1;
  auto f1 = net.forward(t1, in, false, nullptr);
  Mat q1 = t1.val(f1.q);
  const int last = in.T - 1;
  for (int b = 0; b < in.B; ++b) {
    Eigen::Index r = Eigen::Index(last) * in.B + b;
    for (Eigen::Index c = 0; c < in.obs.cols(); ++c)
      in.obs(r, c) += 2.0 * rng_uniform01(rng) - 1.0;
    in.prev_actions[size_t(r)] = (in.prev_actions[size_t(r)] + 1) % (net.num_actions() + 1);
  }
  Tape<double> t2;
  auto f2 = net.forward(t2, in, false, nullptr);
  Mat q2 = t2.val(f2.q);
  double worst = 0;
  for (int t = 0; t < last; ++t)
    for (int b = 0; b < in.B; ++b) {
      Eigen::Index r = Eigen::Index(t) * in.B + b;
      worst = std::max(worst, (q1.row(r) - q2.row(r)).cwiseAbs().maxCoeff());
    }
  return worst;
}

}  // namespace

GradCheckReport grad_check(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x2545f4914f6cdd1dull + 0x853c49e6748fea9bull);
  GradCheckReport report;

  {
    // Bare linear stack: y = relu(x W1 + b1) W2 + b2.
    std::mt19937_64 init(rng());
    Tape<double> tape;
    Mat x(6, 5), c(6, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) *(x.data() + i) = 2 * rng_uniform01(rng) - 1;
    for (Eigen::Index i = 0; i < c.size(); ++i) *(c.data() + i) = 2 * rng_uniform01(rng) - 1;
    ParamStore<double> store;
    store.add("w1", 5, 8, Init::kFanIn, init);
    store.add("b1", 1, 8, Init::kZero, init);
    store.add("w2", 8, 3, Init::kFanIn, init);
    store.add("b2", 1, 3, Init::kZero, init);
    auto loss_of = [&](Tape<double>& t, std::vector<int>* leaves) {
      std::vector<int> ids;
      for (auto& e : store.items) ids.push_back(t.leaf(e.value));
      int y = t.add_rowvec(t.matmul(t.relu(t.add_rowvec(t.matmul(t.constant(x), ids[0]), ids[1])), ids[2]), ids[3]);
      if (leaves) *leaves = ids;
      return t.sum_all(t.mul(y, t.constant(c)));
    };
    Tape<double> at;
    std::vector<int> leaves;
    int loss = loss_of(at, &leaves);
    at.backward(loss);
    const double h = 1e-5;
    for (size_t p = 0; p < store.items.size(); ++p) {
      GradCheckEntry entry;
      entry.name = "linear/" + store.items[p].name;
      for (Eigen::Index idx = 0; idx < store.items[p].value.size(); ++idx) {
        double* slot = store.items[p].value.data() + idx;
        double saved = *slot;
        Tape<double> tu, td;
        *slot = saved + h;
        double up = tu.val(loss_of(tu, nullptr))(0, 0);
        *slot = saved - h;
        double dn = td.val(loss_of(td, nullptr))(0, 0);
        *slot = saved;
        double numeric = (up - dn) / (2 * h);
        double analytic = *(at.grad(leaves[p]).data() + idx);
        double abs_err = std::abs(analytic - numeric);
        entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
        entry.max_rel_err = std::max(
            entry.max_rel_err, abs_err / std::max(1e-6, std::abs(analytic) + std::abs(numeric)));
      }
      report.layers.push_back(entry);
    }
  }

  {
    // 10-step LSTM unroll, hidden 10.
    EncoderConfig cfg = lstm_config();
    cfg.hidden = 10;
    cfg.obs_embed = 6;
    cfg.act_embed = 4;
    cfg.dropout = 0.0;
    QNetwork<double> net(cfg, 5, 3, rng(), 12, 12);
    auto in = random_batch(10, 2, 5, 3, rng);
    check_net("lstm", net, in, rng, report);
    report.causality_err = std::max(report.causality_err, causality_probe(net, in, rng));
  }

  {
    // 1-layer transformer block, hidden 16, 2 heads, T = 8.
    EncoderConfig cfg = transformer_config();
    cfg.hidden = 16;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.obs_embed = 8;
    cfg.act_embed = 8;
    cfg.dropout = 0.0;
    QNetwork<double> net(cfg, 5, 3, rng(), 12, 12);
    auto in = random_batch(8, 2, 5, 3, rng);
    check_net("transformer", net, in, rng, report);
    report.causality_err = std::max(report.causality_err, causality_probe(net, in, rng));
  }

  return report;
}

}  // namespace memlen::nn
