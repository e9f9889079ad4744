#include <cstdio>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "vobs/errors.hpp"
#include "vobs/neural/adam.hpp"
#include "vobs/neural/gradcheck.hpp"
#include "vobs/neural/network.hpp"
#include "vobs/neural/weights_io.hpp"
#include "vobs/training.hpp"

using namespace vobs;
using namespace vobs::neural;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straight-line cell transcriptions; rows of each weight matrix are grouped
// per gate in storage order.
void lstm_oracle(const std::vector<double>& x, std::vector<double>& h, std::vector<double>& c,
                 const LstmLayerWeights& w) {
  const std::size_t H = h.size(), I = x.size();
  std::vector<double> hn(H), cn(H);
  for (std::size_t j = 0; j < H; ++j) {
    double a[4];
    for (std::size_t gi = 0; gi < 4; ++gi) {
      const Index row = static_cast<Index>(gi * H + j);
      double s = w.biases(row);
      for (std::size_t k = 0; k < I; ++k) s += w.input_weights(row, static_cast<Index>(k)) * x[k];
      for (std::size_t k = 0; k < H; ++k) s += w.recurrent_weights(row, static_cast<Index>(k)) * h[k];
      a[gi] = s;
    }
    const double i = sig(a[0]), f = sig(a[1]), g = std::tanh(a[2]), o = sig(a[3]);
    cn[j] = f * c[j] + i * g;
    hn[j] = o * std::tanh(cn[j]);
  }
  h = hn;
  c = cn;
}

void gru_oracle(const std::vector<double>& x, std::vector<double>& h, const GruLayerWeights& w) {
  const std::size_t H = h.size(), I = x.size();
  auto pre = [&](std::size_t gi, std::size_t j, const std::vector<double>& hv) {
    const Index row = static_cast<Index>(gi * H + j);
    double s = w.biases(row);
    for (std::size_t k = 0; k < I; ++k) s += w.input_weights(row, static_cast<Index>(k)) * x[k];
    for (std::size_t k = 0; k < H; ++k) s += w.recurrent_weights(row, static_cast<Index>(k)) * hv[k];
    return s;
  };
  std::vector<double> z(H), r(H), rh(H), hn(H);
  for (std::size_t j = 0; j < H; ++j) {
    z[j] = sig(pre(0, j, h));
    r[j] = sig(pre(1, j, h));
  }
  for (std::size_t j = 0; j < H; ++j) rh[j] = r[j] * h[j];
  for (std::size_t j = 0; j < H; ++j) {
    const double n = std::tanh(pre(2, j, rh));
    hn[j] = (1.0 - z[j]) * n + z[j] * h[j];
  }
  h = hn;
}

template <typename L>
L random_layer(Index in, Index hid, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  L w = L::zeros(in, hid);
  for (auto* m : {&w.input_weights, &w.recurrent_weights})
    for (Index i = 0; i < m->size(); ++i) m->data()[i] = u(rng);
  for (Index i = 0; i < w.biases.size(); ++i) w.biases(i) = u(rng);
  return w;
}

std::vector<double> rand_vec(std::size_t n, std::mt19937_64& rng, double s = 2.0) {
  std::uniform_real_distribution<double> u(-s, s);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

VectorXd to_eigen(const std::vector<double>& v) { return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size())); }

// Whole observer network in plain loops from the cell oracle.
template <typename Layer>
std::vector<double> network_oracle(const RecurrentNetwork<Layer>& net, const MatrixXd& window,
                                   const std::vector<double>& fb) {
  std::vector<std::vector<double>> seq(static_cast<std::size_t>(window.rows()));
  for (Index t = 0; t < window.rows(); ++t)
    for (Index c = 0; c < window.cols(); ++c) seq[static_cast<std::size_t>(t)].push_back(window(t, c));
  for (const auto& layer : net.recurrent_stack) {
    std::vector<double> h(static_cast<std::size_t>(layer.hidden()), 0.0), c = h;
    for (auto& x : seq) {
      if constexpr (std::is_same_v<Layer, LstmLayerWeights>) lstm_oracle(x, h, c, layer);
      else gru_oracle(x, h, layer);
      x = h;
    }
  }
  std::vector<double> a = seq.back();
  a.insert(a.end(), fb.begin(), fb.end());
  for (const auto& d : net.dense_stack) {
    std::vector<double> o(static_cast<std::size_t>(d.out_dim()));
    for (Index r = 0; r < d.out_dim(); ++r) {
      double s = d.bias(r);
      for (Index k = 0; k < d.in_dim(); ++k) s += d.weight(r, k) * a[static_cast<std::size_t>(k)];
      o[static_cast<std::size_t>(r)] = d.activation == Activation::sigmoid ? sig(s) : s;
    }
    a = o;
  }
  return a;
}

SequenceBatch random_batch(const NetworkWeights& net, Index steps, Index batch, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SequenceBatch b;
  b.steps = steps;
  b.size = batch;
  b.inputs = MatrixXd::NullaryExpr(net.input_dim, steps * batch, [&] { return u(rng); });
  b.feedback = MatrixXd::NullaryExpr(net.feedback_dim, batch, [&] { return u(rng); });
  b.targets = MatrixXd::NullaryExpr(net.output_dim(), batch, [&] { return 0.2 + 0.6 * u(rng); });
  return b;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("vobs_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(LstmCell, ZeroWeights) {
  const auto w = LstmLayerWeights::zeros(2, 1);
  const VectorXd x = VectorXd::Zero(2), h0 = VectorXd::Zero(1);
  auto s = lstm_cell_forward(x, h0, VectorXd::Zero(1), w);
  EXPECT_EQ(s.h(0), 0.0);
  EXPECT_EQ(s.c(0), 0.0);
  s = lstm_cell_forward(x, h0, VectorXd::Ones(1), w);
  EXPECT_DOUBLE_EQ(s.c(0), 0.5);
  EXPECT_NEAR(s.h(0), 0.5 * std::tanh(0.5), 1e-15);
  EXPECT_NEAR(s.h(0), 0.23105, 1e-5);
}

TEST(LstmCell, MatchesTranscription) {
  std::mt19937_64 rng(42);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const Index in = 1 + static_cast<Index>(rng() % 6), hid = 1 + static_cast<Index>(rng() % 7);
    const auto w = random_layer<LstmLayerWeights>(in, hid, rng, 1.5);
    const auto x = rand_vec(static_cast<std::size_t>(in), rng);
    auto h = rand_vec(static_cast<std::size_t>(hid), rng, 1.0), c = rand_vec(static_cast<std::size_t>(hid), rng, 3.0);
    const auto s = lstm_cell_forward(to_eigen(x), to_eigen(h), to_eigen(c), w);
    lstm_oracle(x, h, c, w);
    for (std::size_t j = 0; j < h.size(); ++j) {
      worst = std::max({worst, std::abs(s.h(static_cast<Index>(j)) - h[j]), std::abs(s.c(static_cast<Index>(j)) - c[j])});
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(GruCell, ZeroWeightsZeroInput) {
  const auto w = GruLayerWeights::zeros(3, 4);
  const VectorXd h = gru_cell_forward(VectorXd::Zero(3), VectorXd::Zero(4), w);
  EXPECT_EQ(h.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GruCell, MatchesTranscription) {
  std::mt19937_64 rng(43);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const Index in = 1 + static_cast<Index>(rng() % 6), hid = 1 + static_cast<Index>(rng() % 7);
    const auto w = random_layer<GruLayerWeights>(in, hid, rng, 1.5);
    const auto x = rand_vec(static_cast<std::size_t>(in), rng);
    auto h = rand_vec(static_cast<std::size_t>(hid), rng, 1.0);
    const VectorXd out = gru_cell_forward(to_eigen(x), to_eigen(h), w);
    gru_oracle(x, h, w);
    for (std::size_t j = 0; j < h.size(); ++j) worst = std::max(worst, std::abs(out(static_cast<Index>(j)) - h[j]));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Network, DefaultArchitecture) {
  const auto net = NetworkWeights::initialize(Architecture::observer(), 1);
  ASSERT_EQ(net.recurrent_stack.size(), 4u);
  const Index hidden[] = {32, 64, 64, 128};
  for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(net.recurrent_stack[l].hidden(), hidden[l]);
  ASSERT_EQ(net.dense_stack.size(), 4u);
  EXPECT_EQ(net.dense_stack[0].in_dim(), 131);
  const Index dense[] = {64, 128, 64, 3};
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(net.dense_stack[l].out_dim(), dense[l]);
    EXPECT_EQ(net.dense_stack[l].activation, Activation::sigmoid);
  }
  const auto gru = GruWeights::initialize(Architecture::end_to_end(), 1);
  EXPECT_EQ(gru.dense_stack[0].in_dim(), 128);
}

TEST(Network, InitializationRecipe) {
  const auto net = NetworkWeights::initialize(Architecture::observer(), 7);
  for (const auto& l : net.recurrent_stack) {
    const double bi = 1.0 / std::sqrt(static_cast<double>(l.input_dim()));
    const double br = 1.0 / std::sqrt(static_cast<double>(l.hidden()));
    EXPECT_LE(l.input_weights.cwiseAbs().maxCoeff(), bi);
    EXPECT_LE(l.recurrent_weights.cwiseAbs().maxCoeff(), br);
    const Index H = l.hidden();
    EXPECT_EQ(l.biases.segment(H, H).minCoeff(), 1.0);
    EXPECT_EQ(l.biases.segment(H, H).maxCoeff(), 1.0);
    EXPECT_EQ(l.biases.head(H).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(l.biases.tail(2 * H).cwiseAbs().maxCoeff(), 0.0);
  }
  for (const auto& d : net.dense_stack) {
    EXPECT_LE(d.weight.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(static_cast<double>(d.in_dim())));
    EXPECT_EQ(d.bias.cwiseAbs().maxCoeff(), 0.0);
  }
  const auto again = NetworkWeights::initialize(Architecture::observer(), 7);
  EXPECT_TRUE(again.recurrent_stack[2].input_weights == net.recurrent_stack[2].input_weights);
}

TEST(Network, ZeroWeightsGiveHalf) {
  const auto net = NetworkWeights::zeros(Architecture::observer());
  const VectorXd y = forward_full(net, MatrixXd::Constant(50, 5, 0.3), VectorXd::Constant(3, 0.7));
  for (Index c = 0; c < 3; ++c) EXPECT_EQ(y(c), 0.5);
}

TEST(Network, ForwardMatchesOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const auto net = NetworkWeights::initialize(Architecture::observer(), seed);
    const MatrixXd win = MatrixXd::NullaryExpr(50, 5, [&] { return u(rng); });
    const std::vector<double> fb = {u(rng), u(rng), u(rng)};
    const VectorXd y = forward_full(net, win, to_eigen(fb));
    const auto ref = network_oracle(net, win, fb);
    for (Index c = 0; c < 3; ++c) EXPECT_NEAR(y(c), ref[static_cast<std::size_t>(c)], 1e-12);
    for (Index c = 0; c < 3; ++c) {
      EXPECT_GT(y(c), 0.0);
      EXPECT_LT(y(c), 1.0);
    }
  }
  const auto gru = GruWeights::initialize(Architecture::end_to_end(), 9);
  const MatrixXd win = MatrixXd::NullaryExpr(50, 5, [&] { return u(rng); });
  const VectorXd y = forward_full(gru, win, VectorXd());
  const auto ref = network_oracle(gru, win, {});
  for (Index c = 0; c < 3; ++c) EXPECT_NEAR(y(c), ref[static_cast<std::size_t>(c)], 1e-12);
}

TEST(Network, BatchedForwardEqualsPerSample) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto net = NetworkWeights::initialize(Architecture::observer(), 4);
  std::vector<MatrixXd> wins;
  MatrixXd fb(3, 6);
  for (int b = 0; b < 6; ++b) {
    wins.push_back(MatrixXd::NullaryExpr(50, 5, [&] { return u(rng); }));
    fb.col(b) = VectorXd::NullaryExpr(3, [&] { return u(rng); });
  }
  const MatrixXd y = forward(net, pack_sequences(wins), 50, fb);
  for (int b = 0; b < 6; ++b) {
    const VectorXd yb = forward_full(net, wins[static_cast<std::size_t>(b)], fb.col(b));
    EXPECT_LT((y.col(b) - yb).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Network, RegressionPin) {
  const auto net = NetworkWeights::initialize(Architecture::observer(), 2024);
  MatrixXd win(50, 5);
  for (Index t = 0; t < 50; ++t)
    for (Index c = 0; c < 5; ++c) win(t, c) = 0.5 + 0.4 * std::sin(0.1 * static_cast<double>(t) + static_cast<double>(c));
  const VectorXd y = forward_full(net, win, VectorXd::Constant(3, 0.25));
  EXPECT_NEAR(y(0), 0.53552399528478822, 1e-12);
  EXPECT_NEAR(y(1), 0.59223080554123742, 1e-12);
  EXPECT_NEAR(y(2), 0.64423903346863998, 1e-12);
}

TEST(Network, HiddenStatesBounded) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  auto net = NetworkWeights::initialize(Architecture::tiny(), 3);
  for (auto& l : net.recurrent_stack) l.input_weights *= 20.0;
  ForwardCache<LstmLayerWeights> cache;
  forward(net, MatrixXd::NullaryExpr(5, 40 * 4, [&] { return u(rng); }), 40, MatrixXd::Zero(3, 4), &cache);
  for (const auto& c : cache.recurrent) EXPECT_LE(c.hidden.cwiseAbs().maxCoeff(), 1.0);
  auto gru = GruWeights::initialize(Architecture::tiny(0), 3);
  for (auto& l : gru.recurrent_stack) l.input_weights *= 20.0;
  ForwardCache<GruLayerWeights> gc;
  forward(gru, MatrixXd::NullaryExpr(5, 40 * 4, [&] { return u(rng); }), 40, MatrixXd(), &gc);
  for (const auto& c : gc.recurrent) EXPECT_LE(c.hidden.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Network, NonFiniteInputReportsLayerAndStep) {
  const auto net = NetworkWeights::initialize(Architecture::tiny(), 1);
  MatrixXd x = MatrixXd::Constant(5, 5 * 2, 0.5);
  x(2, 3 * 2 + 1) = std::nan("");
  try {
    forward(net, x, 5, MatrixXd::Zero(3, 2));
    FAIL();
  } catch (const NumericalError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("layer 0"), std::string::npos) << m;
    EXPECT_NE(m.find("step 3"), std::string::npos) << m;
  }
}

TEST(Loss, L2) {
  const MatrixXd a = MatrixXd::Constant(3, 4, 0.2);
  EXPECT_EQ(l2_loss(a, a), 0.0);
  EXPECT_EQ(l2_loss(MatrixXd::Ones(3, 1), MatrixXd::Zero(3, 1)), 1.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int i = 0; i < 50; ++i) {
    const MatrixXd p = MatrixXd::NullaryExpr(3, 7, [&] { return n(rng); });
    const MatrixXd t = MatrixXd::NullaryExpr(3, 7, [&] { return n(rng); });
    EXPECT_GE(l2_loss(p, t), 0.0);
  }
  EXPECT_THROW(l2_loss(MatrixXd::Ones(3, 2), MatrixXd::Ones(3, 1)), ValidationError);
}

TEST(Backward, ZeroErrorGivesZeroGradient) {
  std::mt19937_64 rng(2);
  const auto net = NetworkWeights::initialize(Architecture::tiny(), 11);
  auto b = random_batch(net, 5, 4, rng);
  b.targets = forward(net, b.inputs, b.steps, b.feedback);
  NetworkWeights grad;
  EXPECT_EQ(backward_full(net, b, grad), 0.0);
  for (auto& v : param_views(grad))
    for (double g : v.values) EXPECT_EQ(g, 0.0) << v.name;
}

TEST(Backward, FrozenPathBiasHasZeroGradient) {
  std::mt19937_64 rng(3);
  auto net = NetworkWeights::initialize(Architecture::tiny(), 12);
  // Unit 2 of the first dense layer feeds nothing downstream.
  net.dense_stack[1].weight.col(2).setZero();
  const auto b = random_batch(net, 5, 4, rng);
  NetworkWeights grad;
  backward_full(net, b, grad);
  EXPECT_EQ(grad.dense_stack[0].bias(2), 0.0);
  EXPECT_NE(grad.dense_stack[0].bias(1), 0.0);
}

TEST(Backward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EXPECT_LT(random_gradient_check<LstmLayerWeights>(seed, 3).max_rel_error, 1e-4);
    EXPECT_LT(random_gradient_check<LstmLayerWeights>(seed, 0).max_rel_error, 1e-4);
    EXPECT_LT(random_gradient_check<GruLayerWeights>(seed, 0).max_rel_error, 1e-4);
  }
}

TEST(Backward, IdentityOutputAlsoChecks) {
  std::mt19937_64 rng(4);
  auto arch = Architecture::tiny();
  arch.output_activation = Activation::identity;
  const auto net = NetworkWeights::initialize(arch, 13);
  const auto r = gradient_check(net, random_batch(net, 5, 3, rng));
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GradCheck, CorruptedForgetGateIsCaught) {
  GradCheckOptions opt;
  opt.corrupt_gate_gradient = true;
  const auto r = random_gradient_check<LstmLayerWeights>(1, 3, opt);
  EXPECT_GT(r.max_rel_error, 1e-2);
  ASSERT_FALSE(r.worst_per_block.empty());
}

TEST(GradCheck, LargeEpsDegrades) {
  GradCheckOptions coarse;
  coarse.eps = 1e-1;
  const double fine = random_gradient_check<LstmLayerWeights>(2, 3).max_rel_error;
  const double bad = random_gradient_check<LstmLayerWeights>(2, 3, coarse).max_rel_error;
  EXPECT_GT(bad, 10.0 * fine);
}

TEST(GradCheck, CsvHeader) {
  const auto r = random_gradient_check<GruLayerWeights>(3, 0);
  const auto p = temp_path("gc.csv");
  write_gradcheck_csv(r, p);
  std::ifstream in(p);
  std::string h;
  std::getline(in, h);
  EXPECT_EQ(h, "coordinate,analytic,numeric,rel_error");
  std::size_t rows = 0;
  for (std::string l; std::getline(in, l);) rows += !l.empty();
  EXPECT_EQ(rows, r.entries.size());
  std::filesystem::remove(p);
}

TEST(Adam, ZeroGradientLeavesWeights) {
  auto net = NetworkWeights::initialize(Architecture::tiny(), 1);
  const auto before = net;
  auto g = net.zeros_like();
  auto st = AdamState<NetworkWeights>::for_weights(net);
  adam_step(net, g, st);
  EXPECT_EQ(st.step, 1u);
  EXPECT_TRUE(net.dense_stack[0].weight == before.dense_stack[0].weight);
  EXPECT_TRUE(net.recurrent_stack[1].biases == before.recurrent_stack[1].biases);
}

TEST(Adam, FirstStepIsLearningRate) {
  auto net = NetworkWeights::initialize(Architecture::tiny(), 1);
  const auto before = net;
  auto g = net.zeros_like();
  for (auto& v : param_views(g))
    for (double& x : v.values) x = 1.0;
  AdamHyper h;
  h.lr = 0.01;
  auto st = AdamState<NetworkWeights>::for_weights(net, h);
  adam_step(net, g, st);
  EXPECT_NEAR(before.dense_stack[1].bias(0) - net.dense_stack[1].bias(0), 0.01, 1e-9);
  EXPECT_NEAR(before.recurrent_stack[0].input_weights(3, 2) - net.recurrent_stack[0].input_weights(3, 2), 0.01, 1e-9);
  // Repeated g = 1 keeps the step at lr.
  for (int i = 0; i < 5; ++i) adam_step(net, g, st);
  EXPECT_NEAR(before.dense_stack[1].bias(0) - net.dense_stack[1].bias(0), 0.06, 1e-8);
}

TEST(Adam, Deterministic) {
  std::mt19937_64 rng(5);
  auto a = NetworkWeights::initialize(Architecture::tiny(), 2), b = a;
  const auto batch = random_batch(a, 5, 4, rng);
  auto sa = AdamState<NetworkWeights>::for_weights(a), sb = sa;
  for (int i = 0; i < 3; ++i) {
    NetworkWeights ga, gb;
    backward_full(a, batch, ga);
    backward_full(b, batch, gb);
    adam_step(a, ga, sa);
    adam_step(b, gb, sb);
  }
  EXPECT_EQ(weights_to_string(a, &sa), weights_to_string(b, &sb));
}

TEST(Memorization, SingleBatchLossDropsHundredfold) {
  std::mt19937_64 rng(77);
  auto arch = Architecture::tiny();
  arch.recurrent_hidden = {8, 8};
  arch.dense = {16, 3};
  auto net = NetworkWeights::initialize(arch, 21);
  const auto batch = random_batch(net, 10, 8, rng);
  AdamHyper h;
  h.lr = 1e-2;
  auto st = AdamState<NetworkWeights>::for_weights(net, h);
  NetworkWeights g;
  const double first = backward_full(net, batch, g);
  double last = first;
  for (int i = 0; i < 500; ++i) {
    last = backward_full(net, batch, g);
    adam_step(net, g, st);
  }
  last = l2_loss(forward(net, batch.inputs, batch.steps, batch.feedback), batch.targets);
  EXPECT_LT(last, first / 100.0) << "initial " << first << " final " << last;
}

TEST(WeightsIo, RoundTripBitExact) {
  auto net = NetworkWeights::initialize(Architecture::observer(), 31);
  net.dense_stack[0].weight(0, 0) = 1.0 / 3.0;
  net.dense_stack[0].bias(1) = -2.5e-300;
  const auto p = temp_path("w.json");
  save_weights(net, p);
  const auto back = load_weights<LstmLayerWeights>(p);
  EXPECT_EQ(back.init_seed, 31u);
  EXPECT_EQ(back.architecture(), net.architecture());
  auto a = net, b = back;
  auto va = param_views(a), vb = param_views(b);
  ASSERT_EQ(va.size(), vb.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    ASSERT_EQ(va[i].values.size(), vb[i].values.size());
    for (std::size_t k = 0; k < va[i].values.size(); ++k)
      ASSERT_EQ(std::bit_cast<std::uint64_t>(va[i].values[k]), std::bit_cast<std::uint64_t>(vb[i].values[k]));
  }
  EXPECT_EQ(peek_cell_kind(p), "lstm");
  std::filesystem::remove(p);
}

TEST(WeightsIo, OptimizerStateRoundTrip) {
  std::mt19937_64 rng(1);
  auto net = GruWeights::initialize(Architecture::tiny(0), 3);
  auto st = AdamState<GruWeights>::for_weights(net);
  SequenceBatch b;
  b.steps = 5;
  b.size = 2;
  b.inputs = MatrixXd::Random(5, 10);
  b.targets = MatrixXd::Constant(3, 2, 0.4);
  GruWeights g;
  backward_full(net, b, g);
  adam_step(net, g, st);
  const std::string text = weights_to_string(net, &st);
  const auto back = weights_from_string<GruLayerWeights>(text);
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(back.optimizer->step, 1u);
  EXPECT_EQ(weights_to_string(back.net, &*back.optimizer), text);
}

TEST(WeightsIo, ErrorsAreDistinct) {
  const auto net = NetworkWeights::initialize(Architecture::tiny(), 1);
  const std::string text = weights_to_string(net);
  EXPECT_THROW(weights_from_string<LstmLayerWeights>(text.substr(0, text.size() / 2)), WeightCorruptionError);

  std::string future = text;
  const auto pos = future.find("\"format_version\": 1");
  ASSERT_NE(pos, std::string::npos);
  future.replace(pos, 19, "\"format_version\": 9");
  EXPECT_THROW(weights_from_string<LstmLayerWeights>(future), WeightVersionError);

  EXPECT_THROW(weights_from_string<GruLayerWeights>(text), WeightShapeError);

  // Alter one stored number while keeping the document well formed.
  std::string altered = text;
  const auto d = altered.find("\"data\"", altered.find("\"weight\""));
  ASSERT_NE(d, std::string::npos);
  const auto digit = altered.find_first_of("123456789", altered.find('.', d));
  altered[digit] = altered[digit] == '9' ? '8' : static_cast<char>(altered[digit] + 1);
  EXPECT_THROW(weights_from_string<LstmLayerWeights>(altered), WeightCorruptionError);

  EXPECT_THROW(load_weights<LstmLayerWeights>(temp_path("missing.json")), IoError);
}

TEST(Training, OneEpochDeterministicAcrossRunsAndWorkers) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WindowedDataset ds;
  ds.window_len = 6;
  for (int s = 0; s < 3; ++s) {
    SequenceData q;
    q.label = "s";
    q.sensors_scaled = MatrixXd::NullaryExpr(5, 40, [&] { return u(rng); });
    q.states = MatrixXd::NullaryExpr(3, 40, [&] { return u(rng); });
    ds.sequences.push_back(q);
  }
  ds.scaler.state = {ChannelRange{0, 1}, ChannelRange{0, 1}, ChannelRange{0, 1}};
  ds.rebuild_index();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 16;
  tc.seed = 5;
  NoiseSpec noise;
  noise.seed = 8;
  const auto init = NetworkWeights::initialize(Architecture::tiny(), 4);
  const auto a = train_network(init, ds, ds, noise, tc);
  const auto b = train_network(init, ds, ds, noise, tc);
  EXPECT_EQ(weights_to_string(a.last), weights_to_string(b.last));
  tc.workers = 3;
  const auto c = train_network(init, ds, ds, noise, tc);
  const auto d = train_network(init, ds, ds, noise, tc);
  EXPECT_EQ(weights_to_string(c.last), weights_to_string(d.last));
  EXPECT_NE(weights_to_string(a.last), weights_to_string(init));
}
