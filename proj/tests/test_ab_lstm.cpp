#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace kpc;

namespace {

AbLstmShape tiny_shape(std::size_t d = 3) {
  AbLstmShape s;
  s.embed_dim = d;
  s.filters_per_width = 2;
  s.hidden = 5;
  return s;
}

nn::Matrix random_seq(Rng& rng, Eigen::Index T, Eigen::Index d) {
  nn::Matrix m(T, d);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal(0.0, 1.0);
  return m;
}

void shake(nn::ParamStore& store, Rng& rng, double scale) {
  for (auto& t : store.tensors()) {
    for (Eigen::Index k = 0; k < t.value.size(); ++k) t.value.data()[k] += rng.normal(0.0, scale);
  }
}

}  // namespace

TEST(AbLstm, AttentionHasFourBanksOfF) {
  Rng rng(1);
  AbLstm net(tiny_shape(), rng);
  EXPECT_EQ(net.attention(random_seq(rng, 8, 3)).attention.size(), 8);
  EXPECT_EQ(net.shape().input_dim(), 11u);
}

TEST(AbLstm, ZeroConvWeightsGiveTanhOfBias) {
  Rng rng(2);
  AbLstm net(tiny_shape(), rng);
  for (std::size_t b = 0; b < 4; ++b) {
    net.params().value(net.conv_w_index(b)).setZero();
    net.params().value(net.conv_b_index(b)).setConstant(0.3);
  }
  const auto a = net.attention(random_seq(rng, 6, 3)).attention;
  for (Eigen::Index k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], std::tanh(0.3), 1e-15);
}

TEST(AbLstm, AttentionMatchesNestedLoopOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    AbLstm net(tiny_shape(), rng);
    shake(net.params(), rng, 0.3);
    const auto T = static_cast<Eigen::Index>(3 + rng.below(8));  // includes T < widest filter
    const auto seq = random_seq(rng, T, 3);
    const auto got = net.attention(seq).attention;
    const auto want = oracle::attention(net, seq);
    ASSERT_EQ(static_cast<std::size_t>(got.size()), want.size());
    for (Eigen::Index k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[static_cast<std::size_t>(k)], 1e-9);
  }
}

TEST(AbLstm, ForwardMatchesScalarOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    AbLstm net(tiny_shape(), rng);
    shake(net.params(), rng, 0.2);
    const auto seq = random_seq(rng, 8, 3);
    const auto got = net.forward(seq).probs;
    const auto want = oracle::ab_lstm(net, seq);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(got[c], want[static_cast<std::size_t>(c)], 1e-9);
  }
}

TEST(AbLstm, TimeReversalSymmetry) {
  // Reversing the sequence, flipping every kernel in time and swapping the two
  // directions (plus the matching halves of the output layer) must not change
  // the output, as long as no bank needs tail padding.
  Rng rng(5);
  const auto shape = tiny_shape();
  AbLstm a(shape, rng);
  shake(a.params(), rng, 0.2);
  AbLstm b(shape);
  auto& pa = a.params();
  auto& pb = b.params();
  const auto d = static_cast<Eigen::Index>(shape.embed_dim);
  const auto H = static_cast<Eigen::Index>(shape.hidden);
  for (std::size_t bank = 0; bank < shape.widths.size(); ++bank) {
    const auto w = static_cast<Eigen::Index>(shape.widths[bank]);
    const auto& W = pa.value(a.conv_w_index(bank));
    auto& V = pb.value(b.conv_w_index(bank));
    for (Eigen::Index o = 0; o < w; ++o) V.middleCols((w - 1 - o) * d, d) = W.middleCols(o * d, d);
    pb.value(b.conv_b_index(bank)) = pa.value(a.conv_b_index(bank));
  }
  for (auto [from, to] : {std::pair{AbLstm::kForward, AbLstm::kBackward}, std::pair{AbLstm::kBackward, AbLstm::kForward}}) {
    pb.value(b.lstm_w_index(to)) = pa.value(a.lstm_w_index(from));
    pb.value(b.lstm_u_index(to)) = pa.value(a.lstm_u_index(from));
    pb.value(b.lstm_b_index(to)) = pa.value(a.lstm_b_index(from));
  }
  pb.value(b.out_w_index()).leftCols(H) = pa.value(a.out_w_index()).rightCols(H);
  pb.value(b.out_w_index()).rightCols(H) = pa.value(a.out_w_index()).leftCols(H);
  pb.value(b.out_b_index()) = pa.value(a.out_b_index());

  for (int trial = 0; trial < 10; ++trial) {
    const auto seq = random_seq(rng, 7 + static_cast<Eigen::Index>(rng.below(4)), 3);
    const nn::Matrix reversed = seq.colwise().reverse();
    const auto pa_out = a.forward(seq).probs;
    const auto pb_out = b.forward(reversed).probs;
    EXPECT_LT((pa_out - pb_out).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(AbLstm, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  AbLstmShape shape = tiny_shape(4);
  shape.hidden = 8;
  AbLstm net(shape, rng);
  std::vector<nn::Matrix> seqs;
  for (int k = 0; k < 3; ++k) seqs.push_back(random_seq(rng, 6, 4));
  const std::vector<Label> labels = {Label::Material, Label::Process, Label::Task};
  net.params().zero_grad();
  for (std::size_t k = 0; k < seqs.size(); ++k) net.accumulate_gradient(seqs[k], labels[k]);
  std::vector<nn::Matrix> grads;
  for (const auto& t : net.params().tensors()) grads.push_back(t.grad);
  const auto check = oracle::check_gradients(net.params(), grads, [&] {
    double loss = 0.0;
    for (std::size_t k = 0; k < seqs.size(); ++k) loss += nn::cross_entropy(net.forward(seqs[k]).probs, labels[k]);
    return loss;
  });
  EXPECT_GE(check.fraction_tight(), 0.95);
  EXPECT_LE(check.worst, 1e-2) << check.worst_name;
}

TEST(AbLstm, DropoutMaskScalesKeptUnits) {
  Rng rng(7);
  AbLstm net(tiny_shape(), rng);
  const auto mask = net.sample_dropout_mask(rng);
  ASSERT_EQ(mask.size(), 10);
  for (Eigen::Index k = 0; k < mask.size(); ++k) EXPECT_TRUE(mask[k] == 0.0 || mask[k] == 2.0);
  const nn::Matrix seq = random_seq(rng, 5, 3);
  // Prediction never applies dropout.
  EXPECT_EQ(net.forward(seq).probs, net.forward(seq).probs);
}

TEST(AbLstm, EmbedSequenceRowsPerSlot) {
  auto toy = testing_support::toy_set(3, 1);
  const auto seq = embed_sequence(toy.data[0].window, *toy.table);
  EXPECT_EQ(seq.rows(), 8);
  EXPECT_EQ(seq.cols(), 8);
  EXPECT_GT(seq.row(7).cwiseAbs().maxCoeff(), 0.0);  // context words are in the table
}

TEST(AbLstm, RejectsBadInputs) {
  Rng rng(8);
  AbLstm net(tiny_shape(), rng);
  EXPECT_THROW(net.forward(nn::Matrix(0, 3)), Error);
  EXPECT_THROW(net.forward(nn::Matrix::Zero(4, 5)), Error);
}

TEST(AbLstm, TrainingIsDeterministicAndLowersLoss) {
  auto toy = testing_support::toy_set(9, 21);
  HyperParams hp;
  hp.family = Family::AbLstm;
  hp.left = hp.right = 2;
  hp.embedding = "toy";
  hp.seed = 5;
  AbLstmShape shape;
  shape.filters_per_width = 4;
  shape.hidden = 8;
  const nn::Regimen regimen{8, 3, 0.01};
  const auto a = train_ab_lstm(hp, toy.data, *toy.table, shape, regimen);
  const auto b = train_ab_lstm(hp, toy.data, *toy.table, shape, regimen);
  EXPECT_EQ(a.log.train_loss, b.log.train_loss);
  EXPECT_LT(a.log.train_loss.back(), a.log.train_loss.front());
}
