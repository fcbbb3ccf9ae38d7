#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace kpc;

namespace {

CharCnnShape tiny_shape() {
  CharCnnShape s;
  s.char_dim = 5;
  s.filters = 4;
  s.width = 3;
  s.hidden = 6;
  s.budget = 12;
  return s;
}

/// Random characters followed by a PAD tail of random length (possibly all PAD).
CharCnn::Encoded random_input(Rng& rng, std::size_t budget) {
  CharCnn::Encoded enc;
  for (auto& seq : enc) {
    seq.assign(budget, CharVocab::kPad);
    const auto len = rng.below(budget + 1);
    for (std::size_t k = 0; k < len; ++k) seq[k] = 1 + static_cast<int>(rng.below(CharVocab::kSize - 1));
  }
  return enc;
}

std::vector<nn::Matrix> grads_of(const nn::ParamStore& store) {
  std::vector<nn::Matrix> out;
  for (const auto& t : store.tensors()) out.push_back(t.grad);
  return out;
}

}  // namespace

TEST(EncodeChars, JoinsTokensAndPads) {
  const auto seq = encode_chars({Slot("ab"), kPad, Slot("c")}, 6);
  const std::vector<int> expected = {CharVocab::index_of(U'a'), CharVocab::index_of(U'b'),
                                     CharVocab::index_of(U' '), CharVocab::index_of(U'c'), 0, 0};
  EXPECT_EQ(seq, expected);
}

TEST(EncodeChars, TruncatesAndMapsNonAsciiToUnk) {
  const auto seq = encode_chars({Slot("Fe₂O₃")}, 3);
  EXPECT_EQ(seq, (std::vector<int>{CharVocab::index_of(U'F'), CharVocab::index_of(U'e'), CharVocab::kUnk}));
  EXPECT_EQ(encode_chars({kPad, kPad}, 4), (std::vector<int>{0, 0, 0, 0}));
  EXPECT_EQ(CharVocab::kSize, 97u);
}

TEST(CharCnn, ParameterCountClosedForm) {
  const auto s = tiny_shape();
  CharCnn net(s);
  EXPECT_EQ(net.params().count(), CharCnn::parameter_count(s));
  EXPECT_EQ(CharCnn::parameter_count(s), 97u * 5 + 3 * (4 * 3 * 5 + 4 + 6 * 4 + 6) + 3 * 18 + 3);
}

TEST(CharCnn, ZeroOutputWeightsGiveUniform) {
  Rng rng(1);
  CharCnn net(tiny_shape(), rng);
  net.params().value(net.out_weights_index()).setZero();
  const auto t = net.forward(random_input(rng, 12));
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(t.probs[c], 1.0 / 3, 1e-12);
}

TEST(CharCnn, ProbabilitiesAndHiddenBounded) {
  Rng rng(2);
  CharCnn net(tiny_shape(), rng);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = net.forward(random_input(rng, 12));
    EXPECT_NEAR(t.probs.sum(), 1.0, 1e-12);
    EXPECT_LE(t.concat.cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(CharCnn, MatchesNestedLoopOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    CharCnn net(tiny_shape(), rng);
    const auto input = random_input(rng, 12);
    const auto got = net.forward(input);
    const auto want = oracle::char_cnn(net, input);
    for (std::size_t k = 0; k < 3; ++k) {
      for (int f = 0; f < 4; ++f) EXPECT_NEAR(got.contexts[k].pooled[f], want.pooled[k][static_cast<std::size_t>(f)], 1e-9);
    }
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(got.probs[c], want.probs[static_cast<std::size_t>(c)], 1e-9);
  }
}

TEST(CharCnn, AllPadContextPoolsToZero) {
  Rng rng(4);
  CharCnn net(tiny_shape(), rng);
  CharCnn::Encoded input = random_input(rng, 12);
  input[1].assign(12, CharVocab::kPad);
  const auto t = net.forward(input);
  EXPECT_EQ(t.contexts[1].pooled.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(t.contexts[1].positions.empty());
}

TEST(CharCnn, PoolingIgnoresTrailingPad) {
  // A longer PAD tail adds only masked windows, so pooled features are unchanged.
  Rng rng(5);
  auto s = tiny_shape();
  CharCnn a(s, rng);
  s.budget = 20;
  CharCnn b(s);
  for (std::size_t k = 0; k < a.params().tensors().size(); ++k) b.params().tensors()[k].value = a.params().tensors()[k].value;
  const ContextWindow w{{Slot("the")}, {Slot("zinc"), Slot("oxide")}, {Slot("films")}};
  const auto ta = a.forward(a.encode(w));
  const auto tb = b.forward(b.encode(w));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LT((ta.contexts[k].pooled - tb.contexts[k].pooled).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CharCnn, NoGradientIntoPadRow) {
  Rng rng(6);
  CharCnn net(tiny_shape(), rng);
  net.params().zero_grad();
  net.accumulate_gradient(random_input(rng, 12), Label::Task);
  EXPECT_EQ(net.params().tensors()[0].grad.row(CharVocab::kPad).cwiseAbs().maxCoeff(), 0.0);
}

TEST(CharCnn, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  CharCnn net(tiny_shape(), rng);
  std::vector<CharCnn::Encoded> inputs;
  std::vector<Label> labels;
  for (int k = 0; k < 3; ++k) {
    inputs.push_back(random_input(rng, 12));
    labels.push_back(label_from_index(static_cast<std::size_t>(k)));
  }
  net.params().zero_grad();
  for (std::size_t k = 0; k < inputs.size(); ++k) net.accumulate_gradient(inputs[k], labels[k]);
  const auto grads = grads_of(net.params());
  const auto check = oracle::check_gradients(net.params(), grads, [&] {
    double loss = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) loss += nn::cross_entropy(net.forward(inputs[k]).probs, labels[k]);
    return loss;
  });
  EXPECT_GE(check.fraction_tight(), 0.95);
  EXPECT_LE(check.worst, 1e-2) << check.worst_name;
}

TEST(CharCnn, TrainingLowersLossAndIsDeterministic) {
  auto toy = testing_support::toy_set(9, 12);
  HyperParams hp;
  hp.left = hp.right = 2;
  hp.num_filters = 20;
  hp.filter_width = 3;
  hp.char_budget = 30;
  hp.seed = 99;
  const nn::Regimen regimen{10, 4, 0.01};
  const auto a = train_char_cnn(hp, toy.data, regimen);
  const auto b = train_char_cnn(hp, toy.data, regimen);
  EXPECT_LT(a.log.train_loss.back(), a.log.train_loss.front());
  EXPECT_EQ(a.log.train_loss, b.log.train_loss);
  EXPECT_EQ(a.net.params().to_json(), b.net.params().to_json());
  EXPECT_THROW(train_char_cnn(hp, {}, regimen), Error);
}
