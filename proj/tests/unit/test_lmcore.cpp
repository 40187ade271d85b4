/*
 * Copyright (c) 2026, The attrgen Authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lmcore.hpp"

#include <cmath>
#include <numeric>

#include "checkpoint.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "optimizer.hpp"
#include "oracles.hpp"
#include "rlfinetune.hpp"
#include "tokenizer.hpp"

using namespace attrgen;

namespace {

ConditionalLM tiny_model(const Catalog& c, std::uint64_t seed = 3) {
  auto h = fixture::tiny_lm();
  h.width = 8;
  h.seed = seed;
  return make_lm(c, h);
}

std::vector<std::size_t> sample_coords(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(std::min(count, n));
  return idx;
}

}  // namespace

TEST_CASE("tokenizer ranks by frequency and maps rare words to unk") {
  Catalog c = fixture::catalog(3);
  for (auto& p : c.products) {
    p.title = {"a"};
    p.description = {"a", "a", "b"};
  }
  const auto tok = build_tokenizer(c, 1);
  CHECK(tok.size() == Tokenizer::kNumSpecials + 1);
  CHECK(tok.token(Tokenizer::kNumSpecials) == "a");
  CHECK(tok.id("b") == Tokenizer::kUnk);
  const auto wide = build_tokenizer(c, 100);
  CHECK(wide.id("b") != Tokenizer::kUnk);
  CHECK_THROWS_AS(build_tokenizer(Catalog{}, 10), Error);
}

TEST_CASE("tokenizer ids are dense, specials present, encode/decode round-trip") {
  const auto c = fixture::catalog(20);
  const auto tok = build_tokenizer(c, 2000);
  for (int i = 0; i < tok.size(); ++i) CHECK(tok.id(tok.token(i)) == (i == Tokenizer::kUnk ? Tokenizer::kUnk : i));
  CHECK(tok.token(Tokenizer::kBos) == "<bos>");
  CHECK(tok.token(Tokenizer::kEos) == "<eos>");
  CHECK(tok.token(Tokenizer::kSep) == "<sep>");
  CHECK(tok.decode(tok.encode("cotton dress")) == "cotton dress");
  CHECK(Tokenizer::from_json(tok.to_json()) == tok);
  CHECK_THROWS_AS(tok.token(tok.size()), Error);
}

TEST_CASE("cross entropy values") {
  CHECK(cross_entropy({0, 0}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(cross_entropy({0, 0, 0, 0}, 3) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  // -log sigmoid(10) = log1p(e^-10)
  CHECK(cross_entropy({10, 0}, 0) == doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-12));
  CHECK(cross_entropy({1000, 0}, 1) == doctest::Approx(1000.0));
  CHECK_THROWS_AS(cross_entropy({0, 0}, 2), Error);
}

TEST_CASE("conditioning sequence layout") {
  const auto c = fixture::catalog(5);
  const auto tok = build_tokenizer(c, 2000);
  const auto& p = c.products[0];
  const auto s = make_conditioning_sequence(tok, p);
  CHECK(std::count(s.tokens.begin(), s.tokens.end(), Tokenizer::kSep) == 1);
  CHECK(s.prefix_length == static_cast<int>(p.title.size()) + 1);
  CHECK(s.tokens.back() == Tokenizer::kEos);
  // Position p predicts tokens[p] (position 0 is the image slot).
  double total = 0;
  std::size_t masked = 0;
  for (std::size_t i = 0; i < s.weights.size(); ++i) {
    if (s.weights[i] == 0) continue;
    ++masked;
    total += s.weights[i];
    CHECK(static_cast<int>(i) >= s.prefix_length);
  }
  CHECK(masked == p.description.size() + 1);
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("next-token distribution is normalized and deterministic") {
  const auto c = fixture::catalog(10);
  const auto lm = tiny_model(c);
  const auto& p = c.products[0];
  auto prefix = conditioning_prefix(lm.tokenizer(), p.title);
  for (int step = 0; step < 5; ++step) {
    const auto logits = lm.next_token_logits(p.embedding, prefix);
    CHECK(logits == lm.next_token_logits(p.embedding, prefix));
    const auto probs = softmax(logits);
    CHECK(std::accumulate(probs.begin(), probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    prefix.push_back(lm.tokenizer().id(p.description[step]));
  }
}

TEST_CASE("causality: later tokens never change earlier logits") {
  const auto c = fixture::catalog(10);
  const auto lm = tiny_model(c);
  const auto& p = c.products[1];
  const auto seq = make_conditioning_sequence(lm.tokenizer(), p);
  const auto full = lm.net().forward(p.embedding, seq.tokens);
  auto changed = seq.tokens;
  const int j = static_cast<int>(changed.size()) - 3;
  changed[j] = Tokenizer::kUnk;
  const auto alt = lm.net().forward(p.embedding, changed);
  // Token j sits at position j + 1.
  for (int t = 0; t <= j; ++t) CHECK(lm.net().lm_logits(full, t) == lm.net().lm_logits(alt, t));
  CHECK(lm.net().lm_logits(full, j + 1) != lm.net().lm_logits(alt, j + 1));
}

TEST_CASE("incremental decoding matches a full forward pass") {
  const auto c = fixture::catalog(10);
  const auto lm = tiny_model(c);
  const auto& p = c.products[2];
  auto prefix = conditioning_prefix(lm.tokenizer(), p.title);
  auto state = lm.begin(p.embedding, prefix);
  for (int i = 0; i < 4; ++i) {
    const auto a = state.logits();
    const auto b = lm.next_token_logits(p.embedding, prefix);
    REQUIRE(a.size() == b.size());
    for (std::size_t v = 0; v < a.size(); ++v) CHECK(a[v] == doctest::Approx(b[v]).epsilon(1e-12));
    const int id = lm.tokenizer().id(p.description[i]);
    state.push(id);
    prefix.push_back(id);
  }
}

TEST_CASE("prefix overflow is a length error") {
  const auto c = fixture::catalog(5);
  auto h = fixture::tiny_lm();
  h.context = 8;
  const auto lm = make_lm(c, h);
  std::vector<int> prefix(20, Tokenizer::kNumSpecials);
  CHECK_THROWS_AS(lm.next_token_logits(c.products[0].embedding, prefix), Error);
  try {
    lm.next_token_logits(c.products[0].embedding, prefix);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kLength);
  }
}

TEST_CASE("training loss gradients match central differences") {
  const auto c = fixture::catalog(10);
  auto lm = tiny_model(c);
  auto& net = lm.net();
  const auto seq = make_conditioning_sequence(lm.tokenizer(), c.products[0]);
  const auto coords = sample_coords(net.num_params(), 200, 5);
  for (int cflag : {1, 0}) {
    std::vector<double> grad(net.num_params(), 0.0);
    rl_sequence_loss(net, seq, cflag, 2.0, &grad);
    const double err = oracle::max_relative_error(
        net.params(), grad, [&] { return rl_sequence_loss(net, seq, cflag, 2.0, nullptr); }, coords,
        1e-5);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("punished gradient is the scaled plain gradient; C=1 is exactly plain") {
  const auto c = fixture::catalog(10);
  const auto lm = tiny_model(c);
  const auto& net = lm.net();
  const auto seq = make_conditioning_sequence(lm.tokenizer(), c.products[3]);
  std::vector<double> plain(net.num_params(), 0.0), accepted(net.num_params(), 0.0),
      punished(net.num_params(), 0.0);
  const double l0 = net.token_loss(seq.image, seq.tokens, seq.targets, seq.weights, &plain);
  const double l1 = rl_sequence_loss(net, seq, 1, 3.0, &accepted);
  const double l2 = rl_sequence_loss(net, seq, 0, 3.0, &punished);
  CHECK(l1 == l0);
  CHECK(accepted == plain);
  CHECK(l2 == doctest::Approx(4.0 * l0).epsilon(1e-12));
  for (std::size_t i = 0; i < plain.size(); ++i) {
    CHECK(punished[i] == doctest::Approx(4.0 * plain[i]).epsilon(1e-9));
  }
}

TEST_CASE("all-masked loss has zero gradient") {
  const auto c = fixture::catalog(5);
  const auto lm = tiny_model(c);
  auto seq = make_conditioning_sequence(lm.tokenizer(), c.products[0]);
  std::fill(seq.weights.begin(), seq.weights.end(), 0.0);
  std::vector<double> grad(lm.net().num_params(), 0.0);
  CHECK(lm.net().token_loss(seq.image, seq.tokens, seq.targets, seq.weights, &grad) == 0.0);
  CHECK(std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; }));
}

TEST_CASE("library grad_check agrees and validates its step") {
  const auto c = fixture::catalog(5);
  const auto lm = tiny_model(c);
  const auto seq = make_conditioning_sequence(lm.tokenizer(), c.products[0]);
  const LossFn loss = [&](const Transformer& net, std::vector<double>* g) {
    return net.token_loss(seq.image, seq.tokens, seq.targets, seq.weights, g);
  };
  const auto r = grad_check(lm.net(), loss, 1e-5, 200, 9);
  CHECK(r.coordinates == 200);
  CHECK(r.max_rel_error < 1e-4);
  CHECK_THROWS_AS(grad_check(lm.net(), loss, 1e-2, 10, 9), Error);
}

TEST_CASE("lr = 0 leaves every epoch's loss unchanged") {
  const auto c = fixture::catalog(20);
  auto h = fixture::tiny_lm(3);
  h.lr = 0;
  auto lm = make_lm(c, h);
  const auto before = lm.net().params();
  const auto r = train_lm(lm, c, h);
  REQUIRE(r.epoch_loss.size() == 3);
  CHECK(r.epoch_loss[0] == r.epoch_loss[1]);
  CHECK(r.epoch_loss[1] == r.epoch_loss[2]);
  CHECK(lm.net().params() == before);
}

TEST_CASE("training is deterministic and reduces loss") {
  const auto c = fixture::catalog(40);
  const auto h = fixture::tiny_lm(4);
  auto a = make_lm(c, h), b = make_lm(c, h);
  const auto ra = train_lm(a, c, h);
  const auto rb = train_lm(b, c, h);
  CHECK(ra.epoch_loss == rb.epoch_loss);
  CHECK(a.net().params() == b.net().params());
  CHECK(ra.epoch_loss.back() < ra.epoch_loss.front());
}

TEST_CASE("single product is memorized and greedy decoding reproduces it") {
  Catalog c = fixture::catalog(10);
  c.products.resize(1);
  c.products[0].split = Split::kTrain;
  auto h = fixture::tiny_lm(200);
  h.width = 32;
  h.heads = 4;
  h.batch = 1;
  auto lm = make_lm(c, h);
  const auto r = train_lm(lm, c, h);
  CHECK(r.epoch_loss.back() < 0.05);

  const auto& p = c.products[0];
  auto prefix = conditioning_prefix(lm.tokenizer(), p.title);
  std::vector<std::string> out;
  for (int i = 0; i < 30; ++i) {
    const auto logits = lm.next_token_logits(p.embedding, prefix);
    const int id = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (id == Tokenizer::kEos) break;
    out.push_back(lm.tokenizer().token(id));
    prefix.push_back(id);
  }
  CHECK(out == p.description);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  fixture::TempDir dir("lm");
  const auto c = fixture::catalog(5);
  const auto lm = tiny_model(c);
  lm.save(dir.file("lm.ckpt"));
  const auto back = ConditionalLM::load(dir.file("lm.ckpt"));
  CHECK(back.net().params() == lm.net().params());
  CHECK(back.tokenizer() == lm.tokenizer());
  CHECK(back.net().config() == lm.net().config());

  auto bytes = lm.to_bytes();
  CHECK_THROWS_AS(ConditionalLM::from_bytes("junk\n"), Error);
  CHECK_THROWS_AS(checkpoint_from_bytes(bytes, "extractor"), Error);
  bytes.resize(bytes.size() - 8);
  CHECK_THROWS_AS(ConditionalLM::from_bytes(bytes), Error);
}

TEST_CASE("optimizer clips and steps") {
  std::vector<double> p = {1.0, 1.0};
  std::vector<double> g = {3.0, 4.0};
  Optimizer sgd(OptimizerKind::kSgd, 0.1, 1.0);
  CHECK(sgd.step(p, g) == doctest::Approx(5.0));
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.6));
  CHECK(p[1] == doctest::Approx(1.0 - 0.1 * 0.8));
  CHECK(parse_optimizer(optimizer_name(OptimizerKind::kAdam)) == OptimizerKind::kAdam);
  CHECK_THROWS_AS(parse_optimizer("lbfgs"), Error);
}
