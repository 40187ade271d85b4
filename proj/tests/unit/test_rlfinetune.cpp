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

#include "rlfinetune.hpp"

#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"

using namespace attrgen;

namespace {

FinetuneConfig quick_config() {
  FinetuneConfig cfg;
  cfg.steps = 4;
  cfg.batch = 2;
  cfg.eval_every = 2;
  cfg.eval_samples = 1;
  cfg.rollout.max_len = 10;
  return cfg;
}

}  // namespace

TEST_CASE("punishment and the combined loss") {
  CHECK(punishment(2.0, 1, 2.0) == 0.0);
  CHECK(punishment(2.0, 0, 2.0) == 4.0);
  CHECK(rl_loss({1, 2, 3}, 1, 2.0) == doctest::Approx(2.0));
  CHECK(rl_loss({1, 2, 3}, 0, 2.0) == doctest::Approx(6.0));
  CHECK(rl_loss({0.5}, 0, 1.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(rl_loss({}, 1, 2.0), Error);
}

TEST_CASE("sequence loss and gradient scale by 1 + rho when rejected") {
  const auto c = fixture::catalog(10);
  const auto lm = make_lm(c, fixture::tiny_lm());
  const auto seq = make_conditioning_sequence(lm.tokenizer(), c.products[0]);
  const auto n = lm.net().num_params();
  std::vector<double> g1(n, 0.0), g0(n, 0.0);
  const double l1 = rl_sequence_loss(lm.net(), seq, 1, 2.5, &g1);
  const double l0 = rl_sequence_loss(lm.net(), seq, 0, 2.5, &g0);
  CHECK(l0 == doctest::Approx(3.5 * l1).epsilon(1e-12));
  for (std::size_t i = 0; i < n; i += 97) CHECK(g0[i] == doctest::Approx(3.5 * g1[i]).epsilon(1e-9));
}

TEST_CASE("rollout sequences target the sampled tokens") {
  const auto c = fixture::catalog(10);
  const auto lm = make_lm(c, fixture::tiny_lm());
  const auto& p = c.products[0];
  GenerationResult r;
  r.tokens = {lm.tokenizer().id(p.description[0]), lm.tokenizer().id(p.description[1]),
              Tokenizer::kEos};
  const auto s = rollout_sequence(lm.tokenizer(), p, r);
  CHECK(s.tokens.size() == static_cast<std::size_t>(s.prefix_length) + 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.targets[s.prefix_length + i] == r.tokens[i]);
  CHECK(std::accumulate(s.weights.begin(), s.weights.end(), 0.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(rollout_sequence(lm.tokenizer(), p, GenerationResult{}), Error);
}

TEST_CASE("oracle critic") {
  const auto c = fixture::catalog(20);
  const auto k = c.vocab.require_class("material");
  const ProductRecord* p = nullptr;
  for (const auto& q : c.products) {
    if (q.attributes[k]) p = &q;
  }
  REQUIRE(p);
  std::string rival;
  for (const auto& t : c.vocab.at(k).terms) {
    if (t != *p->attributes[k]) rival = t;
  }
  const auto dims = [&](std::vector<std::string> w, bool ended) {
    return oracle_dims(*p, w, ended, c.vocab);
  };
  CHECK(preference_from_dims(dims(p->description, true)) == 1);
  CHECK(*dims({"a", rival, "shirt"}, true).accurate == false);
  CHECK(*dims({"a", "soft", "shirt"}, false).grammatical == false);
  CHECK(*dims({}, true).grammatical == false);
  CHECK(*dims({"a", "soft", "soft", "shirt"}, true).grammatical == false);
  CHECK(*dims({"a", "soft", "a", "shirt"}, true).grammatical == true);

  const auto lm = make_lm(c, fixture::tiny_lm());
  const auto critic = oracle_critic(lm.tokenizer(), c.vocab);
  GenerationResult r;
  r.tokens = lm.tokenizer().encode(p->description);
  r.tokens.push_back(Tokenizer::kEos);
  CHECK(critic(*p, r).accepted);
  r.tokens.pop_back();
  CHECK_FALSE(critic(*p, r).accepted);
}

TEST_CASE("finetune config validation and round-trip") {
  auto cfg = quick_config();
  cfg.rho = 0.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = quick_config();
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = quick_config();
  cfg.target = FinetuneTarget::kRollout;
  cfg.rollout.boost = false;  // rollouts never boost; the parser enforces it
  CHECK(FinetuneConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
  CHECK(parse_finetune_target(finetune_target_name(FinetuneTarget::kRollout)) ==
        FinetuneTarget::kRollout);
  CHECK_THROWS_AS(parse_finetune_target("policy"), Error);
}

TEST_CASE("lr = 0 leaves the model and its evaluation unchanged") {
  const auto c = fixture::catalog(30);
  auto lm = make_lm(c, fixture::tiny_lm());
  const auto before = lm.net().params();
  auto cfg = quick_config();
  cfg.lr = 0;
  cfg.patience = 0;
  std::size_t events = 0;
  const auto r = finetune(lm, c, oracle_critic(lm.tokenizer(), c.vocab), cfg,
                          [&](const nlohmann::json&) { ++events; });
  CHECK(lm.net().params() == before);
  CHECK(r.pre.contradictions == r.post.contradictions);
  CHECK(r.pre.accepted == r.post.accepted);
  CHECK(r.steps_run == 4);
  CHECK(events == r.log.size());
  CHECK(r.pre.items == c.split(Split::kVal).size());
}

TEST_CASE("finetuning is deterministic and moves the parameters") {
  const auto c = fixture::catalog(30);
  auto a = make_lm(c, fixture::tiny_lm());
  auto b = make_lm(c, fixture::tiny_lm());
  const auto before = a.net().params();
  const auto cfg = quick_config();
  const auto ra = finetune(a, c, oracle_critic(a.tokenizer(), c.vocab), cfg);
  const auto rb = finetune(b, c, oracle_critic(b.tokenizer(), c.vocab), cfg);
  CHECK(a.net().params() == b.net().params());
  CHECK(a.net().params() != before);
  CHECK(ra.to_jsonl() == rb.to_jsonl());
  CHECK(ra.summary_json().contains("post_contradiction_rate"));
  CHECK_THROWS_AS(finetune(a, c, ProductCritic{}, cfg), Error);
}
