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

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "decoder.hpp"
#include "json.hpp"
#include "lmcore.hpp"
#include "optimizer.hpp"
#include "reward.hpp"

namespace attrgen {

// u(s) = rho (1 - C) mean_ce.
double punishment(double mean_ce, int c, double rho);

// mean_ce + u(s) over the per-token losses of one sentence.
double rl_loss(const std::vector<double>& token_losses, int c, double rho);

// The same loss evaluated on the model, with its gradient accumulated into
// *grad: (1 + rho (1 - C)) times the mean cross-entropy of `seq`.
double rl_sequence_loss(const Transformer& net, const ConditioningSequence& seq, int c,
                        double rho, std::vector<double>* grad);

// Teacher-forced sequence whose targets are the rollout's own tokens.
ConditioningSequence rollout_sequence(const Tokenizer& tok, const ProductRecord& product,
                                      const GenerationResult& rollout);

enum class FinetuneTarget {
  kReference,  // y_j from the product's reference description
  kRollout,    // y_j = the sampled token
};
const char* finetune_target_name(FinetuneTarget t);
FinetuneTarget parse_finetune_target(const std::string& name);

struct FinetuneConfig {
  double rho = 2.0;
  std::size_t steps = 1000;
  std::size_t batch = 8;
  double lr = 0.001;
  double clip_norm = 1.0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 1;
  FinetuneTarget target = FinetuneTarget::kReference;
  std::size_t eval_every = 50;
  std::size_t patience = 3;      // consecutive rises in val contradiction before stopping
  std::size_t eval_samples = 4;  // unboosted generations per val product
  GenerationConfig rollout;      // boosting is always off for rollouts

  void validate() const;
  nlohmann::json to_json() const;
  static FinetuneConfig from_json(const nlohmann::json& j);
};

// Judges one rollout of a product.
using ProductCritic = std::function<Verdict(const ProductRecord&, const GenerationResult&)>;

// accurate = no contradiction with the ground truth; grammatical = ended
// with <eos>, nonempty, no immediately repeated word.
PreferenceDims oracle_dims(const ProductRecord& product, const std::vector<std::string>& words,
                           bool ended, const AttributeVocabulary& vocab);
ProductCritic oracle_critic(const Tokenizer& tok, const AttributeVocabulary& vocab);
ProductCritic reward_critic(const Tokenizer& tok, const RewardModel& reward);

struct EvalPoint {
  std::size_t contradictions = 0;
  std::size_t accepted = 0;
  std::size_t items = 0;
  double contradiction_rate() const;
  double acceptance_rate() const;
};

// Unboosted generations on the val split, `samples` seeds per product.
EvalPoint evaluate_generation(const ConditionalLM& lm, const Catalog& catalog,
                              const ProductCritic& critic, const GenerationConfig& gen,
                              std::size_t samples, std::uint64_t seed, bool boost = false,
                              const std::function<ValidatedAttributes(const ProductRecord&)>&
                                  constraints = {});

struct FinetuneReport {
  EvalPoint pre, post;
  std::size_t steps_run = 0;
  bool early_stopped = false;
  std::vector<nlohmann::json> log;  // one object per step and per evaluation

  nlohmann::json summary_json() const;
  std::string to_jsonl() const;
};

using FinetuneCallback = std::function<void(const nlohmann::json& event)>;

FinetuneReport finetune(ConditionalLM& lm, const Catalog& catalog, const ProductCritic& critic,
                        const FinetuneConfig& cfg, const FinetuneCallback& on_event = {});

}  // namespace attrgen
