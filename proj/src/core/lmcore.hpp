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

#include "attrvocab.hpp"
#include "corpus.hpp"
#include "optimizer.hpp"
#include "tokenizer.hpp"
#include "transformer.hpp"

namespace attrgen {

// image slot + title + <sep> + description + <eos>. `weights[p]` is nonzero
// exactly where position p predicts a description token or <eos>.
struct ConditioningSequence {
  std::vector<double> image;
  std::vector<int> tokens;
  std::vector<int> targets;
  std::vector<double> weights;
  int prefix_length = 0;  // title tokens + <sep>
};

std::vector<int> conditioning_prefix(const Tokenizer& tok, const std::vector<std::string>& title);

// Builds the teacher-forced sequence; description weights are 1/n so the
// weighted token loss is the mean cross-entropy over loss-masked positions.
ConditioningSequence make_conditioning_sequence(const Tokenizer& tok,
                                                const std::vector<double>& image,
                                                const std::vector<std::string>& title,
                                                const std::vector<int>& description_ids);
ConditioningSequence make_conditioning_sequence(const Tokenizer& tok, const ProductRecord& p);

// Incremental decoding over a cached forward pass.
class DecodeState {
 public:
  DecodeState(const Transformer& net, std::vector<double> image, std::vector<int> prefix);
  std::vector<double> logits() const;  // next-token logits
  void push(int id);
  int positions() const { return acts_.length; }
  bool full() const;  // no room for another token
  const std::vector<int>& tokens() const { return tokens_; }

 private:
  const Transformer* net_;
  std::vector<double> image_;
  std::vector<int> tokens_;
  Activations acts_;
};

class ConditionalLM {
 public:
  ConditionalLM() = default;
  ConditionalLM(Tokenizer tokenizer, const TransformerConfig& cfg, std::uint64_t seed);

  const Tokenizer& tokenizer() const { return tokenizer_; }
  const Transformer& net() const { return net_; }
  Transformer& net() { return net_; }

  // Logits for the position after `prefix` (title + <sep> + generated).
  std::vector<double> next_token_logits(const std::vector<double>& image,
                                        const std::vector<int>& prefix) const;
  DecodeState begin(const std::vector<double>& image, const std::vector<int>& prefix) const;

  std::shared_ptr<TokenEmbeddingTable> token_embeddings() const;

  void save(const std::string& path) const;
  static ConditionalLM load(const std::string& path);
  std::string to_bytes() const;
  static ConditionalLM from_bytes(const std::string& bytes);

 private:
  Tokenizer tokenizer_;
  Transformer net_;
};

struct LmHyper {
  double lr = 0.3;
  std::size_t batch = 8;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  double clip_norm = 1.0;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  std::size_t max_vocab = 2000;
  int layers = 2;
  int width = 64;
  int heads = 4;
  int context = 64;

  nlohmann::json to_json() const;
  static LmHyper from_json(const nlohmann::json& j);
};

struct LmTrainReport {
  std::vector<double> epoch_loss;  // mean per-sequence loss, at pre-update parameters
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// Builds the tokenizer and a freshly initialized model for the catalog.
ConditionalLM make_lm(const Catalog& catalog, const LmHyper& hyper);

// Teacher-forced training on the catalog's train split.
LmTrainReport train_lm(ConditionalLM& model, const Catalog& catalog, const LmHyper& hyper,
                       const EpochCallback& on_epoch = {});
LmTrainReport train_lm_on(ConditionalLM& model, const std::vector<const ProductRecord*>& products,
                          const LmHyper& hyper, const EpochCallback& on_epoch = {});

// -log softmax(X)[y].
double cross_entropy(const std::vector<double>& logits, int target);

// Loss functor evaluated by grad_check: returns the loss and accumulates the
// gradient when `grad` is non-null.
using LossFn = std::function<double(const Transformer&, std::vector<double>* grad)>;

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  double max_abs_grad = 0;
};

// Compares analytic gradients with central differences on `coordinates`
// randomly sampled parameters: max |g - g_fd| / max(1e-8, |g_fd|).
GradCheckResult grad_check(const Transformer& model, const LossFn& loss, double eps,
                           std::size_t coordinates, std::uint64_t seed);

}  // namespace attrgen
