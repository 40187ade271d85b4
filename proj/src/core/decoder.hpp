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
#include "common.hpp"
#include "json.hpp"
#include "lmcore.hpp"

namespace attrgen {

struct GenerationConfig {
  std::size_t top_k = 40;
  double mu = 0.5;
  double temperature = 1.0;
  std::size_t max_len = 40;
  std::size_t max_retries = 3;
  std::uint64_t seed = 0;
  bool boost = true;
  SimilarityConfig similarity;

  void validate() const;
  nlohmann::json to_json() const;
  static GenerationConfig from_json(const nlohmann::json& j);
};

struct StepTrace {
  std::vector<int> candidates;
  std::vector<double> raw;       // p_theta over the candidates
  std::vector<double> delta;
  std::vector<double> adjusted;  // renormalized over the candidates
  int chosen = -1;
};

struct GenerationResult {
  std::vector<int> tokens;  // generated ids, including the final <eos> if sampled
  bool accepted = true;
  std::size_t attempts = 1;
  bool truncated = false;  // stopped by the context window
  double score = -1.0;     // reward score when filtered
  std::vector<StepTrace> trace;

  // Description words: tokens minus the trailing <eos>.
  std::vector<std::string> words(const Tokenizer& tok) const;
  bool ended() const;
};

// Boost multipliers for the candidate words: 1 + mu where the summed sigma
// over `attributes` is positive, 1 - mu where it is negative, 1 otherwise.
std::vector<double> delta(const std::vector<std::string>& candidates,
                          const ValidatedAttributes& attributes, const AttributeVocabulary& vocab,
                          double mu, const SimilarityConfig& similarity);

// raw * delta, renormalized over the candidate set.
std::vector<double> adjust_topk(const std::vector<double>& raw, const std::vector<double>& delta);

// Indices of the k largest probabilities, ties broken by lower index.
std::vector<int> top_k(const std::vector<double>& probs, std::size_t k);

// Draws an index from a normalized distribution with one uniform variate.
std::size_t sample_index(const std::vector<double>& probs, Rng& rng);

struct GenerationRequest {
  std::vector<double> image;
  std::vector<int> prefix;  // title ids + <sep>
  ValidatedAttributes attributes;
};

// Anything that can score one step: next-token logits for the sequence so
// far. Lets the sampler run on hand-built distributions as well as the LM.
class LogitSource {
 public:
  virtual ~LogitSource() = default;
  virtual std::vector<double> logits() const = 0;
  virtual bool push(int id) = 0;  // false when the context is full
  virtual const Tokenizer& tokenizer() const = 0;
};

GenerationResult generate(LogitSource& source, const ValidatedAttributes& attributes,
                          const AttributeVocabulary& vocab, const GenerationConfig& cfg);
GenerationResult generate(const ConditionalLM& lm, const GenerationRequest& request,
                          const AttributeVocabulary& vocab, const GenerationConfig& cfg);

struct Verdict {
  bool accepted = false;
  double score = 0.0;
};
using Critic = std::function<Verdict(const GenerationResult&)>;

// Regenerates on fresh seed substreams until the critic accepts, up to
// max(1, max_retries) attempts; otherwise returns the best-scoring candidate.
GenerationResult generate_filtered(const ConditionalLM& lm, const GenerationRequest& request,
                                   const AttributeVocabulary& vocab, const Critic& critic,
                                   const GenerationConfig& cfg);

nlohmann::json trace_to_json(const GenerationResult& result, const Tokenizer& tok);

}  // namespace attrgen
