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
#include <optional>
#include <string>
#include <vector>

#include "attrvocab.hpp"
#include "corpus.hpp"
#include "json.hpp"
#include "optimizer.hpp"
#include "tokenizer.hpp"
#include "transformer.hpp"

namespace attrgen {

struct PreferenceDims {
  std::optional<bool> accurate;
  std::optional<bool> attractive;
  std::optional<bool> grammatical;
};

enum class LabelSource { kHuman, kOracle, kPhase1Negative };
const char* label_source_name(LabelSource s);
LabelSource parse_label_source(const std::string& name);

// How an external label file encodes preference.
enum class Polarity { kPreferredIsOne, kPreferredIsZero };
const char* polarity_name(Polarity p);
Polarity parse_polarity(const std::string& name);

// `label` always uses the internal convention: 1 = preferred.
struct PreferenceLabel {
  std::string product_id;
  std::vector<std::string> description;
  PreferenceDims dims;
  int label = 0;
  LabelSource source = LabelSource::kHuman;
  std::string generation_id;  // empty when the label is not tied to a stored generation

  nlohmann::json to_json() const;  // written with polarity preferred_is_1
  static PreferenceLabel from_json(const nlohmann::json& j);
};

// accurate && grammatical; empty when either dimension is missing.
std::optional<int> preference_from_dims(const PreferenceDims& dims);

// Labels with a full accurate/grammatical pair must agree with the derived C.
void check_label(const PreferenceLabel& label);

std::vector<PreferenceLabel> parse_labels(const std::string& text);
std::string labels_to_jsonl(const std::vector<PreferenceLabel>& labels);

struct RewardInput {
  std::vector<double> image;
  std::vector<int> tokens;
};

// image slot, title, <sep>, [attribute terms in class order, <sep>],
// description, <eos>. The classifier reads the <eos> position.
RewardInput encode_reward_input(const Tokenizer& tok, int context,
                                const std::vector<double>& image,
                                const std::vector<std::string>& title,
                                const std::optional<std::vector<std::string>>& attributes,
                                const std::vector<std::string>& description);

// Present terms of an attribute map, in class order.
std::vector<std::string> attribute_terms(const GroundTruthAttributes& attributes);
std::vector<std::string> attribute_terms(const ValidatedAttributes& attributes);

struct RewardScore {
  int c = 0;         // 1 iff score >= 0.5
  double score = 0;  // probability of the preferred class
};

class RewardModel {
 public:
  RewardModel() = default;
  RewardModel(Tokenizer tokenizer, const TransformerConfig& cfg, bool use_attributes,
              std::uint64_t seed);

  const Tokenizer& tokenizer() const { return tokenizer_; }
  const Transformer& net() const { return net_; }
  Transformer& net() { return net_; }
  bool use_attributes() const { return use_attributes_; }

  RewardInput encode(const std::vector<double>& image, const std::vector<std::string>& title,
                     const std::vector<std::string>& attribute_terms,
                     const std::vector<std::string>& description) const;
  RewardScore classify(const RewardInput& input) const;
  RewardScore classify(const std::vector<double>& image, const std::vector<std::string>& title,
                       const std::vector<std::string>& attribute_terms,
                       const std::vector<std::string>& description) const;

  void save(const std::string& path) const;
  static RewardModel load(const std::string& path);
  std::string to_bytes() const;
  static RewardModel from_bytes(const std::string& bytes);

 private:
  Tokenizer tokenizer_;
  Transformer net_;
  bool use_attributes_ = true;
};

struct RewardHyper {
  double lr = 0.001;
  std::size_t batch = 16;
  std::size_t phase1_epochs = 30;
  std::size_t phase2_epochs = 20;
  std::uint64_t seed = 1;
  double clip_norm = 1.0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  bool use_attributes = true;
  double holdout_fraction = 0.2;  // phase-2 labels held out for evaluation
  std::size_t max_vocab = 2000;
  int layers = 2;
  int width = 64;
  int heads = 4;
  int context = 64;
  std::size_t negatives_per_product = 8;  // pool size for phase-1 negative draws

  nlohmann::json to_json() const;
  static RewardHyper from_json(const nlohmann::json& j);
};

struct RewardExample {
  RewardInput input;
  int label = 0;
};

struct RewardReport {
  double phase1_train_accuracy = 0;
  double phase1_heldout_accuracy = 0;
  std::size_t phase1_train = 0, phase1_heldout = 0;
  std::optional<double> phase2_train_accuracy;
  std::optional<double> phase2_heldout_accuracy;
  std::size_t phase2_train = 0, phase2_heldout = 0;
  std::vector<std::string> phase2_train_products;  // data-flow log for split isolation
  std::vector<double> epoch_loss;

  nlohmann::json to_json() const;
};

// Reference descriptions (preferred) against descriptions of same-category
// products whose attributes contradict (not preferred). Train-split products
// feed the training set, val-split products the held-out set. Training
// negatives are redrawn from `train_pools` every epoch; `train` holds the
// first draw.
struct Phase1Data {
  std::vector<RewardExample> train, heldout;
  std::vector<RewardExample> train_positives;
  std::vector<std::vector<RewardExample>> train_pools;
};
Phase1Data phase1_examples(const RewardModel& model, const Catalog& catalog, std::uint64_t seed,
                           std::size_t pool_size = 8);

RewardModel make_reward_model(const Catalog& catalog, const RewardHyper& hyper);

// Starts the reward model from a language model's body: every parameter but
// the classifier head is copied. Architectures and vocabularies must match.
void init_reward_from_lm(RewardModel& reward, const Transformer& lm_net,
                         const Tokenizer& lm_tokenizer);

// Phase 1 on the catalog, then phase 2 on `labels` (may be empty) with the
// same optimizer settings. Labels on val-split products are always held out
// so phase 2 never trains on the phase-1 held-out products.
RewardReport train_reward(RewardModel& model, const Catalog& catalog,
                          const std::vector<PreferenceLabel>& labels, const RewardHyper& hyper);

double reward_accuracy(const RewardModel& model, const std::vector<RewardExample>& data);

// Reward input for a stored label: the product's ground-truth attributes
// stand in for the attribute segment.
RewardExample label_example(const RewardModel& model, const Catalog& catalog,
                            const PreferenceLabel& label);

}  // namespace attrgen
