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

#include <string>
#include <vector>

#include "corpus.hpp"
#include "decoder.hpp"
#include "extractor.hpp"
#include "lmcore.hpp"
#include "reward.hpp"

namespace attrgen {

struct PipelineOptions {
  GenerationConfig generation;
  double c_min = 0.5;
  bool use_ground_truth = true;  // validate predictions against catalog attributes
  bool filter = false;           // needs a reward model
};

struct PipelineResult {
  ValidatedAttributes attributes;  // A' used for boosting and filtering
  GenerationResult result;
  std::vector<std::string> words;
};

// Extract, validate, decode, and optionally filter one product's description.
PipelineResult generate_for_product(const ConditionalLM& lm, const AttributeExtractor& extractor,
                                    const RewardModel* reward, const ProductRecord& product,
                                    const AttributeVocabulary& vocab, const PipelineOptions& opts);

nlohmann::json attributes_to_json(const ValidatedAttributes& attrs, const AttributeVocabulary& vocab);

}  // namespace attrgen
