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

#include "pipeline.hpp"

namespace attrgen {

PipelineResult generate_for_product(const ConditionalLM& lm, const AttributeExtractor& extractor,
                                    const RewardModel* reward, const ProductRecord& product,
                                    const AttributeVocabulary& vocab, const PipelineOptions& opts) {
  if (opts.filter && !reward) fail(ErrorCode::kPrecondition, "filtering needs a reward model");
  PipelineResult out;
  const auto predicted = extractor.predict(product.embedding, opts.c_min);
  out.attributes = validate_attributes(
      predicted,
      opts.use_ground_truth ? product.attributes : GroundTruthAttributes(vocab.num_classes()),
      vocab);
  const GenerationRequest req{product.embedding, conditioning_prefix(lm.tokenizer(), product.title),
                              out.attributes};
  if (opts.filter) {
    const auto terms = attribute_terms(out.attributes);
    const Critic critic = [&](const GenerationResult& cand) {
      const auto s = reward->classify(product.embedding, product.title, terms,
                                      cand.words(lm.tokenizer()));
      return Verdict{s.c == 1, s.score};
    };
    out.result = generate_filtered(lm, req, vocab, critic, opts.generation);
  } else {
    out.result = generate(lm, req, vocab, opts.generation);
  }
  out.words = out.result.words(lm.tokenizer());
  return out;
}

nlohmann::json attributes_to_json(const ValidatedAttributes& attrs, const AttributeVocabulary& vocab) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t k = 0; k < attrs.size(); ++k) {
    if (attrs[k]) {
      out.push_back({{"class", vocab.at(k).name},
                     {"term", attrs[k]->term},
                     {"confidence", attrs[k]->confidence}});
    }
  }
  return out;
}

}  // namespace attrgen
