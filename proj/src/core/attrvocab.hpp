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

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace attrgen {

struct AttributeClass {
  std::string name;
  std::vector<std::string> terms;                // canonical forms
  std::map<std::string, std::string> aliases;    // surface form -> canonical
};

// The attribute vocabulary together with the normalization map V().
class AttributeVocabulary {
 public:
  AttributeVocabulary() = default;
  explicit AttributeVocabulary(std::vector<AttributeClass> classes);

  const std::vector<AttributeClass>& classes() const { return classes_; }
  std::size_t num_classes() const { return classes_.size(); }
  const AttributeClass& at(std::size_t k) const { return classes_.at(k); }

  std::optional<std::size_t> class_index(std::string_view name) const;
  std::size_t require_class(std::string_view name) const;

  // V(): lowercase, resolve aliases, strip a trailing plural 's' when the
  // stem is known. Unknown terms pass through lowercased.
  std::string normalize(std::string_view surface) const;

  bool contains(std::size_t k, const std::string& canonical) const;
  std::optional<std::size_t> term_index(std::size_t k,
                                        const std::string& canonical) const;
  // Classes whose term set contains the canonical form.
  const std::vector<std::size_t>& classes_of(const std::string& canonical) const;

  std::size_t total_terms() const;

  // "class: term, term=alias|alias, ..." one class per line.
  std::string to_text() const;
  static AttributeVocabulary from_text(const std::string& text);

  bool operator==(const AttributeVocabulary& other) const;

 private:
  void rebuild_index();

  std::vector<AttributeClass> classes_;
  std::unordered_map<std::string, std::string> surface_to_canonical_;
  std::unordered_map<std::string, std::vector<std::size_t>> term_classes_;
};

struct AttributePrediction {
  std::string term;
  double confidence = 1.0;
  bool operator==(const AttributePrediction&) const = default;
};

// Indexed by class; an empty slot means "no prediction / no ground truth".
using PredictedAttributes = std::vector<std::optional<AttributePrediction>>;
using ValidatedAttributes = PredictedAttributes;
using GroundTruthAttributes = std::vector<std::optional<std::string>>;

// Attribute validation: class k survives iff the ground truth has no entry for
// k or the two terms normalize to the same vocabulary word. Surviving terms
// are returned in canonical form.
ValidatedAttributes validate_attributes(const PredictedAttributes& predicted,
                                        const GroundTruthAttributes& truth,
                                        const AttributeVocabulary& vocab);

enum class SimilarityMode { kNormalizedExact, kEmbedding };

using TokenEmbeddingTable = std::unordered_map<std::string, std::vector<double>>;

struct SimilarityConfig {
  SimilarityMode mode = SimilarityMode::kNormalizedExact;
  double threshold = 0.8;  // cosine threshold, embedding mode only
  std::shared_ptr<const TokenEmbeddingTable> embeddings;

  void validate() const;
};

// Relation between a token and attribute `term` of class `k`:
// +1 the token is the attribute, -1 it is a rival term of the same class,
// 0 it is not a term of the class.
int sigma(std::string_view token, std::size_t k, const std::string& term,
          const AttributeVocabulary& vocab, const SimilarityConfig& cfg);

// Tokens that name a term of some class k other than truth[k] (classes
// without ground truth are skipped). Normalized-exact matching.
std::size_t count_contradictions(const std::vector<std::string>& tokens,
                                 const GroundTruthAttributes& truth,
                                 const AttributeVocabulary& vocab);

}  // namespace attrgen
