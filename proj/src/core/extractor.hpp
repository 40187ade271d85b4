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
#include <string>
#include <vector>

#include "attrvocab.hpp"
#include "corpus.hpp"
#include "json.hpp"
#include "optimizer.hpp"

namespace attrgen {

struct ExtractorHyper {
  double lr = 0.5;
  std::size_t epochs = 200;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
  int hidden = 0;  // > 0 inserts one shared tanh layer
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double clip_norm = 0.0;

  nlohmann::json to_json() const;
  static ExtractorHyper from_json(const nlohmann::json& j);
};

// One softmax head per attribute class over standardized embeddings.
class AttributeExtractor {
 public:
  AttributeExtractor() = default;
  AttributeExtractor(AttributeVocabulary vocab, std::size_t dim, int hidden, std::uint64_t seed);

  const AttributeVocabulary& vocab() const { return vocab_; }
  std::size_t dim() const { return dim_; }

  void set_normalization(std::vector<double> mean, std::vector<double> stddev);

  // Per-class distributions over the class's terms.
  std::vector<std::vector<double>> distributions(const std::vector<double>& embedding) const;

  // Argmax term and its probability per class; classes whose confidence is
  // below `c_min` are left empty.
  PredictedAttributes predict(const std::vector<double>& embedding, double c_min) const;

  // Summed per-class cross-entropy over classes with ground truth.
  double loss(const std::vector<double>& embedding, const GroundTruthAttributes& truth,
              std::vector<double>* grad) const;

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  void save(const std::string& path) const;
  static AttributeExtractor load(const std::string& path);
  std::string to_bytes() const;
  static AttributeExtractor from_bytes(const std::string& bytes);

 private:
  std::vector<double> standardize(const std::vector<double>& e) const;
  std::size_t feature_dim() const { return hidden_ > 0 ? hidden_ : dim_; }

  AttributeVocabulary vocab_;
  std::size_t dim_ = 0;
  int hidden_ = 0;
  std::vector<double> mean_, stddev_;
  std::vector<std::size_t> head_offset_;
  std::vector<double> params_;
};

struct ExtractorReport {
  std::vector<double> train_accuracy;  // per class
  std::vector<double> val_accuracy;    // per class; NaN when the class has no val labels
  std::vector<double> epoch_loss;
};

ExtractorReport train_extractor(AttributeExtractor& extractor, const Catalog& catalog,
                                const ExtractorHyper& hyper);
AttributeExtractor make_extractor(const Catalog& catalog, const ExtractorHyper& hyper);

// Fraction of products whose argmax term matches the ground truth, per class.
std::vector<double> extractor_accuracy(const AttributeExtractor& extractor,
                                       const std::vector<const ProductRecord*>& products);

}  // namespace attrgen
