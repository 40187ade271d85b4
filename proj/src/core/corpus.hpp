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
#include "json.hpp"

namespace attrgen {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct ProductRecord {
  std::string id;
  std::vector<std::string> title;
  std::vector<double> embedding;
  GroundTruthAttributes attributes;  // per class, optional
  std::vector<std::string> description;
  Split split = Split::kTrain;

  bool operator==(const ProductRecord&) const = default;
};

struct CatalogSpec {
  std::size_t n_products = 500;
  std::vector<AttributeClass> classes;
  std::size_t embedding_dim = 32;
  double noise_std = 0.1;
  // Slots are written {class-name} or {adj}; an absent attribute drops its slot.
  std::vector<std::string> templates;
  std::vector<std::string> adjectives;
  std::vector<std::string> brands;
  double presence_prob = 1.0;  // per non-title class
  std::string title_class = "category";
  std::uint64_t rng_seed = 7;

  static CatalogSpec defaults();
  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys fall back to defaults().
  static CatalogSpec from_json(const nlohmann::json& j);
};

struct Catalog {
  AttributeVocabulary vocab;
  std::size_t embedding_dim = 0;
  std::vector<ProductRecord> products;

  const ProductRecord& find(const std::string& id) const;
  const ProductRecord* try_find(const std::string& id) const;
  std::vector<const ProductRecord*> split(Split s) const;
  bool operator==(const Catalog& other) const {
    return vocab == other.vocab && embedding_dim == other.embedding_dim &&
           products == other.products;
  }
};

// Unit-norm random direction per attribute term, fixed by the catalog seed.
class EmbeddingBasis {
 public:
  EmbeddingBasis(const AttributeVocabulary& vocab, std::size_t dim, std::uint64_t seed);
  const std::vector<double>& vector_for(std::size_t k, std::size_t term) const {
    return basis_.at(k).at(term);
  }
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_;
  std::vector<std::vector<std::vector<double>>> basis_;
};

// Sum of basis vectors of the present attributes plus N(0, noise_std^2) noise
// drawn from `noise_seed`.
std::vector<double> embed_image(const GroundTruthAttributes& attributes,
                                const AttributeVocabulary& vocab,
                                const EmbeddingBasis& basis, double noise_std,
                                std::uint64_t noise_seed);

Catalog generate_catalog(const CatalogSpec& spec);

std::string catalog_to_string(const Catalog& catalog);
Catalog catalog_from_string(const std::string& text);
void save_catalog(const Catalog& catalog, const std::string& path);
Catalog load_catalog(const std::string& path);

// Checks record invariants beyond what loading enforces; returns one message
// per violation (empty when the catalog is consistent).
std::vector<std::string> check_catalog(const Catalog& catalog);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace attrgen
