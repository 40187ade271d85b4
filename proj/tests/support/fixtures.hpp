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

#include <unistd.h>

#include <filesystem>
#include <string>

#include "common.hpp"
#include "corpus.hpp"
#include "lmcore.hpp"

namespace fixture {

inline attrgen::AttributeVocabulary vocab(std::vector<attrgen::AttributeClass> classes) {
  return attrgen::AttributeVocabulary(std::move(classes));
}

inline attrgen::AttributeVocabulary material_color() {
  return attrgen::AttributeVocabulary({
      {"material", {"cotton", "nylon", "polyester"}, {}},
      {"color", {"red", "blue", "grey"}, {{"gray", "grey"}}},
      {"pattern", {"stripe", "dot"}, {{"striped", "stripe"}}},
  });
}

inline attrgen::Catalog catalog(std::size_t n, double noise = 0.1, std::uint64_t seed = 7) {
  auto spec = attrgen::CatalogSpec::defaults();
  spec.n_products = n;
  spec.noise_std = noise;
  spec.rng_seed = seed;
  return attrgen::generate_catalog(spec);
}

inline attrgen::LmHyper tiny_lm(std::size_t epochs = 1) {
  attrgen::LmHyper h;
  h.layers = 1;
  h.width = 16;
  h.heads = 2;
  h.epochs = epochs;
  return h;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("attrgen-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
