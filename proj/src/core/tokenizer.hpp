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
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "json.hpp"

namespace attrgen {

// Word-level tokenizer. Ids 0..4 are the special tokens.
class Tokenizer {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kSep = 2;
  static constexpr int kPad = 3;
  static constexpr int kUnk = 4;
  static constexpr int kNumSpecials = 5;

  Tokenizer();
  explicit Tokenizer(std::vector<std::string> words);  // regular words, in id order

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;  // kUnk when unknown
  const std::string& token(int id) const;
  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<int> encode(const std::string& text) const;
  std::vector<std::string> decode_tokens(const std::vector<int>& ids) const;
  std::string decode(const std::vector<int>& ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);

  bool operator==(const Tokenizer& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Words of titles, descriptions and attribute terms ranked by frequency
// (ties alphabetical), keeping at most `max_vocab` regular words.
Tokenizer build_tokenizer(const Catalog& catalog, std::size_t max_vocab);

}  // namespace attrgen
