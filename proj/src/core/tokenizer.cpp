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

#include "tokenizer.hpp"

#include <algorithm>
#include <map>

#include "common.hpp"

namespace attrgen {

namespace {
const std::vector<std::string> kSpecials = {"<bos>", "<eos>", "<sep>", "<pad>", "<unk>"};
}

Tokenizer::Tokenizer() : Tokenizer(std::vector<std::string>{}) {}

Tokenizer::Tokenizer(std::vector<std::string> words) : tokens_(kSpecials) {
  for (auto& w : words) {
    if (std::find(kSpecials.begin(), kSpecials.end(), w) != kSpecials.end()) continue;
    tokens_.push_back(std::move(w));
  }
  for (int i = 0; i < size(); ++i) {
    if (!ids_.emplace(tokens_[i], i).second) {
      fail(ErrorCode::kValidation, "duplicate token '" + tokens_[i] + "'");
    }
  }
}

int Tokenizer::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || id >= size()) fail(ErrorCode::kIndex, "token id out of range");
  return tokens_[id];
}

std::vector<int> Tokenizer::encode(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  return encode(split_whitespace(text));
}

std::vector<std::string> Tokenizer::decode_tokens(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  return join(decode_tokens(ids));
}

nlohmann::json Tokenizer::to_json() const {
  return std::vector<std::string>(tokens_.begin() + kNumSpecials, tokens_.end());
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  return Tokenizer(j.get<std::vector<std::string>>());
}

Tokenizer build_tokenizer(const Catalog& catalog, std::size_t max_vocab) {
  if (catalog.products.empty()) {
    fail(ErrorCode::kPrecondition, "cannot build a tokenizer from an empty catalog");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& p : catalog.products) {
    for (const auto& w : p.title) ++counts[w];
    for (const auto& w : p.description) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (const auto& [w, c] : ranked) {
    if (words.size() >= max_vocab) break;
    words.push_back(w);
  }
  return Tokenizer(std::move(words));
}

}  // namespace attrgen
