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

#include "attrvocab.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "common.hpp"

namespace attrgen {

AttributeVocabulary::AttributeVocabulary(std::vector<AttributeClass> classes)
    : classes_(std::move(classes)) {
  std::set<std::string> names;
  for (auto& c : classes_) {
    c.name = trim(c.name);
    if (c.name.empty()) fail(ErrorCode::kValidation, "attribute class with empty name");
    if (!names.insert(c.name).second) {
      fail(ErrorCode::kValidation, "duplicate attribute class '" + c.name + "'");
    }
    if (c.terms.empty()) {
      fail(ErrorCode::kValidation, "attribute class '" + c.name + "' has no terms");
    }
    std::set<std::string> seen;
    for (auto& t : c.terms) {
      t = to_lower(trim(t));
      if (t.empty() || t.find(' ') != std::string::npos) {
        fail(ErrorCode::kValidation,
             "class '" + c.name + "': terms must be single non-empty words");
      }
      if (!seen.insert(t).second) {
        fail(ErrorCode::kValidation,
             "class '" + c.name + "': duplicate term '" + t + "'");
      }
    }
    std::map<std::string, std::string> lowered;
    for (const auto& [surface, canonical] : c.aliases) {
      const auto target = to_lower(trim(canonical));
      if (!seen.count(target)) {
        fail(ErrorCode::kValidation, "class '" + c.name + "': alias '" + surface +
                                         "' targets unknown term '" + target + "'");
      }
      lowered[to_lower(trim(surface))] = target;
    }
    c.aliases = std::move(lowered);
  }
  rebuild_index();
}

void AttributeVocabulary::rebuild_index() {
  surface_to_canonical_.clear();
  term_classes_.clear();
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    for (const auto& t : classes_[k].terms) {
      surface_to_canonical_[t] = t;
      term_classes_[t].push_back(k);
    }
  }
  // Aliases never shadow a canonical term.
  for (const auto& c : classes_) {
    for (const auto& [surface, canonical] : c.aliases) {
      surface_to_canonical_.emplace(surface, canonical);
    }
  }
}

std::optional<std::size_t> AttributeVocabulary::class_index(std::string_view name) const {
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    if (classes_[k].name == name) return k;
  }
  return std::nullopt;
}

std::size_t AttributeVocabulary::require_class(std::string_view name) const {
  auto k = class_index(name);
  if (!k) fail(ErrorCode::kLookup, "unknown attribute class '" + std::string(name) + "'");
  return *k;
}

std::string AttributeVocabulary::normalize(std::string_view surface) const {
  std::string s = to_lower(trim(std::string(surface)));
  if (auto it = surface_to_canonical_.find(s); it != surface_to_canonical_.end()) {
    return it->second;
  }
  if (s.size() > 1 && s.back() == 's') {
    const std::string stem = s.substr(0, s.size() - 1);
    if (auto it = surface_to_canonical_.find(stem); it != surface_to_canonical_.end()) {
      return it->second;
    }
  }
  return s;
}

bool AttributeVocabulary::contains(std::size_t k, const std::string& canonical) const {
  return term_index(k, canonical).has_value();
}

std::optional<std::size_t> AttributeVocabulary::term_index(
    std::size_t k, const std::string& canonical) const {
  const auto& terms = classes_.at(k).terms;
  auto it = std::find(terms.begin(), terms.end(), canonical);
  if (it == terms.end()) return std::nullopt;
  return static_cast<std::size_t>(it - terms.begin());
}

const std::vector<std::size_t>& AttributeVocabulary::classes_of(
    const std::string& canonical) const {
  static const std::vector<std::size_t> kNone;
  auto it = term_classes_.find(canonical);
  return it == term_classes_.end() ? kNone : it->second;
}

std::size_t AttributeVocabulary::total_terms() const {
  std::size_t n = 0;
  for (const auto& c : classes_) n += c.terms.size();
  return n;
}

std::string AttributeVocabulary::to_text() const {
  std::ostringstream out;
  for (const auto& c : classes_) {
    out << c.name << ":";
    for (std::size_t i = 0; i < c.terms.size(); ++i) {
      out << (i ? ", " : " ") << c.terms[i];
      std::string sep = "=";
      for (const auto& [surface, canonical] : c.aliases) {
        if (canonical == c.terms[i]) {
          out << sep << surface;
          sep = "|";
        }
      }
    }
    out << "\n";
  }
  return out.str();
}

AttributeVocabulary AttributeVocabulary::from_text(const std::string& text) {
  std::vector<AttributeClass> classes;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError(lineno, "expected 'class: term, ...'");
    AttributeClass c;
    c.name = trim(line.substr(0, colon));
    std::istringstream terms(line.substr(colon + 1));
    std::string item;
    while (std::getline(terms, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      const auto eq = item.find('=');
      const std::string term = trim(item.substr(0, eq));
      c.terms.push_back(term);
      if (eq != std::string::npos) {
        std::istringstream aliases(item.substr(eq + 1));
        std::string alias;
        while (std::getline(aliases, alias, '|')) {
          alias = trim(alias);
          if (!alias.empty()) c.aliases[alias] = term;
        }
      }
    }
    classes.push_back(std::move(c));
  }
  return AttributeVocabulary(std::move(classes));
}

bool AttributeVocabulary::operator==(const AttributeVocabulary& other) const {
  if (classes_.size() != other.classes_.size()) return false;
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    const auto& a = classes_[k];
    const auto& b = other.classes_[k];
    if (a.name != b.name || a.terms != b.terms || a.aliases != b.aliases) return false;
  }
  return true;
}

ValidatedAttributes validate_attributes(const PredictedAttributes& predicted,
                                        const GroundTruthAttributes& truth,
                                        const AttributeVocabulary& vocab) {
  const std::size_t n = vocab.num_classes();
  if (predicted.size() != n || truth.size() != n) {
    fail(ErrorCode::kShape, "predicted and ground-truth attributes must cover every class");
  }
  ValidatedAttributes kept(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!predicted[k]) continue;
    const std::string v = vocab.normalize(predicted[k]->term);
    if (!truth[k] || v == vocab.normalize(*truth[k])) {
      kept[k] = AttributePrediction{v, predicted[k]->confidence};
    }
  }
  return kept;
}

void SimilarityConfig::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    fail(ErrorCode::kConfiguration, "similarity threshold must lie in (0, 1]");
  }
  if (mode == SimilarityMode::kEmbedding && !embeddings) {
    fail(ErrorCode::kConfiguration, "embedding similarity requires an embedding table");
  }
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

}  // namespace

int sigma(std::string_view token, std::size_t k, const std::string& term,
          const AttributeVocabulary& vocab, const SimilarityConfig& cfg) {
  const auto& cls = vocab.at(k);
  if (cfg.mode == SimilarityMode::kNormalizedExact) {
    const std::string c = vocab.normalize(token);
    if (c == term) return 1;
    return vocab.contains(k, c) ? -1 : 0;
  }
  if (!cfg.embeddings) {
    fail(ErrorCode::kConfiguration, "embedding similarity requires an embedding table");
  }
  const auto& table = *cfg.embeddings;
  auto tok = table.find(to_lower(std::string(token)));
  if (tok == table.end()) return 0;
  auto similar = [&](const std::string& t) {
    auto it = table.find(t);
    return it != table.end() && cosine(tok->second, it->second) >= cfg.threshold;
  };
  if (similar(term)) return 1;
  for (const auto& other : cls.terms) {
    if (other != term && similar(other)) return -1;
  }
  return 0;
}

std::size_t count_contradictions(const std::vector<std::string>& tokens,
                                 const GroundTruthAttributes& truth,
                                 const AttributeVocabulary& vocab) {
  std::size_t n = 0;
  for (const auto& tok : tokens) {
    const std::string c = vocab.normalize(tok);
    for (std::size_t k : vocab.classes_of(c)) {
      if (k < truth.size() && truth[k] && vocab.normalize(*truth[k]) != c) {
        ++n;
        break;
      }
    }
  }
  return n;
}

}  // namespace attrgen
