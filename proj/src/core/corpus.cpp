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

#include "corpus.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "common.hpp"

namespace attrgen {

using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kInvalidArgument, "unknown split '" + name + "'");
}

CatalogSpec CatalogSpec::defaults() {
  CatalogSpec s;
  s.classes = {
      {"category", {"dress", "jacket", "shirt", "skirt", "sweater", "coat", "blouse", "pants"}, {}},
      {"color", {"black", "white", "red", "blue", "green", "navy", "pink", "grey", "beige", "yellow"},
       {{"gray", "grey"}}},
      {"material", {"cotton", "nylon", "polyester", "silk", "wool", "linen", "denim", "leather"}, {}},
      {"pattern", {"stripe", "floral", "plaid", "solid", "check", "paisley", "geometric", "dot"},
       {{"striped", "stripe"}, {"dotted", "dot"}}},
  };
  s.templates = {
      "this {adj} {color} {category} is cut from {material} with a {pattern} finish .",
      "a {adj} {category} in {color} {material} featuring a {adj} {pattern} design .",
      "crafted from {adj} {material} , this {color} {category} shows a {pattern} motif .",
      "the {category} comes in {color} with {pattern} detailing and a {adj} {material} feel .",
      "a {adj} {pattern} {category} made of {color} {material} for a {adj} everyday look .",
      "our {color} {material} {category} pairs a {pattern} print with a {adj} {adj} silhouette .",
  };
  s.adjectives = {"soft", "elegant", "classic", "relaxed", "modern", "lightweight",
                  "cozy", "breathable", "tailored", "timeless", "versatile", "chic"};
  s.brands = {"acme", "nordic", "urban", "vela", "kinto", "maren", "atlas", "orchid"};
  return s;
}

void CatalogSpec::validate() const {
  if (n_products == 0) fail(ErrorCode::kValidation, "n_products: must be at least 1");
  if (embedding_dim == 0) fail(ErrorCode::kValidation, "embedding_dim: must be at least 1");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
    fail(ErrorCode::kValidation, "noise_std: must be a finite nonnegative number");
  }
  if (!(presence_prob >= 0.0 && presence_prob <= 1.0)) {
    fail(ErrorCode::kValidation, "presence_prob: must lie in [0, 1]");
  }
  if (classes.empty()) fail(ErrorCode::kValidation, "classes: at least one class required");
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (classes[k].terms.size() < 2) {
      fail(ErrorCode::kValidation, "classes[" + std::to_string(k) + "] (" + classes[k].name +
                                       ").terms: every class needs at least 2 terms");
    }
  }
  if (templates.empty()) fail(ErrorCode::kValidation, "templates: at least one template required");
  for (const auto& t : templates) {
    for (const auto& c : classes) {
      if (t.find("{" + c.name + "}") == std::string::npos) {
        fail(ErrorCode::kValidation,
             "templates: template lacks a {" + c.name + "} slot: '" + t + "'");
      }
    }
    if (t.find("{adj}") != std::string::npos && adjectives.empty()) {
      fail(ErrorCode::kValidation, "adjectives: templates use {adj} but no adjectives are given");
    }
  }
  if (brands.empty()) fail(ErrorCode::kValidation, "brands: at least one brand required");
  // Building the vocabulary checks term uniqueness and naming.
  AttributeVocabulary vocab(classes);
  for (const auto& a : adjectives) {
    if (!vocab.classes_of(vocab.normalize(a)).empty()) {
      fail(ErrorCode::kValidation, "adjectives: '" + a + "' collides with an attribute term");
    }
  }
}

json CatalogSpec::to_json() const {
  json cls = json::array();
  for (const auto& c : classes) {
    cls.push_back({{"name", c.name}, {"terms", c.terms}, {"aliases", c.aliases}});
  }
  return {{"n_products", n_products}, {"classes", cls},       {"embedding_dim", embedding_dim},
          {"noise_std", noise_std},   {"templates", templates}, {"adjectives", adjectives},
          {"brands", brands},         {"presence_prob", presence_prob},
          {"title_class", title_class}, {"rng_seed", rng_seed}};
}

CatalogSpec CatalogSpec::from_json(const json& j) {
  CatalogSpec s = defaults();
  try {
    if (j.contains("n_products")) s.n_products = j.at("n_products").get<std::size_t>();
    if (j.contains("embedding_dim")) s.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    if (j.contains("noise_std")) s.noise_std = j.at("noise_std").get<double>();
    if (j.contains("presence_prob")) s.presence_prob = j.at("presence_prob").get<double>();
    if (j.contains("rng_seed")) s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    if (j.contains("title_class")) s.title_class = j.at("title_class").get<std::string>();
    if (j.contains("templates")) s.templates = j.at("templates").get<std::vector<std::string>>();
    if (j.contains("adjectives")) s.adjectives = j.at("adjectives").get<std::vector<std::string>>();
    if (j.contains("brands")) s.brands = j.at("brands").get<std::vector<std::string>>();
    if (j.contains("classes")) {
      s.classes.clear();
      for (const auto& c : j.at("classes")) {
        AttributeClass ac;
        ac.name = c.at("name").get<std::string>();
        ac.terms = c.at("terms").get<std::vector<std::string>>();
        if (c.contains("aliases")) {
          ac.aliases = c.at("aliases").get<std::map<std::string, std::string>>();
        }
        s.classes.push_back(std::move(ac));
      }
      // A custom class list without custom templates gets one generic template.
      if (!j.contains("templates")) {
        std::string t = "a {adj}";
        for (const auto& c : s.classes) t += " {" + c.name + "}";
        t += " piece .";
        s.templates = {t};
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kValidation, std::string("catalog spec: ") + e.what());
  }
  return s;
}

const ProductRecord* Catalog::try_find(const std::string& id) const {
  for (const auto& p : products) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

const ProductRecord& Catalog::find(const std::string& id) const {
  const auto* p = try_find(id);
  if (!p) fail(ErrorCode::kNotFound, "unknown product '" + id + "'");
  return *p;
}

std::vector<const ProductRecord*> Catalog::split(Split s) const {
  std::vector<const ProductRecord*> out;
  for (const auto& p : products) {
    if (p.split == s) out.push_back(&p);
  }
  return out;
}

EmbeddingBasis::EmbeddingBasis(const AttributeVocabulary& vocab, std::size_t dim,
                               std::uint64_t seed)
    : dim_(dim) {
  Rng rng(mix_seed(seed, 0xba515));
  basis_.resize(vocab.num_classes());
  for (std::size_t k = 0; k < vocab.num_classes(); ++k) {
    for (std::size_t t = 0; t < vocab.at(k).terms.size(); ++t) {
      std::vector<double> v(dim);
      double norm = 0;
      for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (auto& x : v) x /= norm;
      basis_[k].push_back(std::move(v));
    }
  }
}

std::vector<double> embed_image(const GroundTruthAttributes& attributes,
                                const AttributeVocabulary& vocab,
                                const EmbeddingBasis& basis, double noise_std,
                                std::uint64_t noise_seed) {
  if (attributes.size() != vocab.num_classes()) {
    fail(ErrorCode::kShape, "attribute map does not cover the vocabulary's classes");
  }
  std::vector<double> e(basis.dim(), 0.0);
  for (std::size_t k = 0; k < attributes.size(); ++k) {
    if (!attributes[k]) continue;
    const auto idx = vocab.term_index(k, vocab.normalize(*attributes[k]));
    if (!idx) {
      fail(ErrorCode::kLookup, "term '" + *attributes[k] + "' is not in class '" +
                                   vocab.at(k).name + "'");
    }
    const auto& b = basis.vector_for(k, *idx);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += b[i];
  }
  if (noise_std > 0) {
    Rng rng(noise_seed);
    for (auto& x : e) x += noise_std * rng.normal();
  }
  return e;
}

namespace {

std::vector<std::string> realize_template(const std::string& tmpl,
                                          const AttributeVocabulary& vocab,
                                          const GroundTruthAttributes& attrs,
                                          const std::vector<std::string>& adjectives, Rng& rng) {
  std::vector<std::string> out;
  std::set<std::string> used_adj;
  for (const auto& tok : split_whitespace(tmpl)) {
    if (tok.size() > 2 && tok.front() == '{' && tok.back() == '}') {
      const std::string slot = tok.substr(1, tok.size() - 2);
      if (slot == "adj") {
        // Distinct adjectives within one description.
        std::string a;
        do {
          a = adjectives[rng.below(adjectives.size())];
        } while (used_adj.count(a) && used_adj.size() < adjectives.size());
        used_adj.insert(a);
        out.push_back(a);
        continue;
      }
      const auto k = vocab.class_index(slot);
      if (!k) fail(ErrorCode::kValidation, "templates: unknown slot {" + slot + "}");
      if (attrs[*k]) out.push_back(*attrs[*k]);
      continue;
    }
    out.push_back(tok);
  }
  return out;
}

}  // namespace

Catalog generate_catalog(const CatalogSpec& spec) {
  spec.validate();
  Catalog cat;
  cat.vocab = AttributeVocabulary(spec.classes);
  cat.embedding_dim = spec.embedding_dim;
  const EmbeddingBasis basis(cat.vocab, spec.embedding_dim, spec.rng_seed);
  const auto title_k = cat.vocab.class_index(spec.title_class);

  Rng rng(spec.rng_seed);
  const std::size_t n = spec.n_products;
  const int width = static_cast<int>(std::to_string(n).size());
  for (std::size_t i = 0; i < n; ++i) {
    ProductRecord p;
    std::ostringstream id;
    id << "p" << std::setw(std::max(4, width)) << std::setfill('0') << i;
    p.id = id.str();
    p.attributes.resize(cat.vocab.num_classes());
    for (std::size_t k = 0; k < cat.vocab.num_classes(); ++k) {
      const bool always = title_k && *title_k == k;
      if (always || rng.uniform() < spec.presence_prob) {
        const auto& terms = cat.vocab.at(k).terms;
        p.attributes[k] = terms[rng.below(terms.size())];
      }
    }
    p.title.push_back(spec.brands[rng.below(spec.brands.size())]);
    if (title_k) p.title.push_back(*p.attributes[*title_k]);
    const auto& tmpl = spec.templates[rng.below(spec.templates.size())];
    p.description = realize_template(tmpl, cat.vocab, p.attributes, spec.adjectives, rng);
    p.embedding = embed_image(p.attributes, cat.vocab, basis, spec.noise_std,
                              mix_seed(spec.rng_seed, 0x10000 + i));
    cat.products.push_back(std::move(p));
  }

  // 80/10/10 over a seeded permutation.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng split_rng(mix_seed(spec.rng_seed, 0x5b117));
  split_rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  for (std::size_t r = 0; r < n; ++r) {
    auto& p = cat.products[order[r]];
    p.split = r < n_train ? Split::kTrain : (r < n_train + n_val ? Split::kVal : Split::kTest);
  }
  return cat;
}

namespace {

constexpr const char* kCatalogFormat = "attrgen-catalog";
constexpr int kCatalogVersion = 1;

json vocab_to_json(const AttributeVocabulary& vocab) {
  json cls = json::array();
  for (const auto& c : vocab.classes()) {
    cls.push_back({{"name", c.name}, {"terms", c.terms}, {"aliases", c.aliases}});
  }
  return cls;
}

}  // namespace

std::string catalog_to_string(const Catalog& catalog) {
  std::string out;
  json header = {{"format", kCatalogFormat},
                 {"version", kCatalogVersion},
                 {"embedding_dim", catalog.embedding_dim},
                 {"vocabulary", vocab_to_json(catalog.vocab)}};
  out += header.dump() + "\n";
  for (const auto& p : catalog.products) {
    json attrs = json::object();
    for (std::size_t k = 0; k < p.attributes.size(); ++k) {
      if (p.attributes[k]) attrs[catalog.vocab.at(k).name] = *p.attributes[k];
    }
    json rec = {{"id", p.id},
                {"title", join(p.title)},
                {"embedding", p.embedding},
                {"attributes", attrs},
                {"description", join(p.description)},
                {"split", split_name(p.split)}};
    out += rec.dump() + "\n";
  }
  return out;
}

Catalog catalog_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  Catalog cat;
  bool have_header = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("malformed record: ") + e.what());
    }
    if (!have_header) {
      try {
        if (j.value("format", "") != kCatalogFormat) {
          throw ParseError(lineno, "missing catalog header");
        }
        if (j.at("version").get<int>() != kCatalogVersion) {
          throw ParseError(lineno, "unsupported catalog version");
        }
        cat.embedding_dim = j.at("embedding_dim").get<std::size_t>();
        std::vector<AttributeClass> classes;
        for (const auto& c : j.at("vocabulary")) {
          AttributeClass ac;
          ac.name = c.at("name").get<std::string>();
          ac.terms = c.at("terms").get<std::vector<std::string>>();
          if (c.contains("aliases")) {
            ac.aliases = c.at("aliases").get<std::map<std::string, std::string>>();
          }
          classes.push_back(std::move(ac));
        }
        cat.vocab = AttributeVocabulary(std::move(classes));
      } catch (const json::exception& e) {
        throw ParseError(lineno, std::string("bad header: ") + e.what());
      } catch (const ParseError&) {
        throw;
      } catch (const Error& e) {
        throw ParseError(lineno, std::string("bad vocabulary: ") + e.what());
      }
      have_header = true;
      continue;
    }
    ProductRecord p;
    try {
      p.id = j.at("id").get<std::string>();
      p.title = split_whitespace(j.at("title").get<std::string>());
      p.embedding = j.at("embedding").get<std::vector<double>>();
      p.description = split_whitespace(j.at("description").get<std::string>());
      p.split = parse_split(j.at("split").get<std::string>());
      p.attributes.resize(cat.vocab.num_classes());
      for (const auto& [cls, term] : j.at("attributes").items()) {
        const auto k = cat.vocab.class_index(cls);
        if (!k) {
          fail(ErrorCode::kConsistency, "line " + std::to_string(lineno) +
                                            ": unknown attribute class '" + cls + "'");
        }
        const auto t = term.get<std::string>();
        if (!cat.vocab.contains(*k, t)) {
          fail(ErrorCode::kConsistency, "line " + std::to_string(lineno) + ": term '" + t +
                                            "' is not in class '" + cls + "'");
        }
        p.attributes[*k] = t;
      }
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("malformed record: ") + e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConsistency) throw;
      throw ParseError(lineno, e.what());
    }
    if (p.embedding.size() != cat.embedding_dim) {
      fail(ErrorCode::kConsistency, "line " + std::to_string(lineno) +
                                        ": embedding dimension does not match header");
    }
    if (!ids.insert(p.id).second) {
      fail(ErrorCode::kConsistency, "line " + std::to_string(lineno) + ": duplicate id " + p.id);
    }
    cat.products.push_back(std::move(p));
  }
  if (!have_header) throw ParseError(1, "empty catalog file");
  return cat;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  out << content;
  if (!out) fail(ErrorCode::kIo, "write to '" + path + "' failed");
}

void save_catalog(const Catalog& catalog, const std::string& path) {
  write_file(path, catalog_to_string(catalog));
}

Catalog load_catalog(const std::string& path) { return catalog_from_string(read_file(path)); }

std::vector<std::string> check_catalog(const Catalog& catalog) {
  std::vector<std::string> problems;
  for (const auto& p : catalog.products) {
    if (p.embedding.size() != catalog.embedding_dim) {
      problems.push_back(p.id + ": embedding has wrong dimension");
    }
    for (double x : p.embedding) {
      if (!std::isfinite(x)) {
        problems.push_back(p.id + ": non-finite embedding component");
        break;
      }
    }
    for (std::size_t k = 0; k < p.attributes.size(); ++k) {
      if (!p.attributes[k]) continue;
      bool mentioned = false;
      for (const auto& tok : p.description) {
        mentioned = mentioned || catalog.vocab.normalize(tok) == *p.attributes[k];
      }
      if (!mentioned) {
        problems.push_back(p.id + ": description does not mention '" + *p.attributes[k] + "'");
      }
    }
    if (count_contradictions(p.description, p.attributes, catalog.vocab) > 0) {
      problems.push_back(p.id + ": description contradicts its attributes");
    }
    if (p.description.empty()) problems.push_back(p.id + ": empty description");
  }
  return problems;
}

}  // namespace attrgen
