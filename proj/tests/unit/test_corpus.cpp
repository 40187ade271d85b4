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

#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"

using namespace attrgen;

namespace {

CatalogSpec one_class_spec() {
  CatalogSpec s = CatalogSpec::defaults();
  s.n_products = 1;
  s.classes = {{"material", {"cotton", "nylon"}, {}}};
  s.title_class = "material";
  s.templates = {"a {adj} piece made of {material} ."};
  s.rng_seed = 7;
  return s;
}

std::string nth_line_replaced(const std::string& text, std::size_t n, const std::string& with) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  for (std::size_t i = 1; std::getline(in, line); ++i) out << (i == n ? with : line) << '\n';
  return out.str();
}

}  // namespace

TEST_CASE("single-class catalog substitutes its sampled term") {
  const auto c = generate_catalog(one_class_spec());
  REQUIRE(c.products.size() == 1);
  const auto& p = c.products[0];
  REQUIRE(p.attributes[0]);
  const auto& d = p.description;
  CHECK(std::find(d.begin(), d.end(), *p.attributes[0]) != d.end());
}

TEST_CASE("generation is deterministic per seed") {
  const auto spec = one_class_spec();
  CHECK(catalog_to_string(generate_catalog(spec)) == catalog_to_string(generate_catalog(spec)));
  auto a = CatalogSpec::defaults();
  a.n_products = 30;
  auto b = a;
  b.rng_seed = a.rng_seed + 1;
  CHECK(catalog_to_string(generate_catalog(a)) != catalog_to_string(generate_catalog(b)));
}

TEST_CASE("invalid specs name the offending field") {
  auto s = one_class_spec();
  s.classes = {{"material", {"cotton"}, {}}};
  s.templates = {"made of {material} ."};
  try {
    generate_catalog(s);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kValidation);
    CHECK(std::string(e.what()).find("classes") != std::string::npos);
  }
  s = one_class_spec();
  s.embedding_dim = 0;
  CHECK_THROWS_WITH_AS(generate_catalog(s), doctest::Contains("embedding_dim"), Error);
  s = one_class_spec();
  s.noise_std = -1;
  CHECK_THROWS_AS(generate_catalog(s), Error);
}

TEST_CASE("default catalog invariants") {
  const auto c = fixture::catalog(200);
  CHECK(check_catalog(c).empty());
  std::size_t train = c.split(Split::kTrain).size(), val = c.split(Split::kVal).size(),
              test = c.split(Split::kTest).size();
  CHECK(train == 160);
  CHECK(val == 20);
  CHECK(test == 20);
  for (const auto& p : c.products) {
    CHECK(p.embedding.size() == c.embedding_dim);
    CHECK(p.description.size() >= 8);
    CHECK(p.description.size() <= 20);
    for (std::size_t k = 0; k < p.attributes.size(); ++k) {
      if (!p.attributes[k]) continue;
      CHECK(c.vocab.contains(k, *p.attributes[k]));
      CHECK(std::find(p.description.begin(), p.description.end(), *p.attributes[k]) !=
            p.description.end());
    }
    CHECK(count_contradictions(p.description, p.attributes, c.vocab) == 0);
  }
}

TEST_CASE("zero-noise embeddings are exact basis sums and separate attribute sets") {
  const auto c = fixture::catalog(120, 0.0);
  auto spec = CatalogSpec::defaults();
  const EmbeddingBasis basis(c.vocab, c.embedding_dim, spec.rng_seed);
  std::map<std::vector<double>, GroundTruthAttributes> seen;
  for (const auto& p : c.products) {
    CHECK(embed_image(p.attributes, c.vocab, basis, 0.0, 99) == p.embedding);
    auto [it, fresh] = seen.emplace(p.embedding, p.attributes);
    if (!fresh) CHECK(it->second == p.attributes);
  }
  GroundTruthAttributes only_cotton(c.vocab.num_classes());
  const auto k = c.vocab.require_class("material");
  only_cotton[k] = "cotton";
  CHECK(embed_image(only_cotton, c.vocab, basis, 0.0, 1) ==
        basis.vector_for(k, *c.vocab.term_index(k, "cotton")));
  only_cotton[k] = "silk-ish";
  CHECK_THROWS_AS(embed_image(only_cotton, c.vocab, basis, 0.0, 1), Error);
}

TEST_CASE("catalog save/load round-trip") {
  fixture::TempDir dir("corpus");
  const auto c = fixture::catalog(10);
  save_catalog(c, dir.file("c.jsonl"));
  CHECK(load_catalog(dir.file("c.jsonl")) == c);
}

TEST_CASE("malformed catalog lines report their line number") {
  const auto text = catalog_to_string(fixture::catalog(10));
  std::istringstream in(text);
  std::string line;
  for (int i = 0; i < 3; ++i) std::getline(in, line);
  const auto broken = nth_line_replaced(text, 3, line.substr(0, line.size() / 2));
  try {
    catalog_from_string(broken);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("records referencing unknown terms are a consistency error") {
  const auto text = catalog_to_string(fixture::catalog(5));
  std::istringstream in(text);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  auto j = nlohmann::json::parse(line);
  j["attributes"]["material"] = "kevlar";
  try {
    catalog_from_string(header + "\n" + j.dump() + "\n");
    FAIL("expected a consistency error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConsistency);
  }
}

TEST_CASE("split names round-trip") {
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) CHECK(parse_split(split_name(s)) == s);
  CHECK_THROWS_AS(parse_split("dev"), Error);
}
