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

#include "extractor.hpp"

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"

using namespace attrgen;

TEST_CASE("heads output distributions and predictions are in-vocabulary") {
  const auto c = fixture::catalog(40);
  const auto ex = make_extractor(c, ExtractorHyper{});
  for (const auto& p : c.products) {
    const auto dists = ex.distributions(p.embedding);
    REQUIRE(dists.size() == c.vocab.num_classes());
    for (std::size_t k = 0; k < dists.size(); ++k) {
      CHECK(dists[k].size() == c.vocab.at(k).terms.size());
      CHECK(std::accumulate(dists[k].begin(), dists[k].end(), 0.0) ==
            doctest::Approx(1.0).epsilon(1e-9));
    }
    for (std::size_t k = 0; k < c.vocab.num_classes(); ++k) {
      const auto pred = ex.predict(p.embedding, 0.0);
      REQUIRE(pred[k]);
      CHECK(c.vocab.contains(k, pred[k]->term));
      CHECK(std::isfinite(pred[k]->confidence));
    }
  }
}

TEST_CASE("zero-noise catalog is fit exactly") {
  const auto c = fixture::catalog(200, 0.0);
  ExtractorHyper h;
  auto ex = make_extractor(c, h);
  const auto r = train_extractor(ex, c, h);
  for (double a : r.train_accuracy) CHECK(a == 1.0);

  const auto k = c.vocab.require_class("material");
  for (const auto& p : c.products) {
    if (p.attributes[k] != "cotton") continue;
    const auto pred = ex.predict(p.embedding, 0.5);
    REQUIRE(pred[k]);
    CHECK(pred[k]->term == "cotton");
    CHECK(pred[k]->confidence >= 0.99);
    break;
  }
}

TEST_CASE("default noise beats chance on every class") {
  const auto c = fixture::catalog(300);
  ExtractorHyper h;
  h.epochs = 60;
  auto ex = make_extractor(c, h);
  const auto r = train_extractor(ex, c, h);
  for (std::size_t k = 0; k < c.vocab.num_classes(); ++k) {
    CHECK(r.val_accuracy[k] > 1.0 / static_cast<double>(c.vocab.at(k).terms.size()));
  }
}

TEST_CASE("lr = 0 leaves parameters and accuracy at their initial values") {
  const auto c = fixture::catalog(60);
  ExtractorHyper h;
  h.lr = 0;
  h.epochs = 1;
  auto one = make_extractor(c, h);
  const auto params = one.params();
  const auto r1 = train_extractor(one, c, h);
  h.epochs = 5;
  auto five = make_extractor(c, h);
  const auto r5 = train_extractor(five, c, h);
  CHECK(one.params() == params);
  CHECK(five.params() == params);
  CHECK(r1.train_accuracy == r5.train_accuracy);
}

TEST_CASE("confidence floor is monotone") {
  const auto c = fixture::catalog(60);
  ExtractorHyper h;
  h.epochs = 20;
  auto ex = make_extractor(c, h);
  train_extractor(ex, c, h);
  for (const auto& p : c.products) {
    std::size_t prev = c.vocab.num_classes() + 1;
    for (double floor : {0.0, 0.3, 0.6, 0.9, 0.99, 1.01}) {
      const auto pred = ex.predict(p.embedding, floor);
      const auto n = static_cast<std::size_t>(
          std::count_if(pred.begin(), pred.end(), [](const auto& x) { return x.has_value(); }));
      CHECK(n <= prev);
      prev = n;
    }
    CHECK(prev == 0);
    CHECK(ex.predict(p.embedding, 0.5) == ex.predict(p.embedding, 0.5));
  }
}

TEST_CASE("wrong embedding dimension is a shape error") {
  const auto c = fixture::catalog(20);
  const auto ex = make_extractor(c, ExtractorHyper{});
  try {
    ex.predict(std::vector<double>(c.embedding_dim + 1, 0.0), 0.5);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShape);
  }
}

TEST_CASE("a class with a single train label is degenerate") {
  auto c = fixture::catalog(30);
  const auto k = c.vocab.require_class("color");
  for (auto& p : c.products) p.attributes[k] = "red";
  ExtractorHyper h;
  auto ex = make_extractor(c, h);
  try {
    train_extractor(ex, c, h);
    FAIL("expected a degenerate-class error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerate);
  }
}

TEST_CASE("extractor checkpoint round-trip and determinism") {
  fixture::TempDir dir("ex");
  const auto c = fixture::catalog(50);
  ExtractorHyper h;
  h.epochs = 5;
  auto a = make_extractor(c, h), b = make_extractor(c, h);
  train_extractor(a, c, h);
  train_extractor(b, c, h);
  CHECK(a.params() == b.params());
  a.save(dir.file("ex.ckpt"));
  const auto back = AttributeExtractor::load(dir.file("ex.ckpt"));
  for (const auto& p : c.products) CHECK(back.predict(p.embedding, 0.5) == a.predict(p.embedding, 0.5));
  CHECK(ExtractorHyper::from_json(h.to_json()).to_json() == h.to_json());
}
