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

#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "json.hpp"

namespace attrgen {

using Tokens = std::vector<std::string>;

// Sentence BLEU up to order n, clipped counts, brevity penalty against the
// reference closest in length, no smoothing.
double bleu_n(const Tokens& candidate, const std::vector<Tokens>& references, int n);

// LCS F-measure with beta = 1.
double rouge_l(const Tokens& candidate, const Tokens& reference);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

// Exact-match METEOR: Fmean (alpha 0.9) times 1 - 0.5 (chunks/matches)^3,
// over the alignment with the most matches and, among those, fewest chunks.
double meteor_exact(const Tokens& candidate, const Tokens& reference);

struct Prediction {
  std::string product_id;
  Tokens description;
  std::optional<bool> accepted;
};

struct ContradictionResult {
  double rate = 0.0;
  std::vector<bool> flagged;
};

ContradictionResult contradiction_rate(const std::vector<Prediction>& predictions,
                                       const Catalog& catalog);

struct EvalRow {
  std::string product_id;
  double bleu2 = 0, bleu3 = 0, bleu4 = 0, rouge = 0, meteor = 0;
  bool contradictory = false;
  std::optional<bool> accepted;
};

struct EvalReport {
  double bleu2 = 0, bleu3 = 0, bleu4 = 0, rouge = 0, meteor = 0;
  double contradiction_rate = 0;
  std::optional<double> acceptance_rate;  // only when predictions carry the flag
  std::vector<EvalRow> rows;

  nlohmann::json summary_json() const;
  // One JSON object per row, then a summary object.
  std::string to_jsonl() const;
};

EvalReport evaluate(const std::vector<Prediction>& predictions, const Catalog& catalog);

struct ProportionTest {
  double p1 = 0, p2 = 0;
  double z = 0;
  double p_value = 1.0;  // one-sided, H1: p1 > p2
};

// Pooled two-proportion z-test.
ProportionTest two_proportion_test(std::size_t x1, std::size_t n1, std::size_t x2,
                                   std::size_t n2);

// Prediction file: one JSON object per line {product_id, description, accepted?}.
std::vector<Prediction> parse_predictions(const std::string& text);

}  // namespace attrgen
