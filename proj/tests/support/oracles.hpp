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

// Reference implementations used only by tests. They are written from the
// definitions, share no code with src/, and favour obviousness over speed.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Tokens = std::vector<std::string>;

// BLEU-n: modified precisions by explicit n-gram enumeration, geometric mean
// as a plain product root, brevity penalty against the closest reference
// length (shorter wins ties). No smoothing.
double bleu(const Tokens& cand, const std::vector<Tokens>& refs, int n);

// ROUGE-L F1 with the LCS found by enumerating every subsequence of the
// shorter side. Exponential; keep inputs under ~16 tokens.
double rouge_l(const Tokens& cand, const Tokens& ref);

// A fixed set of 20 candidate/reference pairs mixing exact matches, partial
// overlaps, reorderings, repeats and disjoint vocabularies.
std::vector<std::pair<Tokens, Tokens>> metric_fixture();

// Central differences over `coords`; returns max |g - fd| / max(1e-8, |fd|).
double max_relative_error(std::vector<double>& params, const std::vector<double>& analytic,
                          const std::function<double()>& loss, const std::vector<std::size_t>& coords,
                          double eps);

// Attribute surface form whose canonical meaning is known by construction.
struct Surface {
  std::string text;
  std::string canonical;
};

// Every surface form the vocabulary maps onto `term`: the term itself, a
// capitalized copy, a plural, and declared aliases.
std::vector<Surface> surfaces_of(const std::string& term,
                                 const std::vector<std::pair<std::string, std::string>>& aliases);

// The attribute validation filter written over (class, predicted, truth) triples that
// already carry canonical meanings.
struct FilterInput {
  std::optional<Surface> predicted;
  double confidence = 1.0;
  std::optional<Surface> truth;
};
struct FilterOutput {
  std::optional<std::string> term;
  double confidence = 0.0;
};
std::vector<FilterOutput> brute_force_filter(const std::vector<FilterInput>& classes);

// Two-proportion z statistic computed from the textbook formula.
double pooled_z(double x1, double n1, double x2, double n2);

}  // namespace oracle
