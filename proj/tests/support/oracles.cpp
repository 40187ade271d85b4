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

#include "oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

namespace oracle {

namespace {

std::vector<Tokens> ngrams(const Tokens& t, int n) {
  std::vector<Tokens> out;
  for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) {
    out.emplace_back(t.begin() + i, t.begin() + i + n);
  }
  return out;
}

int occurrences(const std::vector<Tokens>& grams, const Tokens& g) {
  int c = 0;
  for (const auto& x : grams) c += x == g ? 1 : 0;
  return c;
}

bool is_subsequence(const Tokens& sub, const Tokens& seq) {
  std::size_t j = 0;
  for (std::size_t i = 0; i < seq.size() && j < sub.size(); ++i) {
    if (seq[i] == sub[j]) ++j;
  }
  return j == sub.size();
}

Tokens words(const char* s) {
  Tokens out;
  std::string cur;
  for (const char* p = s; *p; ++p) {
    if (*p == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += *p;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

double bleu(const Tokens& cand, const std::vector<Tokens>& refs, int n) {
  double product = 1.0;
  for (int m = 1; m <= n; ++m) {
    const auto cg = ngrams(cand, m);
    if (cg.empty()) return 0.0;
    // Each distinct candidate n-gram counted once, clipped by its best reference.
    std::vector<Tokens> seen;
    int clipped = 0;
    for (const auto& g : cg) {
      if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
      seen.push_back(g);
      int best = 0;
      for (const auto& r : refs) best = std::max(best, occurrences(ngrams(r, m), g));
      clipped += std::min(occurrences(cg, g), best);
    }
    product *= static_cast<double>(clipped) / static_cast<double>(cg.size());
  }
  if (product == 0.0) return 0.0;
  const double c = static_cast<double>(cand.size());
  double r = -1;
  for (const auto& ref : refs) {
    const double len = static_cast<double>(ref.size());
    if (r < 0 || std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r)) {
      r = len;
    }
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::pow(product, 1.0 / n);
}

double rouge_l(const Tokens& cand, const Tokens& ref) {
  const Tokens& a = cand.size() <= ref.size() ? cand : ref;
  const Tokens& b = cand.size() <= ref.size() ? ref : cand;
  std::size_t best = 0;
  const std::size_t n = a.size();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) sub.push_back(a[i]);
    }
    if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
  }
  if (best == 0) return 0.0;
  const double p = static_cast<double>(best) / static_cast<double>(cand.size());
  const double r = static_cast<double>(best) / static_cast<double>(ref.size());
  return 2 * p * r / (p + r);
}

std::vector<std::pair<Tokens, Tokens>> metric_fixture() {
  const char* pairs[20][2] = {
      {"a b c d", "a b c e"},
      {"a b c d", "a c b d"},
      {"the red cotton dress", "the red cotton dress"},
      {"a soft blue shirt made of linen", "a blue linen shirt that feels soft"},
      {"x y z", "a b c"},
      {"the the the the", "the cat is on the mat"},
      {"a b a b a b", "a b a b"},
      {"cotton", "cotton dress in red"},
      {"this black wool coat has a plaid finish", "this black wool coat is cut with a plaid finish"},
      {"red red red dress", "red dress"},
      {"a b c d e f g h", "h g f e d c b a"},
      {"one two three four five", "one two three four five six seven"},
      {"soft silk blouse with floral motif", "floral silk blouse soft motif with"},
      {"a a b b c c", "a b c a b c"},
      {"we like striped skirts", "striped skirts we like"},
      {"p q r s t u v", "p q x s t y v"},
      {"the green dress", "a green dress"},
      {"a b", "b a"},
      {"navy denim jacket with dot print", "navy jacket in denim with a dot print"},
      {"i j k l m n o p q", "i j k"},
  };
  std::vector<std::pair<Tokens, Tokens>> out;
  for (const auto& p : pairs) out.emplace_back(words(p[0]), words(p[1]));
  return out;
}

double max_relative_error(std::vector<double>& params, const std::vector<double>& analytic,
                          const std::function<double()>& loss, const std::vector<std::size_t>& coords,
                          double eps) {
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double orig = params[i];
    params[i] = orig + eps;
    const double up = loss();
    params[i] = orig - eps;
    const double down = loss();
    params[i] = orig;
    const double fd = (up - down) / (2 * eps);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1e-8, std::abs(fd)));
  }
  return worst;
}

std::vector<Surface> surfaces_of(const std::string& term,
                                 const std::vector<std::pair<std::string, std::string>>& aliases) {
  std::vector<Surface> out;
  out.push_back({term, term});
  std::string cap = term;
  cap[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(cap[0])));
  out.push_back({cap, term});
  out.push_back({term + "s", term});
  for (const auto& [alias, canonical] : aliases) {
    if (canonical == term) out.push_back({alias, term});
  }
  return out;
}

std::vector<FilterOutput> brute_force_filter(const std::vector<FilterInput>& classes) {
  std::vector<FilterOutput> out(classes.size());
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& c = classes[k];
    if (!c.predicted) continue;
    const bool keep = !c.truth || c.truth->canonical == c.predicted->canonical;
    if (keep) out[k] = {c.predicted->canonical, c.confidence};
  }
  return out;
}

double pooled_z(double x1, double n1, double x2, double n2) {
  const double p1 = x1 / n1, p2 = x2 / n2, p = (x1 + x2) / (n1 + n2);
  return (p1 - p2) / std::sqrt(p * (1 - p) * (1 / n1 + 1 / n2));
}

}  // namespace oracle
