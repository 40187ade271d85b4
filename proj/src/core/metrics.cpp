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

#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "common.hpp"

namespace attrgen {

namespace {

std::map<Tokens, std::size_t> ngram_counts(const Tokens& s, int n) {
  std::map<Tokens, std::size_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[Tokens(s.begin() + static_cast<std::ptrdiff_t>(i),
                    s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

double bleu_n(const Tokens& candidate, const std::vector<Tokens>& references, int n) {
  if (n < 1 || n > 4) fail(ErrorCode::kInvalidArgument, "BLEU order must be in 1..4");
  if (references.empty()) fail(ErrorCode::kInvalidArgument, "BLEU needs at least one reference");
  if (candidate.empty()) fail(ErrorCode::kInvalidArgument, "BLEU candidate is empty");

  double log_sum = 0;
  for (int m = 1; m <= n; ++m) {
    const auto cand = ngram_counts(candidate, m);
    std::size_t total = 0, clipped = 0;
    for (const auto& [gram, count] : cand) {
      std::size_t max_ref = 0;
      for (const auto& ref : references) {
        const auto rc = ngram_counts(ref, m);
        const auto it = rc.find(gram);
        if (it != rc.end()) max_ref = std::max(max_ref, it->second);
      }
      total += count;
      clipped += std::min(count, max_ref);
    }
    if (clipped == 0) return 0.0;
    log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
  }

  const double c = static_cast<double>(candidate.size());
  double r = static_cast<double>(references.front().size());
  for (const auto& ref : references) {
    const double len = static_cast<double>(ref.size());
    if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r)) {
      r = len;
    }
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / n);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(candidate, reference));
  if (l == 0) return 0.0;
  const double p = l / static_cast<double>(candidate.size());
  const double r = l / static_cast<double>(reference.size());
  return 2 * p * r / (p + r);
}

namespace {

// Branch and bound over exact-match alignments with the maximum number of
// matches, minimizing chunks.
class ChunkSearch {
 public:
  ChunkSearch(const Tokens& c, const Tokens& r) : c_(c), r_(r), used_(r.size(), false) {
    std::map<std::string, std::size_t> cc, rc;
    for (const auto& w : c) ++cc[w];
    for (const auto& w : r) ++rc[w];
    for (const auto& [w, n] : cc) {
      const auto it = rc.find(w);
      need_[w] = it == rc.end() ? 0 : std::min(n, it->second);
      matches_ += need_[w];
    }
    remaining_in_cand_ = cc;
  }

  std::size_t matches() const { return matches_; }

  std::size_t min_chunks() {
    if (matches_ == 0) return 0;
    search(0, -2, -2, 0);
    return best_;
  }

 private:
  void search(std::size_t i, long prev_c, long prev_r, std::size_t chunks) {
    if (chunks >= best_ || ++nodes_ > kNodeLimit) return;
    if (i == c_.size()) {
      best_ = chunks;
      return;
    }
    const std::string& w = c_[i];
    std::size_t& need = need_[w];
    std::size_t& left = remaining_in_cand_[w];
    --left;  // occurrences of w after position i
    if (need > 0) {
      // Extending the current chunk first finds tight bounds early.
      const long cont = prev_c == static_cast<long>(i) - 1 ? prev_r + 1 : -1;
      if (cont >= 0 && cont < static_cast<long>(r_.size()) && !used_[cont] && r_[cont] == w) {
        try_match(i, cont, prev_c, prev_r, chunks);
      }
      for (std::size_t j = 0; j < r_.size(); ++j) {
        if (static_cast<long>(j) != cont && !used_[j] && r_[j] == w) {
          try_match(i, static_cast<long>(j), prev_c, prev_r, chunks);
        }
      }
    }
    if (left >= need) search(i + 1, prev_c, prev_r, chunks);
    ++left;
  }

  void try_match(std::size_t i, long j, long prev_c, long prev_r, std::size_t chunks) {
    const bool extends = prev_c == static_cast<long>(i) - 1 && prev_r == j - 1;
    used_[j] = true;
    --need_[c_[i]];
    search(i + 1, static_cast<long>(i), j, chunks + (extends ? 0 : 1));
    ++need_[c_[i]];
    used_[j] = false;
  }

  static constexpr std::size_t kNodeLimit = 2'000'000;
  const Tokens& c_;
  const Tokens& r_;
  std::vector<bool> used_;
  std::map<std::string, std::size_t> need_;
  std::map<std::string, std::size_t> remaining_in_cand_;
  std::size_t matches_ = 0;
  std::size_t best_ = std::numeric_limits<std::size_t>::max();
  std::size_t nodes_ = 0;
};

}  // namespace

double meteor_exact(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  ChunkSearch search(candidate, reference);
  const double m = static_cast<double>(search.matches());
  if (m == 0) return 0.0;
  const double chunks = static_cast<double>(search.min_chunks());
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = p * r / (0.9 * p + 0.1 * r);
  const double frag = chunks / m;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

ContradictionResult contradiction_rate(const std::vector<Prediction>& predictions,
                                       const Catalog& catalog) {
  ContradictionResult out;
  std::size_t flagged = 0;
  for (const auto& p : predictions) {
    const ProductRecord* rec = catalog.try_find(p.product_id);
    if (!rec) fail(ErrorCode::kNotFound, "unknown product '" + p.product_id + "'");
    const bool f = count_contradictions(p.description, rec->attributes, catalog.vocab) > 0;
    out.flagged.push_back(f);
    flagged += f ? 1 : 0;
  }
  out.rate = predictions.empty() ? 0.0
                                 : static_cast<double>(flagged) /
                                       static_cast<double>(predictions.size());
  return out;
}

EvalReport evaluate(const std::vector<Prediction>& predictions, const Catalog& catalog) {
  EvalReport report;
  const auto contra = contradiction_rate(predictions, catalog);
  report.contradiction_rate = contra.rate;
  std::size_t with_flag = 0, accepted = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& ref = catalog.find(p.product_id).description;
    EvalRow row;
    row.product_id = p.product_id;
    if (!p.description.empty()) {
      row.bleu2 = bleu_n(p.description, {ref}, 2);
      row.bleu3 = bleu_n(p.description, {ref}, 3);
      row.bleu4 = bleu_n(p.description, {ref}, 4);
      row.rouge = rouge_l(p.description, ref);
      row.meteor = meteor_exact(p.description, ref);
    }
    row.contradictory = contra.flagged[i];
    row.accepted = p.accepted;
    if (p.accepted) {
      ++with_flag;
      accepted += *p.accepted ? 1 : 0;
    }
    report.bleu2 += row.bleu2;
    report.bleu3 += row.bleu3;
    report.bleu4 += row.bleu4;
    report.rouge += row.rouge;
    report.meteor += row.meteor;
    report.rows.push_back(row);
  }
  if (!predictions.empty()) {
    const double n = static_cast<double>(predictions.size());
    report.bleu2 /= n;
    report.bleu3 /= n;
    report.bleu4 /= n;
    report.rouge /= n;
    report.meteor /= n;
  }
  if (with_flag > 0) {
    report.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(with_flag);
  }
  return report;
}

nlohmann::json EvalReport::summary_json() const {
  nlohmann::json j = {{"summary", true},
                      {"items", rows.size()},
                      {"bleu2", bleu2},
                      {"bleu3", bleu3},
                      {"bleu4", bleu4},
                      {"rouge_l", rouge},
                      {"meteor_exact", meteor},
                      {"contradiction_rate", contradiction_rate}};
  j["acceptance_rate"] = acceptance_rate ? nlohmann::json(*acceptance_rate) : nlohmann::json();
  return j;
}

std::string EvalReport::to_jsonl() const {
  std::ostringstream out;
  for (const auto& r : rows) {
    nlohmann::json j = {{"product_id", r.product_id}, {"bleu2", r.bleu2},
                        {"bleu3", r.bleu3},           {"bleu4", r.bleu4},
                        {"rouge_l", r.rouge},         {"meteor_exact", r.meteor},
                        {"contradictory", r.contradictory}};
    if (r.accepted) j["accepted"] = *r.accepted;
    out << j.dump() << '\n';
  }
  out << summary_json().dump() << '\n';
  return out.str();
}

ProportionTest two_proportion_test(std::size_t x1, std::size_t n1, std::size_t x2,
                                   std::size_t n2) {
  if (n1 == 0 || n2 == 0) fail(ErrorCode::kInvalidArgument, "empty sample in proportion test");
  ProportionTest t;
  t.p1 = static_cast<double>(x1) / static_cast<double>(n1);
  t.p2 = static_cast<double>(x2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  const double se = std::sqrt(pooled * (1 - pooled) *
                              (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  if (se == 0) return t;
  t.z = (t.p1 - t.p2) / se;
  t.p_value = 0.5 * std::erfc(t.z / std::sqrt(2.0));
  return t;
}

std::vector<Prediction> parse_predictions(const std::string& text) {
  std::vector<Prediction> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Prediction p;
      p.product_id = j.at("product_id").get<std::string>();
      const auto& d = j.at("description");
      p.description = d.is_string() ? split_whitespace(d.get<std::string>())
                                    : d.get<std::vector<std::string>>();
      if (j.contains("accepted") && !j["accepted"].is_null()) p.accepted = j["accepted"].get<bool>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

}  // namespace attrgen
