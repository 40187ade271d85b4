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

#include "decoder.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

#include "common.hpp"

namespace attrgen {

void GenerationConfig::validate() const {
  if (top_k < 1) fail(ErrorCode::kInvalidArgument, "top_k must be at least 1");
  // mu = 0 is accepted: it is the unboosted limit and must match it exactly.
  if (!(mu >= 0.0 && mu < 1.0)) fail(ErrorCode::kInvalidArgument, "mu must lie in [0, 1)");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::kInvalidArgument, "temperature must be positive");
  }
  if (max_len < 1) fail(ErrorCode::kInvalidArgument, "max_len must be at least 1");
  similarity.validate();
}

nlohmann::json GenerationConfig::to_json() const {
  return {{"top_k", top_k},
          {"mu", mu},
          {"temperature", temperature},
          {"max_len", max_len},
          {"max_retries", max_retries},
          {"seed", seed},
          {"boost", boost},
          {"similarity", similarity.mode == SimilarityMode::kEmbedding ? "embedding" : "exact"},
          {"threshold", similarity.threshold}};
}

GenerationConfig GenerationConfig::from_json(const nlohmann::json& j) {
  GenerationConfig c;
  c.top_k = j.value("top_k", c.top_k);
  c.mu = j.value("mu", c.mu);
  c.temperature = j.value("temperature", c.temperature);
  c.max_len = j.value("max_len", c.max_len);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.seed = j.value("seed", c.seed);
  c.boost = j.value("boost", c.boost);
  const std::string mode = j.value("similarity", std::string("exact"));
  if (mode == "embedding") {
    c.similarity.mode = SimilarityMode::kEmbedding;
  } else if (mode != "exact") {
    fail(ErrorCode::kInvalidArgument, "unknown similarity mode '" + mode + "'");
  }
  c.similarity.threshold = j.value("threshold", c.similarity.threshold);
  return c;
}

std::vector<std::string> GenerationResult::words(const Tokenizer& tok) const {
  std::vector<int> ids = tokens;
  if (!ids.empty() && ids.back() == Tokenizer::kEos) ids.pop_back();
  return tok.decode_tokens(ids);
}

bool GenerationResult::ended() const {
  return !tokens.empty() && tokens.back() == Tokenizer::kEos;
}

std::vector<double> delta(const std::vector<std::string>& candidates,
                          const ValidatedAttributes& attributes, const AttributeVocabulary& vocab,
                          double mu, const SimilarityConfig& similarity) {
  std::vector<double> d(candidates.size(), 1.0);
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    int s = 0;
    for (std::size_t k = 0; k < attributes.size(); ++k) {
      if (attributes[k]) s += sigma(candidates[j], k, attributes[k]->term, vocab, similarity);
    }
    if (s > 0) {
      d[j] = 1.0 + mu;
    } else if (s < 0) {
      d[j] = 1.0 - mu;
    }
  }
  return d;
}

std::vector<double> adjust_topk(const std::vector<double>& raw, const std::vector<double>& delta) {
  if (raw.size() != delta.size() || raw.empty()) {
    fail(ErrorCode::kShape, "raw probabilities and delta must have the same nonzero length");
  }
  std::vector<double> p(raw.size());
  double total = 0;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    p[j] = raw[j] * delta[j];
    total += p[j];
  }
  assert(total > 0);
  for (auto& v : p) v /= total;
  return p;
}

std::vector<int> top_k(const std::vector<double>& probs, std::size_t k) {
  std::vector<int> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto by_prob = [&](int a, int b) {
    return probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
  };
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), by_prob);
  idx.resize(k);
  return idx;
}

std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  return probs.size() - 1;
}

namespace {

// <bos>, <sep>, <pad> and <unk> are never emitted into a description.
bool masked(int id) {
  return id == Tokenizer::kBos || id == Tokenizer::kSep || id == Tokenizer::kPad ||
         id == Tokenizer::kUnk;
}

std::vector<double> tempered_probs(const std::vector<double>& logits, double temperature) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!masked(static_cast<int>(i))) mx = std::max(mx, logits[i] / temperature);
  }
  if (!std::isfinite(mx)) fail(ErrorCode::kNumeric, "no finite logit to sample from");
  std::vector<double> p(logits.size(), 0.0);
  double total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (masked(static_cast<int>(i))) continue;
    p[i] = std::exp(logits[i] / temperature - mx);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

class LmSource : public LogitSource {
 public:
  LmSource(const ConditionalLM& lm, const GenerationRequest& req)
      : lm_(lm), state_(lm.begin(req.image, req.prefix)) {}
  std::vector<double> logits() const override { return state_.logits(); }
  bool push(int id) override {
    if (state_.full()) return false;
    state_.push(id);
    return true;
  }
  const Tokenizer& tokenizer() const override { return lm_.tokenizer(); }

 private:
  const ConditionalLM& lm_;
  DecodeState state_;
};

void check_prefix(const ConditionalLM& lm, const GenerationRequest& req) {
  const int positions = 1 + static_cast<int>(req.prefix.size());
  if (positions >= lm.net().config().context) {
    fail(ErrorCode::kLength, "conditioning prefix leaves no room in the context window");
  }
}

}  // namespace

GenerationResult generate(LogitSource& source, const ValidatedAttributes& attributes,
                          const AttributeVocabulary& vocab, const GenerationConfig& cfg) {
  cfg.validate();
  const Tokenizer& tok = source.tokenizer();
  Rng rng(cfg.seed);
  GenerationResult out;
  while (out.tokens.size() < cfg.max_len) {
    const auto probs = tempered_probs(source.logits(), cfg.temperature);
    StepTrace step;
    step.candidates = top_k(probs, cfg.top_k);
    // Masked ids have probability 0 and may only appear if k exceeds the
    // unmasked vocabulary; drop them so every candidate is samplable.
    while (step.candidates.size() > 1 && probs[step.candidates.back()] == 0.0) {
      step.candidates.pop_back();
    }
    std::vector<std::string> words;
    for (int id : step.candidates) {
      step.raw.push_back(probs[id]);
      words.push_back(tok.token(id));
    }
    step.delta = cfg.boost ? delta(words, attributes, vocab, cfg.mu, cfg.similarity)
                           : std::vector<double>(words.size(), 1.0);
    step.adjusted = adjust_topk(step.raw, step.delta);
    step.chosen = step.candidates[sample_index(step.adjusted, rng)];
    out.tokens.push_back(step.chosen);
    out.trace.push_back(std::move(step));
    if (out.tokens.back() == Tokenizer::kEos || out.tokens.size() >= cfg.max_len) break;
    if (!source.push(out.tokens.back())) {
      out.truncated = true;
      break;
    }
  }
  return out;
}

GenerationResult generate(const ConditionalLM& lm, const GenerationRequest& request,
                          const AttributeVocabulary& vocab, const GenerationConfig& cfg) {
  check_prefix(lm, request);
  LmSource source(lm, request);
  return generate(source, request.attributes, vocab, cfg);
}

GenerationResult generate_filtered(const ConditionalLM& lm, const GenerationRequest& request,
                                   const AttributeVocabulary& vocab, const Critic& critic,
                                   const GenerationConfig& cfg) {
  if (!critic) fail(ErrorCode::kConfiguration, "filtered generation needs a reward model");
  const std::size_t attempts = std::max<std::size_t>(1, cfg.max_retries);
  GenerationResult best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < attempts; ++a) {
    GenerationConfig c = cfg;
    // The first attempt reuses the request seed so it equals plain generation.
    c.seed = a == 0 ? cfg.seed : mix_seed(cfg.seed, a);
    GenerationResult r = generate(lm, request, vocab, c);
    const Verdict v = critic(r);
    r.score = v.score;
    r.attempts = a + 1;
    r.accepted = v.accepted;
    if (v.accepted) return r;
    if (v.score > best_score) {
      best_score = v.score;
      best = std::move(r);
    }
  }
  best.attempts = attempts;
  best.accepted = false;
  return best;
}

nlohmann::json trace_to_json(const GenerationResult& result, const Tokenizer& tok) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : result.trace) {
    nlohmann::json cands = nlohmann::json::array();
    for (int id : s.candidates) cands.push_back(tok.token(id));
    steps.push_back({{"candidates", cands},
                     {"raw", s.raw},
                     {"delta", s.delta},
                     {"adjusted", s.adjusted},
                     {"chosen", tok.token(s.chosen)}});
  }
  return steps;
}

}  // namespace attrgen
