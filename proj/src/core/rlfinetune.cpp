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

#include "rlfinetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "common.hpp"

namespace attrgen {

double punishment(double mean_ce, int c, double rho) { return rho * (1 - c) * mean_ce; }

double rl_loss(const std::vector<double>& token_losses, int c, double rho) {
  if (token_losses.empty()) fail(ErrorCode::kInvalidArgument, "rl_loss of an empty sentence");
  const double mean =
      std::accumulate(token_losses.begin(), token_losses.end(), 0.0) /
      static_cast<double>(token_losses.size());
  return mean + punishment(mean, c, rho);
}

double rl_sequence_loss(const Transformer& net, const ConditioningSequence& seq, int c,
                        double rho, std::vector<double>* grad) {
  const double scale = 1.0 + rho * (1 - c);
  std::vector<double> w = seq.weights;
  for (auto& v : w) v *= scale;
  return net.token_loss(seq.image, seq.tokens, seq.targets, w, grad);
}

ConditioningSequence rollout_sequence(const Tokenizer& tok, const ProductRecord& product,
                                      const GenerationResult& rollout) {
  if (rollout.tokens.empty()) fail(ErrorCode::kInvalidArgument, "empty rollout");
  ConditioningSequence s;
  s.image = product.embedding;
  s.tokens = conditioning_prefix(tok, product.title);
  s.prefix_length = static_cast<int>(s.tokens.size());
  s.tokens.insert(s.tokens.end(), rollout.tokens.begin(), rollout.tokens.end());
  const int T = 1 + static_cast<int>(s.tokens.size());
  s.targets.assign(T, 0);
  s.weights.assign(T, 0.0);
  const double w = 1.0 / static_cast<double>(rollout.tokens.size());
  for (int p = s.prefix_length; p < T - 1; ++p) {
    s.targets[p] = s.tokens[p];
    s.weights[p] = w;
  }
  return s;
}

const char* finetune_target_name(FinetuneTarget t) {
  return t == FinetuneTarget::kReference ? "reference" : "rollout";
}

FinetuneTarget parse_finetune_target(const std::string& name) {
  if (name == "reference") return FinetuneTarget::kReference;
  if (name == "rollout") return FinetuneTarget::kRollout;
  fail(ErrorCode::kInvalidArgument, "unknown finetune target '" + name + "'");
}

void FinetuneConfig::validate() const {
  if (!(rho >= 1.0)) fail(ErrorCode::kInvalidArgument, "rho must be at least 1");
  if (batch == 0) fail(ErrorCode::kInvalidArgument, "batch must be at least 1");
  if (!(lr >= 0)) fail(ErrorCode::kInvalidArgument, "lr must be nonnegative");
  if (eval_every == 0) fail(ErrorCode::kInvalidArgument, "eval_every must be at least 1");
  if (eval_samples == 0) fail(ErrorCode::kInvalidArgument, "eval_samples must be at least 1");
  rollout.validate();
}

nlohmann::json FinetuneConfig::to_json() const {
  return {{"rho", rho},
          {"steps", steps},
          {"batch", batch},
          {"lr", lr},
          {"clip_norm", clip_norm},
          {"optimizer", optimizer_name(optimizer)},
          {"seed", seed},
          {"target", finetune_target_name(target)},
          {"eval_every", eval_every},
          {"patience", patience},
          {"eval_samples", eval_samples},
          {"rollout", rollout.to_json()}};
}

FinetuneConfig FinetuneConfig::from_json(const nlohmann::json& j) {
  FinetuneConfig c;
  c.rho = j.value("rho", c.rho);
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.seed = j.value("seed", c.seed);
  if (j.contains("target")) c.target = parse_finetune_target(j.at("target").get<std::string>());
  c.eval_every = j.value("eval_every", c.eval_every);
  c.patience = j.value("patience", c.patience);
  c.eval_samples = j.value("eval_samples", c.eval_samples);
  if (j.contains("rollout")) c.rollout = GenerationConfig::from_json(j.at("rollout"));
  c.rollout.boost = false;
  c.validate();
  return c;
}

PreferenceDims oracle_dims(const ProductRecord& product, const std::vector<std::string>& words,
                           bool ended, const AttributeVocabulary& vocab) {
  PreferenceDims d;
  d.accurate = count_contradictions(words, product.attributes, vocab) == 0;
  bool repeated = false;
  for (std::size_t i = 1; i < words.size(); ++i) repeated = repeated || words[i] == words[i - 1];
  d.grammatical = ended && !words.empty() && !repeated;
  return d;
}

ProductCritic oracle_critic(const Tokenizer& tok, const AttributeVocabulary& vocab) {
  return [&tok, &vocab](const ProductRecord& p, const GenerationResult& r) {
    const int c = *preference_from_dims(oracle_dims(p, r.words(tok), r.ended(), vocab));
    return Verdict{c == 1, static_cast<double>(c)};
  };
}

ProductCritic reward_critic(const Tokenizer& tok, const RewardModel& reward) {
  return [&tok, &reward](const ProductRecord& p, const GenerationResult& r) {
    const auto s = reward.classify(p.embedding, p.title, attribute_terms(p.attributes),
                                   r.words(tok));
    return Verdict{s.c == 1, s.score};
  };
}

double EvalPoint::contradiction_rate() const {
  return items ? static_cast<double>(contradictions) / static_cast<double>(items) : 0.0;
}

double EvalPoint::acceptance_rate() const {
  return items ? static_cast<double>(accepted) / static_cast<double>(items) : 0.0;
}

EvalPoint evaluate_generation(
    const ConditionalLM& lm, const Catalog& catalog, const ProductCritic& critic,
    const GenerationConfig& gen, std::size_t samples, std::uint64_t seed, bool boost,
    const std::function<ValidatedAttributes(const ProductRecord&)>& constraints) {
  EvalPoint e;
  const auto val = catalog.split(Split::kVal);
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto* p = val[i];
    GenerationRequest req{p->embedding, conditioning_prefix(lm.tokenizer(), p->title),
                          ValidatedAttributes(catalog.vocab.num_classes())};
    if (constraints) req.attributes = constraints(*p);
    for (std::size_t s = 0; s < samples; ++s) {
      GenerationConfig g = gen;
      g.boost = boost;
      g.seed = mix_seed(mix_seed(seed, i), s);
      const auto r = generate(lm, req, catalog.vocab, g);
      const auto words = r.words(lm.tokenizer());
      e.contradictions += count_contradictions(words, p->attributes, catalog.vocab) > 0 ? 1 : 0;
      if (critic) e.accepted += critic(*p, r).accepted ? 1 : 0;
      ++e.items;
    }
  }
  return e;
}

namespace {

nlohmann::json eval_json(const char* phase, std::size_t step, const EvalPoint& e) {
  return {{"event", "eval"},
          {"phase", phase},
          {"step", step},
          {"items", e.items},
          {"contradiction_rate", e.contradiction_rate()},
          {"acceptance_rate", e.acceptance_rate()}};
}

}  // namespace

nlohmann::json FinetuneReport::summary_json() const {
  return {{"event", "summary"},
          {"steps_run", steps_run},
          {"early_stopped", early_stopped},
          {"items", post.items},
          {"pre_contradiction_rate", pre.contradiction_rate()},
          {"post_contradiction_rate", post.contradiction_rate()},
          {"pre_acceptance_rate", pre.acceptance_rate()},
          {"post_acceptance_rate", post.acceptance_rate()}};
}

std::string FinetuneReport::to_jsonl() const {
  std::ostringstream out;
  for (const auto& e : log) out << e.dump() << '\n';
  out << summary_json().dump() << '\n';
  return out.str();
}

FinetuneReport finetune(ConditionalLM& lm, const Catalog& catalog, const ProductCritic& critic,
                        const FinetuneConfig& cfg, const FinetuneCallback& on_event) {
  cfg.validate();
  if (!critic) fail(ErrorCode::kConfiguration, "finetuning needs a critic");
  const auto train = catalog.split(Split::kTrain);
  if (train.empty()) fail(ErrorCode::kPrecondition, "no training products");

  GenerationConfig gen = cfg.rollout;
  gen.boost = false;
  const std::uint64_t eval_seed = mix_seed(cfg.seed, 0xe5a1);
  const auto emit = [&](FinetuneReport& r, nlohmann::json ev) {
    if (on_event) on_event(ev);
    r.log.push_back(std::move(ev));
  };

  FinetuneReport report;
  report.pre = evaluate_generation(lm, catalog, critic, gen, cfg.eval_samples, eval_seed);
  emit(report, eval_json("pre", 0, report.pre));

  auto& net = lm.net();
  Optimizer opt(cfg.optimizer, cfg.lr, cfg.clip_norm);
  std::vector<double> grad(net.num_params());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(cfg.seed, 0xf17e));
  rng.shuffle(order);
  std::size_t cursor = 0;

  double last_rate = report.pre.contradiction_rate();
  std::size_t rises = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0;
    std::size_t accepted = 0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const auto* p = train[order[cursor++]];
      GenerationConfig g = gen;
      g.seed = mix_seed(mix_seed(cfg.seed, step), b);
      const GenerationRequest req{p->embedding, conditioning_prefix(lm.tokenizer(), p->title),
                                  ValidatedAttributes(catalog.vocab.num_classes())};
      const auto rollout = generate(lm, req, catalog.vocab, g);
      const int c = critic(*p, rollout).accepted ? 1 : 0;
      accepted += c;
      const ConditioningSequence seq = cfg.target == FinetuneTarget::kReference
                                           ? make_conditioning_sequence(lm.tokenizer(), *p)
                                           : rollout_sequence(lm.tokenizer(), *p, rollout);
      loss += rl_sequence_loss(net, seq, c, cfg.rho, &grad);
    }
    const double inv = 1.0 / static_cast<double>(cfg.batch);
    for (auto& g : grad) g *= inv;
    loss *= inv;
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "non-finite finetuning loss at step " << step << ", parameter norm "
          << l2_norm(net.params());
      fail(ErrorCode::kNumeric, msg.str());
    }
    opt.step(net.params(), grad);
    report.steps_run = step + 1;
    emit(report, {{"event", "step"},
                  {"step", step + 1},
                  {"loss", loss},
                  {"batch_acceptance", static_cast<double>(accepted) * inv}});

    if ((step + 1) % cfg.eval_every == 0 && step + 1 < cfg.steps) {
      const auto e = evaluate_generation(lm, catalog, critic, gen, cfg.eval_samples, eval_seed);
      emit(report, eval_json("periodic", step + 1, e));
      rises = e.contradiction_rate() > last_rate ? rises + 1 : 0;
      last_rate = e.contradiction_rate();
      if (cfg.patience > 0 && rises >= cfg.patience) {
        report.early_stopped = true;
        break;
      }
    }
  }
  report.post = evaluate_generation(lm, catalog, critic, gen, cfg.eval_samples, eval_seed);
  emit(report, eval_json("post", report.steps_run, report.post));
  return report;
}

}  // namespace attrgen
