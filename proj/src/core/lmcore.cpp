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

#include "lmcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "checkpoint.hpp"
#include "common.hpp"

namespace attrgen {

std::vector<int> conditioning_prefix(const Tokenizer& tok, const std::vector<std::string>& title) {
  auto ids = tok.encode(title);
  ids.push_back(Tokenizer::kSep);
  return ids;
}

ConditioningSequence make_conditioning_sequence(const Tokenizer& tok,
                                                const std::vector<double>& image,
                                                const std::vector<std::string>& title,
                                                const std::vector<int>& description_ids) {
  ConditioningSequence s;
  s.image = image;
  s.tokens = conditioning_prefix(tok, title);
  s.prefix_length = static_cast<int>(s.tokens.size());
  s.tokens.insert(s.tokens.end(), description_ids.begin(), description_ids.end());
  s.tokens.push_back(Tokenizer::kEos);
  const int T = 1 + static_cast<int>(s.tokens.size());
  s.targets.assign(T, 0);
  s.weights.assign(T, 0.0);
  const int n = static_cast<int>(description_ids.size()) + 1;
  // Position p predicts tokens[p]; the first description token sits at
  // index prefix_length, predicted from the <sep> position.
  for (int p = s.prefix_length; p < T - 1; ++p) {
    s.targets[p] = s.tokens[p];
    s.weights[p] = 1.0 / n;
  }
  return s;
}

ConditioningSequence make_conditioning_sequence(const Tokenizer& tok, const ProductRecord& p) {
  return make_conditioning_sequence(tok, p.embedding, p.title, tok.encode(p.description));
}

DecodeState::DecodeState(const Transformer& net, std::vector<double> image,
                         std::vector<int> prefix)
    : net_(&net),
      image_(std::move(image)),
      tokens_(std::move(prefix)),
      acts_(net.make_activations(net.config().context)) {
  net_->forward(image_, tokens_, acts_);
}

std::vector<double> DecodeState::logits() const { return net_->lm_logits(acts_, acts_.length - 1); }

void DecodeState::push(int id) {
  tokens_.push_back(id);
  try {
    net_->forward(image_, tokens_, acts_);
  } catch (...) {
    tokens_.pop_back();
    throw;
  }
}

bool DecodeState::full() const { return acts_.length >= acts_.capacity; }

ConditionalLM::ConditionalLM(Tokenizer tokenizer, const TransformerConfig& cfg,
                             std::uint64_t seed)
    : tokenizer_(std::move(tokenizer)), net_(cfg, seed) {
  if (cfg.vocab_size != tokenizer_.size()) {
    fail(ErrorCode::kConfiguration, "model vocabulary size does not match the tokenizer");
  }
}

std::vector<double> ConditionalLM::next_token_logits(const std::vector<double>& image,
                                                     const std::vector<int>& prefix) const {
  const Activations a = net_.forward(image, prefix);
  return net_.lm_logits(a, a.length - 1);
}

DecodeState ConditionalLM::begin(const std::vector<double>& image,
                                 const std::vector<int>& prefix) const {
  return DecodeState(net_, image, prefix);
}

std::shared_ptr<TokenEmbeddingTable> ConditionalLM::token_embeddings() const {
  auto table = std::make_shared<TokenEmbeddingTable>();
  for (int i = Tokenizer::kNumSpecials; i < tokenizer_.size(); ++i) {
    (*table)[tokenizer_.token(i)] = net_.token_embedding(i);
  }
  return table;
}

std::string ConditionalLM::to_bytes() const {
  Checkpoint c;
  c.kind = "lm";
  c.meta = {{"config", net_.config().to_json()}, {"tokenizer", tokenizer_.to_json()}};
  c.values = net_.params();
  return checkpoint_to_bytes(c);
}

ConditionalLM ConditionalLM::from_bytes(const std::string& bytes) {
  const Checkpoint c = checkpoint_from_bytes(bytes, "lm");
  ConditionalLM m(Tokenizer::from_json(c.meta.at("tokenizer")),
                  TransformerConfig::from_json(c.meta.at("config")), 0);
  if (c.values.size() != m.net_.num_params()) {
    fail(ErrorCode::kConsistency, "checkpoint parameter count does not match its config");
  }
  m.net_.params() = c.values;
  return m;
}

void ConditionalLM::save(const std::string& path) const { write_file(path, to_bytes()); }

ConditionalLM ConditionalLM::load(const std::string& path) { return from_bytes(read_file(path)); }

nlohmann::json LmHyper::to_json() const {
  return {{"lr", lr},
          {"batch", batch},
          {"epochs", epochs},
          {"seed", seed},
          {"clip_norm", clip_norm},
          {"optimizer", optimizer_name(optimizer)},
          {"max_vocab", max_vocab},
          {"layers", layers},
          {"width", width},
          {"heads", heads},
          {"context", context}};
}

LmHyper LmHyper::from_json(const nlohmann::json& j) {
  LmHyper h;
  h.lr = j.value("lr", h.lr);
  h.batch = j.value("batch", h.batch);
  h.epochs = j.value("epochs", h.epochs);
  h.seed = j.value("seed", h.seed);
  h.clip_norm = j.value("clip_norm", h.clip_norm);
  if (j.contains("optimizer")) h.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  h.max_vocab = j.value("max_vocab", h.max_vocab);
  h.layers = j.value("layers", h.layers);
  h.width = j.value("width", h.width);
  h.heads = j.value("heads", h.heads);
  h.context = j.value("context", h.context);
  if (h.batch == 0) fail(ErrorCode::kInvalidArgument, "batch must be at least 1");
  if (!(h.lr >= 0)) fail(ErrorCode::kInvalidArgument, "lr must be nonnegative");
  return h;
}

ConditionalLM make_lm(const Catalog& catalog, const LmHyper& hyper) {
  Tokenizer tok = build_tokenizer(catalog, hyper.max_vocab);
  TransformerConfig cfg;
  cfg.vocab_size = tok.size();
  cfg.image_dim = static_cast<int>(catalog.embedding_dim);
  cfg.layers = hyper.layers;
  cfg.width = hyper.width;
  cfg.heads = hyper.heads;
  cfg.context = hyper.context;
  return ConditionalLM(std::move(tok), cfg, mix_seed(hyper.seed, 0x1a17));
}

LmTrainReport train_lm(ConditionalLM& model, const Catalog& catalog, const LmHyper& hyper,
                       const EpochCallback& on_epoch) {
  return train_lm_on(model, catalog.split(Split::kTrain), hyper, on_epoch);
}

LmTrainReport train_lm_on(ConditionalLM& model, const std::vector<const ProductRecord*>& products,
                          const LmHyper& hyper, const EpochCallback& on_epoch) {
  if (products.empty()) fail(ErrorCode::kPrecondition, "no training products");
  std::vector<ConditioningSequence> data;
  data.reserve(products.size());
  for (const auto* p : products) data.push_back(make_conditioning_sequence(model.tokenizer(), *p));

  auto& net = model.net();
  Optimizer opt(hyper.optimizer, hyper.lr, hyper.clip_norm);
  std::vector<double> grad(net.num_params(), 0.0);
  std::vector<double> per_item(data.size(), 0.0);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(hyper.seed, 0x7a1));

  LmTrainReport report;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t end = std::min(order.size(), start + hyper.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = data[order[b]];
        per_item[order[b]] = net.token_loss(s.image, s.tokens, s.targets, s.weights, &grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grad) g *= inv;
      double batch_loss = 0;
      for (std::size_t b = start; b < end; ++b) batch_loss += per_item[order[b]];
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at step " << report.steps << " (epoch " << epoch
            << "), parameter norm " << l2_norm(net.params());
        fail(ErrorCode::kNumeric, msg.str());
      }
      opt.step(net.params(), grad);
      ++report.steps;
    }
    // Summed in index order so the value does not depend on the shuffle.
    double total = 0;
    for (double v : per_item) total += v;
    report.epoch_loss.push_back(total / static_cast<double>(per_item.size()));
    if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
  }
  return report;
}

double cross_entropy(const std::vector<double>& logits, int target) {
  for (double x : logits) {
    if (!std::isfinite(x)) fail(ErrorCode::kNumeric, "non-finite logit");
  }
  return softmax_cross_entropy(logits, target);
}

GradCheckResult grad_check(const Transformer& model, const LossFn& loss, double eps,
                           std::size_t coordinates, std::uint64_t seed) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) {
    fail(ErrorCode::kInvalidArgument, "finite-difference step must lie in [1e-6, 1e-3]");
  }
  Transformer probe = model;
  std::vector<double> grad(probe.num_params(), 0.0);
  loss(probe, &grad);

  std::vector<std::size_t> idx(probe.num_params());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(std::min(coordinates, idx.size()));

  GradCheckResult r;
  for (std::size_t i : idx) {
    const double orig = probe.params()[i];
    probe.params()[i] = orig + eps;
    const double up = loss(probe, nullptr);
    probe.params()[i] = orig - eps;
    const double down = loss(probe, nullptr);
    probe.params()[i] = orig;
    const double fd = (up - down) / (2 * eps);
    const double rel = std::abs(grad[i] - fd) / std::max(1e-8, std::abs(fd));
    r.max_rel_error = std::max(r.max_rel_error, rel);
    r.max_abs_grad = std::max(r.max_abs_grad, std::abs(grad[i]));
    ++r.coordinates;
  }
  return r;
}

}  // namespace attrgen
