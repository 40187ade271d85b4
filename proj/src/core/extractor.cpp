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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "checkpoint.hpp"
#include "common.hpp"

namespace attrgen {

nlohmann::json ExtractorHyper::to_json() const {
  return {{"lr", lr},         {"epochs", epochs},
          {"batch", batch},   {"seed", seed},
          {"hidden", hidden}, {"optimizer", optimizer_name(optimizer)},
          {"clip_norm", clip_norm}};
}

ExtractorHyper ExtractorHyper::from_json(const nlohmann::json& j) {
  ExtractorHyper h;
  h.lr = j.value("lr", h.lr);
  h.epochs = j.value("epochs", h.epochs);
  h.batch = j.value("batch", h.batch);
  h.seed = j.value("seed", h.seed);
  h.hidden = j.value("hidden", h.hidden);
  h.clip_norm = j.value("clip_norm", h.clip_norm);
  if (j.contains("optimizer")) h.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  if (h.batch == 0) fail(ErrorCode::kInvalidArgument, "batch must be at least 1");
  if (h.hidden < 0) fail(ErrorCode::kInvalidArgument, "hidden must be nonnegative");
  return h;
}

AttributeExtractor::AttributeExtractor(AttributeVocabulary vocab, std::size_t dim, int hidden,
                                       std::uint64_t seed)
    : vocab_(std::move(vocab)), dim_(dim), hidden_(hidden) {
  if (dim_ == 0) fail(ErrorCode::kConfiguration, "extractor input dimension must be positive");
  mean_.assign(dim_, 0.0);
  stddev_.assign(dim_, 1.0);
  std::size_t n = hidden_ > 0 ? dim_ * hidden_ + hidden_ : 0;
  for (const auto& c : vocab_.classes()) {
    head_offset_.push_back(n);
    n += (feature_dim() + 1) * c.terms.size();
  }
  head_offset_.push_back(n);
  params_.assign(n, 0.0);
  Rng rng(seed);
  const double s = 0.1 / std::sqrt(static_cast<double>(dim_));
  for (auto& p : params_) p = s * rng.normal();
}

void AttributeExtractor::set_normalization(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.size() != dim_ || stddev.size() != dim_) {
    fail(ErrorCode::kShape, "normalization statistics have the wrong dimension");
  }
  mean_ = std::move(mean);
  stddev_ = std::move(stddev);
}

std::vector<double> AttributeExtractor::standardize(const std::vector<double>& e) const {
  if (e.size() != dim_) {
    fail(ErrorCode::kShape, "embedding has dimension " + std::to_string(e.size()) +
                                ", extractor expects " + std::to_string(dim_));
  }
  std::vector<double> x(dim_);
  for (std::size_t i = 0; i < dim_; ++i) x[i] = (e[i] - mean_[i]) / stddev_[i];
  return x;
}

namespace {

struct Features {
  std::vector<double> input;   // standardized embedding
  std::vector<double> hidden;  // tanh activations (empty without hidden layer)
  const std::vector<double>& out() const { return hidden.empty() ? input : hidden; }
};

// Head k: weights (F x n_k) row-major followed by n_k biases.
std::vector<double> head_logits(const double* head, const std::vector<double>& f, std::size_t n) {
  std::vector<double> z(head + f.size() * n, head + f.size() * n + n);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double* row = head + i * n;
    for (std::size_t j = 0; j < n; ++j) z[j] += f[i] * row[j];
  }
  return z;
}

std::vector<double> softmax_vec(std::vector<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    s += v;
  }
  for (auto& v : z) v /= s;
  return z;
}

}  // namespace

std::vector<std::vector<double>> AttributeExtractor::distributions(
    const std::vector<double>& embedding) const {
  Features f;
  f.input = standardize(embedding);
  if (hidden_ > 0) {
    f.hidden.assign(hidden_, 0.0);
    const double* w = params_.data();
    const double* b = w + dim_ * hidden_;
    for (int j = 0; j < hidden_; ++j) f.hidden[j] = b[j];
    for (std::size_t i = 0; i < dim_; ++i) {
      for (int j = 0; j < hidden_; ++j) f.hidden[j] += f.input[i] * w[i * hidden_ + j];
    }
    for (auto& v : f.hidden) v = std::tanh(v);
  }
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < vocab_.num_classes(); ++k) {
    out.push_back(softmax_vec(
        head_logits(params_.data() + head_offset_[k], f.out(), vocab_.at(k).terms.size())));
  }
  return out;
}

PredictedAttributes AttributeExtractor::predict(const std::vector<double>& embedding,
                                                double c_min) const {
  const auto dists = distributions(embedding);
  PredictedAttributes out(vocab_.num_classes());
  for (std::size_t k = 0; k < dists.size(); ++k) {
    const auto it = std::max_element(dists[k].begin(), dists[k].end());
    if (*it >= c_min) {
      out[k] = AttributePrediction{vocab_.at(k).terms[it - dists[k].begin()], *it};
    }
  }
  return out;
}

double AttributeExtractor::loss(const std::vector<double>& embedding,
                                const GroundTruthAttributes& truth,
                                std::vector<double>* grad) const {
  if (truth.size() != vocab_.num_classes()) {
    fail(ErrorCode::kShape, "ground truth does not cover the extractor's classes");
  }
  Features f;
  f.input = standardize(embedding);
  if (hidden_ > 0) {
    f.hidden.assign(hidden_, 0.0);
    const double* w = params_.data();
    const double* b = w + dim_ * hidden_;
    for (int j = 0; j < hidden_; ++j) f.hidden[j] = b[j];
    for (std::size_t i = 0; i < dim_; ++i) {
      for (int j = 0; j < hidden_; ++j) f.hidden[j] += f.input[i] * w[i * hidden_ + j];
    }
    for (auto& v : f.hidden) v = std::tanh(v);
  }
  const auto& feat = f.out();
  const std::size_t F = feat.size();
  std::vector<double> dfeat(F, 0.0);
  double total = 0;
  for (std::size_t k = 0; k < vocab_.num_classes(); ++k) {
    if (!truth[k]) continue;
    const auto label = vocab_.term_index(k, vocab_.normalize(*truth[k]));
    if (!label) fail(ErrorCode::kLookup, "unknown term '" + *truth[k] + "'");
    const std::size_t n = vocab_.at(k).terms.size();
    const double* head = params_.data() + head_offset_[k];
    auto prob = softmax_vec(head_logits(head, feat, n));
    total += -std::log(std::max(prob[*label], 1e-300));
    if (!grad) continue;
    prob[*label] -= 1.0;
    double* gh = grad->data() + head_offset_[k];
    for (std::size_t i = 0; i < F; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        gh[i * n + j] += feat[i] * prob[j];
        dfeat[i] += head[i * n + j] * prob[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) gh[F * n + j] += prob[j];
  }
  if (grad && hidden_ > 0) {
    double* gw = grad->data();
    double* gb = gw + dim_ * hidden_;
    for (int j = 0; j < hidden_; ++j) {
      const double d = dfeat[j] * (1.0 - f.hidden[j] * f.hidden[j]);
      gb[j] += d;
      for (std::size_t i = 0; i < dim_; ++i) gw[i * hidden_ + j] += f.input[i] * d;
    }
  }
  return total;
}

std::string AttributeExtractor::to_bytes() const {
  Checkpoint c;
  c.kind = "extractor";
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& cl : vocab_.classes()) {
    classes.push_back({{"name", cl.name}, {"terms", cl.terms}, {"aliases", cl.aliases}});
  }
  c.meta = {{"dim", dim_}, {"hidden", hidden_}, {"mean", mean_}, {"stddev", stddev_},
            {"vocabulary", classes}};
  c.values = params_;
  return checkpoint_to_bytes(c);
}

AttributeExtractor AttributeExtractor::from_bytes(const std::string& bytes) {
  const Checkpoint c = checkpoint_from_bytes(bytes, "extractor");
  std::vector<AttributeClass> classes;
  for (const auto& cl : c.meta.at("vocabulary")) {
    classes.push_back({cl.at("name").get<std::string>(),
                       cl.at("terms").get<std::vector<std::string>>(),
                       cl.at("aliases").get<std::map<std::string, std::string>>()});
  }
  AttributeExtractor e(AttributeVocabulary(std::move(classes)), c.meta.at("dim").get<std::size_t>(),
                       c.meta.at("hidden").get<int>(), 0);
  e.set_normalization(c.meta.at("mean").get<std::vector<double>>(),
                      c.meta.at("stddev").get<std::vector<double>>());
  if (c.values.size() != e.params_.size()) {
    fail(ErrorCode::kConsistency, "extractor checkpoint parameter count mismatch");
  }
  e.params_ = c.values;
  return e;
}

void AttributeExtractor::save(const std::string& path) const { write_file(path, to_bytes()); }

AttributeExtractor AttributeExtractor::load(const std::string& path) {
  return from_bytes(read_file(path));
}

AttributeExtractor make_extractor(const Catalog& catalog, const ExtractorHyper& hyper) {
  return AttributeExtractor(catalog.vocab, catalog.embedding_dim, hyper.hidden,
                            mix_seed(hyper.seed, 0xe7));
}

std::vector<double> extractor_accuracy(const AttributeExtractor& extractor,
                                       const std::vector<const ProductRecord*>& products) {
  const std::size_t K = extractor.vocab().num_classes();
  std::vector<double> hit(K, 0.0), seen(K, 0.0);
  for (const auto* p : products) {
    const auto pred = extractor.predict(p->embedding, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (!p->attributes[k]) continue;
      seen[k] += 1;
      if (pred[k] && pred[k]->term == *p->attributes[k]) hit[k] += 1;
    }
  }
  std::vector<double> acc(K);
  for (std::size_t k = 0; k < K; ++k) {
    acc[k] = seen[k] > 0 ? hit[k] / seen[k] : std::numeric_limits<double>::quiet_NaN();
  }
  return acc;
}

ExtractorReport train_extractor(AttributeExtractor& extractor, const Catalog& catalog,
                                const ExtractorHyper& hyper) {
  const auto train = catalog.split(Split::kTrain);
  if (train.empty()) fail(ErrorCode::kPrecondition, "no training products");
  const auto& vocab = extractor.vocab();
  for (std::size_t k = 0; k < vocab.num_classes(); ++k) {
    std::set<std::string> labels;
    for (const auto* p : train) {
      if (p->attributes[k]) labels.insert(*p->attributes[k]);
    }
    if (labels.size() < 2) {
      fail(ErrorCode::kDegenerate, "class '" + vocab.at(k).name +
                                       "' has fewer than 2 distinct labels in the train split");
    }
  }

  const std::size_t d = extractor.dim();
  std::vector<double> mean(d, 0.0), stddev(d, 0.0);
  for (const auto* p : train) {
    for (std::size_t i = 0; i < d; ++i) mean[i] += p->embedding[i];
  }
  for (auto& m : mean) m /= static_cast<double>(train.size());
  for (const auto* p : train) {
    for (std::size_t i = 0; i < d; ++i) {
      stddev[i] += (p->embedding[i] - mean[i]) * (p->embedding[i] - mean[i]);
    }
  }
  for (auto& s : stddev) {
    s = std::sqrt(s / static_cast<double>(train.size()));
    if (s < 1e-8) s = 1.0;
  }
  extractor.set_normalization(mean, stddev);

  Optimizer opt(hyper.optimizer, hyper.lr, hyper.clip_norm);
  std::vector<double> grad(extractor.params().size());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(hyper.seed, 0xe71));
  ExtractorReport report;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t end = std::min(order.size(), start + hyper.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto* p = train[order[b]];
        total += extractor.loss(p->embedding, p->attributes, &grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grad) g *= inv;
      opt.step(extractor.params(), grad);
    }
    if (!std::isfinite(total)) fail(ErrorCode::kNumeric, "non-finite extractor loss");
    report.epoch_loss.push_back(total / static_cast<double>(train.size()));
  }
  report.train_accuracy = extractor_accuracy(extractor, train);
  report.val_accuracy = extractor_accuracy(extractor, catalog.split(Split::kVal));
  return report;
}

}  // namespace attrgen
