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

#include "reward.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "checkpoint.hpp"
#include "common.hpp"

namespace attrgen {

const char* label_source_name(LabelSource s) {
  switch (s) {
    case LabelSource::kHuman:
      return "human";
    case LabelSource::kOracle:
      return "oracle";
    case LabelSource::kPhase1Negative:
      return "phase1-negative";
  }
  return "?";
}

LabelSource parse_label_source(const std::string& name) {
  if (name == "human") return LabelSource::kHuman;
  if (name == "oracle") return LabelSource::kOracle;
  if (name == "phase1-negative") return LabelSource::kPhase1Negative;
  fail(ErrorCode::kInvalidArgument, "unknown label source '" + name + "'");
}

const char* polarity_name(Polarity p) {
  return p == Polarity::kPreferredIsOne ? "preferred_is_1" : "preferred_is_0";
}

Polarity parse_polarity(const std::string& name) {
  if (name == "preferred_is_1") return Polarity::kPreferredIsOne;
  if (name == "preferred_is_0") return Polarity::kPreferredIsZero;
  fail(ErrorCode::kInvalidArgument, "unknown label polarity '" + name + "'");
}

std::optional<int> preference_from_dims(const PreferenceDims& dims) {
  if (!dims.accurate || !dims.grammatical) return std::nullopt;
  return (*dims.accurate && *dims.grammatical) ? 1 : 0;
}

void check_label(const PreferenceLabel& label) {
  if (label.label != 0 && label.label != 1) {
    fail(ErrorCode::kValidation, "label must be 0 or 1");
  }
  const auto derived = preference_from_dims(label.dims);
  if (derived && *derived != label.label) {
    fail(ErrorCode::kValidation, "label disagrees with accurate && grammatical");
  }
}

nlohmann::json PreferenceLabel::to_json() const {
  nlohmann::json j = {{"product_id", product_id},
                      {"description", join(description, " ")},
                      {"label", label},
                      {"source", label_source_name(source)},
                      {"polarity", polarity_name(Polarity::kPreferredIsOne)}};
  nlohmann::json d = nlohmann::json::object();
  if (dims.accurate) d["accurate"] = *dims.accurate;
  if (dims.attractive) d["attractive"] = *dims.attractive;
  if (dims.grammatical) d["grammatical"] = *dims.grammatical;
  if (!d.empty()) j["dims"] = d;
  if (!generation_id.empty()) j["generation_id"] = generation_id;
  return j;
}

PreferenceLabel PreferenceLabel::from_json(const nlohmann::json& j) {
  PreferenceLabel l;
  l.product_id = j.at("product_id").get<std::string>();
  const auto& d = j.at("description");
  l.description = d.is_string() ? split_whitespace(d.get<std::string>())
                                : d.get<std::vector<std::string>>();
  if (j.contains("dims")) {
    const auto& dims = j["dims"];
    const auto get = [&](const char* key) -> std::optional<bool> {
      if (!dims.contains(key) || dims[key].is_null()) return std::nullopt;
      return dims[key].get<bool>();
    };
    l.dims.accurate = get("accurate");
    l.dims.attractive = get("attractive");
    l.dims.grammatical = get("grammatical");
  }
  l.source = parse_label_source(j.value("source", std::string("human")));
  l.generation_id = j.value("generation_id", std::string());
  if (j.contains("label") && !j["label"].is_null()) {
    const int raw = j["label"].get<int>();
    if (raw != 0 && raw != 1) fail(ErrorCode::kValidation, "label must be 0 or 1");
    const Polarity pol = parse_polarity(j.value("polarity", std::string("preferred_is_1")));
    l.label = pol == Polarity::kPreferredIsOne ? raw : 1 - raw;
  } else if (const auto derived = preference_from_dims(l.dims)) {
    l.label = *derived;
  } else {
    fail(ErrorCode::kValidation, "label record needs a label or accurate/grammatical dims");
  }
  check_label(l);
  return l;
}

std::vector<PreferenceLabel> parse_labels(const std::string& text) {
  std::vector<PreferenceLabel> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(PreferenceLabel::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

std::string labels_to_jsonl(const std::vector<PreferenceLabel>& labels) {
  std::string out;
  for (const auto& l : labels) out += l.to_json().dump() + "\n";
  return out;
}

RewardInput encode_reward_input(const Tokenizer& tok, int context,
                                const std::vector<double>& image,
                                const std::vector<std::string>& title,
                                const std::optional<std::vector<std::string>>& attributes,
                                const std::vector<std::string>& description) {
  RewardInput in;
  in.image = image;
  in.tokens = tok.encode(title);
  in.tokens.push_back(Tokenizer::kSep);
  if (attributes) {
    const auto ids = tok.encode(*attributes);
    in.tokens.insert(in.tokens.end(), ids.begin(), ids.end());
    in.tokens.push_back(Tokenizer::kSep);
  }
  const auto ids = tok.encode(description);
  in.tokens.insert(in.tokens.end(), ids.begin(), ids.end());
  in.tokens.push_back(Tokenizer::kEos);
  if (1 + static_cast<int>(in.tokens.size()) > context) {
    fail(ErrorCode::kLength, "reward input of " + std::to_string(in.tokens.size() + 1) +
                                 " positions exceeds the context of " + std::to_string(context));
  }
  return in;
}

std::vector<std::string> attribute_terms(const GroundTruthAttributes& attributes) {
  std::vector<std::string> out;
  for (const auto& a : attributes) {
    if (a) out.push_back(*a);
  }
  return out;
}

std::vector<std::string> attribute_terms(const ValidatedAttributes& attributes) {
  std::vector<std::string> out;
  for (const auto& a : attributes) {
    if (a) out.push_back(a->term);
  }
  return out;
}

RewardModel::RewardModel(Tokenizer tokenizer, const TransformerConfig& cfg, bool use_attributes,
                         std::uint64_t seed)
    : tokenizer_(std::move(tokenizer)), net_(cfg, seed), use_attributes_(use_attributes) {
  if (cfg.num_classes != 2) fail(ErrorCode::kConfiguration, "reward model needs a 2-way head");
  if (cfg.vocab_size != tokenizer_.size()) {
    fail(ErrorCode::kConfiguration, "reward vocabulary size does not match its tokenizer");
  }
}

RewardInput RewardModel::encode(const std::vector<double>& image,
                                const std::vector<std::string>& title,
                                const std::vector<std::string>& attribute_terms,
                                const std::vector<std::string>& description) const {
  std::optional<std::vector<std::string>> attrs;
  if (use_attributes_) attrs = attribute_terms;
  return encode_reward_input(tokenizer_, net_.config().context, image, title, attrs,
                             description);
}

RewardScore RewardModel::classify(const RewardInput& input) const {
  const auto acts = net_.forward(input.image, input.tokens);
  const auto z = net_.class_logits(acts);
  const double score = 1.0 / (1.0 + std::exp(z[0] - z[1]));
  return {score >= 0.5 ? 1 : 0, score};
}

RewardScore RewardModel::classify(const std::vector<double>& image,
                                  const std::vector<std::string>& title,
                                  const std::vector<std::string>& attribute_terms,
                                  const std::vector<std::string>& description) const {
  return classify(encode(image, title, attribute_terms, description));
}

std::string RewardModel::to_bytes() const {
  Checkpoint c;
  c.kind = "reward";
  c.meta = {{"config", net_.config().to_json()},
            {"tokenizer", tokenizer_.to_json()},
            {"use_attributes", use_attributes_}};
  c.values = net_.params();
  return checkpoint_to_bytes(c);
}

RewardModel RewardModel::from_bytes(const std::string& bytes) {
  const Checkpoint c = checkpoint_from_bytes(bytes, "reward");
  RewardModel m(Tokenizer::from_json(c.meta.at("tokenizer")),
                TransformerConfig::from_json(c.meta.at("config")),
                c.meta.at("use_attributes").get<bool>(), 0);
  if (c.values.size() != m.net_.num_params()) {
    fail(ErrorCode::kConsistency, "reward checkpoint parameter count does not match its config");
  }
  m.net_.params() = c.values;
  return m;
}

void RewardModel::save(const std::string& path) const { write_file(path, to_bytes()); }

RewardModel RewardModel::load(const std::string& path) { return from_bytes(read_file(path)); }

nlohmann::json RewardHyper::to_json() const {
  return {{"lr", lr},
          {"batch", batch},
          {"phase1_epochs", phase1_epochs},
          {"phase2_epochs", phase2_epochs},
          {"seed", seed},
          {"clip_norm", clip_norm},
          {"optimizer", optimizer_name(optimizer)},
          {"use_attributes", use_attributes},
          {"holdout_fraction", holdout_fraction},
          {"max_vocab", max_vocab},
          {"layers", layers},
          {"width", width},
          {"heads", heads},
          {"context", context},
          {"negatives_per_product", negatives_per_product}};
}

RewardHyper RewardHyper::from_json(const nlohmann::json& j) {
  RewardHyper h;
  h.lr = j.value("lr", h.lr);
  h.batch = j.value("batch", h.batch);
  h.phase1_epochs = j.value("phase1_epochs", h.phase1_epochs);
  h.phase2_epochs = j.value("phase2_epochs", h.phase2_epochs);
  h.seed = j.value("seed", h.seed);
  h.clip_norm = j.value("clip_norm", h.clip_norm);
  if (j.contains("optimizer")) h.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  h.use_attributes = j.value("use_attributes", h.use_attributes);
  h.holdout_fraction = j.value("holdout_fraction", h.holdout_fraction);
  h.max_vocab = j.value("max_vocab", h.max_vocab);
  h.layers = j.value("layers", h.layers);
  h.width = j.value("width", h.width);
  h.heads = j.value("heads", h.heads);
  h.context = j.value("context", h.context);
  h.negatives_per_product = j.value("negatives_per_product", h.negatives_per_product);
  if (h.batch == 0) fail(ErrorCode::kInvalidArgument, "batch must be at least 1");
  if (!(h.holdout_fraction >= 0 && h.holdout_fraction < 1)) {
    fail(ErrorCode::kInvalidArgument, "holdout_fraction must lie in [0, 1)");
  }
  return h;
}

nlohmann::json RewardReport::to_json() const {
  nlohmann::json j = {{"phase1_train_accuracy", phase1_train_accuracy},
                      {"phase1_heldout_accuracy", phase1_heldout_accuracy},
                      {"phase1_train", phase1_train},
                      {"phase1_heldout", phase1_heldout},
                      {"phase2_train", phase2_train},
                      {"phase2_heldout", phase2_heldout},
                      {"epoch_loss", epoch_loss}};
  j["phase2_train_accuracy"] =
      phase2_train_accuracy ? nlohmann::json(*phase2_train_accuracy) : nlohmann::json();
  j["phase2_heldout_accuracy"] =
      phase2_heldout_accuracy ? nlohmann::json(*phase2_heldout_accuracy) : nlohmann::json();
  return j;
}

RewardModel make_reward_model(const Catalog& catalog, const RewardHyper& hyper) {
  Tokenizer tok = build_tokenizer(catalog, hyper.max_vocab);
  TransformerConfig cfg;
  cfg.vocab_size = tok.size();
  cfg.image_dim = static_cast<int>(catalog.embedding_dim);
  cfg.layers = hyper.layers;
  cfg.width = hyper.width;
  cfg.heads = hyper.heads;
  cfg.context = hyper.context;
  cfg.num_classes = 2;
  return RewardModel(std::move(tok), cfg, hyper.use_attributes, mix_seed(hyper.seed, 0x4e3));
}

Phase1Data phase1_examples(const RewardModel& model, const Catalog& catalog, std::uint64_t seed,
                           std::size_t pool_size) {
  if (pool_size == 0) fail(ErrorCode::kInvalidArgument, "negative pool size must be positive");
  Phase1Data data;
  const auto title_class = catalog.vocab.class_index("category");
  Rng rng(mix_seed(seed, 0x9e6));
  for (const auto split : {Split::kTrain, Split::kVal}) {
    const auto products = catalog.split(split);
    for (const auto* p : products) {
      const auto terms = attribute_terms(p->attributes);
      RewardExample pos{model.encode(p->embedding, p->title, terms, p->description), 1};
      // Negatives come from the same split so held-out pairs stay unseen.
      std::vector<const ProductRecord*> same, any;
      for (const auto* q : products) {
        if (q == p ||
            count_contradictions(q->description, p->attributes, catalog.vocab) == 0) {
          continue;
        }
        any.push_back(q);
        if (title_class && q->attributes[*title_class] == p->attributes[*title_class]) {
          same.push_back(q);
        }
      }
      auto pool = same.empty() ? any : same;
      rng.shuffle(pool);
      if (split == Split::kVal) {
        data.heldout.push_back(std::move(pos));
        if (!pool.empty()) {
          data.heldout.push_back(
              {model.encode(p->embedding, p->title, terms, pool.front()->description), 0});
        }
        continue;
      }
      data.train.push_back(pos);
      data.train_positives.push_back(std::move(pos));
      std::vector<RewardExample> negs;
      for (std::size_t i = 0; i < std::min(pool_size, pool.size()); ++i) {
        negs.push_back({model.encode(p->embedding, p->title, terms, pool[i]->description), 0});
      }
      if (!negs.empty()) data.train.push_back(negs.front());
      data.train_pools.push_back(std::move(negs));
    }
  }
  return data;
}

void init_reward_from_lm(RewardModel& reward, const Transformer& lm_net,
                         const Tokenizer& lm_tokenizer) {
  TransformerConfig a = reward.net().config();
  TransformerConfig b = lm_net.config();
  a.num_classes = b.num_classes = 0;
  a.init_std = b.init_std;
  if (!(a == b) || !(reward.tokenizer() == lm_tokenizer)) {
    fail(ErrorCode::kConfiguration,
         "language model and reward model differ in architecture or vocabulary");
  }
  const auto& src = lm_net.params();
  if (src.size() > reward.net().num_params()) {
    fail(ErrorCode::kConsistency, "language model has more parameters than the reward body");
  }
  std::copy(src.begin(), src.end(), reward.net().params().begin());
}

RewardExample label_example(const RewardModel& model, const Catalog& catalog,
                            const PreferenceLabel& label) {
  const ProductRecord* p = catalog.try_find(label.product_id);
  if (!p) fail(ErrorCode::kNotFound, "label references unknown product '" + label.product_id + "'");
  return {model.encode(p->embedding, p->title, attribute_terms(p->attributes), label.description),
          label.label};
}

double reward_accuracy(const RewardModel& model, const std::vector<RewardExample>& data) {
  if (data.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& e : data) hit += model.classify(e.input).c == e.label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

namespace {

using EpochData = std::function<const std::vector<RewardExample>&(std::size_t epoch)>;

std::vector<double> run_epochs(RewardModel& model, const EpochData& epoch_data,
                               std::size_t epochs, const RewardHyper& hyper, Optimizer& opt,
                               Rng& rng) {
  auto& net = model.net();
  std::vector<double> grad(net.num_params());
  std::vector<double> losses;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto& data = epoch_data(epoch);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t end = std::min(order.size(), start + hyper.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double w = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const auto& e = data[order[b]];
        total += net.class_loss(e.input.image, e.input.tokens, e.label, w, &grad);
      }
      if (!std::isfinite(total)) fail(ErrorCode::kNumeric, "non-finite reward-model loss");
      opt.step(net.params(), grad);
    }
    losses.push_back(total * hyper.batch / static_cast<double>(data.size()));
  }
  return losses;
}

}  // namespace

RewardReport train_reward(RewardModel& model, const Catalog& catalog,
                          const std::vector<PreferenceLabel>& labels, const RewardHyper& hyper) {
  RewardReport report;
  const Phase1Data p1 = phase1_examples(model, catalog, hyper.seed, hyper.negatives_per_product);
  if (p1.train.empty()) fail(ErrorCode::kPrecondition, "no phase-1 training pairs");

  std::vector<RewardExample> p2_train, p2_heldout;
  if (!labels.empty()) {
    std::set<int> classes;
    for (const auto& l : labels) classes.insert(l.label);
    if (classes.size() < 2) {
      fail(ErrorCode::kDegenerate, "phase-2 labels contain a single class");
    }
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(mix_seed(hyper.seed, 0x5b1));
    split_rng.shuffle(order);
    const auto n_hold = static_cast<std::size_t>(
        std::floor(hyper.holdout_fraction * static_cast<double>(labels.size())));
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& l = labels[order[i]];
      const ProductRecord* p = catalog.try_find(l.product_id);
      if (!p) fail(ErrorCode::kNotFound, "label references unknown product '" + l.product_id + "'");
      if (i < n_hold || p->split == Split::kVal) {
        p2_heldout.push_back(label_example(model, catalog, l));
      } else {
        p2_train.push_back(label_example(model, catalog, l));
        report.phase2_train_products.push_back(l.product_id);
      }
    }
  }

  Optimizer opt(hyper.optimizer, hyper.lr, hyper.clip_norm);
  Rng rng(mix_seed(hyper.seed, 0x4e7));
  Rng draw(mix_seed(hyper.seed, 0x4e8));
  std::vector<RewardExample> epoch_set;
  const EpochData phase1 = [&](std::size_t epoch) -> const std::vector<RewardExample>& {
    if (epoch == 0) return p1.train;
    epoch_set = p1.train_positives;
    for (const auto& pool : p1.train_pools) {
      if (!pool.empty()) epoch_set.push_back(pool[draw.below(pool.size())]);
    }
    return epoch_set;
  };
  report.epoch_loss = run_epochs(model, phase1, hyper.phase1_epochs, hyper, opt, rng);
  if (!p2_train.empty()) {
    const EpochData phase2 = [&](std::size_t) -> const std::vector<RewardExample>& {
      return p2_train;
    };
    const auto more = run_epochs(model, phase2, hyper.phase2_epochs, hyper, opt, rng);
    report.epoch_loss.insert(report.epoch_loss.end(), more.begin(), more.end());
  }

  report.phase1_train = p1.train.size();
  report.phase1_heldout = p1.heldout.size();
  report.phase1_train_accuracy = reward_accuracy(model, p1.train);
  report.phase1_heldout_accuracy = reward_accuracy(model, p1.heldout);
  report.phase2_train = p2_train.size();
  report.phase2_heldout = p2_heldout.size();
  if (!p2_train.empty()) report.phase2_train_accuracy = reward_accuracy(model, p2_train);
  if (!p2_heldout.empty()) report.phase2_heldout_accuracy = reward_accuracy(model, p2_heldout);
  return report;
}

}  // namespace attrgen
