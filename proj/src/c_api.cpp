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

#include "attrgen/attrgen.h"

#include <cstdlib>
#include <cstring>
#include <map>
#include <memory>
#include <string>

#include "common.hpp"
#include "corpus.hpp"
#include "extractor.hpp"
#include "lmcore.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "reward.hpp"
#include "rlfinetune.hpp"
#include "service.hpp"

struct attrgen_catalog {
  attrgen::Catalog value;
};
struct attrgen_lm {
  attrgen::ConditionalLM value;
};
struct attrgen_extractor {
  attrgen::AttributeExtractor value;
};
struct attrgen_reward {
  attrgen::RewardModel value;
};
struct attrgen_service {
  std::unique_ptr<attrgen::Service> value;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

attrgen_status to_status(attrgen::ErrorCode code) {
  return static_cast<attrgen_status>(static_cast<int>(code) + 1);
}

// Runs `fn`, translating exceptions into a status and the thread's last error.
template <typename Fn>
attrgen_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return ATTRGEN_OK;
  } catch (const attrgen::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return ATTRGEN_E_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ATTRGEN_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ATTRGEN_E_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) attrgen::fail(attrgen::ErrorCode::kInvalidArgument, std::string(name) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

json parse_object(const char* text) {
  if (!text || !*text) return json::object();
  json j = json::parse(text);
  if (!j.is_object()) attrgen::fail(attrgen::ErrorCode::kInvalidArgument, "expected a JSON object");
  return j;
}

const attrgen::ProductRecord& product(const attrgen_catalog* catalog, const char* id) {
  require(id, "product_id");
  const auto* p = catalog->value.try_find(id);
  if (!p) attrgen::fail(attrgen::ErrorCode::kNotFound, std::string("unknown product '") + id + "'");
  return *p;
}

std::map<std::string, std::string> parse_query(const char* query) {
  std::map<std::string, std::string> out;
  if (!query) return out;
  std::string q = query;
  std::size_t start = 0;
  while (start <= q.size()) {
    const auto amp = std::min(q.find('&', start), q.size());
    const std::string part = q.substr(start, amp - start);
    if (!part.empty()) {
      const auto eq = part.find('=');
      out[part.substr(0, eq)] = eq == std::string::npos ? "" : part.substr(eq + 1);
    }
    start = amp + 1;
  }
  return out;
}

}  // namespace

extern "C" {

const char* attrgen_version(void) { return ATTRGEN_VERSION; }

const char* attrgen_status_name(attrgen_status status) {
  if (status == ATTRGEN_OK) return "ok";
  if (status == ATTRGEN_E_INTERNAL) return "internal";
  const int code = static_cast<int>(status) - 1;
  if (code < 0 || code > static_cast<int>(attrgen::ErrorCode::kPrecondition)) return "unknown";
  return attrgen::error_code_name(static_cast<attrgen::ErrorCode>(code));
}

const char* attrgen_last_error(void) { return g_last_error.c_str(); }

void attrgen_string_free(char* s) { std::free(s); }

attrgen_status attrgen_catalog_generate(const char* spec_json, attrgen_catalog** out) {
  return guarded([&] {
    require(out, "out");
    const auto spec = attrgen::CatalogSpec::from_json(parse_object(spec_json));
    *out = new attrgen_catalog{attrgen::generate_catalog(spec)};
  });
}

attrgen_status attrgen_catalog_load(const char* path, attrgen_catalog** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new attrgen_catalog{attrgen::load_catalog(path)};
  });
}

attrgen_status attrgen_catalog_save(const attrgen_catalog* catalog, const char* path) {
  return guarded([&] {
    require(catalog, "catalog");
    require(path, "path");
    attrgen::save_catalog(catalog->value, path);
  });
}

attrgen_status attrgen_catalog_check(const attrgen_catalog* catalog, char** report_json) {
  return guarded([&] {
    require(catalog, "catalog");
    const auto problems = attrgen::check_catalog(catalog->value);
    emit(report_json, json{{"ok", problems.empty()}, {"problems", problems}}.dump());
  });
}

attrgen_status attrgen_catalog_info(const attrgen_catalog* catalog, char** info_json) {
  return guarded([&] {
    require(catalog, "catalog");
    const auto& c = catalog->value;
    json classes = json::array();
    for (const auto& k : c.vocab.classes()) classes.push_back({{"name", k.name}, {"terms", k.terms}});
    emit(info_json, json{{"products", c.products.size()},
                         {"train", c.split(attrgen::Split::kTrain).size()},
                         {"val", c.split(attrgen::Split::kVal).size()},
                         {"test", c.split(attrgen::Split::kTest).size()},
                         {"embedding_dim", c.embedding_dim},
                         {"classes", classes}}
                        .dump());
  });
}

void attrgen_catalog_free(attrgen_catalog* catalog) { delete catalog; }

attrgen_status attrgen_lm_train(const attrgen_catalog* catalog, const char* hyper_json,
                                attrgen_lm** out, char** report_json) {
  return guarded([&] {
    require(catalog, "catalog");
    require(out, "out");
    const auto hyper = attrgen::LmHyper::from_json(parse_object(hyper_json));
    auto lm = std::make_unique<attrgen_lm>(attrgen_lm{attrgen::make_lm(catalog->value, hyper)});
    const auto report = attrgen::train_lm(lm->value, catalog->value, hyper);
    emit(report_json, json{{"epoch_loss", report.epoch_loss},
                           {"steps", report.steps},
                           {"hyper", hyper.to_json()}}
                          .dump());
    *out = lm.release();
  });
}

attrgen_status attrgen_lm_load(const char* path, attrgen_lm** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new attrgen_lm{attrgen::ConditionalLM::load(path)};
  });
}

attrgen_status attrgen_lm_save(const attrgen_lm* lm, const char* path) {
  return guarded([&] {
    require(lm, "lm");
    require(path, "path");
    lm->value.save(path);
  });
}

attrgen_status attrgen_lm_gradcheck(const attrgen_catalog* catalog, double eps,
                                    size_t coordinates, uint64_t seed, char** report_json) {
  return guarded([&] {
    require(catalog, "catalog");
    const auto train = catalog->value.split(attrgen::Split::kTrain);
    if (train.empty()) attrgen::fail(attrgen::ErrorCode::kPrecondition, "no training products");
    attrgen::LmHyper h;
    h.layers = 1;
    h.width = 16;
    h.heads = 2;
    h.seed = seed;
    const auto lm = attrgen::make_lm(catalog->value, h);
    const auto seq = attrgen::make_conditioning_sequence(lm.tokenizer(), *train.front());
    json out = json::object();
    for (int c : {1, 0}) {
      const auto r = attrgen::grad_check(
          lm.net(),
          [&](const attrgen::Transformer& net, std::vector<double>* grad) {
            return attrgen::rl_sequence_loss(net, seq, c, 2.0, grad);
          },
          eps, coordinates, seed);
      out[c == 1 ? "ce_loss" : "punished_loss"] = {{"max_rel_error", r.max_rel_error},
                                                   {"coordinates", r.coordinates},
                                                   {"max_abs_grad", r.max_abs_grad}};
    }
    emit(report_json, out.dump());
  });
}

void attrgen_lm_free(attrgen_lm* lm) { delete lm; }

attrgen_status attrgen_extractor_train(const attrgen_catalog* catalog, const char* hyper_json,
                                       attrgen_extractor** out, char** report_json) {
  return guarded([&] {
    require(catalog, "catalog");
    require(out, "out");
    const auto hyper = attrgen::ExtractorHyper::from_json(parse_object(hyper_json));
    auto ex = std::make_unique<attrgen_extractor>(
        attrgen_extractor{attrgen::make_extractor(catalog->value, hyper)});
    const auto report = attrgen::train_extractor(ex->value, catalog->value, hyper);
    json classes = json::object();
    for (std::size_t k = 0; k < catalog->value.vocab.num_classes(); ++k) {
      classes[catalog->value.vocab.at(k).name] = {{"train_accuracy", report.train_accuracy[k]},
                                                  {"val_accuracy", report.val_accuracy[k]}};
    }
    emit(report_json, json{{"classes", classes},
                           {"final_loss", report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()},
                           {"hyper", hyper.to_json()}}
                          .dump());
    *out = ex.release();
  });
}

attrgen_status attrgen_extractor_load(const char* path, attrgen_extractor** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new attrgen_extractor{attrgen::AttributeExtractor::load(path)};
  });
}

attrgen_status attrgen_extractor_save(const attrgen_extractor* ex, const char* path) {
  return guarded([&] {
    require(ex, "extractor");
    require(path, "path");
    ex->value.save(path);
  });
}

attrgen_status attrgen_extractor_predict(const attrgen_extractor* ex,
                                         const attrgen_catalog* catalog, const char* product_id,
                                         double c_min, char** out_json) {
  return guarded([&] {
    require(ex, "extractor");
    require(catalog, "catalog");
    const auto& p = product(catalog, product_id);
    const auto predicted = ex->value.predict(p.embedding, c_min);
    emit(out_json, json{{"product_id", p.id},
                        {"predicted", attrgen::attributes_to_json(predicted, catalog->value.vocab)}}
                       .dump());
  });
}

void attrgen_extractor_free(attrgen_extractor* ex) { delete ex; }

attrgen_status attrgen_reward_train(const attrgen_catalog* catalog, const attrgen_lm* lm,
                                    const char* labels_jsonl, const char* hyper_json,
                                    attrgen_reward** out, char** report_json) {
  return guarded([&] {
    require(catalog, "catalog");
    require(out, "out");
    const auto hyper = attrgen::RewardHyper::from_json(parse_object(hyper_json));
    const auto labels = labels_jsonl ? attrgen::parse_labels(labels_jsonl)
                                     : std::vector<attrgen::PreferenceLabel>{};
    auto rw = std::make_unique<attrgen_reward>(
        attrgen_reward{attrgen::make_reward_model(catalog->value, hyper)});
    if (lm) attrgen::init_reward_from_lm(rw->value, lm->value.net(), lm->value.tokenizer());
    const auto report = attrgen::train_reward(rw->value, catalog->value, labels, hyper);
    json j = report.to_json();
    j["warm_start"] = lm != nullptr;
    j["hyper"] = hyper.to_json();
    emit(report_json, j.dump());
    *out = rw.release();
  });
}

attrgen_status attrgen_reward_load(const char* path, attrgen_reward** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new attrgen_reward{attrgen::RewardModel::load(path)};
  });
}

attrgen_status attrgen_reward_save(const attrgen_reward* reward, const char* path) {
  return guarded([&] {
    require(reward, "reward");
    require(path, "path");
    reward->value.save(path);
  });
}

attrgen_status attrgen_reward_score(const attrgen_reward* reward, const attrgen_catalog* catalog,
                                    const char* product_id, const char* description,
                                    char** out_json) {
  return guarded([&] {
    require(reward, "reward");
    require(catalog, "catalog");
    require(description, "description");
    const auto& p = product(catalog, product_id);
    const auto s = reward->value.classify(p.embedding, p.title, attrgen::attribute_terms(p.attributes),
                                          attrgen::split_whitespace(description));
    emit(out_json, json{{"c", s.c}, {"score", s.score}}.dump());
  });
}

attrgen_status attrgen_reward_eval(const attrgen_reward* reward, const attrgen_catalog* catalog,
                                   const char* labels_jsonl, char** out_json) {
  return guarded([&] {
    require(reward, "reward");
    require(catalog, "catalog");
    require(labels_jsonl, "labels_jsonl");
    std::vector<attrgen::RewardExample> data;
    for (const auto& l : attrgen::parse_labels(labels_jsonl)) {
      data.push_back(attrgen::label_example(reward->value, catalog->value, l));
    }
    if (data.empty()) attrgen::fail(attrgen::ErrorCode::kInvalidArgument, "no labels to evaluate");
    emit(out_json,
         json{{"labels", data.size()}, {"accuracy", attrgen::reward_accuracy(reward->value, data)}}
             .dump());
  });
}

void attrgen_reward_free(attrgen_reward* reward) { delete reward; }

attrgen_status attrgen_generate(const attrgen_lm* lm, const attrgen_extractor* ex,
                                const attrgen_reward* reward, const attrgen_catalog* catalog,
                                const char* product_id, const char* config_json,
                                char** out_json) {
  return guarded([&] {
    require(lm, "lm");
    require(ex, "extractor");
    require(catalog, "catalog");
    const auto& p = product(catalog, product_id);
    const json cfg = parse_object(config_json);
    attrgen::PipelineOptions opts;
    opts.generation = attrgen::GenerationConfig::from_json(cfg);
    opts.c_min = cfg.value("c_min", opts.c_min);
    opts.use_ground_truth = cfg.value("use_ground_truth", opts.use_ground_truth);
    opts.filter = cfg.value("filter", false);
    const auto out = attrgen::generate_for_product(lm->value, ex->value,
                                                   reward ? &reward->value : nullptr, p,
                                                   catalog->value.vocab, opts);
    json j = {{"product_id", p.id},
              {"description", attrgen::join(out.words, " ")},
              {"attributes", attrgen::attributes_to_json(out.attributes, catalog->value.vocab)},
              {"attempts", out.result.attempts},
              {"truncated", out.result.truncated},
              {"config", opts.generation.to_json()}};
    if (opts.filter) {
      j["accepted"] = out.result.accepted;
      j["score"] = out.result.score;
    }
    if (cfg.value("trace", false)) j["trace"] = attrgen::trace_to_json(out.result, lm->value.tokenizer());
    emit(out_json, j.dump());
  });
}

attrgen_status attrgen_evaluate(const attrgen_catalog* catalog, const char* predictions_jsonl,
                                char** report_jsonl) {
  return guarded([&] {
    require(catalog, "catalog");
    require(predictions_jsonl, "predictions_jsonl");
    const auto preds = attrgen::parse_predictions(predictions_jsonl);
    emit(report_jsonl, attrgen::evaluate(preds, catalog->value).to_jsonl());
  });
}

attrgen_status attrgen_two_proportion_test(size_t x1, size_t n1, size_t x2, size_t n2, double* z,
                                           double* p_value) {
  return guarded([&] {
    const auto t = attrgen::two_proportion_test(x1, n1, x2, n2);
    if (z) *z = t.z;
    if (p_value) *p_value = t.p_value;
  });
}

attrgen_status attrgen_finetune(attrgen_lm* lm, const attrgen_catalog* catalog,
                                const attrgen_reward* reward, const char* config_json,
                                char** log_jsonl) {
  return guarded([&] {
    require(lm, "lm");
    require(catalog, "catalog");
    const json cfg = parse_object(config_json);
    const auto fc = attrgen::FinetuneConfig::from_json(cfg);
    const std::string critic = cfg.value("critic", reward ? "reward" : "oracle");
    attrgen::ProductCritic fn;
    if (critic == "oracle") {
      fn = attrgen::oracle_critic(lm->value.tokenizer(), catalog->value.vocab);
    } else if (critic == "reward") {
      if (!reward) attrgen::fail(attrgen::ErrorCode::kPrecondition, "critic 'reward' needs a reward model");
      fn = attrgen::reward_critic(lm->value.tokenizer(), reward->value);
    } else {
      attrgen::fail(attrgen::ErrorCode::kInvalidArgument, "critic must be 'oracle' or 'reward'");
    }
    // Train a copy so a failure leaves the caller's model untouched.
    attrgen::ConditionalLM copy = lm->value;
    const auto report = attrgen::finetune(copy, catalog->value, fn, fc);
    lm->value = std::move(copy);
    emit(log_jsonl, report.to_jsonl());
  });
}

attrgen_status attrgen_service_open(const char* config_kv, attrgen_service** out) {
  return guarded([&] {
    require(config_kv, "config");
    require(out, "out");
    auto svc = std::make_unique<attrgen::Service>(attrgen::ServiceConfig::from_kv(config_kv));
    *out = new attrgen_service{std::move(svc)};
  });
}

attrgen_status attrgen_service_request(attrgen_service* svc, const char* method, const char* path,
                                       const char* query, const char* body, int* http_status,
                                       char** response_body) {
  return guarded([&] {
    require(svc, "service");
    require(method, "method");
    require(path, "path");
    const auto r = svc->value->handle(method, path, parse_query(query), body ? body : "");
    if (http_status) *http_status = r.status;
    emit(response_body, r.body.dump());
  });
}

attrgen_status attrgen_service_listen(attrgen_service* svc, const char* host, int port,
                                      int* bound_port) {
  return guarded([&] {
    require(svc, "service");
    svc->value->listen(host ? host : svc->value->config().host,
                       port < 0 ? svc->value->config().port : port);
    if (bound_port) *bound_port = svc->value->bound_port();
  });
}

attrgen_status attrgen_service_wait_job(attrgen_service* svc, const char* job_id, int timeout_ms,
                                        char** job_json) {
  return guarded([&] {
    require(svc, "service");
    require(job_id, "job_id");
    emit(job_json, svc->value->wait_job(job_id, timeout_ms).dump());
  });
}

void attrgen_service_free(attrgen_service* svc) { delete svc; }

}  // extern "C"
