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

// Command-line front end. Talks to the library only through the C API.

#include <attrgen/attrgen.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

struct Failure {
  attrgen_status status;
  std::string message;
};

void check(attrgen_status s) {
  if (s != ATTRGEN_OK) throw Failure{s, attrgen_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  attrgen_string_free(s);
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{ATTRGEN_E_IO, "cannot read '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Failure{ATTRGEN_E_IO, "cannot write '" + path + "'"};
}

// A JSON argument is inline text or @path.
std::string json_arg(const std::string& arg) {
  if (arg.empty()) return "{}";
  return arg[0] == '@' ? read_text(arg.substr(1)) : arg;
}

std::string pretty(const std::string& j) { return json::parse(j).dump(2) + "\n"; }

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};

using Catalog = Handle<attrgen_catalog, attrgen_catalog_free>;
using Lm = Handle<attrgen_lm, attrgen_lm_free>;
using Extractor = Handle<attrgen_extractor, attrgen_extractor_free>;
using Reward = Handle<attrgen_reward, attrgen_reward_free>;
using Service = Handle<attrgen_service, attrgen_service_free>;

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attrgen: attribute-controlled product description generation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(attrgen_version()));

  std::string catalog_path, lm_path, ex_path, reward_path, out_path, hyper, labels_path;
  std::string product_id, report_path;

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Synthetic catalog tools");
  corpus->require_subcommand(1);
  std::string spec;
  auto* corpus_gen = corpus->add_subcommand("gen", "Generate a catalog");
  corpus_gen->add_option("--spec", spec, "Catalog spec JSON or @file");
  corpus_gen->add_option("--out", out_path, "Output JSONL")->required();
  auto* corpus_validate = corpus->add_subcommand("validate", "Check a catalog's invariants");
  corpus_validate->add_option("--catalog", catalog_path)->required();
  auto* corpus_info = corpus->add_subcommand("info", "Summarize a catalog");
  corpus_info->add_option("--catalog", catalog_path)->required();

  // lm
  auto* lm = app.add_subcommand("lm", "Conditional language model");
  lm->require_subcommand(1);
  auto* lm_train = lm->add_subcommand("train", "Train on the catalog's train split");
  lm_train->add_option("--catalog", catalog_path)->required();
  lm_train->add_option("--out", out_path, "Checkpoint path")->required();
  lm_train->add_option("--hyper", hyper, "Hyperparameters JSON or @file");
  lm_train->add_option("--report", report_path, "Training report path");
  double eps = 1e-5;
  std::size_t coords = 64;
  std::uint64_t seed = 1;
  auto* lm_gradcheck = lm->add_subcommand("gradcheck", "Finite-difference gradient check");
  lm_gradcheck->add_option("--catalog", catalog_path)->required();
  lm_gradcheck->add_option("--eps", eps);
  lm_gradcheck->add_option("--coordinates", coords);
  lm_gradcheck->add_option("--seed", seed);

  // extractor
  auto* ex = app.add_subcommand("extractor", "Attribute extractor");
  ex->require_subcommand(1);
  auto* ex_train = ex->add_subcommand("train", "Train on catalog embeddings");
  ex_train->add_option("--catalog", catalog_path)->required();
  ex_train->add_option("--out", out_path)->required();
  ex_train->add_option("--hyper", hyper);
  ex_train->add_option("--report", report_path);
  double c_min = 0.5;
  auto* ex_predict = ex->add_subcommand("predict", "Predict one product's attributes");
  ex_predict->add_option("--catalog", catalog_path)->required();
  ex_predict->add_option("--model", ex_path)->required();
  ex_predict->add_option("--product", product_id)->required();
  ex_predict->add_option("--c-min", c_min);

  // reward
  auto* rw = app.add_subcommand("reward", "Reward model");
  rw->require_subcommand(1);
  auto* rw_train = rw->add_subcommand("train", "Phase 1 on the catalog, phase 2 on labels");
  rw_train->add_option("--catalog", catalog_path)->required();
  rw_train->add_option("--out", out_path)->required();
  rw_train->add_option("--lm", lm_path, "Warm start from this LM checkpoint");
  rw_train->add_option("--labels", labels_path, "Preference labels JSONL");
  rw_train->add_option("--hyper", hyper);
  rw_train->add_option("--report", report_path);
  auto* rw_eval = rw->add_subcommand("eval", "Accuracy on a label file");
  rw_eval->add_option("--catalog", catalog_path)->required();
  rw_eval->add_option("--model", reward_path)->required();
  rw_eval->add_option("--labels", labels_path)->required();
  std::string description;
  auto* rw_score = rw->add_subcommand("score", "Score one description");
  rw_score->add_option("--catalog", catalog_path)->required();
  rw_score->add_option("--model", reward_path)->required();
  rw_score->add_option("--product", product_id)->required();
  rw_score->add_option("--description", description)->required();

  // generate
  auto* gen = app.add_subcommand("generate", "Generate descriptions");
  double mu = 0.5, temperature = 1.0;
  std::size_t topk = 40, retries = 3, max_len = 40;
  bool no_boost = false, no_filter = false, trace = false, no_gt = false;
  std::string split;
  gen->add_option("--catalog", catalog_path)->required();
  gen->add_option("--lm", lm_path)->required();
  gen->add_option("--extractor", ex_path)->required();
  gen->add_option("--reward", reward_path, "Enables filtering");
  auto* gen_product = gen->add_option("--product", product_id);
  gen->add_option("--split", split, "Generate for every product of a split")->excludes(gen_product);
  gen->add_option("--mu", mu);
  gen->add_option("--topk", topk);
  gen->add_option("--temperature", temperature);
  gen->add_option("--max-len", max_len);
  gen->add_option("--retries", retries);
  gen->add_option("--seed", seed);
  gen->add_option("--c-min", c_min);
  gen->add_flag("--no-boost", no_boost);
  gen->add_flag("--no-filter", no_filter);
  gen->add_flag("--no-ground-truth", no_gt, "Skip validating predictions against the catalog");
  gen->add_flag("--trace", trace, "Include per-step boosting traces");
  gen->add_option("--out", out_path, "Output JSONL (default stdout)");

  // eval
  std::string predictions;
  auto* ev = app.add_subcommand("eval", "BLEU, ROUGE-L, METEOR and contradiction rate");
  ev->add_option("--catalog", catalog_path)->required();
  ev->add_option("--predictions", predictions)->required();
  ev->add_option("--out", out_path);

  // finetune
  std::string critic = "oracle";
  auto* ft = app.add_subcommand("finetune", "Critic-weighted finetuning");
  ft->add_option("--catalog", catalog_path)->required();
  ft->add_option("--lm", lm_path)->required();
  ft->add_option("--out", out_path)->required();
  ft->add_option("--reward", reward_path);
  ft->add_option("--critic", critic)->check(CLI::IsMember({"oracle", "reward"}));
  ft->add_option("--config", hyper, "Finetune config JSON or @file");
  ft->add_option("--log", report_path, "JSONL training log");

  // serve and api
  std::string config_path, host;
  int port = -1;
  auto* serve = app.add_subcommand("serve", "Run the labeling service");
  serve->add_option("--config", config_path, "key = value config file")->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  std::string method, path, query, body;
  auto* api = app.add_subcommand("api", "One in-process service request");
  api->add_option("--config", config_path)->required();
  api->add_option("method", method)->required()->check(CLI::IsMember({"GET", "POST"}));
  api->add_option("path", path)->required();
  api->add_option("--query", query, "a=1&b=2");
  api->add_option("--body", body, "JSON or @file");
  int wait_ms = 0;
  api->add_option("--wait", wait_ms, "After POST /jobs, wait this long for completion");

  CLI11_PARSE(app, argc, argv);

  try {
    Catalog cat;
    const auto load_catalog = [&] { check(attrgen_catalog_load(catalog_path.c_str(), &cat.p)); };

    if (corpus_gen->parsed()) {
      check(attrgen_catalog_generate(json_arg(spec).c_str(), &cat.p));
      check(attrgen_catalog_save(cat.p, out_path.c_str()));
      char* info = nullptr;
      check(attrgen_catalog_info(cat.p, &info));
      std::cout << pretty(take(info));
    } else if (corpus_validate->parsed()) {
      load_catalog();
      char* report = nullptr;
      check(attrgen_catalog_check(cat.p, &report));
      const auto r = json::parse(take(report));
      std::cout << r.dump(2) << "\n";
      return r.at("ok").get<bool>() ? 0 : 1;
    } else if (corpus_info->parsed()) {
      load_catalog();
      char* info = nullptr;
      check(attrgen_catalog_info(cat.p, &info));
      std::cout << pretty(take(info));
    } else if (lm_train->parsed()) {
      load_catalog();
      Lm m;
      char* report = nullptr;
      check(attrgen_lm_train(cat.p, json_arg(hyper).c_str(), &m.p, &report));
      check(attrgen_lm_save(m.p, out_path.c_str()));
      const std::string r = pretty(take(report));
      if (!report_path.empty()) write_text(report_path, r);
      std::cout << r;
    } else if (lm_gradcheck->parsed()) {
      load_catalog();
      char* report = nullptr;
      check(attrgen_lm_gradcheck(cat.p, eps, coords, seed, &report));
      std::cout << pretty(take(report));
    } else if (ex_train->parsed()) {
      load_catalog();
      Extractor m;
      char* report = nullptr;
      check(attrgen_extractor_train(cat.p, json_arg(hyper).c_str(), &m.p, &report));
      check(attrgen_extractor_save(m.p, out_path.c_str()));
      const std::string r = pretty(take(report));
      if (!report_path.empty()) write_text(report_path, r);
      std::cout << r;
    } else if (ex_predict->parsed()) {
      load_catalog();
      Extractor m;
      check(attrgen_extractor_load(ex_path.c_str(), &m.p));
      char* out = nullptr;
      check(attrgen_extractor_predict(m.p, cat.p, product_id.c_str(), c_min, &out));
      std::cout << pretty(take(out));
    } else if (rw_train->parsed()) {
      load_catalog();
      Lm base;
      if (!lm_path.empty()) check(attrgen_lm_load(lm_path.c_str(), &base.p));
      const std::string labels = labels_path.empty() ? "" : read_text(labels_path);
      Reward m;
      char* report = nullptr;
      check(attrgen_reward_train(cat.p, base.p, labels_path.empty() ? nullptr : labels.c_str(),
                                 json_arg(hyper).c_str(), &m.p, &report));
      check(attrgen_reward_save(m.p, out_path.c_str()));
      const std::string r = pretty(take(report));
      if (!report_path.empty()) write_text(report_path, r);
      std::cout << r;
    } else if (rw_eval->parsed()) {
      load_catalog();
      Reward m;
      check(attrgen_reward_load(reward_path.c_str(), &m.p));
      char* out = nullptr;
      check(attrgen_reward_eval(m.p, cat.p, read_text(labels_path).c_str(), &out));
      std::cout << pretty(take(out));
    } else if (rw_score->parsed()) {
      load_catalog();
      Reward m;
      check(attrgen_reward_load(reward_path.c_str(), &m.p));
      char* out = nullptr;
      check(attrgen_reward_score(m.p, cat.p, product_id.c_str(), description.c_str(), &out));
      std::cout << pretty(take(out));
    } else if (gen->parsed()) {
      if (product_id.empty() && split.empty()) {
        throw Failure{ATTRGEN_E_INVALID_ARGUMENT, "give --product or --split"};
      }
      load_catalog();
      Lm m;
      Extractor e;
      Reward r;
      check(attrgen_lm_load(lm_path.c_str(), &m.p));
      check(attrgen_extractor_load(ex_path.c_str(), &e.p));
      if (!reward_path.empty()) check(attrgen_reward_load(reward_path.c_str(), &r.p));
      std::vector<std::string> ids;
      if (!product_id.empty()) {
        ids.push_back(product_id);
      } else {
        // Product ids come from the catalog file itself.
        std::istringstream in(read_text(catalog_path));
        std::string line;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          const auto j = json::parse(line);
          if (j.contains("split") && j["split"] == split) ids.push_back(j.at("id"));
        }
      }
      std::ostringstream out;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const json cfg = {{"mu", mu},
                          {"top_k", topk},
                          {"temperature", temperature},
                          {"max_len", max_len},
                          {"max_retries", retries},
                          {"seed", seed + i},
                          {"boost", !no_boost},
                          {"filter", r.p != nullptr && !no_filter},
                          {"c_min", c_min},
                          {"use_ground_truth", !no_gt},
                          {"trace", trace}};
        char* res = nullptr;
        check(attrgen_generate(m.p, e.p, r.p, cat.p, ids[i].c_str(), cfg.dump().c_str(), &res));
        out << take(res) << "\n";
      }
      write_text(out_path, out.str());
    } else if (ev->parsed()) {
      load_catalog();
      char* report = nullptr;
      check(attrgen_evaluate(cat.p, read_text(predictions).c_str(), &report));
      const std::string r = take(report);
      write_text(out_path, r);
      if (!out_path.empty() && out_path != "-") {
        std::cout << json::parse(r.substr(r.rfind('\n', r.size() - 2) + 1)).dump(2) << "\n";
      }
    } else if (ft->parsed()) {
      load_catalog();
      Lm m;
      Reward r;
      check(attrgen_lm_load(lm_path.c_str(), &m.p));
      if (!reward_path.empty()) check(attrgen_reward_load(reward_path.c_str(), &r.p));
      auto cfg = json::parse(json_arg(hyper));
      cfg["critic"] = critic;
      char* log = nullptr;
      check(attrgen_finetune(m.p, cat.p, r.p, cfg.dump().c_str(), &log));
      check(attrgen_lm_save(m.p, out_path.c_str()));
      const std::string l = take(log);
      if (!report_path.empty()) write_text(report_path, l);
      std::cout << json::parse(l.substr(l.rfind('\n', l.size() - 2) + 1)).dump(2) << "\n";
    } else if (serve->parsed()) {
      Service svc;
      check(attrgen_service_open(read_text(config_path).c_str(), &svc.p));
      int bound = 0;
      check(attrgen_service_listen(svc.p, host.empty() ? nullptr : host.c_str(), port, &bound));
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on port " << bound << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    } else if (api->parsed()) {
      Service svc;
      check(attrgen_service_open(read_text(config_path).c_str(), &svc.p));
      int status = 0;
      char* res = nullptr;
      const std::string b = body.empty() ? "" : json_arg(body);
      check(attrgen_service_request(svc.p, method.c_str(), path.c_str(),
                                    query.empty() ? nullptr : query.c_str(), b.c_str(), &status,
                                    &res));
      std::string out = take(res);
      if (wait_ms > 0 && method == "POST" && path == "/jobs" && status == 202) {
        const std::string id = json::parse(out).at("id");
        char* job = nullptr;
        check(attrgen_service_wait_job(svc.p, id.c_str(), wait_ms, &job));
        out = take(job);
      }
      std::cout << pretty(out);
      return status < 400 ? 0 : 1;
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << attrgen_status_name(f.status) << ": " << f.message << "\n";
    return static_cast<int>(f.status);
  } catch (const json::exception& e) {
    std::cerr << "error: parse: " << e.what() << "\n";
    return static_cast<int>(ATTRGEN_E_PARSE);
  }
  return 0;
}
