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

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "corpus.hpp"
#include "decoder.hpp"
#include "extractor.hpp"
#include "json.hpp"
#include "lmcore.hpp"
#include "reward.hpp"

namespace httplib {
class Server;
}

namespace attrgen {

struct ServiceConfig {
  std::string data_dir;
  std::string catalog;    // seeds <data_dir>/products.jsonl on first start
  std::string lm;         // checkpoints for the first snapshot
  std::string extractor;
  std::string reward;     // optional
  std::string host = "127.0.0.1";
  int port = 8080;
  double c_min = 0.5;
  bool use_ground_truth = true;  // validate predictions against catalog attributes
  GenerationConfig generation;

  // "key = value" lines; '#' starts a comment.
  static ServiceConfig from_kv(const std::string& text);
  void set(const std::string& key, const std::string& value);
  nlohmann::json to_json() const;
};

// An immutable, published set of models. Generations name the snapshot that
// produced them.
struct Snapshot {
  std::string id;
  std::shared_ptr<const ConditionalLM> lm;
  std::shared_ptr<const AttributeExtractor> extractor;
  std::shared_ptr<const RewardModel> reward;  // may be null
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // In-process dispatch of one API request. Never throws; failures become
  // error bodies {error: {code, message}} with an HTTP-style status.
  Response handle(const std::string& method, const std::string& path,
                  const std::map<std::string, std::string>& query, const std::string& body);

  // Binds and serves on a background thread; throws when the port is busy.
  void listen(const std::string& host, int port);
  int bound_port() const { return bound_port_; }
  void stop();

  // Blocks until the job is done or failed, or the timeout passes.
  nlohmann::json wait_job(const std::string& id, int timeout_ms);

  std::shared_ptr<const Snapshot> snapshot() const;
  const Catalog& catalog() const { return catalog_; }
  const ServiceConfig& config() const { return cfg_; }

 private:
  Response route(const std::string& method, const std::string& path,
                 const std::map<std::string, std::string>& query, const std::string& body);
  nlohmann::json health() const;
  nlohmann::json list_products(const std::map<std::string, std::string>& query) const;
  nlohmann::json get_product(const std::string& id) const;
  nlohmann::json generate(const nlohmann::json& req);
  nlohmann::json list_generations(const std::map<std::string, std::string>& query) const;
  nlohmann::json submit_label(const nlohmann::json& req);
  nlohmann::json list_labels(const std::map<std::string, std::string>& query) const;
  nlohmann::json trigger_job(const nlohmann::json& req);
  nlohmann::json get_job(const std::string& id) const;
  nlohmann::json metrics_summary() const;

  std::shared_ptr<const Snapshot> load_snapshot(const std::string& id) const;
  std::string publish(std::shared_ptr<const ConditionalLM> lm,
                      std::shared_ptr<const AttributeExtractor> extractor,
                      std::shared_ptr<const RewardModel> reward, const std::string& reason);
  void append(const std::string& store, const nlohmann::json& record) const;
  std::vector<nlohmann::json> read_store(const std::string& store) const;
  std::string path(const std::string& name) const;

  void worker_loop();
  nlohmann::json run_job(const nlohmann::json& record, const std::string& log_path);
  void set_job_status(const std::string& id, const std::string& status,
                      const nlohmann::json& extra);

  ServiceConfig cfg_;
  Catalog catalog_;

  mutable std::mutex snap_mu_;
  std::shared_ptr<const Snapshot> current_;
  mutable std::map<std::string, std::shared_ptr<const Snapshot>> snapshots_;
  std::size_t snapshot_count_ = 0;

  mutable std::mutex store_mu_;  // generations, labels, jobs
  std::vector<nlohmann::json> generations_;
  std::map<std::string, std::size_t> generation_index_;
  std::vector<nlohmann::json> labels_;
  std::map<std::string, nlohmann::json> jobs_;  // latest record per id
  std::size_t job_count_ = 0;
  std::optional<double> reward_accuracy_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable job_done_cv_;
  std::deque<std::string> queue_;
  bool stopping_ = false;
  std::thread worker_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
  int bound_port_ = 0;
};

// Maps an error code onto an HTTP status.
int http_status(ErrorCode code);

}  // namespace attrgen
