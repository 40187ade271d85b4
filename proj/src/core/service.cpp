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

#include "service.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "common.hpp"
#include "httplib.h"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "rlfinetune.hpp"

namespace attrgen {

namespace fs = std::filesystem;
using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kValidation:
    case ErrorCode::kParse:
    case ErrorCode::kLength:
    case ErrorCode::kShape:
      return 400;
    case ErrorCode::kNotFound:
    case ErrorCode::kLookup:
      return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kBusy:
      return 409;
    case ErrorCode::kPrecondition:
    case ErrorCode::kDegenerate:
      return 412;
    default:
      return 500;
  }
}

namespace {

bool parse_bool(const std::string& v) {
  const std::string s = to_lower(trim(v));
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail(ErrorCode::kConfiguration, "expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != trim(v).size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorCode::kConfiguration, "expected a number, got '" + v + "'");
  }
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string numbered(const char* prefix, std::size_t n, int width) {
  std::ostringstream out;
  out << prefix;
  out.width(width);
  out.fill('0');
  out << n;
  return out.str();
}

Response error_response(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

const std::vector<std::string> kJobKinds = {"train-lm", "train-extractor", "train-reward",
                                            "finetune"};

}  // namespace

void ServiceConfig::set(const std::string& key, const std::string& value) {
  if (key == "data_dir") {
    data_dir = value;
  } else if (key == "catalog") {
    catalog = value;
  } else if (key == "lm") {
    lm = value;
  } else if (key == "extractor") {
    extractor = value;
  } else if (key == "reward") {
    reward = value;
  } else if (key == "host") {
    host = value;
  } else if (key == "port") {
    port = static_cast<int>(parse_double(value));
  } else if (key == "c_min") {
    c_min = parse_double(value);
  } else if (key == "use_ground_truth") {
    use_ground_truth = parse_bool(value);
  } else if (key == "mu") {
    generation.mu = parse_double(value);
  } else if (key == "topk") {
    generation.top_k = static_cast<std::size_t>(parse_double(value));
  } else if (key == "temperature") {
    generation.temperature = parse_double(value);
  } else if (key == "max_len") {
    generation.max_len = static_cast<std::size_t>(parse_double(value));
  } else if (key == "retries") {
    generation.max_retries = static_cast<std::size_t>(parse_double(value));
  } else {
    fail(ErrorCode::kConfiguration, "unknown config key '" + key + "'");
  }
}

ServiceConfig ServiceConfig::from_kv(const std::string& text) {
  ServiceConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key = value");
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return c;
}

json ServiceConfig::to_json() const {
  return {{"data_dir", data_dir},       {"catalog", catalog}, {"lm", lm},
          {"extractor", extractor},     {"reward", reward},   {"host", host},
          {"port", port},               {"c_min", c_min},     {"use_ground_truth", use_ground_truth},
          {"generation", generation.to_json()}};
}

std::string Service::path(const std::string& name) const {
  return (fs::path(cfg_.data_dir) / name).string();
}

void Service::append(const std::string& store, const json& record) const {
  std::ofstream out(path(store + ".jsonl"), std::ios::app);
  if (!out) fail(ErrorCode::kIo, "cannot append to store '" + store + "'");
  out << record.dump() << '\n';
  out.flush();
  if (!out) fail(ErrorCode::kIo, "write to store '" + store + "' failed");
}

std::vector<json> Service::read_store(const std::string& store) const {
  std::vector<json> out;
  const std::string p = path(store + ".jsonl");
  if (!fs::exists(p)) return out;
  std::istringstream in(read_file(p));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(lineno, store + ".jsonl: " + e.what());
    }
  }
  return out;
}

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.data_dir.empty()) fail(ErrorCode::kConfiguration, "data_dir is required");
  cfg_.generation.validate();
  fs::create_directories(path("snapshots"));
  fs::create_directories(path("jobs"));

  const std::string products = path("products.jsonl");
  if (fs::exists(products)) {
    catalog_ = load_catalog(products);
    if (!cfg_.catalog.empty() && !(load_catalog(cfg_.catalog) == catalog_)) {
      fail(ErrorCode::kConflict, "data directory already holds a different catalog");
    }
  } else {
    if (cfg_.catalog.empty()) fail(ErrorCode::kConfiguration, "no catalog configured");
    if (!fs::exists(cfg_.catalog)) fail(ErrorCode::kNotFound, "catalog '" + cfg_.catalog + "' not found");
    catalog_ = load_catalog(cfg_.catalog);
    save_catalog(catalog_, products);
  }

  const auto snaps = read_store("snapshots");
  snapshot_count_ = snaps.size();
  if (!snaps.empty()) {
    current_ = load_snapshot(snaps.back().at("id").get<std::string>());
  } else {
    for (const auto& [what, p] : {std::pair{"lm", cfg_.lm}, std::pair{"extractor", cfg_.extractor}}) {
      if (p.empty()) fail(ErrorCode::kConfiguration, std::string("no ") + what + " checkpoint configured");
      if (!fs::exists(p)) fail(ErrorCode::kNotFound, std::string(what) + " checkpoint '" + p + "' not found");
    }
    if (!cfg_.reward.empty() && !fs::exists(cfg_.reward)) {
      fail(ErrorCode::kNotFound, "reward checkpoint '" + cfg_.reward + "' not found");
    }
    auto lm = std::make_shared<const ConditionalLM>(ConditionalLM::load(cfg_.lm));
    auto ex = std::make_shared<const AttributeExtractor>(AttributeExtractor::load(cfg_.extractor));
    std::shared_ptr<const RewardModel> rw;
    if (!cfg_.reward.empty()) rw = std::make_shared<const RewardModel>(RewardModel::load(cfg_.reward));
    publish(lm, ex, rw, "initial");
  }

  generations_ = read_store("generations");
  for (std::size_t i = 0; i < generations_.size(); ++i) {
    generation_index_[generations_[i].at("id").get<std::string>()] = i;
  }
  labels_ = read_store("labels");
  for (const auto& j : read_store("jobs")) jobs_[j.at("id").get<std::string>()] = j;
  job_count_ = jobs_.size();
  for (auto& [id, j] : jobs_) {
    const std::string s = j.at("status");
    if (s == "queued" || s == "running") {
      j["status"] = "failed";
      j["error"] = "interrupted by a service restart";
      append("jobs", j);
    }
    if (j.at("kind") == "train-reward" && j.contains("metrics")) {
      const auto& m = j["metrics"];
      if (m.contains("reward_accuracy")) reward_accuracy_ = m["reward_accuracy"].get<double>();
    }
  }
  worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() { stop(); }

std::shared_ptr<const Snapshot> Service::snapshot() const {
  std::lock_guard<std::mutex> lock(snap_mu_);
  return current_;
}

std::shared_ptr<const Snapshot> Service::load_snapshot(const std::string& id) const {
  {
    std::lock_guard<std::mutex> lock(snap_mu_);
    const auto it = snapshots_.find(id);
    if (it != snapshots_.end()) return it->second;
  }
  const fs::path dir = fs::path(path("snapshots")) / id;
  if (id.empty() || id.find('/') != std::string::npos || !fs::exists(dir / "lm.ckpt")) {
    fail(ErrorCode::kNotFound, "unknown snapshot '" + id + "'");
  }
  auto s = std::make_shared<Snapshot>();
  s->id = id;
  s->lm = std::make_shared<const ConditionalLM>(ConditionalLM::load((dir / "lm.ckpt").string()));
  s->extractor = std::make_shared<const AttributeExtractor>(
      AttributeExtractor::load((dir / "extractor.ckpt").string()));
  if (fs::exists(dir / "reward.ckpt")) {
    s->reward = std::make_shared<const RewardModel>(RewardModel::load((dir / "reward.ckpt").string()));
  }
  std::lock_guard<std::mutex> lock(snap_mu_);
  return snapshots_.emplace(id, std::move(s)).first->second;
}

std::string Service::publish(std::shared_ptr<const ConditionalLM> lm,
                             std::shared_ptr<const AttributeExtractor> extractor,
                             std::shared_ptr<const RewardModel> reward, const std::string& reason) {
  auto s = std::make_shared<Snapshot>();
  {
    std::lock_guard<std::mutex> lock(snap_mu_);
    s->id = numbered("s", ++snapshot_count_, 4);
  }
  s->lm = std::move(lm);
  s->extractor = std::move(extractor);
  s->reward = std::move(reward);
  // Files first, so a listed snapshot can always be reloaded for replay.
  const fs::path dir = fs::path(path("snapshots")) / s->id;
  fs::create_directories(dir);
  s->lm->save((dir / "lm.ckpt").string());
  s->extractor->save((dir / "extractor.ckpt").string());
  if (s->reward) s->reward->save((dir / "reward.ckpt").string());
  append("snapshots", {{"id", s->id},
                       {"reason", reason},
                       {"has_reward", s->reward != nullptr},
                       {"created_at", now_iso()}});
  std::lock_guard<std::mutex> lock(snap_mu_);
  snapshots_[s->id] = s;
  current_ = s;
  return s->id;
}

Response Service::handle(const std::string& method, const std::string& path,
                         const std::map<std::string, std::string>& query,
                         const std::string& body) {
  try {
    return route(method, path, query, body);
  } catch (const Error& e) {
    return error_response(http_status(e.code()), error_code_name(e.code()), e.what());
  } catch (const json::exception& e) {
    return error_response(400, "parse", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

Response Service::route(const std::string& method, const std::string& path,
                        const std::map<std::string, std::string>& query,
                        const std::string& body) {
  const auto parts = split_path(path);
  const auto parsed = [&] { return trim(body).empty() ? json::object() : json::parse(body); };
  const auto expect = [&](const char* m) {
    if (method != m) fail(ErrorCode::kInvalidArgument, "method " + method + " not allowed on " + path);
  };
  if (parts.size() == 1 && parts[0] == "health") {
    expect("GET");
    return {200, health()};
  }
  if (!parts.empty() && parts[0] == "products") {
    expect("GET");
    if (parts.size() == 1) return {200, list_products(query)};
    if (parts.size() == 2) return {200, get_product(parts[1])};
  }
  if (parts.size() == 1 && parts[0] == "generate") {
    expect("POST");
    return {200, generate(parsed())};
  }
  if (parts.size() == 1 && parts[0] == "generations") {
    expect("GET");
    return {200, list_generations(query)};
  }
  if (parts.size() == 1 && parts[0] == "labels") {
    if (method == "POST") return {201, submit_label(parsed())};
    expect("GET");
    return {200, list_labels(query)};
  }
  if (!parts.empty() && parts[0] == "jobs") {
    if (parts.size() == 1 && method == "POST") return {202, trigger_job(parsed())};
    expect("GET");
    if (parts.size() == 1) {
      std::lock_guard<std::mutex> lock(store_mu_);
      json list = json::array();
      for (const auto& [id, j] : jobs_) list.push_back(j);
      return {200, {{"jobs", list}}};
    }
    if (parts.size() == 2) return {200, get_job(parts[1])};
  }
  if (parts.size() == 2 && parts[0] == "metrics" && parts[1] == "summary") {
    expect("GET");
    return {200, metrics_summary()};
  }
  fail(ErrorCode::kNotFound, "no route for " + method + " " + path);
}

json Service::health() const { return {{"status", "ok"}, {"snapshot", snapshot()->id}}; }

namespace {

json attributes_json(const GroundTruthAttributes& attrs, const AttributeVocabulary& vocab) {
  json out = json::object();
  for (std::size_t k = 0; k < attrs.size(); ++k) {
    if (attrs[k]) out[vocab.at(k).name] = *attrs[k];
  }
  return out;
}

}  // namespace

json Service::list_products(const std::map<std::string, std::string>& query) const {
  std::optional<Split> split;
  if (const auto it = query.find("split"); it != query.end() && !it->second.empty()) {
    split = parse_split(it->second);
  }
  json list = json::array();
  for (const auto& p : catalog_.products) {
    if (split && p.split != *split) continue;
    list.push_back({{"id", p.id},
                    {"title", join(p.title, " ")},
                    {"split", split_name(p.split)},
                    {"attributes", attributes_json(p.attributes, catalog_.vocab)}});
  }
  return {{"products", list}};
}

json Service::get_product(const std::string& id) const {
  const ProductRecord* p = catalog_.try_find(id);
  if (!p) fail(ErrorCode::kNotFound, "unknown product '" + id + "'");
  return {{"id", p->id},
          {"title", join(p->title, " ")},
          {"split", split_name(p->split)},
          {"attributes", attributes_json(p->attributes, catalog_.vocab)},
          {"description", join(p->description, " ")},
          {"embedding", p->embedding}};
}

json Service::generate(const json& req) {
  if (!req.contains("product_id")) fail(ErrorCode::kInvalidArgument, "product_id is required");
  const std::string pid = req.at("product_id").get<std::string>();
  const ProductRecord* p = catalog_.try_find(pid);
  if (!p) fail(ErrorCode::kNotFound, "unknown product '" + pid + "'");
  const auto snap = req.contains("snapshot") ? load_snapshot(req["snapshot"].get<std::string>())
                                             : snapshot();

  GenerationConfig g = cfg_.generation;
  g.mu = req.value("mu", g.mu);
  g.top_k = req.value("topk", g.top_k);
  g.temperature = req.value("temperature", g.temperature);
  g.max_len = req.value("max_len", g.max_len);
  g.max_retries = req.value("retries", g.max_retries);
  g.boost = req.value("boost", true);
  const bool filter = req.value("filter", snap->reward != nullptr);
  const double c_min = req.value("c_min", cfg_.c_min);
  const bool use_gt = req.value("use_ground_truth", cfg_.use_ground_truth);
  if (filter && !snap->reward) {
    fail(ErrorCode::kPrecondition, "snapshot " + snap->id + " has no reward model to filter with");
  }

  std::string id;
  {
    std::lock_guard<std::mutex> lock(store_mu_);
    id = numbered("g", generations_.size() + 1, 6);
  }
  g.seed = req.contains("seed") ? req["seed"].get<std::uint64_t>()
                                : mix_seed(0x5eedULL, std::hash<std::string>{}(id + now_iso()));
  g.validate();

  PipelineOptions opts;
  opts.generation = g;
  opts.c_min = c_min;
  opts.use_ground_truth = use_gt;
  opts.filter = filter;
  const auto out = generate_for_product(*snap->lm, *snap->extractor, snap->reward.get(), *p,
                                        catalog_.vocab, opts);
  const auto& r = out.result;
  const auto& words = out.words;

  json rec = {{"id", id},
              {"product_id", pid},
              {"title", join(p->title, " ")},
              {"description", join(words, " ")},
              {"accepted", filter ? json(r.accepted) : json()},
              {"attempts", r.attempts},
              {"score", filter ? json(r.score) : json()},
              {"truncated", r.truncated},
              {"contradictory", count_contradictions(words, p->attributes, catalog_.vocab) > 0},
              {"attributes", attributes_to_json(out.attributes, catalog_.vocab)},
              {"config",
               {{"mu", g.mu},
                {"topk", g.top_k},
                {"temperature", g.temperature},
                {"max_len", g.max_len},
                {"retries", g.max_retries},
                {"boost", g.boost},
                {"filter", filter},
                {"seed", g.seed},
                {"c_min", c_min},
                {"use_ground_truth", use_gt}}},
              {"snapshot", snap->id},
              {"created_at", now_iso()}};
  if (req.value("trace", false)) rec["trace"] = trace_to_json(r, snap->lm->tokenizer());

  std::lock_guard<std::mutex> lock(store_mu_);
  // Another request may have taken the provisional id meanwhile.
  rec["id"] = numbered("g", generations_.size() + 1, 6);
  append("generations", rec);
  generation_index_[rec["id"]] = generations_.size();
  generations_.push_back(rec);
  return rec;
}

json Service::list_generations(const std::map<std::string, std::string>& query) const {
  std::string status, source;
  if (const auto it = query.find("status"); it != query.end()) status = it->second;
  if (const auto it = query.find("source"); it != query.end()) source = it->second;
  if (!status.empty() && status != "unlabeled" && status != "labeled") {
    fail(ErrorCode::kInvalidArgument, "status must be 'labeled' or 'unlabeled'");
  }
  std::lock_guard<std::mutex> lock(store_mu_);
  std::set<std::string> labeled;
  for (const auto& l : labels_) {
    if (source.empty() || l.value("source", "") == source) {
      labeled.insert(l.value("generation_id", ""));
    }
  }
  json list = json::array();
  for (const auto& g : generations_) {
    const bool has = labeled.count(g.at("id").get<std::string>()) > 0;
    if ((status == "unlabeled" && has) || (status == "labeled" && !has)) continue;
    list.push_back(g);
  }
  return {{"generations", list}};
}

json Service::submit_label(const json& req) {
  if (!req.contains("generation_id")) fail(ErrorCode::kInvalidArgument, "generation_id is required");
  const std::string gid = req.at("generation_id").get<std::string>();
  const std::string source = req.value("source", "human");
  const LabelSource src = parse_label_source(source);
  if (src == LabelSource::kPhase1Negative) {
    fail(ErrorCode::kInvalidArgument, "phase1-negative labels are generated internally");
  }
  PreferenceDims dims;
  if (req.contains("dims")) {
    const auto& d = req["dims"];
    const auto get = [&](const char* key) -> std::optional<bool> {
      if (!d.contains(key) || d[key].is_null()) return std::nullopt;
      return d[key].get<bool>();
    };
    dims.accurate = get("accurate");
    dims.attractive = get("attractive");
    dims.grammatical = get("grammatical");
  }
  const auto c = preference_from_dims(dims);
  if (!c) fail(ErrorCode::kValidation, "dims.accurate and dims.grammatical are required");

  std::lock_guard<std::mutex> lock(store_mu_);
  const auto it = generation_index_.find(gid);
  if (it == generation_index_.end()) fail(ErrorCode::kNotFound, "unknown generation '" + gid + "'");
  for (const auto& l : labels_) {
    if (l.value("generation_id", "") == gid && l.value("source", "") == source) {
      fail(ErrorCode::kConflict, "generation " + gid + " already labeled by source " + source);
    }
  }
  const auto& g = generations_[it->second];
  PreferenceLabel label;
  label.product_id = g.at("product_id").get<std::string>();
  label.description = split_whitespace(g.at("description").get<std::string>());
  label.dims = dims;
  label.label = *c;
  label.source = src;
  label.generation_id = gid;
  json rec = label.to_json();
  rec["id"] = numbered("l", labels_.size() + 1, 6);
  rec["snapshot"] = g.at("snapshot");
  rec["created_at"] = now_iso();
  append("labels", rec);
  labels_.push_back(rec);
  return rec;
}

json Service::list_labels(const std::map<std::string, std::string>& query) const {
  std::string source;
  if (const auto it = query.find("source"); it != query.end()) source = it->second;
  std::lock_guard<std::mutex> lock(store_mu_);
  json list = json::array();
  for (const auto& l : labels_) {
    if (source.empty() || l.value("source", "") == source) list.push_back(l);
  }
  return {{"labels", list}};
}

json Service::trigger_job(const json& req) {
  if (!req.contains("kind")) fail(ErrorCode::kInvalidArgument, "kind is required");
  const std::string kind = req.at("kind").get<std::string>();
  if (std::find(kJobKinds.begin(), kJobKinds.end(), kind) == kJobKinds.end()) {
    fail(ErrorCode::kInvalidArgument, "unknown job kind '" + kind + "'");
  }
  const json config = req.value("config", json::object());
  // Validate eagerly so bad configs are rejected at trigger time.
  if (kind == "train-lm") {
    LmHyper::from_json(config);
  } else if (kind == "train-extractor") {
    ExtractorHyper::from_json(config);
  } else if (kind == "train-reward") {
    RewardHyper::from_json(config);
  } else {
    FinetuneConfig::from_json(config);
    const std::string critic = config.value("critic", "reward");
    if (critic != "reward" && critic != "oracle") {
      fail(ErrorCode::kInvalidArgument, "critic must be 'reward' or 'oracle'");
    }
    if (critic == "reward") {
      std::lock_guard<std::mutex> lock(store_mu_);
      if (labels_.empty()) {
        fail(ErrorCode::kPrecondition,
             "finetuning with the reward critic needs preference labels; none are stored");
      }
    }
    if (critic == "reward" && !snapshot()->reward) {
      fail(ErrorCode::kPrecondition, "current snapshot has no reward model; run train-reward first");
    }
  }

  std::lock_guard<std::mutex> qlock(queue_mu_);
  std::lock_guard<std::mutex> lock(store_mu_);
  for (const auto& [id, j] : jobs_) {
    const std::string s = j.at("status");
    if (j.at("kind") == kind && (s == "queued" || s == "running")) {
      fail(ErrorCode::kBusy, "a " + kind + " job (" + id + ") is already " + s);
    }
  }
  const std::string id = numbered("j", ++job_count_, 4);
  json rec = {{"id", id},
              {"kind", kind},
              {"status", "queued"},
              {"config", config},
              {"log", "jobs/" + id + ".log"},
              {"created_at", now_iso()}};
  append("jobs", rec);
  jobs_[id] = rec;
  queue_.push_back(id);
  queue_cv_.notify_one();
  return rec;
}

json Service::get_job(const std::string& id) const {
  std::lock_guard<std::mutex> lock(store_mu_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) fail(ErrorCode::kNotFound, "unknown job '" + id + "'");
  return it->second;
}

void Service::set_job_status(const std::string& id, const std::string& status,
                             const json& extra) {
  {
    std::lock_guard<std::mutex> lock(store_mu_);
    json& j = jobs_.at(id);
    j["status"] = status;
    j["updated_at"] = now_iso();
    for (const auto& [k, v] : extra.items()) j[k] = v;
    append("jobs", j);
    if (status == "done" && j.at("kind") == "train-reward" && j.contains("metrics")) {
      reward_accuracy_ = j["metrics"].value("reward_accuracy", 0.0);
    }
  }
  std::lock_guard<std::mutex> qlock(queue_mu_);
  job_done_cv_.notify_all();
}

void Service::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock<std::mutex> lock(queue_mu_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
    }
    const json rec = get_job(id);
    set_job_status(id, "running", json::object());
    try {
      const json metrics = run_job(rec, path(rec.at("log").get<std::string>()));
      set_job_status(id, "done", {{"metrics", metrics}});
    } catch (const std::exception& e) {
      set_job_status(id, "failed", {{"error", e.what()}});
    }
  }
}

json Service::run_job(const json& record, const std::string& log_path) {
  const std::string kind = record.at("kind");
  const json& config = record.at("config");
  std::ofstream log(log_path, std::ios::app);
  const auto write = [&](const json& ev) { log << ev.dump() << '\n' << std::flush; };
  const auto snap = snapshot();

  if (kind == "train-lm") {
    const LmHyper h = LmHyper::from_json(config);
    auto lm = std::make_shared<ConditionalLM>(make_lm(catalog_, h));
    const auto report = train_lm(*lm, catalog_, h, [&](std::size_t epoch, double loss) {
      write({{"event", "epoch"}, {"epoch", epoch}, {"loss", loss}});
    });
    const std::string sid = publish(lm, snap->extractor, snap->reward, "train-lm " + record["id"].get<std::string>());
    return {{"final_loss", report.epoch_loss.back()},
            {"initial_loss", report.epoch_loss.front()},
            {"snapshot", sid}};
  }
  if (kind == "train-extractor") {
    const ExtractorHyper h = ExtractorHyper::from_json(config);
    auto ex = std::make_shared<AttributeExtractor>(make_extractor(catalog_, h));
    const auto report = train_extractor(*ex, catalog_, h);
    write({{"event", "done"}, {"val_accuracy", report.val_accuracy}});
    const std::string sid = publish(snap->lm, ex, snap->reward, "train-extractor " + record["id"].get<std::string>());
    return {{"train_accuracy", report.train_accuracy},
            {"val_accuracy", report.val_accuracy},
            {"snapshot", sid}};
  }
  if (kind == "train-reward") {
    const RewardHyper h = RewardHyper::from_json(config);
    std::vector<PreferenceLabel> labels;
    {
      std::lock_guard<std::mutex> lock(store_mu_);
      for (const auto& l : labels_) labels.push_back(PreferenceLabel::from_json(l));
    }
    auto rw = std::make_shared<RewardModel>(make_reward_model(catalog_, h));
    if (config.value("init_from_lm", true)) {
      try {
        init_reward_from_lm(*rw, snap->lm->net(), snap->lm->tokenizer());
        write({{"event", "init"}, {"from", "lm"}});
      } catch (const Error& e) {
        write({{"event", "init"}, {"from", "random"}, {"reason", e.what()}});
      }
    }
    const auto report = train_reward(*rw, catalog_, labels, h);
    json metrics = report.to_json();
    metrics["labels_used"] = labels.size();
    metrics["reward_accuracy"] = report.phase2_heldout_accuracy.value_or(report.phase1_heldout_accuracy);
    write({{"event", "done"}, {"report", metrics}});
    metrics["snapshot"] = publish(snap->lm, snap->extractor, rw, "train-reward " + record["id"].get<std::string>());
    return metrics;
  }
  // finetune
  const FinetuneConfig fc = FinetuneConfig::from_json(config);
  const std::string critic_kind = config.value("critic", "reward");
  auto lm = std::make_shared<ConditionalLM>(*snap->lm);  // private copy
  ProductCritic critic;
  if (critic_kind == "oracle") {
    critic = oracle_critic(lm->tokenizer(), catalog_.vocab);
  } else {
    if (!snap->reward) fail(ErrorCode::kConfiguration, "no reward model in the current snapshot");
    critic = reward_critic(lm->tokenizer(), *snap->reward);
  }
  const auto report = finetune(*lm, catalog_, critic, fc, write);
  json metrics = report.summary_json();
  metrics["snapshot"] = publish(lm, snap->extractor, snap->reward, "finetune " + record["id"].get<std::string>());
  return metrics;
}

json Service::wait_job(const std::string& id, int timeout_ms) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  for (;;) {
    json j = get_job(id);
    const std::string s = j.at("status");
    if (s == "done" || s == "failed") return j;
    std::unique_lock<std::mutex> lock(queue_mu_);
    if (job_done_cv_.wait_until(lock, deadline) == std::cv_status::timeout) return get_job(id);
  }
}

json Service::metrics_summary() const {
  std::lock_guard<std::mutex> lock(store_mu_);
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_snap;  // contradictory, total
  for (const auto& g : generations_) {
    auto& e = per_snap[g.at("snapshot").get<std::string>()];
    e.first += g.value("contradictory", false) ? 1 : 0;
    ++e.second;
  }
  json snaps = json::array();
  for (const auto& [id, e] : per_snap) {
    snaps.push_back({{"snapshot", id},
                     {"generations", e.second},
                     {"contradiction_rate", static_cast<double>(e.first) / static_cast<double>(e.second)}});
  }
  std::size_t preferred = 0;
  for (const auto& l : labels_) preferred += l.value("label", 0) == 1 ? 1 : 0;
  std::map<std::string, std::size_t> by_status;
  for (const auto& [id, j] : jobs_) ++by_status[j.at("status").get<std::string>()];
  json jobs = json::object();
  for (const char* s : {"queued", "running", "done", "failed"}) jobs[s] = by_status[s];
  return {{"snapshot", snapshot()->id},
          {"products", catalog_.products.size()},
          {"generations", generations_.size()},
          {"labels", labels_.size()},
          {"labels_preferred", preferred},
          {"jobs", jobs},
          {"reward_accuracy", reward_accuracy_ ? json(*reward_accuracy_) : json()},
          {"per_snapshot", snaps}};
}

void Service::listen(const std::string& host, int port) {
  if (server_) fail(ErrorCode::kConflict, "service is already listening");
  server_ = std::make_unique<httplib::Server>();
  // The library default is SO_REUSEPORT, which lets two services share a
  // port silently. SO_REUSEADDR alone still allows quick restarts.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  const auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    const Response r = handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body.dump(), "application/json");
  };
  server_->Get(".*", handler);
  server_->Post(".*", handler);
  server_->Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  if (port == 0) {
    bound_port_ = server_->bind_to_any_port(host);
  } else {
    bound_port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (bound_port_ <= 0) {
    server_.reset();
    fail(ErrorCode::kBusy, "cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
  }
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
}

void Service::stop() {
  if (server_) {
    server_->stop();
    if (server_thread_.joinable()) server_thread_.join();
    server_.reset();
  }
  {
    std::lock_guard<std::mutex> lock(queue_mu_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

}  // namespace attrgen
