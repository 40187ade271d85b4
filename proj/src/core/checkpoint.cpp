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

#include "checkpoint.hpp"

#include <cstring>
#include <sstream>

#include "common.hpp"
#include "corpus.hpp"

namespace attrgen {

namespace {
constexpr const char* kMagic = "ATTRGEN-CKPT 1";
}

std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
  std::string out = std::string(kMagic) + "\n" + ckpt.kind + "\n" + ckpt.meta.dump() + "\n" +
                    std::to_string(ckpt.values.size()) + "\n";
  const std::size_t header = out.size();
  out.resize(header + ckpt.values.size() * sizeof(double));
  if (!ckpt.values.empty()) {
    std::memcpy(out.data() + header, ckpt.values.data(), ckpt.values.size() * sizeof(double));
  }
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes, const std::string& expected_kind) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) fail(ErrorCode::kParse, "truncated checkpoint header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != kMagic) fail(ErrorCode::kParse, "not an attrgen checkpoint");
  Checkpoint ckpt;
  ckpt.kind = next_line();
  if (!expected_kind.empty() && ckpt.kind != expected_kind) {
    fail(ErrorCode::kConsistency,
         "checkpoint holds a '" + ckpt.kind + "', expected '" + expected_kind + "'");
  }
  try {
    ckpt.meta = nlohmann::json::parse(next_line());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("checkpoint metadata: ") + e.what());
  }
  const std::size_t n = std::stoull(next_line());
  if (bytes.size() - pos != n * sizeof(double)) {
    fail(ErrorCode::kParse, "checkpoint payload size does not match its header");
  }
  ckpt.values.resize(n);
  if (n) std::memcpy(ckpt.values.data(), bytes.data() + pos, n * sizeof(double));
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file(path, checkpoint_to_bytes(ckpt));
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind) {
  return checkpoint_from_bytes(read_file(path), expected_kind);
}

}  // namespace attrgen
