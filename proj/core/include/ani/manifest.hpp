// Copyright 2026 The ANI Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ani {

// Flat key=value configuration: one `key = value` per line, `#` comments,
// dotted keys. Later assignments win; command-line overrides apply last.
class KvConfig {
 public:
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback = "") const;
  const std::map<std::string, std::string>& values() const { return values_; }

  static KvConfig from_text(const std::string& text);
  static KvConfig from_file(const std::string& path);
  // "key=value" form used by command-line overrides.
  void apply_override(const std::string& assignment);

  // Stable content hash over sorted key=value pairs.
  uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;
};

std::string make_run_id(const std::string& method, const std::string& dataset, double lambda,
                        uint64_t seed, uint64_t config_hash);

// The run manifest is a JSON document binding one run to its configuration,
// seed, source revision, metric summary, and artifact paths. These helpers
// keep its schema in one place; writes are atomic (write temp, rename).
nlohmann::json manifest_new(const std::string& method, const std::string& dataset, double lambda,
                            uint64_t seed, const KvConfig& config);
void manifest_finish(nlohmann::json& m);
void write_manifest(const nlohmann::json& m, const std::string& path);
nlohmann::json read_manifest(const std::string& path);

std::string iso8601_utc_now();

}  // namespace ani
