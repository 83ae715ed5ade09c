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

#include "ani/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ani/errors.hpp"
#include "ani/serialization.hpp"
#include "ani/version.hpp"

namespace ani {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void KvConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool KvConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KvConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

KvConfig KvConfig::from_text(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + " has no '=': " + line);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + " has empty key");
    cfg.set(key, value);
  }
  return cfg;
}

KvConfig KvConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file missing: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_text(text);
}

void KvConfig::apply_override(const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must be key=value, got: " + assignment);
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

uint64_t KvConfig::hash() const {
  std::string blob;
  for (const auto& [k, v] : values_) {
    blob += k;
    blob += '=';
    blob += v;
    blob += '\n';
  }
  return fnv1a64_str(blob);
}

std::string make_run_id(const std::string& method, const std::string& dataset, double lambda,
                        uint64_t seed, uint64_t config_hash) {
  char lam[32];
  std::snprintf(lam, sizeof(lam), "%g", lambda);
  std::string lam_s(lam);
  for (char& c : lam_s) {
    if (c == '.') c = 'p';
    if (c == '+') c = '_';
  }
  return method + "_" + dataset + "_lam" + lam_s + "_s" + std::to_string(seed) + "_" +
         hex64(config_hash).substr(0, 8);
}

std::string iso8601_utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json manifest_new(const std::string& method, const std::string& dataset, double lambda,
                            uint64_t seed, const KvConfig& config) {
  nlohmann::json m;
  m["run_id"] = make_run_id(method, dataset, lambda, seed, config.hash());
  m["method"] = method;
  m["dataset"] = dataset;
  m["lambda"] = lambda;
  m["seed"] = seed;
  m["config_hash"] = hex64(config.hash());
  m["source_revision"] = ANI_SOURCE_REVISION;
  m["version"] = ANI_VERSION;
  m["created_at"] = iso8601_utc_now();
  m["config"] = config.values();
  m["metrics"] = nlohmann::json::object();
  m["artifacts"] = nlohmann::json::object();
  return m;
}

void manifest_finish(nlohmann::json& m) { m["finished_at"] = iso8601_utc_now(); }

void write_manifest(const nlohmann::json& m, const std::string& path) {
  write_text_file_atomic(path, m.dump(2) + "\n");
}

nlohmann::json read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest missing: " + path);
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest unreadable: " + path + ": " + e.what());
  }
  return m;
}

}  // namespace ani
