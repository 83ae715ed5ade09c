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

#include "ani/client.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ani/errors.hpp"
#include "ani/serialization.hpp"
#include "ani/transform.hpp"

namespace ani {

using nlohmann::json;

namespace {

std::string tensor_hash(const Tensor& t) {
  std::span<const uint8_t> bytes(reinterpret_cast<const uint8_t*>(t.data()),
                                 static_cast<size_t>(t.numel()) * sizeof(float));
  return hex64(fnv1a64(bytes));
}

}  // namespace

ClientResult client_infer(Network& mask_net, const Tensor& image, const std::string& server_url,
                          Rng& rng, const std::string& request_id) {
  if (image.shape().size() != 4 || image.dim(0) != 1) {
    throw DomainError("client_infer expects a single [1,C,H,W] image");
  }

  ClientResult result;
  Tensor w_raw = mask_net.forward(image, Pass::kInfer);
  Tensor w = clamp_mask(w_raw);
  NoiseSample noise = sample_noise(image.shape(), rng);
  Tensor xp = inject_adaptive(image, w, noise.v);

  result.transcript.x_hash = tensor_hash(image);
  result.transcript.w_hash = tensor_hash(w);
  result.transcript.xp_hash = tensor_hash(xp);
  double complement = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) complement += 1.0 - static_cast<double>(w[i]);
  complement /= static_cast<double>(w.numel());
  result.transcript.mean_mask_complement = complement;
  result.transcript.privacy_warning = complement < kPrivacyWarningMeanComplement;

  json body;
  body["shape"] = xp.shape();
  body["dtype"] = "f32le";
  body["data"] = tensor_to_wire(xp);
  body["request_id"] = request_id.empty() ? ("req-" + result.transcript.xp_hash) : request_id;
  const std::string payload = body.dump();

  httplib::Client http(server_url);
  http.set_connection_timeout(5, 0);
  http.set_read_timeout(30, 0);

  httplib::Result res;
  int backoff_ms = 100;
  for (int attempt = 1; attempt <= 3; ++attempt) {
    result.transcript.http_attempts = attempt;
    res = http.Post("/v1/infer", payload, "application/json");
    if (res) break;
    if (attempt < 3) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
  }
  if (!res) {
    throw IoError("cannot reach " + server_url + " after 3 attempts (" +
                  httplib::to_string(res.error()) + ")");
  }
  if (res->status != 200) {
    throw IoError("server returned " + std::to_string(res->status) + ": " + res->body);
  }
  json r = json::parse(res->body);
  result.predicted_label = r.value("predicted_label", -1);
  result.model_id = r.value("model_id", "");
  result.request_id = r.value("request_id", "");
  if (r.contains("probabilities")) {
    result.probabilities = r["probabilities"].get<std::vector<double>>();
  }
  result.transformed = std::move(xp);
  return result;
}

}  // namespace ani
