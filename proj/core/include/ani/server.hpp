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

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "ani/nets.hpp"
#include "ani/tensor.hpp"

namespace ani {

// Wire format of POST /v1/infer. `data` is base64 of raw little-endian
// float32 values in row-major order; product(shape) * 4 must equal the
// decoded byte count.
struct InferRequest {
  std::vector<int64_t> shape;
  std::string dtype = "f32le";
  std::string data;
  std::string request_id;
};

struct InferResponse {
  std::string request_id;
  int predicted_label = 0;
  std::vector<double> probabilities;
  std::string model_id;
};

// Stateless inference service over a frozen classifier. Endpoints:
//   POST /v1/infer   InferRequest -> InferResponse (JSON)
//   GET  /v1/health  model_id + uptime
// The server performs no noise sampling and never logs request payloads.
class InferenceServer {
 public:
  // model_id identifies the checkpoint (content hash). max_body_bytes bounds
  // accepted request bodies (413 beyond it).
  InferenceServer(std::unique_ptr<Network> model, std::string model_id,
                  size_t max_body_bytes = 16ull << 20);
  ~InferenceServer();

  // Binds and serves on a background thread. Port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  void stop();

  const std::string& model_id() const { return model_id_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string model_id_;
};

}  // namespace ani
