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

#include <optional>
#include <string>

#include "ani/nets.hpp"
#include "ani/rng.hpp"
#include "ani/tensor.hpp"

namespace ani {

// Local evidence of what the client actually sent: content hashes of the
// raw image, the mask, and the transmitted payload. The raw image never
// leaves the process.
struct ClientTranscript {
  std::string x_hash;
  std::string w_hash;
  std::string xp_hash;
  double mean_mask_complement = 0.0;  // mean(1 - w)
  bool privacy_warning = false;       // transform was numerically ~identity
  int http_attempts = 0;
};

struct ClientResult {
  int predicted_label = 0;
  std::vector<double> probabilities;
  std::string model_id;
  std::string request_id;
  ClientTranscript transcript;
  Tensor transformed;  // exactly what went on the wire
};

// Applies the local mask network and fresh noise to one image [1,C,H,W],
// posts only the transformed tensor to `server_url` (e.g.
// "http://127.0.0.1:8080"), and returns the response plus transcript.
// Connection failures retry up to 3 times with exponential backoff; HTTP
// 4xx/5xx surface as errors carrying the server's body.
ClientResult client_infer(Network& mask_net, const Tensor& image, const std::string& server_url,
                          Rng& rng, const std::string& request_id = "");

// mean(1-w) below this threshold trips the transcript's privacy warning:
// the payload is numerically almost the raw image.
inline constexpr double kPrivacyWarningMeanComplement = 0.01;

}  // namespace ani
