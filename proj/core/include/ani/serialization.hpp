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
#include <span>
#include <string>
#include <vector>

#include "ani/nets.hpp"
#include "ani/tensor.hpp"

namespace ani {

// Versioned little-endian tensor container ("ANICKPT1"). The JSON sidecar
// written next to it carries architecture/dataset/seed/lambda/epoch metadata.
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::map<std::string, Tensor> load_tensors(const std::string& path);

void save_network(const std::string& path, Network& net);
// Loads by parameter name; every name and shape must match the network.
void load_network(const std::string& path, Network& net);

std::string base64_encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> base64_decode(const std::string& text);

// Wire codec for image payloads: raw little-endian float32, row-major,
// base64-wrapped. Bit-exact round trip.
std::string tensor_to_wire(const Tensor& t);
Tensor wire_to_tensor(const std::string& base64_payload, const Shape& shape);

uint64_t fnv1a64(std::span<const uint8_t> bytes);
uint64_t fnv1a64_str(const std::string& s);
std::string hex64(uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file_atomic(const std::string& path, const std::string& content);

}  // namespace ani
