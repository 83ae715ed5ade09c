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
#include <string>
#include <vector>

namespace ani {

struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 = gray, 3 = rgb
  std::vector<uint8_t> pixels;  // row-major, interleaved
};

void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

// [0,1] floats -> 8-bit with round-to-nearest; values outside [0,1] clip.
std::vector<uint8_t> quantize_unit(const float* data, int64_t n);

}  // namespace ani
