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

#include <array>
#include <string>
#include <vector>

namespace ani {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::array<uint8_t, 3> color{0, 0, 0};
};

// Minimal raster line/scatter plot. Writes the PNG plus a sidecar
// `<path>.json` recording title, axis names, ranges, and series so plots
// stay machine-checkable.
void render_plot(const std::string& png_path, const std::string& title,
                 const std::string& x_label, const std::string& y_label,
                 const std::vector<PlotSeries>& series, int width = 720, int height = 540);

}  // namespace ani
