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

#include "ani/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ani/errors.hpp"
#include "ani/image_io.hpp"
#include "ani/manifest.hpp"
#include "ani/serialization.hpp"

namespace ani {

TransformFn identity_transform() {
  return [](const Tensor& x, Rng&) { return x; };
}

TransformFn adaptive_transform(Network& mask_net) {
  return [&mask_net](const Tensor& x, Rng& rng) {
    Tensor w_raw = mask_net.forward(x, Pass::kInfer);
    Tensor w = clamp_mask(w_raw);
    NoiseSample v = sample_noise(x.shape(), rng);
    return inject_adaptive(x, w, v.v);
  };
}

TransformFn cloak_transform(Tensor sigma) {
  return [sigma = std::move(sigma)](const Tensor& x, Rng& rng) {
    CloakParams p;
    p.sigma = sigma;
    p.mu = Tensor::zeros(sigma.shape());
    p.b = Tensor::full(sigma.shape(), 1.0f);
    NoiseSample v = sample_noise(x.shape(), rng);
    return inject_cloak(x, p, v.v);
  };
}

double accuracy(Network& classifier, const TransformFn& transform, const Dataset& data,
                Task task, Rng& rng, int batch_size, int noise_votes) {
  if (data.n == 0) throw DomainError("accuracy: empty split");
  if (noise_votes < 1) throw DomainError("accuracy: noise_votes must be >= 1");
  const std::vector<int32_t>& labels = task == Task::kPrimary ? data.y : data.z;
  const int64_t n_classes =
      task == Task::kPrimary ? data.spec.n_primary_classes : data.spec.n_secondary_classes;
  int64_t correct = 0;
  std::vector<int32_t> idx;
  std::vector<double> probs;
  for (int64_t begin = 0; begin < data.n; begin += batch_size) {
    const int64_t end = std::min(data.n, begin + batch_size);
    idx.resize(static_cast<size_t>(end - begin));
    for (int64_t i = begin; i < end; ++i) idx[static_cast<size_t>(i - begin)] = static_cast<int32_t>(i);
    Tensor x = data.gather(idx);
    probs.assign(static_cast<size_t>((end - begin) * n_classes), 0.0);
    for (int vote = 0; vote < noise_votes; ++vote) {
      Tensor xp = transform(x, rng);
      Tensor logits = classifier.forward(xp, Pass::kInfer);
      for (int64_t r = 0; r < end - begin; ++r) {
        const float* row = logits.data() + r * n_classes;
        float mx = row[0];
        for (int64_t c = 1; c < n_classes; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int64_t c = 0; c < n_classes; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
        for (int64_t c = 0; c < n_classes; ++c) {
          probs[static_cast<size_t>(r * n_classes + c)] +=
              std::exp(static_cast<double>(row[c]) - mx) / sum;
        }
      }
    }
    for (int64_t r = 0; r < end - begin; ++r) {
      const double* row = probs.data() + r * n_classes;
      int64_t arg = 0;
      for (int64_t c = 1; c < n_classes; ++c) {
        if (row[c] > row[arg]) arg = c;
      }
      if (arg == labels[static_cast<size_t>(begin + r)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.n);
}

namespace {

std::string mi_field(const std::optional<double>& mi) {
  if (!mi.has_value()) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *mi);
  return buf;
}

}  // namespace

void write_tradeoff_csv(const std::vector<TradeoffPoint>& points, const std::string& path) {
  std::ostringstream os;
  os << "lambda,method,primary_acc,secondary_acc,normalized_mi\n";
  for (const auto& p : points) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%g,%s,%.6f,%.6f,%s\n", p.lambda, p.method.c_str(),
                  p.primary_acc, p.secondary_acc, mi_field(p.normalized_mi).c_str());
    os << buf;
  }
  write_text_file_atomic(path, os.str());
}

std::vector<TradeoffPoint> read_tradeoff_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("tradeoff csv missing: " + path);
  std::vector<TradeoffPoint> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    TradeoffPoint p;
    std::getline(ls, field, ',');
    p.lambda = std::stod(field);
    std::getline(ls, p.method, ',');
    std::getline(ls, field, ',');
    p.primary_acc = std::stod(field);
    std::getline(ls, field, ',');
    p.secondary_acc = std::stod(field);
    std::getline(ls, field, ',');
    if (field != "NA") p.normalized_mi = std::stod(field);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<TradeoffPoint> assemble_tradeoff(const std::vector<std::string>& manifest_paths) {
  std::vector<TradeoffPoint> out;
  for (const auto& path : manifest_paths) {
    nlohmann::json m = read_manifest(path);
    TradeoffPoint p;
    p.manifest_ref = path;
    p.lambda = m.value("lambda", 0.0);
    p.method = m.value("method", "?");
    const auto& metrics = m["metrics"];
    p.primary_acc = metrics.value("test_primary_acc", std::nan(""));
    p.secondary_acc = metrics.value("attacker_secondary_acc", std::nan(""));
    if (metrics.contains("normalized_mi") && metrics["normalized_mi"].is_number()) {
      p.normalized_mi = metrics["normalized_mi"].get<double>();
    }
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(),
            [](const TradeoffPoint& a, const TradeoffPoint& b) { return a.lambda < b.lambda; });
  return out;
}

namespace {

void write_panel(const std::string& path, const float* chw, const Shape& shape) {
  const int c = static_cast<int>(shape[0]);
  const int h = static_cast<int>(shape[1]);
  const int w = static_cast<int>(shape[2]);
  ImageU8 img;
  img.width = w;
  img.height = h;
  img.channels = c == 1 ? 1 : 3;
  if (c == 1) {
    img.pixels = quantize_unit(chw, static_cast<int64_t>(h) * w);
  } else {
    // channel planes -> interleaved rgb
    std::vector<float> inter(static_cast<size_t>(h) * w * 3);
    for (int ch = 0; ch < 3; ++ch) {
      for (int p = 0; p < h * w; ++p) {
        inter[static_cast<size_t>(p) * 3 + ch] = chw[ch * h * w + p];
      }
    }
    img.pixels = quantize_unit(inter.data(), static_cast<int64_t>(inter.size()));
  }
  write_png(path, img);
}

}  // namespace

std::vector<std::string> export_masks(Network* mask_net, const CloakParams* cloak,
                                      const Dataset& data, const std::vector<int32_t>& indices,
                                      const std::string& out_dir, const std::string& tag,
                                      Rng& rng) {
  if (indices.empty()) throw DomainError("export_masks: need at least one image");
  if ((mask_net == nullptr) == (cloak == nullptr)) {
    throw DomainError("export_masks: pass exactly one of mask_net or cloak");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir)) throw IoError("cannot create: " + out_dir);

  const Shape& chw = data.spec.image_shape;
  const int64_t px = shape_numel(chw);
  std::vector<std::string> files;
  for (int32_t index : indices) {
    Tensor x = data.gather({index});
    Tensor mask_panel({1, chw[0], chw[1], chw[2]});
    Tensor xp;
    if (mask_net) {
      Tensor w_raw = mask_net->forward(x, Pass::kInfer);
      Tensor w = clamp_mask(w_raw);
      NoiseSample v = sample_noise(x.shape(), rng);
      xp = inject_adaptive(x, w, v.v);
      mask_panel = w;
    } else {
      NoiseSample v = sample_noise(x.shape(), rng);
      xp = inject_cloak(x, *cloak, v.v);
      // Mask panel renders retention: 1 - sigma/sigma_max.
      const float denom = cloak->sigma_max > 0.0f ? cloak->sigma_max : 1.0f;
      for (int64_t i = 0; i < px; ++i) {
        mask_panel[i] = 1.0f - cloak->sigma[i] / denom;
      }
    }
    const std::string stem = out_dir + "/" + tag + "_" + std::to_string(index) + "_";
    write_panel(stem + "input.png", x.data(), chw);
    write_panel(stem + "mask.png", mask_panel.data(), chw);
    write_panel(stem + "transformed.png", xp.data(), chw);
    files.push_back(stem + "input.png");
    files.push_back(stem + "mask.png");
    files.push_back(stem + "transformed.png");
  }
  return files;
}

FlopReport flop_report(const std::string& dataset_name) {
  const DatasetSpec spec = dataset_spec(dataset_name);
  FlopReport r;
  r.dataset = spec.name;
  r.mask_arch = default_mask_arch(spec.name);
  r.primary_arch = default_primary_arch(spec.name);
  auto mask = build_mask_net(r.mask_arch, spec.image_shape);
  auto primary = build_primary(r.primary_arch, spec.image_shape, spec.n_primary_classes);
  r.mask_net_flops = count_flops(*mask);
  r.primary_flops = count_flops(*primary);
  r.ratio = static_cast<double>(r.mask_net_flops) / static_cast<double>(r.primary_flops);
  return r;
}

}  // namespace ani
