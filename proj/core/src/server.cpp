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

#include "ani/server.hpp"

#include <chrono>
#include <cmath>
#include <mutex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ani/errors.hpp"
#include "ani/serialization.hpp"

namespace ani {

using nlohmann::json;

struct InferenceServer::Impl {
  std::unique_ptr<Network> model;
  std::string model_id;
  size_t max_body_bytes;
  httplib::Server server;
  std::thread thread;
  std::chrono::steady_clock::time_point started_at;
  // kInfer forwards are reentrant, but serialize them anyway: with two
  // hardware threads, interleaved math threads would only slow both down.
  std::mutex forward_mutex;

  json model_output(const Tensor& x, const std::string& request_id) {
    Tensor logits;
    {
      std::lock_guard<std::mutex> lock(forward_mutex);
      logits = model->forward(x, Pass::kInfer);
    }
    const int64_t n = logits.dim(1);
    const float* row = logits.data();
    float mx = row[0];
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    std::vector<double> probs(static_cast<size_t>(n));
    for (int64_t c = 0; c < n; ++c) {
      probs[static_cast<size_t>(c)] = std::exp(static_cast<double>(row[c]) - mx);
      sum += probs[static_cast<size_t>(c)];
    }
    int64_t arg = 0;
    for (int64_t c = 0; c < n; ++c) {
      probs[static_cast<size_t>(c)] /= sum;
      if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(arg)]) arg = c;
    }
    json out;
    out["request_id"] = request_id;
    out["predicted_label"] = arg;
    out["probabilities"] = probs;
    out["model_id"] = model_id;
    return out;
  }
};

namespace {

json error_body(const std::string& code, const std::string& detail) {
  return json{{"error", {{"code", code}, {"detail", detail}}}};
}

}  // namespace

InferenceServer::InferenceServer(std::unique_ptr<Network> model, std::string model_id,
                                 size_t max_body_bytes)
    : impl_(std::make_unique<Impl>()), model_id_(std::move(model_id)) {
  impl_->model = std::move(model);
  impl_->model_id = model_id_;
  impl_->max_body_bytes = max_body_bytes;

  impl_->server.set_payload_max_length(max_body_bytes);

  impl_->server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    const auto uptime = std::chrono::duration_cast<std::chrono::seconds>(
                            std::chrono::steady_clock::now() - impl_->started_at)
                            .count();
    json body;
    body["model_id"] = impl_->model_id;
    body["uptime_seconds"] = uptime;
    body["input_shape"] = impl_->model->input_shape();
    res.set_content(body.dump(), "application/json");
  });

  impl_->server.Post("/v1/infer", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(error_body("bad_json", e.what()).dump(), "application/json");
      return;
    }
    try {
      if (!body.contains("shape") || !body.contains("data")) {
        res.status = 400;
        res.set_content(error_body("missing_field", "need shape and data").dump(),
                        "application/json");
        return;
      }
      const std::string dtype = body.value("dtype", "f32le");
      if (dtype != "f32le") {
        res.status = 400;
        res.set_content(error_body("bad_dtype", "only f32le supported").dump(),
                        "application/json");
        return;
      }
      Shape shape = body["shape"].get<Shape>();
      const Shape& expect = impl_->model->input_shape();
      const bool shape_ok = shape.size() == 4 && shape[0] == 1 && shape[1] == expect[0] &&
                            shape[2] == expect[1] && shape[3] == expect[2];
      if (!shape_ok) {
        res.status = 422;
        res.set_content(error_body("shape_mismatch", "model expects [1," +
                                                          std::to_string(expect[0]) + "," +
                                                          std::to_string(expect[1]) + "," +
                                                          std::to_string(expect[2]) + "]")
                            .dump(),
                        "application/json");
        return;
      }
      Tensor x;
      try {
        x = wire_to_tensor(body["data"].get<std::string>(), shape);
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(error_body("bad_payload", e.what()).dump(), "application/json");
        return;
      }
      const std::string request_id = body.value("request_id", "");
      res.set_content(impl_->model_output(x, request_id).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(error_body("internal", e.what()).dump(), "application/json");
    }
  });

  // 413 for oversized bodies instead of the library's default 400.
  impl_->server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.status == 413) {
      res.set_content(error_body("payload_too_large", "request body over limit").dump(),
                      "application/json");
    }
  });
}

InferenceServer::~InferenceServer() { stop(); }

int InferenceServer::start(const std::string& host, int port) {
  impl_->started_at = std::chrono::steady_clock::now();
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound <= 0) throw IoError("cannot bind " + host);
  } else {
    if (!impl_->server.bind_to_port(host, port)) {
      throw IoError("cannot bind " + host + ":" + std::to_string(port));
    }
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void InferenceServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
  if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace ani
