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

#include "ani/serialization.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "ani/errors.hpp"

namespace ani {

static_assert(std::endian::native == std::endian::little,
              "tensor container and wire codec assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'N', 'I', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw IoError("truncated tensor container: " + path);
  }
  return v;
}

constexpr char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + tmp);
    out.write(kMagic, sizeof(kMagic));
    put<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      put<uint32_t>(out, static_cast<uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<uint32_t>(out, static_cast<uint32_t>(t->shape().size()));
      for (int64_t d : t->shape()) put<int64_t>(out, d);
      out.write(reinterpret_cast<const char*>(t->data()),
                static_cast<std::streamsize>(t->numel() * sizeof(float)));
    }
    if (!out) throw IoError("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::map<std::string, Tensor> load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint missing: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("not a tensor container (bad magic): " + path);
  }
  const uint32_t count = get<uint32_t>(in, path);
  std::map<std::string, Tensor> out;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get<uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("truncated tensor name: " + path);
    const uint32_t ndim = get<uint32_t>(in, path);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = get<int64_t>(in, path);
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(float)))) {
      throw IoError("truncated tensor payload: " + path);
    }
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

void save_network(const std::string& path, Network& net) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (Param* p : net.params()) tensors.emplace_back(p->name, &p->value);
  save_tensors(path, tensors);
}

void load_network(const std::string& path, Network& net) {
  auto loaded = load_tensors(path);
  auto params = net.params();
  if (loaded.size() != params.size()) {
    throw IoError(path + ": has " + std::to_string(loaded.size()) + " tensors, network needs " +
                  std::to_string(params.size()));
  }
  for (Param* p : params) {
    auto it = loaded.find(p->name);
    if (it == loaded.end()) throw IoError(path + ": missing tensor " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw IoError(path + ": shape mismatch for " + p->name + ": " +
                    shape_str(it->second.shape()) + " vs " + shape_str(p->value.shape()));
    }
    p->value = std::move(it->second);
  }
}

std::string base64_encode(std::span<const uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back(kB64Chars[(v >> 6) & 63]);
    out.push_back(kB64Chars[v & 63]);
    i += 3;
  }
  const size_t rem = bytes.size() - i;
  if (rem == 1) {
    const uint32_t v = bytes[i] << 16;
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rem == 2) {
    const uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back(kB64Chars[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw DomainError("base64 payload length not a multiple of 4");
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int t = 0; t < 4; ++t) {
      const char c = text[i + t];
      if (c == '=') {
        if (i + 4 != text.size() || t < 2) throw DomainError("misplaced base64 padding");
        vals[t] = 0;
        ++pad;
      } else {
        vals[t] = value_of(c);
        if (vals[t] < 0) throw DomainError("invalid base64 character");
        if (pad > 0) throw DomainError("data after base64 padding");
      }
    }
    const uint32_t v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
    out.push_back((v >> 16) & 0xff);
    if (pad < 2) out.push_back((v >> 8) & 0xff);
    if (pad < 1) out.push_back(v & 0xff);
  }
  return out;
}

std::string tensor_to_wire(const Tensor& t) {
  std::span<const uint8_t> bytes(reinterpret_cast<const uint8_t*>(t.data()),
                                 static_cast<size_t>(t.numel()) * sizeof(float));
  return base64_encode(bytes);
}

Tensor wire_to_tensor(const std::string& base64_payload, const Shape& shape) {
  const std::vector<uint8_t> bytes = base64_decode(base64_payload);
  const int64_t expect = shape_numel(shape) * static_cast<int64_t>(sizeof(float));
  if (static_cast<int64_t>(bytes.size()) != expect) {
    throw DomainError("payload is " + std::to_string(bytes.size()) + " bytes, shape " +
                      shape_str(shape) + " needs " + std::to_string(expect));
  }
  Tensor t(shape);
  std::memcpy(t.data(), bytes.data(), bytes.size());
  return t;
}

uint64_t fnv1a64(std::span<const uint8_t> bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a64_str(const std::string& s) {
  return fnv1a64(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read: " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ani
