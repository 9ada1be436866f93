// Copyright 2026 The Casein Authors
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

#include "casein/checkpoint.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "casein/common.h"

namespace casein {

namespace {
constexpr char kMagic[] = "CASEIN-CKPT v1";

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c == ' ' || c == '\n' || c == '\r' || c == '\t') return false;
  }
  return true;
}
}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("write failed: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("rename failed: " + tmp + " -> " + path + " (" + ec.message() + ")");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) throw MissingArtifact("missing file: " + path);
    throw DataError("cannot open: " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) throw DataError("read failed: " + path);
  return ss.str();
}

void Checkpoint::add(const std::string& name, nn::Tensor<float> tensor) {
  if (!valid_name(name)) throw ConfigError("checkpoint: invalid tensor name '" + name + "'");
  if (index_.count(name)) throw ConfigError("checkpoint: duplicate tensor '" + name + "'");
  index_[name] = tensors_.size();
  tensors_.emplace_back(name, std::move(tensor));
}

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  if (!valid_name(key)) throw ConfigError("checkpoint: invalid meta key '" + key + "'");
  if (value.find('\n') != std::string::npos) {
    throw ConfigError("checkpoint: meta value for '" + key + "' contains a newline");
  }
  meta_[key] = value;
}

const nn::Tensor<float>* Checkpoint::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &tensors_[it->second].second;
}

const nn::Tensor<float>& Checkpoint::require(const std::string& name) const {
  const nn::Tensor<float>* t = find(name);
  if (!t) throw DataError("checkpoint: tensor '" + name + "' not found");
  return *t;
}

const std::string& Checkpoint::require_meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw DataError("checkpoint: meta key '" + key + "' not found");
  return it->second;
}

std::string Checkpoint::meta_or(const std::string& key, const std::string& fallback) const {
  auto it = meta_.find(key);
  return it == meta_.end() ? fallback : it->second;
}

void Checkpoint::save(const std::string& path) const {
  std::ostringstream header;
  header << kMagic << "\n";
  for (const auto& [k, v] : meta_) header << "meta " << k << "=" << v << "\n";
  size_t offset = 0;
  for (const auto& [name, t] : tensors_) {
    header << "tensor " << name << " ";
    for (size_t i = 0; i < t.shape.size(); ++i) {
      header << (i ? "x" : "") << t.shape[i];
    }
    header << " " << offset << "\n";
    offset += t.numel() * sizeof(float);
  }
  header << "data " << offset << "\n";

  std::string out = header.str();
  const size_t text_len = out.size();
  out.resize(text_len + offset);
  char* dst = out.data() + text_len;
  for (const auto& [name, t] : tensors_) {
    std::memcpy(dst, t.v.data(), t.numel() * sizeof(float));
    dst += t.numel() * sizeof(float);
  }
  write_file_atomic(path, out);
}

Checkpoint Checkpoint::load(const std::string& path) {
  const std::string bytes = read_file(path);
  Checkpoint ckpt;
  size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw DataError("checkpoint: truncated header in " + path);
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (next_line() != kMagic) throw DataError("checkpoint: bad magic in " + path);

  struct Entry {
    std::string name;
    std::vector<int> shape;
    size_t offset;
  };
  std::vector<Entry> entries;
  size_t data_len = 0;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string rest = line.substr(5);
      const size_t eq = rest.find('=');
      if (eq == std::string::npos) throw DataError("checkpoint: bad meta line in " + path);
      ckpt.meta_[rest.substr(0, eq)] = rest.substr(eq + 1);
    } else if (tag == "tensor") {
      Entry e;
      std::string dims;
      if (!(ls >> e.name >> dims >> e.offset)) {
        throw DataError("checkpoint: bad tensor line in " + path);
      }
      size_t p = 0;
      while (p < dims.size()) {
        size_t q = dims.find('x', p);
        if (q == std::string::npos) q = dims.size();
        e.shape.push_back(std::stoi(dims.substr(p, q - p)));
        p = q + 1;
      }
      entries.push_back(std::move(e));
    } else if (tag == "data") {
      if (!(ls >> data_len)) throw DataError("checkpoint: bad data line in " + path);
      break;
    } else {
      throw DataError("checkpoint: unknown header line '" + line + "' in " + path);
    }
  }

  if (bytes.size() - pos != data_len) {
    throw DataError("checkpoint: payload size mismatch in " + path);
  }
  for (const Entry& e : entries) {
    nn::Tensor<float> t(e.shape);
    const size_t nbytes = t.numel() * sizeof(float);
    if (e.offset + nbytes > data_len) {
      throw DataError("checkpoint: tensor '" + e.name + "' exceeds payload in " + path);
    }
    std::memcpy(t.v.data(), bytes.data() + pos + e.offset, nbytes);
    ckpt.add(e.name, std::move(t));
  }
  return ckpt;
}

void Checkpoint::add_params(const std::vector<nn::Parameter<float>*>& params) {
  for (const nn::Parameter<float>* p : params) add(p->name, p->value);
}

void Checkpoint::load_params(const std::vector<nn::Parameter<float>*>& params) const {
  for (nn::Parameter<float>* p : params) {
    const nn::Tensor<float>& t = require(p->name);
    if (t.shape != p->value.shape) {
      throw DataError("checkpoint: shape mismatch for '" + p->name + "': stored " +
                      nn::shape_str(t) + " vs model " + nn::shape_str(p->value));
    }
    p->value = t;
    p->zero_grad();
  }
}

uint64_t Checkpoint::tensor_hash(const std::string& name) const {
  const nn::Tensor<float>& t = require(name);
  return fnv1a64(t.v.data(), t.numel() * sizeof(float));
}

}  // namespace casein
