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

#include "casein/config.h"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "casein/checkpoint.h"
#include "casein/common.h"

namespace casein {
namespace cfg {

KV parse_kv_text(const std::string& text) {
  KV kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const size_t eq = line.find('=', start);
    if (eq == std::string::npos) {
      throw DataError("config line " + std::to_string(lineno) + " has no '=': " + line);
    }
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    size_t vs = value.find_first_not_of(" \t");
    value = vs == std::string::npos ? "" : value.substr(vs);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.pop_back();
    if (key.empty()) throw DataError("config line " + std::to_string(lineno) + " has empty key");
    kv[key] = value;
  }
  return kv;
}

KV parse_kv_file(const std::string& path) { return parse_kv_text(read_file(path)); }

std::string serialize_kv(const KV& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += "=";
    out += v;
    out += "\n";
  }
  return out;
}

int get_int(const KV& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "' is not an integer: " + it->second);
  }
}

double get_double(const KV& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "' is not a number: " + it->second);
  }
}

std::string get_string(const KV& kv, const std::string& key, const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

std::string format_float(float x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(x));
  return buf;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::vector<float> parse_float_list(const std::string& s) {
  std::vector<float> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    const std::string item = s.substr(pos, comma - pos);
    if (!item.empty()) {
      try {
        out.push_back(std::stof(item));
      } catch (const std::exception&) {
        throw DataError("bad float list item: " + item);
      }
    }
    pos = comma + 1;
  }
  return out;
}

std::string format_float_list(const std::vector<float>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += format_float(xs[i]);
  }
  return out;
}

}  // namespace cfg

cfg::KV TrainConfig::to_kv() const {
  cfg::KV kv;
  kv["seed"] = std::to_string(seed);
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["lr"] = cfg::format_double(lr);
  kv["beta1"] = cfg::format_double(beta1);
  kv["beta2"] = cfg::format_double(beta2);
  kv["lambda"] = cfg::format_double(lambda_implicit);
  kv["window_radius"] = std::to_string(window_radius);
  kv["codebook_size"] = std::to_string(codebook_size);
  kv["codebook_dim"] = std::to_string(codebook_dim);
  kv["hidden"] = std::to_string(hidden);
  kv["kernel"] = std::to_string(kernel);
  kv["dropout"] = cfg::format_double(dropout);
  kv["commitment_beta"] = cfg::format_double(commitment_beta);
  return kv;
}

void TrainConfig::echo_into(Checkpoint& ckpt) const {
  for (const auto& [k, v] : to_kv()) ckpt.set_meta("config." + k, v);
}

TrainConfig TrainConfig::from_kv(const cfg::KV& kv) {
  TrainConfig c;
  c.seed = static_cast<uint64_t>(cfg::get_double(kv, "seed", 0));
  c.epochs = cfg::get_int(kv, "epochs", c.epochs);
  c.batch_size = cfg::get_int(kv, "batch_size", c.batch_size);
  c.lr = cfg::get_double(kv, "lr", c.lr);
  c.beta1 = cfg::get_double(kv, "beta1", c.beta1);
  c.beta2 = cfg::get_double(kv, "beta2", c.beta2);
  c.lambda_implicit = cfg::get_double(kv, "lambda", c.lambda_implicit);
  c.window_radius = cfg::get_int(kv, "window_radius", c.window_radius);
  c.codebook_size = cfg::get_int(kv, "codebook_size", c.codebook_size);
  c.codebook_dim = cfg::get_int(kv, "codebook_dim", c.codebook_dim);
  c.hidden = cfg::get_int(kv, "hidden", c.hidden);
  c.kernel = cfg::get_int(kv, "kernel", c.kernel);
  c.dropout = cfg::get_double(kv, "dropout", c.dropout);
  c.commitment_beta = cfg::get_double(kv, "commitment_beta", c.commitment_beta);
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.window_radius < 0) throw ConfigError("window_radius must be >= 0");
  return c;
}

}  // namespace casein
