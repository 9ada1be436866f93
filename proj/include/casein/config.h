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

#ifndef CASEIN_CONFIG_H_
#define CASEIN_CONFIG_H_

#include <map>
#include <string>
#include <vector>

namespace casein {
namespace cfg {

using KV = std::map<std::string, std::string>;

// Flat key=value text: one pair per line, '#' comments, blank lines ignored.
KV parse_kv_text(const std::string& text);
KV parse_kv_file(const std::string& path);
std::string serialize_kv(const KV& kv);  // sorted keys, deterministic bytes

int get_int(const KV& kv, const std::string& key, int fallback);
double get_double(const KV& kv, const std::string& key, double fallback);
std::string get_string(const KV& kv, const std::string& key, const std::string& fallback);

// Shortest decimal form that round-trips a float32 / float64.
std::string format_float(float x);
std::string format_double(double x);

std::vector<float> parse_float_list(const std::string& s);  // comma separated
std::string format_float_list(const std::vector<float>& xs);

}  // namespace cfg

// Training hyperparameters shared by the trainer CLIs. Defaults follow the
// pipeline's reference settings; any field can be overridden by flag or
// config file, and the effective values are echoed into checkpoint headers.
struct TrainConfig {
  uint64_t seed = 0;
  int epochs = 100;
  int batch_size = 16;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double lambda_implicit = 0.1;  // weight of the latent-regression term
  int window_radius = 2;
  int codebook_size = 256;
  int codebook_dim = 512;
  int hidden = 256;
  int kernel = 9;
  double dropout = 0.2;
  double commitment_beta = 0.25;

  cfg::KV to_kv() const;
  void echo_into(class Checkpoint& ckpt) const;
  static TrainConfig from_kv(const cfg::KV& kv);
};

}  // namespace casein

#endif  // CASEIN_CONFIG_H_
