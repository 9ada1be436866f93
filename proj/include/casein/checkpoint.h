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

#ifndef CASEIN_CHECKPOINT_H_
#define CASEIN_CHECKPOINT_H_

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "casein/tape.h"

namespace casein {

// Writes via a temp file in the same directory plus rename, so readers never
// observe a partial file.
void write_file_atomic(const std::string& path, const std::string& bytes);

// Whole-file read; MissingArtifact if absent, DataError on I/O failure.
std::string read_file(const std::string& path);

// Self-describing tensor container: a text header (format tag, meta
// key=value lines, one line per tensor with name, shape, and byte offset)
// followed by the raw little-endian float32 payloads concatenated in header
// order. Round-trips bit-exactly.
class Checkpoint {
 public:
  void add(const std::string& name, nn::Tensor<float> tensor);
  void set_meta(const std::string& key, const std::string& value);

  const nn::Tensor<float>* find(const std::string& name) const;
  const nn::Tensor<float>& require(const std::string& name) const;
  const std::string& require_meta(const std::string& key) const;
  std::string meta_or(const std::string& key, const std::string& fallback) const;

  const std::vector<std::pair<std::string, nn::Tensor<float>>>& tensors() const {
    return tensors_;
  }
  const std::map<std::string, std::string>& meta() const { return meta_; }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Collects parameters by name; shapes must match exactly.
  void add_params(const std::vector<nn::Parameter<float>*>& params);
  void load_params(const std::vector<nn::Parameter<float>*>& params) const;

  // Order-independent content hash of one tensor's raw bytes.
  uint64_t tensor_hash(const std::string& name) const;

 private:
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors_;
  std::map<std::string, size_t> index_;
  std::map<std::string, std::string> meta_;
};

}  // namespace casein

#endif  // CASEIN_CHECKPOINT_H_
