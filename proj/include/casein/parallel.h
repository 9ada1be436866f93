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

#ifndef CASEIN_PARALLEL_H_
#define CASEIN_PARALLEL_H_

#include <functional>

namespace casein {

// Worker count: CASEIN_THREADS env var, else hardware concurrency (capped).
int num_threads();

// Runs fn over contiguous chunks of [begin, end). Every index is processed by
// exactly one worker with a partition that depends only on (begin, end), so
// results are identical for any worker count. Ranges whose total work (as
// estimated by the caller) is small run inline.
void parallel_for(int begin, int end, long work_estimate,
                  const std::function<void(int, int)>& fn);

}  // namespace casein

#endif  // CASEIN_PARALLEL_H_
