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

#include "casein/parallel.h"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace casein {
namespace {

constexpr long kSerialWorkThreshold = 1 << 16;

class Pool {
 public:
  Pool() {
    int n = 0;
    if (const char* env = std::getenv("CASEIN_THREADS")) n = std::atoi(env);
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (n > 16) n = 16;
    nthreads_ = n;
    for (int i = 1; i < nthreads_; ++i) {
      workers_.emplace_back([this, i] { WorkerLoop(i); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
      ++epoch_;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  int size() const { return nthreads_; }

  void Run(int begin, int end, const std::function<void(int, int)>& fn) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      begin_ = begin;
      end_ = end;
      fn_ = &fn;
      pending_.store(nthreads_ - 1, std::memory_order_relaxed);
      ++epoch_;
    }
    cv_.notify_all();
    RunChunk(0);
    if (nthreads_ > 1) {
      std::unique_lock<std::mutex> lock(mu_);
      done_cv_.wait(lock, [this] { return pending_.load(std::memory_order_acquire) == 0; });
    }
    fn_ = nullptr;
  }

 private:
  void RunChunk(int worker) {
    const long len = end_ - begin_;
    const int lo = begin_ + static_cast<int>(len * worker / nthreads_);
    const int hi = begin_ + static_cast<int>(len * (worker + 1) / nthreads_);
    if (lo < hi) (*fn_)(lo, hi);
  }

  void WorkerLoop(int worker) {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [this, seen] { return epoch_ != seen; });
        seen = epoch_;
        if (stop_) return;
      }
      RunChunk(worker);
      if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lock(mu_);
        done_cv_.notify_one();
      }
    }
  }

  int nthreads_ = 1;
  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::atomic<int> pending_{0};
  uint64_t epoch_ = 0;
  bool stop_ = false;
  int begin_ = 0;
  int end_ = 0;
  const std::function<void(int, int)>* fn_ = nullptr;
};

Pool& pool() {
  static Pool p;
  return p;
}

}  // namespace

int num_threads() { return pool().size(); }

void parallel_for(int begin, int end, long work_estimate,
                  const std::function<void(int, int)>& fn) {
  if (end <= begin) return;
  if (work_estimate < kSerialWorkThreshold || pool().size() == 1 ||
      end - begin == 1) {
    fn(begin, end);
    return;
  }
  pool().Run(begin, end, fn);
}

}  // namespace casein
