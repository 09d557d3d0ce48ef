// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace topoband::detail
{

// Run task(0..count-1) on up to `threads` workers pulling indices from a
// shared counter. The first exception thrown by any task is rethrown on the
// calling thread after all workers stop.
template <typename Task>
void parallel_for(std::size_t count, int threads, Task&& task)
{
  const int workers = std::max(1, std::min<int>(threads, int(count)));
  if (workers == 1)
  {
    for (std::size_t i = 0; i < count; ++i)
    {
      task(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto drain = [&] {
    while (true)
    {
      const std::size_t i = next.fetch_add(1);
      if (i >= count)
      {
        return;
      }
      try
      {
        task(i);
      }
      catch (...)
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error)
        {
          error = std::current_exception();
        }
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers));
  for (int t = 0; t < workers; ++t)
  {
    pool.emplace_back(drain);
  }
  for (std::thread& worker : pool)
  {
    worker.join();
  }
  if (error)
  {
    std::rethrow_exception(error);
  }
}

}  // namespace topoband::detail
