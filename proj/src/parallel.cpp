#include "bsdelab/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace bsdelab {

int worker_count() {
  if (const char* env = std::getenv("BSDELAB_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::ptrdiff_t n, const std::function<void(std::ptrdiff_t, std::ptrdiff_t)>& body) {
  if (n <= 0) return;
  const std::ptrdiff_t workers = std::min<std::ptrdiff_t>(worker_count(), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const std::ptrdiff_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::ptrdiff_t w = 0; w < workers; ++w) {
    const std::ptrdiff_t b = w * chunk;
    const std::ptrdiff_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, w, b, e] {
      try {
        body(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace bsdelab
