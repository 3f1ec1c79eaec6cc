#pragma once

#include <mutex>
#include <vector>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

namespace dsol {

/// How per-task partial results are merged.
///  deterministic: one slot per task, reduced in task order after the join
///                 (bit-identical for any thread count).
///  otherwise:     each task merges into the shared result under a mutex as it finishes.
struct ExecPolicy {
  bool deterministic = true;
};

template <class Body>
void ParallelFor(int num_tasks, Body&& body) {
  tbb::parallel_for(tbb::blocked_range<int>(0, num_tasks, 1), [&](const tbb::blocked_range<int>& r) {
    for (int i = r.begin(); i != r.end(); ++i) body(i);
  });
}

/// Fork-join reduction. body(acc, task) accumulates task into a private acc,
/// merge(into, from) folds one accumulator into another.
template <class Acc, class Body, class Merge>
Acc ParallelReduce(int num_tasks, const Acc& identity, Body&& body, Merge&& merge,
                   const ExecPolicy& policy) {
  if (policy.deterministic) {
    std::vector<Acc> slots(static_cast<size_t>(num_tasks), identity);
    ParallelFor(num_tasks, [&](int i) { body(slots[static_cast<size_t>(i)], i); });
    Acc out = identity;
    for (const auto& s : slots) merge(out, s);
    return out;
  }
  Acc out = identity;
  std::mutex mu;
  ParallelFor(num_tasks, [&](int i) {
    Acc local = identity;
    body(local, i);
    const std::lock_guard<std::mutex> lock(mu);
    merge(out, local);
  });
  return out;
}

}  // namespace dsol
