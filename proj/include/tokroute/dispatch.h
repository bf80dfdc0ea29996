#pragma once

// Target-agnostic dispatch: histogram of tokens per target, per-target token
// index lists (the host form of the xs/ys pointer arrays), and a tile choice
// per target. Used unchanged by vocabulary, compositional and learned routing.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tokroute/linalg.h"
#include "tokroute/routing.h"

namespace tokroute {

struct TileConfig {
  std::uint32_t block_m;
  std::uint32_t block_n;

  bool operator==(const TileConfig&) const = default;
};

// block_m: 16 below 64 tokens, 32 below 256, else 64.
// block_n: 32 below 128 tokens, else 64.
TileConfig select_tiles(std::size_t count);

enum class DispatchMode {
  deterministic,  // sequential counting pass; groups in ascending token order
  parallel,       // OpenMP with atomic position allocation; group order unspecified
};

struct DispatchPlan {
  std::vector<std::size_t> histogram;
  std::vector<std::vector<std::uint32_t>> groups;
  std::vector<TileConfig> tiles;

  std::size_t num_targets() const noexcept { return histogram.size(); }
  std::size_t nonempty_groups() const noexcept;
};

DispatchPlan build_dispatch(const RoutingDecision& decision, DispatchMode mode = DispatchMode::deterministic);

// Counts of dispatch primitive invocations since the last reset. Lets tests
// confirm that different routing front-ends share one execution path.
struct DispatchCounters {
  std::size_t build_dispatch = 0;
  std::size_t gather = 0;
  std::size_t scatter = 0;
};

DispatchCounters dispatch_counters();
void reset_dispatch_counters();

namespace detail {
void count_gather();
void count_scatter();
[[noreturn]] void throw_row_index(std::size_t index, std::size_t rows);
}  // namespace detail

// Row i of the result is row group[i] of features. group must be non-empty.
template <typename T>
BasicMatrix<T> gather(const BasicMatrix<T>& features, std::span<const std::uint32_t> group) {
  detail::count_gather();
  if (group.empty()) throw ShapeError("gather of an empty group");
  BasicMatrix<T> out(group.size(), features.cols());
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i] >= features.rows()) detail::throw_row_index(group[i], features.rows());
    auto src = features.row(group[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

// Writes row i of rows into row group[i] of into; other rows are untouched.
// Throws ContractError on duplicate indices.
template <typename T>
void scatter_into(const BasicMatrix<T>& rows, std::span<const std::uint32_t> group, BasicMatrix<T>& into) {
  detail::count_scatter();
  if (rows.rows() != group.size() || rows.cols() != into.cols()) {
    throw ShapeError("scatter: rows shape does not match group/destination");
  }
  std::vector<bool> seen(into.rows(), false);
  for (std::uint32_t idx : group) {
    if (idx >= into.rows()) detail::throw_row_index(idx, into.rows());
    if (seen[idx]) throw ContractError("scatter: duplicate destination row " + std::to_string(idx));
    seen[idx] = true;
  }
  for (std::size_t i = 0; i < group.size(); ++i) {
    auto src = rows.row(i);
    std::copy(src.begin(), src.end(), into.row(group[i]).begin());
  }
}

template <typename T>
BasicMatrix<T> scatter(const BasicMatrix<T>& rows, std::span<const std::uint32_t> group, BasicMatrix<T> into) {
  scatter_into(rows, group, into);
  return into;
}

}  // namespace tokroute
