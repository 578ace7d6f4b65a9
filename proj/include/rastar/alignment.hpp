// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// Unit-cost Levenshtein distance and alignment over arbitrary token ranges.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <ranges>
#include <vector>

namespace rastar {

enum class EditKind { Match, Substitute, Delete, Insert };

/// One step of an alignment. Match/Substitute carry both indices, Delete only
/// `ref`, Insert only `hyp`.
struct AlignmentOp {
  EditKind kind;
  std::optional<std::size_t> ref;
  std::optional<std::size_t> hyp;

  bool operator==(const AlignmentOp&) const = default;
};

template <std::ranges::random_access_range A, std::ranges::random_access_range B>
std::size_t levenshtein(const A& a, const B& b) {
  const std::size_t n = std::ranges::size(a);
  const std::size_t m = std::ranges::size(b);
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({diag, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

/// Minimal-cost alignment of `ref` against `hyp`. Traceback runs from the end
/// of both sequences and, among equal-cost predecessors, prefers
/// match > substitution > deletion > insertion. Ops are returned in
/// left-to-right order.
template <std::ranges::random_access_range R, std::ranges::random_access_range H>
std::vector<AlignmentOp> align_sequences(const R& ref, const H& hyp) {
  const std::size_t n = std::ranges::size(ref);
  const std::size_t m = std::ranges::size(hyp);
  const std::size_t width = m + 1;
  std::vector<std::size_t> cost((n + 1) * width);
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * width + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  std::vector<AlignmentOp> ops;
  ops.reserve(std::max(n, m));
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    const std::size_t here = at(i, j);
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (same && at(i - 1, j - 1) == here) {
        ops.push_back({EditKind::Match, i - 1, j - 1});
        --i, --j;
        continue;
      }
      if (!same && at(i - 1, j - 1) + 1 == here) {
        ops.push_back({EditKind::Substitute, i - 1, j - 1});
        --i, --j;
        continue;
      }
    }
    if (i > 0 && at(i - 1, j) + 1 == here) {
      ops.push_back({EditKind::Delete, i - 1, std::nullopt});
      --i;
      continue;
    }
    ops.push_back({EditKind::Insert, std::nullopt, j - 1});
    --j;
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

inline std::size_t alignment_cost(const std::vector<AlignmentOp>& ops) {
  return static_cast<std::size_t>(std::ranges::count_if(
      ops, [](const AlignmentOp& op) { return op.kind != EditKind::Match; }));
}

}  // namespace rastar
