#pragma once

// Explicit enumeration of non-crossing set partitions of {1..n}, aggregated by
// block-size signature. Used only by the moment/cumulant oracle.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <vector>

namespace freeprob::detail {

inline constexpr std::size_t kMaxNcOrder = 12;

/// Sorted block sizes -> number of non-crossing partitions with that shape.
using NcSignatureTable = std::map<std::vector<int>, std::uint64_t>;

namespace nc {

// A restricted growth string labels[i] = block of element i is non-crossing
// iff the blocks nest like parentheses: every revisit of a block must find it
// on top of the stack of blocks that are still open.
inline bool is_non_crossing(const std::vector<int>& labels, int blocks) {
  const int n = static_cast<int>(labels.size());
  std::array<int, kMaxNcOrder> last{};
  std::array<bool, kMaxNcOrder> seen{};
  for (int b = 0; b < blocks; ++b) seen[b] = false;
  for (int i = 0; i < n; ++i) last[labels[i]] = i;

  std::array<int, kMaxNcOrder> stack{};
  int depth = 0;
  for (int i = 0; i < n; ++i) {
    const int b = labels[i];
    if (!seen[b]) {
      seen[b] = true;
      if (last[b] != i) stack[depth++] = b;
      continue;
    }
    if (depth == 0 || stack[depth - 1] != b) return false;
    if (last[b] == i) --depth;
  }
  return true;
}

inline void enumerate(std::vector<int>& labels, std::size_t pos, int blocks, NcSignatureTable& table) {
  if (pos == labels.size()) {
    if (!is_non_crossing(labels, blocks)) return;
    std::vector<int> sizes(static_cast<std::size_t>(blocks), 0);
    for (int b : labels) ++sizes[static_cast<std::size_t>(b)];
    std::sort(sizes.begin(), sizes.end());
    ++table[sizes];
    return;
  }
  for (int b = 0; b <= blocks; ++b) {
    labels[pos] = b;
    enumerate(labels, pos + 1, b == blocks ? blocks + 1 : blocks, table);
  }
}

}  // namespace nc

/// Signature table for NC(n), 1 <= n <= kMaxNcOrder. Computed once per n.
inline const NcSignatureTable& nc_signatures(std::size_t n) {
  static std::array<NcSignatureTable, kMaxNcOrder + 1> tables;
  static std::array<std::once_flag, kMaxNcOrder + 1> flags;
  std::call_once(flags.at(n), [n] {
    std::vector<int> labels(n, 0);
    if (n == 0) return;
    labels[0] = 0;
    nc::enumerate(labels, 1, 1, tables[n]);
  });
  return tables[n];
}

}  // namespace freeprob::detail
