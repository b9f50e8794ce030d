#pragma once

#include <cstddef>
#include <set>
#include <span>

#include "th/lookahead_table.hpp"

namespace th {

/// Reference enumeration of lookahead pairs: slides a (window_size + 1)
/// window over `seq` with plain index arithmetic. Shares no code with
/// SequenceWindow or LookaheadTable and is used to check them.
inline std::set<PairTriple> brute_force_pairs(std::span<const SymbolId> seq,
                                              std::size_t window_size) {
  std::set<PairTriple> out;
  for (std::size_t i = 0; i < seq.size(); ++i)
    for (std::size_t d = 1; d <= window_size && d <= i; ++d)
      out.insert({seq[i], seq[i - d], static_cast<std::uint32_t>(d)});
  return out;
}

}  // namespace th
