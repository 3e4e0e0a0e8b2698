#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsectr/common.hpp"

namespace sparsectr {

// ---------------------------------------------------------------------------
// Personalized time-aware chunking.
//
// A behavior sequence arrives left-padded to a fixed length; timestamp 0
// marks padding, real events carry positive Unix timestamps and are sorted in
// nondecreasing order. The valid region is divided into a fixed number of
// contiguous chunks by cutting at the largest time gaps between neighboring
// events, so each user's sessions fall out of their own rhythm rather than a
// fixed stride. The boundary between padding and the first event is always a
// cut (an infinitely large gap); the remaining num_chunks - 1 cuts are the
// largest valid-to-valid gaps, ties resolved toward the earlier position.
// Short sequences that cannot fill every chunk leave the trailing chunks
// empty, keeping the chunk count — and therefore every downstream shape —
// independent of the user.
// ---------------------------------------------------------------------------

struct ChunkPartition {
  std::size_t padding = 0;         // positions [0, padding) are padding
  std::vector<std::size_t> ends;   // ends[k] .. ends[k+1] is chunk k; ends[0] == padding

  std::size_t num_chunks() const { return ends.size() - 1; }
  std::size_t begin(std::size_t k) const { return ends[k]; }
  std::size_t end(std::size_t k) const { return ends[k + 1]; }
  std::size_t size(std::size_t k) const { return ends[k + 1] - ends[k]; }
  bool empty(std::size_t k) const { return size(k) == 0; }

  // Chunk containing position p, or num_chunks() if p is padding.
  std::size_t chunk_of(std::size_t p) const {
    if (p < padding) return num_chunks();
    std::size_t k = 0;
    while (ends[k + 1] <= p) ++k;
    return k;
  }
};

inline ChunkPartition chunk_sequence(const std::vector<std::uint64_t>& timestamps,
                                     std::size_t num_chunks) {
  if (num_chunks == 0) throw DataError("chunk_sequence: need at least one chunk");
  const std::size_t n = timestamps.size();

  std::size_t z = 0;
  while (z < n && timestamps[z] == 0) ++z;
  for (std::size_t i = z; i < n; ++i) {
    if (timestamps[i] == 0)
      throw DataError("chunk_sequence: padding timestamp at position " + std::to_string(i) +
                      " after first event; padding must be a prefix");
    if (i > z && timestamps[i] < timestamps[i - 1])
      throw DataError("chunk_sequence: timestamps decrease at position " + std::to_string(i));
  }

  // Candidate cuts: "split before position g" for each valid-to-valid gap.
  struct Gap {
    std::uint64_t delta;
    std::size_t pos;
  };
  std::vector<Gap> gaps;
  if (z < n) gaps.reserve(n - z - 1);
  for (std::size_t g = z + 1; g < n; ++g) gaps.push_back({timestamps[g] - timestamps[g - 1], g});

  const std::size_t want = num_chunks - 1;
  if (gaps.size() > want) {
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(want),
                     gaps.end(), [](const Gap& a, const Gap& b) {
                       if (a.delta != b.delta) return a.delta > b.delta;
                       return a.pos < b.pos;
                     });
    gaps.resize(want);
  }

  std::vector<std::size_t> cuts;
  cuts.reserve(gaps.size());
  for (const Gap& g : gaps) cuts.push_back(g.pos);
  std::sort(cuts.begin(), cuts.end());

  ChunkPartition part;
  part.padding = z;
  part.ends.reserve(num_chunks + 1);
  part.ends.push_back(z);
  for (std::size_t c : cuts) part.ends.push_back(c);
  while (part.ends.size() < num_chunks + 1) part.ends.push_back(n);
  return part;
}

// Mean event time of chunk k, or 0 for an empty chunk. Used as the chunk's
// representative time when computing temporal biases against aggregates.
inline double chunk_mean_time(const std::vector<std::uint64_t>& timestamps,
                              const ChunkPartition& part, std::size_t k) {
  if (part.empty(k)) return 0.0;
  double acc = 0.0;
  for (std::size_t i = part.begin(k); i < part.end(k); ++i)
    acc += static_cast<double>(timestamps[i]);
  return acc / static_cast<double>(part.size(k));
}

}  // namespace sparsectr
