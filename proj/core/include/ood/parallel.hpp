#pragma once

#include <cstddef>
#include <functional>

namespace ood {

/// Rows per substream block. Changing it changes every sampled bit stream,
/// so it is part of the generator version.
inline constexpr std::size_t kBlockSize = 4096;

struct Exec {
  std::size_t workers = 1;
};

inline std::size_t block_count(std::size_t n) { return (n + kBlockSize - 1) / kBlockSize; }

/// Runs body(block) for every block in [0, n_blocks) on up to exec.workers
/// threads. Blocks must write disjoint outputs; the first exception thrown is
/// rethrown on the calling thread after all workers join.
void for_each_block(std::size_t n_blocks, const Exec& exec,
                    const std::function<void(std::size_t)>& body);

}  // namespace ood
