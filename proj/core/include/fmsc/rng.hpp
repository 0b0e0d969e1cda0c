#pragma once

// Counter-based random number generation. The engine is Philox 4x64 with 10
// rounds (the BitGenerator NumPy ships); known-answer vectors are pinned in
// the unit tests. Counter layout gives every (cell, replication, purpose)
// triple its own independent substream:
//
//   key     = (master seed, fixed constant)
//   counter = [ block index lo, block index hi, stream id, 0 ]
//
// so streams never overlap regardless of how many values each consumes.

#include <armadillo>

#include <array>
#include <cstdint>

namespace fmsc {

// Purpose byte of a stream id: keeps data generation, CI simulation draws and
// region sampling on disjoint streams even within one replication.
inline constexpr std::uint8_t kStreamData = 0;
inline constexpr std::uint8_t kStreamCiDraws = 1;
inline constexpr std::uint8_t kStreamRegion = 2;

// stream id = (cell << 40) | (rep << 8) | purpose. Supports ~16.7M cells and
// ~4.3G replications, far beyond any grid here.
constexpr std::uint64_t stream_id(std::uint64_t cell, std::uint64_t rep,
                                  std::uint8_t purpose) {
  return (cell << 40) | ((rep & 0xffffffffULL) << 8) | purpose;
}

class Philox {
 public:
  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0);

  // One 10-round Philox 4x64 block; exposed for the known-answer tests.
  static std::array<std::uint64_t, 4> block(std::array<std::uint64_t, 4> counter,
                                            std::array<std::uint64_t, 2> key);

  std::uint64_t next_u64();

  // 53-bit uniform on [0, 1)
  double uniform();

  // standard normal via Box-Muller; consumes exactly two uniforms per call
  double normal();

  arma::vec normal_vec(arma::uword n);
  // filled row by row, so row j is draw j
  arma::mat normal_mat(arma::uword rows, arma::uword cols);

 private:
  void refill();

  std::array<std::uint64_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_lo_ = 0;
  std::uint64_t block_hi_ = 0;
  std::array<std::uint64_t, 4> buf_{};
  unsigned pos_ = 4;
};

}  // namespace fmsc
