#include "fmsc/rng.hpp"

#include <cmath>

namespace fmsc {

namespace {

constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;
// second key word; the seed fills the first
constexpr std::uint64_t kKeyPad = 0xDA3E39CB94B95BDBULL;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
  unsigned __int128 prod = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(prod >> 64);
  lo = static_cast<std::uint64_t>(prod);
}

}  // namespace

std::array<std::uint64_t, 4> Philox::block(std::array<std::uint64_t, 4> x,
                                           std::array<std::uint64_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint64_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, x[0], hi0, lo0);
    mulhilo(kMul1, x[2], hi1, lo1);
    x = {hi1 ^ x[1] ^ key[0], lo1, hi0 ^ x[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return x;
}

Philox::Philox(std::uint64_t seed, std::uint64_t stream)
    : key_{seed, kKeyPad}, stream_(stream) {}

void Philox::refill() {
  buf_ = block({block_lo_, block_hi_, stream_, 0}, key_);
  if (++block_lo_ == 0) ++block_hi_;
  pos_ = 0;
}

std::uint64_t Philox::next_u64() {
  if (pos_ >= 4) refill();
  return buf_[pos_++];
}

double Philox::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Philox::normal() {
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

arma::vec Philox::normal_vec(arma::uword n) {
  arma::vec out(n);
  for (arma::uword i = 0; i < n; ++i) out(i) = normal();
  return out;
}

arma::mat Philox::normal_mat(arma::uword rows, arma::uword cols) {
  arma::mat out(rows, cols);
  for (arma::uword i = 0; i < rows; ++i)
    for (arma::uword j = 0; j < cols; ++j) out(i, j) = normal();
  return out;
}

}  // namespace fmsc
