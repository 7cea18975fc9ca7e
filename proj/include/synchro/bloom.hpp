#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "synchro/core.hpp"

namespace synchro {

inline std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Bloom filter over int64 keys using double hashing. Bits live in relaxed atomics so a
// single writer may add keys while other threads probe.
class BloomFilter {
 public:
  static constexpr int kDefaultBitsPerKey = 10;
  static constexpr int kDefaultHashes = 7;

  BloomFilter() : BloomFilter(64, kDefaultHashes) {}
  BloomFilter(std::uint64_t num_bits, std::uint8_t num_hashes);
  BloomFilter(const BloomFilter& other);
  BloomFilter& operator=(const BloomFilter& other);
  BloomFilter(BloomFilter&&) noexcept = default;
  BloomFilter& operator=(BloomFilter&&) noexcept = default;

  static BloomFilter ForKeys(std::size_t expected_keys, int bits_per_key = kDefaultBitsPerKey,
                             int num_hashes = kDefaultHashes);
  // Rebuilds from serialized bits; bytes.size() must equal ceil(num_bits / 8).
  static BloomFilter FromBytes(std::uint64_t num_bits, std::uint8_t num_hashes,
                               std::span<const std::uint8_t> bytes);

  void add(Key key);
  bool may_contain(Key key) const;

  std::uint64_t num_bits() const { return num_bits_; }
  std::uint8_t num_hashes() const { return num_hashes_; }
  std::vector<std::uint8_t> to_bytes() const;

  bool operator==(const BloomFilter& other) const;

 private:
  std::size_t word_count() const { return static_cast<std::size_t>((num_bits_ + 63) / 64); }

  std::uint64_t num_bits_ = 0;
  std::uint8_t num_hashes_ = 0;
  std::unique_ptr<std::atomic<std::uint64_t>[]> words_;
};

}  // namespace synchro
