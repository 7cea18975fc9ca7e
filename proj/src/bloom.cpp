#include "synchro/bloom.hpp"

#include <algorithm>

namespace synchro {

BloomFilter::BloomFilter(std::uint64_t num_bits, std::uint8_t num_hashes)
    : num_bits_(std::max<std::uint64_t>(num_bits, 64)),
      num_hashes_(std::max<std::uint8_t>(num_hashes, 1)),
      words_(new std::atomic<std::uint64_t>[word_count()]) {
  for (std::size_t i = 0; i < word_count(); ++i) words_[i].store(0, std::memory_order_relaxed);
}

BloomFilter::BloomFilter(const BloomFilter& other)
    : num_bits_(other.num_bits_),
      num_hashes_(other.num_hashes_),
      words_(new std::atomic<std::uint64_t>[other.word_count()]) {
  for (std::size_t i = 0; i < word_count(); ++i) {
    words_[i].store(other.words_[i].load(std::memory_order_relaxed), std::memory_order_relaxed);
  }
}

BloomFilter& BloomFilter::operator=(const BloomFilter& other) {
  if (this != &other) {
    BloomFilter copy(other);
    *this = std::move(copy);
  }
  return *this;
}

BloomFilter BloomFilter::ForKeys(std::size_t expected_keys, int bits_per_key, int num_hashes) {
  std::uint64_t bits = static_cast<std::uint64_t>(std::max<std::size_t>(expected_keys, 1)) *
                       static_cast<std::uint64_t>(bits_per_key);
  return BloomFilter(bits, static_cast<std::uint8_t>(num_hashes));
}

BloomFilter BloomFilter::FromBytes(std::uint64_t num_bits, std::uint8_t num_hashes,
                                   std::span<const std::uint8_t> bytes) {
  BloomFilter f(num_bits, num_hashes);
  for (std::size_t i = 0; i < bytes.size() && i / 8 < f.word_count(); ++i) {
    std::uint64_t w = f.words_[i / 8].load(std::memory_order_relaxed);
    w |= static_cast<std::uint64_t>(bytes[i]) << (8 * (i % 8));
    f.words_[i / 8].store(w, std::memory_order_relaxed);
  }
  return f;
}

void BloomFilter::add(Key key) {
  const std::uint64_t h1 = Mix64(static_cast<std::uint64_t>(key));
  const std::uint64_t h2 = (h1 >> 33) | 1;
  std::uint64_t h = h1;
  for (int i = 0; i < num_hashes_; ++i) {
    const std::uint64_t bit = h % num_bits_;
    words_[bit / 64].fetch_or(std::uint64_t{1} << (bit % 64), std::memory_order_relaxed);
    h += h2;
  }
}

bool BloomFilter::may_contain(Key key) const {
  const std::uint64_t h1 = Mix64(static_cast<std::uint64_t>(key));
  const std::uint64_t h2 = (h1 >> 33) | 1;
  std::uint64_t h = h1;
  for (int i = 0; i < num_hashes_; ++i) {
    const std::uint64_t bit = h % num_bits_;
    if ((words_[bit / 64].load(std::memory_order_relaxed) & (std::uint64_t{1} << (bit % 64))) == 0) {
      return false;
    }
    h += h2;
  }
  return true;
}

std::vector<std::uint8_t> BloomFilter::to_bytes() const {
  std::vector<std::uint8_t> out(static_cast<std::size_t>((num_bits_ + 7) / 8));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(words_[i / 8].load(std::memory_order_relaxed) >> (8 * (i % 8)));
  }
  return out;
}

bool BloomFilter::operator==(const BloomFilter& other) const {
  if (num_bits_ != other.num_bits_ || num_hashes_ != other.num_hashes_) return false;
  for (std::size_t i = 0; i < word_count(); ++i) {
    if (words_[i].load(std::memory_order_relaxed) != other.words_[i].load(std::memory_order_relaxed)) {
      return false;
    }
  }
  return true;
}

}  // namespace synchro
