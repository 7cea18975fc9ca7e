#pragma once

#include <boost/crc.hpp>

#include <cstdint>
#include <span>
#include <string_view>

namespace synchro {

// CRC32C (Castagnoli), reflected, init/xorout 0xFFFFFFFF.
inline std::uint32_t Crc32c(std::span<const std::uint8_t> bytes) {
  boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true> crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

inline std::uint32_t Crc32c(std::string_view s) {
  return Crc32c(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

}  // namespace synchro
