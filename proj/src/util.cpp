#include "radpert/util.hpp"

#include <sstream>

namespace radpert {

std::string fnv1a64_hex(std::string_view data) {
  const std::uint64_t h = fnv1a64(data);
  std::ostringstream oss;
  oss << std::hex;
  for (int shift = 60; shift >= 0; shift -= 4) {
    oss << ((h >> shift) & 0xF);
  }
  return oss.str();
}

}  // namespace radpert
