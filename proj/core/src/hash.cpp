#include "efuf/hash.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "efuf/error.hpp"

namespace efuf {

Fnv1a& Fnv1a::field(std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  update(std::string_view(bytes.data(), bytes.size()));
  return update(std::string_view("\x1f", 1));
}

std::string Fnv1a::hex() const { return to_hex(state_); }

std::uint64_t fnv1a(std::string_view bytes) { return Fnv1a().update(bytes).digest(); }

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  Fnv1a h;
  std::array<char, 1 << 14> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return h.hex();
}

}  // namespace efuf
