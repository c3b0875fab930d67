#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pl {

// Lowercase ASCII, split on runs of non-alphanumeric bytes. Bytes >= 0x80 are
// kept inside tokens so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

std::string to_lower_ascii(std::string_view text);

// FNV-1a 64-bit. Stable across platforms; used for cache digests and the
// mock backend's tie-break.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t value);

// Number of UTF-8 code points (continuation bytes are not counted).
std::size_t utf8_length(std::string_view text);

// Suffix of `text` holding its last `count` code points.
std::string_view utf8_suffix(std::string_view text, std::size_t count);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// Portable deterministic generator: splitmix64 seeding a xoshiro256**.
// std::uniform_int_distribution and std::shuffle are implementation-defined,
// so bounded draws and shuffles are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent stream for (seed, stream index).
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next();
  // Uniform in [0, bound), bound > 0, rejection-sampled (no modulo bias).
  std::uint64_t below(std::uint64_t bound);
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace pl
