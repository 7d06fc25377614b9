#include "scsam/rng.hpp"

#include <vector>

namespace scsam {

Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * stream.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto v : stream) push(v);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace scsam
