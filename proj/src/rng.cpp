#include "pixobj/rng.hpp"

namespace pixobj {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over the stream name.
std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index, std::uint64_t sub) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ hash_name(stream));
  h = splitmix64(h ^ index);
  h = splitmix64(h ^ (sub * 0x9e3779b97f4a7c15ULL));
  return h;
}

}  // namespace pixobj
