#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace pgg {

// Every random draw in the harness goes through this engine so that a seed
// fully determines a trial on any platform.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// 64-bit FNV-1a over the raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

// Stable seed for (master seed, cell id, trial index):
//   h = splitmix64(master ^ fnv1a64(cell)); seed = splitmix64(h ^ index)
// Pinned by golden values in the tests; changing it invalidates every
// results file on disk.
std::uint64_t derive_seed(std::uint64_t master, std::string_view cell, std::uint64_t index);

// Seed for a sub-stream of a trial seed (per-seat policies, assignment, ...).
std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream);

// Uniform integer in [0, n) by rejection on raw 64-bit engine output:
// draws x = engine() until x < 2^64 - (2^64 mod n), then returns x mod n.
// Unlike std::uniform_int_distribution this mapping is identical across
// standard library implementations.
std::size_t uniform_index(Rng& rng, std::size_t n);

}  // namespace pgg
