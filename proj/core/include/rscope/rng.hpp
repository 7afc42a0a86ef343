// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>

namespace rscope {

/// SplitMix64 generator with a Box-Muller normal sampler.
///
/// Fixtures are specified in terms of this exact stream so that any
/// implementation reproduces identical traces:
///   state += 0x9E3779B97F4A7C15
///   z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB; return z ^ (z >> 31)
/// Uniforms take the top 53 bits: u = (next() >> 11) * 2^-53.
/// Normals use the cosine branch of Box-Muller on (1 - u1, u2); the sine
/// branch is discarded so each normal consumes exactly two draws.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept;
  double uniform() noexcept;
  double normal() noexcept;

 private:
  std::uint64_t state_;
};

/// Derives an independent stream seed from a base seed and a list of tags
/// by folding each tag through one SplitMix64 step.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept;

}  // namespace rscope
