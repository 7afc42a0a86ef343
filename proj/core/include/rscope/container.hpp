// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// RSCOPE01 container: bytes 0-7 are the magic "RSCOPE01", bytes 8-15 a
// little-endian u64 manifest length M, then M bytes of UTF-8 JSON manifest,
// then a raw blob of little-endian float32 tensors addressed by the manifest
// tensor index (name, dtype, shape, offset, nbytes). Manifest keys are sorted
// and tensors are laid out in a fixed canonical order, so writing the same
// trace twice yields identical bytes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rscope/trace.hpp"

namespace rscope {

inline constexpr char kContainerMagic[8] = {'R', 'S', 'C', 'O', 'P', 'E', '0', '1'};
inline constexpr int kContainerFormatVersion = 1;

struct WriteOptions {
  /// When set, the unembedding and final-norm tensors are not stored in the
  /// trace; the manifest field "unembed_ref" records this path (relative to
  /// the trace's directory when possible) and readers load the tensors from
  /// the shared-weights container found there.
  std::optional<std::filesystem::path> shared_weights;
};

/// Serializes a validated trace to container bytes. `trace_dir` is used only
/// to relativize `options.shared_weights`.
std::vector<std::uint8_t> encode_trace(const ActivationTrace& trace, const WriteOptions& options = {},
                                       const std::filesystem::path& trace_dir = {});

/// Parses container bytes. `base_dir` resolves a relative "unembed_ref".
ActivationTrace decode_trace(const std::vector<std::uint8_t>& bytes,
                             const std::filesystem::path& base_dir = {});

void write_trace(const ActivationTrace& trace, const std::filesystem::path& path,
                 const WriteOptions& options = {});
ActivationTrace read_trace(const std::filesystem::path& path);

/// Shared-weights container: same framing, tensors "unembed",
/// "final_norm_weight" and optionally "final_norm_bias".
void write_shared_weights(const UnembedBlock& block, int vocab_size, int d_model,
                          const std::filesystem::path& path);
UnembedBlock read_shared_weights(const std::filesystem::path& path);

/// All regular files with the ".rscope" extension under `dir`, sorted by name.
/// Shared-weights containers are skipped.
std::vector<std::filesystem::path> list_trace_files(const std::filesystem::path& dir);

}  // namespace rscope
