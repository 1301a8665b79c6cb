#pragma once

#include <filesystem>

#include "fwmerge/param_set.hpp"

namespace fwmerge {

// FWCK container: "FWCK" magic, u32 LE version (=1), u64 LE header length,
// UTF-8 JSON header [{name, dtype, shape, offset, nbytes}, ...] in storage
// order, then raw little-endian tensor payloads. Offsets are relative to
// the end of the header. 2-D+ tensors are stored row-major (C order).
inline constexpr std::uint32_t kFwckVersion = 1;

enum class StorageType { f32, f64 };

// In-memory arithmetic is always f64; f32 storage exists to keep fixture
// files small and is promoted on load.
void save_checkpoint(const ParamSet& p, const std::filesystem::path& path,
                     StorageType dtype = StorageType::f64);

ParamSet load_checkpoint(const std::filesystem::path& path);

// Parses magic/version/header only; does not touch tensor payloads.
ParamSchema read_checkpoint_schema(const std::filesystem::path& path);

}  // namespace fwmerge
