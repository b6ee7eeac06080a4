// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowtok/numerics/optim.hpp"

namespace flowtok::num {

// Binary checkpoint container:
//
//   bytes 0..7   magic "FTOKCKPT"
//   u32 LE       format version
//   u64 LE       header length H
//   H bytes      UTF-8 JSON header: {"meta": ..., "step": n,
//                "tensors": [{"name", "shape", "offset"}...]}
//   payload      per tensor: value, first moment, second moment, each as
//                little-endian IEEE-754 float64 in row-major order; "offset"
//                is the byte offset of the value block within the payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
    std::string name;
    Tensor value;
    Tensor first_moment;
    Tensor second_moment;
};

struct Checkpoint {
    nlohmann::json meta;
    std::uint64_t step = 0;
    std::vector<CheckpointTensor> tensors;
};

Checkpoint snapshot(const ParameterStore& store, nlohmann::json meta);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies values and optimizer state into an already-constructed store. Every
// store parameter must be present with an identical shape; throws UserError
// otherwise.
void restore(const Checkpoint& ckpt, ParameterStore& store);

// Convenience wrappers.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, nlohmann::json meta);

}  // namespace flowtok::num
