#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "picg/autodiff.hpp"

namespace picg {

// Little-endian float32 blob helpers. All on-disk numeric payloads (volumes,
// checkpoints, feature caches) use this encoding.
void write_f32_le(std::ostream& os, const float* data, size_t n);
std::vector<float> read_f32_le(std::istream& is, size_t n);

void write_f32_file(const std::filesystem::path& path, const std::vector<float>& data);
std::vector<float> read_f32_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// Checkpoint files: a magic line, a single-line JSON header carrying the
// stage tag, a config digest and the parameter manifest (name/shape/offset),
// then the float32 parameter blob in manifest order.
struct CheckpointInfo {
    std::string stage;
    std::string config_digest;
    std::string blob_digest;  // fnv1a64 hex over the raw blob bytes
};

CheckpointInfo save_checkpoint(const std::filesystem::path& path, const std::string& stage,
                               const std::string& config_digest, const ParamStore& params);

// Loads values into an existing store; names and shapes must match exactly.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, ParamStore& params);

// Header-only read (stage/digest introspection without a model).
CheckpointInfo peek_checkpoint(const std::filesystem::path& path);

}  // namespace picg
