#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "w2s/models.hpp"
#include "w2s/training.hpp"

namespace w2s {

/**
 * On-disk layout:
 *   "W2SC" | u32 version (LE) | u32 header length (LE) | UTF-8 JSON header |
 *   f32 LE parameters in header order | f32 LE momentum buffers, same order
 */
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<float>> params;
  std::vector<std::vector<float>> momentum;  // empty when no optimizer state
  std::size_t epoch = 0;
  nlohmann::json optimizer = nlohmann::json::object();
  std::string rng;  // descriptor of the stream that produced the next epoch
};

Checkpoint make_checkpoint(const Model<float>& model, const SgdState<float>* state,
                           const OptimConfig* optim, std::size_t epoch, std::string rng);

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
void save_checkpoint(const Model<float>& model, const SgdState<float>* state,
                     const OptimConfig* optim, std::size_t epoch, const std::string& rng,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint parameters into `model`; rejects the first mismatched
// name or shape.
void load_into(Model<float>& model, const Checkpoint& ckpt);
Model<float> restore_model(const Checkpoint& ckpt);
SgdState<float> restore_state(const Checkpoint& ckpt);

}  // namespace w2s
