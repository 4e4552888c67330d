#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "w2s/tensor.hpp"

namespace w2s {

struct Dataset {
  std::string name;
  Tensor<float> images;  // [N, C, H, W], values in [0, 1] as loaded
  std::vector<int> labels;
  std::optional<std::vector<int>> coarse_labels;  // CIFAR-100 super-classes
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  Shape image_shape() const;  // (C, H, W)
  void validate() const;

  // Stacks the selected images into [n, C, H, W].
  Tensor<float> gather(std::span<const std::size_t> indices) const;
  // Copy of the selected samples, label space unchanged.
  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> label_histogram() const;
  // Sample indices per class, ascending.
  std::vector<std::vector<std::size_t>> indices_by_class() const;
};

enum class Format { IDX, CIFAR10, CIFAR100 };

std::string to_string(Format format);
Format format_from_string(const std::string& name);

struct LoadReport {
  std::vector<std::filesystem::path> files;
  std::size_t records = 0;
  std::vector<std::size_t> histogram;
};

// Byte-level parsers. Errors are ParseError carrying the byte offset.
Tensor<float> parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);
// Appends the records of one CIFAR binary batch file.
void parse_cifar(std::span<const std::uint8_t> bytes, Format format, std::vector<float>& pixels,
                 std::vector<int>& labels, std::vector<int>& coarse);

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 LoadReport* report = nullptr);
Dataset load_cifar(const std::vector<std::filesystem::path>& files, Format format,
                   LoadReport* report = nullptr);

enum class Split { Train, Test };

/**
 * Loads a standard dataset layout under `root`:
 *   IDX       train-images-idx3-ubyte / train-labels-idx1-ubyte (t10k-* for test)
 *   CIFAR10   data_batch_1..5.bin / test_batch.bin
 *   CIFAR100  train.bin / test.bin
 */
Dataset load_dataset(const std::filesystem::path& root, Format format, Split split,
                     LoadReport* report = nullptr);

// Pixels are written as round(v * 255).
void write_idx(const Dataset& ds, const std::filesystem::path& images,
               const std::filesystem::path& labels);

// W2S_DATA_DIR unless an explicit override is given.
std::filesystem::path data_root(const std::optional<std::string>& override_dir = std::nullopt);

struct SynthSpec {
  std::size_t num_classes = 2;
  std::size_t per_class = 100;
  Shape image_shape{1, 1, 2};
  double spread = 0.1;
  std::uint64_t seed = 0;
  // Gaussian modes per class; more than one gives a non-linear class layout.
  std::size_t modes_per_class = 1;
};

/**
 * Gaussian clusters around unit-norm means (the standard basis when one mode
 * per class fits in the feature dimension), mapped affinely into [0, 1].
 */
Dataset synth_blobs(const SynthSpec& spec);

enum class NoiseKind { Symmetric, Asymmetric };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Symmetric;
  double ratio = 0.0;
  // Asymmetric class -> class table. Empty with coarse labels present selects
  // the circular within-super-class shift.
  std::map<int, int> flip_map;
  std::uint64_t seed = 0;
  // Symmetric only: draw the replacement from all K labels (may keep the
  // original) instead of the K - 1 others.
  bool include_original = false;

  void validate() const;
};

// truck -> automobile, bird -> airplane, cat <-> dog.
std::map<int, int> cifar10_flip_map();

struct LabelFlip {
  std::size_t index;
  int old_label;
  int new_label;
};

struct NoiseReport {
  std::size_t eligible = 0;
  std::size_t selected = 0;
  std::vector<LabelFlip> flips;  // ascending sample index
};

// floor(r * n), tolerant to the representation error of decimal ratios.
std::size_t noise_count(double ratio, std::size_t n);

/**
 * Relabels exactly floor(r * M) samples picked by a seeded permutation of the
 * M eligible samples. Symmetric and circular modes treat every sample as
 * eligible; a flip table restricts eligibility to its source classes.
 */
Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec, NoiseReport* report = nullptr);

// Partitions disjoint class lists into datasets with dense label spaces,
// labels renumbered in list order.
std::vector<Dataset> split_classes(const Dataset& ds, const std::vector<std::vector<int>>& class_lists);

struct EpisodeSpec {
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t q_query = 15;
  std::size_t episode_count = 800;
  std::uint64_t seed = 0;
};

struct Episode {
  std::vector<int> classes;           // original labels, in draw order
  std::vector<std::size_t> support;   // dataset indices, n_way * k_shot
  std::vector<int> support_labels;    // position of the class in `classes`
  std::vector<std::size_t> query;     // n_way * q_query
  std::vector<int> query_labels;
};

// Fully determined by (spec.seed, episode_index).
Episode sample_episode(const Dataset& ds, const EpisodeSpec& spec, std::size_t episode_index);

struct Batch {
  std::vector<std::size_t> indices;
  Tensor<float> images;
  std::vector<int> labels;
};

// Horizontal flip with p = 0.5, then a random crop from the image zero-padded
// by `crop_pad` on every side.
struct AugmentSpec {
  bool enabled = false;
  std::size_t crop_pad = 4;
};

// Seeded shuffle per (seed, epoch); the last partial batch is kept.
std::vector<Batch> make_batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                                std::size_t epoch, const AugmentSpec& augment = {});

// Sequential batches in index order, no augmentation.
std::vector<Batch> ordered_batches(const Dataset& ds, std::size_t batch_size);

}  // namespace w2s
