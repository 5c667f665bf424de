#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "attnvlad/tensor_store.hpp"

// Synthetic activation data: sparse blob "scenes" standing in for rectified
// conv-layer outputs, and perturbed copies of them.
namespace attnvlad::synth {

// Uniform in [0, 1), portable across standard libraries.
double unit(std::mt19937_64& rng);
int uniform_int(std::mt19937_64& rng, int lo, int hi); // inclusive

struct SceneOptions {
  std::size_t width = 16;
  std::size_t height = 16;
  std::size_t channels = 16;
  std::vector<std::string> layer_tags{"conv3", "conv4"};
  int min_blobs = 1;
  int max_blobs = 3;
  int max_radius = 2;
  int margin = 2; // blobs stay this far from the border so shifts keep them whole
};

// One tensor per layer tag.
std::vector<ActivationTensor> make_scene(const std::string& image_id, const SceneOptions& options,
                                         std::mt19937_64& rng);

// Shifts the tensor by (dx, dy) cells (zero fill) and scales every value by
// an independent factor in [1 - noise, 1 + noise].
ActivationTensor perturb(const ActivationTensor& tensor, int dx, int dy, double noise,
                         std::mt19937_64& rng, const std::string& image_id);

// Each value is non-zero with probability `density`, uniform in (0, 1].
ActivationTensor random_sparse(std::size_t width, std::size_t height, std::size_t channels,
                               double density, std::mt19937_64& rng, const std::string& layer_tag,
                               const std::string& image_id);

struct DatasetOptions {
  std::size_t places = 100;
  SceneOptions scene;
  double noise = 0.1;
  int max_shift = 2;
  std::uint64_t seed = 7;
};

// Writes <dir>/queries/*.atn (clean scenes), <dir>/refs/*.atn (perturbed
// copies) and <dir>/truth.csv. Query q_NNNN matches reference r_NNNN.
void write_dataset(const std::filesystem::path& dir, const DatasetOptions& options);

std::string place_id(char prefix, std::size_t index);

} // namespace attnvlad::synth
