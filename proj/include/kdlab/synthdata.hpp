#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kdlab/losses.hpp"
#include "kdlab/tensor.hpp"

namespace kdlab::data {

struct Scene {
  std::string id;
  num::Tensor image;  // [3, H, W], values in [0, 1]
  std::vector<loss::LabeledBox> annotations;
};

struct SceneParams {
  std::size_t height = 48;
  std::size_t width = 48;
  std::size_t max_objects = 3;
  std::size_t classes = 3;
};

// Shapes by class: 0 filled rectangle, 1 filled disk, 2 filled triangle;
// class k >= 3 reuses shape k % 3 with its own hue band. Objects do not
// overlap and each annotation is the tight box of the rendered pixels.
Scene generate_scene(std::uint64_t seed, const SceneParams& params);

struct DatasetManifest {
  std::uint64_t seed = 0;
  SceneParams params;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  std::size_t total() const { return train.size() + val.size() + test.size(); }
};

// Shuffles identifiers 000000..n-1 with the seed and cuts round(0.8 n),
// round(0.1 n) and the remainder. Throws std::invalid_argument for n < 10.
DatasetManifest split_dataset(std::size_t n, std::uint64_t seed);

struct Dataset {
  DatasetManifest manifest;
  std::vector<Scene> train;
  std::vector<Scene> val;
  std::vector<Scene> test;

  const std::vector<Scene>& split(const std::string& name) const;
};

std::uint64_t scene_seed(std::uint64_t dataset_seed, const std::string& id);

Dataset generate_dataset(std::size_t n, std::uint64_t seed, const SceneParams& params);

// Image files: "DIMG", u32 channels, u32 height, u32 width, f64 values (LE).
std::vector<std::uint8_t> encode_image(const num::Tensor& image);
num::Tensor decode_image(const std::vector<std::uint8_t>& bytes, const std::string& source);

// One object per line: "class cx cy w h", normalized by image size, 6 decimals.
std::string format_labels(const std::vector<loss::LabeledBox>& boxes, std::size_t height, std::size_t width);
std::vector<loss::LabeledBox> parse_labels(const std::string& text, std::size_t height, std::size_t width,
                                           const std::string& source);

std::string format_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(const std::string& text, const std::string& source);

// Layout: manifest.txt, images/<id>.dimg, labels/<id>.txt.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace kdlab::data
