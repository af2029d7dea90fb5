#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kdlab/boxdist.hpp"
#include "kdlab/geometry.hpp"
#include "kdlab/losses.hpp"
#include "kdlab/tensor.hpp"

namespace kdlab::det {

struct ScaleConfig {
  double stride = 8.0;
  double size_lo = 0.0;
  double size_hi = 0.0;
  bool operator==(const ScaleConfig&) const = default;
};

struct DetectorConfig {
  std::string name = "student";
  std::size_t width = 8;
  std::size_t depth = 1;
  std::size_t classes = 3;
  std::size_t bins = 8;
  std::vector<ScaleConfig> scales;

  static DetectorConfig student();
  static DetectorConfig teacher();

  // Throws std::invalid_argument: strides must be powers of two >= 4 that
  // double from one scale to the next, and size ranges must partition (0, inf).
  void validate() const;

  boxdist::BinLattice lattice() const { return boxdist::BinLattice::unit(bins); }
  // Channel count of the feature map feeding the heads at a given stride.
  std::size_t channels_at(double stride) const;
  // Loss-side description of the scales for an image of the given size.
  std::vector<loss::ScaleSpec> scale_specs(std::size_t image_h, std::size_t image_w) const;

  bool operator==(const DetectorConfig&) const = default;
};

struct ScaleOutput {
  num::Tensor cls_logits;   // [C, H_s, W_s]
  num::Tensor obj_logits;   // [H_s, W_s]
  num::Tensor edge_logits;  // [4, n, H_s, W_s]
  double stride = 0.0;
};

struct HeadOutput {
  std::vector<ScaleOutput> scales;
};

// Head outputs rearranged cell-major and concatenated across scales, the
// layout every loss consumes.
struct FlatHeads {
  num::Tensor cls_logits;   // [cells, C]
  num::Tensor obj_logits;   // [cells]
  num::Tensor edge_logits;  // [cells, 4, n]
};

FlatHeads flatten(const HeadOutput& out);

struct NamedTensor {
  std::string name;
  num::Tensor value;
};

class Detector {
 public:
  static Detector build(const DetectorConfig& config, std::uint64_t seed);

  const DetectorConfig& config() const { return config_; }
  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  // Deep copy with independent parameter storage.
  Detector clone() const;
  void set_trainable(bool on);
  void zero_grad();

  // image [3, H, W]; throws std::invalid_argument if a stride does not divide
  // H or W.
  HeadOutput forward(const num::Tensor& image) const;

 private:
  struct Conv {
    std::size_t weight = 0;  // index into params_
    std::size_t bias = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
  };
  struct Stage {
    std::vector<Conv> convs;  // first one downsamples by 2
  };
  struct Head {
    Conv cls_stem, cls_out, loc_stem, edge_out, obj_out;
  };

  Conv add_conv(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride,
                bool zero_init, std::uint64_t& rng_state);
  num::Tensor apply(const Conv& c, const num::Tensor& x) const;

  DetectorConfig config_;
  std::vector<NamedTensor> params_;
  Conv stem_;
  std::vector<Stage> stages_;      // strides 4, 8, ... up to the coarsest scale
  std::vector<Conv> laterals_;     // one per scale except the coarsest
  std::vector<Head> heads_;        // one per scale
};

// Per cell: score = sigmoid(obj) * max_c softmax(cls); box decoded from the
// edge-distribution expectations (temperature t_decode) around the cell
// center, scaled by the stride and clamped to the image. Emits cells with
// score >= conf_threshold.
std::vector<geom::Detection> decode_predictions(const HeadOutput& out, const boxdist::BinLattice& lattice,
                                                double conf_threshold, double t_decode = 1.0);

std::vector<geom::Detection> predict(const Detector& det, const num::Tensor& image, double conf_threshold,
                                     double nms_iou);

// Checkpoint: "DSTL", u32 version, config record, u32 parameter count, then
// per parameter (u32 name length, name, u32 rank, u64 dims, f64 data), all
// little-endian.
std::vector<std::uint8_t> serialize(const Detector& det);
Detector deserialize(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Detector& det, const std::filesystem::path& path);
Detector load_checkpoint(const std::filesystem::path& path);

}  // namespace kdlab::det
