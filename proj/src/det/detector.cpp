#include "kdlab/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kdlab/binio.hpp"
#include "kdlab/ops.hpp"
#include "kdlab/rng.hpp"

namespace kdlab::det {

using num::Tensor;

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<ScaleConfig> default_scales() {
  return {{8.0, 0.0, 24.0}, {16.0, 24.0, std::numeric_limits<double>::infinity()}};
}

bool is_pow2(double v) {
  if (v < 1.0 || v != std::floor(v)) return false;
  const auto i = static_cast<std::uint64_t>(v);
  return (i & (i - 1)) == 0;
}

}  // namespace

DetectorConfig DetectorConfig::student() {
  DetectorConfig c;
  c.name = "student";
  c.width = 8;
  c.depth = 1;
  c.scales = default_scales();
  return c;
}

DetectorConfig DetectorConfig::teacher() {
  DetectorConfig c;
  c.name = "teacher";
  c.width = 24;
  c.depth = 2;
  c.scales = default_scales();
  return c;
}

void DetectorConfig::validate() const {
  if (width == 0) throw std::invalid_argument("detector width must be positive");
  if (classes < 1) throw std::invalid_argument("detector needs at least one class");
  if (bins < 2) throw std::invalid_argument("detector needs at least two bins per edge");
  if (scales.empty()) throw std::invalid_argument("detector needs at least one scale");
  for (std::size_t s = 0; s < scales.size(); ++s) {
    if (!is_pow2(scales[s].stride) || scales[s].stride < 4.0) {
      throw std::invalid_argument("scale strides must be powers of two >= 4");
    }
    if (s > 0 && scales[s].stride != 2.0 * scales[s - 1].stride) {
      throw std::invalid_argument("consecutive scale strides must double");
    }
    if (!(scales[s].size_lo < scales[s].size_hi)) throw std::invalid_argument("empty scale size range");
    if (s > 0 && scales[s].size_lo != scales[s - 1].size_hi) {
      throw std::invalid_argument("scale size ranges must be contiguous");
    }
  }
  if (scales.front().size_lo != 0.0 || !std::isinf(scales.back().size_hi)) {
    throw std::invalid_argument("scale size ranges must partition (0, inf)");
  }
}

std::size_t DetectorConfig::channels_at(double stride) const {
  return width * static_cast<std::size_t>(stride) / 4;
}

std::vector<loss::ScaleSpec> DetectorConfig::scale_specs(std::size_t image_h, std::size_t image_w) const {
  std::vector<loss::ScaleSpec> out;
  for (const ScaleConfig& s : scales) {
    const auto st = static_cast<std::size_t>(s.stride);
    out.push_back({image_h / st, image_w / st, s.stride, s.size_lo, s.size_hi});
  }
  return out;
}

FlatHeads flatten(const HeadOutput& out) {
  std::vector<Tensor> cls, obj, edges;
  for (const ScaleOutput& s : out.scales) {
    const std::size_t c = s.cls_logits.dim(0);
    const std::size_t cells = s.cls_logits.dim(1) * s.cls_logits.dim(2);
    const std::size_t bins = s.edge_logits.dim(1);
    cls.push_back(num::transpose2d(num::reshape(s.cls_logits, {c, cells})));
    obj.push_back(num::reshape(s.obj_logits, {cells}));
    edges.push_back(num::reshape(num::transpose2d(num::reshape(s.edge_logits, {4 * bins, cells})), {cells, 4, bins}));
  }
  return {num::concat0(cls), num::concat0(obj), num::concat0(edges)};
}

Detector::Conv Detector::add_conv(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t k,
                                  std::size_t stride, bool zero_init, std::uint64_t& rng_state) {
  Rng rng(derive_seed(rng_state, params_.size()));
  const std::size_t fan_in = c_in * k * k;
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> w(c_out * fan_in, 0.0);
  if (!zero_init) {
    for (double& v : w) v = rng.uniform(-limit, limit);
  }
  Conv conv;
  conv.stride = stride;
  conv.pad = k / 2;
  conv.weight = params_.size();
  params_.push_back({name + ".weight", Tensor({c_out, c_in, k, k}, std::move(w), true)});
  conv.bias = params_.size();
  params_.push_back({name + ".bias", Tensor::zeros({c_out}, true)});
  return conv;
}

Detector Detector::build(const DetectorConfig& config, std::uint64_t seed) {
  config.validate();
  Detector d;
  d.config_ = config;
  std::uint64_t state = seed;
  const std::size_t w = config.width;

  d.stem_ = d.add_conv("stem", 3, w, 3, 2, false, state);
  std::size_t c_prev = w;
  const double coarsest = config.scales.back().stride;
  for (double stride = 4.0; stride <= coarsest; stride *= 2.0) {
    const std::size_t c = config.channels_at(stride);
    const std::string prefix = "stage" + std::to_string(static_cast<int>(stride));
    Stage stage;
    stage.convs.push_back(d.add_conv(prefix + ".down", c_prev, c, 3, 2, false, state));
    for (std::size_t b = 0; b < config.depth; ++b) {
      stage.convs.push_back(d.add_conv(prefix + ".block" + std::to_string(b), c, c, 3, 1, false, state));
    }
    d.stages_.push_back(std::move(stage));
    c_prev = c;
  }
  for (std::size_t s = 0; s + 1 < config.scales.size(); ++s) {
    const std::size_t c = config.channels_at(config.scales[s].stride);
    const std::size_t c_up = config.channels_at(config.scales[s + 1].stride);
    d.laterals_.push_back(
        d.add_conv("fpn" + std::to_string(static_cast<int>(config.scales[s].stride)), c_up, c, 1, 1, false, state));
  }
  for (const ScaleConfig& sc : config.scales) {
    const std::size_t c = config.channels_at(sc.stride);
    const std::string prefix = "head" + std::to_string(static_cast<int>(sc.stride));
    Head h;
    h.cls_stem = d.add_conv(prefix + ".cls_stem", c, c, 3, 1, false, state);
    h.cls_out = d.add_conv(prefix + ".cls_out", c, config.classes, 1, 1, true, state);
    h.loc_stem = d.add_conv(prefix + ".loc_stem", c, c, 3, 1, false, state);
    h.edge_out = d.add_conv(prefix + ".edge_out", c, 4 * config.bins, 1, 1, true, state);
    h.obj_out = d.add_conv(prefix + ".obj_out", c, 1, 1, 1, true, state);
    d.heads_.push_back(h);
  }
  return d;
}

std::size_t Detector::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Detector Detector::clone() const {
  Detector d = *this;
  for (auto& p : d.params_) {
    p.value = Tensor(p.value.shape(), {p.value.data().begin(), p.value.data().end()}, p.value.requires_grad());
  }
  return d;
}

void Detector::set_trainable(bool on) {
  for (auto& p : params_) p.value.set_requires_grad(on);
}

void Detector::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

Tensor Detector::apply(const Conv& c, const Tensor& x) const {
  return num::add_channel_bias(num::conv2d(x, params_[c.weight].value, c.stride, c.pad), params_[c.bias].value);
}

HeadOutput Detector::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw num::ShapeError("detector input must be [3,H,W], got " + num::to_string(image.shape()));
  }
  for (const ScaleConfig& s : config_.scales) {
    const auto st = static_cast<std::size_t>(s.stride);
    if (image.dim(1) % st != 0 || image.dim(2) % st != 0) {
      throw std::invalid_argument("image size " + std::to_string(image.dim(1)) + "x" + std::to_string(image.dim(2)) +
                                  " is not divisible by stride " + std::to_string(st));
    }
  }

  Tensor x = num::relu(apply(stem_, image));
  std::vector<Tensor> features;
  double stride = 4.0;
  for (const Stage& stage : stages_) {
    for (const Conv& c : stage.convs) x = num::relu(apply(c, x));
    if (stride >= config_.scales.front().stride) features.push_back(x);
    stride *= 2.0;
  }

  // Top-down merge: each finer map receives the upsampled coarser one.
  std::vector<Tensor> pyramid(features.size());
  pyramid.back() = features.back();
  for (std::size_t s = features.size() - 1; s-- > 0;) {
    pyramid[s] = num::add(features[s], apply(laterals_[s], num::upsample2x(pyramid[s + 1])));
  }

  HeadOutput out;
  for (std::size_t s = 0; s < pyramid.size(); ++s) {
    const Head& h = heads_[s];
    const Tensor cls = apply(h.cls_out, num::relu(apply(h.cls_stem, pyramid[s])));
    const Tensor loc = num::relu(apply(h.loc_stem, pyramid[s]));
    const Tensor edges = apply(h.edge_out, loc);
    const Tensor obj = apply(h.obj_out, loc);
    const std::size_t hs = cls.dim(1), ws = cls.dim(2);
    out.scales.push_back({cls, num::reshape(obj, {hs, ws}), num::reshape(edges, {4, config_.bins, hs, ws}),
                          config_.scales[s].stride});
  }
  return out;
}

std::vector<geom::Detection> decode_predictions(const HeadOutput& out, const boxdist::BinLattice& lattice,
                                                double conf_threshold, double t_decode) {
  std::vector<geom::Detection> dets;
  for (const ScaleOutput& s : out.scales) {
    const std::size_t classes = s.cls_logits.dim(0);
    const std::size_t hs = s.cls_logits.dim(1), ws = s.cls_logits.dim(2);
    const std::size_t cells = hs * ws;
    const std::size_t bins = lattice.size();
    const double img_h = static_cast<double>(hs) * s.stride;
    const double img_w = static_cast<double>(ws) * s.stride;
    const auto cls = s.cls_logits.data();
    const auto obj = s.obj_logits.data();
    const auto edge = s.edge_logits.data();
    std::vector<double> logits(std::max(classes, bins));
    for (std::size_t cell = 0; cell < cells; ++cell) {
      for (std::size_t c = 0; c < classes; ++c) logits[c] = cls[c * cells + cell];
      const double m = *std::max_element(logits.begin(), logits.begin() + static_cast<std::ptrdiff_t>(classes));
      double z = 0.0;
      for (std::size_t c = 0; c < classes; ++c) z += std::exp(logits[c] - m);
      const auto best = static_cast<std::size_t>(
          std::max_element(logits.begin(), logits.begin() + static_cast<std::ptrdiff_t>(classes)) - logits.begin());
      const double o = obj[cell];
      const double conf = o >= 0.0 ? 1.0 / (1.0 + std::exp(-o)) : std::exp(o) / (1.0 + std::exp(o));
      const double score = conf / z;  // exp(m - m) / z is the top class probability
      if (score < conf_threshold) continue;

      std::array<double, 4> off{};
      for (std::size_t e = 0; e < 4; ++e) {
        for (std::size_t b = 0; b < bins; ++b) logits[b] = edge[(e * bins + b) * cells + cell];
        const auto dist =
            boxdist::logits_to_distribution(std::span<const double>(logits.data(), bins), lattice, t_decode);
        off[e] = boxdist::decode_expectation(dist) * s.stride;
      }
      const geom::Point center{(static_cast<double>(cell % ws) + 0.5) * s.stride,
                               (static_cast<double>(cell / ws) + 0.5) * s.stride};
      const geom::BoundingBox box = geom::from_offsets({off[0], off[1], off[2], off[3]}, center);
      dets.push_back({geom::clamp_to_image(box, img_w, img_h), best, std::clamp(score, 0.0, 1.0)});
    }
  }
  return dets;
}

std::vector<geom::Detection> predict(const Detector& det, const Tensor& image, double conf_threshold,
                                     double nms_iou) {
  num::NoGradGuard no_tape;
  return geom::nms(decode_predictions(det.forward(image), det.config().lattice(), conf_threshold), nms_iou);
}

std::vector<std::uint8_t> serialize(const Detector& det) {
  io::ByteWriter w;
  w.bytes("DSTL", 4);
  w.u32(kCheckpointVersion);
  const DetectorConfig& c = det.config();
  w.str(c.name);
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.depth));
  w.u32(static_cast<std::uint32_t>(c.classes));
  w.u32(static_cast<std::uint32_t>(c.bins));
  w.u32(static_cast<std::uint32_t>(c.scales.size()));
  for (const ScaleConfig& s : c.scales) {
    w.f64(s.stride);
    w.f64(s.size_lo);
    w.f64(s.size_hi);
  }
  w.u32(static_cast<std::uint32_t>(det.parameters().size()));
  for (const NamedTensor& p : det.parameters()) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u64(d);
    for (double v : p.value.data()) w.f64(v);
  }
  return w.take();
}

namespace {

Detector deserialize_from(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  r.expect_magic("DSTL");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  DetectorConfig c;
  c.name = r.str();
  c.width = r.u32();
  c.depth = r.u32();
  c.classes = r.u32();
  c.bins = r.u32();
  const std::uint32_t n_scales = r.u32();
  if (n_scales > 16) r.fail("implausible scale count");
  c.scales.clear();
  for (std::uint32_t s = 0; s < n_scales; ++s) {
    ScaleConfig sc;
    sc.stride = r.f64();
    sc.size_lo = r.f64();
    sc.size_hi = r.f64();
    c.scales.push_back(sc);
  }
  Detector det;
  try {
    det = Detector::build(c, 0);
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("invalid config record: ") + e.what());
  }
  const std::uint32_t n_params = r.u32();
  if (n_params != det.parameters().size()) {
    r.fail("parameter count " + std::to_string(n_params) + " does not match architecture (" +
           std::to_string(det.parameters().size()) + ")");
  }
  for (NamedTensor& p : det.parameters()) {
    const std::string name = r.str();
    if (name != p.name) r.fail("expected parameter '" + p.name + "', found '" + name + "'");
    const std::uint32_t rank = r.u32();
    num::Shape shape;
    for (std::uint32_t k = 0; k < rank && k < 8; ++k) shape.push_back(r.u64());
    if (shape != p.value.shape()) r.fail("shape mismatch for parameter '" + name + "'");
    auto dst = p.value.data_mut();
    for (double& v : dst) {
      v = r.f64();
      if (!std::isfinite(v)) r.fail("non-finite value in parameter '" + name + "'");
    }
  }
  if (!r.at_end()) r.fail("trailing bytes after checkpoint");
  return det;
}

}  // namespace

Detector deserialize(const std::vector<std::uint8_t>& bytes) { return deserialize_from(bytes, "<checkpoint>"); }

void save_checkpoint(const Detector& det, const std::filesystem::path& path) { io::write_file(path, serialize(det)); }

Detector load_checkpoint(const std::filesystem::path& path) {
  return deserialize_from(io::read_file(path), path.string());
}

}  // namespace kdlab::det
