#include "kdlab/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kdlab/binio.hpp"
#include "kdlab/rng.hpp"

namespace kdlab::data {

namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(hh);
  const double f = hh - sector;
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  switch (sector % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

struct Region {
  std::int64_t x0, y0, w, h;
  bool overlaps(const Region& o, std::int64_t margin) const {
    return x0 < o.x0 + o.w + margin && o.x0 < x0 + w + margin && y0 < o.y0 + o.h + margin &&
           o.y0 < y0 + h + margin;
  }
};

// Pixel (x, y) covers [x, x+1) x [y, y+1); membership is tested at its center.
bool shape_covers(std::size_t kind, const Region& r, std::int64_t x, std::int64_t y) {
  const double px = static_cast<double>(x) + 0.5;
  const double py = static_cast<double>(y) + 0.5;
  const double left = static_cast<double>(r.x0), top = static_cast<double>(r.y0);
  const double w = static_cast<double>(r.w), h = static_cast<double>(r.h);
  switch (kind) {
    case 0:
      return true;
    case 1: {
      const double dx = (px - (left + w / 2.0)) / (w / 2.0);
      const double dy = (py - (top + h / 2.0)) / (h / 2.0);
      return dx * dx + dy * dy <= 1.0;
    }
    default: {
      // Apex at the top center, base along the bottom edge.
      const double depth = (py - top) / h;
      const double half = depth * w / 2.0;
      return std::fabs(px - (left + w / 2.0)) <= half;
    }
  }
}

std::string make_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  io::write_file(path, {text.begin(), text.end()});
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneParams& params) {
  if (params.height < 16 || params.width < 16) throw std::invalid_argument("scene must be at least 16x16");
  if (params.classes < 2) throw std::invalid_argument("scene generator needs at least 2 classes");
  if (params.max_objects < 1) throw std::invalid_argument("max_objects must be positive");

  Rng rng(seed);
  const std::size_t H = params.height, W = params.width;
  std::vector<double> pixels(3 * H * W);
  std::array<double, 3> bg{};
  for (double& c : bg) c = rng.uniform(0.05, 0.2);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < H * W; ++i) pixels[ch * H * W + i] = bg[ch] + rng.uniform(-0.025, 0.025);
  }

  const std::size_t bands = (params.classes + 2) / 3;
  const auto max_side = static_cast<double>(std::min<std::size_t>(32, std::min(H, W)));
  const double min_side = std::min(12.0, max_side);

  Scene scene;
  std::vector<Region> placed;
  const auto count = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(params.max_objects)));
  for (std::size_t obj = 0; obj < count; ++obj) {
    const auto cls = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(params.classes) - 1));
    const std::size_t kind = cls % 3;
    const std::size_t band = cls / 3;
    const double hue = (static_cast<double>(band) + rng.uniform(0.0, 1.0)) / static_cast<double>(bands);
    const auto color = hsv_to_rgb(hue, rng.uniform(0.7, 1.0), rng.uniform(0.8, 1.0));

    const double side = rng.uniform(min_side, max_side);
    std::int64_t w = std::llround(side * rng.uniform(0.75, 1.0));
    std::int64_t h = kind == 1 ? w : std::llround(side * rng.uniform(0.75, 1.0));
    w = std::clamp<std::int64_t>(w, 3, static_cast<std::int64_t>(W));
    h = std::clamp<std::int64_t>(h, 3, static_cast<std::int64_t>(H));

    bool found = false;
    Region r{};
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      r = {rng.uniform_int(0, static_cast<std::int64_t>(W) - w), rng.uniform_int(0, static_cast<std::int64_t>(H) - h),
           w, h};
      found = std::none_of(placed.begin(), placed.end(), [&](const Region& o) { return r.overlaps(o, 1); });
    }
    if (!found) continue;
    placed.push_back(r);

    std::int64_t bx1 = INT64_MAX, by1 = INT64_MAX, bx2 = -1, by2 = -1;
    for (std::int64_t y = r.y0; y < r.y0 + r.h; ++y) {
      for (std::int64_t x = r.x0; x < r.x0 + r.w; ++x) {
        if (!shape_covers(kind, r, x, y)) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          pixels[(ch * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)] = color[ch];
        }
        bx1 = std::min(bx1, x);
        by1 = std::min(by1, y);
        bx2 = std::max(bx2, x + 1);
        by2 = std::max(by2, y + 1);
      }
    }
    scene.annotations.push_back({geom::BoundingBox{static_cast<double>(bx1), static_cast<double>(by1),
                                                   static_cast<double>(bx2), static_cast<double>(by2)},
                                 cls});
  }
  for (double& v : pixels) v = std::clamp(v, 0.0, 1.0);
  scene.image = num::Tensor({3, H, W}, std::move(pixels));
  return scene;
}

DatasetManifest split_dataset(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw std::invalid_argument("dataset needs at least 10 samples, got " + std::to_string(n));
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(make_id(i));
  Rng rng(derive_seed(seed, 0x5b117));
  rng.shuffle(ids);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  DatasetManifest m;
  m.seed = seed;
  m.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
               ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  m.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return m;
}

const std::vector<Scene>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, const std::string& id) {
  return derive_seed(dataset_seed, std::stoull(id));
}

Dataset generate_dataset(std::size_t n, std::uint64_t seed, const SceneParams& params) {
  Dataset ds;
  ds.manifest = split_dataset(n, seed);
  ds.manifest.params = params;
  auto fill = [&](const std::vector<std::string>& ids, std::vector<Scene>& out) {
    for (const std::string& id : ids) {
      Scene s = generate_scene(scene_seed(seed, id), params);
      s.id = id;
      out.push_back(std::move(s));
    }
  };
  fill(ds.manifest.train, ds.train);
  fill(ds.manifest.val, ds.val);
  fill(ds.manifest.test, ds.test);
  return ds;
}

std::vector<std::uint8_t> encode_image(const num::Tensor& image) {
  if (image.rank() != 3) throw num::ShapeError("image must be [C,H,W], got " + num::to_string(image.shape()));
  io::ByteWriter w;
  w.bytes("DIMG", 4);
  for (std::size_t d : image.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (double v : image.data()) w.f64(v);
  return w.take();
}

num::Tensor decode_image(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  r.expect_magic("DIMG");
  num::Shape shape;
  for (int k = 0; k < 3; ++k) {
    const std::uint32_t d = r.u32();
    if (d == 0 || d > 1u << 14) r.fail("invalid image dimension " + std::to_string(d));
    shape.push_back(d);
  }
  std::vector<double> values(num::numel(shape));
  for (double& v : values) {
    v = r.f64();
    if (!std::isfinite(v)) r.fail("non-finite pixel value");
  }
  if (!r.at_end()) r.fail("trailing bytes after image data");
  return num::Tensor(std::move(shape), std::move(values));
}

std::string format_labels(const std::vector<loss::LabeledBox>& boxes, std::size_t height, std::size_t width) {
  std::string out;
  char line[128];
  const auto H = static_cast<double>(height), W = static_cast<double>(width);
  for (const auto& b : boxes) {
    const geom::CenterBox c = geom::to_center(b.box);
    std::snprintf(line, sizeof line, "%zu %.6f %.6f %.6f %.6f\n", b.class_index, c.cx / W, c.cy / H, c.w / W,
                  c.h / H);
    out += line;
  }
  return out;
}

std::vector<loss::LabeledBox> parse_labels(const std::string& text, std::size_t height, std::size_t width,
                                           const std::string& source) {
  std::vector<loss::LabeledBox> out;
  const auto H = static_cast<double>(height), W = static_cast<double>(width);
  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(offset, end - offset);
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      std::istringstream is(line);
      long long cls = -1;
      double cx, cy, w, h;
      std::string extra;
      if (!(is >> cls >> cx >> cy >> w >> h) || (is >> extra) || cls < 0 || w < 0.0 || h < 0.0 ||
          !std::isfinite(cx + cy + w + h)) {
        throw io::FormatError(source + ": malformed label line at byte offset " + std::to_string(offset));
      }
      const geom::BoundingBox box{(cx - w / 2.0) * W, (cy - h / 2.0) * H, (cx + w / 2.0) * W, (cy + h / 2.0) * H};
      out.push_back({box, static_cast<std::size_t>(cls)});
    }
    offset = end + 1;
  }
  return out;
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << "# kdlab dataset manifest\n";
  os << "seed = " << m.seed << "\n";
  os << "height = " << m.params.height << "\n";
  os << "width = " << m.params.width << "\n";
  os << "classes = " << m.params.classes << "\n";
  os << "max_objects = " << m.params.max_objects << "\n";
  os << "count = " << m.total() << "\n";
  for (const auto& [name, ids] : {std::pair{"train", &m.train}, {"val", &m.val}, {"test", &m.test}}) {
    os << "[" << name << "]\n";
    for (const auto& id : *ids) os << id << "\n";
  }
  return os.str();
}

DatasetManifest parse_manifest(const std::string& text, const std::string& source) {
  DatasetManifest m;
  std::vector<std::string>* section = nullptr;
  std::size_t offset = 0;
  std::size_t declared_count = 0;
  bool have_count = false;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(offset, end - offset);
    const auto fail = [&](const std::string& why) {
      throw io::FormatError(source + ": " + why + " at byte offset " + std::to_string(offset));
    };
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') {
      // skip
    } else if (line == "[train]") {
      section = &m.train;
    } else if (line == "[val]") {
      section = &m.val;
    } else if (line == "[test]") {
      section = &m.test;
    } else if (section) {
      if (line.find_first_not_of("0123456789") != std::string::npos) fail("invalid sample identifier");
      section->push_back(line);
    } else {
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("expected 'key = value'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      std::uint64_t v = 0;
      try {
        std::size_t used = 0;
        v = std::stoull(value, &used);
        if (used != value.size()) fail("invalid value for '" + key + "'");
      } catch (const std::logic_error&) {
        fail("invalid value for '" + key + "'");
      }
      if (key == "seed") m.seed = v;
      else if (key == "height") m.params.height = v;
      else if (key == "width") m.params.width = v;
      else if (key == "classes") m.params.classes = v;
      else if (key == "max_objects") m.params.max_objects = v;
      else if (key == "count") { declared_count = v; have_count = true; }
      else fail("unknown manifest key '" + key + "'");
    }
    offset = end + 1;
  }
  if (have_count && declared_count != m.total()) {
    throw io::FormatError(source + ": manifest lists " + std::to_string(m.total()) + " ids but declares " +
                          std::to_string(declared_count) + " at byte offset " + std::to_string(text.size()));
  }
  return m;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "labels");
  write_text(dir / "manifest.txt", format_manifest(ds.manifest));
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const Scene& s : *split) {
      io::write_file(dir / "images" / (s.id + ".dimg"), encode_image(s.image));
      write_text(dir / "labels" / (s.id + ".txt"),
                 format_labels(s.annotations, ds.manifest.params.height, ds.manifest.params.width));
    }
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  Dataset ds;
  ds.manifest = parse_manifest(read_text(manifest_path), manifest_path.string());
  auto fill = [&](const std::vector<std::string>& ids, std::vector<Scene>& out) {
    for (const std::string& id : ids) {
      const auto img_path = dir / "images" / (id + ".dimg");
      const auto lbl_path = dir / "labels" / (id + ".txt");
      Scene s;
      s.id = id;
      s.image = decode_image(io::read_file(img_path), img_path.string());
      s.annotations = parse_labels(read_text(lbl_path), s.image.dim(1), s.image.dim(2), lbl_path.string());
      out.push_back(std::move(s));
    }
  };
  fill(ds.manifest.train, ds.train);
  fill(ds.manifest.val, ds.val);
  fill(ds.manifest.test, ds.test);
  return ds;
}

}  // namespace kdlab::data
