#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "kdlab/binio.hpp"
#include "kdlab/synthdata.hpp"
#include "support.hpp"

using namespace kdlab::data;
using testsupport::to_vec;

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) { return kdlab::io::read_file(p); }

}  // namespace

TEST(Scene, SameSeedBitIdentical) {
  const SceneParams p;
  const Scene a = generate_scene(77, p), b = generate_scene(77, p);
  EXPECT_EQ(to_vec(a.image.data()), to_vec(b.image.data()));
  ASSERT_EQ(a.annotations.size(), b.annotations.size());
  for (std::size_t i = 0; i < a.annotations.size(); ++i) {
    EXPECT_EQ(a.annotations[i].box, b.annotations[i].box);
    EXPECT_EQ(a.annotations[i].class_index, b.annotations[i].class_index);
  }
}

TEST(Scene, SingleObjectBoxIsTightAroundForeground) {
  SceneParams p;
  p.max_objects = 1;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = generate_scene(seed, p);
    ASSERT_EQ(s.annotations.size(), 1u);
    // Foreground pixels differ from the background level by far more than
    // the background noise amplitude.
    const std::size_t h = p.height, w = p.width;
    double bg[3];
    for (std::size_t c = 0; c < 3; ++c) bg[c] = s.image.at(c * h * w);
    double x1 = 1e9, y1 = 1e9, x2 = -1, y2 = -1;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double diff = 0.0;
        for (std::size_t c = 0; c < 3; ++c) diff = std::max(diff, std::fabs(s.image.at((c * h + y) * w + x) - bg[c]));
        if (diff < 0.2) continue;
        x1 = std::min(x1, static_cast<double>(x));
        y1 = std::min(y1, static_cast<double>(y));
        x2 = std::max(x2, static_cast<double>(x + 1));
        y2 = std::max(y2, static_cast<double>(y + 1));
      }
    }
    EXPECT_EQ(s.annotations[0].box, (kdlab::geom::BoundingBox{x1, y1, x2, y2})) << "seed " << seed;
  }
}

TEST(Scene, AnnotationsInBoundsAcrossSeeds) {
  const SceneParams p;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Scene s = generate_scene(seed, p);
    EXPECT_GE(s.annotations.size(), 1u);
    EXPECT_LE(s.annotations.size(), p.max_objects);
    for (const auto& a : s.annotations) {
      EXPECT_GE(a.box.x1, 0.0);
      EXPECT_GE(a.box.y1, 0.0);
      EXPECT_LE(a.box.x2, 48.0);
      EXPECT_LE(a.box.y2, 48.0);
      EXPECT_GE(a.box.area(), 9.0);
      EXPECT_LT(a.class_index, p.classes);
    }
    for (double v : s.image.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Scene, Preconditions) {
  SceneParams p;
  p.height = 8;
  EXPECT_THROW(generate_scene(1, p), std::invalid_argument);
  p = SceneParams{};
  p.classes = 1;
  EXPECT_THROW(generate_scene(1, p), std::invalid_argument);
}

TEST(Split, EightyTenTen) {
  const DatasetManifest m = split_dataset(6000, 1);
  EXPECT_EQ(m.train.size(), 4800u);
  EXPECT_EQ(m.val.size(), 600u);
  EXPECT_EQ(m.test.size(), 600u);
}

TEST(Split, DeskSizeDisjointAndDeterministic) {
  const DatasetManifest m = split_dataset(600, 9);
  EXPECT_EQ(m.train.size(), 480u);
  EXPECT_EQ(m.val.size(), 60u);
  EXPECT_EQ(m.test.size(), 60u);
  std::set<std::string> all(m.train.begin(), m.train.end());
  all.insert(m.val.begin(), m.val.end());
  all.insert(m.test.begin(), m.test.end());
  EXPECT_EQ(all.size(), 600u);
  const DatasetManifest again = split_dataset(600, 9);
  EXPECT_EQ(again.train, m.train);
  EXPECT_EQ(again.test, m.test);
  EXPECT_NE(split_dataset(600, 10).train, m.train);
  for (std::size_t n = 10; n < 200; ++n) EXPECT_EQ(split_dataset(n, 1).total(), n);
  EXPECT_THROW(split_dataset(9, 1), std::invalid_argument);
}

TEST(Labels, NormalizedLine) {
  const std::vector<kdlab::loss::LabeledBox> boxes{{{8, 8, 24, 24}, 2}};
  EXPECT_EQ(format_labels(boxes, 48, 48), "2 0.333333 0.333333 0.333333 0.333333\n");
  EXPECT_EQ(format_labels({}, 48, 48), "");
  EXPECT_TRUE(parse_labels("", 48, 48, "x").empty());
}

TEST(Labels, MalformedNamesSourceAndOffset) {
  try {
    parse_labels("0 0.5 0.5 0.1 0.1\n1 0.5 zz 0.1 0.1\n", 48, 48, "labels/000001.txt");
    FAIL();
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("labels/000001.txt"), std::string::npos) << msg;
    EXPECT_NE(msg.find("offset 18"), std::string::npos) << msg;
  }
}

TEST(Image, CodecRejectsTruncation) {
  const Scene s = generate_scene(3, SceneParams{});
  auto bytes = encode_image(s.image);
  EXPECT_EQ(to_vec(decode_image(bytes, "img").data()), to_vec(s.image.data()));
  bytes.resize(bytes.size() - 1);
  EXPECT_THROW(decode_image(bytes, "img"), kdlab::io::FormatError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const Dataset ds = generate_dataset(30, 5, SceneParams{});
  const auto dir = testsupport::scratch_dir("dataset");
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  EXPECT_EQ(back.manifest.train, ds.manifest.train);
  EXPECT_EQ(back.manifest.seed, ds.manifest.seed);
  for (const std::string split : {"train", "val", "test"}) {
    const auto& a = ds.split(split);
    const auto& b = back.split(split);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].id, b[i].id);
      EXPECT_EQ(to_vec(a[i].image.data()), to_vec(b[i].image.data()));
      ASSERT_EQ(a[i].annotations.size(), b[i].annotations.size());
      for (std::size_t k = 0; k < a[i].annotations.size(); ++k) {
        EXPECT_EQ(a[i].annotations[k].class_index, b[i].annotations[k].class_index);
        const auto& x = a[i].annotations[k].box;
        const auto& y = b[i].annotations[k].box;
        EXPECT_NEAR(x.x1 / 48.0, y.x1 / 48.0, 1e-6);
        EXPECT_NEAR(x.y1 / 48.0, y.y1 / 48.0, 1e-6);
        EXPECT_NEAR(x.x2 / 48.0, y.x2 / 48.0, 1e-6);
        EXPECT_NEAR(x.y2 / 48.0, y.y2 / 48.0, 1e-6);
      }
    }
  }
}

TEST(Dataset, RegenerationIsByteIdentical) {
  const auto d1 = testsupport::scratch_dir("regen1"), d2 = testsupport::scratch_dir("regen2");
  save_dataset(generate_dataset(20, 8, SceneParams{}), d1);
  save_dataset(generate_dataset(20, 8, SceneParams{}), d2);
  for (const auto& entry : std::filesystem::recursive_directory_iterator(d1)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), d1);
    EXPECT_EQ(slurp(entry.path()), slurp(d2 / rel)) << rel;
  }
}

TEST(Dataset, MissingDirectoryReported) {
  try {
    load_dataset("/nonexistent/kdlab_data");
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/kdlab_data"), std::string::npos);
  }
}
