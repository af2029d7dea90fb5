#include "kdlab/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace kdlab::geom {

BoundingBox make_box(double x1, double y1, double x2, double y2) {
  if (x1 > x2 || y1 > y2) {
    std::ostringstream os;
    os << "invalid box (" << x1 << "," << y1 << "," << x2 << "," << y2 << ")";
    throw std::invalid_argument(os.str());
  }
  return {x1, y1, x2, y2};
}

CenterBox to_center(const BoundingBox& box) {
  return {(box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0, box.width(), box.height()};
}

BoundingBox from_center(const CenterBox& c) {
  return make_box(c.cx - c.w / 2.0, c.cy - c.h / 2.0, c.cx + c.w / 2.0, c.cy + c.h / 2.0);
}

EdgeOffsets to_offsets(const BoundingBox& box, Point p) {
  if (!box.contains(p.x, p.y)) {
    std::ostringstream os;
    os << "point (" << p.x << "," << p.y << ") outside box (" << box.x1 << "," << box.y1 << "," << box.x2 << ","
       << box.y2 << ")";
    throw std::invalid_argument(os.str());
  }
  return {p.y - box.y1, box.y2 - p.y, p.x - box.x1, box.x2 - p.x};
}

BoundingBox from_offsets(const EdgeOffsets& off, Point p) {
  if (off.t < 0.0 || off.b < 0.0 || off.l < 0.0 || off.r < 0.0) {
    throw std::invalid_argument("edge offsets must be nonnegative");
  }
  return {p.x - off.l, p.y - off.t, p.x + off.r, p.y + off.b};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BoundingBox clamp_to_image(const BoundingBox& box, double width, double height) {
  const double x1 = std::clamp(box.x1, 0.0, width);
  const double y1 = std::clamp(box.y1, 0.0, height);
  return {x1, y1, std::clamp(box.x2, x1, width), std::clamp(box.y2, y1, height)};
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    const Detection& cand = dets[idx];
    const bool clear = std::none_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_index == cand.class_index && iou(k.box, cand.box) > iou_threshold;
    });
    if (clear) kept.push_back(cand);
  }
  return kept;
}

}  // namespace kdlab::geom
