#pragma once

#include <cstddef>
#include <vector>

namespace kdlab::geom {

// Axis-aligned box in pixels, corner form.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool contains(double px, double py) const { return px >= x1 && px <= x2 && py >= y1 && py <= y2; }
  bool operator==(const BoundingBox&) const = default;
};

// Distances from a reference point to the top, bottom, left and right edges.
struct EdgeOffsets {
  double t = 0.0;
  double b = 0.0;
  double l = 0.0;
  double r = 0.0;
  bool operator==(const EdgeOffsets&) const = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Detection {
  BoundingBox box;
  std::size_t class_index = 0;
  double score = 0.0;
  bool operator==(const Detection&) const = default;
};

// Center form {cx, cy, w, h}.
struct CenterBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

// Throws std::invalid_argument if x1 > x2 or y1 > y2.
BoundingBox make_box(double x1, double y1, double x2, double y2);

CenterBox to_center(const BoundingBox& box);
BoundingBox from_center(const CenterBox& c);

// Throws std::invalid_argument when the point lies outside the box.
EdgeOffsets to_offsets(const BoundingBox& box, Point p);
// Throws std::invalid_argument on a negative offset.
BoundingBox from_offsets(const EdgeOffsets& off, Point p);

double iou(const BoundingBox& a, const BoundingBox& b);

BoundingBox clamp_to_image(const BoundingBox& box, double width, double height);

// Class-wise greedy suppression. Candidates are visited by descending score
// (ties: lower input index first); one is kept iff its IoU with every kept
// detection of the same class is <= iou_threshold. Output is in acceptance
// order.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

}  // namespace kdlab::geom
