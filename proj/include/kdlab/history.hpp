#pragma once

#include <cstddef>
#include <vector>

namespace kdlab {

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_obj = 0.0;
  double loss_cls = 0.0;
  double loss_loc_sup = 0.0;
  double loss_loc_kd = 0.0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_map50 = 0.0;
  double val_map50_95 = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

// One record per completed epoch, in order.
struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

}  // namespace kdlab
