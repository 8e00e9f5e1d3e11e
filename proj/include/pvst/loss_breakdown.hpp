#pragma once

#include <vector>

namespace pvst {

// Weighted contribution of each term to one total-loss evaluation; the four
// components sum to `total`.
struct LossBreakdown {
  double total = 0.0;
  double content = 0.0;
  double style = 0.0;
  double photorealism = 0.0;
  double temporal = 0.0;
  int temporal_terms = 0;           // number of reference frames penalised
  std::vector<int> temporal_gaps;   // j of each temporal term, ascending
};

}  // namespace pvst
