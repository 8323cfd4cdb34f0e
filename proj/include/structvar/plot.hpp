#pragma once

#include <string>
#include <vector>

#include "structvar/dbn.hpp"

namespace structvar {

// One SVG per vars_per_slice: three panels (mixture | vertical | horizontal),
// x = slices, y = median gap per slice with p25-p75 error bars, one series
// per variant.
std::string benchmark_svg(const std::vector<SummaryRow>& rows, int vars_per_slice);

}  // namespace structvar
