#pragma once

#include <string>
#include <vector>

#include "rotraman/observables.hpp"

namespace rotraman {

// Locale-independent scientific formatting with 17 significant digits via
// std::to_chars; round-trips every double exactly and is byte-stable across
// platforms. Negative zero is normalized to zero first.
std::string format_double(double x);

// Renders an observable series as a tab-separated table with a fixed header:
//   t jx jy jz var_jx var_jy var_jz j2 purity trace leakage
// plus se_* columns (se_jx .. se_j2, se_purity) when the series carries
// standard errors. Rows are newline-terminated.
std::string render_table(const ObservableSeries& series);

void write_file(const std::string& path, const std::string& content);

}  // namespace rotraman
