#pragma once

// Sample files and scatter rasters.
//
// A sample file is CSV with a header `x0,x1,...` and one point per row. Values
// use the shortest decimal form that parses back to the same double, so a file
// written twice from the same points has identical bytes.

#include "cosim/common.hpp"

#include <filesystem>
#include <string>

namespace cosim::io {

std::string format_double(double v);

std::string points_csv(const Points& p);
void write_points_csv(const Points& p, const std::filesystem::path& path);
/// Throws ValidationError on a missing file, ragged rows or non-numeric cells.
Points read_points_csv(const std::filesystem::path& path);

/// Binary PPM (P6) scatter of 2-D points on a white square, axes through the
/// origin in grey. The view is the symmetric box [-lim, lim]^2 with lim the
/// largest |coordinate| plus 10%, or `lim` when positive.
std::string scatter_ppm(const Points& p, int size = 600, double lim = 0.0);
void write_scatter_ppm(const Points& p, const std::filesystem::path& path, int size = 600, double lim = 0.0);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace cosim::io
