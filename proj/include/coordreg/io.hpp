#pragma once

#include <string>

#include "coordreg/linalg.hpp"

namespace coordreg {

// Matrix files: text header "n d M P" followed by n*d whitespace-separated
// integer numerators; entry = numerator / P. Vector files use "n M P".
// Entries must lie on the 1/P grid (integer instances use P = 1).

void write_matrix(const std::string& path, const DenseMatrix& m, double grid_p);
DenseMatrix read_matrix(const std::string& path);

void write_vector(const std::string& path, const DenseVector& v, double grid_p);
DenseVector read_vector(const std::string& path);

}  // namespace coordreg
