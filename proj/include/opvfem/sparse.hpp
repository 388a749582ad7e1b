#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace opvfem {

// Compressed row storage throughout: outerIndexPtr() are the row offsets,
// innerIndexPtr() the sorted column indices, valuePtr() the values.
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

}  // namespace opvfem
