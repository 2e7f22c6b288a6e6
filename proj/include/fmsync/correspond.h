#pragma once

#include <Eigen/Dense>

#include "fmsync/bases.h"

namespace fmsync {

inline constexpr double kDefaultMatchThreshold = 0.3;

// Per-point descriptors D_k (N x F).
struct DescriptorSet {
  Eigen::MatrixXd desc;
  int cloud_id = 0;
};

// Matched index pairs: column 0 indexes cloud k, column 1 indexes cloud l.
struct CorrespondenceSet {
  Eigen::Matrix<int, Eigen::Dynamic, 2> pairs;

  Eigen::Index count() const { return pairs.rows(); }
  // Throws DataError if any index falls outside [0, n_k) x [0, n_l).
  void validate(Eigen::Index n_k, Eigen::Index n_l) const;
};

// Mutual nearest neighbours in descriptor space (L2, ties to the lowest
// index), kept when their distance is strictly below the threshold.
CorrespondenceSet match_descriptors(const DescriptorSet& d_k, const DescriptorSet& d_l,
                                    double threshold = kDefaultMatchThreshold);

// Phi_k^(kl), Phi_l^(kl): basis rows at the matched indices.
struct AlignedRows {
  Eigen::MatrixXd source;
  Eigen::MatrixXd target;
};

AlignedRows gather_basis_rows(const CorrespondenceSet& corr, const BasisMatrix& phi_k,
                              const BasisMatrix& phi_l);
AlignedRows gather_basis_rows(const CorrespondenceSet& corr, const Eigen::MatrixXd& phi_k,
                              const Eigen::MatrixXd& phi_l);

}  // namespace fmsync
