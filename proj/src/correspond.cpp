#include "fmsync/correspond.h"

#include <limits>
#include <sstream>
#include <vector>

#include "fmsync/error.h"

namespace fmsync {

namespace {

struct Nearest {
  std::vector<int> index;
  std::vector<double> dist2;
};

// Nearest row of `to` for every row of `from`, lowest index on ties.
Nearest nearest_rows(const Eigen::MatrixXd& from, const Eigen::MatrixXd& to) {
  // Work on columns; Eigen matrices are column-major.
  const Eigen::MatrixXd f = from.transpose();
  const Eigen::MatrixXd t = to.transpose();
  Nearest out{std::vector<int>(f.cols(), -1),
              std::vector<double>(f.cols(), std::numeric_limits<double>::infinity())};
  for (Eigen::Index i = 0; i < f.cols(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      double d2 = (f.col(i) - t.col(j)).squaredNorm();
      if (d2 < out.dist2[i]) {
        out.dist2[i] = d2;
        out.index[i] = static_cast<int>(j);
      }
    }
  }
  return out;
}

}  // namespace

void CorrespondenceSet::validate(Eigen::Index n_k, Eigen::Index n_l) const {
  for (Eigen::Index i = 0; i < pairs.rows(); ++i) {
    if (pairs(i, 0) < 0 || pairs(i, 0) >= n_k || pairs(i, 1) < 0 || pairs(i, 1) >= n_l) {
      std::ostringstream msg;
      msg << "correspondence " << i << " (" << pairs(i, 0) << ", " << pairs(i, 1)
          << ") out of range for clouds of size " << n_k << " and " << n_l;
      throw DataError(msg.str());
    }
  }
}

CorrespondenceSet match_descriptors(const DescriptorSet& d_k, const DescriptorSet& d_l,
                                    double threshold) {
  if (d_k.desc.cols() != d_l.desc.cols()) {
    std::ostringstream msg;
    msg << "descriptor dimension mismatch: " << d_k.desc.cols() << " vs " << d_l.desc.cols();
    throw DataError(msg.str());
  }
  if (d_k.desc.cols() < 1) throw DataError("descriptors need at least one feature");
  if (!d_k.desc.allFinite() || !d_l.desc.allFinite()) throw DataError("descriptors have non-finite entries");

  Nearest fwd = nearest_rows(d_k.desc, d_l.desc);
  Nearest bwd = nearest_rows(d_l.desc, d_k.desc);

  std::vector<std::pair<int, int>> kept;
  const double t2 = threshold * threshold;
  for (Eigen::Index i = 0; i < d_k.desc.rows(); ++i) {
    int j = fwd.index[i];
    if (j < 0 || bwd.index[j] != i) continue;
    if (threshold > 0.0 && fwd.dist2[i] < t2) kept.emplace_back(static_cast<int>(i), j);
  }
  CorrespondenceSet out;
  out.pairs.resize(static_cast<Eigen::Index>(kept.size()), 2);
  for (size_t r = 0; r < kept.size(); ++r) {
    out.pairs(r, 0) = kept[r].first;
    out.pairs(r, 1) = kept[r].second;
  }
  return out;
}

AlignedRows gather_basis_rows(const CorrespondenceSet& corr, const Eigen::MatrixXd& phi_k,
                              const Eigen::MatrixXd& phi_l) {
  corr.validate(phi_k.rows(), phi_l.rows());
  AlignedRows rows{Eigen::MatrixXd(corr.count(), phi_k.cols()), Eigen::MatrixXd(corr.count(), phi_l.cols())};
  for (Eigen::Index i = 0; i < corr.count(); ++i) {
    rows.source.row(i) = phi_k.row(corr.pairs(i, 0));
    rows.target.row(i) = phi_l.row(corr.pairs(i, 1));
  }
  return rows;
}

AlignedRows gather_basis_rows(const CorrespondenceSet& corr, const BasisMatrix& phi_k,
                              const BasisMatrix& phi_l) {
  return gather_basis_rows(corr, phi_k.phi, phi_l.phi);
}

}  // namespace fmsync
