#pragma once

#include "nsr/core.hpp"

namespace nsr {

// Color loss: mean over pixels of the channel-summed L1 difference.
template <typename Real>
double loss_color(const Eigen::Matrix<Real, 3, Eigen::Dynamic>& rendered,
                  const Eigen::Matrix<Real, 3, Eigen::Dynamic>& reference) {
  if (rendered.cols() != reference.cols()) throw ValidationError("loss_color: size mismatch");
  if (rendered.cols() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < rendered.cols(); ++k)
    sum += (rendered.col(k) - reference.col(k)).template cast<double>().cwiseAbs().sum();
  return sum / rendered.cols();
}

// Normal prior loss: indicator-gated L1 between the prior and the raw
// accumulated normal (both in the pixel's reference camera frame). Gated
// pixels contribute zero but still count in the 1/m normalization.
template <typename Real>
double loss_prior(const Eigen::Matrix<Real, 3, Eigen::Dynamic>& rendered_cam,
                  const Eigen::Matrix<Real, 3, Eigen::Dynamic>& prior,
                  const VecX<double>& omega) {
  if (rendered_cam.cols() != prior.cols() || omega.size() != prior.cols())
    throw ValidationError("loss_prior: size mismatch");
  if (prior.cols() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < prior.cols(); ++k)
    sum += omega[k] * (prior.col(k) - rendered_cam.col(k)).template cast<double>().cwiseAbs().sum();
  return sum / prior.cols();
}

// Eikonal loss: mean squared deviation of gradient norms from one over all
// sampled points.
template <typename Real>
double loss_eikonal(const Eigen::Matrix<Real, 3, Eigen::Dynamic>& gradients) {
  if (gradients.cols() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index p = 0; p < gradients.cols(); ++p) {
    double d = gradients.col(p).template cast<double>().norm() - 1.0;
    sum += d * d;
  }
  return sum / gradients.cols();
}

}  // namespace nsr
