#pragma once

#include "fbeuler/field.hpp"
#include "fbeuler/state.hpp"
#include "fbeuler/vector_fields.hpp"

namespace fbeuler {

enum class LieVariant { Plain, Hat, Check };

// Lie derivative of a field along a spatial vector field (4.8)/(4.10)/(4.12),
// with the kappa-weighted hat (4.18) and check (4.20) variants.  The plain
// variant only uses the metric for grid access.
Field lie_derivative(const VectorFieldSpec& T, const Field& F, LieVariant variant,
                     const MetricData& metric);

// div W = kappa^{-1} d_a (kappa W^a), the collocation form (2.51).
Eigen::VectorXd divergence(const Field& W, const MetricData& m);

// curl of a one-form, (d_a w_b - d_b w_a).
Field curl(const Field& w, const PolarGrid& grid);

// sup-norm residual of L_T curl w - curl L_T w (4.13).
double curl_identity_check(const VectorFieldSpec& T, const Field& w,
                           const MetricData& m);

// Hat / check time derivatives along a trajectory:
//   hat:   kappa^{-1} D_t (kappa  . )   (vectors, scalars)
//   check: kappa      D_t (kappa^{-1} . )  (forms)
// Both reduce to the centered/one-sided order-2 stencil when sigma is static.
std::vector<Field> hat_time_derivative(const std::vector<Field>& series,
                                       const MetricSeries& ms);
std::vector<Field> check_time_derivative(const std::vector<Field>& series,
                                         const MetricSeries& ms);

// index raising / lowering with the metric
Field lower_index(const Field& W, const MetricData& m);   // vector -> one-form
Field raise_index(const Field& w, const MetricData& m);   // one-form -> vector

// pointwise application of a spatial field to a scalar: (T f)(p)
Eigen::VectorXd apply_vector_to_scalar(const VectorFieldSpec& T,
                                       const Eigen::VectorXd& f,
                                       const PolarGrid& grid);

}  // namespace fbeuler
