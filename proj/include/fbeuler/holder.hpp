#pragma once

#include "fbeuler/smoothing.hpp"

namespace fbeuler {

// Discrete proxy for the space-time Holder norm (14.1) on a box function,
// restricted to the physical domain [0,T] x closed unit disk: finite
// differences up to order k (k < a <= k+1) plus a dyadic-separation sampled
// difference-quotient seminorm at the fractional exponent.
double holder_norm(const BoxFunction& u, double a);

// same proxy for a nodal trajectory on the polar grid (time FD + spectral
// space derivatives); used by the iteration monitors at small orders.
double holder_norm_trajectory(GridPtr grid, const Eigen::VectorXd& t_nodes,
                              const std::vector<Eigen::VectorXd>& series, double a);

}  // namespace fbeuler
