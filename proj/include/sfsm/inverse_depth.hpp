#pragma once

#include <limits>

#include "sfsm/geometry.hpp"

namespace sfsm {

enum class DepthParameterization {
  softplus,  // w = softplus(omega), positive by construction
  clamped,   // raw inverse depth, projected onto [floor, inf) after every update
};

/// Maps the unconstrained optimization variable to a positive inverse depth.
struct InverseDepthModel {
  DepthParameterization kind = DepthParameterization::softplus;
  SoftPlusParams softplus;
  double clamp_floor = 1e-10;

  double value(double p) const {
    return kind == DepthParameterization::softplus ? sfsm::softplus(p, softplus) : (p > clamp_floor ? p : clamp_floor);
  }
  double derivative(double p) const {
    return kind == DepthParameterization::softplus ? softplus_derivative(p, softplus) : (p >= clamp_floor ? 1.0 : 0.0);
  }
  /// Bound for the optimizer's parameter block.
  double lower_bound() const {
    return kind == DepthParameterization::softplus ? -std::numeric_limits<double>::infinity() : clamp_floor;
  }
  /// Throws NonPositiveDepth for w <= 0.
  double parameter_for(double w) const;
};

}  // namespace sfsm
