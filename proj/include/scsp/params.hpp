#pragma once

#include "scsp/math.hpp"

namespace scsp
{

// Contact-model constants shared by the exact stepper, the fast model, and
// the surrogate. The planner typically holds a roughened copy of the
// simulator's values.
struct SystemParams
{
  Mat6 M_o{Mat6::Identity()};       // regularized object mass matrix
  Mat3 K_r{Mat3::Identity() * 300.0};  // fingertip impedance stiffness
  double epsilon_mass{1.0};         // scale on M_o
  double mu_env{0.5};               // friction, object-environment rows
  double mu_r{0.5};                 // friction, robot-object rows
  double h{0.02};                   // step (s)
  int n_d{4};                       // friction pyramid facets (even, >= 4)
  // R, dual regularization. Also what makes the facet impulses of sticking
  // contacts unique (the unregularized dual is degenerate there).
  double contact_reg{1e-8};
  double lambda_n_max{0.2};         // robot normal-force cap (N)
  double object_mass{0.1};          // gravity wrench mass (kg)
  Vec3 gravity{0.0, 0.0, -9.81};
  double contact_margin{0.01};      // activation distance for near contacts
  double fingertip_radius{0.012};

  void validate() const;  // throws std::invalid_argument on violations

  Mat6 effective_mass() const { return epsilon_mass * M_o; }
  Vec6 gravity_wrench() const
  {
    Vec6 tau = Vec6::Zero();
    tau.head<3>() = object_mass * gravity;
    return tau;
  }
};

// Uniform diagonal params in the paper's style: translation mass m,
// isotropic rotational mass i. Isotropic rotation keeps stepping invariant
// under world z-rotations.
SystemParams make_params(double m, double i);

}  // namespace scsp
