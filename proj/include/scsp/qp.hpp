#pragma once

#include "scsp/math.hpp"

namespace scsp
{

struct NnQpOptions
{
  int max_iterations{2000};
  double tolerance{1e-9};
  bool polish{true};
  // Row-block size for block Gauss-Seidel sweeps (facet rows of one
  // contact couple strongly; exact block sub-solves absorb that).
  int block_size{1};
};

struct NnQpResult
{
  VecX x;
  int iterations{0};
  bool converged{false};
  bool polished{false};
  double kkt_residual{0.0};  // inf-norm of min(x, Hx + c)
};

// min 0.5 x' H x + c' x  s.t.  x >= 0, H symmetric PSD.
//
// Accelerated projected gradient (restarted) with an active-set polish
// pass that solves the identified equality system exactly. Problems here
// are tiny (tens of rows), so the polish usually lands machine-precision
// complementarity.
NnQpResult solve_nonneg_qp(const MatX& H, const VecX& c, const VecX& warm_start = VecX(),
                           const NnQpOptions& opts = {});

}  // namespace scsp
