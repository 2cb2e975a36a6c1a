#include "scsp/qp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace scsp
{

namespace
{

double kkt_residual_of(const MatX& H, const VecX& c, const VecX& x)
{
  const VecX grad = H * x + c;
  double r = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
  {
    r = std::max(r, std::abs(std::min(x[i], grad[i])));
  }
  return r;
}

// One sweep of projected Gauss-Seidel; monotone for PSD H and a reliable
// active-set identifier on degenerate problems.
void pgs_sweep(const MatX& H, const VecX& c, VecX& x)
{
  const Eigen::Index n = c.size();
  for (Eigen::Index i = 0; i < n; ++i)
  {
    const double hii = H(i, i);
    if (hii <= 0.0) continue;
    const double grad = H.row(i).dot(x) + c[i];
    x[i] = std::max(0.0, x[i] - grad / hii);
  }
}

// Exact solve of a small sub-LCP 0 <= y perp Hb y + cb >= 0 by subset
// enumeration (dimension <= ~6).
VecX solve_block_lcp(const MatX& Hb, const VecX& cb)
{
  const int m = static_cast<int>(cb.size());
  const double scale = 1.0 + cb.cwiseAbs().maxCoeff();
  VecX best = VecX::Zero(m);
  double best_res = std::numeric_limits<double>::infinity();
  for (uint32_t mask = 0; mask < (1u << m); ++mask)
  {
    std::vector<int> idx;
    for (int i = 0; i < m; ++i)
    {
      if (mask & (1u << i)) idx.push_back(i);
    }
    VecX y = VecX::Zero(m);
    if (!idx.empty())
    {
      MatX Hs(idx.size(), idx.size());
      VecX cs(idx.size());
      for (size_t a = 0; a < idx.size(); ++a)
      {
        cs[static_cast<Eigen::Index>(a)] = cb[idx[a]];
        for (size_t b = 0; b < idx.size(); ++b)
        {
          Hs(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = Hb(idx[a], idx[b]);
        }
      }
      const VecX ys = Hs.fullPivLu().solve(-cs);
      if (!ys.allFinite()) continue;
      bool nonneg = true;
      for (Eigen::Index a = 0; a < ys.size(); ++a) nonneg &= ys[a] >= -1e-12 * scale;
      if (!nonneg) continue;
      for (size_t a = 0; a < idx.size(); ++a)
      {
        y[idx[a]] = std::max(0.0, ys[static_cast<Eigen::Index>(a)]);
      }
    }
    double res = 0.0;
    const VecX slack = Hb * y + cb;
    for (Eigen::Index i = 0; i < y.size(); ++i)
    {
      res = std::max(res, std::abs(std::min(y[i], slack[i])));
    }
    if (res < best_res)
    {
      best_res = res;
      best = y;
      if (res <= 1e-13 * scale) break;
    }
  }
  return best;
}

// Block Gauss-Seidel sweep: exact per-block sub-solves against the frozen
// rest of the system.
void block_pgs_sweep(const MatX& H, const VecX& c, VecX& x, int block)
{
  const Eigen::Index n = c.size();
  for (Eigen::Index start = 0; start < n; start += block)
  {
    const Eigen::Index width = std::min<Eigen::Index>(block, n - start);
    VecX cb = c.segment(start, width);
    cb += H.middleRows(start, width) * x;
    cb -= H.block(start, start, width, width) * x.segment(start, width);
    x.segment(start, width) = solve_block_lcp(H.block(start, start, width, width), cb);
  }
}

// Lawson-Hanson style active-set refinement from a warm guess, driven by
// the true complementarity residual: the pivoting is only a search
// heuristic, acceptance is the measured KKT residual of the clamped point.
bool nnls_refine(const MatX& H, const VecX& c, VecX& x, int max_pivots,
                 double seed_rel = 1e-9)
{
  const Eigen::Index n = c.size();
  const double scale = 1.0 + c.cwiseAbs().maxCoeff();
  const double target = 1e-10 * scale;
  std::vector<bool> active(static_cast<size_t>(n));
  const double seed_threshold = seed_rel * std::max(1.0, x.size() > 0 ? x.cwiseAbs().maxCoeff() : 0.0);
  for (Eigen::Index i = 0; i < n; ++i) active[static_cast<size_t>(i)] = x[i] > seed_threshold;

  VecX best = x.cwiseMax(0.0);
  double best_res = kkt_residual_of(H, c, best);

  for (int pivot = 0; pivot < max_pivots; ++pivot)
  {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i)
    {
      if (active[static_cast<size_t>(i)]) idx.push_back(i);
    }
    VecX solution = VecX::Zero(n);
    VecX xs;
    if (!idx.empty())
    {
      MatX Hs(idx.size(), idx.size());
      VecX cs(idx.size());
      for (size_t a = 0; a < idx.size(); ++a)
      {
        cs[static_cast<Eigen::Index>(a)] = c[idx[a]];
        for (size_t b = 0; b < idx.size(); ++b)
        {
          Hs(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = H(idx[a], idx[b]);
        }
      }
      xs = Hs.ldlt().solve(-cs);
      if (!xs.allFinite()) return false;
      for (size_t a = 0; a < idx.size(); ++a)
      {
        solution[idx[a]] = std::max(0.0, xs[static_cast<Eigen::Index>(a)]);
      }
    }

    const double res = kkt_residual_of(H, c, solution);
    if (res < best_res)
    {
      best_res = res;
      best = solution;
    }
    if (res <= target)
    {
      x = solution;
      return true;
    }

    // Drop the most negative component, else bring in the worst gradient.
    Eigen::Index worst = -1;
    double worst_val = -1e-12 * scale;
    for (Eigen::Index a = 0; a < xs.size(); ++a)
    {
      if (xs[a] < worst_val)
      {
        worst_val = xs[a];
        worst = a;
      }
    }
    if (worst >= 0)
    {
      active[static_cast<size_t>(idx[static_cast<size_t>(worst)])] = false;
      continue;
    }
    const VecX grad = H * solution + c;
    Eigen::Index enter = -1;
    double most = -1e-11 * scale;
    for (Eigen::Index i = 0; i < n; ++i)
    {
      if (active[static_cast<size_t>(i)]) continue;
      if (grad[i] < most)
      {
        most = grad[i];
        enter = i;
      }
    }
    if (enter < 0)
    {
      x = best;
      return best_res <= 10.0 * target;
    }
    active[static_cast<size_t>(enter)] = true;
  }
  if (best_res <= target)
  {
    x = best;
    return true;
  }
  return false;
}

}  // namespace

NnQpResult solve_nonneg_qp(const MatX& H, const VecX& c, const VecX& warm_start,
                           const NnQpOptions& opts)
{
  NnQpResult result;
  const Eigen::Index n = c.size();
  if (n == 0)
  {
    result.x = VecX();
    result.converged = true;
    return result;
  }

  VecX x = VecX::Zero(n);
  if (warm_start.size() == n) x = warm_start.cwiseMax(0.0);

  // Lipschitz constant of the gradient via a few power iterations.
  double lip = 0.0;
  {
    VecX v = VecX::Ones(n).normalized();
    for (int it = 0; it < 30; ++it)
    {
      VecX w = H * v;
      const double norm = w.norm();
      if (norm < 1e-300) break;
      lip = norm;
      v = w / norm;
    }
  }
  if (lip <= 0.0)
  {
    result.x = VecX::Zero(n);
    result.converged = true;
    result.kkt_residual = kkt_residual_of(H, c, result.x);
    return result;
  }
  const double step = 1.0 / lip;
  const double scale = 1.0 + c.cwiseAbs().maxCoeff();

  // Accelerated projected gradient with restart; refined below.
  VecX y = x;
  VecX x_prev = x;
  double t_prev = 1.0;
  int it = 0;
  for (; it < opts.max_iterations; ++it)
  {
    const VecX grad = H * y + c;
    x = (y - step * grad).cwiseMax(0.0);
    const double t = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev));
    VecX momentum = x + ((t_prev - 1.0) / t) * (x - x_prev);
    if ((x - x_prev).dot(y - x) > 0.0)
    {
      momentum = x;  // restart
      t_prev = 1.0;
    }
    else
    {
      t_prev = t;
    }
    x_prev = x;
    y = momentum;

    if (it % 16 == 0 && kkt_residual_of(H, c, x) <= opts.tolerance * scale)
    {
      result.converged = true;
      break;
    }
    if (opts.polish && it == 96)
    {
      // Early refinement attempt once the active set has roughly settled.
      VecX candidate = x;
      if (nnls_refine(H, c, candidate, 4 * static_cast<int>(n) + 16))
      {
        x = candidate;
        result.polished = true;
        break;
      }
    }
  }

  if (opts.polish && !result.polished)
  {
    for (double seed_rel : {1e-9, 1e-6, 1e-3})
    {
      VecX candidate = x;
      if (nnls_refine(H, c, candidate, 16 * static_cast<int>(n) + 64, seed_rel))
      {
        x = candidate;
        result.polished = true;
        break;
      }
    }
  }

  // Degenerate active sets can stall both passes; (block) Gauss-Seidel
  // sweeps re-identify the set, with refinement retried periodically.
  if (opts.polish && !result.polished)
  {
    const double target = std::max(opts.tolerance * scale, 1e-12 * scale);
    const bool blocked = opts.block_size > 1 && n % opts.block_size == 0;
    for (int sweep = 0; sweep < 100 * static_cast<int>(n); ++sweep)
    {
      if (blocked)
      {
        block_pgs_sweep(H, c, x, opts.block_size);
      }
      else
      {
        pgs_sweep(H, c, x);
      }
      if (sweep % 16 == 15)
      {
        if (kkt_residual_of(H, c, x) <= target) break;
        VecX candidate = x;
        if (nnls_refine(H, c, candidate, 16 * static_cast<int>(n) + 64, 1e-7))
        {
          x = candidate;
          result.polished = true;
          break;
        }
      }
    }
  }

  // Ridge continuation: solve a better-conditioned copy first and reuse
  // its active set as the refinement seed for the true problem.
  if (opts.polish && !result.polished && kkt_residual_of(H, c, x) > opts.tolerance * scale * 10.0)
  {
    const double trace_scale = H.trace() / static_cast<double>(n);
    for (double boost : {1e-3, 1e-5, 1e-7})
    {
      MatX H_boost = H;
      H_boost.diagonal().array() += boost * trace_scale;
      VecX relaxed = x;
      if (!nnls_refine(H_boost, c, relaxed, 16 * static_cast<int>(n) + 64, 1e-7))
      {
        for (int sweep = 0; sweep < 40 * static_cast<int>(n); ++sweep)
        {
          pgs_sweep(H_boost, c, relaxed);
        }
      }
      VecX candidate = relaxed;
      if (nnls_refine(H, c, candidate, 16 * static_cast<int>(n) + 64, 1e-7))
      {
        x = candidate;
        result.polished = true;
        break;
      }
      x = relaxed;  // still a better warm point for the next level
    }
  }

  result.x = x;
  result.iterations = it;
  result.kkt_residual = kkt_residual_of(H, c, x);
  if (result.kkt_residual <= opts.tolerance * scale * 10.0 || result.polished)
  {
    result.converged = result.kkt_residual <= std::max(opts.tolerance * scale * 10.0, 1e-10 * scale);
  }
  return result;
}

}  // namespace scsp
