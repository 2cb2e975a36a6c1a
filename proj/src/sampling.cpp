#include "scsp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace scsp
{

void build_frame(SurfaceSample& s)
{
  Vec3 a = Vec3::UnitZ();
  if (std::abs(a.dot(s.n)) > 1.0 - 1e-6) a = Vec3::UnitX();
  const Vec3 proj = a - a.dot(s.n) * s.n;
  s.t1 = proj.normalized();
  s.t2 = s.n.cross(s.t1);
}

std::vector<SurfaceSample> sample_surface_pool(const TriMesh& mesh, int count, uint64_t seed)
{
  if (mesh.faces.empty()) throw std::runtime_error("cannot sample an empty mesh");
  std::vector<double> cumulative(mesh.faces.size());
  double acc = 0.0;
  for (size_t f = 0; f < mesh.faces.size(); ++f)
  {
    acc += mesh.face_areas[f];
    cumulative[f] = acc;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<SurfaceSample> pool;
  pool.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
  {
    const double pick = uni(rng) * acc;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), pick);
    const int f = static_cast<int>(std::distance(cumulative.begin(), it));
    const auto& tri = mesh.faces[static_cast<size_t>(std::min<int>(f, static_cast<int>(mesh.faces.size()) - 1))];
    const double r1 = std::sqrt(uni(rng));
    const double r2 = uni(rng);
    SurfaceSample s;
    s.p = (1.0 - r1) * mesh.vertices[tri[0]] + r1 * (1.0 - r2) * mesh.vertices[tri[1]]
        + r1 * r2 * mesh.vertices[tri[2]];
    s.face_id = std::min<int>(f, static_cast<int>(mesh.faces.size()) - 1);
    s.n = mesh.face_normals[static_cast<size_t>(s.face_id)];
    build_frame(s);
    pool.push_back(s);
  }
  return pool;
}

namespace
{

std::vector<SurfaceSample> fps_over_pool(std::vector<SurfaceSample> pool, int K, int seed_index)
{
  const int n = static_cast<int>(pool.size());
  if (K < 1) throw std::runtime_error("FPS requires K >= 1");
  if (K > n) throw std::runtime_error("FPS K exceeds pool size");
  if (seed_index < 0 || seed_index >= n) throw std::runtime_error("FPS seed index out of range");

  std::vector<SurfaceSample> out;
  out.reserve(static_cast<size_t>(K));
  std::vector<double> min_dist(static_cast<size_t>(n), std::numeric_limits<double>::infinity());

  int current = seed_index;
  for (int k = 0; k < K; ++k)
  {
    out.push_back(pool[static_cast<size_t>(current)]);
    const Vec3 p = pool[static_cast<size_t>(current)].p;
    int best = -1;
    double best_dist = -1.0;
    for (int i = 0; i < n; ++i)
    {
      const double d = (pool[static_cast<size_t>(i)].p - p).squaredNorm();
      if (d < min_dist[static_cast<size_t>(i)]) min_dist[static_cast<size_t>(i)] = d;
      if (min_dist[static_cast<size_t>(i)] > best_dist)
      {
        best_dist = min_dist[static_cast<size_t>(i)];
        best = i;
      }
    }
    current = best;
  }
  return out;
}

}  // namespace

std::vector<SurfaceSample> farthest_point_sample(const TriMesh& mesh, int K, int seed_index,
                                                 const FpsOptions& opts)
{
  const TriMesh base = opts.convex_hull_prepass ? convex_hull(mesh) : mesh;
  const int pool_size = std::max(opts.pool_min, opts.pool_multiplier * std::max(K, 1));
  auto pool = sample_surface_pool(base, pool_size, opts.pool_seed);
  return fps_over_pool(std::move(pool), K, seed_index);
}

std::vector<SurfaceSample> farthest_point_sample(const TriMesh& mesh, int K, const Vec3& seed_point,
                                                 const FpsOptions& opts)
{
  const TriMesh base = opts.convex_hull_prepass ? convex_hull(mesh) : mesh;
  const int pool_size = std::max(opts.pool_min, opts.pool_multiplier * std::max(K, 1));
  auto pool = sample_surface_pool(base, pool_size, opts.pool_seed);
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < pool.size(); ++i)
  {
    const double d = (pool[i].p - seed_point).squaredNorm();
    if (d < best_dist)
    {
      best_dist = d;
      best = static_cast<int>(i);
    }
  }
  return fps_over_pool(std::move(pool), K, best);
}

// ===== KdTree =====

void KdTree::build(const std::vector<Vec3>& points, const std::vector<int>& ids)
{
  points_ = points;
  ids_ = ids;
  nodes_.clear();
  root_ = -1;
  if (points_.empty()) return;
  std::vector<int> order(points_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  nodes_.reserve(points_.size());
  root_ = build_recursive(order, 0, static_cast<int>(order.size()));
}

int KdTree::build_recursive(std::vector<int>& order, int lo, int hi)
{
  if (lo >= hi) return -1;
  Vec3 mn = points_[static_cast<size_t>(order[lo])];
  Vec3 mx = mn;
  for (int i = lo; i < hi; ++i)
  {
    mn = mn.cwiseMin(points_[static_cast<size_t>(order[i])]);
    mx = mx.cwiseMax(points_[static_cast<size_t>(order[i])]);
  }
  int axis = 0;
  (mx - mn).maxCoeff(&axis);
  const int mid = (lo + hi) / 2;
  std::nth_element(order.begin() + lo, order.begin() + mid, order.begin() + hi,
                   [&](int a, int b) {
                     const double pa = points_[static_cast<size_t>(a)][axis];
                     const double pb = points_[static_cast<size_t>(b)][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  Node node;
  node.point = points_[static_cast<size_t>(order[mid])];
  node.id = ids_[static_cast<size_t>(order[mid])];
  node.axis = axis;
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build_recursive(order, lo, mid);
  const int right = build_recursive(order, mid + 1, hi);
  nodes_[static_cast<size_t>(self)].left = left;
  nodes_[static_cast<size_t>(self)].right = right;
  return self;
}

void KdTree::search(int node, const Vec3& q, Hit& best) const
{
  if (node < 0) return;
  const Node& n = nodes_[static_cast<size_t>(node)];
  const double d = (n.point - q).squaredNorm();
  if (d < best.dist_sq || (d == best.dist_sq && n.id < best.id))
  {
    best.dist_sq = d;
    best.id = n.id;
  }
  const double diff = q[n.axis] - n.point[n.axis];
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, q, best);
  // Equal-distance subtrees must be explored so index tie-breaking is exact.
  if (diff * diff <= best.dist_sq) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const
{
  if (nodes_.empty()) return {};
  Hit best;
  best.id = std::numeric_limits<int>::max();
  best.dist_sq = std::numeric_limits<double>::infinity();
  search(root_, query, best);
  return best;
}

// ===== CandidateSet =====

int CandidateSet::valid_count() const
{
  int n = 0;
  for (bool v : valid) n += v ? 1 : 0;
  return n;
}

CandidateSet apply_valid_mask(const std::vector<SurfaceSample>& samples,
                              const RegionPredicate& predicate)
{
  CandidateSet set;
  set.samples = samples;
  set.valid.resize(samples.size());
  std::vector<Vec3> pts;
  std::vector<int> ids;
  for (size_t i = 0; i < samples.size(); ++i)
  {
    set.valid[i] = predicate(samples[i]);
    if (set.valid[i])
    {
      pts.push_back(samples[i].p);
      ids.push_back(static_cast<int>(i));
    }
  }
  if (pts.empty()) throw std::runtime_error("valid-region mask rejected every candidate");
  set.index.build(pts, ids);
  return set;
}

int nearest_valid_index(const CandidateSet& candidates, const Vec3& query)
{
  if (candidates.index.empty()) throw std::runtime_error("candidate set has no valid samples");
  return candidates.index.nearest(query).id;
}

const SurfaceSample& nearest_valid(const CandidateSet& candidates, const Vec3& query)
{
  return candidates.samples[static_cast<size_t>(nearest_valid_index(candidates, query))];
}

std::string CandidateSet::to_json() const
{
  nlohmann::json j;
  j["samples"] = nlohmann::json::array();
  for (size_t i = 0; i < samples.size(); ++i)
  {
    const auto& s = samples[i];
    j["samples"].push_back({{"p", {s.p.x(), s.p.y(), s.p.z()}},
                            {"n", {s.n.x(), s.n.y(), s.n.z()}},
                            {"t1", {s.t1.x(), s.t1.y(), s.t1.z()}},
                            {"t2", {s.t2.x(), s.t2.y(), s.t2.z()}},
                            {"face_id", s.face_id},
                            {"valid", static_cast<bool>(valid[i])}});
  }
  return j.dump();
}

RegionPredicate make_curvature_predicate(const TriMesh& mesh, double max_normal_variance)
{
  // Vertex -> incident faces adjacency, captured by value.
  std::map<int, std::vector<int>> vertex_faces;
  for (size_t f = 0; f < mesh.faces.size(); ++f)
  {
    for (int k = 0; k < 3; ++k) vertex_faces[mesh.faces[f][k]].push_back(static_cast<int>(f));
  }
  const auto normals = mesh.face_normals;
  const auto faces = mesh.faces;
  return [vertex_faces, normals, faces, max_normal_variance](const SurfaceSample& s) {
    if (s.face_id < 0 || s.face_id >= static_cast<int>(faces.size())) return true;
    std::set<int> ring;
    for (int k = 0; k < 3; ++k)
    {
      const auto it = vertex_faces.find(faces[static_cast<size_t>(s.face_id)][k]);
      if (it == vertex_faces.end()) continue;
      for (int f : it->second) ring.insert(f);
    }
    if (ring.empty()) return true;
    double var = 0.0;
    for (int f : ring) var += 1.0 - normals[static_cast<size_t>(f)].dot(s.n);
    var /= static_cast<double>(ring.size());
    return var <= max_normal_variance;
  };
}

}  // namespace scsp
