#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "scsp/math.hpp"
#include "scsp/mesh.hpp"

namespace scsp
{

// Surface point with its local contact frame. t2 = n x t1, all unit length.
struct SurfaceSample
{
  Vec3 p{Vec3::Zero()};
  Vec3 n{Vec3::UnitZ()};
  Vec3 t1{Vec3::UnitX()};
  Vec3 t2{Vec3::UnitY()};
  int face_id{-1};
};

// Tangent frame from a fixed axis a = (0,0,1); falls back to (1,0,0) when
// the normal is within 1e-6 of parallel to a.
void build_frame(SurfaceSample& s);

struct FpsOptions
{
  int pool_multiplier{50};
  int pool_min{2000};
  uint64_t pool_seed{0x5C5Bu};
  bool convex_hull_prepass{false};  // sample the hull instead of the raw surface
};

// Dense area-weighted pool used as the FPS ground set.
std::vector<SurfaceSample> sample_surface_pool(const TriMesh& mesh, int count, uint64_t seed);

// Greedy max-min selection over the dense pool. The first element is the
// seed; argmax ties break to the lowest pool index.
std::vector<SurfaceSample> farthest_point_sample(const TriMesh& mesh, int K, int seed_index,
                                                 const FpsOptions& opts = {});
std::vector<SurfaceSample> farthest_point_sample(const TriMesh& mesh, int K, const Vec3& seed_point,
                                                 const FpsOptions& opts = {});

// Exact nearest-neighbor tree over 3D points; equal distances resolve to
// the lowest stored id.
class KdTree
{
public:
  KdTree() = default;
  void build(const std::vector<Vec3>& points, const std::vector<int>& ids);
  bool empty() const { return nodes_.empty(); }

  struct Hit
  {
    int id{-1};
    double dist_sq{0.0};
  };
  Hit nearest(const Vec3& query) const;

private:
  struct Node
  {
    Vec3 point;
    int id;
    int axis;
    int left{-1};
    int right{-1};
  };
  int build_recursive(std::vector<int>& order, int lo, int hi);
  void search(int node, const Vec3& q, Hit& best) const;
  std::vector<Node> nodes_;
  std::vector<Vec3> points_;
  std::vector<int> ids_;
  int root_{-1};
};

using RegionPredicate = std::function<bool(const SurfaceSample&)>;

// Immutable after construction; shared freely across planner threads.
struct CandidateSet
{
  std::vector<SurfaceSample> samples;
  std::vector<bool> valid;
  KdTree index;  // over valid samples only

  int valid_count() const;
  std::string to_json() const;
};

// Valid flag = predicate(sample); throws if nothing survives.
CandidateSet apply_valid_mask(const std::vector<SurfaceSample>& samples,
                              const RegionPredicate& predicate);

// Argmin Euclidean distance over valid samples; lowest index wins ties.
const SurfaceSample& nearest_valid(const CandidateSet& candidates, const Vec3& query);
int nearest_valid_index(const CandidateSet& candidates, const Vec3& query);

// Optional contact-stability filter: rejects samples whose 1-ring face
// normals deviate from the sample's own by more than the variance threshold.
RegionPredicate make_curvature_predicate(const TriMesh& mesh, double max_normal_variance);

}  // namespace scsp
