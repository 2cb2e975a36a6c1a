#pragma once

#include <string>
#include <vector>

#include "scsp/math.hpp"

namespace scsp
{

// Triangle mesh in object frame. Face normals are unit length and outward
// for correctly wound (CCW) input.
struct TriMesh
{
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> faces;
  std::vector<Vec3> face_normals;
  std::vector<double> face_areas;
  bool watertight{false};
  int degenerate_dropped{0};

  double total_area() const;
  Vec3 face_centroid(int f) const;
  Vec3 centroid() const;  // area-weighted surface centroid
};

// Mass properties from the (assumed closed) mesh at uniform density,
// scaled so total mass equals `mass`. Inertia is about the volume centroid.
struct MassProperties
{
  double volume{0.0};
  Vec3 com{Vec3::Zero()};
  Mat3 inertia{Mat3::Zero()};  // for the requested mass, about com
};

TriMesh load_mesh(const std::string& path);
TriMesh make_box(const Vec3& full_extents);
TriMesh make_icosphere(double radius, int subdivisions);

// Recomputes normals/areas, drops degenerate faces, sets watertight flag.
void finalize_mesh(TriMesh& mesh);

MassProperties mass_properties(const TriMesh& mesh, double mass);

// Incremental convex hull over the mesh vertices (outward-wound faces).
TriMesh convex_hull(const TriMesh& mesh);

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct MeshProximity
{
  Vec3 point{Vec3::Zero()};
  int face_id{-1};
  double distance{0.0};
};

// Closest surface point to a query point (brute force over faces; meshes
// here are small).
MeshProximity closest_point_on_mesh(const TriMesh& mesh, const Vec3& p);

// Parity ray cast along +x. Only meaningful for watertight meshes.
bool mesh_contains(const TriMesh& mesh, const Vec3& p);

}  // namespace scsp
