#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "oracles.hpp"
#include "scsp/mesh.hpp"
#include "scsp/sampling.hpp"

using namespace scsp;

namespace
{

std::string write_temp(const std::string& name, const std::string& content)
{
  const std::string path = std::string("/tmp/") + name;
  std::ofstream out(path);
  out << content;
  return path;
}

const char* kCubeObj =
    "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nv 0 0 1\nv 1 0 1\nv 0 1 1\nv 1 1 1\n"
    "f 1 3 4\nf 1 4 2\nf 5 6 8\nf 5 8 7\nf 1 2 6\nf 1 6 5\n"
    "f 3 7 8\nf 3 8 4\nf 1 5 7\nf 1 7 3\nf 2 4 8\nf 2 8 6\n";

}  // namespace

TEST_CASE("load_mesh: unit cube has 12 unit normals in 6 directions")
{
  const auto path = write_temp("cube.obj", kCubeObj);
  const TriMesh mesh = load_mesh(path);
  CHECK(mesh.vertices.size() == 8);
  CHECK(mesh.faces.size() == 12);
  CHECK(mesh.watertight);
  std::set<std::array<int, 3>> directions;
  for (const auto& n : mesh.face_normals)
  {
    CHECK(std::abs(n.norm() - 1.0) < 1e-9);
    directions.insert({static_cast<int>(std::round(n.x())), static_cast<int>(std::round(n.y())),
                       static_cast<int>(std::round(n.z()))});
  }
  CHECK(directions.size() == 6);
}

TEST_CASE("load_mesh: tetrahedron normals point outward")
{
  const char* tet =
      "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
      "f 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";
  const TriMesh mesh = load_mesh(write_temp("tet.obj", tet));
  CHECK(mesh.faces.size() == 4);
  Vec3 centroid = Vec3::Zero();
  for (const auto& v : mesh.vertices) centroid += v;
  centroid /= 4.0;
  for (size_t f = 0; f < mesh.faces.size(); ++f)
  {
    CHECK(mesh.face_normals[f].dot(centroid - mesh.face_centroid(static_cast<int>(f))) < 0.0);
  }
}

TEST_CASE("load_mesh: quad mesh is fan-triangulated to the reference")
{
  const char* quads =
      "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
      "f 1 2 3 4\n";
  const char* reference =
      "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
      "f 1 2 3\nf 1 3 4\n";
  const TriMesh quad_mesh = load_mesh(write_temp("quad.obj", quads));
  const TriMesh ref_mesh = load_mesh(write_temp("quad_ref.obj", reference));
  REQUIRE(quad_mesh.faces.size() == 2);  // face count doubles
  REQUIRE(ref_mesh.faces.size() == 2);
  for (size_t f = 0; f < 2; ++f)
  {
    CHECK(quad_mesh.faces[f] == ref_mesh.faces[f]);
    CHECK((quad_mesh.face_normals[f] - ref_mesh.face_normals[f]).norm() < 1e-12);
  }
}

TEST_CASE("load_mesh: degenerate faces dropped with a count")
{
  const char* degen =
      "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
      "f 1 2 3\nf 1 1 2\n";
  const TriMesh mesh = load_mesh(write_temp("degen.obj", degen));
  CHECK(mesh.faces.size() == 1);
  CHECK(mesh.degenerate_dropped == 1);
}

TEST_CASE("load_mesh: parse failures raise format errors")
{
  CHECK_THROWS(load_mesh("/tmp/does_not_exist_e4a1.obj"));
  CHECK_THROWS(load_mesh(write_temp("bad.obj", "v 0 0\nf 1 2 3\n")));
  CHECK_THROWS(load_mesh(write_temp("empty.obj", "# nothing\n")));
}

TEST_CASE("farthest_point_sample: base case, determinism, monotonicity")
{
  const TriMesh cube = make_box(Vec3(1.0, 1.0, 1.0));

  const auto one = farthest_point_sample(cube, 1, 0);
  REQUIRE(one.size() == 1);

  const auto a = farthest_point_sample(cube, 24, 0);
  const auto b = farthest_point_sample(cube, 24, 0);
  REQUIRE(a.size() == 24);
  for (size_t i = 0; i < a.size(); ++i)
  {
    CHECK(a[i].p == b[i].p);  // bit-exact
    CHECK(a[i].face_id == b[i].face_id);
  }

  // Min pairwise distance non-increasing in K.
  double prev = std::numeric_limits<double>::infinity();
  for (int K = 2; K <= 20; K += 3)
  {
    const auto samples = farthest_point_sample(cube, K, 0);
    double min_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < samples.size(); ++i)
    {
      for (size_t j = i + 1; j < samples.size(); ++j)
      {
        min_d = std::min(min_d, (samples[i].p - samples[j].p).norm());
      }
    }
    CHECK(min_d <= prev + 1e-12);
    prev = min_d;
  }
}

TEST_CASE("farthest_point_sample: K=2 from a cube corner lands at the far corner")
{
  const TriMesh cube = make_box(Vec3(1.0, 1.0, 1.0));
  const auto samples = farthest_point_sample(cube, 2, Vec3(-0.5, -0.5, -0.5));

  // Brute-force the same max-min over an identical pool.
  const auto pool = sample_surface_pool(cube, std::max(2000, 50 * 2), FpsOptions{}.pool_seed);
  int seed_idx = 0;
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < pool.size(); ++i)
  {
    const double d = (pool[i].p - Vec3(-0.5, -0.5, -0.5)).squaredNorm();
    if (d < best)
    {
      best = d;
      seed_idx = static_cast<int>(i);
    }
  }
  int far_idx = 0;
  double far_d = -1.0;
  for (size_t i = 0; i < pool.size(); ++i)
  {
    const double d = (pool[i].p - pool[static_cast<size_t>(seed_idx)].p).squaredNorm();
    if (d > far_d)
    {
      far_d = d;
      far_idx = static_cast<int>(i);
    }
  }
  CHECK((samples[1].p - pool[static_cast<size_t>(far_idx)].p).norm() < 1e-12);
  // Within pool resolution of the true opposite corner.
  CHECK((samples[1].p - Vec3(0.5, 0.5, 0.5)).norm() < 0.12);
}

TEST_CASE("farthest_point_sample: sphere uniformity ratio")
{
  const TriMesh sphere = make_icosphere(0.5, 3);
  const auto samples = farthest_point_sample(sphere, 70, 0);
  double min_pair = std::numeric_limits<double>::infinity();
  double max_nn = 0.0;
  for (size_t i = 0; i < samples.size(); ++i)
  {
    double nn = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < samples.size(); ++j)
    {
      if (i == j) continue;
      const double d = (samples[i].p - samples[j].p).norm();
      nn = std::min(nn, d);
      min_pair = std::min(min_pair, d);
    }
    max_nn = std::max(max_nn, nn);
  }
  CHECK(min_pair >= 0.5 * max_nn);
}

TEST_CASE("farthest_point_sample: frame orthonormality and error paths")
{
  const TriMesh cube = make_box(Vec3(0.08, 0.08, 0.08));
  const auto samples = farthest_point_sample(cube, 40, 0);
  for (const auto& s : samples)
  {
    CHECK(std::abs(s.n.norm() - 1.0) < 1e-9);
    CHECK(std::abs(s.t1.norm() - 1.0) < 1e-9);
    CHECK(std::abs(s.t2.norm() - 1.0) < 1e-9);
    CHECK(std::abs(s.n.dot(s.t1)) < 1e-9);
    CHECK(std::abs(s.n.dot(s.t2)) < 1e-9);
    CHECK(std::abs(s.t1.dot(s.t2)) < 1e-9);
    CHECK((s.t2 - s.n.cross(s.t1)).norm() < 1e-9);
  }
  CHECK_THROWS(farthest_point_sample(cube, 0, 0));
  FpsOptions tiny;
  tiny.pool_min = 8;
  tiny.pool_multiplier = 0;  // pool smaller than K
  CHECK_THROWS(farthest_point_sample(cube, 9, 0, tiny));
}

TEST_CASE("build_frame: parallel-axis fallback")
{
  SurfaceSample s;
  s.n = Vec3::UnitZ();  // parallel to the default fixed axis
  build_frame(s);
  CHECK(std::abs(s.n.dot(s.t1)) < 1e-12);
  CHECK((s.t2 - s.n.cross(s.t1)).norm() < 1e-12);
}

TEST_CASE("apply_valid_mask: trivial, soccer-style, half-space, empty")
{
  const TriMesh sphere = make_icosphere(0.05, 3);
  const auto samples = farthest_point_sample(sphere, 60, 0);

  const auto all = apply_valid_mask(samples, [](const SurfaceSample&) { return true; });
  CHECK(all.valid_count() == 60);

  // Sphere of radius 0.05 resting on the ground: world z = local z + 0.05.
  // Points with world z < 0.02 are masked out.
  const double rest_z = 0.05;
  const auto masked = apply_valid_mask(samples, [&](const SurfaceSample& s) {
    return s.p.z() + rest_z >= 0.02;
  });
  int invalid = 0;
  for (size_t i = 0; i < masked.samples.size(); ++i)
  {
    const double world_z = masked.samples[i].p.z() + rest_z;
    if (!masked.valid[i])
    {
      ++invalid;
      CHECK(world_z < 0.02);
    }
    else
    {
      CHECK(world_z >= 0.02);
    }
  }
  CHECK(invalid > 0);
  CHECK(invalid < 30);  // bottom cap only

  const auto half = apply_valid_mask(samples, [](const SurfaceSample& s) { return s.p.x() > 0.0; });
  int direct = 0;
  for (const auto& s : samples) direct += s.p.x() > 0.0 ? 1 : 0;
  CHECK(half.valid_count() == direct);

  CHECK_THROWS(apply_valid_mask(samples, [](const SurfaceSample&) { return false; }));
}

TEST_CASE("nearest_valid: exact nearest neighbor against linear scan")
{
  const TriMesh cube = make_box(Vec3(0.08, 0.08, 0.08));
  const auto samples = farthest_point_sample(cube, 50, 0);
  const auto set = apply_valid_mask(samples, [](const SurfaceSample& s) { return s.p.y() > -0.03; });

  // A sample's own position maps to itself.
  for (size_t i = 0; i < set.samples.size(); ++i)
  {
    if (!set.valid[i]) continue;
    CHECK(nearest_valid_index(set, set.samples[i].p) == static_cast<int>(i));
    break;
  }

  // Far along +x lands on the +x face.
  const auto& hit = nearest_valid(set, Vec3(1.0, 0.0, 0.0));
  CHECK(hit.p.x() == doctest::Approx(0.04).epsilon(0.01));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(-0.2, 0.2);
  for (int i = 0; i < 1000; ++i)
  {
    const Vec3 q(uni(rng), uni(rng), uni(rng));
    CHECK(nearest_valid_index(set, q) == oracle::nearest_linear(set, q));
  }

  CandidateSet empty;
  CHECK_THROWS(nearest_valid_index(empty, Vec3::Zero()));
}

TEST_CASE("nearest_valid: duplicate points break ties to the lowest index")
{
  std::vector<SurfaceSample> samples(3);
  samples[0].p = Vec3(1.0, 0.0, 0.0);
  samples[1].p = Vec3(0.5, 0.5, 0.0);
  samples[2].p = Vec3(1.0, 0.0, 0.0);  // duplicate of 0
  for (auto& s : samples) build_frame(s);
  const auto set = apply_valid_mask(samples, [](const SurfaceSample&) { return true; });
  CHECK(nearest_valid_index(set, Vec3(1.0, 0.0, 0.0)) == 0);
  CHECK(nearest_valid_index(set, Vec3(1.1, 0.0, 0.0)) == 0);
}

TEST_CASE("convex hull of a box is the box")
{
  const TriMesh cube = make_box(Vec3(0.1, 0.06, 0.04));
  const TriMesh hull = convex_hull(cube);
  CHECK(hull.watertight);
  CHECK(hull.vertices.size() == 8);
  const double vol_cube = mass_properties(cube, 1.0).volume;
  const double vol_hull = mass_properties(hull, 1.0).volume;
  CHECK(vol_hull == doctest::Approx(vol_cube).epsilon(1e-9));
}

TEST_CASE("mass properties of a box")
{
  const Vec3 ext(0.08, 0.08, 0.08);
  const TriMesh cube = make_box(ext);
  const MassProperties mp = mass_properties(cube, 0.1);
  CHECK(mp.volume == doctest::Approx(0.08 * 0.08 * 0.08).epsilon(1e-9));
  CHECK(mp.com.norm() < 1e-12);
  const double expected = 0.1 * (ext.x() * ext.x() + ext.y() * ext.y()) / 12.0;
  CHECK(mp.inertia(2, 2) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("candidate set exports JSON and curvature predicate keeps flats")
{
  const TriMesh cube = make_box(Vec3(0.08, 0.08, 0.08));
  const auto samples = farthest_point_sample(cube, 12, 0);
  const auto set = apply_valid_mask(samples, make_curvature_predicate(cube, 2.1));
  CHECK(set.valid_count() == 12);  // generous threshold keeps everything
  const std::string json = set.to_json();
  CHECK(json.find("face_id") != std::string::npos);
}

TEST_CASE("mesh_contains: interior and exterior points")
{
  const TriMesh cube = make_box(Vec3(0.1, 0.1, 0.1));
  CHECK(mesh_contains(cube, Vec3(0.0, 0.0, 0.0)));
  CHECK(mesh_contains(cube, Vec3(0.04, 0.04, 0.04)));
  CHECK(!mesh_contains(cube, Vec3(0.06, 0.0, 0.0)));
}
