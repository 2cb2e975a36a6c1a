#include "scsp/mesh.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace scsp
{

double TriMesh::total_area() const
{
  double a = 0.0;
  for (double fa : face_areas) a += fa;
  return a;
}

Vec3 TriMesh::face_centroid(int f) const
{
  const auto& tri = faces[static_cast<size_t>(f)];
  return (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
}

Vec3 TriMesh::centroid() const
{
  Vec3 c = Vec3::Zero();
  double total = 0.0;
  for (size_t f = 0; f < faces.size(); ++f)
  {
    c += face_areas[f] * face_centroid(static_cast<int>(f));
    total += face_areas[f];
  }
  return total > 0.0 ? Vec3(c / total) : Vec3::Zero();
}

void finalize_mesh(TriMesh& mesh)
{
  std::vector<Eigen::Vector3i> kept;
  kept.reserve(mesh.faces.size());
  mesh.face_normals.clear();
  mesh.face_areas.clear();
  mesh.degenerate_dropped = 0;

  const int nv = static_cast<int>(mesh.vertices.size());
  for (const auto& f : mesh.faces)
  {
    if (f[0] < 0 || f[1] < 0 || f[2] < 0 || f[0] >= nv || f[1] >= nv || f[2] >= nv)
    {
      throw std::runtime_error("mesh face index out of range");
    }
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    const Vec3 n = (b - a).cross(c - a);
    const double area2 = n.norm();
    if (area2 < 1e-14)
    {
      ++mesh.degenerate_dropped;
      continue;
    }
    kept.push_back(f);
    mesh.face_normals.push_back(n / area2);
    mesh.face_areas.push_back(0.5 * area2);
  }
  mesh.faces = std::move(kept);

  // Watertight iff every undirected edge is shared by exactly two faces.
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& f : mesh.faces)
  {
    for (int k = 0; k < 3; ++k)
    {
      int u = f[k], v = f[(k + 1) % 3];
      if (u > v) std::swap(u, v);
      edge_count[{u, v}]++;
    }
  }
  mesh.watertight = !mesh.faces.empty();
  for (const auto& [edge, count] : edge_count)
  {
    if (count != 2)
    {
      mesh.watertight = false;
      break;
    }
  }
}

TriMesh load_mesh(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mesh file: " + path);

  TriMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line))
  {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v")
    {
      double x, y, z;
      if (!(ss >> x >> y >> z))
      {
        throw std::runtime_error("OBJ parse error (vertex) at line " + std::to_string(line_no));
      }
      mesh.vertices.emplace_back(x, y, z);
    }
    else if (tag == "f")
    {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok)
      {
        // Accept v, v/vt, v//vn, v/vt/vn forms; only the vertex index is used.
        const size_t slash = tok.find('/');
        const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        int i = 0;
        try
        {
          i = std::stoi(head);
        }
        catch (const std::exception&)
        {
          throw std::runtime_error("OBJ parse error (face) at line " + std::to_string(line_no));
        }
        if (i < 0) i = static_cast<int>(mesh.vertices.size()) + i + 1;
        idx.push_back(i - 1);
      }
      if (idx.size() < 3)
      {
        throw std::runtime_error("OBJ face with <3 vertices at line " + std::to_string(line_no));
      }
      // Fan triangulation for polygons.
      for (size_t k = 1; k + 1 < idx.size(); ++k)
      {
        mesh.faces.emplace_back(idx[0], idx[k], idx[k + 1]);
      }
    }
  }
  if (mesh.vertices.empty() || mesh.faces.empty())
  {
    throw std::runtime_error("OBJ has no usable geometry: " + path);
  }
  finalize_mesh(mesh);
  return mesh;
}

TriMesh make_box(const Vec3& full_extents)
{
  const Vec3 h = 0.5 * full_extents;
  TriMesh m;
  for (int i = 0; i < 8; ++i)
  {
    m.vertices.emplace_back((i & 1) ? h.x() : -h.x(),
                            (i & 2) ? h.y() : -h.y(),
                            (i & 4) ? h.z() : -h.z());
  }
  const int quads[6][4] = {
      {0, 2, 3, 1},  // -z
      {4, 5, 7, 6},  // +z
      {0, 1, 5, 4},  // -y
      {2, 6, 7, 3},  // +y
      {0, 4, 6, 2},  // -x
      {1, 3, 7, 5},  // +x
  };
  for (const auto& q : quads)
  {
    m.faces.emplace_back(q[0], q[1], q[2]);
    m.faces.emplace_back(q[0], q[2], q[3]);
  }
  finalize_mesh(m);
  return m;
}

TriMesh make_icosphere(double radius, int subdivisions)
{
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
      {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
      {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Eigen::Vector3i> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
      {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
      {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};

  for (int s = 0; s < subdivisions; ++s)
  {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back(0.5 * (verts[a] + verts[b]));
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint[key] = idx;
      return idx;
    };
    std::vector<Eigen::Vector3i> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces)
    {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  TriMesh m;
  m.vertices.reserve(verts.size());
  for (auto& v : verts) m.vertices.push_back(radius * v.normalized());
  m.faces = std::move(faces);
  finalize_mesh(m);
  return m;
}

MassProperties mass_properties(const TriMesh& mesh, double mass)
{
  // Signed tetrahedron sums against the origin.
  double vol = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 covar = Mat3::Zero();  // second-moment integral
  const Mat3 canonical = (Mat3() << 1.0 / 60, 1.0 / 120, 1.0 / 120,
                                    1.0 / 120, 1.0 / 60, 1.0 / 120,
                                    1.0 / 120, 1.0 / 120, 1.0 / 60).finished();
  for (const auto& f : mesh.faces)
  {
    Mat3 a;
    a.col(0) = mesh.vertices[f[0]];
    a.col(1) = mesh.vertices[f[1]];
    a.col(2) = mesh.vertices[f[2]];
    const double det = a.determinant();
    vol += det / 6.0;
    com += det / 24.0 * (a.col(0) + a.col(1) + a.col(2));
    covar += det * a * canonical * a.transpose();
  }
  MassProperties mp;
  mp.volume = vol;
  if (std::abs(vol) < 1e-12)
  {
    mp.inertia = Mat3::Identity() * (mass * 1e-4);
    return mp;
  }
  mp.com = com / vol;
  const double density = mass / vol;
  covar *= density;
  // Shift to com, convert covariance to inertia tensor.
  covar -= mass * mp.com * mp.com.transpose();
  mp.inertia = Mat3::Identity() * covar.trace() - covar;
  return mp;
}

TriMesh convex_hull(const TriMesh& mesh)
{
  const auto& pts = mesh.vertices;
  const int n = static_cast<int>(pts.size());
  if (n < 4) throw std::runtime_error("convex hull needs >= 4 vertices");

  // Initial tetrahedron from extreme points.
  int i0 = 0, i1 = 0;
  for (int i = 1; i < n; ++i)
  {
    if (pts[i].x() < pts[i0].x()) i0 = i;
    if (pts[i].x() > pts[i1].x()) i1 = i;
  }
  if (i0 == i1) i1 = (i0 + 1) % n;
  int i2 = -1;
  double best = 1e-18;
  for (int i = 0; i < n; ++i)
  {
    const double a = (pts[i1] - pts[i0]).cross(pts[i] - pts[i0]).squaredNorm();
    if (a > best)
    {
      best = a;
      i2 = i;
    }
  }
  if (i2 < 0) throw std::runtime_error("convex hull: degenerate (collinear) vertices");
  int i3 = -1;
  best = 1e-12;
  const Vec3 n012 = (pts[i1] - pts[i0]).cross(pts[i2] - pts[i0]).normalized();
  for (int i = 0; i < n; ++i)
  {
    const double d = std::abs(n012.dot(pts[i] - pts[i0]));
    if (d > best)
    {
      best = d;
      i3 = i;
    }
  }
  if (i3 < 0) throw std::runtime_error("convex hull: degenerate (coplanar) vertices");

  struct Face
  {
    int a, b, c;
    Vec3 normal;
    double offset;
    bool alive{true};
  };
  std::vector<Face> faces;
  const Vec3 inner = 0.25 * (pts[i0] + pts[i1] + pts[i2] + pts[i3]);
  auto add_face = [&](int a, int b, int c) {
    Face f{a, b, c, Vec3::Zero(), 0.0, true};
    f.normal = (pts[b] - pts[a]).cross(pts[c] - pts[a]).normalized();
    if (f.normal.dot(inner - pts[a]) > 0.0)
    {
      std::swap(f.b, f.c);
      f.normal = -f.normal;
    }
    f.offset = f.normal.dot(pts[f.a]);
    faces.push_back(f);
  };
  add_face(i0, i1, i2);
  add_face(i0, i1, i3);
  add_face(i0, i2, i3);
  add_face(i1, i2, i3);

  const double eps = 1e-10;
  for (int p = 0; p < n; ++p)
  {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    // Collect faces visible from pts[p]; their boundary is the horizon.
    std::map<std::pair<int, int>, int> edge_use;
    bool any_visible = false;
    for (auto& f : faces)
    {
      if (!f.alive) continue;
      if (f.normal.dot(pts[p]) - f.offset > eps)
      {
        any_visible = true;
        f.alive = false;
        const int vs[3] = {f.a, f.b, f.c};
        for (int k = 0; k < 3; ++k)
        {
          edge_use[{vs[k], vs[(k + 1) % 3]}]++;
        }
      }
    }
    if (!any_visible) continue;
    for (const auto& [edge, count] : edge_use)
    {
      // Horizon edges appear once among visible faces (reverse not present).
      if (edge_use.count({edge.second, edge.first}) > 0) continue;
      Face f{edge.first, edge.second, p, Vec3::Zero(), 0.0, true};
      f.normal = (pts[f.b] - pts[f.a]).cross(pts[f.c] - pts[f.a]);
      const double len = f.normal.norm();
      if (len < 1e-16) continue;
      f.normal /= len;
      f.offset = f.normal.dot(pts[f.a]);
      faces.push_back(f);
    }
  }

  // Compact vertices used by live faces.
  std::map<int, int> remap;
  TriMesh hull;
  for (const auto& f : faces)
  {
    if (!f.alive) continue;
    int idx[3];
    const int vs[3] = {f.a, f.b, f.c};
    for (int k = 0; k < 3; ++k)
    {
      auto it = remap.find(vs[k]);
      if (it == remap.end())
      {
        remap[vs[k]] = static_cast<int>(hull.vertices.size());
        hull.vertices.push_back(pts[vs[k]]);
        idx[k] = remap[vs[k]];
      }
      else
      {
        idx[k] = it->second;
      }
    }
    hull.faces.emplace_back(idx[0], idx[1], idx[2]);
  }
  finalize_mesh(hull);
  return hull;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
  // Ericson, Real-Time Collision Detection, 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
  {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + w * (c - b);
  }

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

MeshProximity closest_point_on_mesh(const TriMesh& mesh, const Vec3& p)
{
  MeshProximity best;
  best.distance = std::numeric_limits<double>::infinity();
  for (size_t f = 0; f < mesh.faces.size(); ++f)
  {
    const auto& tri = mesh.faces[f];
    const Vec3 cp = closest_point_on_triangle(p, mesh.vertices[tri[0]],
                                              mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    const double d = (cp - p).norm();
    if (d < best.distance)
    {
      best.distance = d;
      best.point = cp;
      best.face_id = static_cast<int>(f);
    }
  }
  return best;
}

bool mesh_contains(const TriMesh& mesh, const Vec3& p)
{
  if (!mesh.watertight) return false;
  // Parity ray cast along +x with a slightly irrational direction to dodge
  // edge-on hits.
  const Vec3 dir = Vec3(1.0, 1.3e-4, 2.7e-4).normalized();
  int hits = 0;
  for (const auto& f : mesh.faces)
  {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3 e1 = mesh.vertices[f[1]] - a;
    const Vec3 e2 = mesh.vertices[f[2]] - a;
    const Vec3 h = dir.cross(e2);
    const double det = e1.dot(h);
    if (std::abs(det) < 1e-14) continue;
    const double inv = 1.0 / det;
    const Vec3 s = p - a;
    const double u = inv * s.dot(h);
    if (u < 0.0 || u > 1.0) continue;
    const Vec3 q = s.cross(e1);
    const double v = inv * dir.dot(q);
    if (v < 0.0 || u + v > 1.0) continue;
    const double t = inv * e2.dot(q);
    if (t > 1e-12) ++hits;
  }
  return (hits % 2) == 1;
}

}  // namespace scsp
