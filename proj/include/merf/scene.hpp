#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "merf/contraction.hpp"
#include "merf/errors.hpp"
#include "merf/parallel.hpp"
#include "merf/render.hpp"

namespace merf {

enum class ShapeKind { kSphere, kBox, kPlane };

struct Texture {
  enum class Kind { kNone, kChecker } kind = Kind::kNone;
  double scale = 0.25;  // world size of one checker square in the xy plane
  Rgb albedo2{};        // colour of the odd squares
};

// Homogeneous participating primitive. Density is per world unit.
struct Primitive {
  ShapeKind shape = ShapeKind::kSphere;
  Point3 center{};    // sphere
  double radius = 0.5;
  Point3 box_min{};   // box
  Point3 box_max{};
  Point3 point{};     // plane slab: |n . (x - point)| <= thickness / 2
  Vec3 normal{0, 0, 1};
  double thickness = 0.1;

  double density = 10.0;
  Rgb albedo{0.5, 0.5, 0.5};
  Texture texture;
  // colour += tint * dot(view direction, tint_axis), then clamped
  Rgb tint{};
  Vec3 tint_axis{0, 0, 1};

  std::optional<std::array<double, 2>> interval(const Ray& ray) const;
  Rgb color(const Point3& x, const Vec3& d) const;
  void validate() const;
};

inline std::optional<std::array<double, 2>> Primitive::interval(const Ray& ray) const {
  const Point3& o = ray.origin;
  const Vec3& d = ray.direction;
  double t0 = 0.0;
  double t1 = 0.0;
  switch (shape) {
    case ShapeKind::kSphere: {
      const Vec3 oc = o - center;
      const double b = dot(oc, d);
      const double c = dot(oc, oc) - radius * radius;
      const double disc = b * b - c;
      if (disc <= 0.0) return std::nullopt;
      const double s = std::sqrt(disc);
      t0 = -b - s;
      t1 = -b + s;
      break;
    }
    case ShapeKind::kBox: {
      const auto hit = ray_aabb(o, d, box_min, box_max);
      if (!hit) return std::nullopt;
      t0 = (*hit)[0];
      t1 = (*hit)[1];
      break;
    }
    case ShapeKind::kPlane: {
      const Vec3 n = normalize(normal);
      const double h = 0.5 * thickness;
      const double dist = dot(n, o - point);
      const double dn = dot(n, d);
      if (std::abs(dn) < 1e-15) {
        if (std::abs(dist) > h) return std::nullopt;
        t0 = ray.t_near;
        t1 = ray.t_far;
      } else {
        const double a = (-h - dist) / dn;
        const double b = (h - dist) / dn;
        t0 = std::min(a, b);
        t1 = std::max(a, b);
      }
      break;
    }
  }
  t0 = std::max(t0, ray.t_near);
  t1 = std::min(t1, ray.t_far);
  if (!(t1 > t0)) return std::nullopt;
  return std::array<double, 2>{t0, t1};
}

inline Rgb Primitive::color(const Point3& x, const Vec3& d) const {
  Rgb c = albedo;
  if (texture.kind == Texture::Kind::kChecker) {
    const long parity = static_cast<long>(std::floor(x.x / texture.scale)) +
                        static_cast<long>(std::floor(x.y / texture.scale));
    if (parity & 1) c = texture.albedo2;
  }
  const double s = dot(d, tint_axis);
  for (int k = 0; k < 3; ++k) c[k] = std::clamp(c[k] + tint[k] * s, 0.0, 1.0);
  return c;
}

inline void Primitive::validate() const {
  const auto fail = [](const std::string& m) { throw ValidationError("primitive: " + m); };
  if (!(density >= 0.0) || !std::isfinite(density)) fail("density must be finite and >= 0");
  for (int k = 0; k < 3; ++k) {
    if (!(albedo[k] >= 0.0 && albedo[k] <= 1.0)) fail("albedo must lie in [0, 1]");
    if (!(texture.albedo2[k] >= 0.0 && texture.albedo2[k] <= 1.0)) fail("albedo2 must lie in [0, 1]");
    if (!std::isfinite(tint[k])) fail("tint must be finite");
  }
  switch (shape) {
    case ShapeKind::kSphere:
      if (!(radius > 0.0) || !is_finite(center)) fail("sphere needs a finite centre and radius > 0");
      break;
    case ShapeKind::kBox:
      for (int a = 0; a < 3; ++a) {
        if (!(box_min[a] < box_max[a])) fail("box needs min < max on every axis");
      }
      break;
    case ShapeKind::kPlane:
      if (!(norm(normal) > 0.0) || !(thickness > 0.0)) fail("plane needs a normal and thickness > 0");
      break;
  }
  if (texture.kind == Texture::Kind::kChecker && !(texture.scale > 0.0)) {
    fail("checker scale must be positive");
  }
}

struct OrbitOptions {
  int count = 20;
  int width = 128;
  int height = 128;
  double radius = 2.5;
  double fov_degrees = 45.0;
  double min_elevation_degrees = 15.0;
  double max_elevation_degrees = 50.0;
  Point3 target{0.0, 0.0, -0.2};
  double far = 1e3;
};

struct SyntheticScene {
  std::vector<Primitive> primitives;
  OrbitOptions views;

  void validate() const {
    for (const auto& p : primitives) p.validate();
    if (views.count < 1 || views.width < 1 || views.height < 1) {
      throw ValidationError("scene views need count, width and height >= 1");
    }
    if (!(views.radius > 0.0) || !(views.fov_degrees > 0.0 && views.fov_degrees < 180.0)) {
      throw ValidationError("scene views need radius > 0 and 0 < fov < 180");
    }
  }
};

// Three spheres on a checkered ground slab, z up.
inline SyntheticScene toy_scene() {
  SyntheticScene s;
  Primitive ground;
  ground.shape = ShapeKind::kBox;
  ground.box_min = {-1.0, -1.0, -0.55};
  ground.box_max = {1.0, 1.0, -0.45};
  ground.density = 40.0;
  ground.albedo = {0.85, 0.8, 0.7};
  ground.texture = {Texture::Kind::kChecker, 0.25, {0.3, 0.3, 0.35}};
  s.primitives.push_back(ground);

  const std::array<Point3, 3> centers = {{{0.35, 0.0, -0.2}, {-0.3, 0.35, -0.2}, {-0.25, -0.35, -0.2}}};
  const std::array<Rgb, 3> colors = {{{0.9, 0.15, 0.1}, {0.15, 0.8, 0.2}, {0.15, 0.3, 0.9}}};
  for (int i = 0; i < 3; ++i) {
    Primitive p;
    p.shape = ShapeKind::kSphere;
    p.center = centers[i];
    p.radius = 0.25;
    p.density = 40.0;
    p.albedo = colors[i];
    s.primitives.push_back(p);
  }
  s.primitives[1].tint = {0.15, 0.15, 0.15};
  s.primitives[1].tint_axis = normalize(Vec3{1.0, 0.0, 1.0});
  return s;
}

// Camera at eye looking at target with world +z up (OpenCV axes).
inline Camera look_at_camera(const Point3& eye, const Point3& target, int width, int height,
                             double fov_degrees, double far = 1e3) {
  const Vec3 f = normalize(target - eye);
  Vec3 up{0.0, 0.0, 1.0};
  if (norm(cross(f, up)) < 1e-9) up = {0.0, 1.0, 0.0};
  const Vec3 right = normalize(cross(f, up));
  const Vec3 down = cross(f, right);
  Camera c;
  c.width = width;
  c.height = height;
  c.fx = c.fy = 0.5 * width / std::tan(0.5 * fov_degrees * std::numbers::pi / 180.0);
  c.cx = 0.5 * width;
  c.cy = 0.5 * height;
  c.camera_to_world = {right.x, down.x, f.x, eye.x, right.y, down.y, f.y, eye.y,
                       right.z, down.z, f.z, eye.z};
  c.near = 0.0;
  c.far = far;
  return c;
}

// Golden-angle orbit over an elevation band.
inline std::vector<Camera> orbit_cameras(const OrbitOptions& o) {
  std::vector<Camera> cams;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < o.count; ++i) {
    const double u = o.count == 1 ? 0.5 : static_cast<double>(i) / (o.count - 1);
    const double elev = (o.min_elevation_degrees +
                         u * (o.max_elevation_degrees - o.min_elevation_degrees)) *
                        std::numbers::pi / 180.0;
    const double az = i * golden;
    const Point3 eye = o.target + o.radius * Vec3{std::cos(elev) * std::cos(az),
                                                  std::cos(elev) * std::sin(az), std::sin(elev)};
    cams.push_back(look_at_camera(eye, o.target, o.width, o.height, o.fov_degrees, o.far));
  }
  return cams;
}

struct GroundTruthOptions {
  int texture_substeps = 64;  // quadrature steps per constant-colour piece of a textured interval
};

struct GroundTruthSample {
  Rgb color{};
  double opacity = 0.0;
};

// Volume rendering of the analytic field against black. Density and colour are
// piecewise constant between primitive boundaries, so those intervals are
// integrated in closed form; textured intervals are subdivided.
inline GroundTruthSample render_ground_truth(const SyntheticScene& scene, const Ray& ray,
                                             const GroundTruthOptions& opt = {}) {
  struct Span {
    const Primitive* prim;
    double t0, t1;
  };
  std::vector<Span> spans;
  std::vector<double> cuts;
  for (const auto& p : scene.primitives) {
    if (p.density <= 0.0) continue;
    if (const auto iv = p.interval(ray)) {
      spans.push_back({&p, (*iv)[0], (*iv)[1]});
      cuts.push_back((*iv)[0]);
      cuts.push_back((*iv)[1]);
    }
  }
  GroundTruthSample out;
  if (spans.empty()) return out;
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double transmittance = 1.0;
  std::vector<const Primitive*> active;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i];
    const double b = cuts[i + 1];
    const double mid = 0.5 * (a + b);
    active.clear();
    bool textured = false;
    double sigma = 0.0;
    for (const auto& s : spans) {
      if (s.t0 <= mid && mid < s.t1) {
        active.push_back(s.prim);
        sigma += s.prim->density;
        textured |= s.prim->texture.kind != Texture::Kind::kNone;
      }
    }
    if (sigma <= 0.0) continue;
    // Checker colour is constant between the lines x = k s and y = k s, so
    // textured intervals are cut there first and then subdivided.
    std::vector<double> pieces = {a, b};
    if (textured) {
      for (const Primitive* p : active) {
        if (p->texture.kind == Texture::Kind::kNone) continue;
        for (int axis = 0; axis < 2; ++axis) {
          const double o = ray.origin[axis];
          const double d = ray.direction[axis];
          if (d == 0.0) continue;
          const double sc = p->texture.scale;
          const double lo = std::min(o + a * d, o + b * d) / sc;
          const double hi = std::max(o + a * d, o + b * d) / sc;
          for (double k = std::ceil(lo); k <= hi; k += 1.0) {
            const double t = (k * sc - o) / d;
            if (t > a && t < b) pieces.push_back(t);
          }
        }
      }
      std::sort(pieces.begin(), pieces.end());
    }
    const int n = textured ? std::max(1, opt.texture_substeps) : 1;
    for (std::size_t j = 0; j + 1 < pieces.size(); ++j) {
      const double h = (pieces[j + 1] - pieces[j]) / n;
      if (!(h > 0.0)) continue;
      for (int k = 0; k < n; ++k) {
        const Point3 x = ray.at(pieces[j] + (k + 0.5) * h);
        Rgb c{};
        for (const Primitive* p : active) {
          const Rgb pc = p->color(x, ray.direction);
          for (int ch = 0; ch < 3; ++ch) c[ch] += p->density * pc[ch];
        }
        const double alpha = 1.0 - std::exp(-sigma * h);
        const double w = transmittance * alpha;
        for (int ch = 0; ch < 3; ++ch) out.color[ch] += w * c[ch] / sigma;
        transmittance *= 1.0 - alpha;
      }
    }
  }
  out.opacity = 1.0 - transmittance;
  return out;
}

inline FloatImage render_ground_truth(const SyntheticScene& scene, const Camera& camera,
                                      const GroundTruthOptions& opt = {}, int threads = 1) {
  camera.validate();
  FloatImage img(camera.width, camera.height);
  parallel_for(static_cast<std::size_t>(camera.height), threads, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < camera.width; ++x) {
      const GroundTruthSample s = render_ground_truth(scene, camera.pixel_ray(x, y), opt);
      const std::size_t i = static_cast<std::size_t>(y) * camera.width + x;
      for (int k = 0; k < 3; ++k) img.rgb[i * 3 + k] = s.color[k];
      img.alpha[i] = s.opacity;
    }
  });
  return img;
}

struct TrainingView {
  Camera camera;
  FloatImage image;
};

inline std::vector<TrainingView> generate_views(const SyntheticScene& scene,
                                                const std::vector<Camera>& cameras,
                                                const GroundTruthOptions& opt = {},
                                                int threads = 1) {
  std::vector<TrainingView> views;
  for (const auto& c : cameras) views.push_back({c, render_ground_truth(scene, c, opt, threads)});
  return views;
}

inline std::vector<TrainingView> generate_views(const SyntheticScene& scene,
                                                const GroundTruthOptions& opt = {},
                                                int threads = 1) {
  scene.validate();
  return generate_views(scene, orbit_cameras(scene.views), opt, threads);
}

// ---------------------------------------------------------------------------
// JSON scene files (schema in README).

namespace detail {

inline Vec3 json_vec3(const nlohmann::json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw ValidationError(std::string("'") + key + "' must have 3 components");
  return {v[0], v[1], v[2]};
}

inline Rgb json_rgb(const nlohmann::json& j, const char* key) {
  const Vec3 v = json_vec3(j, key);
  return {v.x, v.y, v.z};
}

}  // namespace detail

inline SyntheticScene parse_scene(const nlohmann::json& j) {
  static const std::vector<std::string> kPrimitiveKeys = {
      "shape", "center", "radius", "min", "max", "point", "normal", "thickness",
      "density", "albedo", "texture", "tint", "tint_axis"};
  static const std::vector<std::string> kViewKeys = {
      "count", "width", "height", "radius", "fov_degrees", "min_elevation_degrees",
      "max_elevation_degrees", "target", "far"};
  const auto check_keys = [](const nlohmann::json& obj, const std::vector<std::string>& allowed,
                             const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + " must be an object");
    for (const auto& [k, v] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
        throw ValidationError("unknown key '" + k + "' in " + where);
      }
    }
  };
  SyntheticScene scene;
  try {
    check_keys(j, {"primitives", "views"}, "scene");
    int index = 0;
    for (const auto& pj : j.at("primitives")) {
      const std::string where = "primitive " + std::to_string(index++);
      check_keys(pj, kPrimitiveKeys, where);
      Primitive p;
      const std::string shape = pj.at("shape").get<std::string>();
      if (shape == "sphere") {
        p.shape = ShapeKind::kSphere;
        p.center = detail::json_vec3(pj, "center");
        p.radius = pj.at("radius").get<double>();
      } else if (shape == "box") {
        p.shape = ShapeKind::kBox;
        p.box_min = detail::json_vec3(pj, "min");
        p.box_max = detail::json_vec3(pj, "max");
      } else if (shape == "plane") {
        p.shape = ShapeKind::kPlane;
        p.point = detail::json_vec3(pj, "point");
        p.normal = detail::json_vec3(pj, "normal");
        p.thickness = pj.value("thickness", 0.1);
      } else {
        throw ValidationError(where + ": unknown shape '" + shape + "'");
      }
      p.density = pj.value("density", p.density);
      if (pj.contains("albedo")) p.albedo = detail::json_rgb(pj, "albedo");
      if (pj.contains("tint")) p.tint = detail::json_rgb(pj, "tint");
      if (pj.contains("tint_axis")) {
        // Leave unit axes untouched so that write/read is exact.
        const Vec3 axis = detail::json_vec3(pj, "tint_axis");
        p.tint_axis = std::abs(norm(axis) - 1.0) < 1e-12 ? axis : normalize(axis);
      }
      if (pj.contains("texture")) {
        const auto& tj = pj.at("texture");
        check_keys(tj, {"type", "scale", "albedo2"}, where + " texture");
        if (tj.at("type").get<std::string>() != "checker") {
          throw ValidationError(where + ": unknown texture type");
        }
        p.texture.kind = Texture::Kind::kChecker;
        p.texture.scale = tj.value("scale", p.texture.scale);
        p.texture.albedo2 = detail::json_rgb(tj, "albedo2");
      }
      try {
        p.validate();
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
      }
      scene.primitives.push_back(p);
    }
    if (j.contains("views")) {
      const auto& vj = j.at("views");
      check_keys(vj, kViewKeys, "views");
      OrbitOptions& o = scene.views;
      o.count = vj.value("count", o.count);
      o.width = vj.value("width", o.width);
      o.height = vj.value("height", o.height);
      o.radius = vj.value("radius", o.radius);
      o.fov_degrees = vj.value("fov_degrees", o.fov_degrees);
      o.min_elevation_degrees = vj.value("min_elevation_degrees", o.min_elevation_degrees);
      o.max_elevation_degrees = vj.value("max_elevation_degrees", o.max_elevation_degrees);
      if (vj.contains("target")) o.target = detail::json_vec3(vj, "target");
      o.far = vj.value("far", o.far);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scene: ") + e.what());
  }
  scene.validate();
  return scene;
}

inline nlohmann::json scene_to_json(const SyntheticScene& s) {
  auto v3 = [](const Vec3& v) { return std::vector<double>{v.x, v.y, v.z}; };
  auto rgb = [](const Rgb& c) { return std::vector<double>{c[0], c[1], c[2]}; };
  nlohmann::json prims = nlohmann::json::array();
  for (const auto& p : s.primitives) {
    nlohmann::json pj;
    switch (p.shape) {
      case ShapeKind::kSphere:
        pj = {{"shape", "sphere"}, {"center", v3(p.center)}, {"radius", p.radius}};
        break;
      case ShapeKind::kBox:
        pj = {{"shape", "box"}, {"min", v3(p.box_min)}, {"max", v3(p.box_max)}};
        break;
      case ShapeKind::kPlane:
        pj = {{"shape", "plane"}, {"point", v3(p.point)}, {"normal", v3(p.normal)},
              {"thickness", p.thickness}};
        break;
    }
    pj["density"] = p.density;
    pj["albedo"] = rgb(p.albedo);
    pj["tint"] = rgb(p.tint);
    pj["tint_axis"] = v3(p.tint_axis);
    if (p.texture.kind == Texture::Kind::kChecker) {
      pj["texture"] = {{"type", "checker"}, {"scale", p.texture.scale},
                       {"albedo2", rgb(p.texture.albedo2)}};
    }
    prims.push_back(pj);
  }
  const OrbitOptions& o = s.views;
  return {{"primitives", prims},
          {"views",
           {{"count", o.count}, {"width", o.width}, {"height", o.height}, {"radius", o.radius},
            {"fov_degrees", o.fov_degrees}, {"min_elevation_degrees", o.min_elevation_degrees},
            {"max_elevation_degrees", o.max_elevation_degrees}, {"target", v3(o.target)},
            {"far", o.far}}}};
}

inline SyntheticScene read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return parse_scene(j);
}

}  // namespace merf
