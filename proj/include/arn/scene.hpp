#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace arn {

using Vec3 = Eigen::Vector3d;

// Single tolerance for planarity, self-hit offsets and segment endpoints (m).
inline constexpr double kEps = 1e-6;

inline constexpr int kBands = 8;
inline constexpr std::array<double, kBands> kBandCenters = {
    125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0, 16000.0};
inline constexpr int kBroadbandIndex = 3;  // 1 kHz

struct Material {
    std::string name;
    std::array<double, kBands> reflection{};  // energy reflection coefficient r
    double scattering = 0.0;                  // sigma

    double broadband() const { return reflection[kBroadbandIndex]; }
    bool flat() const;
};

// Direction-to-gain map; an empty function means omnidirectional.
using Directivity = std::function<double(const Vec3&)>;

struct Transducer {
    Vec3 pos = Vec3::Zero();
    Directivity directivity;

    double gain(const Vec3& dir) const { return directivity ? directivity(dir) : 1.0; }
};

struct Polygon {
    std::vector<int> vert_ids;
    std::vector<Vec3> verts;  // outward-oriented loop
    Vec3 normal = Vec3::Zero();
    double offset = 0.0;  // normal . x == offset on the plane
    int material = 0;
    double area = 0.0;
    Vec3 centroid = Vec3::Zero();
    std::vector<Vec3> edge_normals;  // in-plane, pointing into the polygon

    bool contains(const Vec3& p, double tol = kEps) const;
};

struct SceneHit {
    int polygon = -1;
    Vec3 point = Vec3::Zero();
    double distance = 0.0;
};

struct Scene {
    std::vector<Vec3> vertices;
    std::vector<Polygon> polygons;
    std::vector<Material> materials;
    Transducer source;
    Transducer receiver;
    double speed_of_sound = 343.0;

    // Nearest surface hit with distance in (kEps, tmax).
    std::optional<SceneHit> intersect(const Vec3& origin, const Vec3& dir,
                                      double tmax = 1e300) const;
    // Line of sight between two points; points on surfaces are fine.
    bool visible(const Vec3& x, const Vec3& x2) const;
    // Ray-parity point-in-room test.
    bool inside(const Vec3& p) const;

    const Material& material_of(int polygon) const { return materials[polygons[polygon].material]; }
};

// Polygon with derived fields filled in; the normal follows the loop by the
// right-hand rule and is not re-oriented.
Polygon make_polygon(const std::vector<Vec3>& loop, int material = 0);

// Parses and validates. Normals are re-oriented to point out of the room.
Scene parse_scene(const std::string& json_text, const std::string& origin = "<string>");
Scene load_scene(const std::string& path);

// Checks planarity, convexity, closedness and transducer placement.
void validate_scene(const Scene& scene);

struct Patch {
    int id = 0;
    int polygon = 0;
    std::vector<Vec3> loop;
    Vec3 centroid = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
    double area = 0.0;
    std::vector<Vec3> samples;
    int material = 0;
    // grid frame, shared with the parent polygon
    Vec3 origin = Vec3::Zero();
    Vec3 u = Vec3::Zero();
    Vec3 v = Vec3::Zero();
};

struct PolygonGrid {
    Vec3 origin, u, v;
    double umin = 0, vmin = 0, du = 1, dv = 1;
    int nu = 1, nv = 1;
    std::vector<int> cell_patch;  // nu*nv, -1 where the cell misses the polygon
};

struct PatchSet {
    std::vector<Patch> patches;
    std::vector<PolygonGrid> grids;  // per polygon
    double max_edge = 0.0;
    double sample_spacing = 0.0;

    std::size_t size() const { return patches.size(); }
    // Patch of `polygon` containing a point on its plane.
    int locate(int polygon, const Vec3& p) const;
};

PatchSet discretize(const Scene& scene, double max_edge, double sample_spacing = 0.5);

// Cell-centred grid clipped to the patch; centroid when nothing survives.
std::vector<Vec3> sample_points(const Patch& patch, double spacing);

struct Hit {
    int patch = -1;
    int polygon = -1;
    Vec3 point = Vec3::Zero();
    double distance = 0.0;
};

std::optional<Hit> ray_intersect(const Scene& scene, const PatchSet& patches,
                                 const Vec3& origin, const Vec3& dir);

// Enclosed volume (divergence theorem over the outward polygons) and total
// boundary area.
double room_volume(const Scene& scene);
double surface_area(const Scene& scene);

// Sets every material to a frequency-flat reflection coefficient r.
void set_uniform_reflection(Scene& scene, double r);

}  // namespace arn
