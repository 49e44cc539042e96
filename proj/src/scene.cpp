#include "arn/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "arn/error.hpp"

namespace arn {

namespace {

using json = nlohmann::json;
using Vec2 = Eigen::Vector2d;

Vec3 to_vec3(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw Error("scene", what + " must be a 3-element array");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Vec3 newell(const std::vector<Vec3>& loop) {
    Vec3 n = Vec3::Zero();
    for (std::size_t k = 0; k < loop.size(); ++k) {
        const Vec3& a = loop[k];
        const Vec3& b = loop[(k + 1) % loop.size()];
        n.x() += (a.y() - b.y()) * (a.z() + b.z());
        n.y() += (a.z() - b.z()) * (a.x() + b.x());
        n.z() += (a.x() - b.x()) * (a.y() + b.y());
    }
    return n;
}

Vec3 area_centroid(const std::vector<Vec3>& loop, const Vec3& n) {
    Vec3 c = Vec3::Zero();
    double total = 0.0;
    for (std::size_t k = 1; k + 1 < loop.size(); ++k) {
        double a = 0.5 * (loop[k] - loop[0]).cross(loop[k + 1] - loop[0]).dot(n);
        c += a * (loop[0] + loop[k] + loop[k + 1]) / 3.0;
        total += a;
    }
    if (std::abs(total) < 1e-300) {
        for (const auto& p : loop) c += p;
        return c / static_cast<double>(loop.size());
    }
    return c / total;
}

// Fills the derived fields of a polygon from its vertex loop.
void finish_polygon(Polygon& poly, std::size_t index) {
    Vec3 nn = newell(poly.verts);
    double len = nn.norm();
    if (len < 1e-12) throw Error("scene", "polygon " + std::to_string(index) + " is degenerate (zero area)");
    poly.normal = nn / len;
    poly.area = 0.5 * len;
    poly.centroid = area_centroid(poly.verts, poly.normal);
    poly.offset = poly.normal.dot(poly.centroid);
    poly.edge_normals.clear();
    const std::size_t m = poly.verts.size();
    for (std::size_t k = 0; k < m; ++k) {
        Vec3 e = poly.verts[(k + 1) % m] - poly.verts[k];
        poly.edge_normals.push_back(poly.normal.cross(e).normalized());
    }
}

void check_polygon(const Polygon& poly, std::size_t index) {
    const std::string id = "polygon " + std::to_string(index);
    for (const auto& p : poly.verts) {
        if (std::abs(poly.normal.dot(p) - poly.offset) > kEps)
            throw Error("scene", id + " is not planar (vertex off plane by " +
                                     std::to_string(std::abs(poly.normal.dot(p) - poly.offset)) + " m)");
    }
    const std::size_t m = poly.verts.size();
    for (std::size_t k = 0; k < m; ++k) {
        const Vec3& a = poly.verts[k];
        const Vec3& b = poly.verts[(k + 1) % m];
        const Vec3& c = poly.verts[(k + 2) % m];
        double turn = (b - a).cross(c - b).dot(poly.normal);
        if (turn < -kEps * (b - a).norm() * (c - b).norm() - 1e-12)
            throw Error("scene", id + " is not convex (reflex vertex " + std::to_string((k + 1) % m) + ")");
    }
}

void flip(Polygon& poly) {
    std::reverse(poly.verts.begin(), poly.verts.end());
    std::reverse(poly.vert_ids.begin(), poly.vert_ids.end());
}

// Directions for parity tests and closedness probes. Irrational components
// keep them off polygon edges in axis-aligned rooms.
const std::array<Vec3, 3> kProbeDirs = {Vec3(0.5773, 0.4123, 0.7045).normalized(),
                                       Vec3(-0.3371, 0.8123, -0.4759).normalized(),
                                       Vec3(0.7137, -0.5297, 0.4583).normalized()};

Directivity parse_directivity(const json& j) {
    if (!j.contains("directivity")) return {};
    const auto& d = j["directivity"];
    std::string type = d.value("type", "omni");
    if (type == "omni") return {};
    if (type == "cardioid") {
        Vec3 axis = to_vec3(d.at("axis"), "directivity axis").normalized();
        double alpha = d.value("alpha", 0.5);
        return [axis, alpha](const Vec3& dir) { return std::max(0.0, alpha + (1.0 - alpha) * axis.dot(dir)); };
    }
    throw Error("scene", "unknown directivity type '" + type + "'");
}

double shoelace(const std::vector<Vec2>& p) {
    double a = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const Vec2& s = p[k];
        const Vec2& t = p[(k + 1) % p.size()];
        a += s.x() * t.y() - t.x() * s.y();
    }
    return 0.5 * a;
}

// Sutherland-Hodgman clip of `subject` against the convex CCW loop `clip`.
std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
    for (std::size_t k = 0; k < clip.size() && !subject.empty(); ++k) {
        const Vec2 a = clip[k];
        const Vec2 b = clip[(k + 1) % clip.size()];
        auto side = [&](const Vec2& p) { return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x()); };
        std::vector<Vec2> out;
        for (std::size_t i = 0; i < subject.size(); ++i) {
            const Vec2 p = subject[i];
            const Vec2 q = subject[(i + 1) % subject.size()];
            double sp = side(p), sq = side(q);
            if (sp >= 0) out.push_back(p);
            if ((sp >= 0) != (sq >= 0)) out.push_back(p + (q - p) * (sp / (sp - sq)));
        }
        subject = std::move(out);
    }
    std::vector<Vec2> clean;
    for (const auto& p : subject)
        if (clean.empty() || (p - clean.back()).norm() > 1e-12) clean.push_back(p);
    while (clean.size() > 1 && (clean.front() - clean.back()).norm() <= 1e-12) clean.pop_back();
    return clean;
}

bool inside_convex2(const std::vector<Vec2>& loop, const Vec2& p, double tol) {
    for (std::size_t k = 0; k < loop.size(); ++k) {
        const Vec2& a = loop[k];
        const Vec2& b = loop[(k + 1) % loop.size()];
        Vec2 e = b - a;
        double cross = e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x());
        if (cross < -tol * e.norm()) return false;
    }
    return true;
}

std::pair<Vec2, Vec2> bounds(const std::vector<Vec2>& pts) {
    Vec2 lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return {lo, hi};
}

int cells(double extent, double step) {
    return std::max(1, static_cast<int>(std::ceil(extent / step - 1e-9)));
}

}  // namespace

bool Material::flat() const {
    return std::all_of(reflection.begin(), reflection.end(), [&](double r) { return r == reflection[0]; });
}

bool Polygon::contains(const Vec3& p, double tol) const {
    for (std::size_t k = 0; k < verts.size(); ++k)
        if (edge_normals[k].dot(p - verts[k]) < -tol) return false;
    return true;
}

std::optional<SceneHit> Scene::intersect(const Vec3& origin, const Vec3& dir, double tmax) const {
    std::optional<SceneHit> best;
    double tbest = tmax;
    for (std::size_t k = 0; k < polygons.size(); ++k) {
        const Polygon& poly = polygons[k];
        double denom = poly.normal.dot(dir);
        if (std::abs(denom) < 1e-12) continue;
        double t = (poly.offset - poly.normal.dot(origin)) / denom;
        if (t <= kEps || t >= tbest) continue;
        Vec3 p = origin + t * dir;
        if (!poly.contains(p)) continue;
        tbest = t;
        best = SceneHit{static_cast<int>(k), p, t};
    }
    return best;
}

bool Scene::visible(const Vec3& x, const Vec3& x2) const {
    Vec3 d = x2 - x;
    double len = d.norm();
    if (len <= 2 * kEps) return true;
    d /= len;
    for (const Polygon& poly : polygons) {
        double denom = poly.normal.dot(d);
        if (std::abs(denom) < 1e-12) continue;
        double t = (poly.offset - poly.normal.dot(x)) / denom;
        if (t <= kEps || t >= len - kEps) continue;
        if (poly.contains(x + t * d, -kEps)) return false;
    }
    return true;
}

bool Scene::inside(const Vec3& p) const {
    int votes = 0;
    for (const Vec3& dir : kProbeDirs) {
        int crossings = 0;
        for (const Polygon& poly : polygons) {
            double denom = poly.normal.dot(dir);
            if (std::abs(denom) < 1e-12) continue;
            double t = (poly.offset - poly.normal.dot(p)) / denom;
            if (t <= 0) continue;
            if (poly.contains(p + t * dir, 0.0)) ++crossings;
        }
        votes += crossings % 2;
    }
    return votes >= 2;
}

Polygon make_polygon(const std::vector<Vec3>& loop, int material) {
    if (loop.size() < 3) throw Error("scene", "polygon has fewer than 3 vertices");
    Polygon poly;
    poly.verts = loop;
    for (std::size_t k = 0; k < loop.size(); ++k) poly.vert_ids.push_back(static_cast<int>(k));
    poly.material = material;
    finish_polygon(poly, 0);
    check_polygon(poly, 0);
    return poly;
}

Scene parse_scene(const std::string& json_text, const std::string& origin) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error("scene", origin + ": parse error: " + e.what());
    }
    Scene s;
    try {
        for (const auto& v : j.at("vertices")) s.vertices.push_back(to_vec3(v, "vertex"));

        std::vector<std::string> names;
        for (auto it = j.at("materials").begin(); it != j.at("materials").end(); ++it) {
            Material m;
            m.name = it.key();
            const auto& r = it.value().at("reflection");
            if (r.is_number()) {
                m.reflection.fill(r.get<double>());
            } else {
                if (r.size() != kBands)
                    throw Error("scene", "material '" + m.name + "' needs 8 reflection bands");
                for (int b = 0; b < kBands; ++b) m.reflection[b] = r[b].get<double>();
            }
            m.scattering = it.value().value("scattering", 0.0);
            for (double v : m.reflection)
                if (!(v >= 0.0 && v <= 1.0)) throw Error("scene", "material '" + m.name + "' reflection outside [0,1]");
            if (!(m.scattering >= 0.0 && m.scattering <= 1.0))
                throw Error("scene", "material '" + m.name + "' scattering outside [0,1]");
            names.push_back(m.name);
            s.materials.push_back(std::move(m));
        }

        for (const auto& pj : j.at("polygons")) {
            Polygon poly;
            for (const auto& id : pj.at("verts")) {
                int k = id.get<int>();
                if (k < 0 || k >= static_cast<int>(s.vertices.size()))
                    throw Error("scene", "polygon " + std::to_string(s.polygons.size()) + " references missing vertex " + std::to_string(k));
                poly.vert_ids.push_back(k);
                poly.verts.push_back(s.vertices[k]);
            }
            if (poly.verts.size() < 3)
                throw Error("scene", "polygon " + std::to_string(s.polygons.size()) + " has fewer than 3 vertices");
            std::string mat = pj.at("material").get<std::string>();
            auto it = std::find(names.begin(), names.end(), mat);
            if (it == names.end())
                throw Error("scene", "polygon " + std::to_string(s.polygons.size()) + " uses unknown material '" + mat + "'");
            poly.material = static_cast<int>(it - names.begin());
            finish_polygon(poly, s.polygons.size());
            check_polygon(poly, s.polygons.size());
            s.polygons.push_back(std::move(poly));
        }

        s.source.pos = to_vec3(j.at("source").at("pos"), "source pos");
        s.source.directivity = parse_directivity(j.at("source"));
        s.receiver.pos = to_vec3(j.at("receiver").at("pos"), "receiver pos");
        s.receiver.directivity = parse_directivity(j.at("receiver"));
        s.speed_of_sound = j.value("speed_of_sound", 343.0);
    } catch (const json::exception& e) {
        throw Error("scene", origin + ": " + e.what());
    }
    if (s.polygons.empty()) throw Error("scene", origin + ": no polygons");

    // Orient every polygon outwards: a point just in front of it must be
    // outside the room.
    for (auto& poly : s.polygons) {
        double h = 1e-4 * std::max(1.0, std::sqrt(poly.area));
        if (s.inside(poly.centroid + h * poly.normal)) {
            flip(poly);
            finish_polygon(poly, 0);
        }
    }
    validate_scene(s);
    return s;
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("scene", "cannot open scene file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scene(ss.str(), path);
}

void validate_scene(const Scene& s) {
    for (std::size_t k = 0; k < s.polygons.size(); ++k) check_polygon(s.polygons[k], k);
    if (!(s.speed_of_sound > 0)) throw Error("scene", "speed of sound must be positive");
    if (!s.inside(s.source.pos)) throw Error("scene", "source outside boundary");
    if (!s.inside(s.receiver.pos)) throw Error("scene", "receiver outside boundary");

    // Closedness probe: a Fibonacci sphere of rays from the source must all
    // hit a surface.
    const int n = 2000;
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < n; ++k) {
        double z = 1.0 - (k + 0.5) * 2.0 / n;
        double r = std::sqrt(1.0 - z * z);
        Vec3 dir(r * std::cos(golden * k), r * std::sin(golden * k), z);
        if (!s.intersect(s.source.pos, dir))
            throw Error("scene", "scene is not closed: ray from source escaped along (" +
                                     std::to_string(dir.x()) + ", " + std::to_string(dir.y()) + ", " +
                                     std::to_string(dir.z()) + ")");
    }
}

PatchSet discretize(const Scene& scene, double max_edge, double sample_spacing) {
    if (!(max_edge > 0)) throw Error("scene", "max_edge must be positive");
    if (!(sample_spacing > 0)) throw Error("scene", "sample spacing must be positive");
    PatchSet ps;
    ps.max_edge = max_edge;
    ps.sample_spacing = sample_spacing;
    for (std::size_t k = 0; k < scene.polygons.size(); ++k) {
        const Polygon& poly = scene.polygons[k];
        PolygonGrid g;
        g.origin = poly.verts[0];
        g.u = (poly.verts[1] - poly.verts[0]).normalized();
        g.v = poly.normal.cross(g.u);
        std::vector<Vec2> loop2;
        for (const auto& p : poly.verts) loop2.emplace_back(g.u.dot(p - g.origin), g.v.dot(p - g.origin));
        auto [lo, hi] = bounds(loop2);
        g.umin = lo.x();
        g.vmin = lo.y();
        g.nu = cells(hi.x() - lo.x(), max_edge);
        g.nv = cells(hi.y() - lo.y(), max_edge);
        g.du = (hi.x() - lo.x()) / g.nu;
        g.dv = (hi.y() - lo.y()) / g.nv;
        g.cell_patch.assign(static_cast<std::size_t>(g.nu * g.nv), -1);

        double tiled = 0.0;
        for (int jv = 0; jv < g.nv; ++jv) {
            for (int iu = 0; iu < g.nu; ++iu) {
                double u0 = g.umin + iu * g.du, v0 = g.vmin + jv * g.dv;
                std::vector<Vec2> cell = {{u0, v0}, {u0 + g.du, v0}, {u0 + g.du, v0 + g.dv}, {u0, v0 + g.dv}};
                auto piece = clip_convex(cell, loop2);
                if (piece.size() < 3) continue;
                double a = shoelace(piece);
                if (a <= 1e-9 * poly.area) continue;
                Patch patch;
                patch.id = static_cast<int>(ps.patches.size());
                patch.polygon = static_cast<int>(k);
                patch.material = poly.material;
                patch.normal = poly.normal;
                patch.area = a;
                patch.origin = g.origin;
                patch.u = g.u;
                patch.v = g.v;
                for (const auto& q : piece) patch.loop.push_back(g.origin + q.x() * g.u + q.y() * g.v);
                patch.centroid = area_centroid(patch.loop, patch.normal);
                patch.samples = sample_points(patch, sample_spacing);
                g.cell_patch[static_cast<std::size_t>(jv * g.nu + iu)] = patch.id;
                tiled += a;
                ps.patches.push_back(std::move(patch));
            }
        }
        if (std::abs(tiled - poly.area) > 1e-6 * poly.area)
            throw Error("scene", "tiling of polygon " + std::to_string(k) + " lost area");
        ps.grids.push_back(std::move(g));
    }
    return ps;
}

std::vector<Vec3> sample_points(const Patch& patch, double spacing) {
    if (!(spacing > 0)) throw Error("scene", "sample spacing must be positive");
    Vec3 u = patch.u, v = patch.v, o = patch.origin;
    if (u.squaredNorm() == 0.0) {
        o = patch.loop[0];
        u = (patch.loop[1] - patch.loop[0]).normalized();
        v = patch.normal.cross(u);
    }
    std::vector<Vec2> loop2;
    for (const auto& p : patch.loop) loop2.emplace_back(u.dot(p - o), v.dot(p - o));
    auto [lo, hi] = bounds(loop2);
    int nu = cells(hi.x() - lo.x(), spacing);
    int nv = cells(hi.y() - lo.y(), spacing);
    double du = (hi.x() - lo.x()) / nu, dv = (hi.y() - lo.y()) / nv;
    std::vector<Vec3> pts;
    for (int jv = 0; jv < nv; ++jv) {
        for (int iu = 0; iu < nu; ++iu) {
            Vec2 q(lo.x() + (iu + 0.5) * du, lo.y() + (jv + 0.5) * dv);
            if (inside_convex2(loop2, q, 1e-12)) pts.push_back(o + q.x() * u + q.y() * v);
        }
    }
    if (pts.empty()) pts.push_back(patch.centroid);
    return pts;
}

int PatchSet::locate(int polygon, const Vec3& p) const {
    const PolygonGrid& g = grids[polygon];
    Vec3 d = p - g.origin;
    int iu = std::clamp(static_cast<int>(std::floor((g.u.dot(d) - g.umin) / g.du)), 0, g.nu - 1);
    int jv = std::clamp(static_cast<int>(std::floor((g.v.dot(d) - g.vmin) / g.dv)), 0, g.nv - 1);
    int id = g.cell_patch[static_cast<std::size_t>(jv * g.nu + iu)];
    if (id >= 0) return id;
    // Point sits in a cell clipped away numerically; fall back to the
    // nearest patch of the same polygon.
    double best = 1e300;
    for (const auto& patch : patches) {
        if (patch.polygon != polygon) continue;
        double dist = (patch.centroid - p).squaredNorm();
        if (dist < best) {
            best = dist;
            id = patch.id;
        }
    }
    return id;
}

std::optional<Hit> ray_intersect(const Scene& scene, const PatchSet& patches, const Vec3& origin,
                                 const Vec3& dir) {
    auto h = scene.intersect(origin, dir);
    if (!h) return std::nullopt;
    return Hit{patches.locate(h->polygon, h->point), h->polygon, h->point, h->distance};
}


double room_volume(const Scene& scene) {
    double v = 0.0;
    for (const auto& p : scene.polygons) v += p.area * p.normal.dot(p.centroid);
    return v / 3.0;
}

double surface_area(const Scene& scene) {
    double a = 0.0;
    for (const auto& p : scene.polygons) a += p.area;
    return a;
}

void set_uniform_reflection(Scene& scene, double r) {
    for (auto& m : scene.materials) m.reflection.fill(r);
}

}  // namespace arn
