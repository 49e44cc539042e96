#pragma once

#include <array>
#include <cstdio>
#include <string>

#include "arn/scene.hpp"

namespace test {

inline std::string scene_path(const std::string& name) { return std::string(ARN_SCENES_DIR) + "/" + name; }

inline arn::Scene scene(const std::string& name) { return arn::load_scene(scene_path(name)); }

// Axis-aligned box [0,lx]x[0,ly]x[0,lz] with one material.
inline std::string box_json(double lx, double ly, double lz, double r, double sigma,
                            const std::array<double, 3>& src, const std::array<double, 3>& rcv) {
    char buf[2048];
    std::snprintf(buf, sizeof buf, R"({
      "vertices": [[0,0,0],[%g,0,0],[%g,%g,0],[0,%g,0],[0,0,%g],[%g,0,%g],[%g,%g,%g],[0,%g,%g]],
      "polygons": [
        {"verts": [0,3,2,1], "material": "m"}, {"verts": [4,5,6,7], "material": "m"},
        {"verts": [0,4,7,3], "material": "m"}, {"verts": [1,2,6,5], "material": "m"},
        {"verts": [0,1,5,4], "material": "m"}, {"verts": [3,7,6,2], "material": "m"}],
      "materials": {"m": {"reflection": %.17g, "scattering": %.17g}},
      "source": {"pos": [%.17g,%.17g,%.17g]},
      "receiver": {"pos": [%.17g,%.17g,%.17g]}
    })",
                  lx, lx, ly, ly, lz, lx, lz, lx, ly, lz, ly, lz, r, sigma, src[0], src[1], src[2], rcv[0], rcv[1],
                  rcv[2]);
    return buf;
}

// Two parallel squares of side `side`, `gap` apart along z, outward normals
// facing away from each other. Not a closed room: only for path/kernel tests.
inline arn::Scene facing_pair(double side, double gap) {
    arn::Scene s;
    arn::Material m;
    m.name = "m";
    m.reflection.fill(1.0);
    s.materials.push_back(m);
    using arn::Vec3;
    s.polygons.push_back(arn::make_polygon({Vec3(0, 0, 0), Vec3(0, side, 0), Vec3(side, side, 0), Vec3(side, 0, 0)}));
    s.polygons.push_back(
        arn::make_polygon({Vec3(0, 0, gap), Vec3(side, 0, gap), Vec3(side, side, gap), Vec3(0, side, gap)}));
    s.source.pos = Vec3(side / 2, side / 2, gap / 2);
    s.receiver.pos = Vec3(side / 2, side / 2, gap / 2);
    return s;
}

}  // namespace test
