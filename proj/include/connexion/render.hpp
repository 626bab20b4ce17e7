#pragma once

#include <string>
#include <vector>

#include "connexion/connection.hpp"
#include "connexion/geodesic.hpp"
#include "connexion/scene.hpp"

namespace connexion {

struct RenderPolyline {
    std::vector<cplx> points;  // standard coordinates; non-finite entries break the line
    bool closed = false;
};

struct RenderMarker {
    SpherePoint at = SpherePoint::infinity();
    std::string label;
};

/// Layered geometry in a fixed drawing order: polygons, critical rays,
/// trajectories, sections, poles, then the inset chart around infinity.
struct RenderScene {
    RenderConfig view;
    std::vector<RenderPolyline> polygons;
    std::vector<RenderPolyline> rays;
    std::vector<RenderPolyline> trajectories;
    std::vector<RenderPolyline> sections;
    std::vector<RenderMarker> poles;
    std::string title;
};

RenderScene make_render_scene(const RenderConfig& view, const FuchsianConnection& conn);

/// Adds the sampled path; with period > 0 only one period is kept and closed up.
void add_trajectory(RenderScene& scene, const Trajectory& traj, double period = 0);

/// Critical rays of each real pole with residue above -1, drawn inside its adapted chart.
void add_critical_rays(RenderScene& scene, const FuchsianConnection& conn, int per_pole = 8);

/// SVG text; every coordinate is printed with six decimals, so equal scenes
/// give identical bytes. Points far outside the window are drawn in the inset
/// through w = 1/z.
std::string render_svg(const RenderScene& scene);

}  // namespace connexion
