#pragma once

#include <optional>
#include <vector>

#include "connexion/connection.hpp"
#include "connexion/geodesic.hpp"
#include "connexion/local.hpp"

namespace connexion {

/// One geodesic side: sampled points plus exact tangents at both ends.
struct PolygonSide {
    std::vector<cplx> points;
    cplx start_tangent;
    cplx end_tangent;
};

/// Side from a traced trajectory in standard coordinates. When the trace ended
/// at a pole the pole itself is appended as the final point.
PolygonSide side_from_trajectory(const Trajectory& traj);

/// Side along the closed form chi_rho^alpha(u) for u from u0 to u1 (straight in u).
PolygonSide side_from_closed_form(double rho, double alpha, double r, cplx u0, cplx u1, int samples = 64);

enum class VertexKind { Regular, Pole };

struct GeodesicPolygon;

/// Polygon in the adapted coordinate of a pole at the origin with residue rho.
/// Regular vertices are given in the straightened plane u = (rho+1) J, where
/// sides are segments: the first on the positive real axis, the last on the
/// ray arg u = (rho+1) v0, arguments increasing, |u| < r^(rho+1).
GeodesicPolygon chart_polygon(double rho, double r, double alpha, const std::vector<cplx>& u_vertices,
                              int samples_per_side = 64);

struct PolygonVertex {
    SpherePoint location = SpherePoint::infinity();
    VertexKind kind = VertexKind::Regular;
    double rho = 0;    // residue at a pole vertex
    double angle = 0;  // internal angle; chart-coordinate angle at pole vertices
};

enum class Region { Auto, Bounded, Unbounded };

/// Side j runs from vertex j to vertex j+1 (cyclically). A polygon without
/// vertices is a single closed side.
struct GeodesicPolygon {
    std::vector<PolygonSide> sides;
    std::vector<PolygonVertex> vertices;
    Region region = Region::Auto;  // which side of the boundary is the enclosed part
};

/// Internal angle at a vertex. Pole vertices use the arguments of the incident
/// critical rays, read in the adapted chart when one is given.
double measure_internal_angle(const PolygonSide& in, const PolygonSide& out, const PolygonVertex& vertex,
                              const AdaptedChart* chart = nullptr);

/// Fill in every vertex angle; adapted charts are built for pole vertices when conn is given.
void measure_polygon(GeodesicPolygon& poly, const FuchsianConnection* conn = nullptr);

struct PartTopology {
    int m_f = 1;
    int genus = 0;
    std::vector<double> enclosed;  // residues of poles inside the part
};

double check_chart_polygon(const AdaptedChart& chart, const GeodesicPolygon& polygon);

/// Residues of the poles enclosed by the polygon (winding by argument sum).
std::vector<double> enclosed_residues(const FuchsianConnection& conn, const GeodesicPolygon& polygon);

double check_p1_formula(const FuchsianConnection& conn, const GeodesicPolygon& polygon);
double check_two_gon(const FuchsianConnection& conn, const GeodesicPolygon& polygon);
double check_general_formula(const PartTopology& topology, const std::vector<PolygonVertex>& vertices);
/// Classical form with exterior angles at regular vertices.
double check_regular_formula(const PartTopology& topology, const std::vector<double>& exterior_angles);

struct ConnectOptions {
    int directions = 72;
    double phase = 0.0;        // offset of the direction grid, in grid steps
    double tolerance = 1e-10;  // miss distance accepted as a hit
    int refine_iterations = 200;
    TraceOptions trace;
};

struct ConnectResult {
    Trajectory arc;
    double miss = 0;
    double launch_angle = 0;
    bool hypothesis_holds = true;  // no negative residue near the arc
};

ConnectResult connect_unique(const FuchsianConnection& conn, cplx z0, cplx z1, const ConnectOptions& opts = {});

}  // namespace connexion
