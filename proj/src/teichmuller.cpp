#include "connexion/teichmuller.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <cmath>
#include <numbers>

#include "connexion/errors.hpp"

namespace connexion {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2 * std::numbers::pi;

double incidence_tol(cplx v) { return 1e-8 * std::max(1.0, std::abs(v)); }

// argument of a ray point as seen from the vertex, in the adapted chart if given
double ray_arg(cplx pt, cplx vertex, const AdaptedChart* chart) {
    if (!chart) return std::arg(pt - vertex);
    cplx x = chart->source == Chart::Infinity ? 1.0 / pt : pt;
    return std::arg(chart->forward(x));
}

double ray_direction(const std::vector<cplx>& pts, bool from_end, cplx vertex, const AdaptedChart* chart) {
    std::vector<double> args;
    const std::size_t n = pts.size();
    for (std::size_t k = 0; k < n && args.size() < 6; ++k) {
        cplx p = pts[from_end ? n - 1 - k : k];
        double d = std::abs(p - vertex);
        if (d <= 1e-14 * std::max(1.0, std::abs(vertex))) continue;
        if (chart) {
            cplx x = chart->source == Chart::Infinity ? 1.0 / p : p;
            if (!(std::abs(chart->forward(x)) < chart->radius)) break;
        }
        args.push_back(ray_arg(p, vertex, chart));
    }
    if (args.empty()) throw Error(Errc::NotCriticalAtPole, "no side points near the pole vertex");
    double base = args.front();
    double spread = 0;
    for (double a : args) {
        double d = std::remainder(a - base, kTwoPi);
        spread = std::max(spread, std::abs(d));
    }
    if (spread > 1e-5) throw Error(Errc::NotCriticalAtPole, "side does not reach the pole along a ray");
    return base;
}

double signed_area(const std::vector<cplx>& loop) {
    double a = 0;
    for (std::size_t i = 0; i + 1 < loop.size(); ++i)
        a += loop[i].real() * loop[i + 1].imag() - loop[i + 1].real() * loop[i].imag();
    return 0.5 * a;
}

std::vector<cplx> boundary(const GeodesicPolygon& poly) {
    std::vector<cplx> out;
    for (const auto& s : poly.sides) {
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            if (!out.empty() && i == 0 && std::abs(out.back() - s.points[0]) <= incidence_tol(s.points[0])) continue;
            out.push_back(s.points[i]);
        }
    }
    if (!out.empty() && out.front() != out.back()) out.push_back(out.front());
    return out;
}

bool is_vertex(const GeodesicPolygon& poly, const SpherePoint& p) {
    for (const auto& v : poly.vertices) {
        if (v.location.is_infinity() != p.is_infinity()) continue;
        if (p.is_infinity() || std::abs(v.location.z() - p.z()) <= incidence_tol(p.z())) return true;
    }
    return false;
}

}  // namespace

PolygonSide side_from_trajectory(const Trajectory& traj) {
    PolygonSide s;
    s.points = standard_polyline(traj);
    s.start_tangent = standard_velocity(traj.samples.front().state);
    s.end_tangent = standard_velocity(traj.samples.back().state);
    if (traj.reason == Termination::PoleApproach && traj.pole_hit >= 0) {
        const auto& loc = traj.conn.poles()[traj.pole_hit].location;
        if (!loc.is_infinity()) s.points.push_back(loc.z());
    }
    return s;
}

PolygonSide side_from_closed_form(double rho, double alpha, double r, cplx u0, cplx u1, int samples) {
    PolygonSide s;
    samples = std::max(samples, 2);
    for (int k = 0; k <= samples; ++k) s.points.push_back(chi(rho, alpha, r, u0 + (u1 - u0) * (double(k) / samples)));
    auto tangent = [&](cplx u, std::size_t near, std::size_t other) {
        if (u == 0.0) return s.points[other] - s.points[near];
        return (u1 - u0) * chi_derivative(rho, alpha, r, u);
    };
    s.start_tangent = u0 == 0.0 ? s.points[1] - s.points[0] : tangent(u0, 0, 1);
    s.end_tangent = u1 == 0.0 ? s.points.back() - s.points[s.points.size() - 2] : tangent(u1, 0, 1);
    return s;
}

GeodesicPolygon chart_polygon(double rho, double r, double alpha, const std::vector<cplx>& u, int samples) {
    if (u.size() < 2) throw Error(Errc::InvalidArgument, "need at least two regular vertices");
    const double lim = std::pow(r, rho + 1.0);
    for (auto x : u)
        if (x.imag() < 0 || !(std::abs(x) < lim)) throw Error(Errc::OutOfDomain, "vertex outside the chart sector");
    GeodesicPolygon poly;
    PolygonVertex apex;
    apex.location = SpherePoint::finite(0.0);
    apex.kind = VertexKind::Pole;
    apex.rho = rho;
    poly.vertices.push_back(apex);
    poly.sides.push_back(side_from_closed_form(rho, alpha, r, 0.0, u.front(), samples));
    for (std::size_t k = 0; k < u.size(); ++k) {
        PolygonVertex v;
        v.location = SpherePoint::finite(chi(rho, alpha, r, u[k]));
        poly.vertices.push_back(v);
        cplx next = k + 1 < u.size() ? u[k + 1] : cplx(0.0);
        poly.sides.push_back(side_from_closed_form(rho, alpha, r, u[k], next, samples));
    }
    return poly;
}

double measure_internal_angle(const PolygonSide& in, const PolygonSide& out, const PolygonVertex& vertex,
                              const AdaptedChart* chart) {
    if (vertex.location.is_infinity()) throw Error(Errc::InvalidArgument, "vertices at infinity are not supported");
    cplx v = vertex.location.z();
    if (in.points.empty() || out.points.empty() || std::abs(in.points.back() - v) > incidence_tol(v) ||
        std::abs(out.points.front() - v) > incidence_tol(v))
        throw Error(Errc::NotIncident, "sides do not meet at the vertex");
    if (vertex.kind == VertexKind::Regular) {
        double turn = std::arg(out.start_tangent / in.end_tangent);
        return kPi - turn;
    }
    double a_in = ray_direction(in.points, true, v, chart);
    double a_out = ray_direction(out.points, false, v, chart);
    double ang = wrap_angle(a_in - a_out);
    if (ang < 1e-6 || ang > kTwoPi - 1e-6) ang = kTwoPi;
    return ang;
}

void measure_polygon(GeodesicPolygon& poly, const FuchsianConnection* conn) {
    const std::size_t n = poly.vertices.size();
    if (n == 0) return;
    if (poly.sides.size() != n) throw Error(Errc::InvalidArgument, "one side per vertex expected");
    for (std::size_t j = 0; j < n; ++j) {
        auto& v = poly.vertices[j];
        std::optional<AdaptedChart> chart;
        if (v.kind == VertexKind::Pole && conn) {
            chart = adapted_chart(*conn, v.location);
            v.rho = chart->rho;
        }
        v.angle = measure_internal_angle(poly.sides[(j + n - 1) % n], poly.sides[j], v, chart ? &*chart : nullptr);
    }
}

double check_chart_polygon(const AdaptedChart& chart, const GeodesicPolygon& polygon) {
    const auto& vs = polygon.vertices;
    if (vs.empty() || vs[0].kind != VertexKind::Pole || !(vs[0].location == chart.pole))
        throw Error(Errc::PoleNotVertexZero, "the chart pole must be vertex 0");
    double lhs = 0;
    for (std::size_t j = 1; j < vs.size(); ++j) {
        if (vs[j].kind != VertexKind::Regular) throw Error(Errc::PoleNotVertexZero, "other vertices must be regular");
        lhs += kPi - vs[j].angle;
    }
    return std::abs(lhs - kPi - vs[0].angle * (chart.rho + 1.0));
}

std::vector<double> enclosed_residues(const FuchsianConnection& conn, const GeodesicPolygon& polygon) {
    auto loop = boundary(polygon);
    if (loop.size() < 3) throw Error(Errc::InvalidArgument, "polygon boundary too short");
    Region region = polygon.region;
    if (region == Region::Auto) {
        double scale = 0;
        for (auto p : loop) scale = std::max(scale, std::abs(p - loop.front()));
        double a = signed_area(loop);
        if (std::abs(a) <= 1e-12 * scale * scale)
            throw Error(Errc::InvalidArgument, "degenerate boundary; state the enclosed region explicitly");
        region = a > 0 ? Region::Bounded : Region::Unbounded;
    }
    std::vector<double> out;
    for (const auto& p : conn.poles()) {
        if (p.residue == 0.0 || is_vertex(polygon, p.location)) continue;
        if (p.location.is_infinity()) {
            if (region == Region::Unbounded) out.push_back(p.residue.real());
            continue;
        }
        double turn = 0;
        cplx c = p.location.z();
        for (std::size_t i = 0; i + 1 < loop.size(); ++i) turn += std::arg((loop[i + 1] - c) / (loop[i] - c));
        double w = turn / kTwoPi;
        double wr = std::round(w);
        if (std::abs(w - wr) > 0.2) throw Error(Errc::InvalidArgument, "winding number is not close to an integer");
        int wi = int(wr);
        bool inside = region == Region::Bounded ? wi != 0 : wi == 0;
        if (inside) out.push_back(p.residue.real());
    }
    return out;
}

double check_p1_formula(const FuchsianConnection& conn, const GeodesicPolygon& polygon) {
    double lhs = 0;
    for (const auto& v : polygon.vertices) {
        double rho = v.kind == VertexKind::Pole ? v.rho : 0.0;
        if (v.kind == VertexKind::Pole && rho <= -1.0)
            throw Error(Errc::VertexResidueTooLow, "vertex residues must exceed -1");
        lhs += kPi - v.angle * (rho + 1.0);
    }
    double sum = 0;
    for (double r : enclosed_residues(conn, polygon)) sum += r;
    return std::abs(lhs - kTwoPi * (1.0 + sum));
}

double check_two_gon(const FuchsianConnection& conn, const GeodesicPolygon& polygon) {
    if (polygon.vertices.size() != 2) throw Error(Errc::InvalidArgument, "two vertices expected");
    double lhs = 0;
    for (const auto& v : polygon.vertices) {
        double rho = v.kind == VertexKind::Pole ? v.rho : 0.0;
        if (rho <= -1.0) throw Error(Errc::VertexResidueTooLow, "vertex residues must exceed -1");
        lhs += (rho + 1.0) * v.angle;
    }
    double sum = 0;
    for (double r : enclosed_residues(conn, polygon)) sum += r;
    return std::abs(lhs + kTwoPi * sum);
}

double check_general_formula(const PartTopology& t, const std::vector<PolygonVertex>& vertices) {
    double lhs = 0;
    for (const auto& v : vertices) lhs += kPi - ((v.kind == VertexKind::Pole ? v.rho : 0.0) + 1.0) * v.angle;
    double sum = 0;
    for (double r : t.enclosed) sum += r;
    return std::abs(lhs - kTwoPi * (2.0 - t.m_f - 2.0 * t.genus + sum));
}

double check_regular_formula(const PartTopology& t, const std::vector<double>& eps) {
    double lhs = 0;
    for (double e : eps) lhs += e;
    double sum = 0;
    for (double r : t.enclosed) sum += r;
    return std::abs(lhs - kTwoPi * (2.0 - t.m_f - 2.0 * t.genus + sum));
}

namespace {

struct Shot {
    double miss = std::numeric_limits<double>::infinity();
    double t = 0;
    double offset = 0;  // signed lateral miss, positive when the target is on the left
    bool interior = false;
};

Shot closest_approach(const Trajectory& tr, cplx target) {
    const auto& s = tr.samples;
    Shot best;
    std::size_t k_best = 0;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
        cplx a = standard_position(s[k].state), b = standard_position(s[k + 1].state);
        cplx e = b - a;
        double n = std::norm(e);
        double u = n > 0 ? std::clamp(((target - a) * std::conj(e)).real() / n, 0.0, 1.0) : 0.0;
        double d = std::abs(a + u * e - target);
        if (d < best.miss) {
            best.miss = d;
            best.t = s[k].t + u * (s[k + 1].t - s[k].t);
            k_best = k;
        }
    }
    if (s.size() < 2) return best;
    double lo = s[k_best > 0 ? k_best - 1 : 0].t;
    double hi = s[std::min(k_best + 2, s.size() - 1)].t;
    double t = closest_time(tr, target, lo, hi, best.t);
    auto g = state_at(tr, t);
    cplx z = standard_position(g), v = standard_velocity(g);
    double d = std::abs(z - target);
    if (d < best.miss) {
        best.miss = d;
        best.t = t;
    } else {
        g = state_at(tr, best.t);
        z = standard_position(g);
        v = standard_velocity(g);
    }
    best.offset = (std::conj(v) * (target - z)).imag() / std::abs(v);
    best.interior = best.t > tr.t_begin() && best.t < tr.t_end();
    return best;
}

}  // namespace

ConnectResult connect_unique(const FuchsianConnection& conn, cplx z0, cplx z1, const ConnectOptions& opts) {
    if (std::abs(z1 - z0) <= 1e-12 * std::max(1.0, std::abs(z0))) throw Error(Errc::InvalidArgument, "endpoints coincide");
    if (!conn.real_residues()) throw Error(Errc::NonRealResidues, "metric needs real residues");
    const double d0 = conn.density(Chart::Standard, z0);
    // straight-segment length estimate bounds the search time
    double est = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [&](double s) { return conn.density(Chart::Standard, z0 + s * (z1 - z0)) * std::abs(z1 - z0); }, 0.0, 1.0, 3);
    if (!std::isfinite(est) || est <= 0) est = std::abs(z1 - z0) * std::max(d0, conn.density(Chart::Standard, z1));
    TraceOptions to = opts.trace;
    to.region = std::make_pair(0.5 * (z0 + z1), 4.0 * std::abs(z1 - z0) + 1.0);
    const double t_max = 3.0 * est;
    auto start = make_state(conn, z0, 1.0 / d0);

    auto shoot = [&](double theta) {
        GeodesicState s = start;
        s.v = std::polar(1.0 / d0, theta);
        auto tr = trace(conn, s, t_max, to);
        return std::make_pair(closest_approach(tr, z1), std::move(tr));
    };

    const int n = std::max(8, opts.directions);
    const double dth = kTwoPi / n;
    std::vector<double> dirs(n + 1);
    std::vector<Shot> grid(n + 1);
    for (int k = 0; k < n; ++k) {
        dirs[k] = (k + opts.phase) * dth;
        grid[k] = shoot(dirs[k]).first;
    }
    dirs[n] = dirs[0] + kTwoPi;
    grid[n] = grid[0];
    const double tol = opts.tolerance * (1.0 + std::abs(z1));

    // the offset changes sign across the connecting direction; a sign change
    // between two far misses is a jump between branches, not a crossing
    int best_k = -1;
    double best_score = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
        const Shot &l = grid[k], &r = grid[k + 1];
        if (!l.interior && !r.interior) continue;
        if (l.offset * r.offset > 0) continue;
        double score = std::abs(l.offset) + std::abs(r.offset);
        if (std::abs(l.offset) + std::abs(r.offset) > 1.5 * (l.miss + r.miss) + 1e-300) continue;
        if (score < best_score) {
            best_score = score;
            best_k = k;
        }
    }
    double th_best = 0;
    Shot hit;
    if (best_k >= 0) {
        auto f = [&](double x) { return shoot(x).first.offset; };
        double fa = grid[best_k].offset, fb = grid[best_k + 1].offset;
        if (fa == 0) {
            th_best = dirs[best_k];
        } else if (fb == 0) {
            th_best = dirs[best_k + 1];
        } else {
            std::uintmax_t iters = opts.refine_iterations;
            auto r = boost::math::tools::toms748_solve(
                f, dirs[best_k], dirs[best_k + 1], fa, fb,
                [](double lo, double hi) { return std::abs(hi - lo) <= 4e-16 * std::max(1.0, std::abs(lo)); }, iters);
            th_best = std::abs(f(r.first)) <= std::abs(f(r.second)) ? r.first : r.second;
        }
    }
    auto [shot, tr] = shoot(th_best);
    hit = shot;
    if (best_k < 0 || !(hit.miss <= tol)) throw Error(Errc::NotFound, "shooting did not reach the target");
    // a shot grazing a pole is the limit of two families deflected to either
    // side; the connection it suggests runs through the pole
    const double floor = opts.trace.pole_floor;
    for (auto p : standard_polyline(tr))
        if (conn.pole_distance(Chart::Standard, p) < 100.0 * floor)
            throw Error(Errc::NotFound, "the only connecting geodesic runs through a pole");

    GeodesicState s = start;
    s.v = std::polar(1.0 / d0, th_best);
    TraceOptions fin = opts.trace;
    ConnectResult res{trace(conn, s, hit.t, fin), hit.miss, wrap_angle(th_best), true};
    if (!self_intersections(res.arc, 1).empty()) throw Error(Errc::NonSimpleArc, "the connecting arc crosses itself");

    cplx mid = 0.5 * (z0 + z1);
    double reach = 0;
    for (auto p : standard_polyline(res.arc)) reach = std::max(reach, std::abs(p - mid));
    const auto& loc = conn.finite_locations();
    const auto& rs = conn.finite_residues();
    for (std::size_t j = 0; j < loc.size(); ++j)
        if (rs[j].real() < 0 && std::abs(loc[j] - mid) <= 1.1 * reach) res.hypothesis_holds = false;
    return res;
}

}  // namespace connexion
