#include "connexion/verify.hpp"

#include <algorithm>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "connexion/errors.hpp"
#include "connexion/geodesic.hpp"
#include "connexion/local.hpp"
#include "connexion/omega.hpp"
#include "connexion/teichmuller.hpp"

namespace connexion {

namespace {

constexpr double kPi = std::numbers::pi;

FuchsianConnection lone_pole(double rho) { return build_connection({pole(0, rho)}); }

std::string num(double x) {
    std::ostringstream os;
    os << std::setprecision(6) << x;
    return os.str();
}

// Geodesic chi^alpha(t + i tau) of a lone pole, traced across |u| < reach.
Trajectory horizontal(const FuchsianConnection& conn, double rho, double alpha, double tau, double reach = 0.95) {
    const double half = std::sqrt(reach * reach - tau * tau);
    const cplx b(-half, tau);
    auto st = make_state(conn, chi(rho, alpha, 1.0, b), chi_derivative(rho, alpha, 1.0, b));
    return trace(conn, st, 2.0 * half);
}

// Smallest height of the straightened line whose closest point stays at
// |z| >= 1e-4, well above the pole floor of the tracer.
double floor_height(double rho, double wanted) { return std::max(wanted, std::pow(1e-4, rho + 1.0)); }

}  // namespace

CheckResult check_closed_form(double rho, std::uint64_t seed, int traces, double tol) {
    CheckResult res{"closed form rho=" + num(rho), false, 0, tol, {}};
    const auto conn = lone_pole(rho);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0, 1);
    double slowest = 0;
    int points = 0;
    for (int k = 0; k < traces; ++k) {
        LocalGeodesicParams p;
        p.rho = rho;
        p.r = 1.0;
        p.alpha = 2 * kPi * U(rng);
        p.a = (U(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + 1.5 * U(rng));
        const double lo = floor_height(rho, 0.05);
        p.b = cplx(-0.5 + U(rng), lo + 0.5 * (0.9 - lo) * U(rng));
        const double reach = 0.95, a = p.a.real();
        const double t_end = ((a > 0 ? 1 : -1) * std::sqrt(reach * reach - p.b.imag() * p.b.imag()) - p.b.real()) / a;
        auto [z0, v0] = closed_form(p, 0.0);
        auto clock0 = std::chrono::steady_clock::now();
        auto tr = trace(conn, make_state(conn, z0, v0), t_end);
        slowest = std::max(slowest, std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count());
        if (tr.reason != Termination::TimeLimit) {
            res.detail = std::string("trace stopped early: ") + to_string(tr.reason);
            res.value = INFINITY;
            return res;
        }
        for (std::size_t i = 0; i < tr.samples.size(); ++i) {
            double t = tr.samples[i].t;
            res.value = std::max(res.value, std::abs(standard_position(tr.samples[i].state) - closed_form(p, t).first));
            ++points;
            if (i + 1 < tr.samples.size()) {
                double tm = 0.5 * (t + tr.samples[i + 1].t);
                res.value = std::max(res.value, std::abs(standard_position(state_at(tr, tm)) - closed_form(p, tm).first));
                ++points;
            }
        }
    }
    res.passed = res.value <= tol && slowest < 1.0;
    res.detail = std::to_string(traces) + " traces, " + std::to_string(points) + " points, slowest " + num(slowest) + " s";
    return res;
}

CheckResult check_critical_lengths(double rho, std::uint64_t seed, int directions, double tol) {
    CheckResult res{"critical lengths rho=" + num(rho), false, 0, tol, {}};
    const auto conn = lone_pole(rho);
    const double m = rho + 1.0, expect = 1.0 / m;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ang(0, 2 * kPi);
    double lo = INFINITY, hi = -INFINITY, worst = 0;
    for (int k = 0; k < directions; ++k) {
        cplx e = std::polar(1.0, ang(rng));
        auto tr = trace(conn, make_state(conn, e, -e), 10.0 * expect);
        const bool arrived = tr.reason == Termination::PoleApproach ||
                             (tr.reason == Termination::StepCollapse && tr.pole_hit == 0);
        if (!arrived) {
            res.detail = std::string("radial geodesic did not reach the pole: ") + to_string(tr.reason);
            res.value = INFINITY;
            return res;
        }
        // quadrature along the trace, then the remaining piece of the ray below the pole floor
        double len = g_length(tr, tr.t_begin(), tr.t_end()) +
                     std::pow(std::abs(standard_position(tr.samples.back().state)), m) / m;
        lo = std::min(lo, len);
        hi = std::max(hi, len);
        worst = std::max(worst, std::abs(len - expect));
    }
    res.value = hi - lo;
    res.passed = res.value <= tol && worst <= tol;
    res.detail = std::to_string(directions) + " directions, expected " + num(expect) + ", worst deviation " + num(worst);
    return res;
}

CheckResult check_diameter_bound(double rho, std::uint64_t seed, int pairs) {
    CheckResult res{"diameter bound rho=" + num(rho), false, 0, 0, {}};
    const auto conn = lone_pole(rho);
    const double bound = 2.0 / (rho + 1.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0, 1);
    boost::math::quadrature::tanh_sinh<double> ts;
    auto radial = [&](cplx z) {
        cplx e = z / std::abs(z);
        return ts.integrate([&](double s) { return conn.density(Chart::Standard, s * e); }, 0.0, std::abs(z));
    };
    double excess = -INFINITY, longest = 0;
    for (int k = 0; k < pairs; ++k) {
        cplx z1 = std::polar(std::sqrt(U(rng)), 2 * kPi * U(rng));
        cplx z2 = std::polar(std::sqrt(U(rng)), 2 * kPi * U(rng));
        double w = radial(z1) + radial(z2);
        longest = std::max(longest, w);
        excess = std::max(excess, w - bound);
    }
    res.value = excess;
    res.passed = excess <= 1e-12 * bound;
    res.detail = std::to_string(pairs) + " pairs, longest witness " + num(longest) + " of bound " + num(bound);
    return res;
}

CheckResult check_self_intersection(double rho, std::uint64_t seed, int traces) {
    CheckResult res{"self intersection rho=" + num(rho), false, 0, 0, {}};
    const auto conn = lone_pole(rho);
    const double m = rho + 1.0;
    const double delta0 = self_intersection_radius(rho, 1.0);
    const double tau0 = m * delta0;  // g-distance tau/m at the vertical point i tau
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0, 1);
    int misses = 0;
    double deepest = INFINITY;
    for (int k = 0; k < traces; ++k) {
        double tau = (0.35 + 0.6 * U(rng)) * tau0;
        auto tr = horizontal(conn, rho, 2 * kPi * U(rng), tau);
        double closest = INFINITY;
        for (const auto& s : tr.samples)
            closest = std::min(closest, std::pow(std::abs(standard_position(s.state)), m) / m);
        deepest = std::min(deepest, closest);
        if (tr.reason != Termination::TimeLimit || closest >= delta0 || self_intersections(tr, 1).empty()) ++misses;
    }
    res.value = misses;
    res.passed = misses == 0;
    res.detail = "delta0 " + num(delta0) + ", " + std::to_string(traces) + " geodesics, closest g-distance " + num(deepest);
    return res;
}

CheckResult check_wide_gap_disjoint(double rho, std::uint64_t seed, int pairs) {
    CheckResult res{"wide gap disjoint rho=" + num(rho), false, 0, 0, {}};
    const auto conn = lone_pole(rho);
    const double limit = kPi / (rho + 1.0);
    if (2 * kPi - limit <= limit + 0.1) {
        res.passed = true;
        res.detail = "no gap above pi/(rho+1) exists";
        return res;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0, 1);
    int crossing = 0, flagged = 0;
    for (int k = 0; k < pairs; ++k) {
        double a1 = 2 * kPi * U(rng);
        double gap = limit + 0.05 + (2 * kPi - 2 * limit - 0.1) * U(rng);
        double a2 = a1 + gap;
        if (must_cross(rho, a1, a2)) ++flagged;
        const double tau = floor_height(rho, 1e-3);
        auto t1 = horizontal(conn, rho, a1, tau), t2 = horizontal(conn, rho, a2, tau);
        if (!mutual_intersections(standard_polyline(t1), standard_polyline(t2), 1).empty()) ++crossing;
    }
    res.value = crossing;
    res.passed = crossing == 0 && flagged == 0;
    res.detail = std::to_string(pairs) + " pairs, gap above " + num(limit) + ", must_cross flagged " + std::to_string(flagged);
    return res;
}

CheckResult check_must_cross(double rho, std::uint64_t seed, int pairs) {
    CheckResult res{"must cross rho=" + num(rho), false, 0, double(pairs), {}};
    const auto conn = lone_pole(rho);
    const double limit = std::min(kPi / (rho + 1.0), kPi);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0, 1);
    int crossing = 0, flagged = 0;
    for (int k = 0; k < pairs; ++k) {
        double a1 = 2 * kPi * U(rng);
        double gap = (U(rng) < 0.5 ? -1 : 1) * (0.1 + (limit - 0.2) * U(rng));
        double a2 = a1 + gap;
        if (!must_cross(rho, a1, a2)) continue;
        ++flagged;
        const double tau = floor_height(rho, 1e-4);
        auto t1 = horizontal(conn, rho, a1, tau), t2 = horizontal(conn, rho, a2, tau);
        if (!mutual_intersections(standard_polyline(t1), standard_polyline(t2), 1).empty()) ++crossing;
    }
    res.value = crossing;
    res.passed = flagged == pairs && crossing == pairs;
    res.detail = std::to_string(crossing) + "/" + std::to_string(flagged) + " flagged pairs cross";
    return res;
}

CheckResult check_chart_polygons(const std::vector<double>& residues, std::uint64_t seed, int count, double tol) {
    CheckResult res{"chart polygons", false, 0, tol, {}};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0, 1);
    for (int n = 0; n < count; ++n) {
        double rho = residues.empty() ? -0.5 + 3.5 * U(rng) : residues[n % residues.size()];
        double m = rho + 1;
        double v0 = (0.1 + 0.85 * U(rng)) * std::min(kPi / m, 2 * kPi);
        double alpha = 2 * kPi * U(rng);
        int k = 2 + int(U(rng) * 4);
        std::vector<cplx> u;
        for (int j = 0; j < k; ++j) {
            double ang = (j == 0) ? 0.0 : (j == k - 1 ? m * v0 : m * v0 * (j + 0.3 * U(rng)) / (k - 1));
            u.push_back(std::polar(0.2 + 0.7 * U(rng), ang));
        }
        auto conn = lone_pole(rho);
        auto ch = adapted_chart(conn, SpherePoint::finite(0));
        for (auto& x : u) x *= std::pow(ch.radius, m) * 0.9;
        // built in the adapted coordinate, measured back in z
        auto poly = chart_polygon(rho, ch.radius, alpha, u);
        for (auto& s : poly.sides) {
            for (auto& p : s.points) p = ch.inverse(p);
            s.start_tangent /= ch.xi(s.points.front());
            s.end_tangent /= ch.xi(s.points.back());
        }
        for (auto& v : poly.vertices)
            if (v.kind == VertexKind::Regular) v.location = SpherePoint::finite(ch.inverse(v.location.z()));
        measure_polygon(poly, &conn);
        res.value = std::max(res.value, check_chart_polygon(ch, poly));
    }
    res.passed = res.value <= tol;
    res.detail = std::to_string(count) + " polygons";
    if (!residues.empty()) {
        res.detail += ", residues";
        for (double r : residues) res.detail += " " + num(r);
    }
    return res;
}

CheckResult check_circle_identity() {
    CheckResult res{"circle identity", false, 0, 0, {}};
    auto conn = build_connection({pole(0, -1), pole_at_infinity(-1)});
    auto tr = trace(conn, make_state(conn, 1.0, cplx(0, 1)), 2 * kPi);
    GeodesicPolygon poly;
    poly.sides.push_back(side_from_trajectory(tr));
    auto enc = enclosed_residues(conn, poly);
    res.value = check_p1_formula(conn, poly);
    res.passed = res.value == 0.0 && enc.size() == 1 && enc[0] == -1.0;
    res.detail = "enclosed residues " + std::to_string(enc.size()) + (enc.size() == 1 ? " (" + num(enc[0]) + ")" : "");
    return res;
}

CheckResult check_two_gon(double tol) {
    CheckResult res{"two-gon identity", false, 0, tol, {}};
    auto conn = build_connection({pole(-1, 0.5), pole(1, 0.5), pole_at_infinity(-3)});
    auto fwd = trace(conn, make_state(conn, 0.0, 1.0), 10.0);
    auto bwd = trace(conn, make_state(conn, 0.0, -1.0), 10.0);
    if (fwd.reason != Termination::PoleApproach || bwd.reason != Termination::PoleApproach) {
        res.value = INFINITY;
        res.detail = "saddle connection did not reach both poles";
        return res;
    }
    PolygonSide ab;
    auto pb = side_from_trajectory(bwd), pf = side_from_trajectory(fwd);
    ab.points.assign(pb.points.rbegin(), pb.points.rend());
    ab.points.insert(ab.points.end(), pf.points.begin() + 1, pf.points.end());
    ab.start_tangent = 1.0;
    ab.end_tangent = 1.0;
    PolygonSide ba{{ab.points.rbegin(), ab.points.rend()}, -1.0, -1.0};
    GeodesicPolygon poly;
    poly.sides = {ab, ba};
    poly.vertices = {{SpherePoint::finite(-1.0), VertexKind::Pole, 0.5, 0},
                     {SpherePoint::finite(1.0), VertexKind::Pole, 0.5, 0}};
    poly.region = Region::Unbounded;
    measure_polygon(poly, &conn);
    res.value = check_two_gon(conn, poly);
    res.passed = res.value <= tol;
    res.detail = "vertex angles " + num(poly.vertices[0].angle) + ", " + num(poly.vertices[1].angle);
    return res;
}

std::vector<CheckResult> verify_local(const std::vector<double>& residues, std::uint64_t seed) {
    std::vector<CheckResult> out;
    for (std::size_t i = 0; i < residues.size(); ++i) {
        double rho = residues[i];
        std::uint64_t s = seed + 1000 * i;
        if (!(rho > -1.0)) {
            out.push_back({"residue " + num(rho), false, rho, -1, "local checks need residues above -1"});
            continue;
        }
        out.push_back(check_closed_form(rho, s));
        out.push_back(check_critical_lengths(rho, s + 1));
        out.push_back(check_diameter_bound(rho, s + 2));
        if (rho < -0.5) out.push_back(check_self_intersection(rho, s + 3));
        if (rho > 0.0) out.push_back(check_wide_gap_disjoint(rho, s + 4));
        out.push_back(check_must_cross(rho, s + 5, 20));
    }
    return out;
}

std::vector<CheckResult> verify_teichmuller(const FuchsianConnection& conn, std::uint64_t seed) {
    std::vector<double> residues;
    for (const auto& p : conn.poles())
        if (p.residue.imag() == 0.0 && p.residue.real() > -1.0 && p.residue.real() != 0.0 &&
            std::find(residues.begin(), residues.end(), p.residue.real()) == residues.end())
            residues.push_back(p.residue.real());
    return {check_chart_polygons(residues, seed), check_circle_identity(), check_two_gon()};
}

std::vector<CheckResult> verify_saddles(const FuchsianConnection& conn) {
    CheckResult stable{"saddle search grid", false, 0, 1e-6, {}};
    CheckResult simple{"saddle arcs simple", false, 0, 0, {}};
    auto fine = saddle_connection_search(conn);
    SaddleSearchOptions half;
    half.directions = SaddleSearchOptions{}.directions / 2;
    auto coarse = saddle_connection_search(conn, half);
    bool matched = fine.size() == coarse.size();
    for (const auto& a : fine) {
        double best = INFINITY;
        for (const auto& b : coarse)
            if (a.from == b.from && a.to == b.to)
                best = std::min(best, std::abs(std::remainder(a.launch_angle - b.launch_angle, 2 * kPi)));
        stable.value = std::max(stable.value, best);
        if (!polyline_intersections(a.path, 1).empty()) simple.value += 1;
    }
    stable.passed = matched && stable.value <= stable.tolerance;
    stable.detail = std::to_string(fine.size()) + " connections, " + std::to_string(coarse.size()) + " on the half grid";
    for (const auto& a : fine) {
        auto name = [&](int j) {
            const auto& l = conn.poles()[j].location;
            return l.is_infinity() ? std::string("inf") : num(l.z().real()) + (l.z().imag() ? "," + num(l.z().imag()) : "");
        };
        stable.detail += "; " + name(a.from) + " -> " + name(a.to) + " length " + num(a.g_length);
    }
    simple.passed = simple.value == 0;
    simple.detail = std::to_string(fine.size()) + " arcs checked";
    return {stable, simple};
}

std::string format_checks(const std::vector<CheckResult>& checks) {
    std::ostringstream os;
    os << std::setprecision(6);
    for (const auto& c : checks)
        os << (c.passed ? "PASS " : "FAIL ") << c.name << ": value " << c.value << ", tolerance " << c.tolerance
           << (c.detail.empty() ? "" : ", " + c.detail) << "\n";
    return os.str();
}

}  // namespace connexion
