#include <cmath>
#include <numbers>
#include <random>

#include "connexion/errors.hpp"
#include "connexion/teichmuller.hpp"
#include "doctest.h"

using namespace connexion;
using std::numbers::pi;

namespace {

Errc code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::InvalidArgument;
}

PolygonSide segment(cplx a, cplx b) { return {{a, 0.5 * (a + b), b}, b - a, b - a}; }

}  // namespace

TEST_CASE("regular and pole vertex angles") {
    PolygonVertex v{SpherePoint::finite(0.0), VertexKind::Regular, 0, 0};
    CHECK(measure_internal_angle(segment(-1, 0), segment(0, 1), v) == doctest::Approx(pi));
    CHECK(measure_internal_angle(segment(-1, 0), segment(0, cplx(0, 1)), v) == doctest::Approx(pi / 2));
    PolygonVertex p{SpherePoint::finite(0.0), VertexKind::Pole, 0.5, 0};
    // incoming along the ray arg pi/2, outgoing along arg 0
    CHECK(measure_internal_angle(segment(cplx(0, 1), 0), segment(0, 1), p) == doctest::Approx(pi / 2));
    CHECK(measure_internal_angle(segment(1, 0), segment(0, 1), p) == doctest::Approx(2 * pi));
    CHECK(code_of([&] { measure_internal_angle(segment(-1, 0.1), segment(0, 1), v); }) == Errc::NotIncident);
    PolygonSide bent{{cplx(0, 1), cplx(0.3, 0.5), cplx(0, 0.1), 0.0}, -1, -1};
    CHECK(code_of([&] { measure_internal_angle(bent, segment(0, 1), p); }) == Errc::NotCriticalAtPole);
}

TEST_CASE("euclidean triangle in a residue 0 chart") {
    auto poly = chart_polygon(0.0, 2.0, 0.0, {1.0, std::polar(1.0, pi / 3)});
    measure_polygon(poly);
    CHECK(poly.vertices[0].angle == doctest::Approx(pi / 3));
    CHECK(poly.vertices[1].angle == doctest::Approx(pi / 3));
    CHECK(poly.vertices[2].angle == doctest::Approx(pi / 3));
    auto conn = build_connection({pole(0, 0.0001)});
    auto ch = adapted_chart(conn, SpherePoint::finite(0));
    ch.rho = 0.0;
    CHECK(check_chart_polygon(ch, poly) < 1e-12);
}

TEST_CASE("chart polygons satisfy the pole-vertex identity") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> U(0, 1);
    double worst = 0;
    for (int n = 0; n < 50; ++n) {
        double rho = -0.5 + 3.5 * U(rng);
        double m = rho + 1;
        double v0 = (0.1 + 0.85 * U(rng)) * pi / m;
        double alpha = 2 * pi * U(rng);
        int k = 2 + int(U(rng) * 4);
        std::vector<cplx> u;
        for (int j = 0; j < k; ++j) {
            double ang = (j == 0) ? 0.0 : (j == k - 1 ? m * v0 : m * v0 * (j + 0.3 * U(rng)) / (k - 1));
            u.push_back(std::polar(0.2 + 0.7 * U(rng), ang));
        }
        auto conn = build_connection({pole(0, rho)});
        auto ch = adapted_chart(conn, SpherePoint::finite(0));
        double r = ch.radius;
        for (auto& x : u) x *= std::pow(r, m) * 0.9;
        // the polygon lives in the adapted coordinate w; map it back to z
        auto poly = chart_polygon(rho, r, alpha, u);
        for (auto& s : poly.sides) {
            for (auto& p : s.points) p = ch.inverse(p);
            s.start_tangent /= ch.xi(s.points.front());
            s.end_tangent /= ch.xi(s.points.back());
        }
        for (auto& v : poly.vertices)
            if (v.kind == VertexKind::Regular) v.location = SpherePoint::finite(ch.inverse(v.location.z()));
        measure_polygon(poly, &conn);
        CHECK(poly.vertices[0].angle == doctest::Approx(v0).epsilon(1e-9));
        double res = check_chart_polygon(ch, poly);
        worst = std::max(worst, res);

        // a global rotation of the chart leaves the residual unchanged
        auto rotated = chart_polygon(rho, r, alpha + 0.7, u);
        measure_polygon(rotated);
        CHECK(std::abs(check_chart_polygon(ch, rotated) - check_chart_polygon(ch, [&] {
                  auto p = chart_polygon(rho, r, alpha, u);
                  measure_polygon(p);
                  return p;
              }())) < 1e-9);
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("unit circle around a residue -1 pole") {
    auto conn = build_connection({pole(0, -1), pole_at_infinity(-1)});
    auto tr = trace(conn, make_state(conn, 1.0, cplx(0, 1)), 2 * pi);
    GeodesicPolygon poly;
    poly.sides.push_back(side_from_trajectory(tr));
    auto enc = enclosed_residues(conn, poly);
    REQUIRE(enc.size() == 1);
    CHECK(enc[0] == -1.0);
    CHECK(check_p1_formula(conn, poly) == 0.0);
    poly.region = Region::Unbounded;
    auto enc2 = enclosed_residues(conn, poly);
    REQUIRE(enc2.size() == 1);
    CHECK(enc2[0] == -1.0);  // infinity
}

TEST_CASE("general and regular forms") {
    PartTopology t;
    t.enclosed = {-1.0};
    CHECK(check_general_formula(t, {}) == 0.0);
    std::vector<PolygonVertex> vs(3);
    std::vector<double> eps;
    for (double a : {1.0, 1.3, 0.9}) {
        vs[eps.size()].angle = a;
        eps.push_back(pi - a);
    }
    t.enclosed = {0.3};
    CHECK(std::abs(check_general_formula(t, vs) - check_regular_formula(t, eps)) < 1e-14);
    t.m_f = 2;
    t.enclosed = {};
    CHECK(check_general_formula(t, {}) == doctest::Approx(0.0));
}

TEST_CASE("slit two-gon along the real segment") {
    auto conn = build_connection({pole(-1, 0.5), pole(1, 0.5), pole_at_infinity(-3)});
    auto fwd = trace(conn, make_state(conn, 0.0, 1.0), 10.0);
    auto bwd = trace(conn, make_state(conn, 0.0, -1.0), 10.0);
    REQUIRE(fwd.reason == Termination::PoleApproach);
    REQUIRE(bwd.reason == Termination::PoleApproach);
    PolygonSide ab;  // -1 -> 1
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
    CHECK(poly.vertices[0].angle == doctest::Approx(2 * pi));
    CHECK(check_two_gon(conn, poly) <= 1e-9);
    CHECK(check_p1_formula(conn, poly) <= 1e-9);
}

TEST_CASE("shooting connections") {
    auto flat = build_connection({pole_at_infinity(-2)});
    auto s = connect_unique(flat, cplx(0, 0), cplx(1, 1));
    for (auto p : standard_polyline(s.arc)) CHECK(std::abs(p.imag() - p.real()) < 1e-9);

    auto cone = build_connection({pole(0, 1), pole_at_infinity(-3)});
    cplx z1 = std::polar(1.2, pi / 3);
    ConnectOptions o1, o2;
    o2.phase = 0.37;
    o2.directions = 50;
    auto a = connect_unique(cone, 1.0, z1, o1);
    auto b = connect_unique(cone, 1.0, z1, o2);
    CHECK(a.hypothesis_holds);
    CHECK(std::abs(wrap_angle(a.launch_angle - b.launch_angle + pi) - pi) < 1e-6);
    double worst = 0;
    for (double f = 0; f <= 1.0; f += 0.05) {
        cplx pa = standard_position(state_at(a.arc, f * a.arc.t_end()));
        cplx pb = standard_position(state_at(b.arc, f * b.arc.t_end()));
        worst = std::max(worst, std::abs(pa - pb));
    }
    CHECK(worst <= 1e-6);
    // opposite side of the cone: the only geodesic runs through the pole
    CHECK(code_of([&] { connect_unique(cone, 1.0, cplx(0, 1)); }) == Errc::NotFound);

    auto neg = build_connection({pole(cplx(0.5, 0.05), -0.9), pole_at_infinity(-1.1)});
    auto c = connect_unique(neg, 0.0, 1.0);
    CHECK_FALSE(c.hypothesis_holds);
}

TEST_CASE("traced quadrilateral around a positive residue") {
    auto conn = build_connection({pole(0, 0.5), pole_at_infinity(-2.5)});
    std::vector<cplx> q{cplx(1, 0.1), cplx(-0.1, 1.1), cplx(-0.9, 0), cplx(0.1, -1)};
    GeodesicPolygon poly;
    for (std::size_t j = 0; j < q.size(); ++j) {
        poly.vertices.push_back({SpherePoint::finite(q[j]), VertexKind::Regular, 0, 0});
        poly.sides.push_back(side_from_trajectory(connect_unique(conn, q[j], q[(j + 1) % q.size()]).arc));
    }
    measure_polygon(poly, &conn);
    CHECK(check_p1_formula(conn, poly) <= 1e-6);
    auto enc = enclosed_residues(conn, poly);
    REQUIRE(enc.size() == 1);
    CHECK(enc[0] == 0.5);
}
