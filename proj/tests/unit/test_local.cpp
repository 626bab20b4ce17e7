#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "connexion/errors.hpp"
#include "connexion/local.hpp"
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

void check_reproduces(double rho, double r, cplx z0, cplx v0) {
    auto p = local_params(rho, r, z0, v0);
    auto [z, v] = closed_form(p, 0.0);
    CHECK(std::abs(z - z0) <= 1e-12 * std::abs(z0));
    CHECK(std::abs(v - v0) <= 1e-12 * std::abs(v0));
    CHECK(p.b.imag() >= 0.0);
    if (rho != -1.0) CHECK(p.a.imag() == 0.0);
}

}  // namespace

TEST_CASE("closed form parameters") {
    auto p = local_params(1.0, 1.0, 1.0, 1.0);
    CHECK(std::abs(p.alpha) < 1e-15);
    CHECK(std::abs(p.a - cplx(2)) < 1e-15);
    CHECK(std::abs(p.b - cplx(1)) < 1e-15);

    auto c = local_params(-1.0, 2.0, 2.0, cplx(0, 2));
    CHECK(std::abs(c.a - cplx(1)) < 1e-15);
    for (double t : {0.0, 0.7, 3.0}) CHECK(std::abs(closed_form(c, t).first - std::polar(2.0, t)) < 1e-14);

    auto k = local_params(0.5, 1.0, 0.5, 0.3);
    CHECK(k.b.imag() == 0.0);
    CHECK(is_critical(k));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ang(0, 2 * pi), rad(0.05, 0.95);
    for (double rho : {-0.9, -0.5, 0.0, 0.5, 1.0, 2.5, -1.0})
        for (int n = 0; n < 50; ++n) check_reproduces(rho, 1.0, std::polar(rad(rng), ang(rng)), std::polar(rad(rng) * 3, ang(rng)));
    CHECK(code_of([] { local_params(0.5, 1, 0.0, 1.0); }) == Errc::AtPole);
    CHECK(code_of([] { local_params(0.5, 1, 0.5, 0.0); }) == Errc::ZeroVelocity);
    CHECK(code_of([] { local_params(-1.0, 1, 2.0, 1.0); }) == Errc::OutOfDomain);
}

TEST_CASE("chi values and criticality") {
    CHECK(std::abs(chi(1, 0, 1, 4.0) - cplx(2)) < 1e-15);
    CHECK(std::abs(chi(-1, 0.3, 1.5, 0.0) - cplx(1.5)) < 1e-15);
    CHECK(std::abs(chi(0.5, pi / 2, 1, 1.0) - cplx(0, 1)) < 1e-15);
    CHECK(code_of([] { chi(0.5, 0, 1, cplx(1, -0.5)); }) == Errc::OutOfDomain);
    LocalGeodesicParams p;
    p.b = 1.0;
    CHECK(is_critical(p));
    p.b = cplx(0, 1);
    CHECK_FALSE(is_critical(p));
    p.b = cplx(1, 1e-14);
    CHECK(is_critical(p, 1e-12));
}

TEST_CASE("lengths and bounds") {
    CHECK(critical_length(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(critical_length(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
    boost::math::quadrature::tanh_sinh<double> ts;
    double q = ts.integrate([](double s) { return std::pow(s, -0.5); }, 0.0, 0.25);
    CHECK(std::abs(critical_length(-0.5, 0.25) - q) < 1e-12);
    CHECK(diameter_bound(0, 1) == doctest::Approx(2.0));
    CHECK(diameter_bound(1, 1) == doctest::Approx(1.0));
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ang(0, 2 * pi), rad(0, 1);
    for (int n = 0; n < 200; ++n) {
        double r1 = rad(rng), r2 = rad(rng);
        double witness = ts.integrate([](double s) { return std::pow(s, 0.5); }, 0.0, r1) +
                         ts.integrate([](double s) { return std::pow(s, 0.5); }, 0.0, r2);
        CHECK(witness <= diameter_bound(0.5, 1.0));
    }
}

TEST_CASE("crossing predicate") {
    CHECK(must_cross(0.5, 0, 1.0));
    CHECK_FALSE(must_cross(0.5, 1.3, 1.3));
    CHECK_FALSE(must_cross(0.5, 0, 2.2));
    CHECK(must_cross(0.5, 0.1, 2 * pi - 0.1));
    DirectionInterval a{0.5, 0.5, 1.5};
    CHECK(a.single_arc());
    CHECK(a.contains(1.0));
    CHECK_FALSE(a.contains(2.0));
    DirectionInterval b{0.5, 0.5, 5.8};
    CHECK_FALSE(b.single_arc());
    CHECK(b.contains(0.2));
    CHECK(b.contains(6.0));
    CHECK_FALSE(b.contains(3.0));
}

TEST_CASE("self intersection radius") {
    double d = self_intersection_radius(-0.9, 1.0);
    // threshold height of the chord whose opening angle equals 2 pi (rho + 1)
    CHECK(std::abs(d - std::cos(0.1 * pi) / 0.1) < 1e-9);
    CHECK(self_intersection_radius(-0.6, 1.0) > 0);
    CHECK(code_of([] { self_intersection_radius(-0.4, 1.0); }) == Errc::OutOfRange);
}

TEST_CASE("adapted chart for a lone pole is a rescaling") {
    auto conn = build_connection({pole(0, 0.5)});
    auto ch = adapted_chart(conn, SpherePoint::finite(0));
    double k0 = std::pow(1.0 / 1.5, 1.0 / 1.5);
    for (cplx z : {cplx(0.3, 0.1), cplx(-0.2, 0.5)}) CHECK(std::abs(ch.forward(z) - z * k0) < 1e-15);
    CHECK(code_of([&] { adapted_chart(build_connection({pole(0, -1)}), SpherePoint::finite(0)); }) == Errc::ResonantOrLow);
}

TEST_CASE("taylor coefficients of exp(F) for constant holomorphic part") {
    // rho = 0 at the origin and another pole far away: h is nearly constant
    // so test the recursion directly against exp of the series
    auto conn = build_connection({pole(0, 0.0001), pole(3, 0.7)});
    auto ch = adapted_chart(conn, SpherePoint::finite(0), 12);
    // F = 0.7 log(1 - z/3), so exp(F) = (1 - z/3)^0.7
    double binom = 1.0;
    for (int n = 0; n <= 12; ++n) {
        CHECK(std::abs(ch.taylor_c[n] - cplx(binom * std::pow(-1.0 / 3, n))) < 1e-14);
        binom *= (0.7 - n) / (n + 1);
    }
}

TEST_CASE("pullback residual on a two-pole connection") {
    auto conn = build_connection({pole(0, 0.5), pole(1, 0.5), pole_at_infinity(-3)});
    auto ch = adapted_chart(conn, SpherePoint::finite(0), 20);
    CHECK(ch.zeta_radius == doctest::Approx(0.25));
    // independent grid: transformation rule evaluated with finite differences of w
    double worst = 0;
    for (int k = 0; k < 64; ++k)
        for (double fr : {0.3, 0.6, 0.95}) {
            cplx z = std::polar(0.25 * fr, 2 * pi * k / 64 + 0.01);
            double h = 1e-5;
            cplx w = ch.forward(z);
            cplx x = (ch.forward(z + h) - ch.forward(z - h)) / (2 * h);
            cplx dx = (ch.forward(z + h) - 2.0 * w + ch.forward(z - h)) / (h * h);
            cplx eta = (conn.local_rep(Chart::Standard, z) - dx / x) / x;
            worst = std::max(worst, std::abs(eta - 0.5 / w) * std::abs(w));
            CHECK(std::abs(ch.pulled_rep(z) - 0.5 / w) <= 1e-10);
        }
    CHECK(worst < 1e-4);
    CHECK(ch.residual <= 1e-10);
    CHECK(std::abs(ch.inverse(ch.forward(cplx(0.1, 0.05))) - cplx(0.1, 0.05)) < 1e-14);
    CHECK(ch.diagnostics().find("N=20") != std::string::npos);
}

TEST_CASE("traced geodesics follow the closed form in the adapted chart") {
    auto c1 = build_connection({pole(0, 0.5), pole(1, 0.5), pole_at_infinity(-3)});
    auto c2 = build_connection({pole(0, -1.5), pole(cplx(1, 0.5), -0.8)});
    for (auto [conn, where] : {std::pair{c1, SpherePoint::finite(0)}, std::pair{c2, SpherePoint::infinity()}}) {
        auto ch = adapted_chart(conn, where);
        cplx w0 = std::polar(0.5 * ch.radius, 0.4);
        cplx dw0 = std::polar(0.3, 2.5);
        auto st = ch.push(conn, w0, dw0);
        auto p = local_params(ch.rho, ch.radius, w0, dw0);
        auto tr = trace(conn, st, 5.0);
        double worst = 0;
        int used = 0;
        for (const auto& s : tr.samples) {
            auto [w, dw] = ch.pull(s.state);
            if (std::abs(w) > 0.9 * ch.radius) break;
            worst = std::max(worst, std::abs(w - closed_form(p, s.t).first));
            ++used;
        }
        CHECK(used > 5);
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("entry directions") {
    auto conn = build_connection({pole(0, 0.5)});
    auto ch = adapted_chart(conn, SpherePoint::finite(0));
    auto ray = ch.push(conn, std::polar(0.5 * ch.radius, 0.3), std::polar(1.0, 0.3 + pi));
    CHECK(std::abs(entry_direction(ch, ray) - 0.3) < 1e-12);
    for (double th : {0.2, 1.1, 2.0}) {
        cplx w0 = std::polar(0.4 * ch.radius, 1.0), dw0 = std::polar(1.0, 3.0);
        auto a = entry_direction(ch, ch.push(conn, w0, dw0));
        auto b = entry_direction(ch, ch.push(conn, w0 * std::polar(1.0, th), dw0 * std::polar(1.0, th)));
        CHECK(std::abs(wrap_angle(b - a - th)) < 1e-12);
    }
    auto circ = build_connection({pole(0, -1)});
    CHECK_THROWS(adapted_chart(circ, SpherePoint::finite(0)));
    // outside the chart
    CHECK(code_of([&] { entry_direction(ch, ch.push(conn, 0.5 * ch.radius, 1.0)), entry_direction(ch, make_state(conn, 5.0, 1.0)); }) ==
          Errc::SegmentOutsideChart);
}

TEST_CASE("pole passage matches a direct trace") {
    auto conn = build_connection({pole(0, -0.8), pole(2, 0.3), pole_at_infinity(-1.5)});
    auto chart = adapted_chart(conn, SpherePoint::finite(0));
    for (double miss : {0.3, 0.1, 1e-2}) {
        auto st = make_state(conn, 0.05, std::polar(1.0, pi + miss));
        auto pass = pole_passage(conn, chart, st, chart.radius * std::pow(0.5, 0.2));
        REQUIRE(pass);
        TraceOptions o;
        o.pole_floor = 1e-12;
        auto tr = trace(conn, st, 1.1 * pass->duration, o);
        REQUIRE(tr.t_end() >= pass->duration);
        double worst = 0;
        for (int k = 0; k <= 20; ++k) {
            double tau = pass->duration * k / 20;
            auto a = pass->eval(tau), b = state_at(tr, tau);
            worst = std::max(worst, std::abs(standard_position(a) - standard_position(b)));
            CHECK(std::abs(first_integral_of(a) - first_integral_of(st)) <= 1e-9 * std::abs(first_integral_of(st)));
        }
        CHECK(worst <= 1e-7);
        CHECK(std::abs(first_integral_of(pass->exit) - first_integral_of(st)) <= 1e-9 * std::abs(first_integral_of(st)));
    }
    // straight in: nothing to pass
    CHECK_FALSE(pole_passage(conn, chart, make_state(conn, 0.05, -1.0), 0.5 * chart.radius));
}
