#include <cmath>
#include <numbers>
#include <random>

#include "connexion/connection.hpp"
#include "connexion/errors.hpp"
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

// residue by trapezoid rule on a small circle
cplx contour_residue(auto&& f, cplx centre, double radius, int n = 2048) {
    cplx acc = 0.0;
    for (int k = 0; k < n; ++k) {
        cplx e = std::polar(1.0, 2 * pi * k / n);
        acc += f(centre + radius * e) * radius * e;
    }
    return acc / double(n);
}

std::vector<cplx> square(cplx c, double half) {
    return {c + cplx(-half, -half), c + cplx(half, -half), c + cplx(half, half), c + cplx(-half, half),
            c + cplx(-half, -half)};
}

}  // namespace

TEST_CASE("residue sum completion and gate") {
    auto a = build_connection({pole(0, -1), pole_at_infinity(-1)});
    CHECK(a.poles().size() == 2);
    auto b = build_connection({pole(0, 1), pole(1, 0.5)});
    REQUIRE(b.has_infinity_pole());
    CHECK(b.residue_at_infinity() == cplx(-3.5));
    CHECK(b.poles().back().location.is_infinity());
    CHECK(code_of([] { build_connection({pole(0, -1), pole_at_infinity(-0.5)}); }) == Errc::SumMismatch);
    CHECK(code_of([] { build_connection({pole(0, -1), pole(0, 0.5)}); }) == Errc::DuplicatePole);
    CHECK(code_of([] { build_connection({pole(0, cplx(-1, 0.1))}); }) == Errc::NonRealResidue);
    BuildOptions cx;
    cx.allow_complex = true;
    auto c = build_connection({pole(0, cplx(-1, 0.1))}, cx);
    CHECK(c.residue_at_infinity() == cplx(-1, -0.1));
    CHECK_FALSE(c.real_residues());
}

TEST_CASE("minimal form drops a zero residue at infinity") {
    BuildOptions m;
    m.minimal_form = true;
    auto c = build_connection({pole(0, -2)}, m);
    CHECK_FALSE(c.has_infinity_pole());
    CHECK(c.poles().size() == 1);
    auto d = build_connection({pole(0, -2)});
    CHECK(d.has_infinity_pole());
}

TEST_CASE("sum property on random connections") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int n = 0; n < 100; ++n) {
        std::vector<PoleSpec> ps;
        int m = 1 + int(rng() % 5);
        for (int j = 0; j < m; ++j) ps.push_back(pole({u(rng), u(rng)}, u(rng)));
        auto c = build_connection(ps);
        CHECK(std::abs(c.residue_sum() + 2.0) <= 1e-12);
    }
}

TEST_CASE("local representation in both charts") {
    auto a = build_connection({pole(0, -1), pole_at_infinity(-1)});
    CHECK(std::abs(a.local_rep(Chart::Standard, 2.0) - cplx(-0.5)) < 1e-15);
    CHECK(std::abs(a.local_rep(Chart::Infinity, 0.5) - cplx(-2.0)) < 1e-15);
    auto flat = build_connection({pole_at_infinity(-2)});
    CHECK(flat.local_rep(Chart::Standard, cplx(3, 4)) == cplx(0));
    CHECK(code_of([&] { a.local_rep(Chart::Standard, 1e-13); }) == Errc::EvalAtPole);
    CHECK(code_of([&] { a.local_rep(Chart::Infinity, cplx(0, 1e-13)); }) == Errc::EvalAtPole);
}

TEST_CASE("infinity chart agrees with the transformation rule and carries the forced residue") {
    auto c = build_connection({pole({0.3, -0.2}, 0.7), pole({-1, 1}, -0.4), pole({2, 0.5}, 1.3)});
    auto f = [&](cplx z) { return c.local_rep(Chart::Standard, z); };
    for (cplx w : {cplx(0.05, 0.02), cplx(-0.08, 0.01), cplx(0.01, -0.09)}) {
        cplx rule = -f(1.0 / w) / (w * w) - 2.0 / w;
        CHECK(std::abs(c.local_rep(Chart::Infinity, w) - rule) < 1e-9 * std::abs(rule));
    }
    cplx res = contour_residue([&](cplx w) { return c.local_rep(Chart::Infinity, w); }, 0.0, 0.05);
    CHECK(std::abs(res - c.residue_at_infinity()) < 1e-8);
    CHECK(std::abs(c.residue_at_infinity() - cplx(-2 - 0.7 + 0.4 - 1.3)) < 1e-15);
}

TEST_CASE("primitive differentiates to the local representation") {
    auto c = build_connection({pole({0.3, -0.2}, 0.7), pole({-1, 1}, -0.4)});
    for (Chart ch : {Chart::Standard, Chart::Infinity}) {
        cplx x(0.21, 0.13);
        double h = 1e-6;
        cplx d = (c.primitive(ch, x + h) - c.primitive(ch, x - h)) / (2 * h);
        CHECK(std::abs(d - c.local_rep(ch, x)) < 1e-7);
        CHECK(std::abs(c.density(ch, x) - std::exp(c.primitive(ch, x).real())) < 1e-12);
    }
}

TEST_CASE("monodromy examples") {
    auto circle = [](int n) {
        std::vector<cplx> v;
        for (int k = 0; k <= n; ++k) v.push_back(std::polar(1.0, 2 * pi * k / n));
        v.back() = v.front();
        return v;
    };
    auto a = build_connection({pole(0, -1)});
    CHECK(std::abs(monodromy_of_loop(a, {circle(64)}) - cplx(1)) < 1e-12);
    auto b = build_connection({pole(0, 0.5)});
    CHECK(std::abs(monodromy_of_loop(b, {circle(64)}) - cplx(-1)) < 1e-12);
    auto q = build_connection({pole(0, 0.25), pole(0.5, 0.25)});
    cplx m = monodromy_of_loop(q, {square(0.25, 1.0)});
    CHECK(std::abs(m - cplx(-1)) < 1e-12);
    cplx one = monodromy_of_loop(q, {square(0.0, 0.2)});
    CHECK(std::abs(one - cplx(0, 1)) < 1e-12);
    CHECK(std::abs(monodromy_of_loop(q, {square(0.0, 0.2), true}) - cplx(0, -1)) < 1e-12);
    CHECK(code_of([&] { monodromy_of_loop(a, {square(1.0, 1.0)}); }) == Errc::LoopThroughPole);
}

TEST_CASE("winding numbers survive degenerate rays and refinement") {
    // vertex exactly on the first ray direction
    std::vector<cplx> tri{cplx(1, 0), cplx(-1, 1), cplx(-1, -1), cplx(1, 0)};
    CHECK(winding_number(tri, 0.0) == 1);
    std::vector<cplx> twice;
    for (int k = 0; k <= 40; ++k) twice.push_back(std::polar(1.0, 4 * pi * k / 40));
    twice.back() = twice.front();
    CHECK(winding_number(twice, 0.0) == 2);
    CHECK(winding_number(twice, 3.0) == 0);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2, 2);
    auto c = build_connection({pole({0.1, 0.2}, 0.37), pole({-0.6, -0.3}, -0.81), pole({1.1, -0.9}, 0.29)});
    for (int n = 0; n < 30; ++n) {
        std::vector<cplx> loop;
        for (int k = 0; k < 6; ++k) loop.push_back({u(rng), u(rng)});
        loop.push_back(loop.front());
        std::vector<cplx> fine;
        for (std::size_t i = 0; i + 1 < loop.size(); ++i)
            for (int s = 0; s < 7; ++s) fine.push_back(loop[i] + (loop[i + 1] - loop[i]) * (s / 7.0));
        fine.push_back(loop.front());
        try {
            cplx m1 = monodromy_of_loop(c, {loop});
            cplx m2 = monodromy_of_loop(c, {fine});
            CHECK(std::abs(m1 - m2) < 1e-12);
        } catch (const Error&) {
        }
    }
}

TEST_CASE("real periods iff unit monodromy on random loops") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-2, 2);
    BuildOptions cx;
    cx.allow_complex = true;
    auto real = build_connection({pole({0.2, 0.1}, 0.45), pole({-0.7, 0.4}, -1.3)}, cx);
    auto cmplx = build_connection({pole({0.2, 0.1}, cplx(0.45, 0.2)), pole({-0.7, 0.4}, -1.3)}, cx);
    CHECK(real.real_residues());
    CHECK_FALSE(cmplx.real_residues());
    int unit_real = 0, unit_complex = 0, nontrivial = 0;
    for (int n = 0; n < 100; ++n) {
        std::vector<cplx> loop;
        for (int k = 0; k < 5; ++k) loop.push_back({u(rng), u(rng)});
        loop.push_back(loop.front());
        cplx a = monodromy_of_loop(real, {loop});
        cplx b = monodromy_of_loop(cmplx, {loop});
        unit_real += std::abs(std::abs(a) - 1.0) <= 1e-9;
        if (winding_number(loop, {0.2, 0.1}) != 0) {
            ++nontrivial;
            unit_complex += std::abs(std::abs(b) - 1.0) <= 1e-9;
        }
    }
    CHECK(unit_real == 100);
    CHECK(nontrivial > 0);
    CHECK(unit_complex == 0);
}

TEST_CASE("k-differential import") {
    auto q = from_k_differential({{0.0, 1}}, {}, 2);
    CHECK(q.finite_residues()[0] == cplx(0.5));
    CHECK(q.residue_at_infinity() == cplx(-2.5));
    auto flat = from_k_differential({}, {}, 2);
    CHECK(flat.finite_residues().empty());
    CHECK(flat.residue_at_infinity() == cplx(-2));
    auto d = from_k_differential({}, {{0.0, 2}}, 1);
    CHECK(d.finite_residues()[0] == cplx(-2));
    CHECK(d.residue_at_infinity() == cplx(0));
    CHECK(code_of([] { from_k_differential({{0.0, 0}}, {}, 2); }) == Errc::InvalidOrder);
    CHECK(code_of([] { from_k_differential({{1.0, 1}}, {{1.0, 2}}, 2); }) == Errc::DuplicateRoot);

    // metric agreement: |q|^{1/k} / prod |z - p|^rho is constant
    std::vector<Root> num{{cplx(1, 0), 1}, {cplx(-2, 0.5), 3}};
    std::vector<Root> den{{cplx(0, 1), 2}};
    int k = 3;
    auto c = from_k_differential(num, den, k);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3, 3);
    double lo = 1e300, hi = 0;
    for (int n = 0; n < 100; ++n) {
        cplx z(u(rng), u(rng));
        double qa = std::abs(z - cplx(1, 0)) * std::pow(std::abs(z - cplx(-2, 0.5)), 3) /
                    std::pow(std::abs(z - cplx(0, 1)), 2);
        double ratio = std::pow(qa, 1.0 / k) / c.density(Chart::Standard, z);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    CHECK((hi - lo) / lo <= 1e-9);
}
