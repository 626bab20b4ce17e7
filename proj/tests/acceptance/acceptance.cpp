// Acceptance battery: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "connexion/errors.hpp"
#include "connexion/omega.hpp"
#include "connexion/render.hpp"
#include "connexion/scene.hpp"
#include "connexion/verify.hpp"

using namespace connexion;
using std::numbers::pi;

namespace {

const std::vector<double> kResidues{-0.5, 0.5, 1, 2.5};

struct Outcome {
    bool passed = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) passed = false;
        if (!detail.empty()) detail += "; ";
        detail += (ok ? "" : "FAILED ") + what;
    }
    void take(const CheckResult& c) {
        std::ostringstream os;
        os << c.name << " " << c.value;
        if (!c.detail.empty()) os << " (" << c.detail << ")";
        require(c.passed, os.str());
    }
};

std::string num(double x, const char* f = "%.3g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::string out_dir = ".";

Outcome closed_form() {
    Outcome o;
    for (double rho : kResidues) o.take(check_closed_form(rho, 11, 8, 1e-8));
    return o;
}

Outcome first_integral_drift() {
    Outcome o;
    auto gen = random_real_generator();
    std::mt19937_64 rng(2024);
    double worst = 0, shortest = 1e300;
    for (int i = 0; i < 20; ++i) {
        AuditSample s = gen(rng);
        Trajectory tr = trace(s.conn, s.initial, 50.0);
        worst = std::max(worst, first_integral(tr).max_relative_drift);
        shortest = std::min(shortest, tr.t_end());
    }
    o.require(worst <= 1e-9, "max relative drift " + num(worst) + " over 20 connections, shortest run to t=" +
                                 num(shortest, "%.4g"));
    return o;
}

Outcome circle_and_spiral() {
    Outcome o;
    auto conn = build_connection({pole(0, -1), pole_at_infinity(-1)});
    RenderConfig view;
    view.half_width = 3;

    Classification circle = classify_full(conn, make_state(conn, 1.0, cplx(0, 1)));
    o.require(circle.verdict.tag == OmegaTag::Periodic && std::abs(circle.verdict.period - 2 * pi) <= 1e-6,
              "circle " + describe(circle.verdict, conn) + ", |T - 2pi| " + num(std::abs(circle.verdict.period - 2 * pi)));
    Classification spiral = classify_full(conn, make_state(conn, 1.0, cplx(1, 1)));
    o.require(spiral.verdict.tag == OmegaTag::ConvergesToPole, "spiral " + describe(spiral.verdict, conn));

    RenderScene scene = make_render_scene(view, conn);
    scene.title = "circle and spirals";
    add_trajectory(scene, circle.trajectory, circle.verdict.period);
    add_trajectory(scene, spiral.trajectory);
    add_trajectory(scene, classify_full(conn, make_state(conn, 1.0, cplx(-1, 1))).trajectory);
    add_trajectory(scene, classify_full(conn, make_state(conn, 0.3, cplx(0.15, 1))).trajectory);
    const std::string path = out_dir + "/acceptance_spirals.svg";
    std::ofstream(path) << render_svg(scene);
    o.require(bool(std::ifstream(path)), "portrait written to " + path);
    return o;
}

Outcome residue_gate() {
    Outcome o;
    auto rejected = [](double offset) {
        try {
            build_connection({pole(0, -1), pole(1, 0.25), pole_at_infinity(-1.25 + offset)});
        } catch (const Error& e) {
            return e.code() == Errc::SumMismatch;
        }
        return false;
    };
    o.require(rejected(2e-12) && rejected(-2e-12) && rejected(1e-3), "sums off by 2e-12 and 1e-3 rejected");
    o.require(!rejected(5e-13), "sum off by 5e-13 accepted");
    bool scene_rejected = false;
    try {
        scene_connection(
            parse_scene(R"({"connection": {"poles": [{"at": [0, 0], "residue": -1}, {"at": "inf", "residue": -0.9}]}})"));
    } catch (const Error& e) {
        scene_rejected = e.code() == Errc::SumMismatch;
    }
    o.require(scene_rejected, "scene with sum -1.9 rejected");

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.9, 1.5);
    bool exact = true;
    for (int i = 0; i < 1000; ++i) {
        std::vector<PoleSpec> ps;
        cplx sum = 0;
        for (int j = 0; j < 4; ++j) {
            cplx rho = u(rng);
            ps.push_back(pole(cplx(j, 0.5 * j), rho));
            sum += rho;
        }
        auto conn = build_connection(ps);
        exact = exact && conn.residue_at_infinity() == -2.0 - sum;
    }
    auto dyadic = build_connection({pole(0, 0.25), pole(1, -0.75), pole(2, 1.5)});
    exact = exact && dyadic.residue_at_infinity() == cplx(-3, 0) && dyadic.residue_sum() == cplx(-2, 0);
    o.require(exact, "implied residue at infinity equals -2 minus the finite sum bit for bit on 1000 draws");
    return o;
}

Outcome critical_lengths() {
    Outcome o;
    for (double rho : kResidues) {
        o.take(check_critical_lengths(rho, 21, 100, 1e-9));
        o.take(check_diameter_bound(rho, 22, 1000));
    }
    return o;
}

Outcome local_crossings() {
    Outcome o;
    o.take(check_self_intersection(-0.9, 31, 10));
    o.take(check_wide_gap_disjoint(0.5, 32, 10));
    CheckResult mc = check_must_cross(0.5, 33, 50);
    o.take(mc);
    o.require(mc.value == 50, "must_cross pairs crossing " + num(mc.value) + "/50");
    return o;
}

Outcome teichmuller() {
    Outcome o;
    o.take(check_chart_polygons(kResidues, 41, 50, 1e-6));
    o.take(check_circle_identity());
    o.take(check_two_gon(1e-3));
    return o;
}

Outcome k_differential() {
    Outcome o;
    auto conn = from_k_differential({{0.0, 1}}, {}, 2);
    cplx rho0 = 0;
    for (const auto& p : conn.poles())
        if (!p.location.is_infinity() && p.location.z() == 0.0) rho0 = p.residue;
    o.require(std::abs(rho0 - 0.5) <= 1e-15, "residue at 0 is " + num(rho0.real(), "%.17g"));

    auto spread = [](const FuchsianConnection& c, const std::function<double(cplx)>& q_density) {
        double lo = 1e300, hi = 0;
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) {
                cplx z(-1.9 + 0.4 * i + 0.013, -1.9 + 0.4 * j + 0.007);
                double ratio = q_density(z) / c.density(Chart::Standard, z);
                lo = std::min(lo, ratio);
                hi = std::max(hi, ratio);
            }
        return (hi - lo) / hi;
    };
    double s1 = spread(conn, [](cplx z) { return std::sqrt(std::abs(z)); });
    o.require(s1 <= 1e-9, "q = z dz^2: ratio spread " + num(s1) + " on a 100 point grid");

    // q = (z - 1)^2 (z + i) / (z - 2) dz^3
    auto cubic = from_k_differential({{1.0, 2}, {cplx(0, -1), 1}}, {{2.0, 1}}, 3);
    double s2 = spread(cubic, [](cplx z) {
        return std::cbrt(std::norm(z - 1.0) * std::abs(z + cplx(0, 1)) / std::abs(z - 2.0));
    });
    o.require(s2 <= 1e-9, "cubic differential ratio spread " + num(s2));
    return o;
}

Outcome ring_probe() {
    Outcome o;
    auto conn = build_connection({pole(0, -1), pole_at_infinity(-1)});
    Trajectory seed = trace(conn, make_state(conn, 1.0, cplx(0, 1)), 2 * pi + 0.5);
    RingProbeOptions opts;
    opts.max_width = 1.0;
    opts.search_saddles = false;
    RingDomainReport rep = ring_domain_probe(conn, seed, opts);
    double length_err = 0, width_err = 0;
    for (const auto& l : rep.leaves) length_err = std::max(length_err, std::abs(l.g_length - 2 * pi));
    for (std::size_t a = 0; a < rep.leaves.size(); ++a)
        for (std::size_t b = a + 1; b < rep.leaves.size(); ++b) {
            double r1 = std::abs(rep.leaves[a].path.front()), r2 = std::abs(rep.leaves[b].path.front());
            double width = std::abs(rep.leaves[b].offset - rep.leaves[a].offset);
            width_err = std::max(width_err, std::abs(width - std::abs(std::log(r2 / r1))));
        }
    o.require(rep.leaves.size() >= 10, std::to_string(rep.leaves.size()) + " leaves");
    o.require(length_err <= 1e-6, "leaf lengths within " + num(length_err) + " of 2pi");
    o.require(width_err <= 1e-6, "widths within " + num(width_err) + " of log(r2/r1) over all leaf pairs");
    return o;
}

Outcome exclusion_audit_run() {
    Outcome o;
    AuditOptions opts;
    opts.samples = 200;
    opts.seed = 1;
    auto t0 = std::chrono::steady_clock::now();
    AuditReport rep = exclusion_audit(random_real_generator(), opts);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::size_t foreign = 0, saddle = 0;
    for (const auto& r : rep.records) {
        if (!r.simple || !r.real_periods) continue;
        foreign += r.verdict.tag == OmegaTag::AccumulatesOnForeignPeriodic;
        saddle += r.verdict.tag == OmegaTag::AccumulatesOnSaddleGraph;
    }
    std::ofstream(out_dir + "/acceptance_audit.txt") << rep.text();
    o.require(rep.records.size() == 200, "200 records");
    o.require(foreign == 0 && saddle == 0 && rep.anomalies == 0,
              std::to_string(foreign) + " foreign periodic, " + std::to_string(saddle) + " saddle graph among " +
                  std::to_string(rep.counted) + " counted");
    o.require(secs <= 600, "wall time " + num(secs, "%.1f") + " s on " + std::to_string(worker_count()) + " threads");
    return o;
}

Outcome cantor_statistics() {
    Outcome o;
    std::vector<double> xs{0.0};
    double len = 1.0;
    for (int l = 0; l < 11; ++l) {
        len /= 3.0;
        std::vector<double> next;
        for (double x : xs) {
            next.push_back(x);
            next.push_back(x + 2.0 * len);
        }
        xs = std::move(next);
    }
    TransversalSection sec;
    sec.delta = 0.5;
    sec.crossings = xs;
    GapStatistics g = transversal_analysis(sec);
    const double target = std::log(2.0) / std::log(3.0);
    o.require(!g.isolated_point, "no isolated point");
    o.require(!g.dense_interval, "not dense");
    o.require(std::abs(g.box_dimension - target) <= 0.05,
              "dimension " + num(g.box_dimension, "%.4f") + " vs " + num(target, "%.4f"));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) out_dir = argv[1];
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"closed-form agreement", closed_form},
        {"first-integral conservation", first_integral_drift},
        {"circle period and spiral", circle_and_spiral},
        {"residue-sum gate", residue_gate},
        {"critical lengths and diameter bound", critical_lengths},
        {"self-intersection, wide gap, must_cross", local_crossings},
        {"polygon identities", teichmuller},
        {"k-differential import", k_differential},
        {"ring-domain probe", ring_probe},
        {"exclusion audit", exclusion_audit_run},
        {"transversal Cantor statistics", cantor_statistics},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.passed;
        std::printf("%s %2zu %s [%.1fs]: %s\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first, secs,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
