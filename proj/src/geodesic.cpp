#include "connexion/geodesic.hpp"

#include <algorithm>
#include <array>
#include <boost/math/quadrature/gauss.hpp>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <set>
#include <unordered_map>

#include "connexion/errors.hpp"
#include "dop853.hpp"

namespace connexion {

namespace {

using Y = detail::CState<2>;

constexpr double kPi = std::numbers::pi;

Y rhs_in(const FuchsianConnection& conn, Chart chart, const Y& y) {
    cplx f = conn.local_rep_unchecked(chart, y[0]);
    return {y[1], -f * y[1] * y[1]};
}

struct PoleRef {
    int index;  // into conn.poles()
    Chart chart;
    cplx at;
    double nbhd;
    double abs_rho;
};

std::vector<PoleRef> pole_refs(const FuchsianConnection& conn) {
    std::vector<PoleRef> out;
    const auto& ps = conn.poles();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps[i].residue == 0.0) continue;
        if (ps[i].location.is_infinity())
            out.push_back({int(i), Chart::Infinity, 0.0, 0.25, std::abs(ps[i].residue)});
        else
            out.push_back({int(i), Chart::Standard, ps[i].location.z(), 0.25, std::abs(ps[i].residue)});
    }
    for (auto& p : out) {
        for (const auto& q : out) {
            if (&p == &q) continue;
            cplx other;
            if (p.chart == q.chart) {
                other = q.at;
            } else if (q.chart == Chart::Standard) {
                if (q.at == 0.0) continue;
                other = 1.0 / q.at;
            } else {
                continue;  // infinity seen from the standard chart
            }
            p.nbhd = std::min(p.nbhd, 0.5 * std::abs(other - p.at));
        }
    }
    return out;
}

double distance_in(const PoleRef& p, Chart chart, cplx x) {
    if (p.chart == chart) return std::abs(x - p.at);
    if (x == 0.0) return std::numeric_limits<double>::infinity();
    return std::abs(1.0 / x - p.at);
}

// Per-step change of c caused by rounding x - p alone; close to a pole it can
// exceed the drift budget whatever the step size.
double roundoff_drift(const std::vector<PoleRef>& refs, Chart chart, cplx x) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    double acc = 0.0;
    for (const auto& p : refs) {
        cplx at = p.at;
        if (p.chart != chart) {
            if (p.at == 0.0) continue;
            at = 1.0 / p.at;
        }
        double d = std::abs(x - at);
        if (d > 0) acc += p.abs_rho * (std::abs(x) + std::abs(at)) / d;
    }
    return 4.0 * eps * acc;
}

std::pair<int, double> nearest_pole(const std::vector<PoleRef>& refs, Chart chart, cplx x) {
    int best = -1;
    double d = std::numeric_limits<double>::infinity();
    for (const auto& p : refs) {
        if (p.chart != chart) {
            // only poles representable in this chart count toward the floor
            if (p.chart == Chart::Infinity) continue;
            if (p.at == 0.0) continue;
        }
        double e = distance_in(p, chart, x);
        if (e < d) {
            d = e;
            best = p.index;
        }
    }
    return {best, d};
}

double speed(const GeodesicState& s) { return std::abs(s.v) * std::exp(s.k_phase.real()); }

}  // namespace

const char* to_string(Termination t) {
    switch (t) {
        case Termination::TimeLimit: return "TimeLimit";
        case Termination::PoleApproach: return "PoleApproach";
        case Termination::StepCollapse: return "StepCollapse";
        case Termination::StepBudget: return "StepBudget";
        case Termination::WallClock: return "WallClock";
        case Termination::RegionExit: return "RegionExit";
        case Termination::NonFinite: return "NonFinite";
        case Termination::Stopped: return "Stopped";
    }
    return "Unknown";
}

GeodesicState make_state(const FuchsianConnection& conn, Chart chart, cplx x, cplx v) {
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag()) || !std::isfinite(v.real()) ||
        !std::isfinite(v.imag()))
        throw Error(Errc::InvalidArgument, "non-finite initial state");
    if (conn.pole_distance(chart, x) <= 1e-12) throw Error(Errc::StartAtPole, "initial point is a pole");
    if (v == 0.0) throw Error(Errc::ZeroVelocity, "initial velocity is zero");
    return {chart, x, v, conn.primitive(chart, x)};
}

GeodesicState make_state(const FuchsianConnection& conn, cplx z, cplx v) {
    return make_state(conn, Chart::Standard, z, v);
}

GeodesicState to_chart(const GeodesicState& s, Chart chart) {
    if (s.chart == chart) return s;
    if (s.z == 0.0) throw Error(Errc::InvalidArgument, "point not representable in the other chart");
    GeodesicState o;
    o.chart = chart;
    o.z = 1.0 / s.z;
    o.v = -s.v / (s.z * s.z);
    const cplx ipi(0.0, kPi);
    if (chart == Chart::Infinity)
        o.k_phase = s.k_phase + 2.0 * std::log(s.z) + ipi;
    else
        o.k_phase = s.k_phase - 2.0 * std::log(o.z) - ipi;
    return o;
}

cplx standard_position(const GeodesicState& s) {
    return s.chart == Chart::Standard ? s.z : 1.0 / s.z;
}

cplx standard_velocity(const GeodesicState& s) {
    return s.chart == Chart::Standard ? s.v : -s.v / (s.z * s.z);
}

Trajectory trace(const FuchsianConnection& conn, const GeodesicState& initial, double t_max,
                 const TraceOptions& opts) {
    if (!(t_max > 0.0)) throw Error(Errc::InvalidArgument, "t_max must be positive");
    if (initial.v == 0.0) throw Error(Errc::ZeroVelocity, "initial velocity is zero");
    if (conn.pole_distance(initial.chart, initial.z) <= 1e-12)
        throw Error(Errc::StartAtPole, "initial point is a pole");

    Trajectory tr{conn, opts, {}, {}, Termination::TimeLimit, -1, 0, 0};
    const double R = opts.switch_radius > 0 ? opts.switch_radius : conn.switch_radius();
    const auto refs = pole_refs(conn);
    const auto clock_start = std::chrono::steady_clock::now();

    GeodesicState st = initial;
    if (opts.allow_switch) {
        if (st.chart == Chart::Standard && std::abs(st.z) > R) st = to_chart(st, Chart::Infinity);
        else if (st.chart == Chart::Infinity && std::abs(st.z) > 2.0 / R) st = to_chart(st, Chart::Standard);
    } else if (st.chart == Chart::Infinity) {
        st = to_chart(st, Chart::Standard);
    }

    double t = 0.0;
    double s_g = 0.0;
    cplx c = first_integral_of(st);
    tr.samples.push_back({t, st, s_g, c});

    std::vector<char> inside(refs.size(), 0);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (distance_in(refs[i], st.chart, st.z) < refs[i].nbhd) {
            inside[i] = 1;
            tr.events.push_back({t, EventKind::PoleNeighborhoodEnter, refs[i].index, st.chart});
        }
    }

    Y y{st.z, st.v};
    Y k1 = rhs_in(conn, st.chart, y);
    double h = opts.initial_step;
    if (!(h > 0.0)) {
        double d = std::min(conn.pole_distance(st.chart, st.z), 1.0 + std::abs(st.z));
        h = 0.01 * d / std::abs(st.v);
    }
    bool last_rejected = false;
    std::size_t since_sample = 0;

    auto finish = [&](Termination why) {
        tr.reason = why;
        if (tr.samples.back().t != t) tr.samples.push_back({t, st, s_g, c});
    };

    while (true) {
        if (t >= t_max) {
            finish(Termination::TimeLimit);
            break;
        }
        if (tr.accepted >= opts.max_steps) {
            finish(Termination::StepBudget);
            break;
        }
        if (((tr.accepted + tr.rejected) & 255u) == 0 && tr.accepted + tr.rejected > 0) {
            double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
            if (el > opts.wall_clock_s) {
                finish(Termination::WallClock);
                break;
            }
        }
        h = std::min({h, opts.max_step, t_max - t});
        if (h < 1e-14 * std::max(1.0, std::abs(t)) && t_max - t > h) {
            tr.events.push_back({t, EventKind::StepCollapse, -1, st.chart});
            auto [idx, d] = nearest_pole(refs, st.chart, st.z);
            if (d < 1e-3) tr.pole_hit = idx;
            finish(Termination::StepCollapse);
            break;
        }

        // absolute tolerance on the scale of the nearest pole, which sets the
        // size of both position and velocity there
        const double atol = opts.atol * std::min(1.0, nearest_pole(refs, st.chart, st.z).second);
        auto step = detail::dop853_step<2>(
            [&](const Y& yy) { return rhs_in(conn, st.chart, yy); }, y, k1, h, opts.rtol, atol);
        if (!step.finite) {
            ++tr.rejected;
            h *= 0.25;
            last_rejected = true;
            continue;
        }
        if (step.err > 1.0) {
            ++tr.rejected;
            h *= std::max(0.333, 0.9 * std::pow(step.err, -0.125));
            last_rejected = true;
            continue;
        }
        cplx dk;
        if (step.y[1] == 0.0 || !conn.primitive_increment(st.chart, y[0], step.y[0], dk)) {
            ++tr.rejected;
            h *= 0.5;
            last_rejected = true;
            continue;
        }
        cplx k_new = st.k_phase + dk;
        cplx c_new = step.y[1] * std::exp(k_new);
        double drift = std::abs(c_new - c) / std::abs(c);
        const double budget = std::max(opts.integral_budget, roundoff_drift(refs, st.chart, step.y[0]));
        if (!(drift <= budget)) {
            ++tr.rejected;
            double f = std::isfinite(drift) ? 0.9 * std::pow(budget / drift, 0.125) : 0.25;
            h *= std::clamp(f, 0.2, 0.9);
            last_rejected = true;
            continue;
        }

        // accept
        ++tr.accepted;
        double sp_old = speed(st);
        t = (t_max - t <= h) ? t_max : t + h;
        st.z = step.y[0];
        st.v = step.y[1];
        st.k_phase = k_new;
        c = c_new;
        s_g += 0.5 * h * (sp_old + speed(st));

        double scale = step.err == 0.0 ? 6.0 : std::clamp(0.9 * std::pow(step.err, -0.125), 0.333, 6.0);
        if (last_rejected) scale = std::min(scale, 1.0);
        if (drift > 0.0) scale = std::min(scale, 0.9 * std::pow(budget / drift, 0.125));
        double h_used = h;
        h = h_used * scale;
        last_rejected = false;

        bool switched = false;
        if (opts.allow_switch) {
            if (st.chart == Chart::Standard && std::abs(st.z) > R) {
                st = to_chart(st, Chart::Infinity);
                switched = true;
            } else if (st.chart == Chart::Infinity && std::abs(st.z) > 2.0 / R) {
                st = to_chart(st, Chart::Standard);
                switched = true;
            }
            if (switched) {
                tr.events.push_back({t, EventKind::ChartSwitch, -1, st.chart});
                c = first_integral_of(st);
                // step size in time is chart independent
            }
        }
        y = {st.z, st.v};
        k1 = rhs_in(conn, st.chart, y);

        for (std::size_t i = 0; i < refs.size(); ++i) {
            bool in = distance_in(refs[i], st.chart, st.z) < refs[i].nbhd;
            if (in != bool(inside[i])) {
                inside[i] = in;
                tr.events.push_back({t, in ? EventKind::PoleNeighborhoodEnter : EventKind::PoleNeighborhoodExit,
                                     refs[i].index, st.chart});
            }
        }

        ++since_sample;
        if (switched || since_sample >= opts.sample_stride || t >= t_max) {
            tr.samples.push_back({t, st, s_g, c});
            since_sample = 0;
        }

        auto [pidx, pd] = nearest_pole(refs, st.chart, st.z);
        if (pd < opts.pole_floor) {
            tr.pole_hit = pidx;
            finish(Termination::PoleApproach);
            break;
        }
        if (!std::isfinite(st.z.real()) || !std::isfinite(st.z.imag())) {
            finish(Termination::NonFinite);
            break;
        }
        if (opts.region) {
            cplx zs = standard_position(st);
            if (std::abs(zs - opts.region->first) > opts.region->second) {
                finish(Termination::RegionExit);
                break;
            }
        }
        if (opts.stop) {
            TrajectorySample cur{t, st, s_g, c};
            if (opts.stop(cur)) {
                finish(Termination::Stopped);
                break;
            }
        }
    }
    return tr;
}

FirstIntegral first_integral(const Trajectory& traj) {
    if (traj.samples.empty()) throw Error(Errc::InvalidArgument, "empty trajectory");
    cplx c0 = traj.samples.front().c;
    double worst = 0.0;
    for (const auto& s : traj.samples) worst = std::max(worst, std::abs(first_integral_of(s.state) - c0));
    return {c0, worst / std::abs(c0)};
}

namespace {

// Fixed-step propagation inside one chart with continued K.
GeodesicState propagate(const FuchsianConnection& conn, GeodesicState s, double dt, int n) {
    for (int attempt = 0; attempt < 8; ++attempt, n *= 2) {
        GeodesicState cur = s;
        bool ok = true;
        double hs = dt / n;
        for (int i = 0; i < n && ok; ++i) {
            Y y{cur.z, cur.v};
            auto rhs = [&](const Y& yy) { return rhs_in(conn, cur.chart, yy); };
            auto r = detail::dop853_step<2>(rhs, y, rhs(y), hs, 1.0, 1.0);
            cplx dk;
            if (!r.finite || !conn.primitive_increment(cur.chart, cur.z, r.y[0], dk)) {
                ok = false;
                break;
            }
            cur.z = r.y[0];
            cur.v = r.y[1];
            cur.k_phase += dk;
        }
        if (ok) return cur;
    }
    throw Error(Errc::OutOfRange, "re-integration failed");
}

std::size_t sample_index(const Trajectory& traj, double t) {
    const auto& s = traj.samples;
    auto it = std::upper_bound(s.begin(), s.end(), t, [](double x, const TrajectorySample& a) { return x < a.t; });
    if (it == s.begin()) return 0;
    return std::size_t(it - s.begin()) - 1;
}

int substeps_for(const Trajectory& traj, std::size_t k, double dt) {
    const auto& s = traj.samples;
    double gap;
    if (k + 1 < s.size()) gap = s[k + 1].t - s[k].t;
    else if (k > 0) gap = s[k].t - s[k - 1].t;
    else gap = dt;
    double local = gap / double(std::max<std::size_t>(1, traj.opts.sample_stride));
    if (!(local > 0.0)) return 1;
    return std::max(1, int(std::ceil(std::abs(dt) / local - 1e-9)));
}

const ClosedSegment* closed_at(const Trajectory& traj, double t) {
    for (const auto& c : traj.closed)
        if (t >= c.t0 && t <= c.t1) return &c;
    return nullptr;
}

// State at tau, integrating from sample k unless a closed stretch covers it.
GeodesicState state_from(const Trajectory& traj, std::size_t k, double tau) {
    if (const auto* c = closed_at(traj, tau)) return c->eval(tau - c->t0);
    const auto& s = traj.samples[k];
    double dt = tau - s.t;
    if (dt == 0.0) return s.state;
    return propagate(traj.conn, s.state, dt, substeps_for(traj, k, dt));
}

}  // namespace

GeodesicState state_at(const Trajectory& traj, double t) {
    const auto& s = traj.samples;
    if (s.empty()) throw Error(Errc::InvalidArgument, "empty trajectory");
    double span = s.back().t - s.front().t;
    if (t < s.front().t - 1e-12 * std::max(1.0, span) || t > s.back().t + 1e-12 * std::max(1.0, span))
        throw Error(Errc::OutOfRange, "time outside the trajectory span");
    std::size_t k = sample_index(traj, t);
    if (t == s[k].t) return s[k].state;
    return state_from(traj, k, t);
}

double g_length(const Trajectory& traj, double t_a, double t_b) {
    if (!traj.conn.real_residues()) throw Error(Errc::NonRealResidues, "metric needs real residues");
    const auto& s = traj.samples;
    if (s.empty()) throw Error(Errc::InvalidArgument, "empty trajectory");
    if (!(t_a < t_b)) throw Error(Errc::InvalidArgument, "need t_a < t_b");
    if (t_a < s.front().t || t_b > s.back().t) throw Error(Errc::OutOfRange, "interval outside the trajectory");
    using boost::math::quadrature::gauss;
    double total = 0.0;
    std::size_t k = sample_index(traj, t_a);
    for (; k < s.size() && s[k].t < t_b; ++k) {
        double lo = std::max(t_a, s[k].t);
        double hi = (k + 1 < s.size()) ? std::min(t_b, s[k + 1].t) : t_b;
        if (!(hi > lo)) continue;
        auto integrand = [&](double tau) {
            GeodesicState g = state_from(traj, k, tau);
            return traj.conn.density(g.chart, g.z) * std::abs(g.v);
        };
        total += gauss<double, 10>::integrate(integrand, lo, hi);
    }
    return total;
}

std::vector<cplx> standard_polyline(const Trajectory& traj) {
    std::vector<cplx> out;
    out.reserve(traj.samples.size());
    for (const auto& s : traj.samples) out.push_back(standard_position(s.state));
    return out;
}

namespace {

double cross2(cplx a, cplx b) { return a.real() * b.imag() - a.imag() * b.real(); }

bool segment_cross(cplx p0, cplx p1, cplx q0, cplx q1, double& u, double& w) {
    cplx r = p1 - p0, s = q1 - q0;
    double den = cross2(r, s);
    if (den == 0.0) return false;
    cplx d = q0 - p0;
    u = cross2(d, s) / den;
    w = cross2(d, r) / den;
    return u >= 0.0 && u < 1.0 && w >= 0.0 && w < 1.0;
}

struct Grid {
    double cell;
    cplx origin;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> cells;
    std::vector<std::size_t> large;

    static std::int64_t key(std::int64_t i, std::int64_t j) { return (i << 32) ^ (j & 0xffffffff); }

    template <class F>
    void cover(cplx a, cplx b, F&& f) const {
        auto ix = [&](double x, double o) { return std::int64_t(std::floor((x - o) / cell)); };
        std::int64_t i0 = ix(std::min(a.real(), b.real()), origin.real());
        std::int64_t i1 = ix(std::max(a.real(), b.real()), origin.real());
        std::int64_t j0 = ix(std::min(a.imag(), b.imag()), origin.imag());
        std::int64_t j1 = ix(std::max(a.imag(), b.imag()), origin.imag());
        if ((i1 - i0 + 1) * (j1 - j0 + 1) > 4096) {
            f(std::int64_t(-1), true);
            return;
        }
        for (auto i = i0; i <= i1; ++i)
            for (auto j = j0; j <= j1; ++j) f(key(i, j), false);
    }
};

Grid make_grid(const std::vector<cplx>& pts, const std::vector<char>& usable) {
    std::vector<double> lens;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        if (usable[i]) lens.push_back(std::abs(pts[i + 1] - pts[i]));
    double cell = 1.0;
    if (!lens.empty()) {
        std::nth_element(lens.begin(), lens.begin() + lens.size() / 2, lens.end());
        cell = std::max(lens[lens.size() / 2], 1e-12);
    }
    return Grid{cell * 2.0, pts.empty() ? cplx(0) : pts.front(), {}, {}};
}

std::vector<char> usable_segments(const std::vector<cplx>& pts) {
    std::vector<char> u(pts.size() > 0 ? pts.size() - 1 : 0, 0);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        bool ok = std::abs(pts[i]) <= 1e6 && std::abs(pts[i + 1]) <= 1e6 && std::isfinite(pts[i].real()) &&
                  std::isfinite(pts[i + 1].real()) && std::isfinite(pts[i].imag()) && std::isfinite(pts[i + 1].imag());
        u[i] = ok;
    }
    return u;
}

}  // namespace

std::vector<PolylineCrossing> polyline_intersections(const std::vector<cplx>& pts, std::size_t max_count) {
    std::vector<PolylineCrossing> out;
    if (pts.size() < 4 || max_count == 0) return out;
    auto usable = usable_segments(pts);
    Grid g = make_grid(pts, usable);
    std::set<std::pair<std::size_t, std::size_t>> tested;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (!usable[i]) continue;
        std::vector<std::size_t> cand;
        g.cover(pts[i], pts[i + 1], [&](std::int64_t key, bool large) {
            if (large) {
                for (std::size_t j = 0; j < i; ++j) cand.push_back(j);
                return;
            }
            auto it = g.cells.find(key);
            if (it != g.cells.end()) cand.insert(cand.end(), it->second.begin(), it->second.end());
        });
        for (auto j : g.large) cand.push_back(j);
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        for (auto j : cand) {
            if (j + 1 >= i || !usable[j]) continue;
            // closed polylines: first and last segment share a vertex
            if (j == 0 && i + 2 == pts.size() && pts.front() == pts.back()) continue;
            double u, w;
            if (segment_cross(pts[j], pts[j + 1], pts[i], pts[i + 1], u, w))
                out.push_back({j, i, u, w, pts[j] + u * (pts[j + 1] - pts[j])});
        }
        g.cover(pts[i], pts[i + 1], [&](std::int64_t key, bool large) {
            if (large) g.large.push_back(i);
            else g.cells[key].push_back(i);
        });
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.seg_i, a.seg_j, a.u_i) < std::tie(b.seg_i, b.seg_j, b.u_i);
    });
    if (out.size() > max_count) out.resize(max_count);
    return out;
}

std::vector<PolylineCrossing> mutual_intersections(const std::vector<cplx>& a, const std::vector<cplx>& b,
                                                   std::size_t max_count) {
    std::vector<PolylineCrossing> out;
    if (a.size() < 2 || b.size() < 2 || max_count == 0) return out;
    auto ua = usable_segments(a), ub = usable_segments(b);
    Grid g = make_grid(b, ub);
    for (std::size_t j = 0; j + 1 < b.size(); ++j) {
        if (!ub[j]) continue;
        g.cover(b[j], b[j + 1], [&](std::int64_t key, bool large) {
            if (large) g.large.push_back(j);
            else g.cells[key].push_back(j);
        });
    }
    for (std::size_t i = 0; i + 1 < a.size(); ++i) {
        if (!ua[i]) continue;
        std::vector<std::size_t> cand(g.large);
        bool all = false;
        g.cover(a[i], a[i + 1], [&](std::int64_t key, bool large) {
            if (large) {
                all = true;
                return;
            }
            auto it = g.cells.find(key);
            if (it != g.cells.end()) cand.insert(cand.end(), it->second.begin(), it->second.end());
        });
        if (all) {
            cand.clear();
            for (std::size_t j = 0; j + 1 < b.size(); ++j)
                if (ub[j]) cand.push_back(j);
        }
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        for (auto j : cand) {
            double u, w;
            if (segment_cross(a[i], a[i + 1], b[j], b[j + 1], u, w))
                out.push_back({i, j, u, w, a[i] + u * (a[i + 1] - a[i])});
        }
        if (out.size() >= max_count) break;
    }
    if (out.size() > max_count) out.resize(max_count);
    return out;
}

std::vector<IntersectionRecord> self_intersections(const Trajectory& traj, std::size_t max_count) {
    std::vector<IntersectionRecord> out;
    if (traj.samples.size() < 2) throw Error(Errc::InvalidArgument, "need at least two samples");
    auto pts = standard_polyline(traj);
    auto raw = polyline_intersections(pts, std::max<std::size_t>(max_count * 4, max_count + 16));
    const auto& s = traj.samples;
    for (const auto& x : raw) {
        double t1 = s[x.seg_i].t + x.u_i * (s[x.seg_i + 1].t - s[x.seg_i].t);
        double t2 = s[x.seg_j].t + x.u_j * (s[x.seg_j + 1].t - s[x.seg_j].t);
        double lo1 = s[x.seg_i].t, hi1 = s[x.seg_i + 1].t;
        double lo2 = s[x.seg_j].t, hi2 = s[x.seg_j + 1].t;
        double w1 = hi1 - lo1, w2 = hi2 - lo2;
        cplx point = x.point;
        bool transversal = false;
        bool converged = false;
        try {
            for (int it = 0; it < 30; ++it) {
                auto g1 = state_at(traj, t1), g2 = state_at(traj, t2);
                cplx z1 = standard_position(g1), z2 = standard_position(g2);
                cplx v1 = standard_velocity(g1), v2 = standard_velocity(g2);
                cplx F = z1 - z2;
                double det = -v1.real() * v2.imag() + v2.real() * v1.imag();
                if (std::abs(F) <= 1e-13 * (1.0 + std::abs(z1))) {
                    point = 0.5 * (z1 + z2);
                    double sn = std::abs(cross2(v1, v2)) / (std::abs(v1) * std::abs(v2));
                    transversal = sn > 1e-3;
                    converged = true;
                    break;
                }
                if (std::abs(det) < 1e-300) break;
                // [v1, -v2] [dt1 dt2]^T = -F
                double dt1 = (-F.real() * (-v2.imag()) - (-F.imag()) * (-v2.real())) / det;
                double dt2 = (v1.real() * (-F.imag()) - v1.imag() * (-F.real())) / det;
                t1 += dt1;
                t2 += dt2;
                if (t1 < lo1 - w1 || t1 > hi1 + w1 || t2 < lo2 - w2 || t2 > hi2 + w2) break;
            }
        } catch (const Error&) {
            converged = false;
        }
        if (!converged) {
            t1 = lo1 + x.u_i * w1;
            t2 = lo2 + x.u_j * w2;
            point = x.point;
            cplx d1 = pts[x.seg_i + 1] - pts[x.seg_i], d2 = pts[x.seg_j + 1] - pts[x.seg_j];
            transversal = std::abs(cross2(d1, d2)) / (std::abs(d1) * std::abs(d2)) > 1e-3;
        }
        if (t1 > t2) std::swap(t1, t2);
        bool dup = false;
        for (const auto& r : out)
            if (std::abs(r.t_i - t1) < 1e-9 * std::max(1.0, std::abs(t1)) &&
                std::abs(r.t_j - t2) < 1e-9 * std::max(1.0, std::abs(t2)))
                dup = true;
        if (dup || !(t2 - t1 > 1e-9 * std::max(1.0, std::abs(t2)))) continue;
        out.push_back({t1, t2, point, transversal});
        if (out.size() >= max_count) break;
    }
    return out;
}

std::vector<cplx> continue_K(const FuchsianConnection& conn, const std::vector<cplx>& path) {
    if (path.empty()) return {};
    auto poles = conn.chart_poles(Chart::Standard);
    for (std::size_t i = 0; i < path.size(); ++i) {
        for (const auto& [p, r] : poles) {
            (void)r;
            double d;
            if (i + 1 < path.size()) {
                cplx a = path[i], b = path[i + 1], e = b - a;
                double n = std::norm(e);
                double u = n > 0 ? std::clamp(((p - a) * std::conj(e)).real() / n, 0.0, 1.0) : 0.0;
                d = std::abs(a + u * e - p);
            } else {
                d = std::abs(path[i] - p);
            }
            if (d <= 1e-12) throw Error(Errc::PathThroughPole, "path meets a pole");
        }
    }
    std::vector<cplx> out;
    out.reserve(path.size());
    cplx k = conn.primitive(Chart::Standard, path[0]);
    out.push_back(k);
    std::function<cplx(cplx, cplx, int)> incr = [&](cplx a, cplx b, int depth) -> cplx {
        cplx dk;
        if (conn.primitive_increment(Chart::Standard, a, b, dk)) return dk;
        if (depth > 60) throw Error(Errc::PathThroughPole, "cannot resolve branch along the path");
        cplx m = 0.5 * (a + b);
        return incr(a, m, depth + 1) + incr(m, b, depth + 1);
    };
    for (std::size_t i = 1; i < path.size(); ++i) {
        k += incr(path[i - 1], path[i], 0);
        out.push_back(k);
    }
    return out;
}

void write_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,re_z,im_z,re_v,im_v,s_g\n";
    os << std::setprecision(17);
    for (const auto& s : traj.samples) {
        cplx z = standard_position(s.state), v = standard_velocity(s.state);
        os << s.t << ',' << z.real() << ',' << z.imag() << ',' << v.real() << ',' << v.imag() << ',' << s.s_g
           << '\n';
    }
}

double closest_time(const Trajectory& traj, cplx target, double t_lo, double t_hi, double t0) {
    // Newton on d/dt |z - target|^2 / 2 = Re(conj(z - target) v)
    double t = std::clamp(t0, t_lo, t_hi);
    for (int it = 0; it < 40; ++it) {
        auto g = state_at(traj, t);
        cplx z = standard_position(g), v = standard_velocity(g);
        double f = (std::conj(z - target) * v).real();
        // second derivative, acceleration from the geodesic equation
        cplx acc = -traj.conn.local_rep_unchecked(Chart::Standard, z) * v * v;
        double df = std::norm(v) + (std::conj(z - target) * acc).real();
        if (!(df > 0)) break;
        double tn = std::clamp(t - f / df, t_lo, t_hi);
        if (std::abs(tn - t) <= 1e-15 * std::max(1.0, std::abs(t))) return tn;
        t = tn;
    }
    return t;
}

}  // namespace connexion
