#include "connexion/omega.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/tools/toms748_solve.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include "connexion/errors.hpp"
#include "connexion/local.hpp"

namespace connexion {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

cplx unit(cplx v) { return v / std::abs(v); }

double angle_gap(double a) {
    double r = std::fmod(a, kTwoPi);
    if (r < 0) r += kTwoPi;
    return std::min(r, kTwoPi - r);
}

bool finite(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

std::string format_point(const SpherePoint& p) {
    if (p.is_infinity()) return "inf";
    std::ostringstream os;
    os << std::setprecision(6) << p.z().real();
    if (p.z().imag() != 0.0) os << (p.z().imag() < 0 ? "" : "+") << p.z().imag() << "i";
    return os.str();
}

// Distance to pole j measured in the chart that contains it.
double pole_chart_distance(const FuchsianConnection& conn, int j, const GeodesicState& s) {
    const auto& p = conn.poles()[j].location;
    if (p.is_infinity()) {
        if (s.chart == Chart::Infinity) return std::abs(s.z);
        return s.z == 0.0 ? kInf : 1.0 / std::abs(s.z);
    }
    cplx z = standard_position(s);
    return finite(z) ? std::abs(z - p.z()) : kInf;
}

double pole_neighborhood(const FuchsianConnection& conn, int j) {
    const auto& p = conn.poles()[j].location;
    if (p.is_infinity()) return 1.0 / conn.switch_radius();
    double r = 0.25;
    for (auto q : conn.finite_locations())
        if (q != p.z()) r = std::min(r, 0.5 * std::abs(q - p.z()));
    return r;
}

struct ReturnWatch {
    cplx z0, u0;
    double coarse, leave;
    bool left = false;
    bool have_prev = false;
    cplx z1, u1;
    double f1 = 0;

    // scale: size of the neighbourhood of z0 that is free of poles
    ReturnWatch(cplx z, cplx v, double scale) : z0(z), u0(unit(v)) {
        coarse = 1e-4 * std::min(1.0 + std::abs(z), scale);
        leave = 10.0 * coarse;
    }

    // true when |z - z0| passes a local minimum between the previous sample and
    // this one, close to z0 on the scale of the step, heading roughly along v0
    bool operator()(const GeodesicState& st) {
        cplx z = standard_position(st);
        if (!finite(z)) {
            have_prev = false;
            return false;
        }
        cplx u = unit(standard_velocity(st));
        double f = (std::conj(z - z0) * u).real();
        double d = std::abs(z - z0);
        bool hit = false;
        if (!left) {
            left = d > leave;
        } else if (have_prev && f1 < 0 && f >= 0) {
            double step = std::abs(z - z1);
            double near = std::min(d, std::abs(z1 - z0));
            hit = near < coarse + step && std::abs(u - u0) < 0.5 + std::abs(u - u1);
        }
        have_prev = true;
        z1 = z;
        u1 = u;
        f1 = f;
        return hit;
    }
};

std::optional<Recurrence> refine_return(const Trajectory& tr, std::size_t k, cplx z0, cplx u0) {
    const auto& s = tr.samples;
    double lo = s[k > 0 ? k - 1 : 0].t, hi = s[std::min(k + 1, s.size() - 1)].t;
    double t = closest_time(tr, z0, lo, hi, s[k].t);
    auto g = state_at(tr, t);
    cplx z = standard_position(g);
    if (!finite(z)) return std::nullopt;
    // positional miss in flat units, so the tolerance does not depend on where the orbit sits
    double err = tr.conn.density(Chart::Standard, z0) * std::abs(z - z0) + std::abs(unit(standard_velocity(g)) - u0);
    return Recurrence{t - tr.t_begin(), err};
}

void append(Trajectory& whole, const Trajectory& part) {
    const double t0 = whole.t_end(), s0 = whole.samples.back().s_g;
    for (std::size_t i = 1; i < part.samples.size(); ++i) {
        auto smp = part.samples[i];
        smp.t += t0;
        smp.s_g += s0;
        whole.samples.push_back(smp);
    }
    for (auto e : part.events) {
        e.t += t0;
        whole.events.push_back(e);
    }
    for (auto c : part.closed) {
        c.t0 += t0;
        c.t1 += t0;
        whole.closed.push_back(std::move(c));
    }
    whole.reason = part.reason;
    whole.pole_hit = part.pole_hit;
    whole.accepted += part.accepted;
    whole.rejected += part.rejected;
}

std::optional<OmegaVerdict> sink_check(const FuchsianConnection& conn, const Trajectory& tr) {
    const auto& s = tr.samples;
    if (s.size() < 40) return std::nullopt;
    const std::size_t first = s.size() - s.size() * 3 / 10;
    for (int j = 0; j < int(conn.poles().size()); ++j) {
        cplx rho = conn.poles()[j].residue;
        if (rho == 0.0 || rho.real() > -1.0) continue;
        double prev = kInf, start = 0;
        bool shrinking = true;
        for (int c = 0; c <= 10 && shrinking; ++c) {
            std::size_t i = first + (s.size() - 1 - first) * c / 10;
            double d = pole_chart_distance(conn, j, s[i].state);
            if (c == 0) start = d;
            shrinking = d < prev;
            prev = d;
        }
        if (shrinking && prev < pole_neighborhood(conn, j) && prev < 0.9 * start) {
            OmegaVerdict v;
            v.tag = OmegaTag::ConvergesToPole;
            v.pole = j;
            std::ostringstream os;
            os << "chart distance " << std::setprecision(6) << prev << " shrinking, residue " << rho.real();
            v.details = os.str();
            return v;
        }
    }
    return std::nullopt;
}

// Crossings with the normal line at the final point, in time order, after a
// short transient.
std::optional<OmegaVerdict> accumulation_check(const FuchsianConnection& conn, const Trajectory& tr) {
    const auto& s = tr.samples;
    if (s.size() < 50) return std::nullopt;
    cplx zE = standard_position(s.back().state);
    if (!finite(zE) || std::abs(zE) > conn.switch_radius()) return std::nullopt;
    cplx uE = unit(standard_velocity(s.back().state));
    const std::size_t first = s.size() / 10;
    double lo = kInf, hi = -kInf;
    for (std::size_t i = first; i < s.size(); ++i) {
        cplx z = standard_position(s[i].state);
        if (!finite(z)) continue;
        lo = std::min(lo, z.real());
        hi = std::max(hi, z.real());
    }
    const double L = 0.1 * std::max(hi - lo, 1e-12);
    std::vector<double> cross;
    std::vector<std::size_t> at;
    for (std::size_t i = first; i + 2 < s.size(); ++i) {
        cplx a = standard_position(s[i].state), b = standard_position(s[i + 1].state);
        if (!finite(a) || !finite(b)) continue;
        double ga = (std::conj(uE) * (a - zE)).real(), gb = (std::conj(uE) * (b - zE)).real();
        if (!(ga < 0 && gb >= 0)) continue;
        double u = ga / (ga - gb);
        if (std::abs((std::conj(uE) * (a + u * (b - a) - zE)).imag()) > 2.0 * L) continue;
        // Illinois iteration on the integrated path, chords are too coarse
        double ta = s[i].t, tb = s[i + 1].t, fa = ga, fb = gb;
        cplx zc = a + u * (b - a);
        for (int it = 0; it < 60 && tb - ta > 1e-14 * std::max(1.0, tb); ++it) {
            double tc = tb - fb * (tb - ta) / (fb - fa);
            zc = standard_position(state_at(tr, tc));
            double fc = (std::conj(uE) * (zc - zE)).real();
            if (fc == 0) break;
            if ((fc < 0) == (fb < 0)) {
                fa *= 0.5;
            } else {
                ta = tb;
                fa = fb;
            }
            tb = tc;
            fb = fc;
            if (std::abs(fc) <= 1e-15 * (1.0 + std::abs(zc))) break;
        }
        double sv = (std::conj(uE) * (zc - zE)).imag();
        if (std::abs(sv) > L) continue;
        cross.push_back(sv);
        at.push_back(i);
    }
    if (cross.size() < 6) return std::nullopt;
    const std::size_t n = std::min<std::size_t>(cross.size(), 8);
    std::vector<double> d;
    for (std::size_t k = cross.size() - n; k + 1 < cross.size(); ++k) d.push_back(cross[k + 1] - cross[k]);
    for (std::size_t k = 0; k + 1 < d.size(); ++k) {
        if (d[k] * d[k + 1] <= 0) return std::nullopt;
        if (std::abs(d[k + 1]) > 0.95 * std::abs(d[k])) return std::nullopt;
    }
    if (std::abs(d.back()) < 1e-9 * L) return std::nullopt;

    // does the limiting loop run into a pole?
    auto lap_min = [&](std::size_t a, std::size_t b) {
        double m = kInf;
        for (std::size_t i = a; i <= b; ++i) m = std::min(m, conn.pole_distance(s[i].state.chart, s[i].state.z));
        return m;
    };
    const std::size_t K = at.size();
    double late = lap_min(at[K - 2], at[K - 1]);
    double early = lap_min(at[K - n], at[K - n + 1]);
    OmegaVerdict v;
    std::ostringstream os;
    os << std::setprecision(6) << "laps " << n << ", last return shift " << std::abs(d.back()) << ", lap pole distance "
       << early << " -> " << late;
    v.details = os.str();
    v.tag = (late < 0.7 * early && late < 0.05) ? OmegaTag::AccumulatesOnSaddleGraph
                                                : OmegaTag::AccumulatesOnForeignPeriodic;
    return v;
}

std::string join(const std::string& a, const std::string& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    return a + ", " + b;
}

// Carries a trajectory that stopped next to a pole across it in closed form.
bool pass_pole(const FuchsianConnection& conn, Trajectory& whole, std::map<int, std::optional<AdaptedChart>>& charts) {
    const int j = whole.pole_hit;
    if (j < 0) return false;
    const auto& ps = conn.poles()[j];
    if (ps.residue.imag() != 0.0 || ps.residue.real() <= -1.0) return false;
    auto it = charts.find(j);
    if (it == charts.end()) {
        std::optional<AdaptedChart> ch;
        try {
            ch = adapted_chart(conn, ps.location);
        } catch (const Error&) {
        }
        it = charts.emplace(j, std::move(ch)).first;
    }
    if (!it->second) return false;
    const AdaptedChart& ch = *it->second;
    const TrajectorySample last = whole.samples.back();
    std::optional<PolePassage> pass;
    try {
        // halfway out in the source coordinate, which for small rho + 1 is
        // much further than halfway in w
        pass = pole_passage(conn, ch, last.state, ch.radius * std::pow(0.5, ch.rho + 1.0));
    } catch (const Error&) {
        return false;
    }
    if (!pass) return false;
    // samples evenly spread in the turning angle of the straightened line
    auto [w, dw] = ch.pull(last.state);
    const auto lp = local_params(ch.rho, ch.radius, w, dw);
    const double a = lp.a.real(), hb = lp.b.imag();
    const double th0 = std::arg(lp.b), th1 = std::arg(lp.a * pass->duration + lp.b);
    const int n = 16 + int(std::ceil(8.0 * std::abs(th1 - th0) / (ch.rho + 1.0)));
    const double t0 = last.t, speed = std::abs(last.c);
    whole.closed.push_back({t0, t0 + pass->duration, j, pass->eval});
    for (int k = 1; k <= n; ++k) {
        double tau = pass->duration;
        if (k < n) {
            double th = th0 + (th1 - th0) * k / n;
            tau = std::clamp((hb * std::cos(th) / std::sin(th) - lp.b.real()) / a, 0.0, pass->duration);
        }
        if (tau <= whole.samples.back().t - t0) continue;
        GeodesicState g = k < n ? pass->eval(tau) : pass->exit;
        whole.samples.push_back({t0 + tau, g, last.s_g + speed * tau, first_integral_of(g)});
    }
    whole.events.push_back({t0, EventKind::PoleNeighborhoodEnter, j, ch.source});
    return true;
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0;
    auto mid = v.begin() + v.size() / 2;
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

}  // namespace

const char* to_string(OmegaTag tag) {
    switch (tag) {
        case OmegaTag::ConvergesToPole: return "ConvergesToPole";
        case OmegaTag::Periodic: return "Periodic";
        case OmegaTag::CantorLikeEvidence: return "CantorLikeEvidence";
        case OmegaTag::FillsRegionEvidence: return "FillsRegionEvidence";
        case OmegaTag::FillsAllEvidence: return "FillsAllEvidence";
        case OmegaTag::AccumulatesOnForeignPeriodic: return "AccumulatesOnForeignPeriodic";
        case OmegaTag::AccumulatesOnSaddleGraph: return "AccumulatesOnSaddleGraph";
        case OmegaTag::Undetermined: return "Undetermined";
    }
    return "?";
}

const char* to_string(BoundaryKind k) {
    switch (k) {
        case BoundaryKind::Pole: return "Pole";
        case BoundaryKind::SaddleConnection: return "SaddleConnection";
        case BoundaryKind::NotPeriodic: return "NotPeriodic";
        case BoundaryKind::LimitReached: return "LimitReached";
    }
    return "?";
}

std::string describe(const OmegaVerdict& v, const FuchsianConnection& conn) {
    std::ostringstream os;
    os << to_string(v.tag);
    if (v.tag == OmegaTag::ConvergesToPole && v.pole >= 0 && v.pole < int(conn.poles().size()))
        os << "(" << format_point(conn.poles()[v.pole].location) << ")";
    else if (v.tag == OmegaTag::Periodic)
        os << "(T=" << std::fixed << std::setprecision(6) << v.period << ")";
    return os.str();
}

DirectionClass direction_class(const FuchsianConnection& conn, cplx c) {
    DirectionClass d;
    d.angle = wrap_angle(std::arg(c));
    for (const auto& p : conn.poles()) {
        double g = wrap_angle(kTwoPi * p.residue.real());
        if (angle_gap(g) <= 1e-12) continue;
        bool dup = false;
        for (double h : d.generators) dup = dup || angle_gap(g - h) <= 1e-12;
        if (!dup) d.generators.push_back(g);
    }
    return d;
}

bool DirectionClass::same_as(const DirectionClass& o, double tol, bool unoriented) const {
    std::vector<double> gens = generators;
    for (double g : o.generators) {
        bool dup = false;
        for (double h : gens) dup = dup || angle_gap(g - h) <= 1e-12;
        if (!dup) gens.push_back(g);
    }
    if (unoriented) gens.push_back(kPi);
    const double diff = o.angle - angle;
    // small integer combinations of the generators
    const std::size_t k = gens.size();
    const int bound = k == 0 ? 0 : std::max(1, int(std::pow(2e5, 1.0 / double(k)) - 1) / 2);
    std::vector<int> n(k, -bound);
    while (true) {
        double acc = diff;
        for (std::size_t j = 0; j < k; ++j) acc -= n[j] * gens[j];
        if (angle_gap(acc) <= tol) return true;
        std::size_t j = 0;
        while (j < k && n[j] == bound) n[j++] = -bound;
        if (j == k) return false;
        ++n[j];
    }
}

TransversalSection make_section(const FuchsianConnection& conn, cplx centre, cplx direction, double delta) {
    if (!(delta > 0)) throw Error(Errc::InvalidArgument, "section half-length must be positive");
    if (direction == 0.0) throw Error(Errc::ZeroVelocity, "section direction is zero");
    cplx v = unit(direction) / conn.density(Chart::Standard, centre);
    TraceOptions o;
    auto fwd = trace(conn, make_state(conn, centre, v), delta, o);
    auto bwd = trace(conn, make_state(conn, centre, -v), delta, o);
    TransversalSection s;
    s.delta = delta;
    for (auto it = bwd.samples.rbegin(); it != bwd.samples.rend(); ++it) {
        s.base.push_back(standard_position(it->state));
        s.base_s.push_back(-it->t);
    }
    for (std::size_t i = 1; i < fwd.samples.size(); ++i) {
        s.base.push_back(standard_position(fwd.samples[i].state));
        s.base_s.push_back(fwd.samples[i].t);
    }
    return s;
}

void collect_crossings(TransversalSection& section, const Trajectory& traj) {
    auto path = standard_polyline(traj);
    auto hits = mutual_intersections(section.base, path, std::numeric_limits<std::size_t>::max());
    for (const auto& h : hits) {
        cplx e1 = section.base[h.seg_i + 1] - section.base[h.seg_i];
        cplx e2 = path[h.seg_j + 1] - path[h.seg_j];
        double sn = std::abs((std::conj(e1) * e2).imag()) / (std::abs(e1) * std::abs(e2));
        if (!(sn >= 1e-3)) continue;
        double a = section.base_s[h.seg_i], b = section.base_s[h.seg_i + 1];
        section.crossings.push_back(a + h.u_i * (b - a));
    }
    std::sort(section.crossings.begin(), section.crossings.end());
}

GapStatistics transversal_analysis(const TransversalSection& section) {
    if (section.crossings.size() < 20) throw Error(Errc::TooFewCrossings, "at least 20 crossings are needed");
    std::vector<double> xs = section.crossings;
    std::sort(xs.begin(), xs.end());
    double span_all = xs.back() - xs.front();
    double res = section.resolution > 0 ? section.resolution
                                        : 1e-7 * (section.delta > 0 ? 2.0 * section.delta : span_all);
    GapStatistics st;
    st.raw_crossings = xs.size();
    // merge clusters below the resolution
    for (std::size_t i = 0; i < xs.size();) {
        std::size_t j = i;
        double sum = 0;
        while (j < xs.size() && xs[j] - xs[i] <= res) sum += xs[j++];
        st.points.push_back(sum / double(j - i));
        i = j;
    }
    const auto& p = st.points;
    const std::size_t n = p.size();
    for (std::size_t i = 0; i + 1 < n; ++i) st.gaps.push_back(p[i + 1] - p[i]);
    st.median_gap = median_of(st.gaps);

    for (std::size_t i = 0; i < n && !st.isolated_point; ++i) {
        double left = i > 0 ? st.gaps[i - 1] : kInf;
        double right = i + 1 < n ? st.gaps[i] : kInf;
        st.isolated_point = left > 10.0 * st.median_gap && right > 10.0 * st.median_gap;
    }

    // a run of consecutive points whose largest gap is close to the mean spacing
    if (n >= 20) {
        const std::size_t k = n >= 128 ? std::max<std::size_t>(128, n / 8) : n;
        const double allow = std::max(4.0, 1.5 * std::log(double(k)));
        for (std::size_t j = 0; j + k <= n && !st.dense_interval; j += std::max<std::size_t>(1, k / 4)) {
            double len = p[j + k - 1] - p[j];
            double widest = *std::max_element(st.gaps.begin() + j, st.gaps.begin() + j + k - 1);
            st.dense_interval = widest <= allow * len / double(k - 1);
        }
    }

    // box counting between a quarter of the span and saturation
    if (n >= 8) {
        const double span = p.back() - p.front();
        std::vector<double> lx, ly;
        for (int i = 8;; ++i) {
            double eps = span * std::pow(2.0, -i / 4.0);
            if (eps <= res) break;
            std::size_t count = 0;
            long long last = std::numeric_limits<long long>::min();
            for (double x : p) {
                long long b = (long long)std::floor((x - p.front()) / eps);
                if (b != last) ++count;
                last = b;
            }
            if (count > n / 4) break;
            lx.push_back(-std::log(eps));
            ly.push_back(std::log(double(count)));
        }
        if (lx.size() >= 3) {
            double mx = 0, my = 0;
            for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
            mx /= double(lx.size());
            my /= double(ly.size());
            double sxy = 0, sxx = 0;
            for (std::size_t i = 0; i < lx.size(); ++i) {
                sxy += (lx[i] - mx) * (ly[i] - my);
                sxx += (lx[i] - mx) * (lx[i] - mx);
            }
            st.box_dimension = sxy / sxx;
        }
    }
    return st;
}

GapStatistics transversal_analysis(const Trajectory& traj, TransversalSection& section) {
    collect_crossings(section, traj);
    return transversal_analysis(section);
}

std::optional<Recurrence> find_period(const Trajectory& traj, double tol) {
    const auto& s = traj.samples;
    if (s.size() < 3) return std::nullopt;
    cplx z0 = standard_position(s.front().state), v0 = standard_velocity(s.front().state);
    if (!finite(z0)) return std::nullopt;
    ReturnWatch w(z0, v0, traj.conn.pole_distance(Chart::Standard, z0));
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (!w(s[i].state)) continue;
        auto r = refine_return(traj, i - 1, z0, unit(v0));
        if (r && r->error <= tol) return r;
    }
    return std::nullopt;
}

Classification classify_full(const FuchsianConnection& conn, const GeodesicState& initial, const ClassifyBudget& budget) {
    const auto clock0 = std::chrono::steady_clock::now();
    TraceOptions base = budget.trace;
    base.stop = nullptr;
    cplx z0 = standard_position(initial), v0 = standard_velocity(initial);
    const bool watch_returns = finite(z0) && finite(v0);
    ReturnWatch watch(watch_returns ? z0 : 0.0, watch_returns ? v0 : 1.0,
                      watch_returns ? conn.pole_distance(Chart::Standard, z0) : 1.0);

    Classification out{{}, Trajectory{conn, base, {}, {}, Termination::TimeLimit, -1, 0, 0}};
    Trajectory& whole = out.trajectory;
    OmegaVerdict& v = out.verdict;
    GeodesicState cur = initial;
    bool periodic = false;
    std::map<int, std::optional<AdaptedChart>> charts;
    std::size_t passages = 0;
    while (true) {
        TraceOptions o = base;
        o.max_steps = budget.max_steps - std::min(budget.max_steps, whole.accepted);
        double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
        o.wall_clock_s = budget.wall_clock_s - el;
        if (watch_returns) o.stop = [&](const TrajectorySample& smp) { return watch(smp.state); };
        double remaining = budget.t_max - (whole.samples.empty() ? 0.0 : whole.t_end());
        if (o.max_steps == 0 || o.wall_clock_s <= 0 || remaining <= 0) break;
        auto part = trace(conn, cur, remaining, o);
        if (whole.samples.empty()) {
            whole.samples = std::move(part.samples);
            whole.events = std::move(part.events);
            whole.reason = part.reason;
            whole.pole_hit = part.pole_hit;
            whole.accepted = part.accepted;
            whole.rejected = part.rejected;
        } else {
            append(whole, part);
        }
        const bool at_pole = whole.reason == Termination::PoleApproach ||
                             (whole.reason == Termination::StepCollapse && whole.pole_hit >= 0);
        if (at_pole) {
            if (!pass_pole(conn, whole, charts)) break;
            ++passages;
            whole.reason = whole.t_end() >= budget.t_max ? Termination::TimeLimit : Termination::Stopped;
            whole.pole_hit = -1;
            cur = whole.samples.back().state;
            continue;
        }
        if (whole.reason != Termination::Stopped) break;
        auto r = refine_return(whole, whole.samples.size() - 2, z0, unit(v0));
        if (r && r->error <= budget.recurrence_tol) {
            periodic = true;
            v.tag = OmegaTag::Periodic;
            v.period = r->period;
            v.recurrence_error = r->error;
            DirectionClass a = direction_class(conn, whole.samples.front().c);
            DirectionClass b = direction_class(conn, first_integral_of(state_at(whole, r->period)));
            std::ostringstream os;
            os << std::setprecision(6) << "recurrence " << r->error << ", direction class "
               << (a.same_as(b, 1e-9) ? "matches" : "differs");
            v.details = os.str();
            break;
        }
        cur = whole.samples.back().state;
    }
    if (passages > 0) v.details = join(std::to_string(passages) + " pole passages", v.details);
    v.reason = whole.reason;
    v.steps = whole.accepted;
    v.t_reached = whole.samples.empty() ? 0.0 : whole.t_end();
    if (periodic) return out;

    if (whole.reason == Termination::PoleApproach ||
        (whole.reason == Termination::StepCollapse && whole.pole_hit >= 0)) {
        v.tag = OmegaTag::ConvergesToPole;
        v.pole = whole.pole_hit;
        std::ostringstream os;
        os << std::setprecision(6) << "critical entry, chart distance "
           << pole_chart_distance(conn, v.pole, whole.samples.back().state);
        v.details = join(v.details, os.str());
        return out;
    }
    if (auto s = sink_check(conn, whole)) {
        s->details = join(v.details, s->details);
        s->reason = v.reason;
        s->steps = v.steps;
        s->t_reached = v.t_reached;
        v = *s;
        return out;
    }
    if (auto a = accumulation_check(conn, whole)) {
        a->details = join(v.details, a->details);
        a->reason = v.reason;
        a->steps = v.steps;
        a->t_reached = v.t_reached;
        v = *a;
        return out;
    }

    // transversal statistics on a section through the middle of the run
    const auto& s = whole.samples;
    std::ostringstream budget_note;
    budget_note << "stopped by " << to_string(whole.reason) << " at t=" << std::setprecision(6) << v.t_reached
                << " after " << v.steps << " steps";
    v.tag = OmegaTag::Undetermined;
    v.details = join(v.details, budget_note.str());
    if (s.size() < 100 || !conn.real_residues()) return out;
    // centre near the middle, away from poles (passage samples hug them)
    std::size_t im = s.size() / 2;
    for (std::size_t k = 0; k < s.size() / 2; ++k) {
        std::size_t a = s.size() / 2 + k, b = s.size() / 2 - k;
        cplx za = standard_position(s[a].state), zb = standard_position(s[b].state);
        if (conn.pole_distance(Chart::Standard, za) > 1e-2 * (1 + std::abs(za))) { im = a; break; }
        if (conn.pole_distance(Chart::Standard, zb) > 1e-2 * (1 + std::abs(zb))) { im = b; break; }
    }
    const auto& mid = s[im].state;
    cplx zc = standard_position(mid);
    if (!finite(zc) || std::abs(zc) > conn.switch_radius()) return out;
    double lo = kInf, hi = -kInf;
    for (std::size_t i = s.size() / 2; i < s.size(); ++i) {
        cplx z = standard_position(s[i].state);
        if (finite(z)) lo = std::min(lo, z.real()), hi = std::max(hi, z.real());
    }
    double delta = 0.05 * std::max(hi - lo, 1e-9) * conn.density(Chart::Standard, zc);
    try {
        auto sec = make_section(conn, zc, cplx(0, 1) * standard_velocity(mid), delta);
        collect_crossings(sec, whole);
        if (sec.crossings.size() < 20) {
            v.details += ", " + std::to_string(sec.crossings.size()) + " section crossings";
            return out;
        }
        v.stats = transversal_analysis(sec);
    } catch (const Error& e) {
        v.details += std::string(", section failed: ") + e.what();
        return out;
    }
    if (v.stats.dense_interval) {
        // every finite-area pole approached within the section scale
        bool all = true;
        for (int j = 0; j < int(conn.poles().size()) && all; ++j) {
            cplx rho = conn.poles()[j].residue;
            if (rho == 0.0) continue;
            if (rho.real() <= -1.0) {
                all = false;
                break;
            }
            double m = kInf;
            for (const auto& smp : s) m = std::min(m, pole_chart_distance(conn, j, smp.state));
            all = m <= 2.0 * delta;
        }
        v.tag = all ? OmegaTag::FillsAllEvidence : OmegaTag::FillsRegionEvidence;
    } else if (!v.stats.isolated_point && v.stats.box_dimension > 0.05 && v.stats.box_dimension < 0.95) {
        // a dimension near 0 is a few clusters, near 1 an unresolved interval
        v.tag = OmegaTag::CantorLikeEvidence;
    }
    std::ostringstream os;
    os << std::setprecision(6) << ", crossings " << v.stats.raw_crossings << ", dimension " << v.stats.box_dimension;
    v.details += os.str();
    return out;
}

OmegaVerdict classify(const FuchsianConnection& conn, const GeodesicState& initial, const ClassifyBudget& budget) {
    return classify_full(conn, initial, budget).verdict;
}

namespace {

struct Entry {
    int target = -1;
    double impact = 0;
};

struct PoleChart {
    int index;
    AdaptedChart chart;
    double m;
};

// The signed offset of the straightened line from the pole, |w|^m sin(arg(-dw/w)),
// is constant along a geodesic inside the chart and vanishes on critical ones.
Entry first_entry(const std::vector<PoleChart>& charts, int source, const Trajectory& tr) {
    bool left_source = false;
    for (const auto& smp : tr.samples) {
        const auto& st = smp.state;
        for (const auto& pc : charts) {
            const auto& ch = pc.chart;
            cplx x;
            if (st.chart == ch.source) x = st.z;
            else if (st.z != 0.0) x = 1.0 / st.z;
            else continue;
            if (std::abs(x - ch.centre) >= ch.zeta_radius) continue;
            auto [w, dw] = ch.pull(st);
            bool inside = std::abs(w) < ch.radius;
            if (pc.index == source && !left_source) continue;
            if (!inside) continue;
            if (w == 0.0) return {pc.index, 0.0};
            return {pc.index, std::pow(std::abs(w), pc.m) * std::sin(std::arg(-dw / w))};
        }
        if (!left_source) {
            for (const auto& pc : charts) {
                if (pc.index != source) continue;
                auto [w, dw] = pc.chart.pull(st);
                left_source = std::abs(w) >= pc.chart.radius;
            }
        }
    }
    return {};
}

// Point at a fraction of the Euclidean length of a polyline.
cplx point_along(const std::vector<cplx>& path, double frac) {
    double total = 0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
        if (finite(path[i]) && finite(path[i + 1])) total += std::abs(path[i + 1] - path[i]);
    double goal = frac * total, acc = 0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (!finite(path[i]) || !finite(path[i + 1])) continue;
        double l = std::abs(path[i + 1] - path[i]);
        if (acc + l >= goal && l > 0) return path[i] + (goal - acc) / l * (path[i + 1] - path[i]);
        acc += l;
    }
    return path.back();
}

// Distance to a polyline and whether the nearest point lies strictly inside it.
std::pair<double, bool> polyline_distance(const std::vector<cplx>& path, cplx p) {
    double best = kInf;
    bool interior = false;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        cplx a = path[i], e = path[i + 1] - a;
        if (!finite(a) || !finite(e)) continue;
        double n = std::norm(e);
        double u = n > 0 ? ((p - a) * std::conj(e)).real() / n : 0.0;
        bool inside = !((i == 0 && u < 0) || (i + 2 == path.size() && u > 1));
        double d = std::abs(a + std::clamp(u, 0.0, 1.0) * e - p);
        if (d < best) {
            best = d;
            interior = inside;
        }
    }
    return {best, interior};
}

}  // namespace

std::vector<SaddleConnection> saddle_connection_search(const FuchsianConnection& conn, const SaddleSearchOptions& opts) {
    std::vector<SaddleConnection> found;
    if (!conn.real_residues()) return found;
    std::vector<PoleChart> charts;
    for (int j = 0; j < int(conn.poles().size()); ++j) {
        cplx rho = conn.poles()[j].residue;
        if (rho == 0.0 || rho.real() <= -1.0) continue;
        try {
            charts.push_back({j, adapted_chart(conn, conn.poles()[j].location), rho.real() + 1.0});
        } catch (const Error&) {
        }
    }
    TraceOptions to = opts.trace;
    to.stop = nullptr;
    const int n = std::max(8, opts.directions);

    for (const auto& src : charts) {
        const auto& ch = src.chart;
        auto shoot = [&](double theta) {
            cplx w = 0.5 * ch.radius * std::polar(1.0, theta);
            auto st = ch.push(conn, w, std::polar(1.0, theta));
            st.v /= conn.density(st.chart, st.z) * std::abs(st.v);
            return trace(conn, st, opts.max_length, to);
        };
        std::vector<Entry> grid(n + 1);
        std::vector<double> th(n + 1);
        for (int k = 0; k < n; ++k) {
            th[k] = kTwoPi * k / n;
            grid[k] = first_entry(charts, src.index, shoot(th[k]));
        }
        grid[n] = grid[0];
        th[n] = kTwoPi;
        for (int k = 0; k < n; ++k) {
            const Entry &a = grid[k], &b = grid[k + 1];
            if (a.target < 0 || a.target != b.target) continue;
            if (a.impact * b.impact > 0) continue;
            double cap = 0;
            for (const auto& pc : charts)
                if (pc.index == a.target) cap = 0.5 * std::pow(pc.chart.radius, pc.m);
            if (std::abs(a.impact) > cap || std::abs(b.impact) > cap) continue;
            double theta;
            if (a.impact == 0) {
                theta = th[k];
            } else if (b.impact == 0) {
                continue;  // picked up as the left end of the next bracket
            } else {
                const int target = a.target;
                auto f = [&](double x) {
                    Entry e = first_entry(charts, src.index, shoot(x));
                    if (e.target != target) return std::numeric_limits<double>::quiet_NaN();
                    return e.impact;
                };
                std::uintmax_t iters = opts.refine_iterations;
                try {
                    auto r = boost::math::tools::toms748_solve(
                        f, th[k], th[k + 1], a.impact, b.impact,
                        [](double lo, double hi) { return std::abs(hi - lo) <= 1e-15; }, iters);
                    double fa = std::abs(f(r.first)), fb = std::abs(f(r.second));
                    theta = fa <= fb ? r.first : r.second;
                } catch (const std::exception&) {
                    continue;
                }
            }
            auto tr = shoot(theta);
            bool arrived = tr.reason == Termination::PoleApproach || tr.reason == Termination::StepCollapse;
            if (!arrived || tr.pole_hit != a.target) continue;
            SaddleConnection sc;
            sc.from = src.index;
            sc.to = a.target;
            sc.launch_angle = wrap_angle(theta);
            // plus the critical stretches between each pole and the traced arc
            // plus the critical stretches between each pole and the traced arc;
            // along them the metric is C |w|^rho |dw|
            auto stretch = [&](const PoleChart& pc, const TrajectorySample& smp) {
                auto [w, dw] = pc.chart.pull(smp.state);
                double r = std::abs(w);
                return std::abs(smp.c) / (std::pow(r, pc.m - 1.0) * std::abs(dw)) * std::pow(r, pc.m) / pc.m;
            };
            sc.g_length = g_length(tr, tr.t_begin(), tr.t_end()) + stretch(src, tr.samples.front());
            for (const auto& pc : charts)
                if (pc.index == a.target) sc.g_length += stretch(pc, tr.samples.back());
            sc.direction = direction_class(conn, tr.samples.front().c);
            sc.path = standard_polyline(tr);
            // the same connection is met again from its other end
            bool dup = false;
            for (const auto& o : found) {
                if (std::abs(o.g_length - sc.g_length) > 1e-6 * (1.0 + sc.g_length)) continue;
                bool same_ends = (o.from == sc.to && o.to == sc.from) || (o.from == sc.from && o.to == sc.to);
                if (!same_ends) continue;
                // launches start inside the source chart, so compare where the paths overlap
                bool close = true;
                int overlap = 0;
                for (int q = 1; q < 16 && close; ++q) {
                    cplx p = point_along(sc.path, q / 16.0);
                    if (!finite(p)) continue;
                    auto [d, interior] = polyline_distance(o.path, p);
                    if (!interior) continue;
                    ++overlap;
                    close = d <= 1e-4 * (1.0 + std::abs(p));
                }
                dup = dup || (close && overlap >= 3);
            }
            if (!dup) found.push_back(std::move(sc));
        }
    }
    return found;
}

RingDomainReport ring_domain_probe(const FuchsianConnection& conn, const Trajectory& periodic, const RingProbeOptions& opts) {
    if (!conn.real_residues()) throw Error(Errc::NonRealResidues, "ring domains need real residues");
    auto seed_rec = find_period(periodic, opts.recurrence_tol);
    if (!seed_rec) throw Error(Errc::SeedNotPeriodic, "seed trajectory does not close up");
    const GeodesicState s0 = periodic.samples.front().state;
    const cplx z0 = standard_position(s0);
    const cplx u0 = unit(standard_velocity(s0));
    const double seed_len = g_length(periodic, periodic.t_begin(), periodic.t_begin() + seed_rec->period);

    RingDomainReport rep;
    rep.direction = direction_class(conn, periodic.samples.front().c);
    TraceOptions to = opts.trace;
    to.stop = nullptr;

    // unit g-speed leaf through a point, parallel to the seed
    auto leaf_at = [&](const GeodesicState& normal, int side) -> std::optional<RingLeaf> {
        cplx n = unit(standard_velocity(normal));
        cplx z = standard_position(normal);
        cplx v = (side > 0 ? cplx(0, -1) : cplx(0, 1)) * n / conn.density(Chart::Standard, z);
        auto tr = trace(conn, make_state(conn, z, v), 1.5 * seed_len, to);
        auto rec = find_period(tr, opts.recurrence_tol);
        if (!rec) return std::nullopt;
        RingLeaf leaf;
        leaf.period = rec->period;
        leaf.g_length = g_length(tr, tr.t_begin(), tr.t_begin() + rec->period);
        for (const auto& smp : tr.samples) {
            if (smp.t > rec->period) break;
            leaf.path.push_back(standard_position(smp.state));
        }
        return leaf;
    };

    RingLeaf seed;
    seed.period = seed_rec->period;
    seed.g_length = seed_len;
    for (const auto& smp : periodic.samples) {
        if (smp.t - periodic.t_begin() > seed_rec->period) break;
        seed.path.push_back(standard_position(smp.state));
    }
    rep.leaves.push_back(seed);

    std::optional<std::vector<SaddleConnection>> saddles;
    for (int side : {+1, -1}) {
        cplx n = (side > 0 ? cplx(0, 1) : cplx(0, -1)) * u0;
        auto normal = trace(conn, make_state(conn, z0, n / conn.density(Chart::Standard, z0)), opts.max_width, to);
        RingBoundary b;
        b.side = side;
        double good = 0, bad = -1;
        for (int k = 1;; ++k) {
            double off = k * opts.step;
            if (off > normal.t_end()) break;
            auto leaf = leaf_at(state_at(normal, off), side);
            if (!leaf) {
                bad = off;
                break;
            }
            leaf->offset = side * off;
            rep.leaves.push_back(std::move(*leaf));
            good = off;
        }
        // leaves that fail only because they start at the pole floor of an
        // infinite-area pole: the ring runs into that pole
        int floor_pole = -1;
        if (bad > 0) {
            auto at = state_at(normal, bad);
            for (int j = 0; j < int(conn.poles().size()); ++j) {
                cplx rho = conn.poles()[j].residue;
                if (rho != 0.0 && rho.real() <= -1.0 && pole_chart_distance(conn, j, at) < 10.0 * to.pole_floor)
                    floor_pole = j;
            }
        }
        if (floor_pole >= 0) {
            b.kind = BoundaryKind::Pole;
            b.pole = floor_pole;
            b.unbounded = true;
            b.offset = bad;
            b.description = "leaves reach the pole floor of " + format_point(conn.poles()[b.pole].location);
        } else if (bad > 0) {
            for (int it = 0; it < opts.bisections; ++it) {
                double mid = 0.5 * (good + bad);
                auto leaf = leaf_at(state_at(normal, mid), side);
                if (leaf) {
                    leaf->offset = side * mid;
                    rep.leaves.push_back(std::move(*leaf));
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            b.kind = BoundaryKind::NotPeriodic;
            b.offset = bad;
            std::ostringstream os;
            os << std::setprecision(8) << "leaves stop closing at g-distance " << bad;
            if (opts.search_saddles) {
                if (!saddles) saddles = saddle_connection_search(conn, opts.saddles);
                for (const auto& sc : *saddles)
                    if (sc.direction.same_as(rep.direction, 1e-6, true)) b.connections.push_back(sc);
                if (!b.connections.empty()) {
                    b.kind = BoundaryKind::SaddleConnection;
                    os << "; " << b.connections.size() << " saddle connection(s) in the seed direction";
                }
            }
            b.description = os.str();
        } else if (normal.reason == Termination::PoleApproach) {
            b.kind = BoundaryKind::Pole;
            b.pole = normal.pole_hit;
            b.offset = normal.t_end();
            b.unbounded = conn.poles()[b.pole].residue.real() <= -1.0;
            b.description = "normal geodesic reaches pole " + format_point(conn.poles()[b.pole].location);
        } else {
            b.kind = BoundaryKind::LimitReached;
            b.offset = normal.t_end();
            // still closing at the limit: is the march running into a residue <= -1 pole?
            for (int j = 0; j < int(conn.poles().size()); ++j) {
                cplx rho = conn.poles()[j].residue;
                if (rho == 0.0 || rho.real() > -1.0) continue;
                const auto& ns = normal.samples;
                double d_end = pole_chart_distance(conn, j, ns.back().state);
                double d_mid = pole_chart_distance(conn, j, ns[ns.size() / 2].state);
                if (d_end < d_mid && d_end < pole_neighborhood(conn, j)) {
                    b.kind = BoundaryKind::Pole;
                    b.pole = j;
                    b.unbounded = true;
                }
            }
            std::ostringstream os;
            os << std::setprecision(8) << "leaves still closing at g-distance " << b.offset;
            if (b.unbounded) os << ", approaching pole " << format_point(conn.poles()[b.pole].location)
                                << " of residue " << conn.poles()[b.pole].residue.real();
            b.description = os.str();
        }
        rep.boundary.push_back(std::move(b));
    }

    std::sort(rep.leaves.begin(), rep.leaves.end(), [](const RingLeaf& a, const RingLeaf& b) { return a.offset < b.offset; });
    rep.width = rep.leaves.back().offset - rep.leaves.front().offset;
    for (const auto& l : rep.leaves) rep.leaf_lengths.push_back(l.g_length);
    for (std::size_t i = 0; i + 1 < rep.leaves.size() && rep.disjoint; ++i)
        rep.disjoint = mutual_intersections(rep.leaves[i].path, rep.leaves[i + 1].path, 1).empty();
    return rep;
}

ConnectionGenerator random_real_generator() {
    return [](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> U(0.0, 1.0);
        std::uniform_int_distribution<int> count(2, 4);
        for (;;) {
            int k = count(rng);
            // half the draws keep every residue, infinity included, above -1
            const bool finite_area = U(rng) < 0.5;
            std::vector<PoleSpec> poles;
            double sum = 0;
            for (int j = 0; j < k; ++j) {
                double rho = finite_area ? -0.9 + 0.6 * U(rng) : -0.9 + 2.4 * U(rng);
                sum += rho;
                poles.push_back(pole(std::polar(std::sqrt(U(rng)), kTwoPi * U(rng)), rho));
            }
            if (finite_area && !(sum < -1.05)) continue;
            bool spread = true;
            for (int a = 0; a < k; ++a)
                for (int b = a + 1; b < k; ++b)
                    spread = spread && std::abs(poles[a].location.z() - poles[b].location.z()) > 0.1;
            cplx z0 = std::polar(0.3 + 1.2 * U(rng), kTwoPi * U(rng));
            for (const auto& p : poles) spread = spread && std::abs(z0 - p.location.z()) > 0.05;
            if (!spread) continue;
            auto conn = build_connection(poles);
            cplx v = std::polar(1.0, kTwoPi * U(rng)) / conn.density(Chart::Standard, z0);
            return AuditSample{conn, make_state(conn, z0, v)};
        }
    };
}

unsigned worker_count(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("CONNEXION_THREADS")) {
        char* end = nullptr;
        long n = std::strtol(env, &end, 10);
        if (end != env && n > 0) return unsigned(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

AuditReport exclusion_audit(const ConnectionGenerator& gen, const AuditOptions& opts) {
    AuditReport rep;
    rep.seed = opts.seed;
    rep.records.resize(opts.samples);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < opts.samples;) {
            AuditRecord& r = rep.records[i];
            r.index = i;
            // one stream per record keeps the report independent of scheduling
            std::seed_seq seq{std::uint64_t(opts.seed), std::uint64_t(i)};
            std::mt19937_64 rng(seq);
            r.seed = rng();
            rng.seed(r.seed);
            auto sample = gen(rng);
            r.poles = sample.conn.poles();
            r.z0 = standard_position(sample.initial);
            r.v0 = standard_velocity(sample.initial);
            r.real_periods = sample.conn.real_residues();
            auto cl = classify_full(sample.conn, sample.initial, opts.budget);
            r.verdict = cl.verdict;
            r.label = describe(cl.verdict, sample.conn);
            r.simple = self_intersections(cl.trajectory, 1).empty();
            bool acc = r.verdict.tag == OmegaTag::AccumulatesOnForeignPeriodic ||
                       r.verdict.tag == OmegaTag::AccumulatesOnSaddleGraph;
            r.anomaly = acc && r.simple && r.real_periods;
        }
    };
    const unsigned nt = std::min<unsigned>(worker_count(opts.threads), std::max<std::size_t>(1, opts.samples));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < nt; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (const auto& r : rep.records) {
        if (r.real_periods && r.simple && r.verdict.tag != OmegaTag::Periodic) ++rep.counted;
        if (r.anomaly) ++rep.anomalies;
    }
    return rep;
}

std::string AuditReport::text() const {
    std::ostringstream os;
    os << std::setprecision(17);
    for (const auto& r : records) {
        os << "index=" << r.index << " seed=" << r.seed << " poles=";
        for (std::size_t j = 0; j < r.poles.size(); ++j) {
            if (j) os << ";";
            os << format_point(r.poles[j].location) << ":" << r.poles[j].residue.real();
            if (r.poles[j].residue.imag() != 0.0) os << (r.poles[j].residue.imag() < 0 ? "" : "+") << r.poles[j].residue.imag() << "i";
        }
        os << " z0=" << r.z0.real() << "," << r.z0.imag() << " v0=" << r.v0.real() << "," << r.v0.imag()
           << " verdict=" << r.label << " reason=" << to_string(r.verdict.reason) << " steps=" << r.verdict.steps
           << " simple=" << r.simple << " real=" << r.real_periods << " anomaly=" << r.anomaly << "\n";
    }
    os << "samples=" << records.size() << " counted=" << counted << " anomalies=" << anomalies << "\n";
    return os.str();
}

}  // namespace connexion
